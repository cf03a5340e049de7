use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use cfcal::error_propagation::{
    single_injection_series, platoon_params, platoon_series, propagate, save_error_csv, zero_residuals, ErrorSeries, SINGLE_HORIZON,
    PLATOON_HORIZON,
};
use cfcal::models::{LinearParams, ModelKind, ModelParams, VehicleClass};
use serde::Serialize;

use crate::manifest::Run;
use crate::simulate::resolve_params;
use crate::svg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    /// Single vehicle, acceleration error 0.2 at t = 5.
    Single,
    /// Residual 5 on the first follower at t = 1.
    Platoon,
    /// No residuals at all.
    Zero,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Built-in residual pattern.
    #[arg(long, conflicts_with = "residuals")]
    pub case: Option<Case>,
    /// Residual CSV with columns `n,t,r`; vehicle 0 is the head.
    #[arg(long)]
    pub residuals: Option<PathBuf>,
    /// Steps to propagate (built-in cases).
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Followers behind the head (platoon and zero cases).
    #[arg(long, default_value_t = 3)]
    pub followers: usize,
    /// Linear-law parameters: mic, mac, bic or a file; small-vehicle set is used.
    #[arg(long)]
    pub params: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub k1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub k2: Option<f64>,
    /// Also write an SVG plot of position errors.
    #[arg(long)]
    pub svg: bool,
    #[arg(long, default_value = "propagation.csv")]
    pub output: String,
}

#[derive(Debug, Serialize)]
struct Effective {
    case: Option<Case>,
    residuals: Option<String>,
    horizon: Option<usize>,
    followers: usize,
    k1: f64,
    k2: f64,
}

fn read_residuals(path: &Path) -> anyhow::Result<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cells = Vec::new();
    for rec in rdr.deserialize() {
        let (n, t, r): (usize, usize, f64) = rec.with_context(|| format!("parsing {}", path.display()))?;
        cells.push((n, t, r));
    }
    if cells.is_empty() {
        bail!("{} has no residuals", path.display());
    }
    let vehicles = cells.iter().map(|c| c.0).max().unwrap_or(0) + 1;
    let steps = cells.iter().map(|c| c.1).max().unwrap_or(0) + 1;
    let mut r = vec![vec![0.0; steps]; vehicles];
    for (n, t, v) in cells {
        r[n][t] += v;
    }
    Ok(r)
}

pub fn run(args: &Args, run: &mut Run) -> anyhow::Result<()> {
    let mut k: LinearParams = match &args.params {
        None => platoon_params(),
        Some(name) => match resolve_params(name, ModelKind::Linear, Path::new("."), run)?.for_class(VehicleClass::Small) {
            ModelParams::Linear(p) => *p,
            _ => unreachable!("resolved for the linear model"),
        },
    };
    k.k1 = args.k1.unwrap_or(k.k1);
    k.k2 = args.k2.unwrap_or(k.k2);

    let series: Vec<ErrorSeries> = match (&args.residuals, args.case) {
        (Some(path), _) => {
            run.input(path)?;
            propagate(&read_residuals(path)?, &k)?
        }
        (None, Some(Case::Single)) => vec![single_injection_series(args.horizon.unwrap_or(SINGLE_HORIZON))?],
        (None, Some(Case::Platoon)) => platoon_series(&k, args.followers, args.horizon.unwrap_or(PLATOON_HORIZON))?,
        (None, Some(Case::Zero)) => {
            propagate(&zero_residuals(args.followers, args.horizon.unwrap_or(PLATOON_HORIZON)), &k)?
        }
        (None, None) => bail!("give --case or --residuals"),
    };
    run.config(
        "propagate",
        &Effective {
            case: args.case,
            residuals: args.residuals.as_ref().map(|p| p.display().to_string()),
            horizon: args.horizon,
            followers: args.followers,
            k1: k.k1,
            k2: k.k2,
        },
    )?;
    let out = run.output(&args.output)?;
    save_error_csv(&out, &series)?;
    if args.svg {
        let lines: Vec<(String, Vec<(f64, f64)>)> = series
            .iter()
            .map(|s| {
                let pts = s.eps_x.iter().enumerate().map(|(t, &e)| (t as f64, e)).collect();
                (format!("vehicle {}", s.n), pts)
            })
            .collect();
        let path = run.output("propagation.svg")?;
        std::fs::write(&path, svg::line_chart("Position error", "t (steps)", "position error (m)", &lines))?;
    }
    Ok(())
}
