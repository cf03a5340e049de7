use std::path::PathBuf;

use anyhow::{bail, Context};
use cfcal::calibration::{calibrate, CalibrationData, CalibrationSpecFile};
use cfcal::trajectory::build_platoons;

use crate::config::DataConfig;
use crate::manifest::Run;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Observed trajectory CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Calibration spec TOML.
    #[arg(long)]
    pub spec: PathBuf,
    /// Result file name inside the output directory.
    #[arg(long, default_value = "calibration.toml")]
    pub output: String,
}

pub fn run(args: &Args, data: &DataConfig, run: &mut Run) -> anyhow::Result<()> {
    run.input(&args.data)?;
    run.input(&args.spec)?;
    let mut spec = CalibrationSpecFile::load(&args.spec).with_context(|| format!("loading {}", args.spec.display()))?;
    if let Some(seed) = run.seed() {
        spec.seed = seed;
    }
    run.set_seed(spec.seed);
    if let Some(f) = &spec.fuel_coefficients {
        run.input(f)?;
    }
    run.config("data", data)?;
    run.config("calibration", &spec)?;

    let ds = data.load_dataset(&args.data)?;
    let index = build_platoons(&ds)?;
    for e in &index.excluded {
        log::warn!("excluded pair {e:?}");
    }
    let cal = CalibrationData::from_dataset(&ds, &index, spec.min_platoon_steps)?;
    if cal.is_empty() {
        bail!(
            "no leader-follower platoon with at least {} shared steps in {}",
            spec.min_platoon_steps,
            args.data.display()
        );
    }
    log::info!("{} platoons, {} followers", cal.platoons.len(), cal.follower_count());
    let setup = spec.setup()?;
    let result = calibrate(&cal, &setup, &spec.fuel()?)?;

    let out = run.output(&args.output)?;
    result.save(&out)?;
    let trace = run.output("calibration_trace.csv")?;
    let mut w = csv::Writer::from_path(&trace)?;
    w.write_record(["search", "evaluations", "best"])?;
    for (i, s) in result.searches.iter().enumerate() {
        for (e, b) in s.trace_evaluations.iter().zip(&s.trace_best) {
            w.write_record([i.to_string(), e.to_string(), b.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
