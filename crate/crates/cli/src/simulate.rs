use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use cfcal::calibration::CalibrationResult;
use cfcal::models::{reference, GapSemantics, ModelKind, ModelSpec, ParamFile, VehicleClass};
use cfcal::simulation::{
    simulate_platoon, simulate_platoon_perturbed, CollisionPolicy, FollowerInit, PlatoonScenario, SimConfig,
};
use cfcal::trajectory::{write_trajectories, Trajectory};
use serde::{Deserialize, Serialize};

use crate::config::{read_toml, DataConfig};
use crate::manifest::Run;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Scenario TOML.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output file name inside the output directory.
    #[arg(long, default_value = "simulated.csv")]
    pub output: String,
}

/// Platoon scenario.
///
/// ```toml
/// model = "idm"
/// params = "bic"          # mic, mac, bic, or a parameter / calibration result file
/// dt = 0.1
/// horizon = 300
/// collision_policy = "error"
///
/// [lead]
/// id = "0"
/// x0 = 200.0
/// v0 = 10.0
/// accel = [[0.0, 0.0], [10.0, -1.5], [14.0, 0.0]]   # piecewise constant from each time
/// # file = "observed.csv"   # or replay a recorded vehicle (read with --config)
///
/// [[followers]]
/// id = "1"
/// class = "small"
/// x0 = 170.0
/// v0 = 10.0
///
/// [[perturbations]]
/// follower = 1            # position behind the lead, from 1
/// step = 1
/// accel = 5.0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub model: ModelKind,
    pub params: String,
    pub dt: f64,
    pub horizon: usize,
    #[serde(default)]
    pub min_speed: f64,
    #[serde(default = "default_min_gap_stop")]
    pub min_gap_stop: f64,
    #[serde(default)]
    pub collision_policy: CollisionPolicy,
    #[serde(default)]
    pub gap_semantics: GapSemantics,
    pub lead: LeadSpec,
    pub followers: Vec<FollowerSpec>,
    #[serde(default)]
    pub perturbations: Vec<Perturbation>,
}

fn default_min_gap_stop() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeadSpec {
    pub id: String,
    #[serde(default)]
    pub class: VehicleClass,
    pub length: Option<f64>,
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub v0: f64,
    #[serde(default)]
    pub accel: Vec<(f64, f64)>,
    pub file: Option<PathBuf>,
    pub start_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FollowerSpec {
    pub id: String,
    #[serde(default)]
    pub class: VehicleClass,
    pub length: Option<f64>,
    pub x0: f64,
    pub v0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub follower: usize,
    pub step: usize,
    pub accel: f64,
}

fn default_length(data: &DataConfig, class: VehicleClass) -> f64 {
    match class {
        VehicleClass::Small => data.schema.default_length_small,
        VehicleClass::Large => data.schema.default_length_large,
    }
}

/// `mic`, `mac`, `bic`, or a parameter file / calibration result relative to
/// `base`.
pub fn resolve_params(name: &str, kind: ModelKind, base: &Path, run: &mut Run) -> anyhow::Result<ModelSpec> {
    let pf = match name.to_ascii_lowercase().as_str() {
        "mic" => reference::mic(),
        "mac" => reference::mac(),
        "bic" => reference::bic(),
        _ => {
            let path = base.join(name);
            run.input(&path)?;
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            match ParamFile::parse(&text) {
                Ok(pf) if pf.spec(kind).is_ok() => pf,
                _ => CalibrationResult::from_toml(&text)
                    .and_then(|r| r.param_file())
                    .with_context(|| format!("{} is neither a parameter file nor a calibration result", path.display()))?,
            }
        }
    };
    Ok(pf.spec(kind)?)
}

fn lead_trajectory(sc: &Scenario, base: &Path, data: &DataConfig, run: &mut Run) -> anyhow::Result<Trajectory> {
    let l = &sc.lead;
    let length = l.length.unwrap_or_else(|| default_length(data, l.class));
    if let Some(file) = &l.file {
        let path = base.join(file);
        run.input(&path)?;
        let ds = data.load_dataset(&path)?;
        return ds
            .get(&l.id)
            .cloned()
            .ok_or_else(|| anyhow!("vehicle {} not found in {}", l.id, path.display()));
    }
    let t0 = l.start_time.unwrap_or(0.0);
    let accel_at = |t: f64| {
        l.accel
            .iter()
            .take_while(|(s, _)| *s <= t + 1e-9)
            .last()
            .map_or(0.0, |&(_, a)| a)
    };
    let n = sc.horizon + 1;
    let (mut x, mut v, mut a) = (vec![l.x0; n], vec![l.v0; n], vec![0.0; n]);
    for k in 1..n {
        let vn = (v[k - 1] + accel_at(t0 + k as f64 * sc.dt) * sc.dt).max(0.0);
        a[k] = (vn - v[k - 1]) / sc.dt;
        v[k] = vn;
        x[k] = x[k - 1] + vn * sc.dt;
    }
    Ok(Trajectory::from_arrays(&l.id, l.class, length, t0, sc.dt, &x, &v, &a)?)
}

pub fn run(args: &Args, data: &DataConfig, run: &mut Run) -> anyhow::Result<()> {
    run.input(&args.scenario)?;
    let sc: Scenario = read_toml(&args.scenario)?;
    run.config("scenario", &sc)?;
    let base = args.scenario.parent().unwrap_or(Path::new("."));
    let model = resolve_params(&sc.params, sc.model, base, run)?;
    let lead = lead_trajectory(&sc, base, data, run)?;
    let followers: Vec<FollowerInit> = sc
        .followers
        .iter()
        .map(|f| FollowerInit {
            id: f.id.clone(),
            class: f.class,
            length: f.length.unwrap_or_else(|| default_length(data, f.class)),
            x0: f.x0,
            v0: f.v0,
        })
        .collect();
    let cfg = SimConfig {
        dt: sc.dt,
        horizon: sc.horizon,
        min_speed: sc.min_speed,
        min_gap_stop: sc.min_gap_stop,
        collision_policy: sc.collision_policy,
        gap_semantics: sc.gap_semantics,
    };
    let scenario = PlatoonScenario {
        lead,
        start_time: sc.lead.start_time.filter(|_| sc.lead.file.is_some()),
        followers,
        model,
    };
    let result = if sc.perturbations.is_empty() {
        simulate_platoon(&scenario, &cfg)?
    } else {
        let mut p = vec![vec![0.0; sc.horizon + 1]; sc.followers.len()];
        for q in &sc.perturbations {
            if q.follower == 0 || q.follower > sc.followers.len() || q.step == 0 || q.step > sc.horizon {
                bail!("perturbation at follower {} step {} is outside the scenario", q.follower, q.step);
            }
            p[q.follower - 1][q.step] += q.accel;
        }
        simulate_platoon_perturbed(&scenario, &cfg, &p)?
    };
    for e in &result.clamp_events {
        log::warn!("clamped {e:?}");
    }
    let out = run.output(&args.output)?;
    write_trajectories(&out, &result.to_trajectories()?)?;
    Ok(())
}
