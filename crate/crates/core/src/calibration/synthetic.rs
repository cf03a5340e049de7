//! Synthetic platoons generated by a known model, for recovery and
//! objective-comparison experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::data::{CalibrationData, ObservedPlatoon};
use crate::error::{Error, Result};
use crate::measures::IntervalSpec;
use crate::models::{ModelParams, ModelSpec, VehicleClass};
use crate::simulation::{rollout, CollisionPolicy, FollowerInit, SimConfig, SimResult, VehicleSeries};
use crate::trajectory::Trajectory;

pub const SMALL_LENGTH: f64 = 4.5;
pub const LARGE_LENGTH: f64 = 12.0;

/// Head-vehicle speed pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeadProfile {
    /// Slow oscillation with a faster harmonic, roughly 4..17 m/s.
    StopAndGo,
    /// Mild long-period speed changes, roughly 8..12 m/s; suits weakly
    /// damped laws such as FVD.
    Cruise,
    /// Sustained acceleration around 2 m/s^2; keeps the linear law's
    /// equilibrium gap positive.
    Accelerating,
}

impl LeadProfile {
    fn accel(self, t: f64, phase: f64) -> f64 {
        use std::f64::consts::TAU;
        match self {
            LeadProfile::StopAndGo => 0.9 * (TAU * t / 40.0 + phase).sin() + 0.35 * (TAU * t / 13.0 + 2.0 * phase).sin(),
            LeadProfile::Cruise => 0.2 * (TAU * t / 60.0 + phase).sin(),
            LeadProfile::Accelerating => 2.0 + 0.5 * (TAU * t / 15.0 + phase).sin(),
        }
    }

    fn mean_accel(self) -> f64 {
        match self {
            LeadProfile::StopAndGo | LeadProfile::Cruise => 0.0,
            LeadProfile::Accelerating => 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub model: ModelSpec,
    pub lead: LeadProfile,
    pub dt: f64,
    /// Seconds per platoon.
    pub duration: f64,
    pub followers: usize,
    pub platoons: usize,
    /// Standard deviation of the additive follower acceleration noise.
    pub noise_sigma: f64,
    /// Every `k`-th follower (1-based) is large; `None` makes all small.
    pub large_every: Option<usize>,
    /// Relative spread of initial gaps around equilibrium.
    pub gap_jitter: f64,
    pub initial_speed: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(model: ModelSpec, lead: LeadProfile) -> Self {
        SyntheticConfig {
            model,
            lead,
            dt: 0.1,
            duration: 100.0,
            followers: 5,
            platoons: 1,
            noise_sigma: 0.0,
            large_every: None,
            gap_jitter: 0.2,
            initial_speed: if lead == LeadProfile::Accelerating { 5.0 } else { 10.0 },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSet {
    pub data: CalibrationData,
    pub trajectories: Vec<Trajectory>,
    /// One interval per platoon; segment chosen so every vehicle crosses it.
    pub intervals: IntervalSpec,
}

impl SyntheticSet {
    /// Platoons at the given indices.
    pub fn select(&self, idx: &[usize]) -> CalibrationData {
        CalibrationData {
            platoons: idx.iter().map(|&i| self.data.platoons[i].clone()).collect(),
        }
    }
}

/// Bumper gap at which a follower driving at `v` behind a leader with
/// constant acceleration `a_lead` is in equilibrium.
pub fn equilibrium_gap(p: &ModelParams, v: f64, a_lead: f64) -> Result<f64> {
    let g = match p {
        ModelParams::Linear(k) => {
            if k.k1 == 0.0 {
                f64::NAN
            } else {
                (k.k3 - a_lead) / k.k1
            }
        }
        ModelParams::Fvd(f) => {
            let arg = 2.0 * v / f.v0 - f.beta.tanh();
            if arg.abs() >= 1.0 {
                f64::NAN
            } else {
                f.b * (f.beta + arg.atanh())
            }
        }
        ModelParams::Idm(i) => {
            let r = 1.0 - (v / i.v_f).powi(4);
            if r <= 0.0 {
                f64::NAN
            } else {
                (i.s0 + i.t0 * v) / r.sqrt()
            }
        }
    };
    if g.is_finite() && g > 0.5 {
        Ok(g)
    } else {
        Err(Error::Invalid(format!(
            "{} parameters have no positive equilibrium gap at v = {v}, lead acceleration {a_lead}",
            p.kind()
        )))
    }
}

fn lead_series(cfg: &SyntheticConfig, id: String, x0: f64, phase: f64, steps: usize) -> VehicleSeries {
    let mut s = VehicleSeries {
        id,
        class: VehicleClass::Small,
        length: SMALL_LENGTH,
        x: Vec::with_capacity(steps + 1),
        v: Vec::with_capacity(steps + 1),
        a: Vec::with_capacity(steps + 1),
    };
    s.x.push(x0);
    s.v.push(cfg.initial_speed);
    s.a.push(cfg.lead.accel(0.0, phase));
    for k in 1..=steps {
        let a = cfg.lead.accel(k as f64 * cfg.dt, phase);
        let vp = s.v[k - 1];
        let v = (vp + a * cfg.dt).max(0.0);
        s.a.push((v - vp) / cfg.dt);
        s.v.push(v);
        s.x.push(s.x[k - 1] + v * cfg.dt);
    }
    s
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticSet> {
    if cfg.followers == 0 || cfg.platoons == 0 {
        return Err(Error::Config("need at least one platoon with one follower".into()));
    }
    if !(cfg.dt > 0.0 && cfg.duration > cfg.dt) {
        return Err(Error::Config("duration must exceed one time step".into()));
    }
    let steps = (cfg.duration / cfg.dt).round() as usize;
    let gap_steps = ((cfg.duration + 10.0) / cfg.dt).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_sigma.max(0.0))
        .map_err(|e| Error::Config(format!("noise sigma: {e}")))?;

    let mut results: Vec<SimResult> = Vec::with_capacity(cfg.platoons);
    for p in 0..cfg.platoons {
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let mut inits = Vec::with_capacity(cfg.followers);
        let mut offsets = Vec::with_capacity(cfg.followers);
        let mut ahead_len = SMALL_LENGTH;
        let mut back = 0.0;
        for n in 1..=cfg.followers {
            let class = match cfg.large_every {
                Some(k) if k > 0 && n % k == 0 => VehicleClass::Large,
                _ => VehicleClass::Small,
            };
            let gap = equilibrium_gap(cfg.model.for_class(class), cfg.initial_speed, cfg.lead.mean_accel())?;
            let jitter = 1.0 + cfg.gap_jitter * rng.gen_range(-1.0..1.0);
            back += gap * jitter + ahead_len;
            offsets.push(back);
            let length = if class == VehicleClass::Large { LARGE_LENGTH } else { SMALL_LENGTH };
            inits.push((class, length));
            ahead_len = length;
        }
        let x_lead = back;
        let id = |n: usize| (p * 100 + n).to_string();
        let lead = lead_series(cfg, id(0), x_lead, phase, steps);
        let followers: Vec<FollowerInit> = inits
            .iter()
            .zip(&offsets)
            .enumerate()
            .map(|(i, (&(class, length), off))| FollowerInit {
                id: id(i + 1),
                class,
                length,
                x0: x_lead - off,
                v0: cfg.initial_speed,
            })
            .collect();
        let perturbation: Vec<Vec<f64>> = (0..cfg.followers)
            .map(|_| {
                (0..=steps)
                    .map(|t| if t == 0 || cfg.noise_sigma <= 0.0 { 0.0 } else { noise.sample(&mut rng) })
                    .collect()
            })
            .collect();
        let sim_cfg = SimConfig {
            dt: cfg.dt,
            horizon: steps,
            collision_policy: CollisionPolicy::Error,
            ..SimConfig::default()
        };
        let order: Vec<usize> = (0..cfg.followers).collect();
        let t0 = (p * gap_steps) as f64 * cfg.dt;
        let pert = (cfg.noise_sigma > 0.0).then_some(perturbation.as_slice());
        results.push(rollout(t0, lead, &followers, &cfg.model, &sim_cfg, pert, &order)?);
    }

    let entry_x = results.iter().map(|r| r.lead.x[0]).fold(f64::NEG_INFINITY, f64::max) + 5.0;
    let exit_x = results
        .iter()
        .flat_map(|r| r.followers.iter().map(|f| f.x[f.x.len() - 1]))
        .fold(f64::INFINITY, f64::min)
        - 5.0;
    if !(exit_x > entry_x + 10.0) {
        return Err(Error::Config(format!(
            "platoons do not travel far enough for a segment (entry {entry_x:.1}, exit {exit_x:.1})"
        )));
    }
    let mut boundaries: Vec<f64> = results.iter().map(|r| r.t0).collect();
    boundaries.push(results[results.len() - 1].t0 + gap_steps as f64 * cfg.dt);
    let intervals = IntervalSpec {
        boundaries,
        entry_x,
        exit_x,
        edge: None,
    };

    let mut platoons = Vec::with_capacity(results.len());
    let mut trajectories = Vec::new();
    for r in results {
        trajectories.extend(r.to_trajectories()?);
        platoons.push(ObservedPlatoon::from_series(r.t0, r.dt, r.lead, r.followers)?);
    }
    Ok(SyntheticSet {
        data: CalibrationData::new(platoons)?,
        trajectories,
        intervals,
    })
}
