//! MiC / MaC / BiC objective evaluation against observed platoons.

use serde::{Deserialize, Serialize};

use super::data::{CalibrationData, ObservedPlatoon};
use super::{Normalization, ObjectiveKind, ObjectiveSpec, RolloutMode};
use crate::error::{Error, Result};
use crate::measures::{
    aggregate_with_membership, assign_intervals, traversal_time_extrapolated, vehicle_fuel, FuelCoefficients,
    IntervalSpec, MacroOptions, SeriesView,
};
use crate::models::ModelSpec;
use crate::simulation::{rollout, CollisionPolicy, SimConfig, VehicleSeries};

/// Base of the collision penalty. A rollout colliding at step `t` of `T`
/// scores `PENALTY_BASE * (1 + (T - t + 1) / T)`.
pub const PENALTY_BASE: f64 = 1e6;

/// Feasible per-term values are capped just below the penalty so any
/// collision-free vector beats any colliding one.
const FEASIBLE_CAP: f64 = PENALTY_BASE * (1.0 - 1e-9);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    pub accel: f64,
    pub travel_time: f64,
    pub fuel: f64,
}

impl Default for Scales {
    fn default() -> Self {
        Scales {
            accel: 1.0,
            travel_time: 1.0,
            fuel: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    /// Normalised mean squared acceleration error.
    pub micro: f64,
    /// Mean over intervals of normalised squared travel-time error.
    pub travel_time: f64,
    /// Mean over intervals of normalised squared fuel error.
    pub fuel: f64,
    /// Mean over intervals of `w1 * travel_time + w2 * fuel` terms.
    pub macro_term: f64,
    pub collided: bool,
}

impl Breakdown {
    fn penalty(p: f64, w1: f64, w2: f64) -> Self {
        Breakdown {
            micro: p,
            travel_time: p,
            fuel: p,
            macro_term: (w1 + w2) * p,
            collided: true,
        }
    }

    pub fn value(&self, kind: ObjectiveKind, w0: f64) -> f64 {
        match kind {
            ObjectiveKind::Mic => self.micro,
            ObjectiveKind::Mac => self.macro_term,
            ObjectiveKind::Bic => w0 * self.micro + self.macro_term,
        }
    }
}

struct MacroRef {
    spec: IntervalSpec,
    /// Interval of each follower, per platoon, from observed entry times.
    membership: Vec<Option<usize>>,
    /// Observed (travel time, fuel) per interval; `None` for empty ones.
    observed: Vec<Option<(f64, f64)>>,
}

/// Observed data prepared for repeated evaluation.
pub struct Objective<'a> {
    data: &'a CalibrationData,
    spec: ObjectiveSpec,
    fuel: &'a FuelCoefficients,
    scales: Scales,
    macro_ref: Option<MacroRef>,
}

fn variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

fn usable_scale(name: &str, v: f64) -> f64 {
    if v.is_finite() && v > 1e-12 {
        v
    } else {
        log::warn!("observed {name} variance is {v}; using scale 1");
        1.0
    }
}

fn views<'s>(platoons: &'s [ObservedPlatoon], series: &'s [Vec<VehicleSeries>]) -> Vec<SeriesView<'s>> {
    platoons
        .iter()
        .zip(series)
        .flat_map(|(p, ss)| {
            ss.iter().map(move |s| SeriesView {
                id: &s.id,
                t0: p.t0,
                dt: p.dt,
                x: &s.x,
                v: &s.v,
                a: &s.a,
            })
        })
        .collect()
}

fn extrapolate() -> MacroOptions {
    MacroOptions { extrapolate: true }
}

impl<'a> Objective<'a> {
    pub fn new(data: &'a CalibrationData, spec: &ObjectiveSpec, fuel: &'a FuelCoefficients) -> Result<Self> {
        spec.validate()?;
        if data.is_empty() {
            return Err(Error::Invalid("no platoons to calibrate against".into()));
        }
        let observed: Vec<Vec<VehicleSeries>> = data.platoons.iter().map(|p| p.observed.clone()).collect();
        let obs_views = views(&data.platoons, &observed);

        let macro_ref = match &spec.intervals {
            None => None,
            Some(iv) => {
                iv.validate()?;
                let membership = assign_intervals(&obs_views, iv);
                let m = aggregate_with_membership(&obs_views, &membership, iv, fuel, extrapolate())?;
                let observed_means: Vec<Option<(f64, f64)>> = m
                    .intervals
                    .iter()
                    .enumerate()
                    .map(|(w, im)| match (im.travel_time, im.fuel) {
                        (Some(t), Some(e)) => Some((t, e)),
                        _ => {
                            log::warn!("interval {w} [{}, {}] has no observed vehicles; skipped", im.start, im.end);
                            None
                        }
                    })
                    .collect();
                Some(MacroRef {
                    spec: iv.clone(),
                    membership,
                    observed: observed_means,
                })
            }
        };
        if spec.kind != ObjectiveKind::Mic {
            match &macro_ref {
                None => return Err(Error::Config(format!("{} objective needs an interval spec", spec.kind))),
                Some(m) if m.observed.iter().all(Option::is_none) => {
                    return Err(Error::Config("no interval contains an observed vehicle".into()))
                }
                _ => {}
            }
        }

        let scales = match spec.normalization {
            Normalization::None => Scales::default(),
            Normalization::Variance => {
                let accel: Vec<f64> = observed.iter().flatten().flat_map(|s| s.a[1..].iter().copied()).collect();
                let mut tt = Vec::new();
                let mut fe = Vec::new();
                if let Some(m) = &macro_ref {
                    for (v, w) in obs_views.iter().zip(&m.membership) {
                        if w.is_none() {
                            continue;
                        }
                        if let Ok(t) =
                            traversal_time_extrapolated(v.t0, v.dt, v.x, v.v, m.spec.entry_x, m.spec.exit_x)
                        {
                            tt.push(t);
                        }
                        if let Some(f) = vehicle_fuel(v.x, v.v, v.a, fuel, v.dt).per_100km {
                            fe.push(f);
                        }
                    }
                }
                Scales {
                    accel: usable_scale("acceleration", variance(&accel)),
                    travel_time: if macro_ref.is_some() { usable_scale("travel time", variance(&tt)) } else { 1.0 },
                    fuel: if macro_ref.is_some() { usable_scale("fuel", variance(&fe)) } else { 1.0 },
                }
            }
        };
        Ok(Objective {
            data,
            spec: spec.clone(),
            fuel,
            scales,
            macro_ref,
        })
    }

    pub fn scales(&self) -> Scales {
        self.scales
    }

    pub fn spec(&self) -> &ObjectiveSpec {
        &self.spec
    }

    fn sim_config(&self, p: &ObservedPlatoon) -> SimConfig {
        SimConfig {
            dt: p.dt,
            horizon: p.horizon(),
            min_speed: 0.0,
            min_gap_stop: self.spec.min_gap_stop,
            collision_policy: CollisionPolicy::Error,
            gap_semantics: self.spec.gap_semantics,
        }
    }

    fn simulate(&self, p: &ObservedPlatoon, model: &ModelSpec) -> Result<Vec<VehicleSeries>> {
        let cfg = self.sim_config(p);
        match self.spec.rollout {
            RolloutMode::Cascade => {
                let order: Vec<usize> = (0..p.followers.len()).collect();
                Ok(rollout(p.t0, p.head.clone(), &p.followers, model, &cfg, None, &order)?.followers)
            }
            RolloutMode::TeacherForced => teacher_forced(p, model, &cfg),
        }
    }

    /// Full per-term evaluation. Collisions and other numerical failures are
    /// folded into the penalty rather than returned as errors.
    pub fn evaluate(&self, model: &ModelSpec) -> Breakdown {
        let w = self.spec.weights;
        let mut sims = Vec::with_capacity(self.data.platoons.len());
        for p in &self.data.platoons {
            match self.simulate(p, model) {
                Ok(s) => sims.push(s),
                Err(Error::Collision { step, .. }) => {
                    let t = p.horizon() as f64;
                    let frac = (t - step as f64 + 1.0) / t;
                    return Breakdown::penalty(PENALTY_BASE * (1.0 + frac), w.w1_mac, w.w2_mac);
                }
                Err(_) => return Breakdown::penalty(2.0 * PENALTY_BASE, w.w1_mac, w.w2_mac),
            }
        }
        if sims.iter().flatten().any(|s| s.x.iter().chain(&s.v).chain(&s.a).any(|v| !v.is_finite())) {
            return Breakdown::penalty(2.0 * PENALTY_BASE, w.w1_mac, w.w2_mac);
        }

        let mut sq = 0.0;
        let mut count = 0usize;
        for (p, ss) in self.data.platoons.iter().zip(&sims) {
            for (o, s) in p.observed.iter().zip(ss) {
                for t in 1..o.a.len() {
                    let d = o.a[t] - s.a[t];
                    sq += d * d;
                }
                count += o.a.len() - 1;
            }
        }
        let micro = (sq / count as f64 / self.scales.accel).min(FEASIBLE_CAP);

        let (travel_time, fuel, macro_term) = match &self.macro_ref {
            None => (0.0, 0.0, 0.0),
            Some(m) => {
                let sim_views = views(&self.data.platoons, &sims);
                let agg = match aggregate_with_membership(&sim_views, &m.membership, &m.spec, self.fuel, extrapolate()) {
                    Ok(a) => a,
                    Err(_) => return Breakdown::penalty(2.0 * PENALTY_BASE, w.w1_mac, w.w2_mac),
                };
                let mut n = 0usize;
                let (mut tt_sum, mut fe_sum, mut mac_sum) = (0.0, 0.0, 0.0);
                for (obs, sim) in m.observed.iter().zip(&agg.intervals) {
                    let Some((t_obs, e_obs)) = *obs else { continue };
                    let tt = sim
                        .travel_time
                        .map_or(FEASIBLE_CAP, |t| ((t_obs - t).powi(2) / self.scales.travel_time).min(FEASIBLE_CAP));
                    let fe = sim
                        .fuel
                        .map_or(FEASIBLE_CAP, |e| ((e_obs - e).powi(2) / self.scales.fuel).min(FEASIBLE_CAP));
                    tt_sum += tt;
                    fe_sum += fe;
                    mac_sum += w.w1_mac * tt + w.w2_mac * fe;
                    n += 1;
                }
                let n = n as f64;
                (tt_sum / n, fe_sum / n, mac_sum / n)
            }
        };
        Breakdown {
            micro,
            travel_time,
            fuel,
            macro_term,
            collided: false,
        }
    }

    pub fn value(&self, model: &ModelSpec) -> f64 {
        self.evaluate(model).value(self.spec.kind, self.spec.weights.w0_sys)
    }
}

/// One-step predictions from observed states: each follower's law reads the
/// observed ego and leader states at `t - 1`.
fn teacher_forced(p: &ObservedPlatoon, model: &ModelSpec, cfg: &SimConfig) -> Result<Vec<VehicleSeries>> {
    let dt = cfg.dt;
    let mut out = Vec::with_capacity(p.observed.len());
    for (n, me) in p.observed.iter().enumerate() {
        let leader = if n == 0 { &p.head } else { &p.observed[n - 1] };
        let law = model.for_class(me.class);
        let mut s = VehicleSeries {
            id: me.id.clone(),
            class: me.class,
            length: me.length,
            x: vec![me.x[0]; me.x.len()],
            v: vec![me.v[0]; me.x.len()],
            a: vec![0.0; me.x.len()],
        };
        for t in 1..me.x.len() {
            let st = cfg
                .gap_semantics
                .state(me.x[t - 1], me.v[t - 1], leader.x[t - 1], leader.v[t - 1], leader.length);
            let mut a = law.accel(&st)?;
            let mut v = me.v[t - 1] + a * dt;
            if v < cfg.min_speed {
                v = cfg.min_speed;
                a = (v - me.v[t - 1]) / dt;
            }
            s.a[t] = a;
            s.v[t] = v;
            s.x[t] = me.x[t - 1] + v * dt;
        }
        out.push(s);
    }
    Ok(out)
}

pub fn objective_mic(model: &ModelSpec, data: &CalibrationData, spec: &ObjectiveSpec, fuel: &FuelCoefficients) -> Result<f64> {
    Ok(Objective::new(data, spec, fuel)?.evaluate(model).micro)
}

pub fn objective_mac(model: &ModelSpec, data: &CalibrationData, spec: &ObjectiveSpec, fuel: &FuelCoefficients) -> Result<f64> {
    if spec.intervals.is_none() {
        return Err(Error::Config("macroscopic objective needs an interval spec".into()));
    }
    Ok(Objective::new(data, spec, fuel)?.evaluate(model).macro_term)
}

pub fn objective_bic(model: &ModelSpec, data: &CalibrationData, spec: &ObjectiveSpec, fuel: &FuelCoefficients) -> Result<f64> {
    let b = Objective::new(data, spec, fuel)?.evaluate(model);
    Ok(b.value(ObjectiveKind::Bic, spec.weights.w0_sys))
}
