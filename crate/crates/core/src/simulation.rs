//! Discrete-time platoon rollout. The head replays its observed trajectory;
//! every follower integrates its car-following law with the semi-implicit
//! update `v_t = v_{t-1} + a_t dt`, `x_t = x_{t-1} + v_t dt`, where `a_t`
//! depends only on states at `t - 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{GapSemantics, ModelSpec, VehicleClass};
use crate::trajectory::{Trajectory, TIME_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CollisionPolicy {
    /// Abort the rollout.
    #[default]
    Error,
    /// Stop the follower `min_gap_stop` behind its leader and log the event.
    Clamp,
    /// No gap checks at all; for analytical comparisons.
    Ignore,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: usize,
    /// Speed floor; `f64::NEG_INFINITY` disables the clamp.
    pub min_speed: f64,
    pub min_gap_stop: f64,
    pub collision_policy: CollisionPolicy,
    pub gap_semantics: GapSemantics,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1.0,
            horizon: 1,
            min_speed: 0.0,
            min_gap_stop: 0.1,
            collision_policy: CollisionPolicy::Error,
            gap_semantics: GapSemantics::Bumper,
        }
    }
}

impl SimConfig {
    /// Unit step, no speed floor, no gap checks: the setting in which the
    /// linear model's closed-form error expressions hold exactly.
    pub fn analytical(horizon: usize) -> Self {
        SimConfig {
            dt: 1.0,
            horizon,
            min_speed: f64::NEG_INFINITY,
            min_gap_stop: 0.0,
            collision_policy: CollisionPolicy::Ignore,
            gap_semantics: GapSemantics::Bumper,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.horizon < 1 {
            return Err(Error::Config("horizon must be at least 1 step".into()));
        }
        if self.min_speed.is_nan() {
            return Err(Error::Config("min_speed is NaN".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowerInit {
    pub id: String,
    pub class: VehicleClass,
    pub length: f64,
    pub x0: f64,
    pub v0: f64,
}

#[derive(Debug, Clone)]
pub struct PlatoonScenario {
    pub lead: Trajectory,
    /// Time of the initial follower states; defaults to the lead's first
    /// sample.
    pub start_time: Option<f64>,
    /// Ordered front to back.
    pub followers: Vec<FollowerInit>,
    pub model: ModelSpec,
}

/// One vehicle's arrays on the simulation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleSeries {
    pub id: String,
    pub class: VehicleClass,
    pub length: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClampEvent {
    pub vehicle: String,
    pub step: usize,
    pub raw_speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionEvent {
    pub leader: String,
    pub follower: String,
    pub step: usize,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub t0: f64,
    pub dt: f64,
    pub lead: VehicleSeries,
    pub followers: Vec<VehicleSeries>,
    pub clamp_events: Vec<ClampEvent>,
    pub collision_events: Vec<CollisionEvent>,
}

impl SimResult {
    pub fn steps(&self) -> usize {
        self.lead.x.len() - 1
    }

    /// Lead and followers as trajectories with leader links set.
    pub fn to_trajectories(&self) -> Result<Vec<Trajectory>> {
        let mut out = Vec::with_capacity(self.followers.len() + 1);
        let mut prev: Option<&str> = None;
        for s in std::iter::once(&self.lead).chain(&self.followers) {
            let mut t = Trajectory::from_arrays(
                s.id.clone(),
                s.class,
                s.length,
                self.t0,
                self.dt,
                &s.x,
                &s.v,
                &s.a,
            )?;
            if let Some(l) = prev {
                for p in &mut t.points {
                    p.leader_id = Some(l.to_string());
                }
            }
            prev = Some(&s.id);
            out.push(t);
        }
        Ok(out)
    }
}

/// Observed `x`, `v`, `a` on the grid `start + k dt`, `k = 0..=horizon`.
/// Samples are copied when the grids coincide and linearly interpolated
/// otherwise. Missing speeds/accelerations are derived by differencing.
pub fn replay_observed(
    traj: &Trajectory,
    start: f64,
    dt: f64,
    horizon: usize,
) -> Result<VehicleSeries> {
    let data_dt = traj.dt()?;
    let k = traj.kinematics_or_derived()?;
    let end = start + horizon as f64 * dt;
    if start < traj.start_time() - TIME_TOLERANCE || end > traj.end_time() + TIME_TOLERANCE {
        return Err(Error::LeadTooShort {
            available: traj.end_time() - traj.start_time(),
            required: end - traj.start_time().min(start),
        });
    }
    let n = k.t.len();
    let mut out = VehicleSeries {
        id: traj.vehicle_id.clone(),
        class: traj.class,
        length: traj.length,
        x: Vec::with_capacity(horizon + 1),
        v: Vec::with_capacity(horizon + 1),
        a: Vec::with_capacity(horizon + 1),
    };
    for step in 0..=horizon {
        let t = start + step as f64 * dt;
        let pos = ((t - k.t[0]) / data_dt).max(0.0);
        let i = pos.floor() as usize;
        let w = pos - i as f64;
        if i >= n - 1 || w * data_dt <= TIME_TOLERANCE {
            let i = i.min(n - 1);
            out.x.push(k.x[i]);
            out.v.push(k.v[i]);
            out.a.push(k.a[i]);
        } else if (1.0 - w) * data_dt <= TIME_TOLERANCE {
            out.x.push(k.x[i + 1]);
            out.v.push(k.v[i + 1]);
            out.a.push(k.a[i + 1]);
        } else {
            let lerp = |s: &[f64]| s[i] + w * (s[i + 1] - s[i]);
            out.x.push(lerp(&k.x));
            out.v.push(lerp(&k.v));
            out.a.push(lerp(&k.a));
        }
    }
    Ok(out)
}

fn validate_followers(lead: &VehicleSeries, followers: &[FollowerInit]) -> Result<()> {
    let mut ahead = lead.x[0];
    for f in followers {
        if !(f.x0 < ahead) {
            return Err(Error::Invalid(format!(
                "follower {} starts at {} but must be behind {}",
                f.id, f.x0, ahead
            )));
        }
        if !(f.v0 >= 0.0) {
            return Err(Error::Invalid(format!(
                "follower {} has negative initial speed {}",
                f.id, f.v0
            )));
        }
        ahead = f.x0;
    }
    Ok(())
}

pub fn simulate_platoon(sc: &PlatoonScenario, cfg: &SimConfig) -> Result<SimResult> {
    simulate_perturbed(sc, cfg, None)
}

/// Like [`simulate_platoon`], with `perturbation[n][t]` added to follower
/// `n`'s law output at step `t` (index 0 is ignored).
pub fn simulate_platoon_perturbed(
    sc: &PlatoonScenario,
    cfg: &SimConfig,
    perturbation: &[Vec<f64>],
) -> Result<SimResult> {
    simulate_perturbed(sc, cfg, Some(perturbation))
}

fn simulate_perturbed(
    sc: &PlatoonScenario,
    cfg: &SimConfig,
    perturbation: Option<&[Vec<f64>]>,
) -> Result<SimResult> {
    cfg.validate()?;
    let start = sc.start_time.unwrap_or_else(|| sc.lead.start_time());
    let lead = replay_observed(&sc.lead, start, cfg.dt, cfg.horizon)?;
    let order: Vec<usize> = (0..sc.followers.len()).collect();
    rollout(start, lead, &sc.followers, &sc.model, cfg, perturbation, &order)
}

/// Rollout with an explicit per-step follower update order. Results do not
/// depend on `order`; exposed so tests can check that.
#[doc(hidden)]
pub fn simulate_with_order(
    sc: &PlatoonScenario,
    cfg: &SimConfig,
    order: &[usize],
) -> Result<SimResult> {
    cfg.validate()?;
    let start = sc.start_time.unwrap_or_else(|| sc.lead.start_time());
    let lead = replay_observed(&sc.lead, start, cfg.dt, cfg.horizon)?;
    rollout(start, lead, &sc.followers, &sc.model, cfg, None, order)
}

/// Rollout against an already replayed lead series.
pub fn rollout(
    t0: f64,
    lead: VehicleSeries,
    followers: &[FollowerInit],
    model: &ModelSpec,
    cfg: &SimConfig,
    perturbation: Option<&[Vec<f64>]>,
    order: &[usize],
) -> Result<SimResult> {
    cfg.validate()?;
    let steps = cfg.horizon;
    if lead.x.len() != steps + 1 {
        return Err(Error::LengthMismatch(lead.x.len(), steps + 1));
    }
    validate_followers(&lead, followers)?;
    if order.len() != followers.len() {
        return Err(Error::LengthMismatch(order.len(), followers.len()));
    }
    if let Some(p) = perturbation {
        if p.len() != followers.len() {
            return Err(Error::LengthMismatch(p.len(), followers.len()));
        }
        if let Some(bad) = p.iter().find(|r| r.len() != steps + 1) {
            return Err(Error::LengthMismatch(bad.len(), steps + 1));
        }
    }

    let dt = cfg.dt;
    let mut series: Vec<VehicleSeries> = followers
        .iter()
        .map(|f| {
            let mut s = VehicleSeries {
                id: f.id.clone(),
                class: f.class,
                length: f.length,
                x: vec![0.0; steps + 1],
                v: vec![0.0; steps + 1],
                a: vec![0.0; steps + 1],
            };
            s.x[0] = f.x0;
            s.v[0] = f.v0;
            s
        })
        .collect();
    let mut clamp_events = Vec::new();
    let mut collision_events = Vec::new();

    for t in 1..=steps {
        for &n in order {
            let (lx, lv, ll) = if n == 0 {
                (lead.x[t - 1], lead.v[t - 1], lead.length)
            } else {
                let l = &series[n - 1];
                (l.x[t - 1], l.v[t - 1], l.length)
            };
            let me = &series[n];
            let state = cfg
                .gap_semantics
                .state(me.x[t - 1], me.v[t - 1], lx, lv, ll);
            let mut a = model.for_class(me.class).accel(&state)?;
            if let Some(p) = perturbation {
                a += p[n][t];
            }
            let v_prev = me.v[t - 1];
            let mut v = v_prev + a * dt;
            if v < cfg.min_speed {
                log::debug!("vehicle {} step {t}: speed {v} clamped to {}", me.id, cfg.min_speed);
                clamp_events.push(ClampEvent {
                    vehicle: me.id.clone(),
                    step: t,
                    raw_speed: v,
                });
                v = cfg.min_speed;
                a = (v - v_prev) / dt;
            }
            let me = &mut series[n];
            me.a[t] = a;
            me.v[t] = v;
            me.x[t] = me.x[t - 1] + v * dt;
        }

        if cfg.collision_policy == CollisionPolicy::Ignore {
            continue;
        }
        for n in 0..series.len() {
            let (lx, lv, ll, lid) = if n == 0 {
                (lead.x[t], lead.v[t], lead.length, &lead.id)
            } else {
                let l = &series[n - 1];
                (l.x[t], l.v[t], l.length, &l.id)
            };
            let gap = lx - ll - series[n].x[t];
            if gap > cfg.min_gap_stop {
                continue;
            }
            match cfg.collision_policy {
                CollisionPolicy::Error => {
                    return Err(Error::Collision {
                        leader: lid.clone(),
                        follower: series[n].id.clone(),
                        step: t,
                        gap,
                    })
                }
                CollisionPolicy::Clamp => {
                    collision_events.push(CollisionEvent {
                        leader: lid.clone(),
                        follower: series[n].id.clone(),
                        step: t,
                        gap,
                    });
                    let me = &mut series[n];
                    me.x[t] = lx - ll - cfg.min_gap_stop;
                    me.v[t] = me.v[t].min(lv).max(cfg.min_speed.max(0.0));
                    me.a[t] = (me.v[t] - me.v[t - 1]) / dt;
                }
                CollisionPolicy::Ignore => unreachable!(),
            }
        }
    }

    Ok(SimResult {
        t0,
        dt,
        lead,
        followers: series,
        clamp_events,
        collision_events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{reference, LinearParams, ModelParams};
    use crate::trajectory::TrajectoryPoint;
    use approx::assert_abs_diff_eq;

    fn const_lead(x0: f64, v: f64, n: usize, dt: f64) -> Trajectory {
        let x: Vec<f64> = (0..n).map(|i| x0 + v * dt * i as f64).collect();
        Trajectory::from_arrays("0", VehicleClass::Small, 4.5, 0.0, dt, &x, &vec![v; n], &vec![0.0; n])
            .unwrap()
    }

    fn follower(id: &str, x0: f64, v0: f64) -> FollowerInit {
        FollowerInit {
            id: id.into(),
            class: VehicleClass::Small,
            length: 4.5,
            x0,
            v0,
        }
    }

    fn linear(k1: f64, k2: f64, k3: f64) -> ModelSpec {
        ModelSpec::uniform(ModelParams::Linear(LinearParams { k1, k2, k3 })).unwrap()
    }

    #[test]
    fn zero_law_moves_at_constant_speed() {
        let sc = PlatoonScenario {
            lead: const_lead(100.0, 5.0, 10, 1.0),
            start_time: None,
            followers: vec![follower("1", 0.0, 5.0)],
            model: linear(0.0, 0.0, 0.0),
        };
        let cfg = SimConfig {
            horizon: 3,
            ..SimConfig::default()
        };
        let r = simulate_platoon(&sc, &cfg).unwrap();
        assert_eq!(r.followers[0].x, vec![0.0, 5.0, 10.0, 15.0]);
        assert_eq!(r.followers[0].x.len(), cfg.horizon + 1);
    }

    #[test]
    fn idm_free_flow_equilibrium() {
        let p = reference::bic().idm.unwrap().small;
        let sc = PlatoonScenario {
            lead: const_lead(1e6, p.v_f, 200, 1.0),
            start_time: None,
            followers: vec![follower("1", 0.0, p.v_f)],
            model: ModelSpec::uniform(ModelParams::Idm(p)).unwrap(),
        };
        let cfg = SimConfig {
            horizon: 100,
            ..SimConfig::default()
        };
        let r = simulate_platoon(&sc, &cfg).unwrap();
        for v in &r.followers[0].v {
            assert!((v - p.v_f).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn semi_implicit_update_matches_recurrence() {
        let sc = PlatoonScenario {
            lead: const_lead(40.0, 8.0, 30, 1.0),
            start_time: None,
            followers: vec![follower("1", 20.0, 6.0), follower("2", 0.0, 7.0)],
            model: linear(-0.05, 0.3, 0.9),
        };
        let cfg = SimConfig::analytical(20);
        let r = simulate_platoon(&sc, &cfg).unwrap();
        let (f1, f2) = (&r.followers[0], &r.followers[1]);
        for t in 1..=20 {
            let gap = f1.x[t - 1] - f2.x[t - 1] - 4.5;
            let a = -0.05 * -gap + 0.3 * (f1.v[t - 1] - f2.v[t - 1]) + 0.9;
            assert_eq!(f2.a[t], a);
            assert_eq!(f2.v[t], f2.v[t - 1] + a);
            assert_eq!(f2.x[t], f2.x[t - 1] + f2.v[t]);
        }
    }

    #[test]
    fn speed_floor_is_enforced_and_logged() {
        let sc = PlatoonScenario {
            lead: const_lead(100.0, 0.0, 10, 1.0),
            start_time: None,
            followers: vec![follower("1", 0.0, 1.0)],
            model: linear(0.0, 0.0, -3.0),
        };
        let cfg = SimConfig {
            horizon: 5,
            ..SimConfig::default()
        };
        let r = simulate_platoon(&sc, &cfg).unwrap();
        assert!(r.followers[0].v.iter().all(|&v| v >= 0.0));
        assert_eq!(r.clamp_events.len(), 5);
        assert_eq!(r.followers[0].a[1], -1.0);
    }

    #[test]
    fn collision_policies() {
        let sc = PlatoonScenario {
            lead: const_lead(20.0, 0.0, 20, 1.0),
            start_time: None,
            followers: vec![follower("1", 0.0, 10.0)],
            model: linear(0.0, 0.0, 0.0),
        };
        let mut cfg = SimConfig {
            horizon: 5,
            ..SimConfig::default()
        };
        match simulate_platoon(&sc, &cfg) {
            Err(Error::Collision { leader, follower, step, .. }) => {
                assert_eq!((leader.as_str(), follower.as_str(), step), ("0", "1", 2));
            }
            other => panic!("expected collision, got {other:?}"),
        }
        cfg.collision_policy = CollisionPolicy::Clamp;
        let r = simulate_platoon(&sc, &cfg).unwrap();
        assert!(!r.collision_events.is_empty());
        let f = &r.followers[0];
        assert_abs_diff_eq!(f.x[5], 20.0 - 4.5 - 0.1, epsilon = 1e-12);
        assert_eq!(f.v[5], 0.0);
    }

    #[test]
    fn lead_too_short() {
        let sc = PlatoonScenario {
            lead: const_lead(100.0, 5.0, 5, 1.0),
            start_time: None,
            followers: vec![follower("1", 0.0, 5.0)],
            model: linear(0.0, 0.0, 0.0),
        };
        let cfg = SimConfig {
            horizon: 10,
            ..SimConfig::default()
        };
        assert!(matches!(simulate_platoon(&sc, &cfg), Err(Error::LeadTooShort { .. })));
    }

    #[test]
    fn bad_initial_order_rejected() {
        let sc = PlatoonScenario {
            lead: const_lead(10.0, 5.0, 5, 1.0),
            start_time: None,
            followers: vec![follower("1", 0.0, 5.0), follower("2", 3.0, 5.0)],
            model: linear(0.0, 0.0, 0.0),
        };
        assert!(simulate_platoon(&sc, &SimConfig::default()).is_err());
    }

    #[test]
    fn replay_exact_on_coinciding_grid() {
        let lead = const_lead(3.0, 1.7, 8, 0.1);
        let r = replay_observed(&lead, 0.0, 0.1, 7).unwrap();
        let k = lead.kinematics().unwrap();
        assert_eq!(r.x, k.x);
        assert_eq!(r.v, k.v);
    }

    #[test]
    fn replay_halved_step_midpoints() {
        let lead = Trajectory::from_arrays(
            "0",
            VehicleClass::Small,
            4.5,
            0.0,
            1.0,
            &[0.0, 1.0, 3.0, 6.0],
            &[1.0, 1.0, 2.0, 3.0],
            &[0.0, 0.0, 1.0, 1.0],
        )
        .unwrap();
        let r = replay_observed(&lead, 0.0, 0.5, 6).unwrap();
        assert_eq!(r.x, vec![0.0, 0.5, 1.0, 2.0, 3.0, 4.5, 6.0]);
        assert_eq!(r.v, vec![1.0, 1.0, 1.0, 1.5, 2.0, 2.5, 3.0]);
    }

    #[test]
    fn replay_non_divisor_step() {
        // x = t^2 sampled at 0, 1, 2, 3; replay at dt = 0.7
        let lead = Trajectory::from_arrays(
            "0",
            VehicleClass::Small,
            4.5,
            0.0,
            1.0,
            &[0.0, 1.0, 4.0, 9.0],
            &[0.0, 2.0, 4.0, 6.0],
            &[2.0, 2.0, 2.0, 2.0],
        )
        .unwrap();
        let r = replay_observed(&lead, 0.0, 0.7, 4).unwrap();
        // t = 0.7: 0 + 0.7 * 1 = 0.7; t = 1.4: 1 + 0.4 * 3 = 2.2; t = 2.1: 4 + 0.1 * 5 = 4.5
        assert_abs_diff_eq!(r.x[1], 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(r.x[2], 2.2, epsilon = 1e-12);
        assert_abs_diff_eq!(r.x[3], 4.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.v[2], 2.8, epsilon = 1e-12);
        assert!(replay_observed(&lead, 0.0, 0.7, 5).is_err());
    }

    #[test]
    fn replay_derives_missing_speeds() {
        let lead = Trajectory::new(
            "0",
            VehicleClass::Small,
            4.5,
            (0..5).map(|i| TrajectoryPoint::new(i as f64, 2.0 * i as f64)).collect(),
        )
        .unwrap();
        let r = replay_observed(&lead, 0.0, 1.0, 4).unwrap();
        assert_eq!(r.v, vec![2.0; 5]);
    }

    #[test]
    fn to_trajectories_links_leaders() {
        let sc = PlatoonScenario {
            lead: const_lead(100.0, 5.0, 10, 1.0),
            start_time: None,
            followers: vec![follower("1", 50.0, 5.0), follower("2", 0.0, 5.0)],
            model: linear(0.0, 0.0, 0.0),
        };
        let r = simulate_platoon(&sc, &SimConfig { horizon: 4, ..SimConfig::default() }).unwrap();
        let trajs = r.to_trajectories().unwrap();
        assert_eq!(trajs.len(), 3);
        assert_eq!(trajs[2].points[0].leader_id.as_deref(), Some("1"));
        assert_eq!(trajs[0].points[0].leader_id, None);
    }
}
