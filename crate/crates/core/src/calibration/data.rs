//! Observed platoons on a common time grid, the unit of calibration.

use crate::error::{Error, Result};
use crate::models::VehicleClass;
use crate::simulation::{replay_observed, FollowerInit, VehicleSeries};
use crate::trajectory::{Dataset, PlatoonIndex, Trajectory};

/// Head plus followers observed over the same `horizon + 1` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedPlatoon {
    pub t0: f64,
    pub dt: f64,
    /// Replayed during simulation.
    pub head: VehicleSeries,
    pub followers: Vec<FollowerInit>,
    /// Observed series of each follower, same order as `followers`.
    pub observed: Vec<VehicleSeries>,
}

impl ObservedPlatoon {
    pub fn horizon(&self) -> usize {
        self.head.x.len() - 1
    }

    pub fn from_series(t0: f64, dt: f64, head: VehicleSeries, observed: Vec<VehicleSeries>) -> Result<Self> {
        let len = head.x.len();
        if len < 2 {
            return Err(Error::Invalid("platoon needs at least two samples".into()));
        }
        if let Some(bad) = observed.iter().find(|s| s.x.len() != len || s.v.len() != len || s.a.len() != len) {
            return Err(Error::LengthMismatch(bad.x.len(), len));
        }
        let followers = observed
            .iter()
            .map(|s| FollowerInit {
                id: s.id.clone(),
                class: s.class,
                length: s.length,
                x0: s.x[0],
                v0: s.v[0],
            })
            .collect();
        Ok(ObservedPlatoon {
            t0,
            dt,
            head,
            followers,
            observed,
        })
    }

    /// Observed trajectories of `head` and `followers` resampled on
    /// `t0 + k dt`, `k = 0..=horizon`.
    pub fn from_trajectories(
        head: &Trajectory,
        followers: &[&Trajectory],
        t0: f64,
        dt: f64,
        horizon: usize,
    ) -> Result<Self> {
        let h = replay_observed(head, t0, dt, horizon)?;
        let obs = followers
            .iter()
            .map(|t| replay_observed(t, t0, dt, horizon))
            .collect::<Result<Vec<_>>>()?;
        Self::from_series(t0, dt, h, obs)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CalibrationData {
    pub platoons: Vec<ObservedPlatoon>,
}

impl CalibrationData {
    pub fn new(platoons: Vec<ObservedPlatoon>) -> Result<Self> {
        if let Some(p) = platoons.iter().find(|p| p.followers.is_empty()) {
            return Err(Error::Invalid(format!("platoon headed by {} has no followers", p.head.id)));
        }
        Ok(CalibrationData { platoons })
    }

    /// One platoon per chain, cut where adding the next vehicle would leave
    /// fewer than `min_steps` shared steps. The vehicle before a cut heads
    /// the next platoon.
    pub fn from_dataset(ds: &Dataset, index: &PlatoonIndex, min_steps: usize) -> Result<Self> {
        let dt = match ds.dt {
            Some(dt) => dt,
            None => return Ok(CalibrationData::default()),
        };
        let min_steps = min_steps.max(1);
        let steps_in = |(a, b): (f64, f64)| ((b - a) / dt + 1e-6).floor();
        let mut platoons = Vec::new();
        for chain in &index.chains {
            let trajs: Vec<&Trajectory> = chain
                .vehicles
                .iter()
                .map(|id| ds.get(id).ok_or_else(|| Error::Invalid(format!("chain names unknown vehicle {id}"))))
                .collect::<Result<_>>()?;
            let mut start = 0;
            while start + 1 < trajs.len() {
                let mut span = (trajs[start].start_time(), trajs[start].end_time());
                let mut end = start;
                for (i, t) in trajs.iter().enumerate().skip(start + 1) {
                    let next = (span.0.max(t.start_time()), span.1.min(t.end_time()));
                    if steps_in(next) < min_steps as f64 {
                        break;
                    }
                    span = next;
                    end = i;
                }
                if end == start {
                    log::debug!(
                        "{} and {} share fewer than {min_steps} steps; pair skipped",
                        trajs[start].vehicle_id,
                        trajs[start + 1].vehicle_id
                    );
                    start += 1;
                    continue;
                }
                let horizon = steps_in(span) as usize;
                platoons.push(ObservedPlatoon::from_trajectories(
                    trajs[start],
                    &trajs[start + 1..=end],
                    span.0,
                    dt,
                    horizon,
                )?);
                start = end;
            }
        }
        Ok(CalibrationData { platoons })
    }

    pub fn is_empty(&self) -> bool {
        self.platoons.is_empty()
    }

    pub fn follower_count(&self) -> usize {
        self.platoons.iter().map(|p| p.followers.len()).sum()
    }

    /// Classes that occur among followers, in `VehicleClass::ALL` order.
    pub fn classes(&self) -> Vec<VehicleClass> {
        VehicleClass::ALL
            .into_iter()
            .filter(|c| self.platoons.iter().any(|p| p.followers.iter().any(|f| f.class == *c)))
            .collect()
    }

    /// Sub-platoons containing only followers of `class`; vehicles of the
    /// other class become replayed heads.
    pub fn split_by_class(&self, class: VehicleClass) -> CalibrationData {
        let mut out = Vec::new();
        for p in &self.platoons {
            let mut head = p.head.clone();
            let mut run: Vec<VehicleSeries> = Vec::new();
            for obs in &p.observed {
                if obs.class == class {
                    run.push(obs.clone());
                } else {
                    if !run.is_empty() {
                        out.push(ObservedPlatoon::from_series(p.t0, p.dt, head, std::mem::take(&mut run))
                            .expect("series share the platoon grid"));
                    }
                    head = obs.clone();
                }
            }
            if !run.is_empty() {
                out.push(ObservedPlatoon::from_series(p.t0, p.dt, head, run).expect("series share the platoon grid"));
            }
        }
        CalibrationData { platoons: out }
    }
}
