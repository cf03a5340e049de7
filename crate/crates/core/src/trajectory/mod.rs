//! Vehicle trajectories: loading, cleaning, differentiation and platoon
//! assembly.

mod cleaning;
mod corridor;
mod io;
mod platoon;

pub use cleaning::{
    clean_trajectory, detect_drift_points, differentiate, reconstruct_points,
    smooth_moving_average, CleaningConfig, CleaningReport,
};
pub use corridor::{Corridor, EdgeLine};
pub use io::{
    load_trajectories, read_table, write_trajectories, Dataset, Schema, Table, TableRow,
};
pub use platoon::{build_platoons, Chain, ExcludedPair, PlatoonIndex};

use crate::error::{Error, Result};
use crate::models::VehicleClass;

/// Absolute tolerance on time-step uniformity, seconds.
pub const TIME_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryPoint {
    pub t: f64,
    /// Longitudinal position along the direction of travel.
    pub x: f64,
    /// Lateral position; only used for drift detection.
    pub y: Option<f64>,
    pub v: Option<f64>,
    pub a: Option<f64>,
    pub lane: Option<String>,
    pub edge: Option<String>,
    pub leader_id: Option<String>,
}

impl TrajectoryPoint {
    pub fn new(t: f64, x: f64) -> Self {
        TrajectoryPoint {
            t,
            x,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub vehicle_id: String,
    pub class: VehicleClass,
    pub length: f64,
    pub points: Vec<TrajectoryPoint>,
}

/// Full kinematic arrays of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Kinematics {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
}

impl Trajectory {
    pub fn new(
        vehicle_id: impl Into<String>,
        class: VehicleClass,
        length: f64,
        points: Vec<TrajectoryPoint>,
    ) -> Result<Self> {
        let traj = Trajectory {
            vehicle_id: vehicle_id.into(),
            class,
            length,
            points,
        };
        traj.validate()?;
        Ok(traj)
    }

    /// Builds a trajectory on a uniform grid starting at `t0`.
    pub fn from_arrays(
        vehicle_id: impl Into<String>,
        class: VehicleClass,
        length: f64,
        t0: f64,
        dt: f64,
        x: &[f64],
        v: &[f64],
        a: &[f64],
    ) -> Result<Self> {
        if x.len() != v.len() || x.len() != a.len() {
            return Err(Error::LengthMismatch(x.len(), v.len().min(a.len())));
        }
        let points = x
            .iter()
            .zip(v)
            .zip(a)
            .enumerate()
            .map(|(i, ((&x, &v), &a))| TrajectoryPoint {
                t: t0 + i as f64 * dt,
                x,
                v: Some(v),
                a: Some(a),
                ..Default::default()
            })
            .collect();
        Trajectory::new(vehicle_id, class, length, points)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 2 {
            return Err(Error::Invalid(format!(
                "vehicle {} has {} point(s); at least 2 are required",
                self.vehicle_id,
                self.points.len()
            )));
        }
        self.dt().map(|_| ())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn start_time(&self) -> f64 {
        self.points[0].t
    }

    pub fn end_time(&self) -> f64 {
        self.points[self.points.len() - 1].t
    }

    /// Uniform time step; errors on the first gap that deviates from the
    /// first one.
    pub fn dt(&self) -> Result<f64> {
        if self.points.len() < 2 {
            return Err(Error::Invalid(format!(
                "vehicle {} has too few points to infer a time step",
                self.vehicle_id
            )));
        }
        let expected = self.points[1].t - self.points[0].t;
        if !(expected > TIME_TOLERANCE) {
            return Err(Error::NonUniformStep {
                vehicle: self.vehicle_id.clone(),
                t: self.points[1].t,
                gap: expected,
                expected: f64::NAN,
            });
        }
        for w in self.points.windows(2).skip(1) {
            let gap = w[1].t - w[0].t;
            if (gap - expected).abs() > TIME_TOLERANCE {
                return Err(Error::NonUniformStep {
                    vehicle: self.vehicle_id.clone(),
                    t: w[1].t,
                    gap,
                    expected,
                });
            }
        }
        Ok(expected)
    }

    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }

    pub fn positions(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x).collect()
    }

    /// Speeds and accelerations must be present; see [`differentiate`].
    pub fn kinematics(&self) -> Result<Kinematics> {
        let missing =
            |what: &str| Error::Invalid(format!("vehicle {} has no {what} values", self.vehicle_id));
        let v = self
            .points
            .iter()
            .map(|p| p.v)
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| missing("speed"))?;
        let a = self
            .points
            .iter()
            .map(|p| p.a)
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| missing("acceleration"))?;
        Ok(Kinematics {
            t: self.times(),
            x: self.positions(),
            v,
            a,
        })
    }

    /// Kinematics, differentiating positions when speed or acceleration is
    /// missing.
    pub fn kinematics_or_derived(&self) -> Result<Kinematics> {
        match self.kinematics() {
            Ok(k) => Ok(k),
            Err(_) => differentiate(self)?.kinematics(),
        }
    }

    /// Index of the sample at time `t`, if it lies on this trajectory's grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let dt = self.dt().ok()?;
        let k = ((t - self.start_time()) / dt).round();
        if k < 0.0 || k as usize >= self.points.len() {
            return None;
        }
        let i = k as usize;
        ((self.points[i].t - t).abs() <= TIME_TOLERANCE).then_some(i)
    }

    /// Sub-trajectory with samples in `[t0, t1]`.
    pub fn window(&self, t0: f64, t1: f64) -> Result<Trajectory> {
        let points: Vec<_> = self
            .points
            .iter()
            .filter(|p| p.t >= t0 - TIME_TOLERANCE && p.t <= t1 + TIME_TOLERANCE)
            .cloned()
            .collect();
        Trajectory::new(self.vehicle_id.clone(), self.class, self.length, points)
    }

    /// Most frequent leader id over the points (first seen wins ties).
    pub fn dominant_leader(&self) -> Option<String> {
        let mut counts: Vec<(&str, usize)> = Vec::new();
        for id in self.points.iter().filter_map(|p| p.leader_id.as_deref()) {
            match counts.iter_mut().find(|(k, _)| *k == id) {
                Some((_, c)) => *c += 1,
                None => counts.push((id, 1)),
            }
        }
        let mut best: Option<(&str, usize)> = None;
        for (id, c) in counts {
            if best.map_or(true, |(_, b)| c > b) {
                best = Some((id, c));
            }
        }
        best.map(|(id, _)| id.to_string())
    }
}

/// Orders vehicle ids: numeric ids first by value, then the rest lexically.
pub fn compare_ids(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y).then(a.cmp(b)),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(ts: &[f64]) -> Trajectory {
        Trajectory {
            vehicle_id: "7".into(),
            class: VehicleClass::Small,
            length: 4.5,
            points: ts.iter().map(|&t| TrajectoryPoint::new(t, t)).collect(),
        }
    }

    #[test]
    fn dt_detects_non_uniform_step() {
        let err = traj(&[0.0, 0.1, 0.3]).dt().unwrap_err();
        assert!(err.to_string().contains("non-uniform time step at t=0.3"), "{err}");
        assert!((traj(&[0.0, 0.1, 0.2, 0.3]).dt().unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn index_and_window() {
        let t = traj(&[1.0, 1.5, 2.0, 2.5, 3.0]);
        assert_eq!(t.index_of(2.0), Some(2));
        assert_eq!(t.index_of(2.2), None);
        assert_eq!(t.index_of(9.0), None);
        let w = t.window(1.5, 2.5).unwrap();
        assert_eq!(w.times(), vec![1.5, 2.0, 2.5]);
    }

    #[test]
    fn id_ordering() {
        let mut ids = vec!["10", "9", "b", "a", "100"];
        ids.sort_by(|a, b| compare_ids(a, b));
        assert_eq!(ids, vec!["9", "10", "100", "a", "b"]);
    }
}
