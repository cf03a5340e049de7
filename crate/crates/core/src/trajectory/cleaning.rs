use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Trajectory, TrajectoryPoint};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleaningConfig {
    /// Interior angle, in degrees, below which a vertex counts as a drift
    /// spike.
    pub angle_threshold: f64,
    /// Moving-average window; odd and at least 3.
    pub window: usize,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        CleaningConfig {
            angle_threshold: 30.0,
            window: 5,
        }
    }
}

impl CleaningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.angle_threshold > 0.0 && self.angle_threshold < 180.0) {
            return Err(Error::Config(format!(
                "angle_threshold must lie in (0, 180), got {}",
                self.angle_threshold
            )));
        }
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::Config(format!(
                "window must be odd and >= 3, got {}",
                self.window
            )));
        }
        Ok(())
    }

    fn half_width(&self) -> usize {
        (self.window - 1) / 2
    }
}

/// Vertices whose interior angle is below the threshold, i.e. the turning
/// angle between consecutive direction vectors exceeds `180 - threshold`.
/// Missing lateral coordinates are treated as zero.
pub fn detect_drift_points(traj: &Trajectory, cfg: &CleaningConfig) -> BTreeSet<usize> {
    let pts = &traj.points;
    let mut flagged = BTreeSet::new();
    if pts.len() < 3 {
        return flagged;
    }
    let xy = |p: &TrajectoryPoint| (p.x, p.y.unwrap_or(0.0));
    let min_turn = 180.0 - cfg.angle_threshold;
    for i in 1..pts.len() - 1 {
        let (x0, y0) = xy(&pts[i - 1]);
        let (x1, y1) = xy(&pts[i]);
        let (x2, y2) = xy(&pts[i + 1]);
        let (ax, ay) = (x1 - x0, y1 - y0);
        let (bx, by) = (x2 - x1, y2 - y1);
        let na = ax.hypot(ay);
        let nb = bx.hypot(by);
        if na == 0.0 || nb == 0.0 {
            continue;
        }
        let cos = ((ax * bx + ay * by) / (na * nb)).clamp(-1.0, 1.0);
        let turn = cos.acos().to_degrees();
        if turn > min_turn {
            flagged.insert(i);
        }
    }
    flagged
}

fn window_mean_excluding(
    values: &[f64],
    center: usize,
    half: usize,
    skip: &BTreeSet<usize>,
) -> Option<f64> {
    let lo = center.saturating_sub(half);
    let hi = (center + half).min(values.len() - 1);
    let kept: Vec<f64> = (lo..=hi)
        .filter(|j| !skip.contains(j))
        .map(|j| values[j])
        .collect();
    (!kept.is_empty()).then(|| kept.iter().sum::<f64>() / kept.len() as f64)
}

fn interpolate_from_survivors(values: &[f64], i: usize, skip: &BTreeSet<usize>) -> f64 {
    let before = (0..i).rev().find(|j| !skip.contains(j));
    let after = (i + 1..values.len()).find(|j| !skip.contains(j));
    match (before, after) {
        (Some(b), Some(a)) => {
            let w = (i - b) as f64 / (a - b) as f64;
            values[b] + w * (values[a] - values[b])
        }
        (Some(j), None) | (None, Some(j)) => values[j],
        (None, None) => values[i],
    }
}

fn reconstruct_series(values: &[f64], removed: &BTreeSet<usize>, half: usize) -> Vec<f64> {
    let mut out = values.to_vec();
    for &i in removed {
        out[i] = window_mean_excluding(values, i, half, removed)
            .unwrap_or_else(|| interpolate_from_survivors(values, i, removed));
    }
    out
}

/// Replaces removed points with the mean of the surviving samples inside the
/// smoothing window; falls back to linear interpolation between the nearest
/// survivors when the window holds none.
pub fn reconstruct_points(
    traj: &Trajectory,
    removed: &BTreeSet<usize>,
    cfg: &CleaningConfig,
) -> Result<Trajectory> {
    if let Some(&bad) = removed.iter().find(|&&i| i >= traj.len()) {
        return Err(Error::Invalid(format!(
            "removed index {bad} out of range for {} points",
            traj.len()
        )));
    }
    if traj.len() - removed.len() < 2 {
        return Err(Error::Invalid(format!(
            "vehicle {}: removing {} of {} points leaves fewer than 2",
            traj.vehicle_id,
            removed.len(),
            traj.len()
        )));
    }
    if removed.is_empty() {
        return Ok(traj.clone());
    }
    let half = cfg.half_width();
    let xs = reconstruct_series(&traj.positions(), removed, half);
    let ys: Option<Vec<f64>> = traj.points.iter().map(|p| p.y).collect();
    let ys = ys.map(|ys| reconstruct_series(&ys, removed, half));

    let mut out = traj.clone();
    for (i, p) in out.points.iter_mut().enumerate() {
        p.x = xs[i];
        if let Some(ys) = &ys {
            p.y = Some(ys[i]);
        }
    }
    Ok(out)
}

fn moving_average(values: &[f64], half: usize) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            let s: f64 = values[i - h..=i + h].iter().sum();
            s / (2 * h + 1) as f64
        })
        .collect()
}

/// Centered moving average over `cfg.window` samples. Near the ends the
/// window shrinks symmetrically, so the first and last samples are kept.
pub fn smooth_moving_average(traj: &Trajectory, cfg: &CleaningConfig) -> Result<Trajectory> {
    if traj.len() < cfg.window {
        return Err(Error::Invalid(format!(
            "vehicle {}: {} points is fewer than the smoothing window {}",
            traj.vehicle_id,
            traj.len(),
            cfg.window
        )));
    }
    let half = cfg.half_width();
    let xs = moving_average(&traj.positions(), half);
    let ys: Option<Vec<f64>> = traj.points.iter().map(|p| p.y).collect();
    let ys = ys.map(|ys| moving_average(&ys, half));
    let mut out = traj.clone();
    for (i, p) in out.points.iter_mut().enumerate() {
        p.x = xs[i];
        if let Some(ys) = &ys {
            p.y = Some(ys[i]);
        }
    }
    Ok(out)
}

/// Backward differences: `v_t = (x_t - x_{t-1}) / dt`,
/// `a_t = (v_t - v_{t-1}) / dt`. Leading entries that backward differencing
/// leaves undefined copy the first defined value.
pub fn differentiate(traj: &Trajectory) -> Result<Trajectory> {
    let dt = traj.dt()?;
    let x = traj.positions();
    let n = x.len();
    let mut v = vec![0.0; n];
    for t in 1..n {
        v[t] = (x[t] - x[t - 1]) / dt;
    }
    v[0] = v[1];
    let mut a = vec![0.0; n];
    for t in 2..n {
        a[t] = (v[t] - v[t - 1]) / dt;
    }
    let first = if n > 2 { a[2] } else { 0.0 };
    a[0] = first;
    a[1] = first;

    let mut out = traj.clone();
    for (i, p) in out.points.iter_mut().enumerate() {
        p.v = Some(v[i]);
        p.a = Some(a[i]);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CleaningReport {
    pub vehicle_id: String,
    /// Drift points replaced by reconstruction.
    pub removed: BTreeSet<usize>,
    /// Samples whose differentiated speed was negative and clamped to zero.
    pub clamped_speeds: usize,
}

/// Drift removal, reconstruction, smoothing and differentiation. Negative
/// speeds are clamped to zero and accelerations recomputed from the clamped
/// speeds.
pub fn clean_trajectory(
    traj: &Trajectory,
    cfg: &CleaningConfig,
) -> Result<(Trajectory, CleaningReport)> {
    cfg.validate()?;
    traj.dt()?;
    let removed = detect_drift_points(traj, cfg);
    let rebuilt = reconstruct_points(traj, &removed, cfg)?;
    let smoothed = if rebuilt.len() >= cfg.window {
        smooth_moving_average(&rebuilt, cfg)?
    } else {
        rebuilt
    };
    let mut out = differentiate(&smoothed)?;

    let dt = out.dt()?;
    let mut clamped = 0;
    for p in out.points.iter_mut() {
        if p.v.is_some_and(|v| v < 0.0) {
            p.v = Some(0.0);
            clamped += 1;
        }
    }
    if clamped > 0 {
        let v: Vec<f64> = out.points.iter().map(|p| p.v.unwrap_or(0.0)).collect();
        let n = v.len();
        let mut a = vec![0.0; n];
        for t in 2..n {
            a[t] = (v[t] - v[t - 1]) / dt;
        }
        let first = if n > 2 { a[2] } else { 0.0 };
        a[0] = first;
        a[1] = first;
        for (p, a) in out.points.iter_mut().zip(a) {
            p.a = Some(a);
        }
    }
    let report = CleaningReport {
        vehicle_id: traj.vehicle_id.clone(),
        removed,
        clamped_speeds: clamped,
    };
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::VehicleClass;
    use proptest::prelude::*;

    fn traj_xy(pts: &[(f64, f64)]) -> Trajectory {
        Trajectory {
            vehicle_id: "1".into(),
            class: VehicleClass::Small,
            length: 4.5,
            points: pts
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| TrajectoryPoint {
                    y: Some(y),
                    ..TrajectoryPoint::new(i as f64, x)
                })
                .collect(),
        }
    }

    fn traj_x(xs: &[f64], dt: f64) -> Trajectory {
        Trajectory {
            vehicle_id: "1".into(),
            class: VehicleClass::Small,
            length: 4.5,
            points: xs
                .iter()
                .enumerate()
                .map(|(i, &x)| TrajectoryPoint::new(i as f64 * dt, x))
                .collect(),
        }
    }

    fn cfg() -> CleaningConfig {
        CleaningConfig::default()
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        for bad in [
            CleaningConfig { window: 4, ..cfg() },
            CleaningConfig { window: 1, ..cfg() },
            CleaningConfig { angle_threshold: 0.0, ..cfg() },
            CleaningConfig { angle_threshold: 180.0, ..cfg() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn drift_collinear_is_clean() {
        let t = traj_xy(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        assert!(detect_drift_points(&t, &cfg()).is_empty());
    }

    #[test]
    fn drift_sharp_back_turn_flagged() {
        // turn = acos(-0.9 / hypot(0.9, 0.05)) = 176.82 deg, interior 3.18 deg
        let t = traj_xy(&[(0.0, 0.0), (1.0, 0.0), (0.1, 0.05)]);
        assert_eq!(detect_drift_points(&t, &cfg()).into_iter().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn drift_gentle_curve_kept() {
        // turn = atan(0.2) = 11.3 deg, interior 168.7 deg
        let t = traj_xy(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.2)]);
        assert!(detect_drift_points(&t, &cfg()).is_empty());
    }

    #[test]
    fn drift_ignores_zero_length_vectors_and_short_input() {
        let t = traj_xy(&[(0.0, 0.0), (0.0, 0.0), (-1.0, 0.0)]);
        assert!(detect_drift_points(&t, &cfg()).is_empty());
        let t = traj_xy(&[(0.0, 0.0), (1.0, 0.0)]);
        assert!(detect_drift_points(&t, &cfg()).is_empty());
    }

    #[test]
    fn reconstruct_interior_point() {
        let t = traj_x(&[0.0, 1.0, 9.0, 3.0, 4.0], 1.0);
        let r = reconstruct_points(&t, &BTreeSet::from([2]), &cfg()).unwrap();
        assert_eq!(r.positions(), vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn reconstruct_first_point() {
        let t = traj_x(&[50.0, 1.0, 2.0, 3.0, 4.0], 1.0);
        let r = reconstruct_points(&t, &BTreeSet::from([0]), &cfg()).unwrap();
        // window [0, 2] minus {0} -> mean(1, 2)
        assert_eq!(r.points[0].x, 1.5);
        assert_eq!(r.times(), t.times());
    }

    #[test]
    fn reconstruct_nothing_is_identity() {
        let t = traj_x(&[0.0, 1.0, 9.0, 3.0, 4.0], 1.0);
        assert_eq!(reconstruct_points(&t, &BTreeSet::new(), &cfg()).unwrap(), t);
    }

    #[test]
    fn reconstruct_empty_window_interpolates() {
        let t = traj_x(&[0.0, 9.0, 9.0, 9.0, 9.0, 9.0, 6.0], 1.0);
        let removed = BTreeSet::from([1, 2, 3, 4, 5]);
        let r = reconstruct_points(&t, &removed, &CleaningConfig { window: 3, ..cfg() }).unwrap();
        // index 3 has no survivor in [2, 4]: interpolate between x0 = 0 and x6 = 6
        assert_eq!(r.points[3].x, 3.0);
        assert_eq!(r.points[1].x, 0.0);
        assert_eq!(r.points[5].x, 6.0);
    }

    #[test]
    fn reconstruct_rejects_too_many_removals() {
        let t = traj_x(&[0.0, 1.0, 2.0], 1.0);
        assert!(reconstruct_points(&t, &BTreeSet::from([0, 1]), &cfg()).is_err());
        assert!(reconstruct_points(&t, &BTreeSet::from([5]), &cfg()).is_err());
    }

    #[test]
    fn smoothing_cases() {
        let s = smooth_moving_average(&traj_x(&[0.0, 1.0, 2.0, 3.0, 4.0], 1.0), &cfg()).unwrap();
        assert_eq!(s.points[2].x, 2.0);
        let s = smooth_moving_average(&traj_x(&[0.0, 0.0, 5.0, 0.0, 0.0], 1.0), &cfg()).unwrap();
        assert_eq!(s.points[2].x, 1.0);
        // truncated symmetric window at the edges
        assert_eq!(s.points[0].x, 0.0);
        assert_eq!(s.points[1].x, 5.0 / 3.0);
        assert!(smooth_moving_average(&traj_x(&[0.0, 1.0, 2.0], 1.0), &cfg()).is_err());
    }

    #[test]
    fn differentiate_cases() {
        let d = differentiate(&traj_x(&[0.0, 1.0, 2.0, 3.0], 1.0)).unwrap();
        let k = d.kinematics().unwrap();
        assert_eq!(k.v, vec![1.0, 1.0, 1.0, 1.0]);
        assert_eq!(k.a, vec![0.0, 0.0, 0.0, 0.0]);

        let k = differentiate(&traj_x(&[0.0, 0.0, 0.0], 1.0)).unwrap().kinematics().unwrap();
        assert_eq!(k.v, vec![0.0; 3]);
        assert_eq!(k.a, vec![0.0; 3]);

        let k = differentiate(&traj_x(&[0.0, 1.0, 3.0, 6.0], 1.0)).unwrap().kinematics().unwrap();
        assert_eq!(k.v, vec![1.0, 1.0, 2.0, 3.0]);
        assert_eq!(k.a, vec![1.0, 1.0, 1.0, 1.0]);

        let k = differentiate(&traj_x(&[0.0, 0.5, 1.5], 0.5)).unwrap().kinematics().unwrap();
        assert_eq!(k.v, vec![1.0, 1.0, 2.0]);
        assert_eq!(k.a, vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn clean_keeps_ids_and_times_and_flags_drift() {
        // lateral spike at index 6: interior angle 11.4 deg, neighbours ~80-90 deg
        let mut pts: Vec<(f64, f64)> = (0..12).map(|i| (i as f64, 0.0)).collect();
        pts[6] = (5.05, 10.0);
        let t = traj_xy(&pts);
        let (c, report) = clean_trajectory(&t, &cfg()).unwrap();
        assert_eq!(report.removed, BTreeSet::from([6]));
        assert_eq!(c.times(), t.times());
        assert_eq!(c.vehicle_id, t.vehicle_id);
        assert!(c.points.iter().all(|p| p.v.unwrap() >= 0.0));
    }

    proptest! {
        #[test]
        fn smoothing_constant_series_is_fixed(c in -1e3f64..1e3, n in 5usize..40) {
            let t = traj_x(&vec![c; n], 0.1);
            let s = smooth_moving_average(&t, &cfg()).unwrap();
            prop_assert_eq!(s.len(), n);
            for p in &s.points {
                prop_assert!((p.x - c).abs() <= 1e-12 * c.abs().max(1.0));
            }
        }

        #[test]
        fn monotone_1d_has_no_drift(steps in proptest::collection::vec(0.01f64..5.0, 3..40)) {
            let mut x = 0.0;
            let xs: Vec<f64> = steps.iter().map(|s| { x += s; x }).collect();
            let t = traj_xy(&xs.iter().map(|&x| (x, 0.0)).collect::<Vec<_>>());
            prop_assert!(detect_drift_points(&t, &cfg()).is_empty());
        }

        #[test]
        fn differentiate_inverts_integration(
            v in proptest::collection::vec(0.0f64..30.0, 3..60),
            dt in prop_oneof![Just(0.1), Just(0.5), Just(1.0)],
        ) {
            let mut xs = vec![0.0];
            for &vt in &v[1..] {
                let last = *xs.last().unwrap();
                xs.push(last + vt * dt);
            }
            let k = differentiate(&traj_x(&xs, dt)).unwrap().kinematics().unwrap();
            for t in 1..v.len() {
                prop_assert!((k.v[t] - v[t]).abs() < 1e-8, "t={} {} vs {}", t, k.v[t], v[t]);
            }
        }
    }
}
