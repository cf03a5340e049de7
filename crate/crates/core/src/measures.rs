//! Error metrics and corridor-level measures: segment travel time and
//! VT-Micro fuel consumption, aggregated per time interval.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

pub const VTMICRO_CSV: &str = include_str!("../fixtures/vtmicro_fuel.csv");

/// Speed floor used when extrapolating a vehicle that has not reached the
/// segment exit by the end of its record.
pub const EXTRAPOLATION_MIN_SPEED: f64 = 0.1;

pub fn mse(obs: &[f64], sim: &[f64]) -> Result<f64> {
    if obs.len() != sim.len() {
        return Err(Error::LengthMismatch(obs.len(), sim.len()));
    }
    if obs.is_empty() {
        return Err(Error::Invalid("mse of empty series".into()));
    }
    let s: f64 = obs.iter().zip(sim).map(|(o, s)| (o - s) * (o - s)).sum();
    Ok(s / obs.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuelCoefficients {
    /// Used when `a >= 0`; `l[m][p]` multiplies `v^m a^p`.
    pub l: [[f64; 4]; 4],
    /// Used when `a < 0`.
    pub m: [[f64; 4]; 4],
    pub speed_scale: f64,
    pub accel_scale: f64,
    /// SHA-256 of the source bytes, when loaded from text.
    pub source_hash: Option<String>,
}

impl FuelCoefficients {
    pub fn zeros() -> Self {
        FuelCoefficients {
            l: [[0.0; 4]; 4],
            m: [[0.0; 4]; 4],
            speed_scale: 1.0,
            accel_scale: 1.0,
            source_hash: None,
        }
    }

    /// Bundled light-duty VT-Micro fuel set.
    pub fn vt_micro() -> Self {
        Self::parse(VTMICRO_CSV).expect("bundled coefficient file is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Eight rows of four numbers (L then M). Lines starting with `#` are
    /// comments; `# speed_scale = ..` and `# accel_scale = ..` set the
    /// conversion from SI inputs to the units the fit was made in.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::zeros();
        for line in text.lines() {
            let Some(body) = line.trim().strip_prefix('#') else {
                continue;
            };
            if let Some((key, value)) = body.split_once('=') {
                let target = match key.trim() {
                    "speed_scale" => &mut c.speed_scale,
                    "accel_scale" => &mut c.accel_scale,
                    _ => continue,
                };
                *target = value.trim().parse().map_err(|_| {
                    Error::Config(format!("bad {} value `{}`", key.trim(), value.trim()))
                })?;
            }
        }
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.iter().all(|f| f.is_empty()) {
                continue;
            }
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != 4 {
                return Err(Error::Row {
                    line,
                    message: format!("expected 4 coefficients, found {}", rec.len()),
                });
            }
            let mut row = [0.0f64; 4];
            for (j, f) in rec.iter().enumerate() {
                row[j] = f.parse().map_err(|_| Error::Row {
                    line,
                    message: format!("not a number: `{f}`"),
                })?;
                if !row[j].is_finite() {
                    return Err(Error::Row {
                        line,
                        message: "non-finite coefficient".into(),
                    });
                }
            }
            rows.push(row);
        }
        if rows.len() != 8 {
            return Err(Error::Config(format!(
                "coefficient file needs 8 rows (L then M), found {}",
                rows.len()
            )));
        }
        c.l.copy_from_slice(&rows[..4]);
        c.m.copy_from_slice(&rows[4..]);
        if !(c.speed_scale > 0.0 && c.accel_scale > 0.0) {
            return Err(Error::Config("unit scales must be positive".into()));
        }
        c.source_hash = Some(hex::encode(Sha256::digest(text.as_bytes())));
        Ok(c)
    }
}

/// Instantaneous fuel rate in L/s for speed `v` (m/s) and acceleration `a`
/// (m/s^2).
pub fn fuel_rate(v: f64, a: f64, c: &FuelCoefficients) -> f64 {
    let k = if a >= 0.0 { &c.l } else { &c.m };
    let vs = v * c.speed_scale;
    let as_ = a * c.accel_scale;
    let mut sum = 0.0;
    let mut vm = 1.0;
    for row in k {
        let mut ap = 1.0;
        for &coef in row {
            sum += coef * vm * ap;
            ap *= as_;
        }
        vm *= vs;
    }
    sum.exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleFuel {
    pub liters: f64,
    pub distance: f64,
    /// `None` when the vehicle did not move.
    pub per_100km: Option<f64>,
}

/// Rectangle-rule fuel total: every sample contributes `rate * dt`.
pub fn vehicle_fuel(x: &[f64], v: &[f64], a: &[f64], c: &FuelCoefficients, dt: f64) -> VehicleFuel {
    let liters: f64 = v.iter().zip(a).map(|(&v, &a)| fuel_rate(v, a, c) * dt).sum();
    let distance = match (x.first(), x.last()) {
        (Some(f), Some(l)) => l - f,
        _ => 0.0,
    };
    let per_100km = (distance > 0.0).then(|| liters / distance * 1e5);
    VehicleFuel {
        liters,
        distance,
        per_100km,
    }
}

pub fn trajectory_fuel(traj: &Trajectory, c: &FuelCoefficients) -> Result<VehicleFuel> {
    let k = traj.kinematics_or_derived()?;
    Ok(vehicle_fuel(&k.x, &k.v, &k.a, c, traj.dt()?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraversalMiss {
    /// First sample is already past the entry position.
    StartsInside,
    NeverEnters,
    NeverExits,
}

impl std::fmt::Display for TraversalMiss {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TraversalMiss::StartsInside => "starts inside the segment",
            TraversalMiss::NeverEnters => "never reaches the segment entry",
            TraversalMiss::NeverExits => "never reaches the segment exit",
        })
    }
}

/// First time the series reaches `target`, linearly interpolated.
pub fn crossing_time(t0: f64, dt: f64, x: &[f64], target: f64) -> Option<f64> {
    let i = x.iter().position(|&xi| xi >= target)?;
    if i == 0 {
        return (x[0] == target).then_some(t0);
    }
    let (xa, xb) = (x[i - 1], x[i]);
    let w = (target - xa) / (xb - xa);
    Some(t0 + (i as f64 - 1.0 + w) * dt)
}

pub fn traversal_time_series(
    t0: f64,
    dt: f64,
    x: &[f64],
    entry_x: f64,
    exit_x: f64,
) -> Result<f64, TraversalMiss> {
    let t_in = entry_time(t0, dt, x, entry_x)?;
    let t_out = crossing_time(t0, dt, x, exit_x).ok_or(TraversalMiss::NeverExits)?;
    Ok(t_out - t_in)
}

fn entry_time(t0: f64, dt: f64, x: &[f64], entry_x: f64) -> Result<f64, TraversalMiss> {
    match x.first() {
        Some(&x0) if x0 > entry_x => Err(TraversalMiss::StartsInside),
        _ => crossing_time(t0, dt, x, entry_x).ok_or(TraversalMiss::NeverEnters),
    }
}

pub fn traversal_time(traj: &Trajectory, entry_x: f64, exit_x: f64) -> Result<f64, TraversalMiss> {
    let x = traj.positions();
    let dt = traj.dt().map_err(|_| TraversalMiss::NeverEnters)?;
    traversal_time_series(traj.start_time(), dt, &x, entry_x, exit_x)
}

/// Like [`traversal_time_series`], but a vehicle still inside the segment at
/// the end of its record is assumed to cover the rest at its final speed
/// (floored at [`EXTRAPOLATION_MIN_SPEED`]).
pub fn traversal_time_extrapolated(
    t0: f64,
    dt: f64,
    x: &[f64],
    v: &[f64],
    entry_x: f64,
    exit_x: f64,
) -> Result<f64, TraversalMiss> {
    let t_in = match entry_time(t0, dt, x, entry_x) {
        Err(TraversalMiss::NeverEnters) => {
            let (xe, ve) = (*x.last().unwrap(), *v.last().unwrap());
            let te = t0 + (x.len() - 1) as f64 * dt;
            te + (entry_x - xe) / ve.max(EXTRAPOLATION_MIN_SPEED)
        }
        other => other?,
    };
    match crossing_time(t0, dt, x, exit_x) {
        Some(t_out) => Ok(t_out - t_in),
        None => {
            let (xe, ve) = (*x.last().unwrap(), *v.last().unwrap());
            let te = t0 + (x.len() - 1) as f64 * dt;
            let t_out = te + (exit_x - xe) / ve.max(EXTRAPOLATION_MIN_SPEED);
            Ok(t_out - t_in)
        }
    }
}

/// Literal mean-rate quantity `(x(t2) - x(t1)) / (t2 - t1)`, positions
/// interpolated linearly.
pub fn eq16_mean_rate(traj: &Trajectory, t1: f64, t2: f64) -> Result<f64> {
    if !(t1 < t2) {
        return Err(Error::Invalid(format!("t1 = {t1} must be before t2 = {t2}")));
    }
    let dt = traj.dt()?;
    let x = traj.positions();
    let t0 = traj.start_time();
    let at = |t: f64| -> Result<f64> {
        let pos = (t - t0) / dt;
        if pos < -1e-9 || pos > (x.len() - 1) as f64 + 1e-9 {
            return Err(Error::Invalid(format!("t = {t} outside trajectory span")));
        }
        let i = (pos.floor().max(0.0) as usize).min(x.len() - 2);
        let w = pos - i as f64;
        Ok(x[i] + w * (x[i + 1] - x[i]))
    };
    Ok((at(t2)? - at(t1)?) / (t2 - t1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalSpec {
    /// Increasing interval edges; `boundaries.len() - 1` intervals. The last
    /// interval is closed on the right.
    pub boundaries: Vec<f64>,
    pub entry_x: f64,
    pub exit_x: f64,
    /// Restrict to one corridor edge; informational for 1-D data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge: Option<String>,
}

impl IntervalSpec {
    pub fn uniform(start: f64, end: f64, count: usize, entry_x: f64, exit_x: f64) -> Self {
        let w = (end - start) / count as f64;
        let mut boundaries: Vec<f64> = (0..count).map(|i| start + i as f64 * w).collect();
        boundaries.push(end);
        IntervalSpec {
            boundaries,
            entry_x,
            exit_x,
            edge: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.boundaries.len() < 2 {
            return Err(Error::Config("interval spec needs at least two boundaries".into()));
        }
        if self.boundaries.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("interval boundaries must strictly increase".into()));
        }
        if !(self.entry_x < self.exit_x) {
            return Err(Error::Config(format!(
                "segment entry {} must be before exit {}",
                self.entry_x, self.exit_x
            )));
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn interval_of(&self, t: f64) -> Option<usize> {
        let b = &self.boundaries;
        if t < b[0] || t > b[b.len() - 1] {
            return None;
        }
        Some(b.partition_point(|&e| e <= t).saturating_sub(1).min(b.len() - 2))
    }
}

/// Borrowed kinematic series of one vehicle on a uniform grid.
#[derive(Debug, Clone, Copy)]
pub struct SeriesView<'a> {
    pub id: &'a str,
    pub t0: f64,
    pub dt: f64,
    pub x: &'a [f64],
    pub v: &'a [f64],
    pub a: &'a [f64],
}

impl<'a> SeriesView<'a> {
    pub fn entry_time(&self, entry_x: f64) -> Option<f64> {
        entry_time(self.t0, self.dt, self.x, entry_x).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalMeasure {
    pub start: f64,
    pub end: f64,
    pub count: usize,
    /// Mean traversal time, seconds.
    pub travel_time: Option<f64>,
    /// Mean fuel, L/100km.
    pub fuel: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MacroMeasures {
    pub intervals: Vec<IntervalMeasure>,
    /// Vehicles left out, with the reason.
    pub excluded: Vec<(String, String)>,
}

impl MacroMeasures {
    pub fn empty_intervals(&self) -> Vec<usize> {
        (0..self.intervals.len()).filter(|&i| self.intervals[i].count == 0).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MacroOptions {
    /// Extrapolate vehicles that have not left the segment (see
    /// [`traversal_time_extrapolated`]).
    pub extrapolate: bool,
}

/// Interval index of each vehicle by its segment entry time.
pub fn assign_intervals(views: &[SeriesView<'_>], spec: &IntervalSpec) -> Vec<Option<usize>> {
    views
        .iter()
        .map(|s| s.entry_time(spec.entry_x).and_then(|t| spec.interval_of(t)))
        .collect()
}

/// Aggregate with a fixed membership (one entry per view; `None` leaves the
/// vehicle out).
pub fn aggregate_with_membership(
    views: &[SeriesView<'_>],
    membership: &[Option<usize>],
    spec: &IntervalSpec,
    c: &FuelCoefficients,
    opts: MacroOptions,
) -> Result<MacroMeasures> {
    spec.validate()?;
    if views.len() != membership.len() {
        return Err(Error::LengthMismatch(views.len(), membership.len()));
    }
    let n = spec.count();
    let mut tt_sum = vec![0.0; n];
    let mut tt_n = vec![0usize; n];
    let mut fuel_sum = vec![0.0; n];
    let mut fuel_n = vec![0usize; n];
    let mut count = vec![0usize; n];
    let mut excluded = Vec::new();
    for (s, m) in views.iter().zip(membership) {
        let Some(w) = *m else {
            excluded.push((s.id.to_string(), "entry time outside all intervals".into()));
            continue;
        };
        if w >= n {
            return Err(Error::Invalid(format!("interval index {w} out of range")));
        }
        count[w] += 1;
        let tt = if opts.extrapolate {
            traversal_time_extrapolated(s.t0, s.dt, s.x, s.v, spec.entry_x, spec.exit_x)
        } else {
            traversal_time_series(s.t0, s.dt, s.x, spec.entry_x, spec.exit_x)
        };
        match tt {
            Ok(tt) => {
                tt_sum[w] += tt;
                tt_n[w] += 1;
            }
            Err(miss) => excluded.push((s.id.to_string(), miss.to_string())),
        }
        match vehicle_fuel(s.x, s.v, s.a, c, s.dt).per_100km {
            Some(f) => {
                fuel_sum[w] += f;
                fuel_n[w] += 1;
            }
            None => excluded.push((s.id.to_string(), "zero distance, fuel per km undefined".into())),
        }
    }
    let intervals = (0..n)
        .map(|w| {
            if count[w] == 0 {
                log::debug!("interval {w} has no vehicles");
            }
            IntervalMeasure {
                start: spec.boundaries[w],
                end: spec.boundaries[w + 1],
                count: count[w],
                travel_time: (tt_n[w] > 0).then(|| tt_sum[w] / tt_n[w] as f64),
                fuel: (fuel_n[w] > 0).then(|| fuel_sum[w] / fuel_n[w] as f64),
            }
        })
        .collect();
    Ok(MacroMeasures {
        intervals,
        excluded,
    })
}

pub fn aggregate_series(
    views: &[SeriesView<'_>],
    spec: &IntervalSpec,
    c: &FuelCoefficients,
    opts: MacroOptions,
) -> Result<MacroMeasures> {
    spec.validate()?;
    let membership = assign_intervals(views, spec);
    aggregate_with_membership(views, &membership, spec, c, opts)
}

/// Per-interval mean travel time and fuel over observed trajectories.
pub fn aggregate_macro(
    trajs: &[Trajectory],
    spec: &IntervalSpec,
    c: &FuelCoefficients,
) -> Result<MacroMeasures> {
    let kin = trajs
        .iter()
        .map(|t| Ok((t.kinematics_or_derived()?, t.dt()?)))
        .collect::<Result<Vec<_>>>()?;
    let views: Vec<SeriesView<'_>> = trajs
        .iter()
        .zip(&kin)
        .map(|(t, (k, dt))| SeriesView {
            id: &t.vehicle_id,
            t0: t.start_time(),
            dt: *dt,
            x: &k.x,
            v: &k.v,
            a: &k.a,
        })
        .collect();
    aggregate_series(&views, spec, c, MacroOptions::default())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width histogram on `[lo, hi]`; values outside are clamped into the
/// end bins so counts always sum to the number of finite samples.
pub fn histogram(values: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Histogram> {
    if bins == 0 || !(lo < hi) {
        return Err(Error::Invalid(format!("bad histogram range [{lo}, {hi}] with {bins} bins")));
    }
    let w = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| lo + i as f64 * w).collect();
    let mut counts = vec![0; bins];
    for &v in values.iter().filter(|v| v.is_finite()) {
        let i = ((v - lo) / w).floor();
        counts[(i.max(0.0) as usize).min(bins - 1)] += 1;
    }
    Ok(Histogram { edges, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::VehicleClass;
    use approx::assert_abs_diff_eq;

    fn traj(id: &str, t0: f64, dt: f64, x: &[f64]) -> Trajectory {
        let n = x.len();
        let mut v = vec![0.0; n];
        for i in 1..n {
            v[i] = (x[i] - x[i - 1]) / dt;
        }
        v[0] = v[1];
        Trajectory::from_arrays(id, VehicleClass::Small, 4.5, t0, dt, x, &v, &vec![0.0; n]).unwrap()
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(mse(&[1.0, 2.0, 3.0], &[2.0, 2.0, 5.0]).unwrap(), 5.0 / 3.0);
        assert!(matches!(mse(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch(1, 2))));
    }

    #[test]
    fn fuel_rate_trivial_sets() {
        let mut c = FuelCoefficients::zeros();
        assert_eq!(fuel_rate(12.0, -1.0, &c), 1.0);
        c.l[0][0] = 2f64.ln();
        assert_abs_diff_eq!(fuel_rate(0.0, 0.0, &c), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn fuel_rate_vt_micro_desk_values() {
        // Independent double-sum evaluation in km/h, km/h/s.
        let c = FuelCoefficients::vt_micro();
        assert_abs_diff_eq!(fuel_rate(15.0, 0.5, &c), 0.0025702467144009616, epsilon = 1e-15);
        assert_abs_diff_eq!(fuel_rate(15.0, -0.5, &c), 0.0008136752509076753, epsilon = 1e-15);
        assert_abs_diff_eq!(fuel_rate(0.0, 0.0, &c), 0.00043746231194628516, epsilon = 1e-16);
        assert_eq!(c.source_hash.as_ref().unwrap().len(), 64);
    }

    #[test]
    fn coefficient_file_errors() {
        assert!(FuelCoefficients::parse("1,2,3,4\n").is_err());
        let bad = "1,2,3\n".repeat(8);
        assert!(matches!(FuelCoefficients::parse(&bad), Err(Error::Row { .. })));
        let ok = "# speed_scale = 2\n".to_string() + &"0,0,0,0\n".repeat(8);
        assert_eq!(FuelCoefficients::parse(&ok).unwrap().speed_scale, 2.0);
    }

    #[test]
    fn vehicle_fuel_examples() {
        let mut c = FuelCoefficients::zeros();
        c.l[0][0] = 0.5;
        let r = 0.5f64.exp();
        let one = vehicle_fuel(&[0.0], &[1.0], &[0.0], &c, 1.0);
        assert_eq!(one.liters, r);
        assert_eq!(one.per_100km, None);
        let two = vehicle_fuel(&[0.0, 1.0], &[1.0, 1.0], &[0.0, 0.0], &c, 1.0);
        assert_eq!(two.liters, 2.0 * r);
        assert_abs_diff_eq!(two.per_100km.unwrap(), 2.0 * r * 1e5);

        let c = FuelCoefficients::vt_micro();
        let f = vehicle_fuel(&[0.0, 1.2, 2.3], &[10.0, 12.0, 11.0], &[0.5, 2.0, -1.0], &c, 0.1);
        assert_abs_diff_eq!(f.liters, 0.0009518925642409858, epsilon = 1e-16);
    }

    #[test]
    fn traversal_examples() {
        let x: Vec<f64> = (0..=20).map(|i| 10.0 * i as f64).collect();
        assert_abs_diff_eq!(traversal_time(&traj("a", 0.0, 1.0, &x), 0.0, 100.0).unwrap(), 10.0);
        assert_eq!(traversal_time(&traj("a", 3.0, 1.0, &x), 20.0, 50.0).unwrap(), 3.0);
        // 5 m/s for two steps then 10 m/s; segment 2..32
        let x = [0.0, 5.0, 10.0, 20.0, 30.0, 40.0];
        // entry at 0.4 s, exit at 4 + 2/10 = 4.2 s
        assert_abs_diff_eq!(
            traversal_time(&traj("b", 0.0, 1.0, &x), 2.0, 32.0).unwrap(),
            3.8,
            epsilon = 1e-12
        );
        assert_eq!(traversal_time(&traj("b", 0.0, 1.0, &x), 2.0, 60.0), Err(TraversalMiss::NeverExits));
        assert_eq!(traversal_time(&traj("b", 0.0, 1.0, &x), -1.0, 30.0), Err(TraversalMiss::StartsInside));
    }

    #[test]
    fn extrapolated_traversal() {
        let x = [0.0, 5.0, 10.0];
        let v = [5.0, 5.0, 5.0];
        assert_abs_diff_eq!(
            traversal_time_extrapolated(0.0, 1.0, &x, &v, 0.0, 20.0).unwrap(),
            4.0,
            epsilon = 1e-12
        );
        let v0 = [0.0; 3];
        let tt = traversal_time_extrapolated(0.0, 1.0, &[0.0, 0.0, 0.0], &v0, 5.0, 20.0).unwrap();
        assert_abs_diff_eq!(tt, 15.0 / EXTRAPOLATION_MIN_SPEED, epsilon = 1e-9);
    }

    #[test]
    fn eq16_examples() {
        let x: Vec<f64> = (0..5).map(|i| 7.0 * i as f64).collect();
        assert_abs_diff_eq!(eq16_mean_rate(&traj("a", 0.0, 1.0, &x), 1.0, 3.5).unwrap(), 7.0);
        assert_eq!(eq16_mean_rate(&traj("a", 0.0, 1.0, &[2.0; 4]), 0.0, 3.0).unwrap(), 0.0);
        assert_eq!(eq16_mean_rate(&traj("a", 0.0, 1.0, &[0.0, 3.0, 4.0]), 0.0, 2.0).unwrap(), 2.0);
        assert!(eq16_mean_rate(&traj("a", 0.0, 1.0, &[0.0, 3.0, 4.0]), 2.0, 2.0).is_err());
    }

    #[test]
    fn interval_lookup() {
        let s = IntervalSpec::uniform(0.0, 30.0, 3, 0.0, 10.0);
        assert_eq!(s.interval_of(0.0), Some(0));
        assert_eq!(s.interval_of(10.0), Some(1));
        assert_eq!(s.interval_of(30.0), Some(2));
        assert_eq!(s.interval_of(30.5), None);
        assert!(IntervalSpec::uniform(0.0, 30.0, 3, 10.0, 10.0).validate().is_err());
    }

    #[test]
    fn aggregate_examples() {
        let c = FuelCoefficients::vt_micro();
        let spec = IntervalSpec::uniform(0.0, 100.0, 2, 10.0, 130.0);
        let mk = |id: &str, t0: f64, speed: f64| {
            let x: Vec<f64> = (0..60).map(|i| speed * i as f64).collect();
            traj(id, t0, 1.0, &x)
        };
        // entry at t0 + 10/speed; traversal 120/speed
        let trajs = vec![mk("a", 0.0, 10.0), mk("b", 1.0, 12.0), mk("c", 2.0, 120.0 / 14.0), mk("d", 60.0, 10.0)];
        let m = aggregate_macro(&trajs, &spec, &c).unwrap();
        assert_eq!(m.intervals[0].count, 3);
        assert_abs_diff_eq!(m.intervals[0].travel_time.unwrap(), 12.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.intervals[1].travel_time.unwrap(), 12.0, epsilon = 1e-9);
        let single = aggregate_macro(&trajs[3..], &spec, &c).unwrap();
        assert_eq!(single.intervals[1], m.intervals[1]);
        assert_eq!(single.empty_intervals(), vec![0]);
        assert_eq!(single.intervals[0].travel_time, None);

        let twins = vec![mk("a", 0.0, 10.0), mk("a2", 0.0, 10.0)];
        let one = aggregate_macro(&twins[..1], &spec, &c).unwrap();
        let both = aggregate_macro(&twins, &spec, &c).unwrap();
        assert_eq!(one.intervals[0].travel_time, both.intervals[0].travel_time);
        assert_eq!(one.intervals[0].fuel, both.intervals[0].fuel);
    }

    #[test]
    fn histogram_conserves_counts() {
        let v = [-5.0, 0.0, 0.5, 1.0, 9.0, f64::NAN];
        let h = histogram(&v, 4, 0.0, 1.0).unwrap();
        assert_eq!(h.counts.iter().sum::<usize>(), 5);
        assert_eq!(h.counts, vec![2, 0, 1, 2]);
    }
}
