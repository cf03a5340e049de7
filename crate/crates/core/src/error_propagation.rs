//! Closed-form propagation of acceleration errors into speed and position
//! for the unit-step semi-implicit update, and through a platoon driven by
//! the linear car-following law.
//!
//! Errors are `perturbed - reference`. Index 0 of every series is the
//! initial condition and is always zero.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{reference, LinearParams, ModelParams, ModelSpec, VehicleClass};
use crate::simulation::{rollout, FollowerInit, SimConfig, SimResult, VehicleSeries};

/// Compensated summation; keeps the decomposition identities tight when
/// terms span many orders of magnitude.
fn nsum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub fn require_unit_step(dt: f64) -> Result<()> {
    if dt != 1.0 {
        return Err(Error::UnsupportedTimeStep(dt));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorSeries {
    /// Platoon position; 0 is the exogenous head.
    pub n: usize,
    pub eps_a: Vec<f64>,
    pub eps_v: Vec<f64>,
    pub eps_x: Vec<f64>,
    pub r: Vec<f64>,
}

impl ErrorSeries {
    pub fn from_accel(n: usize, eps_a: Vec<f64>, r: Vec<f64>) -> Self {
        ErrorSeries {
            n,
            eps_v: speed_error_closed_form(&eps_a),
            eps_x: position_error_closed_form(&eps_a),
            eps_a,
            r,
        }
    }
}

/// `eps_v[t] = sum_{t'=1..t} eps_a[t']`.
pub fn speed_error_closed_form(eps_a: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(eps_a.len());
    let mut acc = 0.0;
    for (t, &e) in eps_a.iter().enumerate() {
        if t > 0 {
            acc += e;
        }
        out.push(acc);
    }
    out
}

/// `eps_x[t] = sum_{t'=1..t} (t + 1 - t') eps_a[t']`. Evaluated as the
/// weighted sum, not a running sum of speed errors, so an isolated injection
/// comes out exact.
pub fn position_error_closed_form(eps_a: &[f64]) -> Vec<f64> {
    (0..eps_a.len())
        .map(|t| nsum((1..=t).map(|i| (t - i + 1) as f64 * eps_a[i])))
        .collect()
}

fn horizon_of(eps_a: &[f64]) -> Result<usize> {
    match eps_a.len() {
        0 | 1 => Err(Error::Invalid("error series needs at least one step after t = 0".into())),
        n => Ok(n - 1),
    }
}

fn mse_from(series: &[f64]) -> f64 {
    let t = (series.len() - 1) as f64;
    nsum(series[1..].iter().map(|e| e * e)) / t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedDecomposition {
    pub total: f64,
    pub mse_a: f64,
    /// `(1/T) sum_t (T - t) eps_t^2`
    pub convolution: f64,
    /// `(2/T) sum_t eps_t sum_{t' > t} (T - t' + 1) eps_t'`
    pub cross: f64,
}

pub fn mse_speed_decomposition(eps_a: &[f64]) -> Result<SpeedDecomposition> {
    let tt = horizon_of(eps_a)?;
    let t_f = tt as f64;
    let e = eps_a;
    let mse_a = mse_from(e);
    let convolution = nsum((1..=tt).map(|t| (tt - t) as f64 * e[t] * e[t])) / t_f;
    // suffix[t] = sum_{t' > t} (T - t' + 1) eps_t'
    let mut suffix = vec![0.0; tt + 2];
    for t in (1..tt).rev() {
        suffix[t] = suffix[t + 1] + (tt - t) as f64 * e[t + 1];
    }
    let cross = 2.0 * nsum((1..=tt).map(|t| e[t] * suffix[t])) / t_f;
    Ok(SpeedDecomposition {
        total: nsum([mse_a, convolution, cross]),
        mse_a,
        convolution,
        cross,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PositionDecomposition {
    pub total: f64,
    /// `(T+1)^3 MSE^a`
    pub scaled_mse_a: f64,
    /// `(1/T) sum_t [m(m+1)(2m+1)/6 - (T+1)^3] eps_t^2`, `m = T + 1 - t`
    pub diagonal: f64,
    /// `(2/T) sum_t sum_{t' < t'' <= t} (t+1-t')(t+1-t'') eps_t' eps_t''`
    pub cross: f64,
}

/// Position-error MSE split into a scaled acceleration MSE, a diagonal
/// correction and the cross products. The diagonal weight of `eps_t^2` is
/// `sum_{j=1..m} j^2`, not `m^3`, and `(1/T) sum (T+1)^3 eps_t^2` is
/// `(T+1)^3 MSE^a`.
pub fn mse_position_decomposition(eps_a: &[f64]) -> Result<PositionDecomposition> {
    let tt = horizon_of(eps_a)?;
    let t_f = tt as f64;
    let e = eps_a;
    let p = (t_f + 1.0).powi(3);
    let scaled_mse_a = p * mse_from(e);
    let diagonal = nsum((1..=tt).map(|t| {
        let m = (tt + 1 - t) as f64;
        (m * (m + 1.0) * (2.0 * m + 1.0) / 6.0 - p) * e[t] * e[t]
    })) / t_f;
    let mut cross_terms = Vec::with_capacity(tt);
    for t in 1..=tt {
        let w = |s: usize| (t + 1 - s) as f64;
        let mut prefix = 0.0;
        let mut row = Vec::with_capacity(t);
        for s in 1..=t {
            row.push(w(s) * e[s] * prefix);
            prefix += w(s) * e[s];
        }
        cross_terms.push(nsum(row));
    }
    let cross = 2.0 * nsum(cross_terms) / t_f;
    Ok(PositionDecomposition {
        total: nsum([scaled_mse_a, diagonal, cross]),
        scaled_mse_a,
        diagonal,
        cross,
    })
}

fn check_residuals(r: &[Vec<f64>]) -> Result<usize> {
    let Some(first) = r.first() else {
        return Err(Error::Invalid("no vehicles".into()));
    };
    let len = first.len();
    if let Some(bad) = r.iter().find(|s| s.len() != len) {
        return Err(Error::LengthMismatch(bad.len(), len));
    }
    if len < 2 {
        return Err(Error::Invalid("residual series needs at least two entries".into()));
    }
    Ok(len)
}

/// Acceleration errors of every platoon member under residual injection
/// `r[n][t]` (row 0 is the head and must be zero, as must column 0).
///
/// Perturbing a linear-law follower gives
/// `eps[n][t] = r[n][t] + sum_{i<t} (k1 (t - i) - k2) (eps[n][i] - eps[n-1][i])`.
pub fn multi_vehicle_error(r: &[Vec<f64>], k: &LinearParams) -> Result<Vec<Vec<f64>>> {
    let len = check_residuals(r)?;
    if r[0].iter().any(|&v| v != 0.0) || r.iter().any(|s| s[0] != 0.0) {
        return Err(Error::Invalid(
            "residuals of the head vehicle and at t = 0 must be zero".into(),
        ));
    }
    let mut eps = vec![vec![0.0; len]; r.len()];
    for n in 1..r.len() {
        for t in 1..len {
            let mut s = r[n][t];
            for i in 1..t {
                s += (k.k1 * (t - i) as f64 - k.k2) * (eps[n][i] - eps[n - 1][i]);
            }
            eps[n][t] = s;
        }
    }
    Ok(eps)
}

/// Largest violation of the recursion when `eps` is substituted back.
pub fn recursion_residual(eps: &[Vec<f64>], r: &[Vec<f64>], k: &LinearParams) -> f64 {
    let mut worst: f64 = 0.0;
    for n in 1..eps.len() {
        for t in 1..eps[n].len() {
            let mut rhs = r[n][t];
            for i in 1..t {
                rhs += (k.k1 * (t - i) as f64 - k.k2) * (eps[n][i] - eps[n - 1][i]);
            }
            worst = worst.max((eps[n][t] - rhs).abs());
        }
    }
    worst
}

/// Explicit two-level expansion of the recursion in the residuals, in its
/// commonly printed nesting. It truncates the series: exact for `t <= 2`,
/// otherwise accurate to first order in `(k1, k2)`.
pub fn two_level_expansion(r: &[Vec<f64>], k: &LinearParams, n: usize, t: usize) -> f64 {
    let c = |a: usize, b: usize| (a - b) as f64 * k.k1 - k.k2;
    let at = |m: isize, s: usize| if m < 0 { 0.0 } else { r[m as usize][s] };
    let n = n as isize;
    let mut out = at(n, t);
    for t1 in 1..t {
        let mut inner = at(n, t1) - at(n - 1, t1);
        for t2 in 1..t1 {
            inner += c(t, t2) * (at(n - 1, t2) - at(n - 2, t2));
        }
        out += c(t, t1) * inner;
    }
    out
}

/// Errors measured by simulating the platoon twice, with and without the
/// additive residuals, and differencing. Requires `cfg.dt == 1`; the speed
/// floor and gap checks must be disabled for the result to match the closed
/// forms.
pub fn twin_simulation(
    lead: &VehicleSeries,
    followers: &[FollowerInit],
    k: &LinearParams,
    r: &[Vec<f64>],
    cfg: &SimConfig,
) -> Result<Vec<ErrorSeries>> {
    require_unit_step(cfg.dt)?;
    let len = check_residuals(r)?;
    if r.len() != followers.len() + 1 {
        return Err(Error::LengthMismatch(r.len(), followers.len() + 1));
    }
    if len != cfg.horizon + 1 {
        return Err(Error::LengthMismatch(len, cfg.horizon + 1));
    }
    let spec = ModelSpec::uniform(ModelParams::Linear(*k))?;
    let order: Vec<usize> = (0..followers.len()).collect();
    let clean = rollout(0.0, lead.clone(), followers, &spec, cfg, None, &order)?;
    let perturbed = rollout(0.0, lead.clone(), followers, &spec, cfg, Some(&r[1..]), &order)?;
    Ok(diff_results(&clean, &perturbed, r))
}

fn diff_results(clean: &SimResult, pert: &SimResult, r: &[Vec<f64>]) -> Vec<ErrorSeries> {
    let zeros = vec![0.0; clean.lead.x.len()];
    let mut out = vec![ErrorSeries {
        n: 0,
        eps_a: zeros.clone(),
        eps_v: zeros.clone(),
        eps_x: zeros,
        r: r[0].clone(),
    }];
    for (i, (c, p)) in clean.followers.iter().zip(&pert.followers).enumerate() {
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| y - x).collect::<Vec<_>>();
        let mut eps_a = d(&c.a, &p.a);
        eps_a[0] = 0.0;
        out.push(ErrorSeries {
            n: i + 1,
            eps_a,
            eps_v: d(&c.v, &p.v),
            eps_x: d(&c.x, &p.x),
            r: r[i + 1].clone(),
        });
    }
    out
}

/// Residual injection for `followers` vehicles behind a head over
/// `horizon` steps; all zero.
pub fn zero_residuals(followers: usize, horizon: usize) -> Vec<Vec<f64>> {
    vec![vec![0.0; horizon + 1]; followers + 1]
}

pub fn propagate(r: &[Vec<f64>], k: &LinearParams) -> Result<Vec<ErrorSeries>> {
    let eps = multi_vehicle_error(r, k)?;
    Ok(eps
        .into_iter()
        .zip(r)
        .enumerate()
        .map(|(n, (e, r))| ErrorSeries::from_accel(n, e, r.clone()))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinCase {
    /// One vehicle, acceleration error 0.2 at t = 5.
    Single,
    /// Residual 5 on the first follower at t = 1, three followers.
    Platoon,
}

impl std::str::FromStr for BuiltinCase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "single" => Ok(BuiltinCase::Single),
            "platoon" => Ok(BuiltinCase::Platoon),
            other => Err(Error::Config(format!("unknown case `{other}` (single, platoon)"))),
        }
    }
}

pub const SINGLE_HORIZON: usize = 20;
pub const PLATOON_HORIZON: usize = 20;

pub fn single_injection_series(horizon: usize) -> Result<ErrorSeries> {
    if horizon < 5 {
        return Err(Error::Invalid("horizon must reach t = 5".into()));
    }
    let mut eps_a = vec![0.0; horizon + 1];
    eps_a[5] = 0.2;
    Ok(ErrorSeries::from_accel(1, eps_a, vec![0.0; horizon + 1]))
}

pub fn platoon_series(k: &LinearParams, followers: usize, horizon: usize) -> Result<Vec<ErrorSeries>> {
    let mut r = zero_residuals(followers, horizon);
    r[1][1] = 5.0;
    Ok(propagate(&r, k)?.into_iter().skip(1).collect())
}

/// Linear-law parameters used for the four-vehicle case: the small-vehicle
/// set from the shipped microscopic calibration fixture.
pub fn platoon_params() -> LinearParams {
    reference::mic()
        .linear
        .expect("fixture has linear parameters")
        .get(VehicleClass::Small)
        .clone()
}

pub fn builtin_case(case: BuiltinCase) -> Result<Vec<ErrorSeries>> {
    match case {
        BuiltinCase::Single => Ok(vec![single_injection_series(SINGLE_HORIZON)?]),
        BuiltinCase::Platoon => platoon_series(&platoon_params(), 3, PLATOON_HORIZON),
    }
}

/// Long-format CSV with columns `n,t,eps_a,eps_v,eps_x`.
pub fn write_error_csv<W: Write>(out: W, series: &[ErrorSeries]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "t", "eps_a", "eps_v", "eps_x"])?;
    for s in series {
        for t in 0..s.eps_a.len() {
            w.write_record([
                s.n.to_string(),
                t.to_string(),
                s.eps_a[t].to_string(),
                s.eps_v[t].to_string(),
                s.eps_x[t].to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn save_error_csv(path: impl AsRef<Path>, series: &[ErrorSeries]) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_error_csv(std::io::BufWriter::new(f), series)
}
