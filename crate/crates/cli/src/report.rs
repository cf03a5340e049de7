use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use cfcal::measures::{
    aggregate_with_membership, assign_intervals, histogram, FuelCoefficients, Histogram, IntervalSpec, MacroOptions,
    MacroMeasures, SeriesView,
};
use cfcal::trajectory::{Kinematics, Trajectory, TIME_TOLERANCE};
use serde::Serialize;

use crate::config::{read_toml, DataConfig};
use crate::manifest::Run;
use crate::svg;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Observed trajectory CSV.
    #[arg(long)]
    pub obs: PathBuf,
    /// Simulated trajectory CSV (same vehicle ids).
    #[arg(long)]
    pub sim: PathBuf,
    /// Interval spec TOML (`boundaries`, `entry_x`, `exit_x`).
    #[arg(long)]
    pub intervals: PathBuf,
    /// Fuel coefficient CSV; defaults to the bundled VT-Micro table.
    #[arg(long)]
    pub fuel: Option<PathBuf>,
    /// Histogram bins.
    #[arg(long, default_value_t = 30)]
    pub bins: usize,
    /// Also write SVG histograms.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Serialize)]
struct Effective<'a> {
    intervals: &'a IntervalSpec,
    bins: usize,
    fuel_sha256: Option<&'a str>,
    vehicles: usize,
}

struct Vehicle {
    id: String,
    t0: f64,
    dt: f64,
    obs: Kinematics,
    sim: Kinematics,
}

/// Samples of `a` and `b` at common timestamps.
fn common(a: &Trajectory, b: &Trajectory) -> anyhow::Result<Option<(f64, Kinematics, Kinematics)>> {
    let (ka, kb) = (a.kinematics_or_derived()?, b.kinematics_or_derived()?);
    let (mut i, mut j) = (0, 0);
    let mut idx = Vec::new();
    while i < ka.t.len() && j < kb.t.len() {
        let d = ka.t[i] - kb.t[j];
        if d.abs() <= TIME_TOLERANCE {
            idx.push((i, j));
            i += 1;
            j += 1;
        } else if d < 0.0 {
            i += 1;
        } else {
            j += 1;
        }
    }
    if idx.is_empty() {
        return Ok(None);
    }
    let pick = |k: &Kinematics, sel: &dyn Fn(&(usize, usize)) -> usize| Kinematics {
        t: idx.iter().map(|p| k.t[sel(p)]).collect(),
        x: idx.iter().map(|p| k.x[sel(p)]).collect(),
        v: idx.iter().map(|p| k.v[sel(p)]).collect(),
        a: idx.iter().map(|p| k.a[sel(p)]).collect(),
    };
    Ok(Some((ka.t[idx[0].0], pick(&ka, &|p| p.0), pick(&kb, &|p| p.1))))
}

fn sq_mean(pairs: impl Iterator<Item = (f64, f64)>) -> (usize, f64) {
    let (n, s) = pairs.fold((0usize, 0.0), |(n, s), (o, m)| (n + 1, s + (o - m) * (o - m)));
    (n, if n == 0 { f64::NAN } else { s / n as f64 })
}

fn views(vs: &[Vehicle], sim: bool) -> Vec<SeriesView<'_>> {
    vs.iter()
        .map(|v| {
            let k = if sim { &v.sim } else { &v.obs };
            SeriesView {
                id: &v.id,
                t0: v.t0,
                dt: v.dt,
                x: &k.x,
                v: &k.v,
                a: &k.a,
            }
        })
        .collect()
}

fn write_hist(path: &Path, obs: &Histogram, sim: &Histogram) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bin_lo", "bin_hi", "observed", "simulated"])?;
    for b in 0..obs.counts.len() {
        w.write_record([
            obs.edges[b].to_string(),
            obs.edges[b + 1].to_string(),
            obs.counts[b].to_string(),
            sim.counts[b].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn pair_hist(obs: &[f64], sim: &[f64], bins: usize) -> anyhow::Result<(Histogram, Histogram)> {
    let (lo, hi) = obs
        .iter()
        .chain(sim)
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let (lo, hi) = if !lo.is_finite() {
        (0.0, 1.0)
    } else if lo < hi {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    };
    Ok((histogram(obs, bins, lo, hi)?, histogram(sim, bins, lo, hi)?))
}

pub fn run(args: &Args, data: &DataConfig, run: &mut Run) -> anyhow::Result<()> {
    run.input(&args.obs)?;
    run.input(&args.sim)?;
    run.input(&args.intervals)?;
    let spec: IntervalSpec = read_toml(&args.intervals)?;
    spec.validate()?;
    let fuel = match &args.fuel {
        Some(p) => {
            run.input(p)?;
            FuelCoefficients::load(p).with_context(|| format!("loading {}", p.display()))?
        }
        None => FuelCoefficients::vt_micro(),
    };
    let obs = data.load_dataset(&args.obs)?;
    let sim = data.load_dataset(&args.sim)?;

    // Simulated followers carry leader ids; a replayed head does not and is
    // left out when any follower is present.
    let followers_only = sim.trajectories.iter().any(|t| t.points.iter().any(|p| p.leader_id.is_some()));
    let by_id: HashMap<&str, &Trajectory> = obs.trajectories.iter().map(|t| (t.vehicle_id.as_str(), t)).collect();
    let mut vehicles = Vec::new();
    for s in &sim.trajectories {
        if followers_only && s.points.iter().all(|p| p.leader_id.is_none()) {
            continue;
        }
        let Some(o) = by_id.get(s.vehicle_id.as_str()) else {
            log::warn!("simulated vehicle {} has no observed counterpart", s.vehicle_id);
            continue;
        };
        match common(o, s)? {
            Some((t0, ko, ks)) => vehicles.push(Vehicle {
                id: s.vehicle_id.clone(),
                t0,
                dt: o.dt()?,
                obs: ko,
                sim: ks,
            }),
            None => log::warn!("vehicle {} has no common timestamps", s.vehicle_id),
        }
    }
    if vehicles.is_empty() {
        bail!("no vehicle appears in both files at common timestamps");
    }
    run.config(
        "report",
        &Effective {
            intervals: &spec,
            bins: args.bins,
            fuel_sha256: fuel.source_hash.as_deref(),
            vehicles: vehicles.len(),
        },
    )?;

    let ov = views(&vehicles, false);
    let sv = views(&vehicles, true);
    let membership = assign_intervals(&ov, &spec);
    let opts = MacroOptions { extrapolate: true };
    let mo: MacroMeasures = aggregate_with_membership(&ov, &membership, &spec, &fuel, opts)?;
    let ms: MacroMeasures = aggregate_with_membership(&sv, &membership, &spec, &fuel, opts)?;

    let micro = |f: fn(&Kinematics) -> &Vec<f64>| {
        sq_mean(vehicles.iter().flat_map(|v| f(&v.obs).iter().copied().zip(f(&v.sim).iter().copied())))
    };
    let macro_ = |f: fn(&cfcal::measures::IntervalMeasure) -> Option<f64>| {
        sq_mean(mo.intervals.iter().zip(&ms.intervals).filter_map(|(o, s)| Some((f(o)?, f(s)?))))
    };
    let rows = [
        ("position", "m", micro(|k| &k.x)),
        ("speed", "m/s", micro(|k| &k.v)),
        ("acceleration", "m/s^2", micro(|k| &k.a)),
        ("travel_time", "s", macro_(|m| m.travel_time)),
        ("fuel", "L/100km", macro_(|m| m.fuel)),
    ];
    let table = run.output("mse_table.csv")?;
    let mut w = csv::Writer::from_path(&table)?;
    w.write_record(["measurement", "unit", "samples", "mse"])?;
    for (name, unit, (n, mse)) in rows {
        let cell = if mse.is_finite() { mse.to_string() } else { String::new() };
        w.write_record([name, unit, &n.to_string(), &cell])?;
    }
    w.flush()?;

    let per = run.output("intervals.csv")?;
    let mut w = csv::Writer::from_path(&per)?;
    w.write_record(["interval", "start", "end", "vehicles", "travel_time_obs", "travel_time_sim", "fuel_obs", "fuel_sim"])?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for (i, (o, s)) in mo.intervals.iter().zip(&ms.intervals).enumerate() {
        w.write_record([
            i.to_string(),
            o.start.to_string(),
            o.end.to_string(),
            o.count.to_string(),
            opt(o.travel_time),
            opt(s.travel_time),
            opt(o.fuel),
            opt(s.fuel),
        ])?;
    }
    w.flush()?;

    let series = |f: fn(&Kinematics) -> &Vec<f64>, sim: bool| -> Vec<f64> {
        vehicles
            .iter()
            .flat_map(|v| f(if sim { &v.sim } else { &v.obs }).iter().copied())
            .collect()
    };
    for (name, label, f) in [
        ("speed", "speed (m/s)", (|k| &k.v) as fn(&Kinematics) -> &Vec<f64>),
        ("accel", "acceleration (m/s^2)", |k| &k.a),
    ] {
        let (ho, hs) = pair_hist(&series(f, false), &series(f, true), args.bins)?;
        write_hist(&run.output(&format!("hist_{name}.csv"))?, &ho, &hs)?;
        if args.svg {
            let chart = svg::histogram_chart(
                &format!("Distribution of {name}"),
                label,
                &ho.edges,
                &[("observed", &ho.counts), ("simulated", &hs.counts)],
            );
            std::fs::write(run.output(&format!("hist_{name}.svg"))?, chart)?;
        }
    }
    Ok(())
}
