use std::path::PathBuf;

use anyhow::Context;
use cfcal::trajectory::{clean_trajectory, read_table};

use crate::config::DataConfig;
use crate::manifest::Run;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Raw trajectory CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Output file name inside the output directory.
    #[arg(long, default_value = "cleaned.csv")]
    pub output: String,
}

pub fn run(args: &Args, data: &DataConfig, run: &mut Run) -> anyhow::Result<()> {
    run.input(&args.input)?;
    run.config("data", data)?;
    let table = read_table(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let corridor = data.corridor()?;
    let ds = table.to_dataset(&data.schema, corridor.as_ref())?;

    let mut cleaned = Vec::with_capacity(ds.trajectories.len());
    let mut flags = Vec::with_capacity(ds.trajectories.len());
    let mut reports = Vec::with_capacity(ds.trajectories.len());
    for traj in &ds.trajectories {
        let (c, r) = clean_trajectory(traj, &data.cleaning).with_context(|| format!("cleaning vehicle {}", traj.vehicle_id))?;
        flags.push((0..c.len()).map(|i| r.removed.contains(&i)).collect::<Vec<_>>());
        cleaned.push(c);
        reports.push((traj, r));
    }
    let out = run.output(&args.output)?;
    table.write_cleaned(&out, &data.schema, &ds, &cleaned, &flags)?;

    let diag = run.output("clean_diagnostics.csv")?;
    let mut w = csv::Writer::from_path(&diag)?;
    w.write_record(["id", "drift_points", "drift_times", "clamped_speeds"])?;
    for (traj, r) in &reports {
        let times: Vec<String> = r.removed.iter().map(|&i| traj.points[i].t.to_string()).collect();
        w.write_record([
            r.vehicle_id.clone(),
            r.removed.len().to_string(),
            times.join(";"),
            r.clamped_speeds.to_string(),
        ])?;
    }
    w.flush()?;
    let total: usize = reports.iter().map(|(_, r)| r.removed.len()).sum();
    log::info!("{} vehicles, {total} drift points removed", reports.len());
    Ok(())
}
