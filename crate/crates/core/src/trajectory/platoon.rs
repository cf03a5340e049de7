use std::collections::{BTreeMap, HashMap};

use super::{compare_ids, Dataset, Trajectory, TIME_TOLERANCE};
use crate::error::{Error, Result};

/// Leader-to-follower chain. `windows[i]` is the shared time window of
/// `vehicles[i]` (leader) and `vehicles[i + 1]` (follower).
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub vehicles: Vec<String>,
    pub windows: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcludedPair {
    pub leader: String,
    pub follower: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlatoonIndex {
    pub chains: Vec<Chain>,
    pub excluded: Vec<ExcludedPair>,
}

/// Timestamps where both vehicles are observed on the same edge and lane
/// (when both carry that information), as index pairs.
fn shared_samples(leader: &Trajectory, follower: &Trajectory) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < leader.points.len() && j < follower.points.len() {
        let (pl, pf) = (&leader.points[i], &follower.points[j]);
        if (pl.t - pf.t).abs() <= TIME_TOLERANCE {
            let same = |a: &Option<String>, b: &Option<String>| match (a, b) {
                (Some(a), Some(b)) => a == b,
                _ => true,
            };
            if same(&pl.edge, &pf.edge) && same(&pl.lane, &pf.lane) {
                out.push((i, j));
            }
            i += 1;
            j += 1;
        } else if pl.t < pf.t {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// Leader of each vehicle by same-lane position ordering at every timestamp,
/// used when no leader ids are present.
fn infer_leaders(ds: &Dataset) -> HashMap<String, String> {
    let mut by_time: BTreeMap<i64, Vec<(usize, usize)>> = BTreeMap::new();
    let dt = ds.dt.unwrap_or(1.0);
    for (k, traj) in ds.trajectories.iter().enumerate() {
        for (i, p) in traj.points.iter().enumerate() {
            by_time.entry((p.t / dt).round() as i64).or_default().push((k, i));
        }
    }
    let mut votes: HashMap<usize, HashMap<usize, usize>> = HashMap::new();
    for group in by_time.values() {
        let mut lanes: HashMap<(Option<&str>, Option<&str>), Vec<(usize, f64)>> = HashMap::new();
        for &(k, i) in group {
            let p = &ds.trajectories[k].points[i];
            lanes
                .entry((p.edge.as_deref(), p.lane.as_deref()))
                .or_default()
                .push((k, p.x));
        }
        for mut members in lanes.into_values() {
            members.sort_by(|a, b| b.1.total_cmp(&a.1));
            for w in members.windows(2) {
                *votes.entry(w[1].0).or_default().entry(w[0].0).or_default() += 1;
            }
        }
    }
    votes
        .into_iter()
        .filter_map(|(f, v)| {
            v.into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|(l, _)| {
                    (
                        ds.trajectories[f].vehicle_id.clone(),
                        ds.trajectories[l].vehicle_id.clone(),
                    )
                })
        })
        .collect()
}

/// Assembles leader-to-follower chains from leader links (or, when no links
/// exist, from same-lane ordering). Pairs with fewer than two shared samples
/// or with the follower not strictly behind its leader at some shared
/// timestamp are excluded and reported. Every vehicle is a follower in at
/// most one chain; a leader with several followers continues its chain with
/// the follower it shares the longest window with, and heads a new chain for
/// each of the others.
pub fn build_platoons(ds: &Dataset) -> Result<PlatoonIndex> {
    let has_links = ds
        .trajectories
        .iter()
        .any(|t| t.points.iter().any(|p| p.leader_id.is_some()));
    let links: HashMap<String, String> = if has_links {
        ds.trajectories
            .iter()
            .filter_map(|t| t.dominant_leader().map(|l| (t.vehicle_id.clone(), l)))
            .collect()
    } else {
        infer_leaders(ds)
    };

    // cycle detection over the raw links
    for start in links.keys() {
        let mut path = vec![start.clone()];
        let mut cur = start;
        while let Some(next) = links.get(cur) {
            if let Some(pos) = path.iter().position(|v| v == next) {
                let mut cycle = path[pos..].to_vec();
                cycle.push(next.clone());
                return Err(Error::CyclicLeaders(cycle));
            }
            path.push(next.clone());
            cur = next;
        }
    }

    let mut index = PlatoonIndex::default();
    // follower -> (leader, window, shared sample count)
    let mut accepted: BTreeMap<String, (String, (f64, f64), usize)> = BTreeMap::new();
    let mut followers: Vec<&String> = links.keys().collect();
    followers.sort_by(|a, b| compare_ids(a, b));
    for f_id in followers {
        let l_id = &links[f_id];
        let (Some(follower), Some(leader)) = (ds.get(f_id), ds.get(l_id)) else {
            index.excluded.push(ExcludedPair {
                leader: l_id.clone(),
                follower: f_id.clone(),
                reason: "leader not present in dataset".into(),
            });
            continue;
        };
        let shared = shared_samples(leader, follower);
        if shared.len() < 2 {
            index.excluded.push(ExcludedPair {
                leader: l_id.clone(),
                follower: f_id.clone(),
                reason: format!("only {} shared sample(s)", shared.len()),
            });
            continue;
        }
        if let Some(&(i, j)) = shared
            .iter()
            .find(|&&(i, j)| leader.points[i].x <= follower.points[j].x)
        {
            index.excluded.push(ExcludedPair {
                leader: l_id.clone(),
                follower: f_id.clone(),
                reason: format!(
                    "follower not behind leader at t={} ({} >= {})",
                    follower.points[j].t, follower.points[j].x, leader.points[i].x
                ),
            });
            continue;
        }
        let t0 = leader.points[shared[0].0].t;
        let t1 = leader.points[shared[shared.len() - 1].0].t;
        accepted.insert(f_id.clone(), (l_id.clone(), (t0, t1), shared.len()));
    }

    let mut children: BTreeMap<String, Vec<(String, (f64, f64), usize)>> = BTreeMap::new();
    for (f, (l, w, n)) in &accepted {
        children.entry(l.clone()).or_default().push((f.clone(), *w, *n));
    }
    for kids in children.values_mut() {
        kids.sort_by(|a, b| b.2.cmp(&a.2).then(compare_ids(&a.0, &b.0)));
    }

    let mut heads: Vec<String> = children
        .keys()
        .filter(|l| !accepted.contains_key(*l))
        .cloned()
        .collect();
    heads.sort_by(|a, b| compare_ids(a, b));
    let mut queue: std::collections::VecDeque<String> = heads.into();
    while let Some(head) = queue.pop_front() {
        let mut chain = Chain {
            vehicles: vec![head.clone()],
            windows: Vec::new(),
        };
        let mut cur = head;
        while let Some(kids) = children.get(&cur) {
            let (first, w, _) = kids[0].clone();
            chain.vehicles.push(first.clone());
            chain.windows.push(w);
            cur = first;
        }
        index.chains.push(chain);
    }

    // secondary followers head new chains from their shared leader
    let mut extra = Vec::new();
    for (leader, kids) in &children {
        for (f, w, _) in kids.iter().skip(1) {
            let mut chain = Chain {
                vehicles: vec![leader.clone(), f.clone()],
                windows: vec![*w],
            };
            let mut cur = f.clone();
            while let Some(k) = children.get(&cur) {
                let (next, w, _) = k[0].clone();
                chain.vehicles.push(next.clone());
                chain.windows.push(w);
                cur = next;
            }
            extra.push(chain);
        }
    }
    index.chains.extend(extra);
    Ok(index)
}
