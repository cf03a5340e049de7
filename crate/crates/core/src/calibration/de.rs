//! Seeded differential evolution over a box.
//!
//! Trial vectors are drawn sequentially from one ChaCha stream and then
//! evaluated in parallel, so results do not depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_POPULATION: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeConfig {
    /// Population size; `None` picks `clamp(10 * dim, 20, 80)`.
    pub population: Option<usize>,
    /// Differential weight range; one value is drawn per generation.
    pub f_min: f64,
    pub f_max: f64,
    pub crossover: f64,
    /// Stop once the population's objective spread falls below this.
    pub tolerance: f64,
}

impl Default for DeConfig {
    fn default() -> Self {
        DeConfig {
            population: None,
            f_min: 0.5,
            f_max: 0.9,
            crossover: 0.9,
            tolerance: 0.0,
        }
    }
}

impl DeConfig {
    pub fn population_for(&self, dim: usize) -> usize {
        self.population
            .unwrap_or_else(|| (10 * dim).clamp(20, 80))
            .max(MIN_POPULATION)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub evaluations: usize,
    pub best: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub trace: Vec<TracePoint>,
}

fn check_bounds(bounds: &[(f64, f64)]) -> Result<()> {
    if bounds.is_empty() {
        return Err(Error::Config("no parameters to search".into()));
    }
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!("bound {i}: need finite lower < upper, got [{lo}, {hi}]")));
        }
    }
    Ok(())
}

fn eval_all<F>(f: &F, xs: &[Vec<f64>]) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    xs.par_iter()
        .map(|x| {
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        })
        .collect()
}

/// Minimises `f` over `bounds` with at most `budget` evaluations.
///
/// Mutation is rand-to-best/1 with binomial crossover. Components leaving
/// the box are put halfway between the parent and the violated bound.
pub fn minimize<F>(f: F, bounds: &[(f64, f64)], budget: usize, seed: u64, cfg: &DeConfig) -> Result<DeOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_bounds(bounds)?;
    let dim = bounds.len();
    let np = cfg.population_for(dim);
    if budget < np {
        return Err(Error::BudgetTooSmall { budget, minimum: np });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pop: Vec<Vec<f64>> = (0..np)
        .map(|_| bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect())
        .collect();
    let mut fit = eval_all(&f, &pop);
    let mut evaluations = np;
    let mut best = argmin(&fit);
    let mut trace = vec![TracePoint { evaluations, best: fit[best] }];

    while evaluations + np <= budget {
        let spread = fit.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - fit[best];
        if spread.is_finite() && spread <= cfg.tolerance {
            break;
        }
        let scale = rng.gen_range(cfg.f_min..=cfg.f_max);
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let (r1, r2, r3) = pick3(&mut rng, np, i);
                let jrand = rng.gen_range(0..dim);
                (0..dim)
                    .map(|j| {
                        let parent = pop[i][j];
                        if j != jrand && rng.gen::<f64>() >= cfg.crossover {
                            return parent;
                        }
                        let v = pop[r1][j]
                            + scale * (pop[best][j] - pop[r1][j])
                            + scale * (pop[r2][j] - pop[r3][j]);
                        let (lo, hi) = bounds[j];
                        if v < lo {
                            0.5 * (parent + lo)
                        } else if v > hi {
                            0.5 * (parent + hi)
                        } else {
                            v
                        }
                    })
                    .collect()
            })
            .collect();
        let trial_fit = eval_all(&f, &trials);
        evaluations += np;
        for (i, (x, v)) in trials.into_iter().zip(trial_fit).enumerate() {
            if v <= fit[i] {
                pop[i] = x;
                fit[i] = v;
            }
        }
        best = argmin(&fit);
        trace.push(TracePoint { evaluations, best: fit[best] });
    }

    Ok(DeOutcome {
        x: pop[best].clone(),
        value: fit[best],
        evaluations,
        trace,
    })
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] < v[best] {
            best = i;
        }
    }
    best
}

fn pick3(rng: &mut ChaCha8Rng, np: usize, exclude: usize) -> (usize, usize, usize) {
    let mut draw = |taken: &[usize]| loop {
        let c = rng.gen_range(0..np);
        if c != exclude && !taken.contains(&c) {
            return c;
        }
    };
    let a = draw(&[]);
    let b = draw(&[a]);
    let c = draw(&[a, b]);
    (a, b, c)
}
