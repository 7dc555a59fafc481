use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SteerError};
use crate::rng::stream;

/// Cross-entropy method with a diagonal Gaussian search distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CemConfig {
    pub population: usize,
    pub elite_frac: f64,
    pub iterations: usize,
    pub init_std: f64,
    pub min_std: f64,
    /// Weight of the elite statistics in the mean and std update.
    pub smoothing: f64,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self { population: 64, elite_frac: 0.1, iterations: 40, init_std: 0.5, min_std: 0.02, smoothing: 0.8 }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4 {
            return Err(SteerError::Config("population must be at least 4".into()));
        }
        if !(self.elite_frac > 0.0 && self.elite_frac < 1.0) {
            return Err(SteerError::Config("elite fraction must be in (0, 1)".into()));
        }
        if !(self.smoothing > 0.0 && self.smoothing <= 1.0) {
            return Err(SteerError::Config("smoothing must be in (0, 1]".into()));
        }
        if !(self.init_std > 0.0 && self.min_std >= 0.0) {
            return Err(SteerError::Config("standard deviations must be positive".into()));
        }
        Ok(())
    }

    pub fn elite_count(&self) -> usize {
        ((self.elite_frac * self.population as f64).ceil() as usize).clamp(2, self.population)
    }
}

/// Score of one candidate, averaged over its episodes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Scored {
    pub score: f64,
    pub gap: f64,
    pub cost: f64,
}

/// One row of the training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub mean_objective: f64,
    pub max_objective: f64,
    pub mean_gap: f64,
    pub mean_cost: f64,
    /// Score of the current search mean.
    pub center_objective: f64,
}

#[derive(Clone, Debug)]
pub struct CemResult {
    pub mean: Vec<f64>,
    pub log: Vec<IterationLog>,
    /// Every candidate in some iteration scored non-finite; `mean` is the last valid one.
    pub diverged: bool,
}

/// Maximizes `evaluate(params, iteration)`. Candidate 0 of each iteration is the
/// current mean. `after` sees the updated mean and may stop training by returning false.
pub fn cem<F, A>(init: Vec<f64>, cfg: &CemConfig, seed: u64, evaluate: F, mut after: A) -> Result<CemResult>
where
    F: Fn(&[f64], usize) -> Result<Scored> + Sync,
    A: FnMut(usize, &[f64], &IterationLog) -> Result<bool>,
{
    cfg.validate()?;
    let dim = init.len();
    let mut mean = init;
    let mut std = vec![cfg.init_std; dim];
    let mut log = Vec::with_capacity(cfg.iterations);
    let n_elite = cfg.elite_count();

    for it in 0..cfg.iterations {
        let mut rng = stream(seed, &[it as u64]);
        let mut cands = vec![mean.clone()];
        for _ in 1..cfg.population {
            cands.push(
                mean.iter()
                    .zip(&std)
                    .map(|(m, s)| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        m + s * z
                    })
                    .collect(),
            );
        }
        let scored = cands
            .par_iter()
            .map(|c| match evaluate(c, it) {
                Ok(sc) if sc.score.is_finite() => Ok(Some(sc)),
                Ok(_) => Ok(None),
                Err(e) if e.is_numeric() => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<Vec<_>>>()?;

        let mut order: Vec<usize> = (0..cands.len()).filter(|&i| scored[i].is_some()).collect();
        if order.is_empty() {
            return Ok(CemResult { mean, log, diverged: true });
        }
        let sc = |i: usize| scored[i].expect("finite");
        order.sort_by(|&a, &b| sc(b).score.total_cmp(&sc(a).score));
        let valid = order.len() as f64;
        let row = IterationLog {
            iteration: it,
            mean_objective: order.iter().map(|&i| sc(i).score).sum::<f64>() / valid,
            max_objective: sc(order[0]).score,
            mean_gap: order.iter().map(|&i| sc(i).gap).sum::<f64>() / valid,
            mean_cost: order.iter().map(|&i| sc(i).cost).sum::<f64>() / valid,
            center_objective: scored[0].map_or(f64::NEG_INFINITY, |s| s.score),
        };

        let elites = &order[..n_elite.min(order.len())];
        let k = elites.len() as f64;
        let a = cfg.smoothing;
        for d in 0..dim {
            let em = elites.iter().map(|&i| cands[i][d]).sum::<f64>() / k;
            let ev = elites.iter().map(|&i| (cands[i][d] - em).powi(2)).sum::<f64>() / k;
            mean[d] = (1.0 - a) * mean[d] + a * em;
            std[d] = ((1.0 - a) * std[d] + a * ev.sqrt()).max(cfg.min_std);
        }
        log.push(row);
        if !after(it, &mean, &row)? {
            break;
        }
    }
    Ok(CemResult { mean, log, diverged: false })
}
