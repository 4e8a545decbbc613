//! Optimizer × learning-rate search, sampling grid cells without
//! replacement.

use serde::{Deserialize, Serialize};

use super::optim::OptimizerKind;
use super::{train, TrainConfig};
use crate::data::{Dataset, LabelTaxonomy};
use crate::error::{Error, Result};
use crate::numerics::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub optimizers: Vec<OptimizerKind>,
    pub learning_rates: Vec<f64>,
}

impl Default for SearchSpace {
    /// Adam and SGD × 0.001, 0.002, …, 0.01.
    fn default() -> Self {
        Self {
            optimizers: vec![OptimizerKind::Adam, OptimizerKind::Sgd],
            learning_rates: vec![0.001, 0.002, 0.003, 0.004, 0.005, 0.006, 0.007, 0.008, 0.009, 0.01],
        }
    }
}

impl SearchSpace {
    /// Grid cells in config order: optimizer-major, as listed.
    pub fn cells(&self) -> Vec<(OptimizerKind, f64)> {
        self.optimizers
            .iter()
            .flat_map(|&o| self.learning_rates.iter().map(move |&lr| (o, lr)))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.optimizers.is_empty() || self.learning_rates.is_empty() {
            return Err(Error::Validation("empty search space".into()));
        }
        let mut opts = self.optimizers.clone();
        opts.sort();
        opts.dedup();
        let mut lrs = self.learning_rates.clone();
        lrs.sort_by(f64::total_cmp);
        lrs.dedup();
        if opts.len() != self.optimizers.len() || lrs.len() != self.learning_rates.len() {
            return Err(Error::Validation("search space has duplicate entries".into()));
        }
        if lrs.iter().any(|&lr| !(lr > 0.0 && lr.is_finite())) {
            return Err(Error::Validation("learning rates must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HpoConfig {
    pub trials: usize,
    pub epochs_per_trial: usize,
    pub seed: u64,
    /// Trials run concurrently; 1 runs them in sequence. Results do not
    /// depend on this.
    pub jobs: usize,
}

impl Default for HpoConfig {
    fn default() -> Self {
        Self {
            trials: 10,
            epochs_per_trial: 5,
            seed: 0,
            jobs: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub seed: u64,
    pub score: f64,
    pub diverged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HpoReport {
    /// Sampled trials, in config order.
    pub trials: Vec<TrialResult>,
    pub best: TrialResult,
}

/// `a` beats `b`: higher score, then lower learning rate, then Adam.
fn better(a: &TrialResult, b: &TrialResult) -> bool {
    if a.score != b.score {
        return a.score > b.score;
    }
    if a.learning_rate != b.learning_rate {
        return a.learning_rate < b.learning_rate;
    }
    a.optimizer < b.optimizer
}

/// Samples `trials` distinct cells and scores each with `objective`
/// (optimizer, learning rate, trial seed). A training failure (divergence
/// or non-finite gradient) scores 0; any other error aborts the search.
///
/// Each cell's seed is derived from `seed` and the cell's position in the
/// full grid, so a cell scores the same whichever trials are drawn.
pub fn search_with<F>(
    space: &SearchSpace,
    trials: usize,
    seed: u64,
    jobs: usize,
    objective: F,
) -> Result<HpoReport>
where
    F: Fn(OptimizerKind, f64, u64) -> Result<f64> + Sync,
{
    space.validate()?;
    let cells = space.cells();
    if trials == 0 || trials > cells.len() {
        return Err(Error::Validation(format!(
            "trials must be in 1..={}, got {trials}",
            cells.len()
        )));
    }
    let root = RngStream::new(seed);
    let mut picked = root.child(u64::MAX).permutation(cells.len());
    picked.truncate(trials);
    picked.sort_unstable();

    let run = |&i: &usize| -> Result<TrialResult> {
        let (optimizer, learning_rate) = cells[i];
        let trial_seed = root.child(i as u64).seed();
        let (score, diverged) = match objective(optimizer, learning_rate, trial_seed) {
            Ok(s) if s.is_finite() => (s, false),
            Ok(_) => (0.0, true),
            Err(Error::Diverged { .. } | Error::Training(_)) => (0.0, true),
            Err(e) => return Err(e),
        };
        Ok(TrialResult {
            optimizer,
            learning_rate,
            seed: trial_seed,
            score,
            diverged,
        })
    };

    let results: Vec<TrialResult> = if jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Validation(format!("cannot start {jobs} workers: {e}")))?;
        pool.install(|| picked.par_iter().map(run).collect::<Result<Vec<_>>>())?
    } else {
        picked.iter().map(run).collect::<Result<Vec<_>>>()?
    };

    let mut best = results[0].clone();
    for r in &results[1..] {
        if better(r, &best) {
            best = r.clone();
        }
    }
    Ok(HpoReport {
        trials: results,
        best,
    })
}

/// Trains each sampled configuration for `epochs_per_trial` epochs and
/// scores it by best validation weighted F1.
pub fn hpo_search(
    space: &SearchSpace,
    hpo: &HpoConfig,
    base: &TrainConfig,
    train_set: &Dataset,
    val_set: &Dataset,
    taxonomy: &LabelTaxonomy,
) -> Result<HpoReport> {
    if hpo.epochs_per_trial == 0 {
        return Err(Error::Validation("epochs_per_trial must be at least 1".into()));
    }
    search_with(space, hpo.trials, hpo.seed, hpo.jobs, |optimizer, learning_rate, seed| {
        let cfg = TrainConfig {
            optimizer,
            learning_rate,
            seed,
            epochs: hpo.epochs_per_trial,
            ..base.clone()
        };
        Ok(train(&cfg, train_set, val_set, taxonomy)?.report.best_val_weighted_f1)
    })
}

impl HpoReport {
    /// `base` with the winning optimizer and learning rate.
    pub fn best_config(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            optimizer: self.best.optimizer,
            learning_rate: self.best.learning_rate,
            ..base.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_twenty_cells() {
        let cells = SearchSpace::default().cells();
        assert_eq!(cells.len(), 20);
        assert_eq!(cells[0], (OptimizerKind::Adam, 0.001));
        assert_eq!(cells[19], (OptimizerKind::Sgd, 0.01));
    }

    #[test]
    fn samples_distinct_cells() {
        let r = search_with(&SearchSpace::default(), 10, 7, 1, |_, lr, _| Ok(lr)).unwrap();
        assert_eq!(r.trials.len(), 10);
        let mut keys: Vec<(OptimizerKind, u64)> =
            r.trials.iter().map(|t| (t.optimizer, t.learning_rate.to_bits())).collect();
        keys.dedup();
        assert_eq!(keys.len(), 10);
    }

    #[test]
    fn exhaustive_sweep_winner_is_order_independent() {
        // Score peaks at lr 0.004 regardless of optimizer: tie goes to Adam.
        let obj = |_: OptimizerKind, lr: f64, _: u64| Ok(1.0 - (lr - 0.004).abs());
        let a = search_with(&SearchSpace::default(), 20, 1, 1, obj).unwrap();
        let b = search_with(&SearchSpace::default(), 20, 99, 4, obj).unwrap();
        assert_eq!(a.best.optimizer, OptimizerKind::Adam);
        assert_eq!(a.best.learning_rate, 0.004);
        assert_eq!((a.best.optimizer, a.best.learning_rate), (b.best.optimizer, b.best.learning_rate));
    }

    #[test]
    fn ties_prefer_lower_lr_then_adam() {
        let r = search_with(&SearchSpace::default(), 20, 3, 1, |_, _, _| Ok(0.5)).unwrap();
        assert_eq!((r.best.optimizer, r.best.learning_rate), (OptimizerKind::Adam, 0.001));
        let space = SearchSpace { optimizers: vec![OptimizerKind::Sgd, OptimizerKind::Adam], learning_rates: vec![0.01] };
        let r = search_with(&space, 2, 3, 1, |_, _, _| Ok(0.5)).unwrap();
        assert_eq!(r.best.optimizer, OptimizerKind::Adam);
    }

    #[test]
    fn divergent_trials_score_zero() {
        let r = search_with(&SearchSpace::default(), 20, 5, 2, |_, lr, _| {
            if lr >= 0.01 {
                Err(Error::Diverged { epoch: 1, batch: 1, loss: f64::NAN })
            } else {
                Ok(0.1)
            }
        })
        .unwrap();
        assert!(r.best.learning_rate < 0.01);
        assert!(r.trials.iter().filter(|t| t.diverged).all(|t| t.score == 0.0));
        assert_eq!(r.trials.iter().filter(|t| t.diverged).count(), 2);
    }

    #[test]
    fn parallel_matches_sequential() {
        let obj = |o: OptimizerKind, lr: f64, seed: u64| {
            Ok((seed % 1000) as f64 / 1000.0 + lr + if o == OptimizerKind::Adam { 0.0 } else { 0.5 })
        };
        let a = search_with(&SearchSpace::default(), 12, 11, 1, obj).unwrap();
        let b = search_with(&SearchSpace::default(), 12, 11, 3, obj).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_spaces_and_counts() {
        let empty = SearchSpace { optimizers: vec![], learning_rates: vec![0.1] };
        assert!(matches!(search_with(&empty, 1, 0, 1, |_, _, _| Ok(0.0)), Err(Error::Validation(_))));
        assert!(search_with(&SearchSpace::default(), 21, 0, 1, |_, _, _| Ok(0.0)).is_err());
        let other = search_with(&SearchSpace::default(), 3, 0, 1, |_, _, _| {
            Err(Error::Validation("boom".into()))
        });
        assert!(matches!(other, Err(Error::Validation(_))));
    }
}
