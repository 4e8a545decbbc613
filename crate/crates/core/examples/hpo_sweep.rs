//! Optimizer × learning-rate search on synthetic embeddings: sampled grid
//! cells, each trained briefly and scored by validation weighted F1.
//!
//! cargo run --release --example hpo_sweep

use biophilic::data::{split_dataset, LabelTaxonomy, SplitRule};
use biophilic::synthetic::{generate, SyntheticSpec};
use biophilic::training::{hpo_search, HpoConfig, SearchSpace, TrainConfig};

fn main() -> biophilic::Result<()> {
    let data = generate(&SyntheticSpec { n_samples: 600, ..SyntheticSpec::default() })?.data;
    let split = split_dataset(&data.ids, SplitRule::default(), 0)?;
    let (train, val) = (data.subset(&split.train_ids)?, data.subset(&split.val_ids)?);

    let hpo = HpoConfig { trials: 8, epochs_per_trial: 3, seed: 0, jobs: 4 };
    let report = hpo_search(
        &SearchSpace::default(),
        &hpo,
        &TrainConfig::default(),
        &train,
        &val,
        &LabelTaxonomy::biophilic_default(),
    )?;
    for t in &report.trials {
        let note = if t.diverged { "  diverged" } else { "" };
        println!("{:<4} lr {:<6} weighted F1 {:.4}{note}", t.optimizer, t.learning_rate, t.score);
    }
    let b = &report.best;
    println!("best: {} at lr {} (F1 {:.4})", b.optimizer, b.learning_rate, b.score);
    Ok(())
}
