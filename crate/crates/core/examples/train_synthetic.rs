//! Trains the default decoder on generated, linearly separable embeddings
//! with the reference configuration (Adam, lr 0.001, batch 12, 50 epochs)
//! and prints the per-epoch history.
//!
//! cargo run --release --example train_synthetic [-- <epochs>]

use std::time::Instant;

use biophilic::data::{split_dataset, LabelTaxonomy, SplitRule};
use biophilic::synthetic::{generate, SyntheticSpec};
use biophilic::training::{train_observed, TrainConfig, TrainOutputs};

fn main() -> biophilic::Result<()> {
    let epochs = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(50);
    let synth = generate(&SyntheticSpec::default())?;
    let data = synth.data;
    let split = split_dataset(&data.ids, SplitRule::default(), 0)?;
    let train_set = data.subset(&split.train_ids)?;
    let val_set = data.subset(&split.val_ids)?;
    println!(
        "{} samples: {} train / {} val / {} test",
        data.len(),
        train_set.len(),
        val_set.len(),
        split.test_ids.len()
    );

    let taxonomy = LabelTaxonomy::biophilic_default();
    let config = TrainConfig { epochs, ..TrainConfig::default() };
    let start = Instant::now();
    let out = train_observed(&config, &train_set, &val_set, &taxonomy, &TrainOutputs::default(), |rec, _| {
        println!(
            "epoch {:>3}  loss {:.4}  val weighted F1 {:.4}",
            rec.epoch, rec.train_loss, rec.val_weighted_f1
        );
        Ok(())
    })?;
    println!(
        "best epoch {} with weighted F1 {:.4} ({} steps, {:.1?})",
        out.report.best_epoch,
        out.report.best_val_weighted_f1,
        out.report.steps,
        start.elapsed()
    );
    Ok(())
}
