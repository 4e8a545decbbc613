//! Writes and reads the BEMB embedding file and the label CSV, aligns them
//! into a dataset and draws a seeded 7:2:1 split.
//!
//! cargo run --example embeddings_io

use biophilic::data::{
    read_embeddings, read_labels, split_dataset, write_embeddings, write_labels, Dataset, LabelTaxonomy, SplitRule,
};
use biophilic::synthetic::{generate, SyntheticSpec};

fn main() -> biophilic::Result<()> {
    let dir = std::env::temp_dir().join(format!("biophilic-embeddings-io-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(biophilic::Error::from)?;
    let tax = LabelTaxonomy::biophilic_default();
    let synth = generate(&SyntheticSpec { n_samples: 50, ..SyntheticSpec::default() })?.data;

    let (emb_path, csv_path) = (dir.join("art.bemb"), dir.join("art.csv"));
    write_embeddings(&emb_path, &synth.embeddings())?;
    write_labels(&csv_path, &synth.label_records(), &tax)?;
    let size = std::fs::metadata(&emb_path).map_err(biophilic::Error::from)?.len();
    println!("{} ({size} bytes), {}", emb_path.display(), csv_path.display());

    let embeddings = read_embeddings(&emb_path)?;
    let labels = read_labels(&csv_path, &tax)?;
    println!("{} embeddings of dimension {}", embeddings.len(), embeddings[0].dim());
    let first = &labels[0];
    let on: Vec<&str> = (0..tax.len()).filter(|&i| first.labels[i] == 1).map(|i| tax.label(i)).collect();
    println!("{} is labelled {on:?}", first.id);

    let data = Dataset::align(&embeddings, &labels)?;
    let split = split_dataset(&data.ids, SplitRule::default(), 42)?;
    println!("split sizes {:?}", split.sizes());
    println!("{}", serde_json::to_string(&split)?.chars().take(120).collect::<String>() + "…");

    std::fs::remove_dir_all(&dir).map_err(biophilic::Error::from)?;
    Ok(())
}
