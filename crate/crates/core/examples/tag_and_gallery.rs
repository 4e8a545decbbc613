//! From probability vectors to Biophilic tags, dominant labels, the
//! Biophilic flag and a gallery manifest grouped by dominant label.
//!
//! cargo run --example tag_and_gallery

use biophilic::data::LabelTaxonomy;
use biophilic::tagging::{build_gallery, make_tags, CURATION_THRESHOLD};

fn probs(tax: &LabelTaxonomy, set: &[(&str, f64)]) -> Vec<f64> {
    let mut p = vec![0.05; tax.len()];
    for (name, v) in set {
        p[tax.index_of(name).expect("known label")] = *v;
    }
    p
}

fn main() -> biophilic::Result<()> {
    let tax = LabelTaxonomy::biophilic_default();
    let artworks = [
        ("harbour-at-dusk", probs(&tax, &[("Water", 0.91), ("Seascape", 0.84), ("Marine", 0.7)])),
        ("city-square", probs(&tax, &[("Buildings", 0.88), ("Humans", 0.79)])),
        ("orchard", probs(&tax, &[("Plants & Trees", 0.95), ("Natural Landscape", 0.6)])),
        ("storm-over-sea", probs(&tax, &[("Water", 0.72), ("Seasonal & Natural phenomena", 0.81)])),
        ("portrait", probs(&tax, &[("Humans", 0.62)])),
    ];

    let mut results = Vec::new();
    for (id, p) in &artworks {
        let r = make_tags(*id, p, &tax, CURATION_THRESHOLD)?;
        let tags: Vec<&str> = r.tags.iter().map(|t| t.label.as_str()).collect();
        println!("{id:<16} dominant {:<30} {:<28} tags {tags:?}", r.dominant, r.flag_text());
        results.push(r);
    }

    let gallery = build_gallery(&results, &tax, None)?;
    println!("\n{}", serde_json::to_string_pretty(&gallery.metadata)?);
    for g in &gallery.groups {
        let ids: Vec<&str> = g.records.iter().map(|r| r.id.as_str()).collect();
        println!("{:<30} {ids:?}", g.label);
    }
    Ok(())
}
