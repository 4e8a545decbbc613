//! Probability vectors → tags, dominant label, Biophilic flag, and the
//! gallery manifest grouped by dominant label.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::data::{hex_digest, LabelTaxonomy};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Threshold used when scoring predictions.
pub const EVAL_THRESHOLD: f64 = 0.5;
/// Threshold used when curating a gallery.
pub const CURATION_THRESHOLD: f64 = 0.65;

/// `1` where `p > threshold`, else `0`. Equality goes negative.
pub fn binarize(probs: &[f64], threshold: f64) -> Vec<u8> {
    probs.iter().map(|&p| (p > threshold) as u8).collect()
}

pub fn binarize_matrix(probs: &Matrix, threshold: f64) -> Matrix {
    probs.map(|p| if p > threshold { 1.0 } else { 0.0 })
}

/// Index of the largest probability; ties go to the lowest index.
pub fn dominant_index(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

pub fn dominant_label<'t>(probs: &[f64], taxonomy: &'t LabelTaxonomy) -> Result<&'t str> {
    check_len(probs, taxonomy)?;
    Ok(taxonomy.label(dominant_index(probs)))
}

fn check_len(probs: &[f64], taxonomy: &LabelTaxonomy) -> Result<()> {
    if probs.len() != taxonomy.len() {
        return Err(Error::Shape(format!(
            "{} probabilities for {} labels",
            probs.len(),
            taxonomy.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::Shape("empty probability vector".into()));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Validation(format!("probability {p} outside [0, 1]")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tag {
    pub label: String,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TagResult {
    pub id: String,
    /// Labels above the threshold, most probable first.
    pub tags: Vec<Tag>,
    pub dominant: String,
    pub dominant_probability: f64,
    pub probabilities: Vec<f64>,
    pub biophilic: bool,
    pub threshold: f64,
}

impl TagResult {
    pub fn flag_text(&self) -> &'static str {
        if self.biophilic {
            "Biophilic"
        } else {
            "Not significantly Biophilic"
        }
    }
}

pub fn make_tags(
    id: impl Into<String>,
    probs: &[f64],
    taxonomy: &LabelTaxonomy,
    threshold: f64,
) -> Result<TagResult> {
    check_len(probs, taxonomy)?;
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Validation(format!("threshold must be in (0, 1), got {threshold}")));
    }
    let mut above: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] > threshold).collect();
    // Stable sort keeps taxonomy order among equal probabilities.
    above.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    let biophilic = above.iter().any(|&i| taxonomy.is_biophilic(i));
    let dom = dominant_index(probs);
    Ok(TagResult {
        id: id.into(),
        tags: above
            .iter()
            .map(|&i| Tag {
                label: taxonomy.label(i).to_string(),
                probability: probs[i],
            })
            .collect(),
        dominant: taxonomy.label(dom).to_string(),
        dominant_probability: probs[dom],
        probabilities: probs.to_vec(),
        biophilic,
        threshold,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GalleryGroup {
    pub label: String,
    pub records: Vec<TagResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GalleryMetadata {
    pub checkpoint_sha256: Option<String>,
    pub taxonomy_sha256: String,
    pub threshold: f64,
    pub records: usize,
    pub biophilic_records: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GalleryManifest {
    pub metadata: GalleryMetadata,
    /// Non-empty groups in taxonomy order.
    pub groups: Vec<GalleryGroup>,
}

/// sha256 of a checkpoint file's bytes, for [`build_gallery`].
pub fn checkpoint_digest(bytes: &[u8]) -> String {
    hex_digest(bytes)
}

/// Groups `results` by dominant label. Within a group records are ordered
/// by descending dominant probability, then id.
pub fn build_gallery(
    results: &[TagResult],
    taxonomy: &LabelTaxonomy,
    checkpoint_sha256: Option<String>,
) -> Result<GalleryManifest> {
    let first = results
        .first()
        .ok_or_else(|| Error::Validation("gallery needs at least one record".into()))?;
    let mut ids = HashSet::with_capacity(results.len());
    for r in results {
        if !ids.insert(r.id.as_str()) {
            return Err(Error::Validation(format!("duplicate image id {:?}", r.id)));
        }
        if r.threshold != first.threshold {
            return Err(Error::Validation(format!(
                "mixed thresholds {} and {} in one gallery",
                first.threshold, r.threshold
            )));
        }
    }
    let mut buckets: Vec<Vec<TagResult>> = vec![Vec::new(); taxonomy.len()];
    for r in results {
        let idx = taxonomy
            .index_of(&r.dominant)
            .ok_or_else(|| Error::Validation(format!("unknown dominant label {:?}", r.dominant)))?;
        buckets[idx].push(r.clone());
    }
    let groups = buckets
        .into_iter()
        .enumerate()
        .filter(|(_, b)| !b.is_empty())
        .map(|(i, mut records)| {
            records.sort_by(|a, b| {
                b.dominant_probability
                    .total_cmp(&a.dominant_probability)
                    .then_with(|| a.id.cmp(&b.id))
            });
            GalleryGroup {
                label: taxonomy.label(i).to_string(),
                records,
            }
        })
        .collect();
    Ok(GalleryManifest {
        metadata: GalleryMetadata {
            checkpoint_sha256,
            taxonomy_sha256: taxonomy.content_hash(),
            threshold: first.threshold,
            records: results.len(),
            biophilic_records: results.iter().filter(|r| r.biophilic).count(),
        },
        groups,
    })
}
