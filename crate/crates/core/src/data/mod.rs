//! Label taxonomy, on-disk formats (BEMB embeddings, label CSV) and the
//! seeded train/validation/test split.

mod bemb;
mod labels;
mod split;
mod taxonomy;

use std::collections::HashMap;

pub use bemb::{
    decode_embeddings, encode_embeddings, read_embeddings, write_embeddings, Embedding,
    BEMB_MAGIC, BEMB_VERSION, DEFAULT_DIM,
};
pub use labels::{format_labels, parse_labels, read_labels, write_labels, LabelRecord};
pub use split::{split_dataset, SplitRule, SplitSpec};
pub use taxonomy::LabelTaxonomy;

pub(crate) use taxonomy::hex_digest;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Embeddings joined with their label vectors, row-aligned.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub ids: Vec<String>,
    /// `N x D` embedding matrix.
    pub features: Matrix,
    /// `N x L` binary target matrix.
    pub targets: Matrix,
}

impl Dataset {
    /// Joins embeddings with label records by id, keeping embedding order.
    /// Every embedding must have a label record; extra records are ignored.
    pub fn align(embeddings: &[Embedding], labels: &[LabelRecord]) -> Result<Self> {
        let mut by_id: HashMap<&str, &LabelRecord> = HashMap::with_capacity(labels.len());
        for r in labels {
            if by_id.insert(r.id.as_str(), r).is_some() {
                return Err(Error::Validation(format!("duplicate label id {:?}", r.id)));
            }
        }
        let n_labels = labels.first().map_or(0, |r| r.labels.len());
        let dim = embeddings.first().map_or(0, Embedding::dim);
        let mut ids = Vec::with_capacity(embeddings.len());
        let mut feats = Vec::with_capacity(embeddings.len() * dim);
        let mut targets = Vec::with_capacity(embeddings.len() * n_labels);
        let mut seen = std::collections::HashSet::new();
        for e in embeddings {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Validation(format!("duplicate embedding id {:?}", e.id)));
            }
            if e.dim() != dim {
                return Err(Error::Shape(format!(
                    "embedding {:?} has dimension {}, expected {dim}",
                    e.id,
                    e.dim()
                )));
            }
            let rec = by_id
                .get(e.id.as_str())
                .ok_or_else(|| Error::Validation(format!("no labels for embedding {:?}", e.id)))?;
            if rec.labels.len() != n_labels {
                return Err(Error::Shape(format!("label record {:?} has wrong length", rec.id)));
            }
            ids.push(e.id.clone());
            feats.extend(e.vector.iter().map(|&v| v as f64));
            targets.extend(rec.labels.iter().map(|&b| b as f64));
        }
        let n = ids.len();
        Ok(Self {
            ids,
            features: Matrix::from_vec(n, dim, feats)?,
            targets: Matrix::from_vec(n, n_labels, targets)?,
        })
    }

    pub fn from_parts(ids: Vec<String>, features: Matrix, targets: Matrix) -> Result<Self> {
        if ids.len() != features.rows() || ids.len() != targets.rows() {
            return Err(Error::Shape(format!(
                "{} ids, {} feature rows, {} target rows",
                ids.len(),
                features.rows(),
                targets.rows()
            )));
        }
        Ok(Self {
            ids,
            features,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn n_labels(&self) -> usize {
        self.targets.cols()
    }

    /// Rows whose ids are listed, in the listed order.
    pub fn subset(&self, ids: &[String]) -> Result<Dataset> {
        let pos: HashMap<&str, usize> =
            self.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let idx = ids
            .iter()
            .map(|id| {
                pos.get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::Validation(format!("unknown id {id:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.select(&idx))
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            features: self.features.select_rows(idx),
            targets: self.targets.select_rows(idx),
        }
    }

    /// Label records for the targets, e.g. to write a split's CSV.
    pub fn label_records(&self) -> Vec<LabelRecord> {
        self.ids
            .iter()
            .zip(self.targets.row_iter())
            .map(|(id, row)| LabelRecord {
                id: id.clone(),
                labels: row.iter().map(|&v| (v > 0.5) as u8).collect(),
            })
            .collect()
    }

    pub fn embeddings(&self) -> Vec<Embedding> {
        self.ids
            .iter()
            .zip(self.features.row_iter())
            .map(|(id, row)| Embedding::new(id.clone(), row.iter().map(|&v| v as f32).collect()))
            .collect()
    }
}
