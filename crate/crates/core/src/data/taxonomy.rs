use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const DEFAULT_MANIFEST: &str = include_str!("../../data/taxonomy-15.json");
const SEASONAL_MANIFEST: &str = include_str!("../../data/taxonomy-19.json");

/// On-disk manifest layout.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct Manifest {
    labels: Vec<String>,
    #[serde(default)]
    biophilic_set: Vec<String>,
    #[serde(default)]
    seasonal_parent: BTreeMap<String, String>,
}

/// Ordered label names plus the subset that marks an artwork as Biophilic.
///
/// Label order is the column order of the label CSV and of the decoder
/// output; it is never re-sorted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelTaxonomy {
    labels: Vec<String>,
    biophilic: Vec<bool>,
    biophilic_set: Vec<String>,
    seasonal_parent: BTreeMap<String, String>,
}

impl LabelTaxonomy {
    pub fn new(
        labels: Vec<String>,
        biophilic_set: Vec<String>,
        seasonal_parent: BTreeMap<String, String>,
    ) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::Validation(format!(
                "taxonomy needs at least 2 labels, got {}",
                labels.len()
            )));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if l.trim().is_empty() {
                return Err(Error::Validation("empty label name".into()));
            }
            if !seen.insert(l.as_str()) {
                return Err(Error::Validation(format!("duplicate label {l:?}")));
            }
        }
        let mut biophilic = vec![false; labels.len()];
        for name in &biophilic_set {
            let idx = labels.iter().position(|l| l == name).ok_or_else(|| {
                Error::Validation(format!("biophilic_set member {name:?} is not a label"))
            })?;
            biophilic[idx] = true;
        }
        for child in seasonal_parent.keys() {
            if !seen.contains(child.as_str()) {
                return Err(Error::Validation(format!(
                    "seasonal_parent key {child:?} is not a label"
                )));
            }
        }
        Ok(Self {
            labels,
            biophilic,
            biophilic_set,
            seasonal_parent,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text)?;
        Self::new(m.labels, m.biophilic_set, m.seasonal_parent)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// The fifteen-class Biophilic taxonomy, ending with
    /// "Non-significantly Biophilic".
    pub fn biophilic_default() -> Self {
        Self::from_json(DEFAULT_MANIFEST).expect("bundled manifest is valid")
    }

    /// Nineteen labels: the seasonal subclasses replace
    /// "Seasonal & Natural phenomena".
    pub fn biophilic_seasonal() -> Self {
        Self::from_json(SEASONAL_MANIFEST).expect("bundled manifest is valid")
    }

    pub fn to_json(&self) -> String {
        let m = Manifest {
            labels: self.labels.clone(),
            biophilic_set: self.biophilic_set.clone(),
            seasonal_parent: self.seasonal_parent.clone(),
        };
        serde_json::to_string_pretty(&m).expect("manifest serializes")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, idx: usize) -> &str {
        &self.labels[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    pub fn biophilic_set(&self) -> &[String] {
        &self.biophilic_set
    }

    pub fn is_biophilic(&self, idx: usize) -> bool {
        self.biophilic[idx]
    }

    pub fn seasonal_parent(&self, name: &str) -> Option<&str> {
        self.seasonal_parent.get(name).map(String::as_str)
    }

    /// Hex SHA-256 over the compact JSON form, used to stamp generated
    /// manifests.
    pub fn content_hash(&self) -> String {
        let m = Manifest {
            labels: self.labels.clone(),
            biophilic_set: self.biophilic_set.clone(),
            seasonal_parent: self.seasonal_parent.clone(),
        };
        let bytes = serde_json::to_vec(&m).expect("manifest serializes");
        hex_digest(&bytes)
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_manifest_has_fifteen_labels() {
        let t = LabelTaxonomy::biophilic_default();
        assert_eq!(t.len(), 15);
        assert_eq!(t.labels().last().unwrap(), "Non-significantly Biophilic");
        assert_eq!(t.label(0), "Architectural Landscape");
        assert!(t.is_biophilic(t.index_of("Water").unwrap()));
        assert!(!t.is_biophilic(t.index_of("Humans").unwrap()));
        assert!(!t.is_biophilic(t.index_of("Buildings").unwrap()));
    }

    #[test]
    fn seasonal_manifest_flag_set_is_the_curation_list() {
        let t = LabelTaxonomy::biophilic_seasonal();
        assert_eq!(t.len(), 19);
        assert_eq!(t.biophilic_set().len(), 14);
        assert_eq!(t.seasonal_parent("Winter"), Some("Seasonal & Natural phenomena"));
        assert_eq!(t.seasonal_parent("Water"), None);
        assert!(t.index_of("Seasonal & Natural phenomena").is_none());
    }

    #[test]
    fn minimal_two_label_manifest() {
        let t = LabelTaxonomy::from_json(r#"{"labels":["a","b"]}"#).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.biophilic_set().is_empty());
    }

    #[test]
    fn flag_members_accepted() {
        let t = LabelTaxonomy::from_json(
            r#"{"labels":["Marine","Water","Seascape","Still-life","Humans"],
                "biophilic_set":["Marine","Water","Seascape","Still-life"]}"#,
        )
        .unwrap();
        assert_eq!(t.biophilic_set().len(), 4);
    }

    #[test]
    fn invalid_manifests_rejected() {
        for bad in [
            r#"{"labels":["a"]}"#,
            r#"{"labels":["a","a"]}"#,
            r#"{"labels":["a","b"],"biophilic_set":["c"]}"#,
            r#"{"labels":["a","b"],"seasonal_parent":{"c":"a"}}"#,
        ] {
            assert!(
                matches!(LabelTaxonomy::from_json(bad), Err(Error::Validation(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn json_round_trip_and_hash_stability() {
        let t = LabelTaxonomy::biophilic_seasonal();
        let back = LabelTaxonomy::from_json(&t.to_json()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.content_hash(), t.content_hash());
        assert_ne!(t.content_hash(), LabelTaxonomy::biophilic_default().content_hash());
    }
}
