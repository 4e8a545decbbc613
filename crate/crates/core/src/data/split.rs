use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// How a shuffled id list is cut into train/validation/test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// `floor(r₀N)` train, `floor(r₁N)` validation, remainder test.
    Ratios([f64; 3]),
    /// Exact sizes; must sum to the number of ids.
    Counts([usize; 3]),
}

impl Default for SplitRule {
    fn default() -> Self {
        SplitRule::Ratios([0.7, 0.2, 0.1])
    }
}

impl SplitRule {
    pub fn sizes(&self, n: usize) -> Result<[usize; 3]> {
        match *self {
            SplitRule::Ratios(r) => {
                if r.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                    return Err(Error::Validation(format!("split ratios must be positive: {r:?}")));
                }
                let sum: f64 = r.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::Validation(format!("split ratios sum to {sum}, not 1")));
                }
                // The nudge keeps products like 0.7 * 10 from flooring to 6.
                let floor = |x: f64| ((x * n as f64) + 1e-9).floor() as usize;
                let train = floor(r[0]).min(n);
                let val = floor(r[1]).min(n - train);
                Ok([train, val, n - train - val])
            }
            SplitRule::Counts(c) => {
                if c.iter().sum::<usize>() != n {
                    return Err(Error::Validation(format!(
                        "split counts {c:?} do not sum to {n} ids"
                    )));
                }
                Ok(c)
            }
        }
    }
}

/// A seeded, disjoint train/validation/test partition of image ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub rule: SplitRule,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

impl SplitSpec {
    pub fn sizes(&self) -> [usize; 3] {
        [self.train_ids.len(), self.val_ids.len(), self.test_ids.len()]
    }
}

/// Shuffles `ids` with `RngStream::new(seed)` and cuts them by `rule`.
pub fn split_dataset(ids: &[String], rule: SplitRule, seed: u64) -> Result<SplitSpec> {
    if ids.is_empty() {
        return Err(Error::Validation("cannot split an empty id list".into()));
    }
    let [train, val, _] = rule.sizes(ids.len())?;
    let mut order: Vec<String> = ids.to_vec();
    RngStream::new(seed).shuffle(&mut order);
    let test_ids = order.split_off(train + val);
    let val_ids = order.split_off(train);
    Ok(SplitSpec {
        seed,
        rule,
        train_ids: order,
        val_ids,
        test_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("img{i:05}")).collect()
    }

    #[test]
    fn floor_rule_sizes() {
        let rule = SplitRule::default();
        assert_eq!(rule.sizes(15097).unwrap(), [10567, 3019, 1511]);
        // 0.7*3 = 2.1 -> 2, 0.2*3 = 0.6 -> 0, remainder 1.
        assert_eq!(rule.sizes(3).unwrap(), [2, 0, 1]);
        assert_eq!(rule.sizes(10).unwrap(), [7, 2, 1]);
        assert_eq!(rule.sizes(1).unwrap(), [0, 0, 1]);
    }

    #[test]
    fn explicit_counts_reproduce_published_split() {
        let spec = split_dataset(&ids(15097), SplitRule::Counts([10869, 2718, 1510]), 0).unwrap();
        assert_eq!(spec.sizes(), [10869, 2718, 1510]);
        assert!(SplitRule::Counts([1, 1, 1]).sizes(4).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let a = split_dataset(&ids(10), SplitRule::default(), 9).unwrap();
        let b = split_dataset(&ids(10), SplitRule::default(), 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let c = split_dataset(&ids(10), SplitRule::default(), 10).unwrap();
        assert_ne!(a.train_ids, c.train_ids);
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(
            split_dataset(&[], SplitRule::default(), 0),
            Err(Error::Validation(_))
        ));
        assert!(SplitRule::Ratios([0.5, 0.5, 0.5]).sizes(10).is_err());
        assert!(SplitRule::Ratios([0.9, 0.1, 0.0]).sizes(10).is_err());
    }

    proptest! {
        #[test]
        fn partitions_exactly(n in 1usize..400, seed in any::<u64>()) {
            let all = ids(n);
            let spec = split_dataset(&all, SplitRule::default(), seed).unwrap();
            let mut seen = HashSet::new();
            for id in spec.train_ids.iter().chain(&spec.val_ids).chain(&spec.test_ids) {
                prop_assert!(seen.insert(id.clone()), "duplicate {}", id);
            }
            prop_assert_eq!(seen.len(), n);
            prop_assert_eq!(spec.sizes(), SplitRule::default().sizes(n).unwrap());
        }
    }
}
