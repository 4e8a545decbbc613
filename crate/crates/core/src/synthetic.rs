//! Linearly separable multi-label embeddings for exercising the trainer.
//!
//! Each label `c` owns a unit direction `w_c`; the directions are mutually
//! orthonormal. A sample draws its labels as fair coins, then places its
//! embedding at signed distance `±(margin + |N(0,1)|)` along every `w_c`
//! (positive iff the label is set) plus standard Gaussian noise in the
//! orthogonal complement. So `y_c = [w_c · x > 0]` holds with margin at
//! least `margin` for every sample and label.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix, RngStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub dim: usize,
    pub n_labels: usize,
    pub margin: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            dim: 512,
            n_labels: 15,
            margin: 1.0,
            seed: 0,
        }
    }
}

/// The dataset plus the `n_labels x dim` matrix of label directions.
#[derive(Clone, Debug)]
pub struct Synthetic {
    pub data: Dataset,
    pub directions: Matrix,
}

fn orthonormal_rows(k: usize, d: usize, rng: &mut RngStream) -> Matrix {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(k);
    while rows.len() < k {
        let mut v: Vec<f64> = (0..d).map(|_| rng.gaussian()).collect();
        // Two passes of Gram-Schmidt keep the basis orthogonal to rounding.
        for _ in 0..2 {
            for r in &rows {
                let p = dot(&v, r);
                v.iter_mut().zip(r).for_each(|(vi, ri)| *vi -= p * ri);
            }
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-8 {
            rows.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    Matrix::from_rows(&rows).expect("rectangular")
}

pub fn generate(spec: &SyntheticSpec) -> Result<Synthetic> {
    if spec.n_labels < 2 || spec.n_labels > spec.dim {
        return Err(Error::Validation(format!(
            "need 2 <= n_labels <= dim, got {} labels in {} dimensions",
            spec.n_labels, spec.dim
        )));
    }
    if !(spec.margin >= 0.0) || spec.n_samples == 0 {
        return Err(Error::Validation("margin must be >= 0 and n_samples positive".into()));
    }
    let root = RngStream::new(spec.seed);
    let w = orthonormal_rows(spec.n_labels, spec.dim, &mut root.child(0));
    let mut sample_rng = root.child(1);

    let (n, d, l) = (spec.n_samples, spec.dim, spec.n_labels);
    let mut x = Matrix::zeros(n, d);
    let mut y = Matrix::zeros(n, l);
    for i in 0..n {
        let mut v: Vec<f64> = (0..d).map(|_| sample_rng.gaussian()).collect();
        for c in 0..l {
            let wc = w.row(c);
            let p = dot(&v, wc);
            v.iter_mut().zip(wc).for_each(|(vi, wi)| *vi -= p * wi);
        }
        for c in 0..l {
            let on = sample_rng.bernoulli(0.5);
            let s = spec.margin + sample_rng.gaussian().abs();
            let s = if on { s } else { -s };
            y.set(i, c, on as u8 as f64);
            v.iter_mut().zip(w.row(c)).for_each(|(vi, wi)| *vi += s * wi);
        }
        x.row_mut(i).copy_from_slice(&v);
    }
    let ids = (0..n).map(|i| format!("synthetic-{i:05}")).collect();
    Ok(Synthetic {
        data: Dataset::from_parts(ids, x, y)?,
        directions: w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_follow_the_linear_rule_with_margin() {
        let spec = SyntheticSpec { n_samples: 200, dim: 32, n_labels: 5, margin: 0.5, seed: 3 };
        let s = generate(&spec).unwrap();
        let scores = s.data.features.matmul_t(&s.directions).unwrap();
        for i in 0..200 {
            for c in 0..5 {
                let z = scores.get(i, c);
                assert!(z.abs() >= 0.5 - 1e-9);
                assert_eq!((z > 0.0) as u8 as f64, s.data.targets.get(i, c));
            }
        }
        let gram = s.directions.matmul_t(&s.directions).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram.get(i, j) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let spec = SyntheticSpec { n_samples: 10, dim: 16, n_labels: 3, ..Default::default() };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.data.features, b.data.features);
        assert_eq!(a.data.targets, b.data.targets);
        assert!(generate(&SyntheticSpec { n_labels: 20, dim: 8, ..spec }).is_err());
    }
}
