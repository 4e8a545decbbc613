//! LIME-style local explanations over superpixels.
//!
//! The image is cut into segments; random subsets of segments are replaced
//! by their mean colour; the black box scores every perturbed image; and a
//! kernel-weighted ridge regression over the on/off mask vectors ranks the
//! segments by how much they support the target label.

mod provider;
mod slic;

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use provider::{
    EmbeddingPredictor, ProcessClient, ProviderClient, ProviderProcess, ProviderRequest, ProviderResponse,
};
pub use slic::{rgb_to_lab, segment, SegmentMap};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

/// A black box mapping images to per-label probabilities.
pub trait Predictor: Sync {
    fn n_labels(&self) -> usize;

    /// `images.len() x n_labels` probabilities.
    fn predict(&self, images: &[RgbImage]) -> Result<Matrix>;

    /// Whether batches may be scored from several threads at once.
    fn concurrent(&self) -> bool {
        true
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    pub n_samples: usize,
    pub target_segments: usize,
    pub compactness: f64,
    pub kernel_width: f64,
    pub lambda: f64,
    pub top_k: usize,
    pub seed: u64,
    /// Images per predictor call.
    pub batch_size: usize,
    pub jobs: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            target_segments: 50,
            compactness: 10.0,
            kernel_width: 0.25,
            lambda: 1.0,
            top_k: 5,
            seed: 0,
            batch_size: 50,
            jobs: 1,
        }
    }
}

/// Row 0 is all ones (the unperturbed image); the other rows are i.i.d.
/// fair coins per segment.
pub fn sample_masks(n_segments: usize, n_samples: usize, rng: &mut RngStream) -> Result<Matrix> {
    if n_segments == 0 {
        return Err(Error::Validation("no segments to perturb".into()));
    }
    if n_samples < n_segments + 2 {
        return Err(Error::Contract(format!(
            "{n_samples} samples cannot fit a surrogate over {n_segments} segments (need at least {})",
            n_segments + 2
        )));
    }
    Ok(Matrix::from_fn(n_samples, n_segments, |i, _| {
        if i == 0 || rng.bernoulli(0.5) {
            1.0
        } else {
            0.0
        }
    }))
}

/// Mean colour of each segment, rounded to the nearest 8-bit value.
pub fn segment_means(image: &RgbImage, segmap: &SegmentMap) -> Result<Vec<[u8; 3]>> {
    segmap.check_image(image)?;
    let mut acc = vec![[0u64; 4]; segmap.n_segments()];
    for (p, &l) in image.pixels().zip(segmap.labels()) {
        let a = &mut acc[l as usize];
        a[0] += p.0[0] as u64;
        a[1] += p.0[1] as u64;
        a[2] += p.0[2] as u64;
        a[3] += 1;
    }
    Ok(acc
        .iter()
        .map(|a| {
            let n = a[3] as f64;
            [0, 1, 2].map(|c| (a[c] as f64 / n).round() as u8)
        })
        .collect())
}

/// Keeps segments whose mask entry is 1 and fills the rest with `means`.
pub fn composite_with(image: &RgbImage, segmap: &SegmentMap, mask: &[f64], means: &[[u8; 3]]) -> Result<RgbImage> {
    segmap.check_image(image)?;
    if mask.len() != segmap.n_segments() || means.len() != segmap.n_segments() {
        return Err(Error::Shape(format!(
            "mask of {} for {} segments",
            mask.len(),
            segmap.n_segments()
        )));
    }
    let mut out = image.clone();
    for (p, &l) in out.pixels_mut().zip(segmap.labels()) {
        if mask[l as usize] == 0.0 {
            *p = Rgb(means[l as usize]);
        }
    }
    Ok(out)
}

/// [`composite_with`] using each segment's own mean colour as the baseline.
pub fn composite(image: &RgbImage, segmap: &SegmentMap, mask: &[f64]) -> Result<RgbImage> {
    composite_with(image, segmap, mask, &segment_means(image, segmap)?)
}

/// Cosine distance from a binary mask to the all-ones mask; 1 for the
/// all-zero mask.
pub fn mask_distance(mask: &[f64]) -> f64 {
    let on: f64 = mask.iter().sum();
    if on == 0.0 {
        return 1.0;
    }
    let cos = on / (on.sqrt() * (mask.len() as f64).sqrt());
    (1.0 - cos).max(0.0)
}

/// `exp(-d²/σ²)` with `d` from [`mask_distance`].
pub fn kernel_weight(mask: &[f64], width: f64) -> f64 {
    let d = mask_distance(mask);
    (-(d * d) / (width * width)).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Surrogate {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub r2: f64,
}

/// Weighted ridge regression `(XᵀWX + λI)β = XᵀWy` with an unpenalized
/// intercept. R² is computed under the same sample weights.
pub fn fit_surrogate(masks: &Matrix, preds: &[f64], weights: &[f64], lambda: f64) -> Result<Surrogate> {
    let (n, s) = masks.shape();
    if preds.len() != n || weights.len() != n {
        return Err(Error::Shape(format!(
            "{n} masks, {} predictions, {} weights",
            preds.len(),
            weights.len()
        )));
    }
    if n < s + 2 {
        return Err(Error::Contract(format!("{n} samples for {s} segments; need at least {}", s + 2)));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Validation(format!("lambda must be >= 0, got {lambda}")));
    }
    if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::Validation("sample weights must be finite and non-negative".into()));
    }

    // Augmented design: column 0 is the intercept.
    let p = s + 1;
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut b = DVector::<f64>::zeros(p);
    let mut row = vec![0.0; p];
    for i in 0..n {
        row[0] = 1.0;
        row[1..].copy_from_slice(masks.row(i));
        let w = weights[i];
        for r in 0..p {
            let wr = w * row[r];
            if wr == 0.0 {
                continue;
            }
            b[r] += wr * preds[i];
            for c in r..p {
                a[(r, c)] += wr * row[c];
            }
        }
    }
    for r in 0..p {
        for c in 0..r {
            a[(r, c)] = a[(c, r)];
        }
        if r > 0 {
            a[(r, r)] += lambda;
        }
    }
    let singular = || {
        Error::Numeric(if lambda == 0.0 {
            "surrogate normal equations are singular; use lambda > 0".into()
        } else {
            "surrogate normal equations are not positive definite".into()
        })
    };
    let diag: Vec<f64> = (0..p).map(|i| a[(i, i)]).collect();
    let chol = a.cholesky().ok_or_else(singular)?;
    // Rounding can let an exactly singular system through with a tiny
    // pivot; treat pivots that small relative to their column as zero.
    let l = chol.l_dirty();
    if (0..p).any(|i| l[(i, i)] * l[(i, i)] <= 1e-12 * diag[i]) {
        return Err(singular());
    }
    let beta = chol.solve(&b);
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("surrogate solution is not finite; use lambda > 0".into()));
    }

    let intercept = beta[0];
    let coef: Vec<f64> = beta.iter().skip(1).copied().collect();
    let wsum: f64 = weights.iter().sum();
    let ybar = weights.iter().zip(preds).map(|(w, y)| w * y).sum::<f64>() / wsum;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for i in 0..n {
        let fit = intercept + masks.row(i).iter().zip(&coef).map(|(m, c)| m * c).sum::<f64>();
        ss_res += weights[i] * (preds[i] - fit).powi(2);
        ss_tot += weights[i] * (preds[i] - ybar).powi(2);
    }
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(Surrogate {
        weights: coef,
        intercept,
        r2,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub label_index: usize,
    pub label: Option<String>,
    /// Probability of the target label on the unperturbed image.
    pub base_probability: f64,
    pub n_segments: usize,
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Up to `top_k` segments with positive weight, strongest first.
    pub selected: Vec<usize>,
    pub r2: f64,
    pub n_samples: usize,
    pub config: ExplainConfig,
}

/// Segments with positive weight, by descending weight then index.
pub fn top_segments(weights: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
    idx.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

fn check_config(config: &ExplainConfig) -> Result<()> {
    if !(config.kernel_width > 0.0) || config.batch_size == 0 {
        return Err(Error::Validation("kernel_width and batch_size must be positive".into()));
    }
    Ok(())
}

/// Segments `image` with SLIC, then explains as [`explain_segments`].
pub fn explain(
    image: &RgbImage,
    predictor: &dyn Predictor,
    label: usize,
    config: &ExplainConfig,
) -> Result<(SegmentMap, Explanation)> {
    check_config(config)?;
    let segmap = segment(image, config.target_segments, config.compactness)?;
    let e = explain_segments(image, &segmap, predictor, label, config)?;
    Ok((segmap, e))
}

/// The explanation pipeline over a given segmentation.
pub fn explain_segments(
    image: &RgbImage,
    segmap: &SegmentMap,
    predictor: &dyn Predictor,
    label: usize,
    config: &ExplainConfig,
) -> Result<Explanation> {
    check_config(config)?;
    segmap.check_image(image)?;
    if label >= predictor.n_labels() {
        return Err(Error::Validation(format!(
            "label {label} out of range for {} outputs",
            predictor.n_labels()
        )));
    }
    let s = segmap.n_segments();
    let masks = sample_masks(s, config.n_samples, &mut RngStream::new(config.seed))?;
    let means = segment_means(image, segmap)?;

    let starts: Vec<usize> = (0..config.n_samples).step_by(config.batch_size).collect();
    let score = |&start: &usize| -> Result<Vec<f64>> {
        let end = (start + config.batch_size).min(config.n_samples);
        let batch = (start..end)
            .map(|i| composite_with(image, segmap, masks.row(i), &means))
            .collect::<Result<Vec<_>>>()?;
        let probs = predictor.predict(&batch).map_err(|e| match e {
            Error::Predict { sample, message } => Error::Predict { sample: start + sample, message },
            other => Error::Predict { sample: start, message: other.to_string() },
        })?;
        if probs.shape() != (end - start, predictor.n_labels()) {
            return Err(Error::Predict {
                sample: start,
                message: format!(
                    "predictor returned {:?} for {} images and {} labels",
                    probs.shape(),
                    end - start,
                    predictor.n_labels()
                ),
            });
        }
        (0..end - start)
            .map(|r| {
                let p = probs.get(r, label);
                if (0.0..=1.0).contains(&p) {
                    Ok(p)
                } else {
                    Err(Error::Predict { sample: start + r, message: format!("probability {p} outside [0, 1]") })
                }
            })
            .collect()
    };
    let chunks: Vec<Vec<f64>> = if config.jobs > 1 && predictor.concurrent() {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| Error::Validation(format!("cannot start {} workers: {e}", config.jobs)))?;
        pool.install(|| starts.par_iter().map(score).collect::<Result<Vec<_>>>())?
    } else {
        starts.iter().map(score).collect::<Result<Vec<_>>>()?
    };
    let preds: Vec<f64> = chunks.into_iter().flatten().collect();

    let weights: Vec<f64> = masks
        .row_iter()
        .map(|m| kernel_weight(m, config.kernel_width))
        .collect();
    let fit = fit_surrogate(&masks, &preds, &weights, config.lambda)?;
    Ok(Explanation {
        label_index: label,
        label: None,
        base_probability: preds[0],
        n_segments: s,
        selected: top_segments(&fit.weights, config.top_k),
        weights: fit.weights,
        intercept: fit.intercept,
        r2: fit.r2,
        n_samples: config.n_samples,
        config: config.clone(),
    })
}

/// Factor applied to pixels outside the selection.
pub const DIM_FACTOR: f64 = 0.5;
pub const TINT_ALPHA: f64 = 0.5;
const GREEN: [f64; 3] = [0.0, 255.0, 0.0];

/// Blends selected segments halfway towards green and dims the rest.
pub fn render_overlay(image: &RgbImage, segmap: &SegmentMap, selected: &[usize]) -> Result<RgbImage> {
    segmap.check_image(image)?;
    let mut chosen = vec![false; segmap.n_segments()];
    for &s in selected {
        *chosen.get_mut(s).ok_or_else(|| {
            Error::Validation(format!("selected segment {s} out of range"))
        })? = true;
    }
    let mut out = image.clone();
    for (p, &l) in out.pixels_mut().zip(segmap.labels()) {
        let v = p.0.map(|c| c as f64);
        p.0 = if chosen[l as usize] {
            [0, 1, 2].map(|c| ((1.0 - TINT_ALPHA) * v[c] + TINT_ALPHA * GREEN[c]).round() as u8)
        } else {
            v.map(|c| (c * DIM_FACTOR).round() as u8)
        };
    }
    Ok(out)
}

pub fn load_png(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(image::load_from_memory(&bytes)?.to_rgb8())
}

pub fn save_png(image: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_png(image)?).map_err(|e| Error::io(path, e))
}

pub fn encode_png(image: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    image.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}
