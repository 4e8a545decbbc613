//! SLIC superpixels in CIELAB + xy, with connectivity enforcement.

use std::collections::VecDeque;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ITERATIONS: usize = 10;

/// Per-pixel segment ids, contiguous in `0..n_segments`, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentMap {
    width: u32,
    height: u32,
    labels: Vec<u32>,
    n_segments: usize,
}

impl SegmentMap {
    /// Validates and wraps a label raster. Ids must cover `0..S` with none
    /// missing.
    pub fn from_labels(width: u32, height: u32, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != width as usize * height as usize || labels.is_empty() {
            return Err(Error::Shape(format!(
                "{} labels for a {width}x{height} image",
                labels.len()
            )));
        }
        let n = *labels.iter().max().expect("nonempty") as usize + 1;
        let mut seen = vec![false; n];
        labels.iter().for_each(|&l| seen[l as usize] = true);
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Validation(format!("segment id {missing} is unused")));
        }
        Ok(Self {
            width,
            height,
            labels,
            n_segments: n,
        })
    }

    /// A regular `nx x ny` block grid.
    pub fn grid(width: u32, height: u32, nx: u32, ny: u32) -> Result<Self> {
        if nx == 0 || ny == 0 || nx > width || ny > height {
            return Err(Error::Validation(format!(
                "cannot cut {width}x{height} into {nx}x{ny} blocks"
            )));
        }
        let labels = (0..height)
            .flat_map(|y| {
                (0..width).map(move |x| (y * ny / height) * nx + x * nx / width)
            })
            .collect();
        Self::from_labels(width, height, labels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn n_segments(&self) -> usize {
        self.n_segments
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, x: u32, y: u32) -> u32 {
        self.labels[(y * self.width + x) as usize]
    }

    /// Pixel count per segment.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_segments];
        self.labels.iter().for_each(|&l| s[l as usize] += 1);
        s
    }

    pub(crate) fn check_image(&self, image: &RgbImage) -> Result<()> {
        if image.dimensions() != (self.width, self.height) {
            return Err(Error::Shape(format!(
                "image is {:?}, segment map is {}x{}",
                image.dimensions(),
                self.width,
                self.height
            )));
        }
        Ok(())
    }
}

fn srgb_to_linear(c: u8) -> f64 {
    let c = c as f64 / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// sRGB → CIELAB under D65.
pub fn rgb_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(srgb_to_linear);
    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;
    let f = |t: f64| {
        const D: f64 = 6.0 / 29.0;
        if t > D * D * D {
            t.cbrt()
        } else {
            t / (3.0 * D * D) + 4.0 / 29.0
        }
    };
    let (fx, fy, fz) = (f(x / 0.950_47), f(y), f(z / 1.088_83));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

#[derive(Clone, Copy, Debug)]
struct Center {
    lab: [f64; 3],
    x: f64,
    y: f64,
}

/// SLIC segmentation into roughly `target_segments` superpixels.
/// `compactness` trades colour fidelity (low) against regular shape (high);
/// 10 is the usual choice for CIELAB.
pub fn segment(image: &RgbImage, target_segments: usize, compactness: f64) -> Result<SegmentMap> {
    let (w, h) = image.dimensions();
    if (w as usize) * (h as usize) < 2 {
        return Err(Error::Validation(format!("cannot segment a {w}x{h} image")));
    }
    if target_segments < 2 {
        return Err(Error::Validation("target_segments must be at least 2".into()));
    }
    if !(compactness > 0.0) {
        return Err(Error::Validation("compactness must be positive".into()));
    }
    let (wu, hu) = (w as usize, h as usize);
    let k = target_segments.min(wu * hu);
    let lab: Vec<[f64; 3]> = image.pixels().map(|p| rgb_to_lab(p.0)).collect();

    let nx = ((k as f64 * w as f64 / h as f64).sqrt().round() as usize).clamp(1, wu);
    let ny = ((k as f64 / nx as f64).round() as usize).clamp(1, hu);
    let step = ((wu * hu) as f64 / (nx * ny) as f64).sqrt();

    let grad = |x: usize, y: usize| -> f64 {
        let at = |x: usize, y: usize| lab[y * wu + x];
        let (x0, x1) = (x.saturating_sub(1), (x + 1).min(wu - 1));
        let (y0, y1) = (y.saturating_sub(1), (y + 1).min(hu - 1));
        let d = |a: [f64; 3], b: [f64; 3]| (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>();
        d(at(x1, y), at(x0, y)) + d(at(x, y1), at(x, y0))
    };

    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let cx = (((i as f64 + 0.5) * wu as f64 / nx as f64) as usize).min(wu - 1);
            let cy = (((j as f64 + 0.5) * hu as f64 / ny as f64) as usize).min(hu - 1);
            // Move the seed to the lowest-gradient pixel of its 3x3 patch.
            let mut best = (grad(cx, cy), cx, cy);
            for yy in cy.saturating_sub(1)..=(cy + 1).min(hu - 1) {
                for xx in cx.saturating_sub(1)..=(cx + 1).min(wu - 1) {
                    let g = grad(xx, yy);
                    if g < best.0 {
                        best = (g, xx, yy);
                    }
                }
            }
            let (_, sx, sy) = best;
            centers.push(Center {
                lab: lab[sy * wu + sx],
                x: sx as f64,
                y: sy as f64,
            });
        }
    }

    // Start from the block grid so every pixel has a label even if no
    // center's window reaches it.
    let mut labels: Vec<usize> = (0..hu)
        .flat_map(|y| (0..wu).map(move |x| (y * ny / hu) * nx + x * nx / wu))
        .collect();
    let mut dist = vec![f64::INFINITY; wu * hu];
    let spatial = (compactness / step).powi(2);
    let radius = step.ceil() as isize;

    for _ in 0..ITERATIONS {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        for (ci, c) in centers.iter().enumerate() {
            let (cx, cy) = (c.x.round() as isize, c.y.round() as isize);
            let ys = (cy - radius).max(0) as usize..=((cy + radius) as usize).min(hu - 1);
            for y in ys {
                let xs = (cx - radius).max(0) as usize..=((cx + radius) as usize).min(wu - 1);
                for x in xs {
                    let p = lab[y * wu + x];
                    let dc = (0..3).map(|i| (p[i] - c.lab[i]).powi(2)).sum::<f64>();
                    let ds = (x as f64 - c.x).powi(2) + (y as f64 - c.y).powi(2);
                    let d = dc + ds * spatial;
                    let idx = y * wu + x;
                    if d < dist[idx] {
                        dist[idx] = d;
                        labels[idx] = ci;
                    }
                }
            }
        }
        let mut acc = vec![[0.0f64; 6]; centers.len()];
        for (idx, &l) in labels.iter().enumerate() {
            let p = lab[idx];
            let a = &mut acc[l];
            a[0] += p[0];
            a[1] += p[1];
            a[2] += p[2];
            a[3] += (idx % wu) as f64;
            a[4] += (idx / wu) as f64;
            a[5] += 1.0;
        }
        for (c, a) in centers.iter_mut().zip(&acc) {
            if a[5] > 0.0 {
                *c = Center {
                    lab: [a[0] / a[5], a[1] / a[5], a[2] / a[5]],
                    x: a[3] / a[5],
                    y: a[4] / a[5],
                };
            }
        }
    }

    let relabeled = enforce_connectivity(&labels, wu, hu, (step * step / 4.0) as usize);
    SegmentMap::from_labels(w, h, relabeled)
}

/// Relabels 4-connected components in raster order, folding components
/// smaller than `min_size` into the neighbouring component met first.
fn enforce_connectivity(labels: &[usize], w: usize, h: usize, min_size: usize) -> Vec<u32> {
    const NONE: u32 = u32::MAX;
    let mut out = vec![NONE; w * h];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    let mut members = Vec::new();
    let neighbours = |idx: usize| {
        let (x, y) = (idx % w, idx / w);
        let mut n = [usize::MAX; 4];
        if x > 0 {
            n[0] = idx - 1;
        }
        if y > 0 {
            n[1] = idx - w;
        }
        if x + 1 < w {
            n[2] = idx + 1;
        }
        if y + 1 < h {
            n[3] = idx + w;
        }
        n
    };
    for start in 0..w * h {
        if out[start] != NONE {
            continue;
        }
        // An already-labelled neighbour to absorb a tiny component.
        let adjacent = neighbours(start)
            .into_iter()
            .find(|&n| n != usize::MAX && out[n] != NONE)
            .map(|n| out[n]);
        members.clear();
        out[start] = next;
        queue.push_back(start);
        while let Some(idx) = queue.pop_front() {
            members.push(idx);
            for n in neighbours(idx) {
                if n != usize::MAX && out[n] == NONE && labels[n] == labels[start] {
                    out[n] = next;
                    queue.push_back(n);
                }
            }
        }
        match adjacent {
            Some(a) if members.len() < min_size => members.iter().for_each(|&m| out[m] = a),
            _ => next += 1,
        }
    }
    out
}
