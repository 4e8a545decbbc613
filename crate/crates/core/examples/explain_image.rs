//! LIME-style explanation of a toy "detector" that scores how much of a red
//! disc is visible. The overlay tints the supporting superpixels green.
//!
//! cargo run --release --example explain_image [-- <overlay.png>]

use biophilic::explain::{explain, render_overlay, save_png, ExplainConfig, Predictor};
use biophilic::numerics::Matrix;
use image::{Rgb, RgbImage};

/// Fraction of strongly red pixels, as a one-label probability.
struct RedDetector;

impl Predictor for RedDetector {
    fn n_labels(&self) -> usize {
        1
    }

    fn predict(&self, images: &[RgbImage]) -> biophilic::Result<Matrix> {
        let rows: Vec<[f64; 1]> = images
            .iter()
            .map(|img| {
                let red = img.pixels().filter(|p| p.0[0] > 180 && p.0[1] < 90).count();
                [(red as f64 / 1500.0).min(1.0)]
            })
            .collect();
        Matrix::from_rows(&rows)
    }
}

fn main() -> biophilic::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "explain_overlay.png".into());
    let image = RgbImage::from_fn(120, 80, |x, y| {
        let (dx, dy) = (x as f64 - 85.0, y as f64 - 35.0);
        if dx * dx + dy * dy < 18.0 * 18.0 {
            Rgb([220, 40, 30])
        } else {
            // A muted background with some texture.
            Rgb([60 + (x % 7) as u8 * 4, 90 + (y % 5) as u8 * 6, 70])
        }
    });

    let config = ExplainConfig { n_samples: 500, target_segments: 40, top_k: 4, ..ExplainConfig::default() };
    let (segmap, e) = explain(&image, &RedDetector, 0, &config)?;
    println!(
        "{} superpixels, base probability {:.3}, surrogate R² {:.3}",
        e.n_segments, e.base_probability, e.r2
    );
    for &s in &e.selected {
        println!("segment {s:>3}  weight {:+.4}  ({} px)", e.weights[s], segmap.sizes()[s]);
    }
    save_png(&render_overlay(&image, &segmap, &e.selected)?, &out)?;
    println!("overlay written to {out}");
    Ok(())
}
