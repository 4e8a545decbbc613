//! Compares the decoder's analytic gradients with central finite
//! differences on a random 3×512 batch, sampling a few entries from every
//! parameter tensor.
//!
//! cargo run --release --example gradient_check

use biophilic::decoder::{batch_loss, DecoderParams, TRAINABLE};
use biophilic::numerics::{Matrix, RngStream};

const H: f64 = 1e-5;
const PER_TENSOR: usize = 8;

fn loss(params: &DecoderParams, x: &Matrix, y: &Matrix) -> biophilic::Result<f64> {
    // Train-mode forward on a copy: batch statistics, running stats discarded.
    let mut p = params.clone();
    let (probs, _) = p.forward_train(x, &mut RngStream::new(0))?;
    batch_loss(&probs, y)
}

fn main() -> biophilic::Result<()> {
    let mut rng = RngStream::new(1);
    let mut params = DecoderParams::init_default(15, 1)?;
    params.dropout_p = 0.0;
    let x = Matrix::from_fn(3, 512, |_, _| rng.gaussian());
    let y = Matrix::from_fn(3, 15, |_, _| rng.bernoulli(0.5) as u8 as f64);

    let mut run = params.clone();
    let (probs, cache) = run.forward_train(&x, &mut RngStream::new(0))?;
    let grads = params.backward(&cache, &probs, &y)?;
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();

    let mut worst = 0.0f64;
    for (t, name) in TRAINABLE.iter().enumerate() {
        let len = analytic[t].len();
        let mut tensor_worst = 0.0f64;
        for _ in 0..PER_TENSOR {
            let i = rng.index(len);
            let shifted = |delta: f64| {
                let mut p = params.clone();
                p.trainable_mut()[t][i] += delta;
                loss(&p, &x, &y)
            };
            let numeric = (shifted(H)? - shifted(-H)?) / (2.0 * H);
            let a = analytic[t][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            tensor_worst = tensor_worst.max(rel);
        }
        println!("{name:<11} {len:>7} entries  max relative error {tensor_worst:.2e}");
        worst = worst.max(tensor_worst);
    }
    println!("overall max relative error {worst:.2e} (tolerance 1e-4)");
    Ok(())
}
