//! Cosine similarity and the contrastive (InfoNCE) loss behind zero-shot
//! matching of image and text embeddings.
//!
//! cargo run --example contrastive_similarity

use biophilic::numerics::{contrastive_loss, cosine_sim, RngStream, DEFAULT_TEMPERATURE};

fn main() -> biophilic::Result<()> {
    let mut rng = RngStream::new(3);
    let mut vector = |dim: usize| -> Vec<f64> { (0..dim).map(|_| rng.gaussian()).collect() };

    // Three "text prompt" embeddings and an image lying close to the second.
    let prompts = ["a painting of the sea", "a painting of a forest", "a painting of a city"];
    let texts: Vec<Vec<f64>> = prompts.iter().map(|_| vector(512)).collect();
    let noise = vector(512);
    let image: Vec<f64> = texts[1].iter().zip(&noise).map(|(t, n)| t + 0.6 * n).collect();

    for (prompt, t) in prompts.iter().zip(&texts) {
        println!("cos(image, {prompt:?}) = {:+.3}", cosine_sim(&image, t)?);
    }
    for tau in [1.0, 0.2, DEFAULT_TEMPERATURE] {
        let right = contrastive_loss(&image, &texts, 1, tau)?;
        let wrong = contrastive_loss(&image, &texts, 0, tau)?;
        println!("tau {tau:<5} loss with the true pair {right:.4}, with a wrong pair {wrong:.4}");
    }
    Ok(())
}
