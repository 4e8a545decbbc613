//! The classification head: three fully connected layers, the first two
//! followed by batch normalization, ReLU and dropout, and a sigmoid output.
//!
//! ```text
//! x ─ fc1 ─ bn1 ─ relu ─ dropout ─ fc2 ─ bn2 ─ relu ─ dropout ─ fc3 ─ sigmoid
//!   D→256                          256→128                      128→L
//! ```
//!
//! Gradients are exact for the mean binary cross-entropy over all `B·L`
//! outputs, including the path through the batch mean and variance.

mod checkpoint;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint,
    OptimizerSection, BDEC_MAGIC, BDEC_VERSION,
};

use crate::error::{Error, Result};
use crate::numerics::{bce_loss, sigmoid, Matrix, RngStream};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const DEFAULT_DROPOUT: f64 = 0.2;
pub const HIDDEN: [usize; 2] = [256, 128];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Layer sizes of a decoder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecoderShape {
    pub input_dim: usize,
    pub hidden: [usize; 2],
    pub n_labels: usize,
}

impl DecoderShape {
    pub fn new(input_dim: usize, n_labels: usize) -> Self {
        Self {
            input_dim,
            hidden: HIDDEN,
            n_labels,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `in x out`, so a forward pass is `x · W + b`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    fn kaiming_uniform(fan_in: usize, fan_out: usize, rng: &mut RngStream) -> Self {
        let bound = (6.0 / fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.uniform_range(-bound, bound))
            .collect();
        Self {
            weight: Matrix::from_vec(fan_in, fan_out, data).expect("sized above"),
            bias: vec![0.0; fan_out],
        }
    }

    fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut z = x.matmul(&self.weight)?;
        z.add_row_vector(&self.bias);
        Ok(z)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm {
    fn new(n: usize) -> Self {
        Self {
            gamma: vec![1.0; n],
            beta: vec![0.0; n],
            running_mean: vec![0.0; n],
            running_var: vec![1.0; n],
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
        }
    }

    fn forward_eval(&self, z: &Matrix) -> Matrix {
        let mut out = z.clone();
        let cols = z.cols();
        let scale: Vec<f64> = (0..cols)
            .map(|j| self.gamma[j] / (self.running_var[j] + self.eps).sqrt())
            .collect();
        for row in out.as_mut_slice().chunks_exact_mut(cols) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.running_mean[j]) * scale[j] + self.beta[j];
            }
        }
        out
    }

    /// Normalizes with batch statistics and folds them into the running
    /// estimates (unbiased variance, as the running estimate is meant for
    /// inference). Returns the output, the normalized input and `1/σ`.
    fn forward_train(&mut self, z: &Matrix) -> (Matrix, Matrix, Vec<f64>) {
        let (b, cols) = z.shape();
        let bf = b as f64;
        let mean: Vec<f64> = z.col_sums().into_iter().map(|s| s / bf).collect();
        let mut var = vec![0.0; cols];
        for row in z.row_iter() {
            for j in 0..cols {
                let d = row[j] - mean[j];
                var[j] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= bf);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();

        let mut xhat = z.clone();
        let mut out = z.clone();
        for (xr, or) in xhat
            .as_mut_slice()
            .chunks_exact_mut(cols)
            .zip(out.as_mut_slice().chunks_exact_mut(cols))
        {
            for j in 0..cols {
                xr[j] = (xr[j] - mean[j]) * inv_std[j];
                or[j] = self.gamma[j] * xr[j] + self.beta[j];
            }
        }

        let m = self.momentum;
        let unbias = bf / (bf - 1.0);
        for j in 0..cols {
            self.running_mean[j] = (1.0 - m) * self.running_mean[j] + m * mean[j];
            self.running_var[j] = (1.0 - m) * self.running_var[j] + m * var[j] * unbias;
        }
        (out, xhat, inv_std)
    }
}

/// Learnable parameters and batch-norm state of the decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams {
    pub fc1: Linear,
    pub bn1: BatchNorm,
    pub fc2: Linear,
    pub bn2: BatchNorm,
    pub fc3: Linear,
    pub dropout_p: f64,
}

/// Names of the trainable tensors, in declaration order.
pub const TRAINABLE: [&str; 10] = [
    "fc1.weight",
    "fc1.bias",
    "bn1.gamma",
    "bn1.beta",
    "fc2.weight",
    "fc2.bias",
    "bn2.gamma",
    "bn2.beta",
    "fc3.weight",
    "fc3.bias",
];

/// Per-layer intermediate values of a forward pass, needed by
/// [`DecoderParams::backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub mode: Mode,
    input: Matrix,
    xhat1: Matrix,
    inv_std1: Vec<f64>,
    pre_relu1: Matrix,
    drop1: Vec<f64>,
    out1: Matrix,
    xhat2: Matrix,
    inv_std2: Vec<f64>,
    pre_relu2: Matrix,
    drop2: Vec<f64>,
    out2: Matrix,
}

/// Gradients with the same layout as the trainable parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub fc1_weight: Matrix,
    pub fc1_bias: Vec<f64>,
    pub bn1_gamma: Vec<f64>,
    pub bn1_beta: Vec<f64>,
    pub fc2_weight: Matrix,
    pub fc2_bias: Vec<f64>,
    pub bn2_gamma: Vec<f64>,
    pub bn2_beta: Vec<f64>,
    pub fc3_weight: Matrix,
    pub fc3_bias: Vec<f64>,
}

impl Gradients {
    /// Flat views in [`TRAINABLE`] order.
    pub fn tensors(&self) -> [&[f64]; 10] {
        [
            self.fc1_weight.as_slice(),
            &self.fc1_bias,
            &self.bn1_gamma,
            &self.bn1_beta,
            self.fc2_weight.as_slice(),
            &self.fc2_bias,
            &self.bn2_gamma,
            &self.bn2_beta,
            self.fc3_weight.as_slice(),
            &self.fc3_bias,
        ]
    }
}

impl DecoderParams {
    /// Kaiming-uniform weights (bound `√(6/fan_in)`), zero biases, identity
    /// batch norm. Deterministic in `seed`.
    pub fn init(shape: DecoderShape, seed: u64) -> Result<Self> {
        if shape.n_labels < 2 {
            return Err(Error::Validation(format!(
                "decoder needs at least 2 labels, got {}",
                shape.n_labels
            )));
        }
        if shape.input_dim == 0 || shape.hidden.contains(&0) {
            return Err(Error::Validation(format!("degenerate decoder shape {shape:?}")));
        }
        let mut rng = RngStream::new(seed);
        let [h1, h2] = shape.hidden;
        let fc1 = Linear::kaiming_uniform(shape.input_dim, h1, &mut rng);
        let fc2 = Linear::kaiming_uniform(h1, h2, &mut rng);
        let fc3 = Linear::kaiming_uniform(h2, shape.n_labels, &mut rng);
        Ok(Self {
            fc1,
            bn1: BatchNorm::new(h1),
            fc2,
            bn2: BatchNorm::new(h2),
            fc3,
            dropout_p: DEFAULT_DROPOUT,
        })
    }

    /// The default 512 → 256 → 128 → `n_labels` decoder.
    pub fn init_default(n_labels: usize, seed: u64) -> Result<Self> {
        Self::init(DecoderShape::new(crate::data::DEFAULT_DIM, n_labels), seed)
    }

    pub fn shape(&self) -> DecoderShape {
        DecoderShape {
            input_dim: self.fc1.weight.rows(),
            hidden: [self.fc1.weight.cols(), self.fc2.weight.cols()],
            n_labels: self.fc3.weight.cols(),
        }
    }

    pub fn n_labels(&self) -> usize {
        self.fc3.weight.cols()
    }

    pub fn trainable(&self) -> [&[f64]; 10] {
        [
            self.fc1.weight.as_slice(),
            &self.fc1.bias,
            &self.bn1.gamma,
            &self.bn1.beta,
            self.fc2.weight.as_slice(),
            &self.fc2.bias,
            &self.bn2.gamma,
            &self.bn2.beta,
            self.fc3.weight.as_slice(),
            &self.fc3.bias,
        ]
    }

    pub fn trainable_mut(&mut self) -> [&mut [f64]; 10] {
        [
            self.fc1.weight.as_mut_slice(),
            &mut self.fc1.bias,
            &mut self.bn1.gamma,
            &mut self.bn1.beta,
            self.fc2.weight.as_mut_slice(),
            &mut self.fc2.bias,
            &mut self.bn2.gamma,
            &mut self.bn2.beta,
            self.fc3.weight.as_mut_slice(),
            &mut self.fc3.bias,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.trainable().iter().all(|t| t.iter().all(|v| v.is_finite()))
            && [&self.bn1, &self.bn2].iter().all(|bn| {
                bn.running_mean.iter().all(|v| v.is_finite())
                    && bn.running_var.iter().all(|v| v.is_finite() && *v > 0.0)
            })
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.fc1.weight.rows() {
            return Err(Error::Shape(format!(
                "batch has {} features, decoder expects {}",
                batch.cols(),
                self.fc1.weight.rows()
            )));
        }
        if batch.rows() == 0 {
            return Err(Error::Contract("empty batch".into()));
        }
        Ok(())
    }

    /// Inference: running batch-norm statistics, no dropout. Returns `B x L`
    /// probabilities.
    pub fn predict(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_input(batch)?;
        let mut h = self.fc1.forward(batch)?;
        h = self.bn1.forward_eval(&h).map(relu);
        h = self.fc2.forward(&h)?;
        h = self.bn2.forward_eval(&h).map(relu);
        Ok(self.fc3.forward(&h)?.map(sigmoid))
    }

    /// Dispatches on `mode`. Train mode updates the running statistics and
    /// draws dropout masks from `rng`; eval mode leaves both untouched.
    pub fn forward(
        &mut self,
        batch: &Matrix,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<(Matrix, ForwardCache)> {
        match mode {
            Mode::Train => self.forward_train(batch, rng),
            Mode::Eval => {
                let probs = self.predict(batch)?;
                let empty = Matrix::zeros(0, 0);
                let cache = ForwardCache {
                    mode: Mode::Eval,
                    input: empty.clone(),
                    xhat1: empty.clone(),
                    inv_std1: Vec::new(),
                    pre_relu1: empty.clone(),
                    drop1: Vec::new(),
                    out1: empty.clone(),
                    xhat2: empty.clone(),
                    inv_std2: Vec::new(),
                    pre_relu2: empty.clone(),
                    drop2: Vec::new(),
                    out2: empty,
                };
                Ok((probs, cache))
            }
        }
    }

    /// Training forward pass with batch statistics and inverted dropout.
    pub fn forward_train(
        &mut self,
        batch: &Matrix,
        rng: &mut RngStream,
    ) -> Result<(Matrix, ForwardCache)> {
        self.check_input(batch)?;
        if batch.rows() < 2 {
            return Err(Error::Contract(
                "train-mode forward needs at least 2 rows for batch statistics".into(),
            ));
        }
        let p = self.dropout_p;

        let z1 = self.fc1.forward(batch)?;
        let (pre_relu1, xhat1, inv_std1) = self.bn1.forward_train(&z1);
        let drop1 = dropout_mask(pre_relu1.rows() * pre_relu1.cols(), p, rng);
        let out1 = relu_dropout(&pre_relu1, &drop1);

        let z2 = self.fc2.forward(&out1)?;
        let (pre_relu2, xhat2, inv_std2) = self.bn2.forward_train(&z2);
        let drop2 = dropout_mask(pre_relu2.rows() * pre_relu2.cols(), p, rng);
        let out2 = relu_dropout(&pre_relu2, &drop2);

        let probs = self.fc3.forward(&out2)?.map(sigmoid);
        let cache = ForwardCache {
            mode: Mode::Train,
            input: batch.clone(),
            xhat1,
            inv_std1,
            pre_relu1,
            drop1,
            out1,
            xhat2,
            inv_std2,
            pre_relu2,
            drop2,
            out2,
        };
        Ok((probs, cache))
    }

    /// Gradients of `loss(probs, targets)` with respect to every trainable
    /// tensor, given the cache of the train-mode forward that produced
    /// `probs`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        probs: &Matrix,
        targets: &Matrix,
    ) -> Result<Gradients> {
        if cache.mode != Mode::Train {
            return Err(Error::Contract("backward needs a train-mode forward cache".into()));
        }
        if probs.shape() != targets.shape() {
            return Err(Error::Shape(format!(
                "probabilities {:?} vs targets {:?}",
                probs.shape(),
                targets.shape()
            )));
        }
        if probs.rows() != cache.input.rows() || probs.cols() != self.n_labels() {
            return Err(Error::Shape(format!(
                "probabilities {:?} do not match the cached batch of {} rows and {} labels",
                probs.shape(),
                cache.input.rows(),
                self.n_labels()
            )));
        }

        let dz3 = output_gradient(probs, targets);
        let fc3_weight = cache.out2.t_matmul(&dz3)?;
        let fc3_bias = dz3.col_sums();

        let d_out2 = dz3.matmul_t(&self.fc3.weight)?;
        let d_pre2 = relu_dropout_backward(&d_out2, &cache.pre_relu2, &cache.drop2);
        let (dz2, bn2_gamma, bn2_beta) =
            batchnorm_backward(&d_pre2, &cache.xhat2, &cache.inv_std2, &self.bn2.gamma);
        let fc2_weight = cache.out1.t_matmul(&dz2)?;
        let fc2_bias = dz2.col_sums();

        let d_out1 = dz2.matmul_t(&self.fc2.weight)?;
        let d_pre1 = relu_dropout_backward(&d_out1, &cache.pre_relu1, &cache.drop1);
        let (dz1, bn1_gamma, bn1_beta) =
            batchnorm_backward(&d_pre1, &cache.xhat1, &cache.inv_std1, &self.bn1.gamma);
        let fc1_weight = cache.input.t_matmul(&dz1)?;
        let fc1_bias = dz1.col_sums();

        Ok(Gradients {
            fc1_weight,
            fc1_bias,
            bn1_gamma,
            bn1_beta,
            fc2_weight,
            fc2_bias,
            bn2_gamma,
            bn2_beta,
            fc3_weight,
            fc3_bias,
        })
    }
}

/// Mean binary cross-entropy over every entry of a `B x L` batch.
pub fn batch_loss(probs: &Matrix, targets: &Matrix) -> Result<f64> {
    if probs.shape() != targets.shape() {
        return Err(Error::Shape(format!(
            "probabilities {:?} vs targets {:?}",
            probs.shape(),
            targets.shape()
        )));
    }
    bce_loss(targets.as_slice(), probs.as_slice())
}

/// `∂loss/∂logits` for sigmoid outputs under [`batch_loss`]: `(P − Y) / (B·L)`.
pub fn output_gradient(probs: &Matrix, targets: &Matrix) -> Matrix {
    let n = (probs.rows() * probs.cols()) as f64;
    let data = probs
        .as_slice()
        .iter()
        .zip(targets.as_slice())
        .map(|(p, y)| (p - y) / n)
        .collect();
    Matrix::from_vec(probs.rows(), probs.cols(), data).expect("same shape")
}

/// Propagates NaN, so a blow-up upstream is visible in the output.
#[inline]
fn relu(x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else {
        x
    }
}

/// Inverted-dropout multipliers: `1/(1-p)` for kept units, 0 for dropped.
fn dropout_mask(n: usize, p: f64, rng: &mut RngStream) -> Vec<f64> {
    if p <= 0.0 {
        return vec![1.0; n];
    }
    let keep = 1.0 - p;
    let scale = 1.0 / keep;
    (0..n)
        .map(|_| if rng.bernoulli(keep) { scale } else { 0.0 })
        .collect()
}

fn relu_dropout(pre: &Matrix, mask: &[f64]) -> Matrix {
    let data = pre
        .as_slice()
        .iter()
        .zip(mask)
        .map(|(&v, &m)| relu(v) * m)
        .collect();
    Matrix::from_vec(pre.rows(), pre.cols(), data).expect("same shape")
}

fn relu_dropout_backward(grad: &Matrix, pre: &Matrix, mask: &[f64]) -> Matrix {
    let data = grad
        .as_slice()
        .iter()
        .zip(pre.as_slice())
        .zip(mask)
        .map(|((&g, &v), &m)| if v > 0.0 { g * m } else { 0.0 })
        .collect();
    Matrix::from_vec(grad.rows(), grad.cols(), data).expect("same shape")
}

/// Backward through `y = γ·x̂ + β` with `x̂` from batch statistics:
///
/// `∂z = (1/B)·σ⁻¹·(B·∂x̂ − Σ∂x̂ − x̂·Σ(∂x̂·x̂))`, `∂x̂ = γ·∂y`.
fn batchnorm_backward(
    dy: &Matrix,
    xhat: &Matrix,
    inv_std: &[f64],
    gamma: &[f64],
) -> (Matrix, Vec<f64>, Vec<f64>) {
    let (b, cols) = dy.shape();
    let bf = b as f64;
    let mut dgamma = vec![0.0; cols];
    let mut dbeta = vec![0.0; cols];
    for (gr, xr) in dy.row_iter().zip(xhat.row_iter()) {
        for j in 0..cols {
            dgamma[j] += gr[j] * xr[j];
            dbeta[j] += gr[j];
        }
    }
    // Σ∂x̂ = γ·Σ∂y and Σ(∂x̂·x̂) = γ·Σ(∂y·x̂).
    let mut dz = Matrix::zeros(b, cols);
    for ((zr, gr), xr) in dz
        .as_mut_slice()
        .chunks_exact_mut(cols)
        .zip(dy.row_iter())
        .zip(xhat.row_iter())
    {
        for j in 0..cols {
            let dxhat = gamma[j] * gr[j];
            zr[j] = inv_std[j] / bf
                * (bf * dxhat - gamma[j] * dbeta[j] - xr[j] * gamma[j] * dgamma[j]);
        }
    }
    (dz, dgamma, dbeta)
}
