//! Adam and plain SGD over named flat tensors.

use serde::{Deserialize, Serialize};

use crate::decoder::{DecoderParams, Gradients, OptimizerSection, TRAINABLE};
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        }
    }

    fn code(self) -> u8 {
        match self {
            OptimizerKind::Adam => 0,
            OptimizerKind::Sgd => 1,
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.name())
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            _ => Err(Error::Validation(format!("unknown optimizer {s:?}"))),
        }
    }
}

fn check_grads(params: &[&mut [f64]], grads: &[&[f64]], names: &[&str]) -> Result<()> {
    if params.len() != grads.len() || params.len() != names.len() {
        return Err(Error::Shape(format!(
            "{} parameter tensors, {} gradients, {} names",
            params.len(),
            grads.len(),
            names.len()
        )));
    }
    for ((p, g), name) in params.iter().zip(grads).zip(names) {
        if p.len() != g.len() {
            return Err(Error::Shape(format!(
                "{name}: parameter has {} entries, gradient {}",
                p.len(),
                g.len()
            )));
        }
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::Training(format!(
                "non-finite gradient in {name}[{i}]: {}",
                g[i]
            )));
        }
    }
    Ok(())
}

/// First and second moment estimates, one tensor per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(sizes: &[usize]) -> Self {
        Self {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }

    pub fn for_params(params: &DecoderParams) -> Self {
        let sizes: Vec<usize> = params.trainable().iter().map(|t| t.len()).collect();
        Self::new(&sizes)
    }

    /// One Adam update of `params` in place. Nothing is modified if any
    /// gradient is non-finite.
    pub fn update(
        &mut self,
        params: &mut [&mut [f64]],
        grads: &[&[f64]],
        names: &[&str],
        lr: f64,
    ) -> Result<()> {
        check_grads(params, grads, names)?;
        if self.m.len() != params.len()
            || self.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len())
        {
            return Err(Error::Shape("Adam state does not mirror the parameters".into()));
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Plain gradient descent, with an optional heavy-ball momentum that is
/// off by default.
#[derive(Clone, Debug, PartialEq)]
pub struct SgdState {
    pub momentum: f64,
    pub velocity: Vec<Vec<f64>>,
    pub t: u64,
}

impl SgdState {
    pub fn new(sizes: &[usize], momentum: f64) -> Self {
        Self {
            momentum,
            velocity: if momentum > 0.0 {
                sizes.iter().map(|&n| vec![0.0; n]).collect()
            } else {
                Vec::new()
            },
            t: 0,
        }
    }

    pub fn update(
        &mut self,
        params: &mut [&mut [f64]],
        grads: &[&[f64]],
        names: &[&str],
        lr: f64,
    ) -> Result<()> {
        check_grads(params, grads, names)?;
        self.t += 1;
        if self.momentum > 0.0 {
            for ((p, g), vel) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
                for i in 0..p.len() {
                    vel[i] = self.momentum * vel[i] + g[i];
                    p[i] -= lr * vel[i];
                }
            }
        } else {
            for (p, g) in params.iter_mut().zip(grads) {
                for (pi, gi) in p.iter_mut().zip(g.iter()) {
                    *pi -= lr * gi;
                }
            }
        }
        Ok(())
    }
}

/// `θ ← θ − lr·g` on a single named tensor.
pub fn sgd_step(param: &mut [f64], grad: &[f64], name: &str, lr: f64) -> Result<()> {
    SgdState::new(&[param.len()], 0.0).update(&mut [param], &[grad], &[name], lr)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Optimizer {
    Adam(AdamState),
    Sgd(SgdState),
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, params: &DecoderParams, sgd_momentum: f64) -> Self {
        let sizes: Vec<usize> = params.trainable().iter().map(|t| t.len()).collect();
        match kind {
            OptimizerKind::Adam => Optimizer::Adam(AdamState::new(&sizes)),
            OptimizerKind::Sgd => Optimizer::Sgd(SgdState::new(&sizes, sgd_momentum)),
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        match self {
            Optimizer::Adam(_) => OptimizerKind::Adam,
            Optimizer::Sgd(_) => OptimizerKind::Sgd,
        }
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        match self {
            Optimizer::Adam(s) => s.t,
            Optimizer::Sgd(s) => s.t,
        }
    }

    pub fn step(&mut self, params: &mut DecoderParams, grads: &Gradients, lr: f64) -> Result<()> {
        let mut p = params.trainable_mut();
        let g = grads.tensors();
        match self {
            Optimizer::Adam(s) => s.update(&mut p, &g, &TRAINABLE, lr),
            Optimizer::Sgd(s) => s.update(&mut p, &g, &TRAINABLE, lr),
        }
    }

    /// State in checkpoint form.
    pub fn to_section(&self) -> OptimizerSection {
        match self {
            Optimizer::Adam(s) => OptimizerSection {
                kind: OptimizerKind::Adam.code(),
                step: s.t,
                hyper: vec![s.beta1 as f32, s.beta2 as f32, s.eps as f32],
                slots: vec![s.m.clone(), s.v.clone()],
            },
            Optimizer::Sgd(s) => OptimizerSection {
                kind: OptimizerKind::Sgd.code(),
                step: s.t,
                hyper: vec![s.momentum as f32],
                slots: if s.velocity.is_empty() {
                    Vec::new()
                } else {
                    vec![s.velocity.clone()]
                },
            },
        }
    }

    pub fn from_section(section: &OptimizerSection) -> Result<Self> {
        let bad = || Error::Format(format!("malformed optimizer section (kind {})", section.kind));
        match section.kind {
            0 => {
                let [b1, b2, eps] = <[f32; 3]>::try_from(section.hyper.as_slice()).map_err(|_| bad())?;
                let [m, v] = <[Vec<Vec<f64>>; 2]>::try_from(section.slots.clone()).map_err(|_| bad())?;
                Ok(Optimizer::Adam(AdamState {
                    m,
                    v,
                    t: section.step,
                    beta1: b1 as f64,
                    beta2: b2 as f64,
                    eps: eps as f64,
                }))
            }
            1 => {
                let [momentum] = <[f32; 1]>::try_from(section.hyper.as_slice()).map_err(|_| bad())?;
                let velocity = match section.slots.len() {
                    0 => Vec::new(),
                    1 => section.slots[0].clone(),
                    _ => return Err(bad()),
                };
                Ok(Optimizer::Sgd(SgdState {
                    momentum: momentum as f64,
                    velocity,
                    t: section.step,
                }))
            }
            _ => Err(bad()),
        }
    }
}
