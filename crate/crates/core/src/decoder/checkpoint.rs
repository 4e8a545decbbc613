//! BDEC decoder checkpoints.
//!
//! Little-endian layout:
//!
//! ```text
//! magic  b"BDEC"
//! u32    version (1)
//! u32    L (labels)
//! u32    D (input), u32 H1, u32 H2
//! f32    dropout p, f32 batch-norm eps, f32 batch-norm momentum
//! f32*   tensors in declaration order:
//!          fc1.weight (D x H1, row-major), fc1.bias,
//!          bn1.gamma, bn1.beta, bn1.running_mean, bn1.running_var,
//!          fc2.weight, fc2.bias, bn2.{gamma,beta,running_mean,running_var},
//!          fc3.weight, fc3.bias
//! u8     1 if an optimizer section follows, else 0
//! [optimizer section]
//!   u8   kind, u64 step, u32 n_hyper, f32 * n_hyper,
//!   u32  n_slots, then n_slots groups of the 10 trainable tensors as f32
//! ```

use std::path::Path;

use crate::decoder::{BatchNorm, DecoderParams, Linear};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const BDEC_MAGIC: &[u8; 4] = b"BDEC";
pub const BDEC_VERSION: u32 = 1;

/// Opaque optimizer state carried alongside the weights. `slots` holds one
/// entry per state tensor family (Adam: first and second moments), each in
/// trainable-tensor order.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerSection {
    pub kind: u8,
    pub step: u64,
    pub hyper: Vec<f32>,
    pub slots: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: DecoderParams,
    pub optimizer: Option<OptimizerSection>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, vs: &[f64]) {
    for &v in vs {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub fn encode_checkpoint(params: &DecoderParams, optimizer: Option<&OptimizerSection>) -> Vec<u8> {
    let shape = params.shape();
    let mut out = Vec::new();
    out.extend_from_slice(BDEC_MAGIC);
    put_u32(&mut out, BDEC_VERSION);
    put_u32(&mut out, shape.n_labels as u32);
    put_u32(&mut out, shape.input_dim as u32);
    put_u32(&mut out, shape.hidden[0] as u32);
    put_u32(&mut out, shape.hidden[1] as u32);
    put_f32s(&mut out, &[params.dropout_p, params.bn1.eps, params.bn1.momentum]);

    let bn = |out: &mut Vec<u8>, bn: &BatchNorm| {
        put_f32s(out, &bn.gamma);
        put_f32s(out, &bn.beta);
        put_f32s(out, &bn.running_mean);
        put_f32s(out, &bn.running_var);
    };
    put_f32s(&mut out, params.fc1.weight.as_slice());
    put_f32s(&mut out, &params.fc1.bias);
    bn(&mut out, &params.bn1);
    put_f32s(&mut out, params.fc2.weight.as_slice());
    put_f32s(&mut out, &params.fc2.bias);
    bn(&mut out, &params.bn2);
    put_f32s(&mut out, params.fc3.weight.as_slice());
    put_f32s(&mut out, &params.fc3.bias);

    match optimizer {
        None => out.push(0),
        Some(opt) => {
            out.push(1);
            out.push(opt.kind);
            out.extend_from_slice(&opt.step.to_le_bytes());
            put_u32(&mut out, opt.hyper.len() as u32);
            for h in &opt.hyper {
                out.extend_from_slice(&h.to_le_bytes());
            }
            put_u32(&mut out, opt.slots.len() as u32);
            for slot in &opt.slots {
                for t in slot {
                    put_f32s(&mut out, t);
                }
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!("checkpoint truncated in {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(4 * n, what)?;
        let v: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Format(format!("non-finite value in {what}")));
        }
        Ok(v)
    }

    fn linear(&mut self, fan_in: usize, fan_out: usize, name: &str) -> Result<Linear> {
        let w = self.f32s(fan_in * fan_out, name)?;
        Ok(Linear {
            weight: Matrix::from_vec(fan_in, fan_out, w)?,
            bias: self.f32s(fan_out, name)?,
        })
    }

    fn batchnorm(&mut self, n: usize, eps: f64, momentum: f64, name: &str) -> Result<BatchNorm> {
        let bn = BatchNorm {
            gamma: self.f32s(n, name)?,
            beta: self.f32s(n, name)?,
            running_mean: self.f32s(n, name)?,
            running_var: self.f32s(n, name)?,
            eps,
            momentum,
        };
        if bn.running_var.iter().any(|&v| v <= 0.0) {
            return Err(Error::Format(format!("{name}: running variance must be positive")));
        }
        Ok(bn)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != BDEC_MAGIC {
        return Err(Error::Format("not a BDEC checkpoint".into()));
    }
    let version = r.u32("version")?;
    if version != BDEC_VERSION {
        return Err(Error::Format(format!("unsupported BDEC version {version}")));
    }
    let n_labels = r.u32("header")? as usize;
    let input_dim = r.u32("header")? as usize;
    let h1 = r.u32("header")? as usize;
    let h2 = r.u32("header")? as usize;
    if n_labels < 2 || input_dim == 0 || h1 == 0 || h2 == 0 {
        return Err(Error::Format(format!(
            "degenerate shape {input_dim}->{h1}->{h2}->{n_labels}"
        )));
    }
    let dropout_p = r.f32("header")? as f64;
    let eps = r.f32("header")? as f64;
    let momentum = r.f32("header")? as f64;

    let fc1 = r.linear(input_dim, h1, "fc1")?;
    let bn1 = r.batchnorm(h1, eps, momentum, "bn1")?;
    let fc2 = r.linear(h1, h2, "fc2")?;
    let bn2 = r.batchnorm(h2, eps, momentum, "bn2")?;
    let fc3 = r.linear(h2, n_labels, "fc3")?;
    let params = DecoderParams {
        fc1,
        bn1,
        fc2,
        bn2,
        fc3,
        dropout_p,
    };

    let optimizer = match r.u8("optimizer flag")? {
        0 => None,
        1 => {
            let kind = r.u8("optimizer")?;
            let step = r.u64("optimizer")?;
            let n_hyper = r.u32("optimizer")? as usize;
            let hyper = (0..n_hyper)
                .map(|_| r.f32("optimizer"))
                .collect::<Result<Vec<_>>>()?;
            let n_slots = r.u32("optimizer")? as usize;
            let sizes: Vec<usize> = params.trainable().iter().map(|t| t.len()).collect();
            let mut slots = Vec::with_capacity(n_slots);
            for _ in 0..n_slots {
                let slot = sizes
                    .iter()
                    .map(|&n| r.f32s(n, "optimizer state"))
                    .collect::<Result<Vec<_>>>()?;
                slots.push(slot);
            }
            Some(OptimizerSection {
                kind,
                step,
                hyper,
                slots,
            })
        }
        f => return Err(Error::Format(format!("bad optimizer flag {f}"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after checkpoint",
            bytes.len() - r.pos
        )));
    }
    Ok(Checkpoint { params, optimizer })
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    params: &DecoderParams,
    optimizer: Option<&OptimizerSection>,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(params, optimizer)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

impl DecoderParams {
    /// The parameters exactly as a checkpoint would store them.
    pub fn to_checkpoint_precision(&self) -> DecoderParams {
        decode_checkpoint(&encode_checkpoint(self, None))
            .expect("own encoding decodes")
            .params
    }
}
