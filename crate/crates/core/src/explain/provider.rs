//! Client for an external embedding provider speaking newline-delimited
//! JSON over a pipe.
//!
//! Request line:  `{"id": "...", "png_b64": "<base64 PNG>"}`
//! Response line: `{"id": "...", "embedding": [f32, ...]}` or
//!                `{"id": "...", "error": "..."}`
//!
//! Responses come back one per request, in request order.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::{encode_png, Predictor};
use crate::decoder::DecoderParams;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Requests written before waiting for their responses.
const WINDOW: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub id: String,
    pub png_b64: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub struct ProviderClient<R, W> {
    reader: R,
    writer: W,
    next_id: u64,
}

impl<R: BufRead, W: Write> ProviderClient<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        Self {
            reader,
            writer,
            next_id: 0,
        }
    }

    /// Embeds PNG-encoded images, pipelining up to a small window of
    /// requests. A per-image error from the provider becomes
    /// [`Error::Predict`] carrying the image's index.
    pub fn embed_png(&mut self, pngs: &[Vec<u8>]) -> Result<Vec<Vec<f32>>> {
        let mut out = Vec::with_capacity(pngs.len());
        for (c, chunk) in pngs.chunks(WINDOW).enumerate() {
            let mut ids = Vec::with_capacity(chunk.len());
            for png in chunk {
                let req = ProviderRequest {
                    id: self.next_id.to_string(),
                    png_b64: STANDARD.encode(png),
                };
                self.next_id += 1;
                serde_json::to_writer(&mut self.writer, &req)?;
                self.writer.write_all(b"\n")?;
                ids.push(req.id);
            }
            self.writer.flush()?;
            for (k, id) in ids.iter().enumerate() {
                let sample = c * WINDOW + k;
                let mut line = String::new();
                if self.reader.read_line(&mut line)? == 0 {
                    return Err(Error::Provider(format!(
                        "provider closed its output before answering request {id}"
                    )));
                }
                let resp: ProviderResponse = serde_json::from_str(line.trim_end())
                    .map_err(|e| Error::Provider(format!("unreadable response to request {id}: {e}")))?;
                if &resp.id != id {
                    return Err(Error::Provider(format!(
                        "out-of-order response: expected id {id}, got {}",
                        resp.id
                    )));
                }
                match (resp.embedding, resp.error) {
                    (_, Some(message)) => return Err(Error::Predict { sample, message }),
                    (Some(e), None) => out.push(e),
                    (None, None) => {
                        return Err(Error::Provider(format!("response {id} has no embedding")))
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn embed_images(&mut self, images: &[RgbImage]) -> Result<Vec<Vec<f32>>> {
        let pngs = images.iter().map(encode_png).collect::<Result<Vec<_>>>()?;
        self.embed_png(&pngs)
    }
}

/// Client over a child process's stdout/stdin.
pub type ProcessClient = ProviderClient<BufReader<ChildStdout>, BufWriter<ChildStdin>>;

/// Owns a provider child process; dropping it kills the child.
pub struct ProviderProcess {
    child: Child,
}

impl ProviderProcess {
    /// Starts `program args…` with piped stdin/stdout. The client talks to
    /// the child; the returned guard keeps it alive.
    pub fn spawn(program: &str, args: &[String]) -> Result<(Self, ProcessClient)> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Provider(format!("cannot start {program:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let client = ProviderClient::new(BufReader::new(stdout), BufWriter::new(stdin));
        Ok((Self { child }, client))
    }
}

impl Drop for ProviderProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Scores images by embedding them through a provider and running the
/// decoder in eval mode. Serial: the provider pipe is a single stream.
pub struct EmbeddingPredictor<R, W> {
    client: Mutex<ProviderClient<R, W>>,
    decoder: DecoderParams,
}

impl<R, W> EmbeddingPredictor<R, W> {
    pub fn new(client: ProviderClient<R, W>, decoder: DecoderParams) -> Self {
        Self {
            client: Mutex::new(client),
            decoder,
        }
    }
}

impl<R: BufRead + Send, W: Write + Send> Predictor for EmbeddingPredictor<R, W> {
    fn n_labels(&self) -> usize {
        self.decoder.n_labels()
    }

    fn predict(&self, images: &[RgbImage]) -> Result<Matrix> {
        let embeddings = self
            .client
            .lock()
            .map_err(|_| Error::Provider("provider client poisoned by an earlier panic".into()))?
            .embed_images(images)?;
        let dim = self.decoder.shape().input_dim;
        let mut data = Vec::with_capacity(images.len() * dim);
        for (i, e) in embeddings.iter().enumerate() {
            if e.len() != dim {
                return Err(Error::Predict {
                    sample: i,
                    message: format!("embedding has {} components, decoder expects {dim}", e.len()),
                });
            }
            data.extend(e.iter().map(|&v| v as f64));
        }
        self.decoder.predict(&Matrix::from_vec(images.len(), dim, data)?)
    }

    fn concurrent(&self) -> bool {
        false
    }
}
