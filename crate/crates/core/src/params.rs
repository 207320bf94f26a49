//! Learnable parameters and the binary checkpoint format.
//!
//! Checkpoint layout (all integers little-endian u32):
//!
//! ```text
//! "DRTRPARM" version K feature_dim hidden_dim class_count tensor_count
//! repeat tensor_count: name_len name_bytes element_count values...
//! ```
//!
//! Version 1 stores values as f32, version 2 as f64. Both load back into the
//! in-memory f64 representation; version 2 round-trips exactly, version 1 is
//! exact for values that are representable in f32.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{DrtrError, Result};

const MAGIC: &[u8; 8] = b"DRTRPARM";

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionParams {
    /// One `feature_dim x hidden_dim` matrix per hop.
    pub hop_transforms: Vec<Array2<f64>>,
    /// Shared attention vector over `[W x_v || W x_u]`, length `2 * hidden_dim`.
    pub attention: Array1<f64>,
    /// Hop logits; the hop weights are their softmax.
    pub hop_logits: Array1<f64>,
    /// `hidden_dim x class_count`.
    pub classifier: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Non-negative weights of the reconstruction similarity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityWeights {
    pub omega: [f64; 3],
}

impl SimilarityWeights {
    pub fn new(omega: [f64; 3]) -> Self {
        let mut w = Self { omega };
        w.project();
        w
    }

    /// Clamp negative weights to zero.
    pub fn project(&mut self) {
        for w in &mut self.omega {
            if *w < 0.0 {
                *w = 0.0;
            }
        }
    }
}

/// Everything the trainer updates.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub diffusion: DiffusionParams,
    pub similarity: SimilarityWeights,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-s, s).expect("finite bounds");
    Array2::from_shape_fn((rows, cols), |_| dist.sample(rng))
}

impl DiffusionParams {
    /// Glorot-uniform weights for transforms, attention and classifier; zero hop logits and bias.
    pub fn init(hops: usize, feature_dim: usize, hidden_dim: usize, class_count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hop_transforms = (0..hops)
            .map(|_| glorot(&mut rng, feature_dim, hidden_dim, feature_dim, hidden_dim))
            .collect();
        let attention = glorot(&mut rng, 2 * hidden_dim, 1, 2 * hidden_dim, 1)
            .into_shape_with_order(2 * hidden_dim)
            .expect("column to vector");
        let classifier = glorot(&mut rng, hidden_dim, class_count, hidden_dim, class_count);
        Self {
            hop_transforms,
            attention,
            hop_logits: Array1::zeros(hops),
            classifier,
            bias: Array1::zeros(class_count),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            hop_transforms: self
                .hop_transforms
                .iter()
                .map(|w| Array2::zeros(w.raw_dim()))
                .collect(),
            attention: Array1::zeros(self.attention.len()),
            hop_logits: Array1::zeros(self.hop_logits.len()),
            classifier: Array2::zeros(self.classifier.raw_dim()),
            bias: Array1::zeros(self.bias.len()),
        }
    }

    pub fn hops(&self) -> usize {
        self.hop_transforms.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.hop_transforms.first().map_or(0, |w| w.nrows())
    }

    pub fn hidden_dim(&self) -> usize {
        self.attention.len() / 2
    }

    pub fn class_count(&self) -> usize {
        self.bias.len()
    }

    /// Hop weights `softmax(hop_logits)`.
    pub fn hop_weights(&self) -> Vec<f64> {
        softmax(self.hop_logits.as_slice().expect("contiguous"))
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, values) in self.named_tensors() {
            if let Some(i) = values.iter().position(|x| !x.is_finite()) {
                return Err(DrtrError::Numeric(format!("parameter {name}[{i}] is not finite")));
            }
        }
        Ok(())
    }

    fn named_tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = self
            .hop_transforms
            .iter()
            .enumerate()
            .map(|(k, w)| (format!("W{}", k + 1), w.as_slice().expect("standard layout")))
            .collect();
        out.push(("attention".into(), self.attention.as_slice().expect("contiguous")));
        out.push(("hop_logits".into(), self.hop_logits.as_slice().expect("contiguous")));
        out.push(("classifier".into(), self.classifier.as_slice().expect("standard layout")));
        out.push(("bias".into(), self.bias.as_slice().expect("contiguous")));
        out
    }

    fn named_tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = self
            .hop_transforms
            .iter_mut()
            .enumerate()
            .map(|(k, w)| {
                (
                    format!("W{}", k + 1),
                    w.as_slice_mut().expect("standard layout"),
                )
            })
            .collect();
        out.push((
            "attention".into(),
            self.attention.as_slice_mut().expect("contiguous"),
        ));
        out.push((
            "hop_logits".into(),
            self.hop_logits.as_slice_mut().expect("contiguous"),
        ));
        out.push((
            "classifier".into(),
            self.classifier.as_slice_mut().expect("standard layout"),
        ));
        out.push(("bias".into(), self.bias.as_slice_mut().expect("contiguous")));
        out
    }
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl ModelParams {
    pub fn init(
        hops: usize,
        feature_dim: usize,
        hidden_dim: usize,
        class_count: usize,
        omega: [f64; 3],
        seed: u64,
    ) -> Self {
        Self {
            diffusion: DiffusionParams::init(hops, feature_dim, hidden_dim, class_count, seed),
            similarity: SimilarityWeights::new(omega),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            diffusion: self.diffusion.zeros_like(),
            similarity: SimilarityWeights { omega: [0.0; 3] },
        }
    }

    /// `(name, values)` for every tensor in checkpoint order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = self.diffusion.named_tensors();
        out.push(("omega".into(), &self.similarity.omega[..]));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = self.diffusion.named_tensors_mut();
        out.push(("omega".into(), &mut self.similarity.omega[..]));
        out
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, v)| v.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// Scale every entry in place.
    pub fn scale(&mut self, factor: f64) {
        for (_, values) in self.tensors_mut() {
            values.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// `self += factor * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &ModelParams, factor: f64) {
        let src = other.tensors();
        for ((_, dst), (_, s)) in self.tensors_mut().into_iter().zip(src) {
            for (d, s) in dst.iter_mut().zip(s) {
                *d += factor * s;
            }
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, values) in self.tensors() {
            if let Some(i) = values.iter().position(|x| !x.is_finite()) {
                return Err(DrtrError::Numeric(format!("{name}[{i}] is not finite")));
            }
        }
        Ok(())
    }

    /// Serialize with the given format version (1 = f32, 2 = f64).
    pub fn write_checkpoint<W: Write>(&self, mut out: W, version: u32) -> Result<()> {
        if version != 1 && version != 2 {
            return Err(DrtrError::InvalidArgument(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let d = &self.diffusion;
        out.write_all(MAGIC)?;
        let tensors = self.tensors();
        for v in [
            version,
            d.hops() as u32,
            d.feature_dim() as u32,
            d.hidden_dim() as u32,
            d.class_count() as u32,
            tensors.len() as u32,
        ] {
            out.write_all(&v.to_le_bytes())?;
        }
        for (name, values) in tensors {
            out.write_all(&(name.len() as u32).to_le_bytes())?;
            out.write_all(name.as_bytes())?;
            out.write_all(&(values.len() as u32).to_le_bytes())?;
            for &x in values {
                if version == 1 {
                    out.write_all(&(x as f32).to_le_bytes())?;
                } else {
                    out.write_all(&x.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn to_checkpoint_bytes(&self, version: u32) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_checkpoint(&mut buf, version)?;
        Ok(buf)
    }

    pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(DrtrError::MalformedInput("bad checkpoint magic".into()));
        }
        let mut header = [0u32; 6];
        for h in &mut header {
            *h = read_u32(&mut input)?;
        }
        let [version, hops, feature_dim, hidden_dim, class_count, count] = header.map(|x| x as usize);
        if version != 1 && version != 2 {
            return Err(DrtrError::MalformedInput(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let mut params = ModelParams {
            diffusion: DiffusionParams {
                hop_transforms: vec![Array2::zeros((feature_dim, hidden_dim)); hops],
                attention: Array1::zeros(2 * hidden_dim),
                hop_logits: Array1::zeros(hops),
                classifier: Array2::zeros((hidden_dim, class_count)),
                bias: Array1::zeros(class_count),
            },
            similarity: SimilarityWeights { omega: [0.0; 3] },
        };
        let mut slots = params.tensors_mut();
        if slots.len() != count {
            return Err(DrtrError::MalformedInput(format!(
                "checkpoint lists {count} tensors, expected {}",
                slots.len()
            )));
        }
        for (expected, values) in slots.iter_mut() {
            let name_len = read_u32(&mut input)? as usize;
            let mut name = vec![0u8; name_len];
            input.read_exact(&mut name)?;
            if name != expected.as_bytes() {
                return Err(DrtrError::MalformedInput(format!(
                    "expected tensor '{expected}', found '{}'",
                    String::from_utf8_lossy(&name)
                )));
            }
            let len = read_u32(&mut input)? as usize;
            if len != values.len() {
                return Err(DrtrError::MalformedInput(format!(
                    "tensor '{expected}' has {len} values, expected {}",
                    values.len()
                )));
            }
            for x in values.iter_mut() {
                *x = if version == 1 {
                    let mut b = [0u8; 4];
                    input.read_exact(&mut b)?;
                    f32::from_le_bytes(b) as f64
                } else {
                    let mut b = [0u8; 8];
                    input.read_exact(&mut b)?;
                    f64::from_le_bytes(b)
                };
            }
        }
        drop(slots);
        Ok(params)
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_checkpoint(bytes)
    }
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
