//! Hybrid-attention transformer for node classification. Every center node
//! attends over its own ego set: [center ∥ n_s sampled neighbors ∥ n_g
//! global nodes], so per-batch cost is independent of subgraph size.

mod adam;
mod backward;
mod forward;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use backward::loss_and_grad;
pub use forward::{forward, forward_instrumented};

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub(crate) const LN_EPS: f64 = 1e-5;
const FFN_EXPANSION: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub d: usize,
    pub feature_dim: usize,
    pub pe_dim: usize,
    pub n_s: usize,
    pub n_g: usize,
    pub num_classes: usize,
    pub dropout: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("layers", self.layers),
            ("heads", self.heads),
            ("d", self.d),
            ("feature_dim", self.feature_dim),
            ("num_classes", self.num_classes),
        ] {
            if v == 0 {
                return Err(Error::invalid("model", format!("{name} must be positive")));
            }
        }
        if self.d % self.heads != 0 {
            return Err(Error::invalid(
                "model",
                format!("d={} is not divisible by heads={}", self.d, self.heads),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(
                "model",
                format!("dropout={} not in [0, 1)", self.dropout),
            ));
        }
        Ok(())
    }

    /// Per-head key/value width d_K = d_V = d/h.
    pub fn d_k(&self) -> usize {
        self.d / self.heads
    }

    /// Tokens per center: center + sampled neighbors + global nodes.
    pub fn token_count(&self) -> usize {
        1 + self.n_s + self.n_g
    }

    /// Raw width of center/neighbor tokens: features ∥ positional encoding.
    pub fn in_dim(&self) -> usize {
        self.feature_dim + self.pe_dim
    }

    pub fn ffn_dim(&self) -> usize {
        FFN_EXPANSION * self.d
    }

    /// Total trainable scalars; the flatten order below fixes the layout.
    pub fn param_count(&self) -> usize {
        let d = self.d;
        let per_layer = 12 * d * d + 9 * d;
        self.in_dim() * d + d + self.layers * per_layer + d * self.num_classes + self.num_classes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_g: Array1<f64>,
    pub ln1_b: Array1<f64>,
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub w_o: Array2<f64>,
    pub ln2_g: Array1<f64>,
    pub ln2_b: Array1<f64>,
    pub w_ff1: Array2<f64>,
    pub b_ff1: Array1<f64>,
    pub w_ff2: Array2<f64>,
    pub b_ff2: Array1<f64>,
}

/// All trainable parameters. Flatten order: input projection (weight then
/// bias), then per layer [ln1 gain, ln1 bias, W_Q, W_K, W_V, W_O, ln2 gain,
/// ln2 bias, FFN1 weight, FFN1 bias, FFN2 weight, FFN2 bias], then the
/// classifier weight and bias. Matrices are row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub w_in: Array2<f64>,
    pub b_in: Array1<f64>,
    pub layers: Vec<LayerParams>,
    pub w_cls: Array2<f64>,
    pub b_cls: Array1<f64>,
}

impl ModelParams {
    /// All-zero parameters in the shape of `cfg`; the gradient container.
    pub fn zeros(cfg: &ModelConfig) -> ModelParams {
        let d = cfg.d;
        ModelParams {
            w_in: Array2::zeros((cfg.in_dim(), d)),
            b_in: Array1::zeros(d),
            layers: (0..cfg.layers)
                .map(|_| LayerParams {
                    ln1_g: Array1::zeros(d),
                    ln1_b: Array1::zeros(d),
                    w_q: Array2::zeros((d, d)),
                    w_k: Array2::zeros((d, d)),
                    w_v: Array2::zeros((d, d)),
                    w_o: Array2::zeros((d, d)),
                    ln2_g: Array1::zeros(d),
                    ln2_b: Array1::zeros(d),
                    w_ff1: Array2::zeros((d, cfg.ffn_dim())),
                    b_ff1: Array1::zeros(cfg.ffn_dim()),
                    w_ff2: Array2::zeros((cfg.ffn_dim(), d)),
                    b_ff2: Array1::zeros(d),
                })
                .collect(),
            w_cls: Array2::zeros((d, cfg.num_classes)),
            b_cls: Array1::zeros(cfg.num_classes),
        }
    }

    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out: Vec<TensorRef> = vec![TensorRef::M(&self.w_in), TensorRef::V(&self.b_in)];
        for l in &self.layers {
            out.extend([
                TensorRef::V(&l.ln1_g),
                TensorRef::V(&l.ln1_b),
                TensorRef::M(&l.w_q),
                TensorRef::M(&l.w_k),
                TensorRef::M(&l.w_v),
                TensorRef::M(&l.w_o),
                TensorRef::V(&l.ln2_g),
                TensorRef::V(&l.ln2_b),
                TensorRef::M(&l.w_ff1),
                TensorRef::V(&l.b_ff1),
                TensorRef::M(&l.w_ff2),
                TensorRef::V(&l.b_ff2),
            ]);
        }
        out.push(TensorRef::M(&self.w_cls));
        out.push(TensorRef::V(&self.b_cls));
        out
    }

    fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut out: Vec<TensorMut> =
            vec![TensorMut::M(&mut self.w_in), TensorMut::V(&mut self.b_in)];
        for l in &mut self.layers {
            out.extend([
                TensorMut::V(&mut l.ln1_g),
                TensorMut::V(&mut l.ln1_b),
                TensorMut::M(&mut l.w_q),
                TensorMut::M(&mut l.w_k),
                TensorMut::M(&mut l.w_v),
                TensorMut::M(&mut l.w_o),
                TensorMut::V(&mut l.ln2_g),
                TensorMut::V(&mut l.ln2_b),
                TensorMut::M(&mut l.w_ff1),
                TensorMut::V(&mut l.b_ff1),
                TensorMut::M(&mut l.w_ff2),
                TensorMut::V(&mut l.b_ff2),
            ]);
        }
        out.push(TensorMut::M(&mut self.w_cls));
        out.push(TensorMut::V(&mut self.b_cls));
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for t in self.tensors() {
            match t {
                TensorRef::M(m) => out.extend(m.iter()),
                TensorRef::V(v) => out.extend(v.iter()),
            }
        }
        out
    }

    pub fn unflatten(cfg: &ModelConfig, flat: &[f64]) -> Result<ModelParams> {
        if flat.len() != cfg.param_count() {
            return Err(Error::DimensionMismatch(format!(
                "flat vector has {} entries, model needs {}",
                flat.len(),
                cfg.param_count()
            )));
        }
        let mut params = ModelParams::zeros(cfg);
        let mut cursor = 0;
        for t in params.tensors_mut() {
            match t {
                TensorMut::M(m) => {
                    for x in m.iter_mut() {
                        *x = flat[cursor];
                        cursor += 1;
                    }
                }
                TensorMut::V(v) => {
                    for x in v.iter_mut() {
                        *x = flat[cursor];
                        cursor += 1;
                    }
                }
            }
        }
        Ok(params)
    }
}

enum TensorRef<'a> {
    M(&'a Array2<f64>),
    V(&'a Array1<f64>),
}

enum TensorMut<'a> {
    M(&'a mut Array2<f64>),
    V(&'a mut Array1<f64>),
}

/// Fan-in-scaled uniform init for weights, zeros for biases, identity
/// LayerNorm. Deterministic under seed.
pub fn init_params(cfg: &ModelConfig, init_seed: u64) -> Result<ModelParams> {
    cfg.validate()?;
    let mut rng = seed::rng(seed::derive(init_seed, &[0x40]));
    let mut params = ModelParams::zeros(cfg);
    for t in params.tensors_mut() {
        match t {
            TensorMut::M(m) => {
                let bound = 1.0 / (m.nrows() as f64).sqrt();
                for x in m.iter_mut() {
                    *x = rng.gen_range(-bound..bound);
                }
            }
            TensorMut::V(_) => {} // biases stay zero; LN gains set below
        }
    }
    for l in &mut params.layers {
        l.ln1_g.fill(1.0);
        l.ln2_g.fill(1.0);
    }
    Ok(params)
}

/// One training batch: raw center∥neighbor tokens (features∥PE), a validity
/// mask over the full token set, and optional labels per center.
#[derive(Debug, Clone)]
pub struct Batch {
    /// b × (1 + n_s) × (feature_dim + pe_dim)
    pub tokens: Array3<f64>,
    /// b × (1 + n_s + n_g); false marks padding
    pub mask: Array2<bool>,
    pub labels: Vec<Option<usize>>,
}

impl Batch {
    pub fn new(
        cfg: &ModelConfig,
        tokens: Array3<f64>,
        mask: Array2<bool>,
        labels: Vec<Option<usize>>,
    ) -> Result<Batch> {
        let b = tokens.dim().0;
        if tokens.dim().1 != 1 + cfg.n_s || tokens.dim().2 != cfg.in_dim() {
            return Err(Error::DimensionMismatch(format!(
                "token tensor {:?}, expected ({b}, {}, {})",
                tokens.dim(),
                1 + cfg.n_s,
                cfg.in_dim()
            )));
        }
        if mask.dim() != (b, cfg.token_count()) {
            return Err(Error::DimensionMismatch(format!(
                "mask {:?}, expected ({b}, {})",
                mask.dim(),
                cfg.token_count()
            )));
        }
        if labels.len() != b {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {b} centers",
                labels.len()
            )));
        }
        for (i, row) in mask.rows().into_iter().enumerate() {
            if !row[0] {
                return Err(Error::invalid("mask", format!("center {i} masked out")));
            }
        }
        if let Some(&Some(bad)) = labels
            .iter()
            .find(|l| matches!(l, Some(y) if *y >= cfg.num_classes))
        {
            return Err(Error::invalid(
                "labels",
                format!("label {bad} out of range for {} classes", cfg.num_classes),
            ));
        }
        Ok(Batch { tokens, mask, labels })
    }

    pub fn len(&self) -> usize {
        self.tokens.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
