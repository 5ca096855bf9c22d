//! Local differential privacy on client uploads.
//!
//! Uploads are clamped per coordinate to [-δ, δ] and perturbed with i.i.d.
//! Laplace(0, λ) noise. The per-upload budget is ε = 2δ/λ.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Which uploads pass through the mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LdpTarget {
    GlobalNodesOnly,
    GlobalNodesAndUpdates,
    Off,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LDPConfig {
    /// Clip threshold δ.
    pub delta: f64,
    /// Laplace scale λ; zero means clamp only.
    pub lambda: f64,
    pub targets: LdpTarget,
}

impl Default for LDPConfig {
    fn default() -> Self {
        LDPConfig {
            delta: 0.002,
            lambda: 0.001,
            targets: LdpTarget::GlobalNodesOnly,
        }
    }
}

impl LDPConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::invalid("delta", "clip threshold must be positive"));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid("lambda", "noise scale must be non-negative"));
        }
        Ok(())
    }
}

fn sample_laplace<R: Rng>(rng: &mut R, lambda: f64) -> f64 {
    loop {
        let u: f64 = rng.gen::<f64>() - 0.5;
        let t = 1.0 - 2.0 * u.abs();
        if t > 0.0 {
            return -lambda * u.signum() * t.ln();
        }
    }
}

/// Clamps every coordinate to [-δ, δ], then adds Laplace(0, λ) noise.
/// λ = 0 degenerates to the deterministic clamp.
pub fn ldp_apply(v: &[f64], cfg: &LDPConfig, seed: u64) -> Result<Vec<f64>> {
    cfg.validate()?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("v", "non-finite coordinate"));
    }
    let mut out: Vec<f64> = v.iter().map(|x| x.clamp(-cfg.delta, cfg.delta)).collect();
    if cfg.lambda > 0.0 {
        let mut rng = seed::rng(seed);
        for x in &mut out {
            *x += sample_laplace(&mut rng, cfg.lambda);
        }
    }
    Ok(out)
}

/// Per-upload privacy budget ε = 2δ/λ. λ = 0 would be unbounded and is
/// rejected so "unprotected" never masquerades as a number.
pub fn privacy_budget(delta: f64, lambda: f64) -> Result<f64> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::invalid("delta", "clip threshold must be positive"));
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::invalid("lambda", "noise scale must be non-negative"));
    }
    if lambda == 0.0 {
        return Err(Error::invalid(
            "lambda",
            "zero noise scale leaves the budget unbounded",
        ));
    }
    Ok(2.0 * delta / lambda)
}
