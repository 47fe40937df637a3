//! Softmax contrastive loss of a query against a set of cluster vectors, with
//! its gradient with respect to the (normalized) query.
//!
//! With logits `z_k = q . v_k / tau` and `p = softmax(z)`:
//!
//! ```text
//! L      = logsumexp(z) - z_pos
//! dL/dq  = (sum_k p_k v_k - v_pos) / tau
//! ```
//!
//! The cluster vectors are constants: the memory never receives gradient and
//! only changes through momentum updates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot_slice, FeatureVector};
use crate::memory::{ClusterMemory, InstanceMemory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub tau: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { tau: 0.05 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau > 0.0 && self.tau.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid("tau must be > 0"))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub grad_q: Vec<f64>,
}

/// Stabilized `log sum exp(z)` split as `(max, ln_1p(rest))`. The largest
/// term contributes exactly 1 to the shifted sum, so the remainder goes
/// through `ln_1p` and stays accurate when one logit dominates.
fn log_sum_exp_parts(logits: &[f64]) -> (f64, f64) {
    let (argmax, max) =
        logits.iter().copied().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |best, (i, z)| if z > best.1 { (i, z) } else { best },
        );
    let rest: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != argmax)
        .map(|(_, z)| (z - max).exp())
        .sum();
    (max, rest.ln_1p())
}

#[cfg(test)]
fn log_sum_exp(logits: &[f64]) -> f64 {
    let (max, tail) = log_sum_exp_parts(logits);
    max + tail
}

/// Loss and query gradient against an explicit list of cluster vectors.
pub fn nce_against(
    q: &FeatureVector,
    vectors: &[FeatureVector],
    positive: usize,
    cfg: &LossConfig,
) -> Result<LossResult> {
    cfg.validate()?;
    let k = vectors.len();
    if k == 0 {
        return Err(Error::NoClusters);
    }
    if positive >= k {
        return Err(Error::ClusterOutOfRange { id: positive, k });
    }
    let dim = q.dim();
    let mut logits = Vec::with_capacity(k);
    for v in vectors {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.dim(),
            });
        }
        logits.push(dot_slice(q.values(), v.values()) / cfg.tau);
    }
    let (max, tail) = log_sum_exp_parts(&logits);
    let lse = max + tail;
    let value = ((max - logits[positive]) + tail).max(0.0);

    let mut grad_q = vec![0.0; dim];
    for (v, z) in vectors.iter().zip(&logits) {
        let p = (z - lse).exp();
        for (g, x) in grad_q.iter_mut().zip(v.values()) {
            *g += p * x;
        }
    }
    for (g, x) in grad_q.iter_mut().zip(vectors[positive].values()) {
        *g = (*g - x) / cfg.tau;
    }
    Ok(LossResult { value, grad_q })
}

/// Cluster-level loss: the query against every cluster representative.
pub fn cluster_nce(q: &FeatureVector, memory: &ClusterMemory, positive: usize, cfg: &LossConfig) -> Result<LossResult> {
    nce_against(q, memory.reps(), positive, cfg)
}

/// Baseline loss: the query against centroids recomputed from the live
/// instance bank.
pub fn centroid_nce(
    q: &FeatureVector,
    memory: &InstanceMemory,
    positive: usize,
    cfg: &LossConfig,
) -> Result<LossResult> {
    if memory.k() == 0 {
        return Err(Error::NoClusters);
    }
    nce_against(q, &memory.centroids()?, positive, cfg)
}
