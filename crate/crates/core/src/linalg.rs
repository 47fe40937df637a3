//! Feature vectors, the two dense primitives everything else builds on, and
//! the deterministic random stream threaded through every stochastic step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A D-dimensional embedding. Vectors produced by [`l2_normalize`] have unit
/// Euclidean norm; raw vectors may be wrapped with [`FeatureVector::new`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        FeatureVector(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Inner product. For unit vectors this is the cosine similarity.
pub fn dot(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(dot_slice(a.values(), b.values()))
}

/// Unchecked inner product for hot loops where dimensions are known to agree.
#[inline]
pub(crate) fn dot_slice(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(v: &[f64]) -> f64 {
    dot_slice(v, v).sqrt()
}

pub fn l2_normalize(v: &[f64]) -> Result<FeatureVector> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::DegenerateVector);
    }
    Ok(FeatureVector(v.iter().map(|x| x / n).collect()))
}

/// `m * a + (1 - m) * b`, the common form of every momentum update.
pub(crate) fn blend(a: &[f64], b: &[f64], m: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| m * x + (1.0 - m) * y).collect()
}

/// Mean of a non-empty set of equal-length vectors, L2-normalized.
pub(crate) fn normalized_mean<'a, I>(vectors: I, dim: usize) -> Result<FeatureVector>
where
    I: IntoIterator<Item = &'a FeatureVector>,
{
    let mut sum = vec![0.0; dim];
    let mut count = 0usize;
    for v in vectors {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.dim(),
            });
        }
        for (s, x) in sum.iter_mut().zip(v.values()) {
            *s += x;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyInput);
    }
    let inv = 1.0 / count as f64;
    sum.iter_mut().for_each(|s| *s *= inv);
    l2_normalize(&sum)
}

/// Name of the generator behind [`RngState`]; recorded in checkpoints.
pub const RNG_ALGORITHM: &str = "chacha8";

/// Seed plus stream position of the run's ChaCha8 generator. Identical seeds
/// give identical streams on every platform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn from_seed(seed: u64) -> Self {
        RngState { seed, word_pos: 0 }
    }

    pub fn capture(seed: u64, rng: &ChaCha8Rng) -> Self {
        RngState {
            seed,
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
