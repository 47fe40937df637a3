//! Linear encoder `q = normalize(W x + b)`, its backward pass, Adam with
//! decoupled weight decay, and the warmup/step learning-rate schedule.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot_slice, l2_normalize, norm, FeatureVector};

/// Parameters are stored flat: `d_out * d_in` row-major weights followed by
/// `d_out` bias entries. [`Gradients`] and [`AdamState`] share the layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    d_out: usize,
    d_in: usize,
    params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<f64>);

impl Gradients {
    pub fn zeros_like(enc: &Encoder) -> Self {
        Gradients(vec![0.0; enc.params.len()])
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.0.iter_mut().for_each(|a| *a *= s);
    }
}

impl Encoder {
    /// Weights uniform in `[-1/sqrt(d_in), 1/sqrt(d_in)]`, zero bias.
    pub fn init<R: Rng>(d_out: usize, d_in: usize, rng: &mut R) -> Result<Self> {
        if d_out == 0 || d_in == 0 {
            return Err(Error::invalid("encoder dimensions must be >= 1"));
        }
        let bound = 1.0 / (d_in as f64).sqrt();
        let mut params: Vec<f64> = (0..d_out * d_in).map(|_| rng.random_range(-bound..=bound)).collect();
        params.resize(d_out * d_in + d_out, 0.0);
        Ok(Encoder { d_out, d_in, params })
    }

    pub fn from_parts(weights: Vec<f64>, bias: Vec<f64>, d_in: usize) -> Result<Self> {
        let d_out = bias.len();
        if d_out == 0 || d_in == 0 || weights.len() != d_out * d_in {
            return Err(Error::DimensionMismatch {
                expected: d_out * d_in,
                got: weights.len(),
            });
        }
        let mut params = weights;
        params.extend(bias);
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("encoder parameters must be finite"));
        }
        Ok(Encoder { d_out, d_in, params })
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn weights(&self) -> &[f64] {
        &self.params[..self.d_out * self.d_in]
    }

    pub fn bias(&self) -> &[f64] {
        &self.params[self.d_out * self.d_in..]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_input(&self, raw: &[f64]) -> Result<()> {
        if raw.len() != self.d_in {
            return Err(Error::DimensionMismatch {
                expected: self.d_in,
                got: raw.len(),
            });
        }
        Ok(())
    }

    /// `W x + b` before normalization.
    pub fn pre_activation(&self, raw: &[f64]) -> Result<Vec<f64>> {
        self.check_input(raw)?;
        Ok(self
            .weights()
            .chunks_exact(self.d_in)
            .zip(self.bias())
            .map(|(row, b)| dot_slice(row, raw) + b)
            .collect())
    }

    pub fn forward(&self, raw: &[f64]) -> Result<FeatureVector> {
        l2_normalize(&self.pre_activation(raw)?)
    }

    /// Chains `grad_q` through the normalization and the affine map:
    /// `grad_y = (I - q q^T) grad_q / |y|`, `grad_W = grad_y x^T`,
    /// `grad_b = grad_y`.
    pub fn backward(&self, raw: &[f64], grad_q: &[f64]) -> Result<Gradients> {
        let y = self.pre_activation(raw)?;
        if grad_q.len() != self.d_out {
            return Err(Error::DimensionMismatch {
                expected: self.d_out,
                got: grad_q.len(),
            });
        }
        let n = norm(&y);
        if n == 0.0 || !n.is_finite() {
            return Err(Error::DegenerateVector);
        }
        let q: Vec<f64> = y.iter().map(|v| v / n).collect();
        let radial = dot_slice(&q, grad_q);
        let grad_y: Vec<f64> = grad_q.iter().zip(&q).map(|(g, qi)| (g - qi * radial) / n).collect();

        let mut grads = Vec::with_capacity(self.params.len());
        for gy in &grad_y {
            grads.extend(raw.iter().map(|x| gy * x));
        }
        grads.extend_from_slice(&grad_y);
        Ok(Gradients(grads))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl AdamState {
    pub fn new(n_params: usize, weight_decay: f64) -> Self {
        AdamState {
            first: vec![0.0; n_params],
            second: vec![0.0; n_params],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay,
        }
    }

    pub fn for_encoder(enc: &Encoder, weight_decay: f64) -> Self {
        Self::new(enc.params().len(), weight_decay)
    }

    /// One Adam step with decoupled weight decay: parameters first shrink by
    /// `lr * weight_decay * p`, then take the bias-corrected Adam update.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.first.len(),
                got: grads.len(),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            params[i] -= lr * self.weight_decay * params[i];
            self.first[i] = self.beta1 * self.first[i] + (1.0 - self.beta1) * g;
            self.second[i] = self.beta2 * self.second[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.first[i] / c1;
            let v_hat = self.second[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub warmup_epochs: usize,
    pub decay_every: usize,
    pub decay_factor: f64,
    pub total_epochs: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            base_lr: 3.5e-4,
            warmup_epochs: 10,
            decay_every: 20,
            decay_factor: 0.1,
            total_epochs: 50,
        }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::invalid("base_lr must be > 0"));
        }
        if self.warmup_epochs > self.total_epochs {
            return Err(Error::invalid("warmup_epochs must not exceed total_epochs"));
        }
        if self.decay_every == 0 {
            return Err(Error::invalid("decay_every must be >= 1"));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::invalid("decay_factor must be in (0, 1]"));
        }
        Ok(())
    }

    /// Linear warmup `base * (epoch + 1) / warmup` for the first
    /// `warmup_epochs`, then `base * factor^floor(epoch / decay_every)`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch < self.warmup_epochs {
            self.base_lr * (epoch + 1) as f64 / self.warmup_epochs as f64
        } else {
            self.base_lr * self.decay_factor.powi((epoch / self.decay_every) as i32)
        }
    }
}
