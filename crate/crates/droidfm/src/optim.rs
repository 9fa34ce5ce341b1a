//! Training configuration and the Adam update rule shared by the
//! factorization machine and the logistic baseline.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Mini-batch Adam hyperparameters. Epoch count, batch size and latent
/// dimension defaults follow the evaluation protocol (200 epochs, batches of
/// 200); the rest are conventional.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Standard deviation of the Gaussian init for latent vectors.
    pub init_scale: f64,
    pub seed: u64,
    pub l2_w: f64,
    pub l2_v: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 200,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            init_scale: 0.01,
            seed: 0,
            l2_w: 1e-6,
            l2_v: 1e-6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        positive("learning_rate", self.learning_rate)?;
        positive("adam_epsilon", self.adam_epsilon)?;
        for (name, beta) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::InvalidConfig(format!("{name} must be in [0,1), got {beta}")));
            }
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::InvalidConfig("init_scale must be nonnegative".into()));
        }
        for (name, l2) in [("l2_w", self.l2_w), ("l2_v", self.l2_v)] {
            if !(l2 >= 0.0 && l2.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be nonnegative")));
            }
        }
        Ok(())
    }
}

// Independent RNG streams derived from one user seed, so e.g. parameter
// init and epoch shuffling stay decoupled across model types.
pub(crate) const STREAM_INIT: u64 = 1;
pub(crate) const STREAM_SHUFFLE: u64 = 2;
pub(crate) const STREAM_SPLIT: u64 = 3;
pub(crate) const STREAM_NOISE: u64 = 4;
pub(crate) const STREAM_APP_BASE: u64 = 1 << 32;

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(stream)))
}

/// Adam state over one flat parameter indexing scheme. The caller assigns a
/// stable slot to every parameter and applies updates slot by slot.
pub(crate) struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    rate: f64,
    bias1: f64,
    bias2: f64,
}

impl Adam {
    pub fn new(n_params: usize, cfg: &TrainConfig) -> Self {
        Adam {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            epsilon: cfg.adam_epsilon,
            rate: cfg.learning_rate,
            bias1: 0.0,
            bias2: 0.0,
        }
    }

    /// Advances the step counter; call once per mini-batch before updates.
    pub fn begin_batch(&mut self) {
        self.step += 1;
        self.bias1 = 1.0 - self.beta1.powi(self.step);
        self.bias2 = 1.0 - self.beta2.powi(self.step);
    }

    #[inline]
    pub fn update(&mut self, slot: usize, param: &mut f64, grad: f64) {
        let m = &mut self.m[slot];
        let v = &mut self.v[slot];
        *m = self.beta1 * *m + (1.0 - self.beta1) * grad;
        *v = self.beta2 * *v + (1.0 - self.beta2) * grad * grad;
        let m_hat = *m / self.bias1;
        let v_hat = *v / self.bias2;
        *param -= self.rate * m_hat / (v_hat.sqrt() + self.epsilon);
    }
}

/// Numerically stable `ln(1 + exp(z))`.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Numerically stable logistic sigmoid.
pub fn sigmoid(h: f64) -> f64 {
    if h >= 0.0 {
        1.0 / (1.0 + (-h).exp())
    } else {
        let e = h.exp();
        e / (1.0 + e)
    }
}
