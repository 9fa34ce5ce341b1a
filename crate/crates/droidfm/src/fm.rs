//! The factorization machine: second-order classifier whose pairwise weights
//! are inner products of per-feature latent vectors.
//!
//! The score of a sample is
//!
//! ```text
//! h(x) = w0 + sum_i w_i x_i + sum_{i<j} <v_i, v_j> x_i x_j
//! ```
//!
//! restricted to mask-allowed index pairs. [`FmModel::predict_raw`] evaluates
//! the interaction term in `O(active * k)` through the factorized identity
//! `sum_{i<j} <v_i,v_j> x_i x_j = 1/2 * sum_f [(sum_i v_if x_i)^2 - sum_i v_if^2 x_i^2]`,
//! applied per allowed category pair under a partial mask.
//! [`FmModel::predict_bruteforce`] and [`CrossingOracle`] provide quadratic
//! reference routes that pin the fast path in tests.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{Label, LabeledDataset, SparseVector};
use crate::error::{Error, Result};
use crate::optim::{seeded_rng, sigmoid, softplus, Adam, TrainConfig, STREAM_INIT, STREAM_SHUFFLE};
use crate::token::FeatureCategory;

/// Which feature pairs contribute second-order terms.
///
/// `Partial` keeps only interactions between the listed (unordered) category
/// pairs; a pair `(c, c)` allows interactions within category `c`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InteractionMask {
    Full,
    Partial {
        allowed_pairs: BTreeSet<(FeatureCategory, FeatureCategory)>,
        category_of_index: Vec<FeatureCategory>,
    },
}

fn normalize_pair(
    a: FeatureCategory,
    b: FeatureCategory,
) -> (FeatureCategory, FeatureCategory) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl InteractionMask {
    pub fn partial(
        pairs: impl IntoIterator<Item = (FeatureCategory, FeatureCategory)>,
        category_of_index: Vec<FeatureCategory>,
    ) -> Result<Self> {
        let allowed_pairs: BTreeSet<_> =
            pairs.into_iter().map(|(a, b)| normalize_pair(a, b)).collect();
        if allowed_pairs.is_empty() {
            return Err(Error::InvalidConfig(
                "partial mask needs at least one allowed category pair".into(),
            ));
        }
        Ok(InteractionMask::Partial {
            allowed_pairs,
            category_of_index,
        })
    }

    pub fn allows(&self, a: FeatureCategory, b: FeatureCategory) -> bool {
        match self {
            InteractionMask::Full => true,
            InteractionMask::Partial { allowed_pairs, .. } => {
                allowed_pairs.contains(&normalize_pair(a, b))
            }
        }
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        match self {
            InteractionMask::Full => Ok(()),
            InteractionMask::Partial {
                category_of_index, ..
            } => {
                if category_of_index.len() == dim {
                    Ok(())
                } else {
                    Err(Error::DimensionMismatch {
                        expected: dim,
                        got: category_of_index.len(),
                    })
                }
            }
        }
    }

    /// 7x7 allow matrix indexed by category codes; cheap to consult in
    /// scoring loops.
    fn matrix(&self) -> [[bool; 7]; 7] {
        let mut m = [[false; 7]; 7];
        for (ai, a) in FeatureCategory::ALL.iter().enumerate() {
            for (bi, b) in FeatureCategory::ALL.iter().enumerate() {
                m[ai][bi] = self.allows(*a, *b);
            }
        }
        m
    }
}

/// Gradient of the loss at one sample; carries entries only for the bias and
/// the active feature indices.
#[derive(Clone, Debug)]
pub struct SparseGradient {
    pub w0: f64,
    /// `(feature index, d loss / d w_i)` for active indices.
    pub w: Vec<(usize, f64)>,
    /// `(feature index, d loss / d v_i)` rows of length `k` for active indices.
    pub v: Vec<(usize, Vec<f64>)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FmModel {
    dim: usize,
    k: usize,
    w0: f64,
    w: Vec<f64>,
    v: Vec<f64>, // dim x k, row-major
    mask: InteractionMask,
}

impl FmModel {
    /// Fresh model: zero bias and linear weights, latent entries drawn
    /// i.i.d. from `N(0, init_scale^2)` by a generator derived from `seed`.
    pub fn init(dim: usize, k: usize, seed: u64, init_scale: f64) -> Result<Self> {
        if dim == 0 || k == 0 {
            return Err(Error::InvalidConfig(format!(
                "model shape must be positive, got dim={dim} k={k}"
            )));
        }
        if !(init_scale >= 0.0 && init_scale.is_finite()) {
            return Err(Error::InvalidConfig("init_scale must be nonnegative".into()));
        }
        let normal = Normal::new(0.0, init_scale)
            .map_err(|e| Error::InvalidConfig(format!("bad init scale: {e}")))?;
        let mut rng = seeded_rng(seed, STREAM_INIT);
        let v = (0..dim * k).map(|_| normal.sample(&mut rng)).collect();
        Ok(FmModel {
            dim,
            k,
            w0: 0.0,
            w: vec![0.0; dim],
            v,
            mask: InteractionMask::Full,
        })
    }

    pub fn from_parts(
        w0: f64,
        w: Vec<f64>,
        v: Vec<f64>,
        k: usize,
        mask: InteractionMask,
    ) -> Result<Self> {
        let dim = w.len();
        if dim == 0 || k == 0 {
            return Err(Error::InvalidConfig(format!(
                "model shape must be positive, got dim={dim} k={k}"
            )));
        }
        if v.len() != dim * k {
            return Err(Error::InvalidConfig(format!(
                "latent matrix has {} entries, expected {}",
                v.len(),
                dim * k
            )));
        }
        if !w0.is_finite() || w.iter().any(|x| !x.is_finite()) || v.iter().any(|x| !x.is_finite())
        {
            return Err(Error::InvalidConfig("model parameters must be finite".into()));
        }
        mask.check_dim(dim)?;
        Ok(FmModel { dim, k, w0, w, v, mask })
    }

    pub fn with_mask(mut self, mask: InteractionMask) -> Result<Self> {
        mask.check_dim(self.dim)?;
        self.mask = mask;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn w0(&self) -> f64 {
        self.w0
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn v_row(&self, i: usize) -> &[f64] {
        &self.v[i * self.k..(i + 1) * self.k]
    }

    pub fn mask(&self) -> &InteractionMask {
        &self.mask
    }

    /// Total learned parameters: `1 + n + n*k`.
    pub fn parameter_count(&self) -> usize {
        1 + self.dim + self.dim * self.k
    }

    fn check_input(&self, x: &SparseVector) -> Result<()> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.dim(),
            });
        }
        Ok(())
    }

    fn category_code(&self, i: usize) -> usize {
        match &self.mask {
            InteractionMask::Full => 0,
            InteractionMask::Partial {
                category_of_index, ..
            } => category_of_index[i].as_u8() as usize,
        }
    }

    /// Linear-time score `h(x)`.
    pub fn predict_raw(&self, x: &SparseVector) -> Result<f64> {
        self.check_input(x)?;
        let k = self.k;
        let mut h = self.w0;
        for &i in x.indices() {
            h += self.w[i];
        }
        match &self.mask {
            InteractionMask::Full => {
                let mut sum = vec![0.0; k];
                let mut sum_sq = vec![0.0; k];
                for &i in x.indices() {
                    for (f, &vf) in self.v_row(i).iter().enumerate() {
                        sum[f] += vf;
                        sum_sq[f] += vf * vf;
                    }
                }
                for f in 0..k {
                    h += 0.5 * (sum[f] * sum[f] - sum_sq[f]);
                }
            }
            InteractionMask::Partial { allowed_pairs, .. } => {
                let mut sum = vec![0.0; 7 * k];
                let mut sum_sq = vec![0.0; 7 * k];
                for &i in x.indices() {
                    let c = self.category_code(i);
                    for (f, &vf) in self.v_row(i).iter().enumerate() {
                        sum[c * k + f] += vf;
                        sum_sq[c * k + f] += vf * vf;
                    }
                }
                for &(a, b) in allowed_pairs {
                    let (a, b) = (a.as_u8() as usize, b.as_u8() as usize);
                    if a == b {
                        for f in 0..k {
                            let s = sum[a * k + f];
                            h += 0.5 * (s * s - sum_sq[a * k + f]);
                        }
                    } else {
                        for f in 0..k {
                            h += sum[a * k + f] * sum[b * k + f];
                        }
                    }
                }
            }
        }
        Ok(h)
    }

    /// Reference score: direct double loop over all index pairs on a dense
    /// expansion of `x`. Quadratic in `dim`; meant as a test oracle.
    pub fn predict_bruteforce(&self, x: &SparseVector) -> Result<f64> {
        self.check_input(x)?;
        let allow = self.mask.matrix();
        let mut dense = vec![0.0f64; self.dim];
        for &i in x.indices() {
            dense[i] = 1.0;
        }
        let mut h = self.w0;
        for i in 0..self.dim {
            h += self.w[i] * dense[i];
        }
        for i in 0..self.dim {
            for j in i + 1..self.dim {
                if allow[self.category_code(i)][self.category_code(j)] {
                    let dot: f64 = self
                        .v_row(i)
                        .iter()
                        .zip(self.v_row(j))
                        .map(|(a, b)| a * b)
                        .sum();
                    h += dot * dense[i] * dense[j];
                }
            }
        }
        Ok(h)
    }

    /// Probability that the sample is malware: `sigmoid(h(x))`.
    pub fn predict_proba(&self, x: &SparseVector) -> Result<f64> {
        Ok(sigmoid(self.predict_raw(x)?))
    }

    /// Thresholded decision; a probability exactly at the threshold is clean.
    pub fn classify(&self, x: &SparseVector, threshold: f64) -> Result<Label> {
        Ok(if self.predict_proba(x)? > threshold {
            Label::Malware
        } else {
            Label::Clean
        })
    }

    /// Logistic loss plus active-parameter L2, and its gradient over the
    /// bias and active parameters. Inactive rows get exactly zero gradient
    /// and are omitted.
    pub fn loss_and_gradient(
        &self,
        x: &SparseVector,
        y: Label,
        l2_w: f64,
        l2_v: f64,
    ) -> Result<(f64, SparseGradient)> {
        self.check_input(x)?;
        let mut gw0 = 0.0;
        let mut gw = vec![0.0; self.dim];
        let mut gv = vec![0.0; self.dim * self.k];
        let loss = self.grad_into(x, y, l2_w, l2_v, &mut gw0, &mut gw, &mut gv);
        let grad = SparseGradient {
            w0: gw0,
            w: x.indices().iter().map(|&i| (i, gw[i])).collect(),
            v: x
                .indices()
                .iter()
                .map(|&i| (i, gv[i * self.k..(i + 1) * self.k].to_vec()))
                .collect(),
        };
        Ok((loss, grad))
    }

    /// Adds this sample's gradient into dense accumulators and returns the
    /// sample loss. Only slots touching active indices are written.
    fn grad_into(
        &self,
        x: &SparseVector,
        y: Label,
        l2_w: f64,
        l2_v: f64,
        gw0: &mut f64,
        gw: &mut [f64],
        gv: &mut [f64],
    ) -> f64 {
        let k = self.k;
        let allow = self.mask.matrix();

        let mut h = self.w0;
        for &i in x.indices() {
            h += self.w[i];
        }

        // Per-category latent sums over active indices; the full mask uses
        // a single pseudo-category 0.
        let cats = match &self.mask {
            InteractionMask::Full => 1,
            InteractionMask::Partial { .. } => 7,
        };
        let mut sum = vec![0.0; cats * k];
        let mut sum_sq = vec![0.0; cats * k];
        for &i in x.indices() {
            let c = self.category_code(i);
            for (f, &vf) in self.v_row(i).iter().enumerate() {
                sum[c * k + f] += vf;
                sum_sq[c * k + f] += vf * vf;
            }
        }
        match &self.mask {
            InteractionMask::Full => {
                for f in 0..k {
                    h += 0.5 * (sum[f] * sum[f] - sum_sq[f]);
                }
            }
            InteractionMask::Partial { allowed_pairs, .. } => {
                for &(a, b) in allowed_pairs {
                    let (a, b) = (a.as_u8() as usize, b.as_u8() as usize);
                    if a == b {
                        for f in 0..k {
                            let s = sum[a * k + f];
                            h += 0.5 * (s * s - sum_sq[a * k + f]);
                        }
                    } else {
                        for f in 0..k {
                            h += sum[a * k + f] * sum[b * k + f];
                        }
                    }
                }
            }
        }

        // Mask-compatible sum each active row sees: t[c] = sum over allowed
        // partner categories of their active latent sums.
        let mut t = vec![0.0; cats * k];
        if cats == 1 {
            t.copy_from_slice(&sum);
        } else {
            for c in 0..7 {
                for b in 0..7 {
                    if allow[c][b] {
                        for f in 0..k {
                            t[c * k + f] += sum[b * k + f];
                        }
                    }
                }
            }
        }

        let ys = y.sign();
        let g = -ys * sigmoid(-ys * h);

        *gw0 += g;
        let mut reg = 0.0;
        for &i in x.indices() {
            gw[i] += g + 2.0 * l2_w * self.w[i];
            reg += l2_w * self.w[i] * self.w[i];
            let c = self.category_code(i);
            let self_allowed = allow[c][c];
            let row = self.v_row(i);
            for (f, &vf) in row.iter().enumerate() {
                let partner = t[c * k + f] - if self_allowed { vf } else { 0.0 };
                gv[i * k + f] += g * partner + 2.0 * l2_v * vf;
                reg += l2_v * vf * vf;
            }
        }

        softplus(-ys * h) + reg
    }

    pub(crate) fn params_finite(&self) -> bool {
        self.w0.is_finite()
            && self.w.iter().all(|x| x.is_finite())
            && self.v.iter().all(|x| x.is_finite())
    }
}

/// Explicit feature-crossing model: per-pair weights `W` held as a dense
/// symmetric zero-diagonal matrix. The second independent reference route
/// for the factorization machine with `W = V V^T`.
#[derive(Clone, Debug)]
pub struct CrossingOracle {
    w0: f64,
    w: Vec<f64>,
    weights: Vec<f64>, // n x n
}

impl CrossingOracle {
    pub fn from_parts(w0: f64, w: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let n = w.len();
        if weights.len() != n * n {
            return Err(Error::InvalidConfig(format!(
                "interaction matrix has {} entries, expected {}",
                weights.len(),
                n * n
            )));
        }
        for i in 0..n {
            if weights[i * n + i] != 0.0 {
                return Err(Error::InvalidConfig("interaction diagonal must be zero".into()));
            }
            for j in 0..n {
                if weights[i * n + j] != weights[j * n + i] {
                    return Err(Error::InvalidConfig("interaction matrix must be symmetric".into()));
                }
            }
        }
        Ok(CrossingOracle { w0, w, weights })
    }

    /// Materializes `W = V V^T` (mask-zeroed, zero diagonal) from a model.
    pub fn from_model(model: &FmModel) -> Self {
        let n = model.dim();
        let mut weights = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let ci = FeatureCategory::ALL[model.category_code(i)];
                let cj = FeatureCategory::ALL[model.category_code(j)];
                if model.mask().allows(ci, cj) {
                    let dot: f64 = model
                        .v_row(i)
                        .iter()
                        .zip(model.v_row(j))
                        .map(|(a, b)| a * b)
                        .sum();
                    weights[i * n + j] = dot;
                    weights[j * n + i] = dot;
                }
            }
        }
        CrossingOracle {
            w0: model.w0(),
            w: model.w().to_vec(),
            weights,
        }
    }

    pub fn predict_raw(&self, x: &SparseVector) -> Result<f64> {
        let n = self.w.len();
        if x.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x.dim(),
            });
        }
        let mut dense = vec![0.0f64; n];
        for &i in x.indices() {
            dense[i] = 1.0;
        }
        let mut h = self.w0;
        for i in 0..n {
            h += self.w[i] * dense[i];
        }
        for i in 0..n {
            for j in i + 1..n {
                h += self.weights[i * n + j] * dense[i] * dense[j];
            }
        }
        Ok(h)
    }
}

/// Trains a factorization machine with seeded mini-batch Adam over the mean
/// batch gradient. Deterministic: the same dataset, latent dimension,
/// config and mask always produce the identical model.
pub fn train(
    ds: &LabeledDataset,
    k: usize,
    cfg: &TrainConfig,
    mask: InteractionMask,
) -> Result<FmModel> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::DegenerateLabels);
    }
    let (malware, clean) = ds.class_counts();
    if malware == 0 || clean == 0 {
        return Err(Error::DegenerateLabels);
    }
    mask.check_dim(ds.dim())?;

    let n = ds.dim();
    let mut model = FmModel::init(n, k, cfg.seed, cfg.init_scale)?.with_mask(mask)?;

    let mut adam = Adam::new(1 + n + n * k, cfg);
    let mut shuffle_rng = seeded_rng(cfg.seed, STREAM_SHUFFLE);
    let mut order: Vec<usize> = (0..ds.len()).collect();

    let mut gw = vec![0.0; n];
    let mut gv = vec![0.0; n * k];

    for _ in 0..cfg.epochs {
        shuffle(&mut order, &mut shuffle_rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut gw0 = 0.0;
            gw.fill(0.0);
            gv.fill(0.0);
            for &row in batch {
                model.grad_into(
                    &ds.vectors()[row],
                    ds.labels()[row],
                    cfg.l2_w,
                    cfg.l2_v,
                    &mut gw0,
                    &mut gw,
                    &mut gv,
                );
            }
            let inv = 1.0 / batch.len() as f64;
            adam.begin_batch();
            adam.update(0, &mut model.w0, gw0 * inv);
            for i in 0..n {
                adam.update(1 + i, &mut model.w[i], gw[i] * inv);
            }
            for j in 0..n * k {
                adam.update(1 + n + j, &mut model.v[j], gv[j] * inv);
            }
        }
    }

    if !model.params_finite() {
        return Err(Error::InvalidConfig(
            "training diverged to non-finite parameters; lower the learning rate".into(),
        ));
    }
    Ok(model)
}

/// Fisher-Yates shuffle on the given generator; kept local so the training
/// permutation stream is pinned by this crate, not a dependency's internals.
pub(crate) fn shuffle<R: Rng>(order: &mut [usize], rng: &mut R) {
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SparseVector;
    use crate::token::FeatureCategory::{Hardware, Permission, UsedPermission};
    use proptest::prelude::*;
    use rand::Rng;

    fn sv(indices: &[usize], dim: usize) -> SparseVector {
        SparseVector::new(indices.to_vec(), dim).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_zero_scale_is_flat() {
        let a = FmModel::init(3, 2, 7, 0.01).unwrap();
        let b = FmModel::init(3, 2, 7, 0.01).unwrap();
        assert_eq!(a, b);

        let flat = FmModel::init(4, 3, 9, 0.0).unwrap();
        for x in [sv(&[], 4), sv(&[0, 2], 4), sv(&[0, 1, 2, 3], 4)] {
            assert_eq!(flat.predict_raw(&x).unwrap(), 0.0);
        }

        assert!(FmModel::init(1, 1, 0, 0.01).is_ok());
        assert!(FmModel::init(0, 1, 0, 0.01).is_err());
        assert!(FmModel::init(1, 0, 0, 0.01).is_err());
    }

    #[test]
    fn all_zero_input_scores_the_bias() {
        let mut model = FmModel::init(5, 2, 1, 0.1).unwrap();
        model.w0 = 1.25;
        assert_eq!(model.predict_raw(&sv(&[], 5)).unwrap(), 1.25);
    }

    #[test]
    fn single_interaction_hand_case() {
        // n=2, k=1, v1=(2), v2=(3), both active: h = <v1,v2> = 6.
        let model =
            FmModel::from_parts(0.0, vec![0.0, 0.0], vec![2.0, 3.0], 1, InteractionMask::Full)
                .unwrap();
        assert_eq!(model.predict_raw(&sv(&[0, 1], 2)).unwrap(), 6.0);
        assert_eq!(model.predict_bruteforce(&sv(&[0, 1], 2)).unwrap(), 6.0);
    }

    #[test]
    fn all_equal_latent_rows_count_pairs() {
        // k=1, every row (1): interaction term is the number of active pairs.
        let m = 6;
        let model = FmModel::from_parts(
            0.0,
            vec![0.0; 10],
            vec![1.0; 10],
            1,
            InteractionMask::Full,
        )
        .unwrap();
        let x = sv(&[0, 2, 3, 5, 7, 9], 10);
        let expected = (m * (m - 1) / 2) as f64;
        assert_eq!(model.predict_raw(&x).unwrap(), expected);
        assert_eq!(model.predict_bruteforce(&x).unwrap(), expected);
    }

    #[test]
    fn mask_annihilates_same_category_interactions() {
        // All active features share one category; the only allowed pair is a
        // different category pair, so no second-order term survives.
        let cats = vec![Permission; 6];
        let mask = InteractionMask::partial([(Hardware, UsedPermission)], cats).unwrap();
        let mut rng = seeded_rng(3, 99);
        let v: Vec<f64> = (0..6 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let model = FmModel::from_parts(0.7, w.clone(), v, 3, mask).unwrap();
        let x = sv(&[0, 1, 3, 5], 6);
        let linear: f64 = 0.7 + x.indices().iter().map(|&i| w[i]).sum::<f64>();
        assert!((model.predict_raw(&x).unwrap() - linear).abs() < 1e-12);
        assert!((model.predict_bruteforce(&x).unwrap() - linear).abs() < 1e-12);
    }

    #[test]
    fn empty_partial_mask_is_rejected() {
        assert!(InteractionMask::partial([], vec![Permission; 3]).is_err());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let model = FmModel::init(4, 2, 0, 0.01).unwrap();
        assert!(matches!(
            model.predict_raw(&sv(&[0], 5)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn random_model_and_input(
        rng: &mut impl Rng,
        max_n: usize,
        max_k: usize,
    ) -> (FmModel, SparseVector) {
        let n = rng.gen_range(1..=max_n);
        let k = rng.gen_range(1..=max_k);
        let w0 = rng.gen_range(-1.0..1.0);
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mask = if rng.gen_bool(0.5) {
            InteractionMask::Full
        } else {
            let cats: Vec<FeatureCategory> = (0..n)
                .map(|_| FeatureCategory::ALL[rng.gen_range(0..7)])
                .collect();
            let n_pairs = rng.gen_range(1..=4);
            let pairs: Vec<_> = (0..n_pairs)
                .map(|_| {
                    (
                        FeatureCategory::ALL[rng.gen_range(0..7)],
                        FeatureCategory::ALL[rng.gen_range(0..7)],
                    )
                })
                .collect();
            InteractionMask::partial(pairs, cats).unwrap()
        };
        let model = FmModel::from_parts(w0, w, v, k, mask).unwrap();
        let indices: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.3)).collect();
        (model, SparseVector::new(indices, n).unwrap())
    }

    #[test]
    fn fast_path_matches_both_reference_routes() {
        let mut rng = seeded_rng(2024, 5);
        for _ in 0..200 {
            let (model, x) = random_model_and_input(&mut rng, 50, 8);
            let fast = model.predict_raw(&x).unwrap();
            let brute = model.predict_bruteforce(&x).unwrap();
            let crossed = CrossingOracle::from_model(&model).predict_raw(&x).unwrap();
            assert!((fast - brute).abs() <= 1e-9, "fast={fast} brute={brute}");
            assert!((crossed - brute).abs() <= 1e-9, "cross={crossed} brute={brute}");
        }
    }

    #[test]
    fn crossing_oracle_validates_shape() {
        assert!(CrossingOracle::from_parts(0.0, vec![0.0; 2], vec![0.0; 3]).is_err());
        // Non-zero diagonal.
        assert!(CrossingOracle::from_parts(0.0, vec![0.0; 2], vec![1.0, 0.0, 0.0, 0.0]).is_err());
        // Asymmetric.
        assert!(CrossingOracle::from_parts(0.0, vec![0.0; 2], vec![0.0, 1.0, 2.0, 0.0]).is_err());
        assert!(CrossingOracle::from_parts(0.0, vec![0.0; 2], vec![0.0, 1.0, 1.0, 0.0]).is_ok());
    }

    #[test]
    fn loss_at_zero_score_is_ln2_with_half_bias_gradient() {
        let model = FmModel::init(3, 2, 0, 0.0).unwrap();
        let (loss, grad) = model
            .loss_and_gradient(&sv(&[], 3), Label::Malware, 0.0, 0.0)
            .unwrap();
        assert!((loss - 2.0f64.ln()).abs() < 1e-15);
        assert!((grad.w0 - (-0.5)).abs() < 1e-15);
        assert!(grad.w.is_empty());
        assert!(grad.v.is_empty());
    }

    #[test]
    fn gradient_touches_only_active_rows() {
        let mut rng = seeded_rng(11, 6);
        let (model, x) = random_model_and_input(&mut rng, 20, 4);
        let (_, grad) = model
            .loss_and_gradient(&x, Label::Clean, 1e-4, 1e-4)
            .unwrap();
        let active: Vec<usize> = x.indices().to_vec();
        assert_eq!(grad.w.iter().map(|(i, _)| *i).collect::<Vec<_>>(), active);
        assert_eq!(grad.v.iter().map(|(i, _)| *i).collect::<Vec<_>>(), active);
    }

    /// Central finite differences of the loss over every bias/active slot.
    fn finite_diff_check(model: &FmModel, x: &SparseVector, y: Label, l2w: f64, l2v: f64) {
        let eps = 1e-5;
        let loss_of = |m: &FmModel| m.loss_and_gradient(x, y, l2w, l2v).unwrap().0;
        let (_, grad) = model.loss_and_gradient(x, y, l2w, l2v).unwrap();
        let rel = |a: f64, f: f64| (a - f).abs() / a.abs().max(f.abs()).max(1e-4);

        let mut m = model.clone();
        m.w0 = model.w0 + eps;
        let up = loss_of(&m);
        m.w0 = model.w0 - eps;
        let down = loss_of(&m);
        assert!(rel(grad.w0, (up - down) / (2.0 * eps)) <= 1e-4);

        for &(i, g) in &grad.w {
            let mut m = model.clone();
            m.w[i] = model.w[i] + eps;
            let up = loss_of(&m);
            m.w[i] = model.w[i] - eps;
            let down = loss_of(&m);
            assert!(rel(g, (up - down) / (2.0 * eps)) <= 1e-4, "w[{i}]");
        }
        for (i, row) in &grad.v {
            for (f, &g) in row.iter().enumerate() {
                let slot = i * model.k + f;
                let mut m = model.clone();
                m.v[slot] = model.v[slot] + eps;
                let up = loss_of(&m);
                m.v[slot] = model.v[slot] - eps;
                let down = loss_of(&m);
                assert!(rel(g, (up - down) / (2.0 * eps)) <= 1e-4, "v[{i},{f}]");
            }
        }
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = seeded_rng(77, 8);
        for round in 0..20 {
            let (model, x) = random_model_and_input(&mut rng, 20, 5);
            let y = if round % 2 == 0 { Label::Malware } else { Label::Clean };
            finite_diff_check(&model, &x, y, 1e-3, 1e-3);
        }
    }

    fn tiny_separable() -> LabeledDataset {
        LabeledDataset::new(
            2,
            vec![sv(&[0], 2), sv(&[1], 2)],
            vec![Label::Malware, Label::Clean],
            None,
        )
        .unwrap()
    }

    #[test]
    fn separable_pair_reaches_perfect_training_accuracy() {
        let ds = tiny_separable();
        let cfg = TrainConfig {
            batch_size: 2,
            ..TrainConfig::default()
        };
        let model = train(&ds, 1, &cfg, InteractionMask::Full).unwrap();
        for (x, y) in ds.vectors().iter().zip(ds.labels()) {
            assert_eq!(model.classify(x, 0.5).unwrap(), *y);
        }
    }

    #[test]
    fn training_is_bit_deterministic() {
        let ds = tiny_separable();
        let cfg = TrainConfig {
            epochs: 30,
            ..TrainConfig::default()
        };
        let a = train(&ds, 3, &cfg, InteractionMask::Full).unwrap();
        let b = train(&ds, 3, &cfg, InteractionMask::Full).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_class_data_is_rejected() {
        let ds = LabeledDataset::new(
            2,
            vec![sv(&[0], 2), sv(&[1], 2)],
            vec![Label::Malware, Label::Malware],
            None,
        )
        .unwrap();
        assert!(matches!(
            train(&ds, 2, &TrainConfig::default(), InteractionMask::Full),
            Err(Error::DegenerateLabels)
        ));
    }

    #[test]
    fn scoring_cost_is_linear_in_active_count() {
        use std::time::Instant;
        let n = 20_000;
        let k = 8;
        let model = FmModel::init(n, k, 1, 0.01).unwrap();
        let small = sv(&(0..8_000).collect::<Vec<_>>(), n);
        let large = sv(&(0..16_000).collect::<Vec<_>>(), n);

        let time_min = |x: &SparseVector| {
            let mut best = f64::INFINITY;
            for _ in 0..60 {
                let t = Instant::now();
                std::hint::black_box(model.predict_raw(std::hint::black_box(x)).unwrap());
                best = best.min(t.elapsed().as_secs_f64());
            }
            best
        };
        // Warm up both paths before timing.
        time_min(&small);
        time_min(&large);
        let ratio = time_min(&large) / time_min(&small);
        assert!(ratio <= 2.2, "doubling active count cost ratio {ratio}");
    }

    proptest! {
        #[test]
        fn positive_scaling_keeps_the_decision(h in -30.0f64..30.0, c in 0.01f64..100.0) {
            let before = sigmoid(h) > 0.5;
            let after = sigmoid(c * h) > 0.5;
            prop_assert_eq!(before, after);
        }
    }
}
