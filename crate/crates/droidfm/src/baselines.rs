//! First-order reference classifiers: a logistic model trained with the same
//! optimizer as the factorization machine but no interaction term, and a
//! Bernoulli naive Bayes.

use crate::dataset::{Label, LabeledDataset, SparseVector};
use crate::error::{Error, Result};
use crate::fm::shuffle;
use crate::optim::{seeded_rng, sigmoid, Adam, TrainConfig, STREAM_SHUFFLE};

/// Linear transfer `h(x) = w0 + w . x`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    w0: f64,
    w: Vec<f64>,
}

impl LinearModel {
    pub(crate) fn from_parts(w0: f64, w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidConfig("model dimension must be positive".into()));
        }
        if !w0.is_finite() || w.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("model parameters must be finite".into()));
        }
        Ok(LinearModel { w0, w })
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn w0(&self) -> f64 {
        self.w0
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn predict_raw(&self, x: &SparseVector) -> Result<f64> {
        if x.dim() != self.w.len() {
            return Err(Error::DimensionMismatch {
                expected: self.w.len(),
                got: x.dim(),
            });
        }
        let mut h = self.w0;
        for &i in x.indices() {
            h += self.w[i];
        }
        Ok(h)
    }

    pub fn predict_proba(&self, x: &SparseVector) -> Result<f64> {
        Ok(sigmoid(self.predict_raw(x)?))
    }

    pub fn classify(&self, x: &SparseVector, threshold: f64) -> Result<Label> {
        Ok(if self.predict_proba(x)? > threshold {
            Label::Malware
        } else {
            Label::Clean
        })
    }
}

/// Logistic regression under the factorization machine's optimizer and
/// determinism contract; uses `cfg.l2_w` only.
pub fn train_logistic(ds: &LabeledDataset, cfg: &TrainConfig) -> Result<LinearModel> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::DegenerateLabels);
    }
    let (malware, clean) = ds.class_counts();
    if malware == 0 || clean == 0 {
        return Err(Error::DegenerateLabels);
    }

    let n = ds.dim();
    let mut w0 = 0.0;
    let mut w = vec![0.0; n];

    let mut adam = Adam::new(1 + n, cfg);
    let mut shuffle_rng = seeded_rng(cfg.seed, STREAM_SHUFFLE);
    let mut order: Vec<usize> = (0..ds.len()).collect();

    let mut gw = vec![0.0; n];
    for _ in 0..cfg.epochs {
        shuffle(&mut order, &mut shuffle_rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut gw0 = 0.0;
            gw.fill(0.0);
            for &row in batch {
                let x = &ds.vectors()[row];
                let ys = ds.labels()[row].sign();
                let mut h = w0;
                for &i in x.indices() {
                    h += w[i];
                }
                let g = -ys * sigmoid(-ys * h);
                gw0 += g;
                for &i in x.indices() {
                    gw[i] += g + 2.0 * cfg.l2_w * w[i];
                }
            }
            let inv = 1.0 / batch.len() as f64;
            adam.begin_batch();
            adam.update(0, &mut w0, gw0 * inv);
            for i in 0..n {
                adam.update(1 + i, &mut w[i], gw[i] * inv);
            }
        }
    }
    LinearModel::from_parts(w0, w)
}

/// Bernoulli naive Bayes with Laplace-style smoothing:
/// `theta_{c,i} = (count of x_i = 1 in class c + alpha) / (class count + 2 alpha)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BernoulliNbModel {
    /// Per-class smoothed activation rates, indexed `[clean, malware]`.
    theta: [Vec<f64>; 2],
    log_prior: [f64; 2],
    log_theta: [Vec<f64>; 2],
    log_one_minus_theta: [Vec<f64>; 2],
    alpha: f64,
}

const CLEAN: usize = 0;
const MALWARE: usize = 1;

fn class_code(label: Label) -> usize {
    match label {
        Label::Clean => CLEAN,
        Label::Malware => MALWARE,
    }
}

pub fn train_bernoulli_nb(ds: &LabeledDataset, alpha: f64) -> Result<BernoulliNbModel> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidConfig(format!("alpha must be positive, got {alpha}")));
    }
    if ds.is_empty() {
        return Err(Error::DegenerateLabels);
    }
    let (malware, clean) = ds.class_counts();
    if malware == 0 || clean == 0 {
        return Err(Error::DegenerateLabels);
    }

    let n = ds.dim();
    let class_count = [clean as f64, malware as f64];
    let mut active = [vec![0.0f64; n], vec![0.0f64; n]];
    for (x, label) in ds.vectors().iter().zip(ds.labels()) {
        let counts = &mut active[class_code(*label)];
        for &i in x.indices() {
            counts[i] += 1.0;
        }
    }

    let total = ds.len() as f64;
    let mut theta = [vec![0.0; n], vec![0.0; n]];
    let mut log_theta = [vec![0.0; n], vec![0.0; n]];
    let mut log_one_minus_theta = [vec![0.0; n], vec![0.0; n]];
    for c in [CLEAN, MALWARE] {
        for i in 0..n {
            let t = (active[c][i] + alpha) / (class_count[c] + 2.0 * alpha);
            theta[c][i] = t;
            log_theta[c][i] = t.ln();
            log_one_minus_theta[c][i] = (1.0 - t).ln();
        }
    }

    Ok(BernoulliNbModel {
        theta,
        log_prior: [
            (class_count[CLEAN] / total).ln(),
            (class_count[MALWARE] / total).ln(),
        ],
        log_theta,
        log_one_minus_theta,
        alpha,
    })
}

impl BernoulliNbModel {
    pub(crate) fn from_parts(
        theta: [Vec<f64>; 2],
        log_prior: [f64; 2],
        alpha: f64,
    ) -> Result<Self> {
        let n = theta[0].len();
        if n == 0 || theta[1].len() != n {
            return Err(Error::InvalidConfig("inconsistent theta shapes".into()));
        }
        for t in theta.iter().flatten() {
            if !(*t > 0.0 && *t < 1.0) {
                return Err(Error::InvalidConfig("theta must lie strictly in (0,1)".into()));
            }
        }
        let log_theta = [
            theta[0].iter().map(|t| t.ln()).collect(),
            theta[1].iter().map(|t| t.ln()).collect(),
        ];
        let log_one_minus_theta = [
            theta[0].iter().map(|t| (1.0 - t).ln()).collect(),
            theta[1].iter().map(|t| (1.0 - t).ln()).collect(),
        ];
        Ok(BernoulliNbModel {
            theta,
            log_prior,
            log_theta,
            log_one_minus_theta,
            alpha,
        })
    }

    pub fn dim(&self) -> usize {
        self.theta[0].len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Smoothed `P(x_i = 1 | class)`.
    pub fn theta(&self, class: Label, feature: usize) -> f64 {
        self.theta[class_code(class)][feature]
    }

    pub(crate) fn theta_rows(&self) -> &[Vec<f64>; 2] {
        &self.theta
    }

    pub(crate) fn log_prior(&self) -> [f64; 2] {
        self.log_prior
    }

    /// Unnormalized log posterior per class, including the `(1 - theta)`
    /// factors for inactive features.
    pub fn log_posteriors(&self, x: &SparseVector) -> Result<[f64; 2]> {
        let n = self.dim();
        if x.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x.dim(),
            });
        }
        let mut scores = [0.0f64; 2];
        for c in [CLEAN, MALWARE] {
            let mut s = self.log_prior[c];
            s += self.log_one_minus_theta[c].iter().sum::<f64>();
            for &i in x.indices() {
                s += self.log_theta[c][i] - self.log_one_minus_theta[c][i];
            }
            scores[c] = s;
        }
        Ok(scores)
    }

    /// `P(malware | x)`; the two class posteriors sum to one.
    pub fn predict_proba(&self, x: &SparseVector) -> Result<f64> {
        let [clean, malware] = self.log_posteriors(x)?;
        Ok(sigmoid(malware - clean))
    }

    pub fn classify(&self, x: &SparseVector, threshold: f64) -> Result<Label> {
        Ok(if self.predict_proba(x)? > threshold {
            Label::Malware
        } else {
            Label::Clean
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fm::{train, InteractionMask};
    use crate::token::FeatureCategory::{Component, Hardware};
    use proptest::prelude::*;

    fn sv(indices: &[usize], dim: usize) -> SparseVector {
        SparseVector::new(indices.to_vec(), dim).unwrap()
    }

    fn separable() -> LabeledDataset {
        LabeledDataset::new(
            2,
            vec![sv(&[0], 2), sv(&[1], 2)],
            vec![Label::Malware, Label::Clean],
            None,
        )
        .unwrap()
    }

    #[test]
    fn logistic_learns_a_separable_pair() {
        let cfg = TrainConfig {
            batch_size: 2,
            ..TrainConfig::default()
        };
        let model = train_logistic(&separable(), &cfg).unwrap();
        assert_eq!(model.classify(&sv(&[0], 2), 0.5).unwrap(), Label::Malware);
        assert_eq!(model.classify(&sv(&[1], 2), 0.5).unwrap(), Label::Clean);
    }

    #[test]
    fn logistic_training_is_deterministic() {
        let cfg = TrainConfig::default();
        let a = train_logistic(&separable(), &cfg).unwrap();
        let b = train_logistic(&separable(), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn logistic_rejects_single_class() {
        let ds = LabeledDataset::new(2, vec![sv(&[0], 2)], vec![Label::Clean], None).unwrap();
        assert!(matches!(
            train_logistic(&ds, &TrainConfig::default()),
            Err(Error::DegenerateLabels)
        ));
        assert!(matches!(
            train_bernoulli_nb(&ds, 1.0),
            Err(Error::DegenerateLabels)
        ));
    }

    #[test]
    fn fm_with_dead_mask_classifies_like_logistic() {
        // Features all sit in one category; the only allowed pair never
        // occurs, so the FM's interaction term is identically zero and the
        // shared optimizer walks w0/w through the same trajectory.
        let ds = LabeledDataset::new(
            3,
            vec![
                sv(&[0], 3),
                sv(&[1], 3),
                sv(&[0, 2], 3),
                sv(&[1, 2], 3),
                sv(&[0, 1], 3),
                sv(&[2], 3),
            ],
            vec![
                Label::Malware,
                Label::Clean,
                Label::Malware,
                Label::Clean,
                Label::Malware,
                Label::Clean,
            ],
            None,
        )
        .unwrap();
        let cfg = TrainConfig {
            epochs: 60,
            batch_size: 3,
            ..TrainConfig::default()
        };
        let dead_mask =
            InteractionMask::partial([(Component, Hardware)], vec![Component; 3]).unwrap();
        let fm = train(&ds, 4, &cfg, dead_mask).unwrap();
        let logistic = train_logistic(&ds, &cfg).unwrap();
        for x in ds.vectors() {
            assert_eq!(
                fm.classify(x, 0.5).unwrap(),
                logistic.classify(x, 0.5).unwrap()
            );
            assert!((fm.predict_raw(x).unwrap() - logistic.predict_raw(x).unwrap()).abs() < 1e-12);
        }
    }

    fn three_sample_set() -> LabeledDataset {
        // Malware: {0}, {0,1}; clean: {1}.
        LabeledDataset::new(
            2,
            vec![sv(&[0], 2), sv(&[0, 1], 2), sv(&[1], 2)],
            vec![Label::Malware, Label::Malware, Label::Clean],
            None,
        )
        .unwrap()
    }

    #[test]
    fn nb_theta_matches_hand_computed_table() {
        let model = train_bernoulli_nb(&three_sample_set(), 1.0).unwrap();
        // Malware class: 2 samples, feature 0 active twice, feature 1 once.
        assert_eq!(model.theta(Label::Malware, 0), (2.0 + 1.0) / (2.0 + 2.0));
        assert_eq!(model.theta(Label::Malware, 1), (1.0 + 1.0) / (2.0 + 2.0));
        // Clean class: 1 sample, feature 0 never, feature 1 once.
        assert_eq!(model.theta(Label::Clean, 0), (0.0 + 1.0) / (1.0 + 2.0));
        assert_eq!(model.theta(Label::Clean, 1), (1.0 + 1.0) / (1.0 + 2.0));
    }

    #[test]
    fn nb_perfect_feature_saturates_as_alpha_vanishes() {
        let ds = LabeledDataset::new(
            1,
            vec![sv(&[0], 1), sv(&[0], 1), sv(&[], 1), sv(&[], 1)],
            vec![Label::Malware, Label::Malware, Label::Clean, Label::Clean],
            None,
        )
        .unwrap();
        let model = train_bernoulli_nb(&ds, 1e-9).unwrap();
        assert!(model.predict_proba(&sv(&[0], 1)).unwrap() > 1.0 - 1e-6);
        assert!(model.predict_proba(&sv(&[], 1)).unwrap() < 1e-6);
    }

    #[test]
    fn nb_is_indifferent_to_class_independent_features() {
        let ds = LabeledDataset::new(
            1,
            vec![sv(&[0], 1), sv(&[], 1), sv(&[0], 1), sv(&[], 1)],
            vec![Label::Malware, Label::Malware, Label::Clean, Label::Clean],
            None,
        )
        .unwrap();
        let model = train_bernoulli_nb(&ds, 1.0).unwrap();
        assert!((model.predict_proba(&sv(&[0], 1)).unwrap() - 0.5).abs() < 1e-12);
        assert!((model.predict_proba(&sv(&[], 1)).unwrap() - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn nb_posteriors_sum_to_one(
            active_mal in prop::collection::vec(any::<bool>(), 6),
            active_cln in prop::collection::vec(any::<bool>(), 6),
            query in prop::collection::vec(any::<bool>(), 6),
        ) {
            let to_sv = |mask: &[bool]| {
                let idx: Vec<usize> = mask
                    .iter()
                    .enumerate()
                    .filter(|(_, on)| **on)
                    .map(|(i, _)| i)
                    .collect();
                SparseVector::new(idx, 6).unwrap()
            };
            let ds = LabeledDataset::new(
                6,
                vec![to_sv(&active_mal), to_sv(&active_cln)],
                vec![Label::Malware, Label::Clean],
                None,
            )
            .unwrap();
            let model = train_bernoulli_nb(&ds, 0.5).unwrap();
            let x = to_sv(&query);
            let [lc, lm] = model.log_posteriors(&x).unwrap();
            let p_mal = model.predict_proba(&x).unwrap();
            let p_cln = sigmoid(lc - lm);
            prop_assert!((p_mal + p_cln - 1.0).abs() < 1e-12);
        }
    }
}
