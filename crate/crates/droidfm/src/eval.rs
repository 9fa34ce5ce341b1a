//! Detection metrics, ROC curves, stratified splitting and cross-validation,
//! and per-family one-vs-rest evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::dataset::{Label, LabeledDataset};
use crate::error::{Error, Result};
use crate::fm::{self, FmModel, InteractionMask};
use crate::optim::{seeded_rng, TrainConfig, STREAM_SPLIT};

/// Confusion counts for binary malware detection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Confusion {
    /// Malicious apps correctly detected.
    pub tp: usize,
    /// Benign apps correctly classified.
    pub tn: usize,
    /// False predictions as malicious.
    pub fp: usize,
    /// False predictions as clean.
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Counts predictions against ground truth.
pub fn confusion(labels: &[Label], predictions: &[Label]) -> Result<Confusion> {
    if labels.len() != predictions.len() {
        return Err(Error::InvalidInput(format!(
            "{} labels but {} predictions",
            labels.len(),
            predictions.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::InvalidInput("no samples to evaluate".into()));
    }
    let mut c = Confusion {
        tp: 0,
        tn: 0,
        fp: 0,
        fn_: 0,
    };
    for (truth, pred) in labels.iter().zip(predictions) {
        match (truth, pred) {
            (Label::Malware, Label::Malware) => c.tp += 1,
            (Label::Clean, Label::Clean) => c.tn += 1,
            (Label::Clean, Label::Malware) => c.fp += 1,
            (Label::Malware, Label::Clean) => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum MetricName {
    Accuracy,
    Precision,
    Recall,
    F1,
    Fpr,
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricName::Accuracy => "accuracy",
            MetricName::Precision => "precision",
            MetricName::Recall => "recall",
            MetricName::F1 => "f1",
            MetricName::Fpr => "fpr",
        })
    }
}

/// Derived detection metrics. A metric whose denominator is zero is reported
/// as 0 and listed in `undefined` instead of propagating NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    pub undefined: BTreeSet<MetricName>,
}

/// Evaluates the metric formulas exactly, each as a single integer division:
/// accuracy `(tp+tn)/total`, precision `tp/(tp+fp)`, recall `tp/(tp+fn)`,
/// F1 `2tp/(2tp+fp+fn)` (the reduced harmonic mean), FPR `fp/(fp+tn)`.
pub fn metrics(c: &Confusion) -> Result<Metrics> {
    if c.total() == 0 {
        return Err(Error::InvalidInput("empty confusion matrix".into()));
    }
    let mut undefined = BTreeSet::new();
    let ratio = |num: usize, den: usize, name: MetricName, undefined: &mut BTreeSet<MetricName>| {
        if den == 0 {
            undefined.insert(name);
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let accuracy = (c.tp + c.tn) as f64 / c.total() as f64;
    let precision = ratio(c.tp, c.tp + c.fp, MetricName::Precision, &mut undefined);
    let recall = ratio(c.tp, c.tp + c.fn_, MetricName::Recall, &mut undefined);
    // With tp = 0 precision + recall is 0 (or undefined), so the harmonic
    // mean has a zero denominator; flag rather than divide.
    let f1 = if c.tp == 0 {
        undefined.insert(MetricName::F1);
        0.0
    } else {
        2.0 * c.tp as f64 / (2 * c.tp + c.fp + c.fn_) as f64
    };
    let fpr = ratio(c.fp, c.fp + c.tn, MetricName::Fpr, &mut undefined);
    Ok(Metrics {
        accuracy,
        precision,
        recall,
        f1,
        fpr,
        undefined,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve from a descending threshold sweep, plus its trapezoid AUC.
#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// Sweeps thresholds over the distinct scores (ties grouped, so an all-tied
/// run contributes a single diagonal segment).
pub fn roc(labels: &[Label], scores: &[f64]) -> Result<RocCurve> {
    if labels.len() != scores.len() {
        return Err(Error::InvalidInput(format!(
            "{} labels but {} scores",
            labels.len(),
            scores.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("scores must be finite".into()));
    }
    let positives = labels.iter().filter(|l| **l == Label::Malware).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::InvalidInput(
            "roc needs both classes among the labels".into(),
        ));
    }

    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let mut auc = 0.0;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut at = 0;
    while at < order.len() {
        let score = scores[order[at]];
        while at < order.len() && scores[order[at]] == score {
            match labels[order[at]] {
                Label::Malware => tp += 1,
                Label::Clean => fp += 1,
            }
            at += 1;
        }
        let prev = *points.last().unwrap();
        let point = RocPoint {
            threshold: score,
            fpr: fp as f64 / negatives as f64,
            tpr: tp as f64 / positives as f64,
        };
        auc += (point.fpr - prev.fpr) * (point.tpr + prev.tpr) / 2.0;
        points.push(point);
    }
    Ok(RocCurve { points, auc })
}

fn check_fraction(test_fraction: f64) -> Result<()> {
    if test_fraction > 0.0 && test_fraction < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "test fraction must be in (0,1), got {test_fraction}"
        )))
    }
}

/// Splits strata independently: each group is shuffled (seeded) and its
/// first `round(len * fraction)` members go to the test side. Both sides
/// come back sorted by original index.
fn split_groups(
    groups: &BTreeMap<&str, Vec<usize>>,
    test_fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = seeded_rng(seed, STREAM_SPLIT);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for indices in groups.values() {
        let mut shuffled = indices.clone();
        fm::shuffle(&mut shuffled, &mut rng);
        let n_test = (shuffled.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&shuffled[..n_test]);
        train.extend_from_slice(&shuffled[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Class-stratified (train, test) index partition. Per class, the test count
/// differs from `count * fraction` by less than one sample; deterministic
/// for a given seed.
pub fn stratified_split_indices(
    labels: &[Label],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    check_fraction(test_fraction)?;
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, label) in labels.iter().enumerate() {
        let key = match label {
            Label::Clean => "clean",
            Label::Malware => "malware",
        };
        groups.entry(key).or_default().push(i);
    }
    for (key, indices) in &groups {
        if indices.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "class {key} has {} samples, need at least 2",
                indices.len()
            )));
        }
    }
    if groups.len() < 2 {
        return Err(Error::DegenerateLabels);
    }
    Ok(split_groups(&groups, test_fraction, seed))
}

/// 80/20-style split of a dataset. With `stratified` the per-class
/// proportions are preserved within one sample.
pub fn split_train_test(
    ds: &LabeledDataset,
    test_fraction: f64,
    seed: u64,
    stratified: bool,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train, test) = if stratified {
        stratified_split_indices(ds.labels(), test_fraction, seed)?
    } else {
        check_fraction(test_fraction)?;
        let mut order: Vec<usize> = (0..ds.len()).collect();
        let mut rng = seeded_rng(seed, STREAM_SPLIT);
        fm::shuffle(&mut order, &mut rng);
        let n_test = (ds.len() as f64 * test_fraction).round() as usize;
        let mut test: Vec<usize> = order[..n_test].to_vec();
        let mut train: Vec<usize> = order[n_test..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        (train, test)
    };
    Ok((ds.subset(&train), ds.subset(&test)))
}

/// Stratified k-fold partition as index lists. Within every class the fold
/// sizes differ by at most one; deterministic for a given seed.
pub fn stratified_kfold(ds: &LabeledDataset, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    stratified_kfold_indices(ds.labels(), k, seed)
}

pub fn stratified_kfold_indices(
    labels: &[Label],
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 folds, got {k}")));
    }
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, label) in labels.iter().enumerate() {
        let key = match label {
            Label::Clean => "clean",
            Label::Malware => "malware",
        };
        by_class.entry(key).or_default().push(i);
    }
    for (key, indices) in &by_class {
        if indices.len() < k {
            return Err(Error::InvalidInput(format!(
                "class {key} has {} samples, fewer than {k} folds",
                indices.len()
            )));
        }
    }

    let mut rng = seeded_rng(seed, STREAM_SPLIT);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for indices in by_class.values() {
        let mut shuffled = indices.clone();
        fm::shuffle(&mut shuffled, &mut rng);
        let base = shuffled.len() / k;
        let extra = shuffled.len() % k;
        let mut at = 0;
        for (f, fold) in folds.iter_mut().enumerate() {
            let size = base + usize::from(f < extra);
            fold.extend_from_slice(&shuffled[at..at + size]);
            at += size;
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// Trains one factorization machine per fold (on the complement) and
/// reports that fold's held-out metrics. Fold seeds derive from
/// `cfg.seed + fold index`.
pub fn cross_validate(
    ds: &LabeledDataset,
    folds: usize,
    k_latent: usize,
    cfg: &TrainConfig,
    mask: &InteractionMask,
    threshold: f64,
) -> Result<Vec<Metrics>> {
    let parts = stratified_kfold(ds, folds, cfg.seed)?;
    let mut out = Vec::with_capacity(parts.len());
    for (f, test_rows) in parts.iter().enumerate() {
        let in_test: BTreeSet<usize> = test_rows.iter().copied().collect();
        let train_rows: Vec<usize> = (0..ds.len()).filter(|i| !in_test.contains(i)).collect();
        let train_ds = ds.subset(&train_rows);
        let test_ds = ds.subset(test_rows);
        let fold_cfg = TrainConfig {
            seed: cfg.seed.wrapping_add(f as u64),
            ..cfg.clone()
        };
        let model = fm::train(&train_ds, k_latent, &fold_cfg, mask.clone())?;
        let preds = classify_all(&model, &test_ds, threshold)?;
        out.push(metrics(&confusion(test_ds.labels(), &preds)?)?);
    }
    Ok(out)
}

fn classify_all(model: &FmModel, ds: &LabeledDataset, threshold: f64) -> Result<Vec<Label>> {
    ds.vectors()
        .iter()
        .map(|x| model.classify(x, threshold))
        .collect()
}

/// Fewest samples a family needs before it gets its own one-vs-rest model.
pub const MIN_FAMILY_SAMPLES: usize = 10;

#[derive(Clone, Debug)]
pub struct FamilyRow {
    pub family: String,
    /// Samples of this family in the full dataset.
    pub samples: usize,
    pub metrics: Metrics,
}

#[derive(Clone, Debug)]
pub struct FamilyReport {
    pub rows: Vec<FamilyRow>,
    /// Arithmetic mean of each metric column over the reported rows.
    pub macro_avg: Metrics,
    /// `(family, reason)` for families that could not be evaluated.
    pub skipped: Vec<(String, String)>,
}

/// One-vs-rest family classification: for every family (clean counts as the
/// family `"clean"`), trains a binary factorization machine on a shared
/// family-stratified train split and reports held-out metrics. Family seeds
/// derive from `cfg.seed + family index` in sorted-name order.
pub fn evaluate_families(
    ds: &LabeledDataset,
    k_latent: usize,
    cfg: &TrainConfig,
    mask: &InteractionMask,
    test_fraction: f64,
    threshold: f64,
) -> Result<FamilyReport> {
    check_fraction(test_fraction)?;
    let families = ds
        .families()
        .ok_or_else(|| Error::InvalidInput("dataset has no family names".into()))?;
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, fam) in families.iter().enumerate() {
        groups.entry(fam).or_default().push(i);
    }
    if groups.len() < 2 {
        return Err(Error::InvalidInput(
            "family evaluation needs at least 2 families".into(),
        ));
    }

    let (train_rows, test_rows) = split_groups(&groups, test_fraction, cfg.seed);
    let train_ds = ds.subset(&train_rows);
    let test_ds = ds.subset(&test_rows);

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (fi, (family, members)) in groups.iter().enumerate() {
        if members.len() < MIN_FAMILY_SAMPLES {
            skipped.push((
                family.to_string(),
                format!("only {} samples (need {MIN_FAMILY_SAMPLES})", members.len()),
            ));
            continue;
        }
        let train_rel = train_ds.relabel_one_vs_rest(family)?;
        let test_rel = test_ds.relabel_one_vs_rest(family)?;
        let (train_pos, train_neg) = train_rel.class_counts();
        let (test_pos, _) = test_rel.class_counts();
        if train_pos == 0 || train_neg == 0 {
            skipped.push((family.to_string(), "degenerate train split".into()));
            continue;
        }
        if test_pos == 0 {
            skipped.push((family.to_string(), "absent from test split".into()));
            continue;
        }
        let fam_cfg = TrainConfig {
            seed: cfg.seed.wrapping_add(fi as u64),
            ..cfg.clone()
        };
        let model = fm::train(&train_rel, k_latent, &fam_cfg, mask.clone())?;
        let preds = classify_all(&model, &test_rel, threshold)?;
        rows.push(FamilyRow {
            family: family.to_string(),
            samples: members.len(),
            metrics: metrics(&confusion(test_rel.labels(), &preds)?)?,
        });
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput(
            "no family had enough samples to evaluate".into(),
        ));
    }
    let macro_avg = macro_average(&rows);
    Ok(FamilyReport {
        rows,
        macro_avg,
        skipped,
    })
}

fn macro_average(rows: &[FamilyRow]) -> Metrics {
    let n = rows.len() as f64;
    let mean = |pick: fn(&Metrics) -> f64| rows.iter().map(|r| pick(&r.metrics)).sum::<f64>() / n;
    Metrics {
        accuracy: mean(|m| m.accuracy),
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
        fpr: mean(|m| m.fpr),
        undefined: rows
            .iter()
            .flat_map(|r| r.metrics.undefined.iter().copied())
            .collect(),
    }
}

fn flag(metrics: &Metrics, name: MetricName) -> &'static str {
    if metrics.undefined.contains(&name) {
        "undefined"
    } else {
        ""
    }
}

impl Metrics {
    /// `metric,value,flag` CSV; `extra` rows (e.g. AUC) are appended with an
    /// empty flag column.
    pub fn write_csv(&self, path: impl AsRef<Path>, extra: &[(&str, f64)]) -> Result<()> {
        let path = path.as_ref();
        let mut out = BufWriter::new(File::create(path).map_err(Error::io(path))?);
        (|| -> std::io::Result<()> {
            writeln!(out, "metric,value,flag")?;
            for (name, value) in [
                (MetricName::Accuracy, self.accuracy),
                (MetricName::Precision, self.precision),
                (MetricName::Recall, self.recall),
                (MetricName::F1, self.f1),
                (MetricName::Fpr, self.fpr),
            ] {
                writeln!(out, "{name},{value},{}", flag(self, name))?;
            }
            for (name, value) in extra {
                writeln!(out, "{name},{value},")?;
            }
            out.flush()
        })()
        .map_err(Error::io(path))
    }
}

impl RocCurve {
    /// `threshold,fpr,tpr` rows followed by a trailing `auc,<value>` line.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = BufWriter::new(File::create(path).map_err(Error::io(path))?);
        (|| -> std::io::Result<()> {
            writeln!(out, "threshold,fpr,tpr")?;
            for p in &self.points {
                writeln!(out, "{},{},{}", p.threshold, p.fpr, p.tpr)?;
            }
            writeln!(out, "auc,{}", self.auc)?;
            out.flush()
        })()
        .map_err(Error::io(path))
    }
}

impl FamilyReport {
    /// One row per family, a trailing Average row, and `# skipped` comment
    /// lines for families left out.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = BufWriter::new(File::create(path).map_err(Error::io(path))?);
        (|| -> std::io::Result<()> {
            writeln!(out, "family,samples,precision,recall,f1,fpr")?;
            for row in &self.rows {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    row.family,
                    row.samples,
                    row.metrics.precision,
                    row.metrics.recall,
                    row.metrics.f1,
                    row.metrics.fpr
                )?;
            }
            writeln!(
                out,
                "Average,,{},{},{},{}",
                self.macro_avg.precision, self.macro_avg.recall, self.macro_avg.f1, self.macro_avg.fpr
            )?;
            for (family, reason) in &self.skipped {
                writeln!(out, "# skipped {family}: {reason}")?;
            }
            out.flush()
        })()
        .map_err(Error::io(path))
    }
}

/// Per-fold metrics plus a mean row, as `fold,metric,value,flag` CSV.
pub fn write_cv_csv(path: impl AsRef<Path>, folds: &[Metrics]) -> Result<()> {
    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path).map_err(Error::io(path))?);
    (|| -> std::io::Result<()> {
        writeln!(out, "fold,metric,value,flag")?;
        let columns: [(MetricName, fn(&Metrics) -> f64); 5] = [
            (MetricName::Accuracy, |m| m.accuracy),
            (MetricName::Precision, |m| m.precision),
            (MetricName::Recall, |m| m.recall),
            (MetricName::F1, |m| m.f1),
            (MetricName::Fpr, |m| m.fpr),
        ];
        for (f, m) in folds.iter().enumerate() {
            for (name, pick) in columns {
                writeln!(out, "{},{name},{},{}", f + 1, pick(m), flag(m, name))?;
            }
        }
        for (name, pick) in columns {
            let mean = folds.iter().map(|m| pick(m)).sum::<f64>() / folds.len() as f64;
            writeln!(out, "mean,{name},{mean},")?;
        }
        out.flush()
    })()
    .map_err(Error::io(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SparseVector;
    use proptest::prelude::*;

    use Label::{Clean, Malware};

    #[test]
    fn confusion_counts_the_four_cells() {
        let c = confusion(
            &[Malware, Malware, Clean, Clean],
            &[Malware, Clean, Clean, Malware],
        )
        .unwrap();
        assert_eq!(
            c,
            Confusion {
                tp: 1,
                fn_: 1,
                tn: 1,
                fp: 1
            }
        );

        let perfect = confusion(&[Malware, Clean], &[Malware, Clean]).unwrap();
        assert_eq!((perfect.fp, perfect.fn_), (0, 0));

        let all_flagged = confusion(&[Clean, Clean, Clean], &[Malware, Malware, Malware]).unwrap();
        assert_eq!(all_flagged.fp, 3);
    }

    #[test]
    fn confusion_rejects_mismatched_lengths() {
        assert!(confusion(&[Malware], &[]).is_err());
        assert!(confusion(&[], &[]).is_err());
    }

    #[test]
    fn metric_formulas_are_exact() {
        let m = metrics(&Confusion {
            tp: 2,
            fp: 1,
            tn: 3,
            fn_: 0,
        })
        .unwrap();
        assert_eq!(m.accuracy, 5.0 / 6.0);
        assert_eq!(m.precision, 2.0 / 3.0);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.f1, 0.8);
        assert_eq!(m.fpr, 0.25);
        assert!(m.undefined.is_empty());
    }

    #[test]
    fn perfect_precision_shape() {
        // fp = 0 with detections: precision 1.0 and fpr 0.0 exactly.
        let m = metrics(&Confusion {
            tp: 40,
            fp: 0,
            tn: 50,
            fn_: 2,
        })
        .unwrap();
        assert_eq!(m.precision, 1.0);
        assert_eq!(m.fpr, 0.0);
        assert!(m.undefined.is_empty());
    }

    #[test]
    fn zero_denominators_are_flagged() {
        let m = metrics(&Confusion {
            tp: 0,
            fp: 0,
            tn: 4,
            fn_: 0,
        })
        .unwrap();
        assert_eq!(m.precision, 0.0);
        assert!(m.undefined.contains(&MetricName::Precision));
        assert!(m.undefined.contains(&MetricName::Recall));
        assert!(m.undefined.contains(&MetricName::F1));
        assert_eq!(m.accuracy, 1.0);

        assert!(metrics(&Confusion {
            tp: 0,
            fp: 0,
            tn: 0,
            fn_: 0
        })
        .is_err());
    }

    #[test]
    fn roc_perfect_inverted_and_tied() {
        let labels = [Malware, Malware, Clean, Clean];
        let scores = [0.9, 0.8, 0.2, 0.1];
        let curve = roc(&labels, &scores).unwrap();
        assert_eq!(curve.auc, 1.0);
        let first = curve.points.first().unwrap();
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        let last = curve.points.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));

        let inverted = [Clean, Clean, Malware, Malware];
        assert_eq!(roc(&inverted, &scores).unwrap().auc, 0.0);

        let tied = roc(&labels, &[0.5; 4]).unwrap();
        assert_eq!(tied.auc, 0.5);
        assert_eq!(tied.points.len(), 2);
    }

    #[test]
    fn roc_needs_both_classes() {
        assert!(roc(&[Malware, Malware], &[0.1, 0.2]).is_err());
    }

    fn toy_dataset(malware: usize, clean: usize) -> LabeledDataset {
        let n = malware + clean;
        let vectors = (0..n)
            .map(|i| SparseVector::new(vec![i % 3], 3).unwrap())
            .collect();
        let labels = (0..n)
            .map(|i| if i < malware { Malware } else { Clean })
            .collect();
        LabeledDataset::new(3, vectors, labels, None).unwrap()
    }

    #[test]
    fn split_preserves_class_proportions() {
        let ds = toy_dataset(100, 100);
        let (train, test) = split_train_test(&ds, 0.2, 9, true).unwrap();
        assert_eq!(test.class_counts(), (20, 20));
        assert_eq!(train.class_counts(), (80, 80));

        let small = toy_dataset(5, 5);
        let (_, test) = split_train_test(&small, 0.2, 9, true).unwrap();
        assert_eq!(test.class_counts(), (1, 1));
    }

    #[test]
    fn split_is_deterministic_and_exhaustive() {
        let ds = toy_dataset(31, 17);
        let a = stratified_split_indices(ds.labels(), 0.2, 4).unwrap();
        let b = stratified_split_indices(ds.labels(), 0.2, 4).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<usize> = a.0.iter().chain(a.1.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..48).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_bad_fraction_and_tiny_classes() {
        let ds = toy_dataset(4, 4);
        assert!(split_train_test(&ds, 0.0, 1, true).is_err());
        assert!(split_train_test(&ds, 1.0, 1, true).is_err());
        let tiny = toy_dataset(1, 5);
        assert!(stratified_split_indices(tiny.labels(), 0.2, 1).is_err());
    }

    #[test]
    fn kfold_balances_classes() {
        let ds = toy_dataset(10, 10);
        let folds = stratified_kfold(&ds, 5, 3).unwrap();
        for fold in &folds {
            let m = fold.iter().filter(|&&i| ds.labels()[i] == Malware).count();
            assert_eq!(m, 2);
            assert_eq!(fold.len(), 4);
        }
    }

    #[test]
    fn kfold_pigeonholes_the_remainder() {
        let ds = toy_dataset(11, 10);
        let folds = stratified_kfold(&ds, 5, 3).unwrap();
        let mut malware_sizes: Vec<usize> = folds
            .iter()
            .map(|fold| fold.iter().filter(|&&i| ds.labels()[i] == Malware).count())
            .collect();
        malware_sizes.sort_unstable();
        assert_eq!(malware_sizes, vec![2, 2, 2, 2, 3]);

        // Folds partition the index set.
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..21).collect::<Vec<_>>());
    }

    #[test]
    fn kfold_rejects_small_classes() {
        let ds = toy_dataset(3, 10);
        assert!(stratified_kfold(&ds, 5, 3).is_err());
    }

    #[test]
    fn tiny_families_are_skipped_with_a_reason() {
        let n = 64;
        let vectors: Vec<SparseVector> = (0..n)
            .map(|i| SparseVector::new(vec![i % 4], 4).unwrap())
            .collect();
        let labels: Vec<Label> = (0..n)
            .map(|i| if i % 2 == 0 { Malware } else { Clean })
            .collect();
        let families: Vec<String> = (0..n)
            .map(|i| {
                if i < 3 {
                    "rare".to_string()
                } else if i % 2 == 0 {
                    "common".to_string()
                } else {
                    "clean".to_string()
                }
            })
            .collect();
        let ds = LabeledDataset::new(4, vectors, labels, Some(families)).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 16,
            ..TrainConfig::default()
        };
        let report =
            evaluate_families(&ds, 2, &cfg, &InteractionMask::Full, 0.25, 0.5).unwrap();
        assert!(report.rows.iter().all(|r| r.family != "rare"));
        let (skipped, reason) = &report.skipped[0];
        assert_eq!(skipped, "rare");
        assert!(reason.contains("3 samples"), "{reason}");
    }

    proptest! {
        #[test]
        fn auc_is_invariant_under_monotone_transforms(
            scores in prop::collection::vec(0.01f64..0.99, 4..40),
            labels in prop::collection::vec(any::<bool>(), 4..40),
        ) {
            let n = scores.len().min(labels.len());
            let scores = &scores[..n];
            let labels: Vec<Label> = labels[..n]
                .iter()
                .map(|m| if *m { Malware } else { Clean })
                .collect();
            prop_assume!(labels.iter().any(|l| *l == Malware));
            prop_assume!(labels.iter().any(|l| *l == Clean));
            let base = roc(&labels, scores).unwrap();
            // Strictly monotone: logit then affine.
            let transformed: Vec<f64> = scores
                .iter()
                .map(|s| 3.0 * (s / (1.0 - s)).ln() + 7.0)
                .collect();
            let moved = roc(&labels, &transformed).unwrap();
            prop_assert!((base.auc - moved.auc).abs() < 1e-12);
        }

        #[test]
        fn roc_points_are_monotone(
            pairs in prop::collection::vec((0.0f64..1.0, any::<bool>()), 4..60),
        ) {
            let labels: Vec<Label> = pairs
                .iter()
                .map(|(_, m)| if *m { Malware } else { Clean })
                .collect();
            let scores: Vec<f64> = pairs.iter().map(|(s, _)| (s * 8.0).floor() / 8.0).collect();
            prop_assume!(labels.iter().any(|l| *l == Malware));
            prop_assume!(labels.iter().any(|l| *l == Clean));
            let curve = roc(&labels, &scores).unwrap();
            prop_assert!((0.0..=1.0).contains(&curve.auc));
            for w in curve.points.windows(2) {
                prop_assert!(w[1].fpr >= w[0].fpr);
                prop_assert!(w[1].tpr >= w[0].tpr);
                prop_assert!(w[1].threshold <= w[0].threshold);
            }
            let last = curve.points.last().unwrap();
            prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        }
    }
}
