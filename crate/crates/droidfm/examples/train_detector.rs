//! Train a factorization-machine detector on the synthetic desk corpus and
//! report held-out detection metrics.
//!
//! ```text
//! cargo run --release --example train_detector
//! ```

use droidfm::corpus::{generate_dataset, CorpusSpec};
use droidfm::eval::{confusion, metrics, roc, split_train_test};
use droidfm::fm::{train, InteractionMask};
use droidfm::{Label, TrainConfig};

fn main() -> droidfm::Result<()> {
    let spec = CorpusSpec::desk_default();
    let (dataset, truth, vocab) = generate_dataset(&spec)?;
    println!(
        "corpus: {} apps, {} features, {:.1} active per app, rule-token class gap {:.3}",
        dataset.len(),
        vocab.len(),
        truth.mean_active,
        truth.max_marginal_gap
    );

    // Optimizer settings for long sparse one-hot inputs: SGD-like Adam
    // epsilon, a hard-ridged linear term, and a lightly regularized latent
    // matrix.
    let cfg = TrainConfig {
        learning_rate: 0.2,
        adam_epsilon: 1.0,
        l2_w: 0.3,
        l2_v: 3e-5,
        ..TrainConfig::default()
    };
    let (train_ds, test_ds) = split_train_test(&dataset, 0.2, cfg.seed, true)?;
    println!(
        "split: {} train / {} test (stratified 80/20)",
        train_ds.len(),
        test_ds.len()
    );

    let started = std::time::Instant::now();
    let model = train(&train_ds, 10, &cfg, InteractionMask::Full)?;
    println!(
        "trained k=10 factorization machine in {:.1}s ({} parameters)",
        started.elapsed().as_secs_f64(),
        model.parameter_count()
    );

    let mut predictions = Vec::with_capacity(test_ds.len());
    let mut scores = Vec::with_capacity(test_ds.len());
    for x in test_ds.vectors() {
        predictions.push(model.classify(x, 0.5)?);
        scores.push(model.predict_proba(x)?);
    }
    let m = metrics(&confusion(test_ds.labels(), &predictions)?)?;
    let curve = roc(test_ds.labels(), &scores)?;

    println!("\ntest metrics at threshold 0.5:");
    println!("  accuracy   {:>7.4}", m.accuracy);
    println!("  precision  {:>7.4}", m.precision);
    println!("  recall     {:>7.4}", m.recall);
    println!("  f1         {:>7.4}", m.f1);
    println!("  fpr        {:>7.4}", m.fpr);
    println!("  auc        {:>7.4}", curve.auc);

    let (malware, clean) = test_ds.class_counts();
    let detected = predictions
        .iter()
        .filter(|p| **p == Label::Malware)
        .count();
    println!("\n{detected} of {} test apps flagged ({malware} malware / {clean} clean)", test_ds.len());
    Ok(())
}
