//! Stratified 5-fold cross-validation of the factorization machine.
//!
//! ```text
//! cargo run --release --example cross_validate
//! ```

use droidfm::corpus::{generate_dataset, CorpusSpec};
use droidfm::eval::cross_validate;
use droidfm::fm::InteractionMask;
use droidfm::{Result, TrainConfig};

fn main() -> Result<()> {
    let spec = CorpusSpec {
        n_apps: 1500,
        ..CorpusSpec::desk_default()
    };
    let (dataset, _, _) = generate_dataset(&spec)?;
    let cfg = TrainConfig {
        epochs: 120,
        learning_rate: 0.2,
        adam_epsilon: 1.0,
        l2_w: 0.3,
        l2_v: 3e-5,
        ..TrainConfig::default()
    };

    let folds = cross_validate(&dataset, 5, 10, &cfg, &InteractionMask::Full, 0.5)?;
    println!("fold  accuracy  precision  recall    f1       fpr");
    for (i, m) in folds.iter().enumerate() {
        println!(
            "{:>4}  {:>8.4}  {:>9.4}  {:>6.4}  {:>7.4}  {:>6.4}",
            i + 1,
            m.accuracy,
            m.precision,
            m.recall,
            m.f1,
            m.fpr
        );
    }
    let mean = |pick: fn(&droidfm::eval::Metrics) -> f64| {
        folds.iter().map(|m| pick(m)).sum::<f64>() / folds.len() as f64
    };
    println!(
        "mean  {:>8.4}  {:>9.4}  {:>6.4}  {:>7.4}  {:>6.4}",
        mean(|m| m.accuracy),
        mean(|m| m.precision),
        mean(|m| m.recall),
        mean(|m| m.f1),
        mean(|m| m.fpr)
    );
    Ok(())
}
