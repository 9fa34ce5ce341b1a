//! Per-family one-vs-rest classification, clean apps included as the family
//! `"clean"`.
//!
//! ```text
//! cargo run --release --example family_report
//! ```

use droidfm::corpus::{generate_dataset, CorpusSpec};
use droidfm::eval::evaluate_families;
use droidfm::fm::InteractionMask;
use droidfm::{Result, TrainConfig};

fn main() -> Result<()> {
    let spec = CorpusSpec {
        n_apps: 4000,
        noise_rate: 0.0,
        ..CorpusSpec::desk_default()
    };
    let (dataset, _, _) = generate_dataset(&spec)?;
    let cfg = TrainConfig {
        learning_rate: 0.2,
        adam_epsilon: 1.0,
        l2_w: 0.3,
        l2_v: 3e-5,
        ..TrainConfig::default()
    };

    let report = evaluate_families(&dataset, 10, &cfg, &InteractionMask::Full, 0.2, 0.5)?;
    println!("family     samples  precision  recall    f1       fpr");
    for row in &report.rows {
        println!(
            "{:<10} {:>7}  {:>9.4}  {:>6.4}  {:>7.4}  {:>6.4}",
            row.family,
            row.samples,
            row.metrics.precision,
            row.metrics.recall,
            row.metrics.f1,
            row.metrics.fpr
        );
    }
    let avg = &report.macro_avg;
    println!(
        "{:<10} {:>7}  {:>9.4}  {:>6.4}  {:>7.4}  {:>6.4}",
        "Average", "", avg.precision, avg.recall, avg.f1, avg.fpr
    );
    for (family, reason) in &report.skipped {
        println!("skipped {family}: {reason}");
    }
    Ok(())
}
