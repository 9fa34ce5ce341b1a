//! Partial factorization machines: restricting the interaction term to
//! selected category pairs, verified against the quadratic reference routes.
//!
//! ```text
//! cargo run --release --example partial_mask
//! ```

use droidfm::corpus::{generate_dataset, CorpusSpec};
use droidfm::eval::{confusion, metrics, split_train_test};
use droidfm::fm::{train, CrossingOracle, InteractionMask};
use droidfm::{FeatureCategory, Result, TrainConfig};

fn main() -> Result<()> {
    let spec = CorpusSpec::desk_default();
    let (dataset, _, vocab) = generate_dataset(&spec)?;
    let cfg = TrainConfig {
        learning_rate: 0.2,
        adam_epsilon: 1.0,
        l2_w: 0.3,
        l2_v: 3e-5,
        ..TrainConfig::default()
    };
    let (train_ds, test_ds) = split_train_test(&dataset, 0.2, cfg.seed, true)?;

    // The desk corpus plants its rules across permission and hardware
    // features, so a mask allowing only those pairs keeps the signal while
    // discarding the vast majority of crossed terms.
    let masks = [
        ("full", InteractionMask::Full),
        (
            "perm:perm + perm:hw",
            InteractionMask::partial(
                [
                    (FeatureCategory::Permission, FeatureCategory::Permission),
                    (FeatureCategory::Permission, FeatureCategory::Hardware),
                ],
                vocab.categories(),
            )?,
        ),
        (
            "used_perm:perm",
            InteractionMask::partial(
                [(FeatureCategory::UsedPermission, FeatureCategory::Permission)],
                vocab.categories(),
            )?,
        ),
    ];

    for (name, mask) in masks {
        let model = train(&train_ds, 10, &cfg, mask)?;

        // Pin the masked fast path against both quadratic oracles.
        let oracle = CrossingOracle::from_model(&model);
        let mut worst = 0.0f64;
        for x in test_ds.vectors().iter().take(50) {
            let fast = model.predict_raw(x)?;
            let brute = model.predict_bruteforce(x)?;
            let crossed = oracle.predict_raw(x)?;
            worst = worst.max((fast - brute).abs()).max((crossed - brute).abs());
        }

        let predictions = test_ds
            .vectors()
            .iter()
            .map(|x| model.classify(x, 0.5))
            .collect::<Result<Vec<_>>>()?;
        let m = metrics(&confusion(test_ds.labels(), &predictions)?)?;
        println!(
            "{name:<22} accuracy {:.4}  recall {:.4}  fpr {:.4}  (oracle gap {worst:.1e})",
            m.accuracy, m.recall, m.fpr
        );
    }
    println!("\nmasks that keep the planted category pairs keep the accuracy;");
    println!("the used_perm:perm mask drops the planted pairs and the signal with them.");
    Ok(())
}
