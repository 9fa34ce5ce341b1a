//! The on-disk pipeline: write a corpus as decompiled bundles, run
//! extraction over the files, and verify the round trip recovers exactly the
//! token sets the generator intended.
//!
//! ```text
//! cargo run --example bundle_round_trip
//! ```

use droidfm::corpus::{generate, generate_bundles, read_labels_csv, CorpusSpec, PoolSizes};
use droidfm::extract::{extract_bundle, AppBundle, Dictionaries};
use droidfm::vocab::build_vocabulary;
use droidfm::Result;

fn main() -> Result<()> {
    let out = std::env::temp_dir().join("droidfm-bundle-round-trip");
    if out.exists() {
        std::fs::remove_dir_all(&out).map_err(droidfm::Error::io(&out))?;
    }
    let spec = CorpusSpec {
        n_apps: 60,
        target_active_mean: 25.0,
        pools: PoolSizes {
            components: 60,
            hardware: 15,
            permissions: 50,
            intent_filters: 30,
            restricted_apis: 20,
            suspicious_apis: 25,
            used_permissions: 15,
        },
        ..CorpusSpec::desk_default()
    };
    generate_bundles(&spec, &out)?;
    println!("wrote {} bundles under {}", spec.n_apps, out.display());

    let dicts = Dictionaries::load_dir(out.join("dicts"))?;
    let labels = read_labels_csv(out.join("labels.csv"))?;
    let reference = generate(&spec)?;

    let mut token_sets = Vec::new();
    for (app, (app_id, label, family)) in reference.apps.iter().zip(&labels) {
        let bundle = AppBundle::from_dir(out.join(app_id))?;
        let extraction = extract_bundle(&bundle, &dicts.perm_map, &dicts.lists)?;
        assert_eq!(&extraction.tokens, &app.tokens, "token set for {app_id}");
        assert_eq!(*label, app.label);
        assert_eq!(family, &app.family);
        token_sets.push(extraction.tokens);
    }
    println!("extraction recovered every app's token set exactly");

    let vocab = build_vocabulary(token_sets.iter())?;
    println!(
        "vocabulary over the corpus: {} features across 7 categories",
        vocab.len()
    );
    let (first, dropped) = vocab.encode(&token_sets[0]);
    println!(
        "first app encodes to {} active of {} dims ({dropped} dropped)",
        first.active_count(),
        first.dim()
    );
    Ok(())
}
