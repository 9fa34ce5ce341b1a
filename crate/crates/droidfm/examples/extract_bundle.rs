//! Extract the seven feature categories from a decompiled bundle using the
//! dictionaries shipped in `data/`.
//!
//! ```text
//! cargo run --example extract_bundle [BUNDLE_DIR]
//! ```
//!
//! Without an argument this runs on the checked-in `tiny_sms_app` fixture.

use std::collections::BTreeMap;

use droidfm::extract::{extract_bundle, AppBundle, Dictionaries};
use droidfm::vocab::build_vocabulary;
use droidfm::Result;

fn main() -> Result<()> {
    let root = env!("CARGO_MANIFEST_DIR");
    let bundle_dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| format!("{root}/tests/fixtures/bundles/tiny_sms_app"));

    let dicts = Dictionaries::load_dir(format!("{root}/data"))?;
    println!(
        "dictionaries: {} api-permission entries, {} restricted, {} suspicious",
        dicts.perm_map.len(),
        dicts.lists.restricted().len(),
        dicts.lists.suspicious().len()
    );

    let bundle = AppBundle::from_dir(&bundle_dir)?;
    println!(
        "bundle {bundle_dir}: manifest + {} smali files",
        bundle.smali_files().len()
    );

    let extraction = extract_bundle(&bundle, &dicts.perm_map, &dicts.lists)?;
    let mut by_category: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for token in &extraction.tokens {
        by_category
            .entry(token.category().tag())
            .or_default()
            .push(token.value().to_string());
    }
    println!("\nextracted {} tokens:", extraction.tokens.len());
    for (tag, values) in &by_category {
        println!("  {tag} ({}):", values.len());
        for value in values {
            println!("    {value}");
        }
    }
    if extraction.manifest_warnings + extraction.smali_warnings > 0 {
        println!(
            "\nwarnings: {} manifest, {} smali",
            extraction.manifest_warnings, extraction.smali_warnings
        );
    }

    // One-hot encoding against a vocabulary built from this app alone.
    let vocab = build_vocabulary([&extraction.tokens])?;
    let (vector, dropped) = vocab.encode(&extraction.tokens);
    println!(
        "\nencoded: {} of {} dimensions active, {dropped} tokens dropped",
        vector.active_count(),
        vector.dim()
    );
    Ok(())
}
