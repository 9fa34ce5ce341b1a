//! Feature extraction from decompiled app bundles: a decoded
//! `AndroidManifest.xml` plus a tree of `.smali` files, turned into the
//! seven categories of feature tokens.

pub mod dicts;
pub mod manifest;
pub mod smali;

use std::collections::BTreeSet;
use std::path::Path;

use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::token::{FeatureCategory, FeatureToken};

pub use dicts::{ApiLists, ApiPermissionMap, Dictionaries};
pub use manifest::{parse_manifest, ManifestFeatures};
pub use smali::{parse_smali_calls, ApiCall, SmaliScan};

/// A decompiled app: manifest text plus `(relative path, text)` smali files.
#[derive(Clone, Debug)]
pub struct AppBundle {
    manifest_text: String,
    smali_files: Vec<(String, String)>,
}

impl AppBundle {
    pub fn new(manifest_text: String, smali_files: Vec<(String, String)>) -> Result<Self> {
        if manifest_text.is_empty() {
            return Err(Error::InvalidInput("empty manifest".into()));
        }
        let mut seen = BTreeSet::new();
        for (path, _) in &smali_files {
            if !seen.insert(path) {
                return Err(Error::InvalidInput(format!("duplicate smali path {path}")));
            }
        }
        Ok(AppBundle {
            manifest_text,
            smali_files,
        })
    }

    /// Loads `<dir>/AndroidManifest.xml` and every `<dir>/smali/**/*.smali`,
    /// in sorted path order.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest_path = dir.join("AndroidManifest.xml");
        let manifest_text =
            std::fs::read_to_string(&manifest_path).map_err(Error::io(&manifest_path))?;

        let smali_root = dir.join("smali");
        let mut smali_files = Vec::new();
        if smali_root.is_dir() {
            for entry in WalkDir::new(&smali_root).sort_by_file_name() {
                let entry = entry.map_err(|e| Error::InvalidInput(e.to_string()))?;
                if !entry.file_type().is_file() {
                    continue;
                }
                if entry.path().extension().and_then(|e| e.to_str()) != Some("smali") {
                    continue;
                }
                let text =
                    std::fs::read_to_string(entry.path()).map_err(Error::io(entry.path()))?;
                let rel = entry
                    .path()
                    .strip_prefix(dir)
                    .unwrap_or(entry.path())
                    .to_string_lossy()
                    .into_owned();
                smali_files.push((rel, text));
            }
        }
        AppBundle::new(manifest_text, smali_files)
    }

    pub fn manifest_text(&self) -> &str {
        &self.manifest_text
    }

    pub fn smali_files(&self) -> &[(String, String)] {
        &self.smali_files
    }
}

/// The code-side feature sets derived from observed API calls.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CodeFeatures {
    pub restricted: BTreeSet<FeatureToken>,
    pub suspicious: BTreeSet<FeatureToken>,
    pub used_permissions: BTreeSet<FeatureToken>,
}

/// Maps calls against the dictionaries:
/// * calls on the suspicious list become `api_susp` tokens;
/// * calls on the restricted list become `api_restr` tokens, plus the
///   missing-permission variant when the call's required permissions are not
///   all declared in the manifest;
/// * every permission the permission map links to an observed call becomes a
///   `used_perm` token.
pub fn derive_code_features(
    calls: &BTreeSet<ApiCall>,
    declared_permissions: &BTreeSet<FeatureToken>,
    perm_map: &ApiPermissionMap,
    lists: &ApiLists,
) -> CodeFeatures {
    let declared: BTreeSet<&str> = declared_permissions
        .iter()
        .filter(|t| t.category() == FeatureCategory::Permission)
        .map(|t| t.value())
        .collect();

    let mut out = CodeFeatures::default();
    for call in calls {
        let canonical = call.canonical();
        if lists.suspicious().contains(&canonical) {
            if let Ok(token) = FeatureToken::new(FeatureCategory::SuspiciousApi, &canonical) {
                out.suspicious.insert(token);
            }
        }
        let required = perm_map.get(&canonical);
        if lists.restricted().contains(&canonical) {
            if let Ok(token) = FeatureToken::restricted(&canonical) {
                out.restricted.insert(token);
            }
            let all_declared = required
                .map(|perms| perms.iter().all(|p| declared.contains(p.as_str())))
                .unwrap_or(true);
            if !all_declared {
                if let Ok(token) = FeatureToken::restricted_missing_perm(&canonical) {
                    out.restricted.insert(token);
                }
            }
        }
        if let Some(perms) = required {
            for perm in perms {
                if let Ok(token) = FeatureToken::new(FeatureCategory::UsedPermission, perm) {
                    out.used_permissions.insert(token);
                }
            }
        }
    }
    out
}

/// Everything extracted from one bundle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Extraction {
    pub tokens: BTreeSet<FeatureToken>,
    pub manifest_warnings: usize,
    pub smali_warnings: usize,
}

/// Full pipeline over one bundle: manifest features, the union of API calls
/// across all smali files, and the derived code features. Deterministic for
/// identical bundles; manifest parse errors propagate, smali oddities only
/// aggregate into warnings.
pub fn extract_bundle(
    bundle: &AppBundle,
    perm_map: &ApiPermissionMap,
    lists: &ApiLists,
) -> Result<Extraction> {
    let manifest = parse_manifest(bundle.manifest_text())?;

    let mut scan = SmaliScan::default();
    for (_, text) in bundle.smali_files() {
        scan.merge(parse_smali_calls(text));
    }
    let code = derive_code_features(&scan.calls, &manifest.permissions, perm_map, lists);

    let mut tokens = BTreeSet::new();
    tokens.extend(manifest.components);
    tokens.extend(manifest.hardware);
    tokens.extend(manifest.permissions);
    tokens.extend(manifest.intent_filters);
    tokens.extend(code.restricted);
    tokens.extend(code.suspicious);
    tokens.extend(code.used_permissions);

    Ok(Extraction {
        tokens,
        manifest_warnings: manifest.warnings,
        smali_warnings: scan.warnings,
    })
}
