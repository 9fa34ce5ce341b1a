//! Synthetic decompiled-app corpora with planted pairwise malice rules.
//!
//! An app is labeled malware iff both tokens of some rule are co-active and
//! that rule fires. Each rule token's marginal activation is equalized
//! between the classes (malware apps carry the forced pair, clean apps carry
//! planted singletons at a matching rate), so no single feature separates
//! the classes: the label signal lives entirely in the pair. That makes the
//! second-order-vs-first-order comparison a property of the data rather than
//! an accident of it.
//!
//! Generation is fully deterministic given the spec seed: every app draws
//! from its own derived stream, so bundle trees are byte-identical across
//! runs and app generation could be parallelized without changing output.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Label, LabeledDataset};
use crate::error::{Error, Result};
use crate::extract::{derive_code_features, ApiCall, ApiLists, ApiPermissionMap, Dictionaries};
use crate::optim::{seeded_rng, STREAM_APP_BASE, STREAM_NOISE};
use crate::token::{FeatureCategory, FeatureToken};
use crate::vocab::{build_vocabulary, Vocabulary};

/// Pool sizes per feature category. Restricted APIs weigh three tokens per
/// activation (the call token, its inferred permission, and either the
/// manifest declaration or the missing-permission variant).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolSizes {
    pub components: usize,
    pub hardware: usize,
    pub permissions: usize,
    pub intent_filters: usize,
    pub restricted_apis: usize,
    pub suspicious_apis: usize,
    pub used_permissions: usize,
}

impl Default for PoolSizes {
    fn default() -> Self {
        PoolSizes {
            components: 260,
            hardware: 40,
            permissions: 160,
            intent_filters: 120,
            restricted_apis: 90,
            suspicious_apis: 100,
            used_permissions: 70,
        }
    }
}

impl PoolSizes {
    fn of(&self, category: FeatureCategory) -> usize {
        match category {
            FeatureCategory::Component => self.components,
            FeatureCategory::Hardware => self.hardware,
            FeatureCategory::Permission => self.permissions,
            FeatureCategory::IntentFilter => self.intent_filters,
            FeatureCategory::RestrictedApi => self.restricted_apis,
            FeatureCategory::SuspiciousApi => self.suspicious_apis,
            FeatureCategory::UsedPermission => self.used_permissions,
        }
    }
}

/// One planted malice rule: a pair of manifest features whose co-presence
/// (and nothing weaker) marks an app as this family's malware.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaliceRule {
    pub pair: (FeatureToken, FeatureToken),
    pub family: String,
    #[serde(default = "default_fire_probability")]
    pub fire_probability: f64,
}

fn default_fire_probability() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub n_apps: usize,
    pub malware_fraction: f64,
    pub pools: PoolSizes,
    pub rules: Vec<MaliceRule>,
    /// Per-token activation probability for pool tokens. Zero means
    /// "calibrate from `target_active_mean`", which is the usual mode.
    pub base_activation: f64,
    /// Fraction of labels flipped after generation (exactly
    /// `round(noise_rate * n_apps)` apps, chosen by seed).
    pub noise_rate: f64,
    /// Expected number of active features per app.
    pub target_active_mean: f64,
    /// Declared bound on the class-conditional marginal difference of any
    /// rule token; realized gaps are reported in [`GroundTruth`].
    pub max_marginal_gap: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self::desk_default()
    }
}

impl CorpusSpec {
    /// The desk-scale corpus: 2,000 apps, three planted families over
    /// permission/hardware pairs, pools totaling about a thousand tokens,
    /// and the sparsity of real one-hot app vectors (73 active features on
    /// average).
    pub fn desk_default() -> Self {
        let perm = |v: &str| FeatureToken::new(FeatureCategory::Permission, v).unwrap();
        let hw = |v: &str| FeatureToken::new(FeatureCategory::Hardware, v).unwrap();
        CorpusSpec {
            n_apps: 2000,
            malware_fraction: 0.5,
            pools: PoolSizes::default(),
            rules: vec![
                MaliceRule {
                    pair: (
                        perm("android.permission.ACCESS_FINE_LOCATION"),
                        perm("android.permission.SEND_SMS"),
                    ),
                    family: "geosms".into(),
                    fire_probability: 1.0,
                },
                MaliceRule {
                    pair: (
                        perm("android.permission.BLUETOOTH"),
                        perm("android.permission.CHANGE_WIFI_STATE"),
                    ),
                    family: "wifispy".into(),
                    fire_probability: 1.0,
                },
                MaliceRule {
                    pair: (
                        perm("android.permission.RECEIVE_BOOT_COMPLETED"),
                        hw("android.hardware.camera"),
                    ),
                    family: "bootcam".into(),
                    fire_probability: 1.0,
                },
            ],
            base_activation: 0.0,
            noise_rate: 0.01,
            target_active_mean: 73.0,
            max_marginal_gap: 0.1,
            seed: 42,
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        let spec: CorpusSpec = toml::from_str(&text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].lines().count())
                .unwrap_or(0);
            Error::Parse {
                path: path.display().to_string(),
                line,
                msg: e.message().to_string(),
            }
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::InvalidConfig(format!("cannot serialize corpus spec: {e}")))?;
        fs::write(path, text).map_err(Error::io(path))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_apps == 0 {
            return Err(Error::InvalidConfig("n_apps must be positive".into()));
        }
        if !(self.malware_fraction > 0.0 && self.malware_fraction < 1.0) {
            return Err(Error::InvalidConfig("malware_fraction must be in (0,1)".into()));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(Error::InvalidConfig("noise_rate must be in [0,1)".into()));
        }
        if !(self.target_active_mean > 0.0) {
            return Err(Error::InvalidConfig("target_active_mean must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.base_activation) {
            return Err(Error::InvalidConfig("base_activation must be in [0,1]".into()));
        }
        if !(self.max_marginal_gap > 0.0) {
            return Err(Error::InvalidConfig("max_marginal_gap must be positive".into()));
        }
        for rule in &self.rules {
            if rule.pair.0 == rule.pair.1 {
                return Err(Error::InvalidConfig(format!(
                    "rule {} pairs a token with itself",
                    rule.family
                )));
            }
            if !(rule.fire_probability > 0.0 && rule.fire_probability <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "rule {} fire_probability must be in (0,1]",
                    rule.family
                )));
            }
            if rule.family.is_empty() || rule.family.contains(char::is_whitespace) {
                return Err(Error::InvalidConfig(format!(
                    "bad rule family name {:?}",
                    rule.family
                )));
            }
            for token in [&rule.pair.0, &rule.pair.1] {
                let cat = token.category();
                let manifest_side = matches!(
                    cat,
                    FeatureCategory::Component
                        | FeatureCategory::Hardware
                        | FeatureCategory::Permission
                        | FeatureCategory::IntentFilter
                );
                if !manifest_side {
                    return Err(Error::InvalidConfig(format!(
                        "rule token {token} must be a manifest-side feature"
                    )));
                }
                if self.pools.of(cat) == 0 {
                    return Err(Error::InvalidConfig(format!(
                        "rule token {token} uses category {cat} whose pool is empty"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Ground truth for one generated app.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AppTruth {
    pub app_id: String,
    pub label: Label,
    pub family: String,
    /// Rules whose token pair is fully present in the app.
    pub coactive_rules: Vec<usize>,
    /// The rule that fired and set the (pre-noise) malware label.
    pub fired_rule: Option<usize>,
    /// Label inverted by the noise pass.
    pub flipped: bool,
}

/// Ground truth and the realized corpus statistics that certify the
/// construction: how sparse the apps came out and how close the rule-token
/// marginals are between classes.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub apps: Vec<AppTruth>,
    pub mean_active: f64,
    /// Largest class-conditional activation difference over rule tokens.
    pub max_marginal_gap: f64,
}

/// One generated app with everything needed to realize it on disk.
#[derive(Clone, Debug)]
pub struct GeneratedApp {
    pub id: String,
    pub components: BTreeSet<FeatureToken>,
    pub hardware: BTreeSet<FeatureToken>,
    pub permissions: BTreeSet<FeatureToken>,
    pub intent_filters: BTreeSet<FeatureToken>,
    pub calls: BTreeSet<ApiCall>,
    /// The full token set extraction must recover.
    pub tokens: BTreeSet<FeatureToken>,
    pub label: Label,
    pub family: String,
}

pub struct GeneratedCorpus {
    pub apps: Vec<GeneratedApp>,
    pub dictionaries: Dictionaries,
    pub truth: GroundTruth,
}

struct Pools {
    components: Vec<FeatureToken>,
    hardware: Vec<FeatureToken>,
    permissions: Vec<FeatureToken>,
    intent_filters: Vec<FeatureToken>,
    suspicious: Vec<ApiCall>,
    restricted: Vec<(ApiCall, String)>,
    used: Vec<(ApiCall, String)>,
}

fn build_pools(sizes: &PoolSizes) -> Pools {
    let token = |cat, v: String| FeatureToken::new(cat, v).expect("generated names are valid");
    Pools {
        components: (0..sizes.components)
            .map(|i| token(FeatureCategory::Component, format!("com.genapp.c{i:04}.Main")))
            .collect(),
        hardware: (0..sizes.hardware)
            .map(|i| token(FeatureCategory::Hardware, format!("android.hardware.gen{i:03}")))
            .collect(),
        permissions: (0..sizes.permissions)
            .map(|i| token(FeatureCategory::Permission, format!("android.permission.GEN_{i:03}")))
            .collect(),
        intent_filters: (0..sizes.intent_filters)
            .map(|i| {
                let kind = if i % 2 == 0 { "action" } else { "category" };
                token(
                    FeatureCategory::IntentFilter,
                    format!("android.intent.{kind}.GEN_{i:03}"),
                )
            })
            .collect(),
        suspicious: (0..sizes.suspicious_apis)
            .map(|i| ApiCall::new(format!("Lgen/susp/Util{i:03};"), "run").unwrap())
            .collect(),
        restricted: (0..sizes.restricted_apis)
            .map(|i| {
                (
                    ApiCall::new(format!("Lgen/restr/Svc{i:03};"), "exec").unwrap(),
                    format!("gen.permission.RESTR_{i:03}"),
                )
            })
            .collect(),
        used: (0..sizes.used_permissions)
            .map(|i| {
                (
                    ApiCall::new(format!("Lgen/used/Api{i:03};"), "call").unwrap(),
                    format!("gen.permission.USED_{i:03}"),
                )
            })
            .collect(),
    }
}

/// The synthetic dictionaries matching the generator's API pools.
fn build_dictionaries(pools: &Pools) -> Dictionaries {
    let perm_map = ApiPermissionMap::from_entries(
        pools
            .restricted
            .iter()
            .chain(pools.used.iter())
            .map(|(call, perm)| (call.clone(), vec![perm.clone()])),
    )
    .expect("generated permissions are non-empty");
    let lists = ApiLists::new(
        pools.restricted.iter().map(|(c, _)| c.canonical()).collect(),
        pools.suspicious.iter().map(|c| c.canonical()).collect(),
        &perm_map,
    )
    .expect("restricted pool is in the permission map");
    Dictionaries { perm_map, lists }
}

/// Probability that a restricted pick also declares its permission in the
/// manifest; the complement exercises the missing-permission tokens.
const RESTRICTED_DECLARED_PROB: f64 = 0.7;

struct Calibration {
    p_intent: f64,
    /// Per-rule singleton rate for clean(-intent) apps.
    single_rate_clean: f64,
    /// Per-rule singleton rate on the rules a malware app did not use.
    single_rate_malware: f64,
    /// Activation probability per pool token, in pool iteration order
    /// (components, hardware, permissions, intent filters, suspicious,
    /// restricted, used). Rule tokens get probability zero here.
    token_probs: Vec<f64>,
}

/// Zipf exponent of the token popularity profile used in calibrated mode:
/// a few near-universal features and a long rare tail, like real app
/// feature sets.
const POPULARITY_EXPONENT: f64 = 1.0;
const MAX_TOKEN_PROB: f64 = 0.95;

fn calibrate(spec: &CorpusSpec, pools: &Pools, rule_tokens: &BTreeSet<FeatureToken>) -> Result<Calibration> {
    let n_rules = spec.rules.len();

    let (p_intent, single_rate_clean, single_rate_malware) = if n_rules == 0 {
        (0.0, 0.0, 0.0)
    } else {
        let r = n_rules as f64;
        let mean_fire =
            spec.rules.iter().map(|rule| rule.fire_probability).sum::<f64>() / r;
        let p_intent = spec.malware_fraction / mean_fire;
        if p_intent > 1.0 {
            return Err(Error::InfeasibleCorpus(format!(
                "malware_fraction {} is unreachable with mean fire probability {mean_fire}",
                spec.malware_fraction
            )));
        }
        // Marginal balancing: a malware app carries its own rule's pair, so
        // clean apps plant one token of each rule at rate gamma, which puts
        // the structural per-token class gap at 1/R - gamma/2. An eighth of
        // the declared margin funds that structural gap; the remainder
        // absorbs sampling noise, so realized gaps stay inside the bound.
        // When gamma exceeds 2/R (very tight margins), malware apps also
        // plant singletons on their unused rules at the reduced rate gamma'
        // solving 1/R + (1 - 1/R) * gamma'/2 = gamma/2.
        let gamma = (2.0 / r - spec.max_marginal_gap / 8.0).clamp(0.0, 0.95);
        let gamma_prime = if n_rules > 1 {
            ((gamma - 2.0 / r) / (1.0 - 1.0 / r)).max(0.0)
        } else {
            0.0
        };
        (p_intent, gamma, gamma_prime)
    };

    // Expected rule tokens per app (equal between classes when equalization
    // is feasible).
    let r = n_rules as f64;
    let expected_rule = p_intent * (2.0 + (r - 1.0).max(0.0) * single_rate_malware)
        + (1.0 - p_intent) * r * single_rate_clean;

    // Pool tokens in draw order, with their closure weight (tokens emitted
    // per activation) and popularity rank within their pool. Rule tokens
    // are managed by the rule logic, never by baseline draws.
    let mut weights = Vec::new();
    let mut zipf = Vec::new();
    let manifest_pools = [
        &pools.components,
        &pools.hardware,
        &pools.permissions,
        &pools.intent_filters,
    ];
    for pool in manifest_pools {
        for (rank, token) in pool.iter().enumerate() {
            let excluded = rule_tokens.contains(token);
            weights.push(if excluded { 0.0 } else { 1.0 });
            zipf.push(1.0 / (1.0 + rank as f64).powf(POPULARITY_EXPONENT));
        }
    }
    for rank in 0..pools.suspicious.len() {
        weights.push(1.0);
        zipf.push(1.0 / (1.0 + rank as f64).powf(POPULARITY_EXPONENT));
    }
    for rank in 0..pools.restricted.len() {
        weights.push(3.0);
        zipf.push(1.0 / (1.0 + rank as f64).powf(POPULARITY_EXPONENT));
    }
    for rank in 0..pools.used.len() {
        weights.push(1.0);
        zipf.push(1.0 / (1.0 + rank as f64).powf(POPULARITY_EXPONENT));
    }

    let budget = spec.target_active_mean - expected_rule;
    if budget <= 0.0 {
        return Err(Error::InfeasibleCorpus(format!(
            "target_active_mean {} is below the expected rule-token count {expected_rule:.2}",
            spec.target_active_mean
        )));
    }

    let token_probs: Vec<f64> = if spec.base_activation > 0.0 {
        // Explicit uniform mode: every pool token activates at the given
        // rate; validate that it coheres with the sparsity target.
        let probs: Vec<f64> = weights
            .iter()
            .map(|w| if *w > 0.0 { spec.base_activation } else { 0.0 })
            .collect();
        let expected: f64 = weights.iter().zip(&probs).map(|(w, p)| w * p).sum::<f64>()
            + expected_rule;
        let relative_err = (expected - spec.target_active_mean).abs() / spec.target_active_mean;
        if relative_err > 0.15 {
            return Err(Error::InfeasibleCorpus(format!(
                "base_activation {} gives mean active count {expected:.1}, more than 15% from \
                 target {}",
                spec.base_activation, spec.target_active_mean
            )));
        }
        probs
    } else {
        // Calibrated mode: Zipf-shaped popularity scaled so the expected
        // active count hits the target, with per-token probability capped.
        let expected_at = |c: f64| -> f64 {
            weights
                .iter()
                .zip(&zipf)
                .map(|(w, z)| w * (c * z).min(MAX_TOKEN_PROB))
                .sum()
        };
        let ceiling: f64 = weights.iter().sum::<f64>() * MAX_TOKEN_PROB;
        if ceiling < budget {
            return Err(Error::InfeasibleCorpus(format!(
                "pool too small for target mean: {ceiling:.1} weighted tokens available, \
                 {budget:.1} needed"
            )));
        }
        let mut hi = 1.0;
        while expected_at(hi) < budget {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if expected_at(mid) < budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let c = 0.5 * (lo + hi);
        weights
            .iter()
            .zip(&zipf)
            .map(|(w, z)| if *w > 0.0 { (c * z).min(MAX_TOKEN_PROB) } else { 0.0 })
            .collect()
    };

    Ok(Calibration {
        p_intent,
        single_rate_clean,
        single_rate_malware,
        token_probs,
    })
}

pub fn generate(spec: &CorpusSpec) -> Result<GeneratedCorpus> {
    spec.validate()?;
    let pools = build_pools(&spec.pools);
    let dictionaries = build_dictionaries(&pools);
    let rule_tokens: BTreeSet<FeatureToken> = spec
        .rules
        .iter()
        .flat_map(|r| [r.pair.0.clone(), r.pair.1.clone()])
        .collect();
    let cal = calibrate(spec, &pools, &rule_tokens)?;

    let id_width = spec.n_apps.max(1).ilog10() as usize + 1;
    let mut apps = Vec::with_capacity(spec.n_apps);
    let mut truths = Vec::with_capacity(spec.n_apps);
    for index in 0..spec.n_apps {
        let (app, truth) = sample_app(spec, &pools, &dictionaries, &cal, index, id_width);
        apps.push(app);
        truths.push(truth);
    }

    apply_label_noise(spec, &mut apps, &mut truths);

    let mean_active =
        apps.iter().map(|a| a.tokens.len() as f64).sum::<f64>() / apps.len().max(1) as f64;
    let max_marginal_gap = marginal_gap(&apps, &rule_tokens);

    Ok(GeneratedCorpus {
        apps,
        dictionaries,
        truth: GroundTruth {
            apps: truths,
            mean_active,
            max_marginal_gap,
        },
    })
}

fn sample_app(
    spec: &CorpusSpec,
    pools: &Pools,
    dicts: &Dictionaries,
    cal: &Calibration,
    index: usize,
    id_width: usize,
) -> (GeneratedApp, AppTruth) {
    let mut rng = seeded_rng(spec.seed, STREAM_APP_BASE + index as u64);
    let id = format!("app_{index:0id_width$}");

    let mut components = BTreeSet::new();
    let mut hardware = BTreeSet::new();
    let mut permissions = BTreeSet::new();
    let mut intent_filters = BTreeSet::new();
    let mut calls: BTreeSet<ApiCall> = BTreeSet::new();

    let place_manifest_token =
        |token: &FeatureToken,
         components: &mut BTreeSet<FeatureToken>,
         hardware: &mut BTreeSet<FeatureToken>,
         permissions: &mut BTreeSet<FeatureToken>,
         intent_filters: &mut BTreeSet<FeatureToken>| {
            match token.category() {
                FeatureCategory::Component => components.insert(token.clone()),
                FeatureCategory::Hardware => hardware.insert(token.clone()),
                FeatureCategory::Permission => permissions.insert(token.clone()),
                FeatureCategory::IntentFilter => intent_filters.insert(token.clone()),
                _ => unreachable!("rule tokens are manifest-side"),
            };
        };

    // Rule handling: malware intent forces one rule's pair; every other rule
    // contributes at most a singleton so that per-token marginals match
    // across classes.
    let n_rules = spec.rules.len();
    let intent = n_rules > 0 && rng.gen::<f64>() < cal.p_intent;
    let chosen = if intent { Some(rng.gen_range(0..n_rules)) } else { None };
    for (r, rule) in spec.rules.iter().enumerate() {
        if chosen == Some(r) {
            for token in [&rule.pair.0, &rule.pair.1] {
                place_manifest_token(
                    token,
                    &mut components,
                    &mut hardware,
                    &mut permissions,
                    &mut intent_filters,
                );
            }
            continue;
        }
        let rate = if intent {
            cal.single_rate_malware
        } else {
            cal.single_rate_clean
        };
        if rate > 0.0 && rng.gen::<f64>() < rate {
            let token = if rng.gen_bool(0.5) { &rule.pair.0 } else { &rule.pair.1 };
            place_manifest_token(
                token,
                &mut components,
                &mut hardware,
                &mut permissions,
                &mut intent_filters,
            );
        }
    }

    // Baseline pool draws: one probability per pool token, in the same
    // order calibration laid them out. Rule tokens have probability zero.
    let mut probs = cal.token_probs.iter().copied();
    for (pool, set) in [
        (&pools.components, &mut components),
        (&pools.hardware, &mut hardware),
        (&pools.permissions, &mut permissions),
        (&pools.intent_filters, &mut intent_filters),
    ] {
        for token in pool {
            let p = probs.next().expect("calibration covers every pool token");
            if p > 0.0 && rng.gen::<f64>() < p {
                set.insert(token.clone());
            }
        }
    }
    for call in &pools.suspicious {
        let p = probs.next().expect("calibration covers every pool token");
        if p > 0.0 && rng.gen::<f64>() < p {
            calls.insert(call.clone());
        }
    }
    for (call, perm) in &pools.restricted {
        let p = probs.next().expect("calibration covers every pool token");
        if p > 0.0 && rng.gen::<f64>() < p {
            calls.insert(call.clone());
            if rng.gen::<f64>() < RESTRICTED_DECLARED_PROB {
                permissions.insert(
                    FeatureToken::new(FeatureCategory::Permission, perm)
                        .expect("generated permission names are valid"),
                );
            }
        }
    }
    for (call, _) in &pools.used {
        let p = probs.next().expect("calibration covers every pool token");
        if p > 0.0 && rng.gen::<f64>() < p {
            calls.insert(call.clone());
        }
    }

    // Token closure via the real extraction rules, so generated bundles and
    // extracted bundles agree by construction.
    let code = derive_code_features(&calls, &permissions, &dicts.perm_map, &dicts.lists);
    let mut tokens = BTreeSet::new();
    tokens.extend(components.iter().cloned());
    tokens.extend(hardware.iter().cloned());
    tokens.extend(permissions.iter().cloned());
    tokens.extend(intent_filters.iter().cloned());
    tokens.extend(code.restricted);
    tokens.extend(code.suspicious);
    tokens.extend(code.used_permissions);

    // Labeling: a rule whose pair is fully present may fire.
    let mut coactive = Vec::new();
    let mut fired = None;
    for (r, rule) in spec.rules.iter().enumerate() {
        if tokens.contains(&rule.pair.0) && tokens.contains(&rule.pair.1) {
            coactive.push(r);
            if fired.is_none() && rng.gen::<f64>() < rule.fire_probability {
                fired = Some(r);
            }
        }
    }
    let (label, family) = match fired {
        Some(r) => (Label::Malware, spec.rules[r].family.clone()),
        None => (Label::Clean, "clean".to_string()),
    };

    let app = GeneratedApp {
        id: id.clone(),
        components,
        hardware,
        permissions,
        intent_filters,
        calls,
        tokens,
        label,
        family,
    };
    let truth = AppTruth {
        app_id: id,
        label,
        family: app.family.clone(),
        coactive_rules: coactive,
        fired_rule: fired,
        flipped: false,
    };
    (app, truth)
}

/// Flips exactly `round(noise_rate * n_apps)` labels, chosen by seed.
fn apply_label_noise(spec: &CorpusSpec, apps: &mut [GeneratedApp], truths: &mut [AppTruth]) {
    let flips = (spec.noise_rate * spec.n_apps as f64).round() as usize;
    if flips == 0 {
        return;
    }
    let mut order: Vec<usize> = (0..apps.len()).collect();
    let mut rng = seeded_rng(spec.seed, STREAM_NOISE);
    crate::fm::shuffle(&mut order, &mut rng);
    for &i in order.iter().take(flips) {
        let (label, family) = match apps[i].label {
            Label::Malware => (Label::Clean, "clean".to_string()),
            Label::Clean => (Label::Malware, "noise".to_string()),
        };
        apps[i].label = label;
        apps[i].family = family.clone();
        truths[i].label = label;
        truths[i].family = family;
        truths[i].flipped = true;
    }
}

fn marginal_gap(apps: &[GeneratedApp], rule_tokens: &BTreeSet<FeatureToken>) -> f64 {
    let malware: Vec<&GeneratedApp> =
        apps.iter().filter(|a| a.label == Label::Malware).collect();
    let clean: Vec<&GeneratedApp> = apps.iter().filter(|a| a.label == Label::Clean).collect();
    if malware.is_empty() || clean.is_empty() {
        return 0.0;
    }
    let mut gap = 0.0f64;
    for token in rule_tokens {
        let p_mal = malware.iter().filter(|a| a.tokens.contains(token)).count() as f64
            / malware.len() as f64;
        let p_cln =
            clean.iter().filter(|a| a.tokens.contains(token)).count() as f64 / clean.len() as f64;
        gap = gap.max((p_mal - p_cln).abs());
    }
    gap
}

/// Generates the corpus and encodes it: the labeled dataset, the ground
/// truth, and the vocabulary (the union of all apps' tokens).
pub fn generate_dataset(spec: &CorpusSpec) -> Result<(LabeledDataset, GroundTruth, Vocabulary)> {
    let corpus = generate(spec)?;
    let vocab = build_vocabulary(corpus.apps.iter().map(|a| &a.tokens))?;
    let mut vectors = Vec::with_capacity(corpus.apps.len());
    let mut labels = Vec::with_capacity(corpus.apps.len());
    let mut families = Vec::with_capacity(corpus.apps.len());
    for app in &corpus.apps {
        let (x, dropped) = vocab.encode(&app.tokens);
        debug_assert_eq!(dropped, 0);
        vectors.push(x);
        labels.push(app.label);
        families.push(app.family.clone());
    }
    let ds = LabeledDataset::new(vocab.len(), vectors, labels, Some(families))?;
    Ok((ds, corpus.truth, vocab))
}

/// Writes the corpus as decompiled-bundle directories plus `labels.csv` and
/// a `dicts/` directory holding the matching API dictionaries. Output is
/// byte-identical across runs with the same spec.
pub fn generate_bundles(spec: &CorpusSpec, out_dir: impl AsRef<Path>) -> Result<GroundTruth> {
    let out_dir = out_dir.as_ref();
    let corpus = generate(spec)?;
    fs::create_dir_all(out_dir).map_err(Error::io(out_dir))?;
    corpus.dictionaries.write_dir(out_dir.join("dicts"))?;

    for app in &corpus.apps {
        write_bundle(app, &out_dir.join(&app.id))
            .map_err(|e| Error::InvalidInput(format!("app {}: {e}", app.id)))?;
    }

    let labels_path = out_dir.join("labels.csv");
    let mut out = fs::File::create(&labels_path).map_err(Error::io(&labels_path))?;
    (|| -> std::io::Result<()> {
        writeln!(out, "app_id,label,family")?;
        for app in &corpus.apps {
            writeln!(out, "{},{},{}", app.id, app.label, app.family)?;
        }
        out.flush()
    })()
    .map_err(Error::io(&labels_path))?;
    Ok(corpus.truth)
}

fn xml_escape(value: &str) -> String {
    value
        .replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn write_bundle(app: &GeneratedApp, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;

    let mut xml = String::new();
    xml.push_str("<?xml version=\"1.0\" encoding=\"utf-8\"?>\n");
    xml.push_str(&format!(
        "<manifest xmlns:android=\"http://schemas.android.com/apk/res/android\" package=\"gen.{}\">\n",
        app.id
    ));
    for perm in &app.permissions {
        xml.push_str(&format!(
            "  <uses-permission android:name=\"{}\"/>\n",
            xml_escape(perm.value())
        ));
    }
    for hw in &app.hardware {
        xml.push_str(&format!(
            "  <uses-feature android:name=\"{}\"/>\n",
            xml_escape(hw.value())
        ));
    }
    xml.push_str("  <application>\n");

    let intent_block = if app.intent_filters.is_empty() {
        String::new()
    } else {
        let mut block = String::from("      <intent-filter>\n");
        for intent in &app.intent_filters {
            let element = if intent.value().contains(".category.") {
                "category"
            } else {
                "action"
            };
            block.push_str(&format!(
                "        <{element} android:name=\"{}\"/>\n",
                xml_escape(intent.value())
            ));
        }
        block.push_str("      </intent-filter>\n");
        block
    };

    const KINDS: [&str; 4] = ["activity", "service", "receiver", "provider"];
    if app.components.is_empty() {
        if !intent_block.is_empty() {
            // No named component to host the filters; receivers without a
            // name are skipped by extraction but their filters still count.
            xml.push_str("    <receiver>\n");
            xml.push_str(&intent_block);
            xml.push_str("    </receiver>\n");
        }
    } else {
        for (i, comp) in app.components.iter().enumerate() {
            let kind = KINDS[i % KINDS.len()];
            let name = xml_escape(comp.value());
            if i == 0 && !intent_block.is_empty() {
                xml.push_str(&format!("    <{kind} android:name=\"{name}\">\n"));
                xml.push_str(&intent_block);
                xml.push_str(&format!("    </{kind}>\n"));
            } else {
                xml.push_str(&format!("    <{kind} android:name=\"{name}\"/>\n"));
            }
        }
    }
    xml.push_str("  </application>\n</manifest>\n");
    let manifest_path = dir.join("AndroidManifest.xml");
    fs::write(&manifest_path, xml).map_err(Error::io(&manifest_path))?;

    let smali_dir = dir.join("smali");
    fs::create_dir_all(&smali_dir).map_err(Error::io(&smali_dir))?;
    const CALLS_PER_FILE: usize = 20;
    const INVOKES: [&str; 5] = [
        "invoke-virtual {v0}",
        "invoke-static {}",
        "invoke-direct {p0}",
        "invoke-interface {p0}",
        "invoke-virtual/range {v0 .. v1}",
    ];
    let calls: Vec<&ApiCall> = app.calls.iter().collect();
    for (part, chunk) in calls.chunks(CALLS_PER_FILE).enumerate() {
        let mut smali = String::new();
        smali.push_str(&format!(".class public Lgen/app/Part{part};\n"));
        smali.push_str(".super Ljava/lang/Object;\n\n");
        smali.push_str(".method public static run()V\n    .locals 2\n\n");
        for (i, call) in chunk.iter().enumerate() {
            smali.push_str(&format!(
                "    {}, {}()V\n",
                INVOKES[(part * CALLS_PER_FILE + i) % INVOKES.len()],
                call.canonical()
            ));
        }
        smali.push_str("\n    return-void\n.end method\n");
        let part_dir = smali_dir.join("gen/app");
        fs::create_dir_all(&part_dir).map_err(Error::io(&part_dir))?;
        let path = part_dir.join(format!("Part{part}.smali"));
        fs::write(&path, smali).map_err(Error::io(&path))?;
    }
    Ok(())
}

/// Reads a `labels.csv` written by [`generate_bundles`]:
/// `app_id,label,family` rows under a header.
pub fn read_labels_csv(path: impl AsRef<Path>) -> Result<Vec<(String, Label, String)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            msg,
        };
        let mut parts = line.split(',');
        let (Some(app_id), Some(label), Some(family)) =
            (parts.next(), parts.next(), parts.next())
        else {
            return Err(parse_err("expected app_id,label,family".into()));
        };
        let label = Label::parse(label)
            .ok_or_else(|| parse_err(format!("bad label {label:?}")))?;
        rows.push((app_id.to_string(), label, family.to_string()));
    }
    Ok(rows)
}
