//! The `droidfm` command line: corpus generation, extraction, encoding,
//! training, prediction, and evaluation as composable subcommands.
//!
//! Every subcommand writes its artifact plus a JSON run manifest holding the
//! resolved configuration, so re-running with the recorded arguments
//! reproduces the artifact byte for byte.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::baselines::{train_bernoulli_nb, train_logistic};
use crate::corpus::{self, CorpusSpec};
use crate::dataset::{Label, LabeledDataset};
use crate::error::{Error, Result};
use crate::eval::{
    confusion, cross_validate, evaluate_families, metrics, roc, write_cv_csv, FamilyReport,
    Metrics,
};
use crate::extract::{extract_bundle, AppBundle, Dictionaries};
use crate::fm::{self, InteractionMask};
use crate::model_io::{load_model, save_model, Model};
use crate::optim::TrainConfig;
use crate::token::{FeatureCategory, FeatureToken};
use crate::vocab::{build_vocabulary, Vocabulary};

#[derive(Parser, Debug)]
#[command(
    name = "droidfm",
    version,
    about = "Factorization-machine malware detection over decompiled Android bundles"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic corpus of decompiled bundles with planted
    /// pairwise malice rules.
    GenCorpus {
        /// Corpus spec TOML; the built-in desk spec when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Override the spec's app count.
        #[arg(long)]
        apps: Option<usize>,
        /// Override the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract feature tokens from every bundle directory.
    Extract {
        /// Directory of bundle directories (each with AndroidManifest.xml).
        #[arg(long)]
        bundles: PathBuf,
        /// Directory holding api_permissions.tsv, restricted_apis.txt,
        /// suspicious_apis.txt.
        #[arg(long)]
        dicts: PathBuf,
        /// Worker threads; defaults to all cores.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// One-hot encode extracted token files into a dataset.
    Encode {
        /// Directory of .tokens files plus labels.csv.
        #[arg(long)]
        tokens: PathBuf,
        /// Existing vocabulary; built from these tokens (and written) when
        /// omitted.
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Where to write a newly built vocabulary (default: the dataset
        /// path with a .vocab extension).
        #[arg(long)]
        vocab_out: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = ModelKind::Fm)]
        model: ModelKind,
        /// Smoothing constant for the naive Bayes model.
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        mask: MaskArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a dataset or one bundle directory; rows are
    /// `<app_id>,<probability>,<label>`.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, conflicts_with = "bundle")]
        dataset: Option<PathBuf>,
        /// A single decompiled bundle directory (needs --dicts and --vocab).
        #[arg(long, requires = "dicts", requires = "vocab")]
        bundle: Option<PathBuf>,
        #[arg(long)]
        dicts: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a model on a labeled dataset: metrics CSV plus ROC CSV.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        out_report: PathBuf,
        #[arg(long)]
        out_roc: PathBuf,
    },
    /// Stratified k-fold cross-validation of the factorization machine.
    Cv {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        mask: MaskArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-family one-vs-rest evaluation (clean counts as a family).
    Families {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        mask: MaskArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Fm,
    Logistic,
    Nb,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// Latent dimension of the factorization machine.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 200)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.01)]
    pub init_scale: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub l2_w: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub l2_v: f64,
    #[arg(long, default_value_t = 0.9)]
    pub adam_beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub adam_beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub adam_epsilon: f64,
}

impl TrainArgs {
    pub fn to_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_epsilon: self.adam_epsilon,
            init_scale: self.init_scale,
            seed: self.seed,
            l2_w: self.l2_w,
            l2_v: self.l2_v,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MaskMode {
    Full,
    Partial,
}

#[derive(Args, Debug, Clone)]
pub struct MaskArgs {
    #[arg(long, value_enum, default_value_t = MaskMode::Full)]
    pub mask: MaskMode,
    /// Allowed category pair for a partial mask, as `tagA:tagB`
    /// (e.g. `used_perm:perm`). Repeatable.
    #[arg(long)]
    pub allow: Vec<String>,
    /// Vocabulary file; required for a partial mask to map indices to
    /// categories.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

impl MaskArgs {
    pub fn to_mask(&self) -> Result<InteractionMask> {
        match self.mask {
            MaskMode::Full => Ok(InteractionMask::Full),
            MaskMode::Partial => {
                let vocab_path = self.vocab.as_ref().ok_or_else(|| {
                    Error::InvalidConfig("--mask partial needs --vocab".into())
                })?;
                if self.allow.is_empty() {
                    return Err(Error::InvalidConfig(
                        "--mask partial needs at least one --allow catA:catB".into(),
                    ));
                }
                let vocab = Vocabulary::read(vocab_path)?;
                let pairs = self
                    .allow
                    .iter()
                    .map(|s| parse_category_pair(s))
                    .collect::<Result<Vec<_>>>()?;
                InteractionMask::partial(pairs, vocab.categories())
            }
        }
    }
}

fn parse_category_pair(s: &str) -> Result<(FeatureCategory, FeatureCategory)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| Error::InvalidConfig(format!("bad --allow {s:?}, expected catA:catB")))?;
    let parse = |tag: &str| {
        FeatureCategory::from_tag(tag).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "unknown category tag {tag:?} (expected one of comp, hw, perm, intent, \
                 api_restr, api_susp, used_perm)"
            ))
        })
    };
    Ok((parse(a)?, parse(b)?))
}

/// What a subcommand ran with and produced; written next to every artifact.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub args: BTreeMap<String, String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub seed: Option<u64>,
    pub duration_secs: f64,
}

struct ManifestBuilder {
    manifest: RunManifest,
    started: Instant,
}

impl ManifestBuilder {
    fn new(subcommand: &str) -> Self {
        ManifestBuilder {
            manifest: RunManifest {
                tool: "droidfm".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                subcommand: subcommand.into(),
                args: BTreeMap::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                seed: None,
                duration_secs: 0.0,
            },
            started: Instant::now(),
        }
    }

    fn arg(mut self, key: &str, value: impl ToString) -> Self {
        self.manifest.args.insert(key.into(), value.to_string());
        self
    }

    fn args_from(mut self, cfg: &TrainConfig, k: usize) -> Self {
        for (key, value) in [
            ("k", k.to_string()),
            ("epochs", cfg.epochs.to_string()),
            ("batch_size", cfg.batch_size.to_string()),
            ("lr", cfg.learning_rate.to_string()),
            ("init_scale", cfg.init_scale.to_string()),
            ("l2_w", cfg.l2_w.to_string()),
            ("l2_v", cfg.l2_v.to_string()),
            ("adam_beta1", cfg.adam_beta1.to_string()),
            ("adam_beta2", cfg.adam_beta2.to_string()),
            ("adam_epsilon", cfg.adam_epsilon.to_string()),
        ] {
            self.manifest.args.insert(key.into(), value);
        }
        self.manifest.seed = Some(cfg.seed);
        self
    }

    fn seed(mut self, seed: u64) -> Self {
        self.manifest.seed = Some(seed);
        self
    }

    fn input(mut self, path: &Path) -> Self {
        self.manifest.inputs.push(path.display().to_string());
        self
    }

    fn output(mut self, path: &Path) -> Self {
        self.manifest.outputs.push(path.display().to_string());
        self
    }

    /// Writes `<artifact>.manifest.json`, or `run_manifest.json` inside a
    /// directory artifact.
    fn write(mut self, artifact: &Path) -> Result<()> {
        self.manifest.duration_secs = self.started.elapsed().as_secs_f64();
        let path = if artifact.is_dir() {
            artifact.join("run_manifest.json")
        } else {
            let mut name = artifact
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "out".into());
            name.push_str(".manifest.json");
            artifact.with_file_name(name)
        };
        let json = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| Error::InvalidConfig(format!("manifest serialization: {e}")))?;
        std::fs::write(&path, json).map_err(Error::io(&path))
    }
}

pub fn cmd_gen_corpus(spec: &CorpusSpec, out: &Path) -> Result<()> {
    let builder = ManifestBuilder::new("gen-corpus")
        .arg("n_apps", spec.n_apps)
        .arg("malware_fraction", spec.malware_fraction)
        .arg("noise_rate", spec.noise_rate)
        .arg("target_active_mean", spec.target_active_mean)
        .arg("rules", spec.rules.len())
        .seed(spec.seed)
        .output(out);
    let truth = corpus::generate_bundles(spec, out)?;
    spec.write(out.join("corpus_spec.toml"))?;
    eprintln!(
        "gen-corpus: {} apps, mean active {:.1}, max rule-token gap {:.3}",
        spec.n_apps, truth.mean_active, truth.max_marginal_gap
    );
    builder.write(out)
}

pub struct ExtractStats {
    pub apps: usize,
    pub manifest_warnings: usize,
    pub smali_warnings: usize,
}

pub fn cmd_extract(
    bundles: &Path,
    dicts_dir: &Path,
    out: &Path,
    jobs: Option<usize>,
) -> Result<ExtractStats> {
    let builder = ManifestBuilder::new("extract")
        .arg("jobs", jobs.map(|j| j.to_string()).unwrap_or_else(|| "auto".into()))
        .input(bundles)
        .input(dicts_dir)
        .output(out);
    let dicts = Dictionaries::load_dir(dicts_dir)?;

    let mut app_dirs: Vec<PathBuf> = std::fs::read_dir(bundles)
        .map_err(Error::io(bundles))?
        .filter_map(|entry| entry.ok())
        .map(|entry| entry.path())
        .filter(|path| path.is_dir() && path.join("AndroidManifest.xml").is_file())
        .collect();
    app_dirs.sort();
    if app_dirs.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no bundle directories under {}",
            bundles.display()
        )));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let extractions: Vec<Result<(String, crate::extract::Extraction)>> = pool.install(|| {
        use rayon::prelude::*;
        app_dirs
            .par_iter()
            .map(|dir| {
                let bundle = AppBundle::from_dir(dir)?;
                let extraction = extract_bundle(&bundle, &dicts.perm_map, &dicts.lists)?;
                let id = dir
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default();
                Ok((id, extraction))
            })
            .collect()
    });

    std::fs::create_dir_all(out).map_err(Error::io(out))?;
    let mut stats = ExtractStats {
        apps: 0,
        manifest_warnings: 0,
        smali_warnings: 0,
    };
    for result in extractions {
        let (id, extraction) = result?;
        let path = out.join(format!("{id}.tokens"));
        let mut text = String::new();
        for token in &extraction.tokens {
            text.push_str(&token.render());
            text.push('\n');
        }
        std::fs::write(&path, text).map_err(Error::io(&path))?;
        stats.apps += 1;
        stats.manifest_warnings += extraction.manifest_warnings;
        stats.smali_warnings += extraction.smali_warnings;
    }

    let labels_src = bundles.join("labels.csv");
    if labels_src.is_file() {
        std::fs::copy(&labels_src, out.join("labels.csv")).map_err(Error::io(&labels_src))?;
    }
    eprintln!(
        "extract: {} apps, {} manifest warnings, {} smali warnings",
        stats.apps, stats.manifest_warnings, stats.smali_warnings
    );
    builder.write(out)?;
    Ok(stats)
}

fn read_token_file(path: &Path) -> Result<BTreeSet<FeatureToken>> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    let mut tokens = BTreeSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let token = FeatureToken::parse(line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            msg: e.to_string(),
        })?;
        tokens.insert(token);
    }
    Ok(tokens)
}

pub fn cmd_encode(
    tokens_dir: &Path,
    vocab_path: Option<&Path>,
    out: &Path,
    vocab_out: Option<&Path>,
) -> Result<()> {
    let mut builder = ManifestBuilder::new("encode").input(tokens_dir).output(out);

    let mut token_files: Vec<PathBuf> = std::fs::read_dir(tokens_dir)
        .map_err(Error::io(tokens_dir))?
        .filter_map(|entry| entry.ok())
        .map(|entry| entry.path())
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("tokens"))
        .collect();
    token_files.sort();
    if token_files.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no .tokens files under {}",
            tokens_dir.display()
        )));
    }

    let labels_path = tokens_dir.join("labels.csv");
    let labels = corpus::read_labels_csv(&labels_path)?;
    let by_id: BTreeMap<&str, (Label, &str)> = labels
        .iter()
        .map(|(id, label, family)| (id.as_str(), (*label, family.as_str())))
        .collect();

    let mut apps = Vec::with_capacity(token_files.len());
    for path in &token_files {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let (label, family) = by_id.get(id.as_str()).copied().ok_or_else(|| {
            Error::InvalidInput(format!("{id}: token file has no row in labels.csv"))
        })?;
        apps.push((id, label, family.to_string(), read_token_file(path)?));
    }

    let (vocab, built) = match vocab_path {
        Some(path) => {
            builder = builder.input(path);
            (Vocabulary::read(path)?, false)
        }
        None => (build_vocabulary(apps.iter().map(|(_, _, _, t)| t))?, true),
    };

    let mut vectors = Vec::with_capacity(apps.len());
    let mut labels = Vec::with_capacity(apps.len());
    let mut families = Vec::with_capacity(apps.len());
    let mut dropped_total = 0usize;
    for (_, label, family, tokens) in &apps {
        let (x, dropped) = vocab.encode(tokens);
        dropped_total += dropped;
        vectors.push(x);
        labels.push(*label);
        families.push(family.clone());
    }
    let ds = LabeledDataset::new(vocab.len(), vectors, labels, Some(families))?;
    ds.write(out)?;

    if built {
        let vocab_dest = match vocab_out {
            Some(path) => path.to_path_buf(),
            None => out.with_extension("vocab"),
        };
        vocab.write(&vocab_dest)?;
        builder = builder.output(&vocab_dest);
        builder = builder.arg("vocab_built", true);
    }
    eprintln!(
        "encode: {} apps, dim {}, {} unknown tokens dropped",
        ds.len(),
        ds.dim(),
        dropped_total
    );
    builder.arg("dim", vocab.len()).write(out)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_train(
    dataset_path: &Path,
    kind: ModelKind,
    k: usize,
    alpha: f64,
    cfg: &TrainConfig,
    mask: InteractionMask,
    out: &Path,
) -> Result<()> {
    let builder = ManifestBuilder::new("train")
        .args_from(cfg, k)
        .arg("model", format!("{kind:?}").to_lowercase())
        .arg("mask", match &mask {
            InteractionMask::Full => "full".to_string(),
            InteractionMask::Partial { allowed_pairs, .. } => format!(
                "partial({})",
                allowed_pairs
                    .iter()
                    .map(|(a, b)| format!("{a}:{b}"))
                    .collect::<Vec<_>>()
                    .join(",")
            ),
        })
        .input(dataset_path)
        .output(out);
    let ds = LabeledDataset::read(dataset_path)?;
    let model = match kind {
        ModelKind::Fm => Model::Fm(fm::train(&ds, k, cfg, mask)?),
        ModelKind::Logistic => Model::Linear(train_logistic(&ds, cfg)?),
        ModelKind::Nb => Model::BernoulliNb(train_bernoulli_nb(&ds, alpha)?),
    };
    save_model(&model, out)?;
    builder.write(out)
}

pub enum PredictInput<'a> {
    Dataset(&'a Path),
    Bundle {
        dir: &'a Path,
        dicts: &'a Path,
        vocab: &'a Path,
    },
}

/// Scores the input and returns the CSV rows that were written (or printed
/// when `out` is `None`): `<app_id>,<probability>,<label>`.
pub fn cmd_predict(
    model_path: &Path,
    input: PredictInput<'_>,
    threshold: f64,
    out: Option<&Path>,
) -> Result<String> {
    let mut builder = ManifestBuilder::new("predict")
        .arg("threshold", threshold)
        .input(model_path);
    let model = load_model(model_path)?;

    let mut rows = String::new();
    match input {
        PredictInput::Dataset(path) => {
            builder = builder.input(path);
            let ds = LabeledDataset::read(path)?;
            if ds.dim() != model.dim() {
                return Err(Error::DimensionMismatch {
                    expected: model.dim(),
                    got: ds.dim(),
                });
            }
            for (i, x) in ds.vectors().iter().enumerate() {
                let p = model.predict_proba(x)?;
                let label = model.classify(x, threshold)?;
                rows.push_str(&format!("{i},{p},{label}\n"));
            }
        }
        PredictInput::Bundle { dir, dicts, vocab } => {
            builder = builder.input(dir).input(dicts).input(vocab);
            let dicts = Dictionaries::load_dir(dicts)?;
            let vocab = Vocabulary::read(vocab)?;
            if vocab.len() != model.dim() {
                return Err(Error::DimensionMismatch {
                    expected: model.dim(),
                    got: vocab.len(),
                });
            }
            let bundle = AppBundle::from_dir(dir)?;
            let extraction = extract_bundle(&bundle, &dicts.perm_map, &dicts.lists)?;
            let (x, _dropped) = vocab.encode(&extraction.tokens);
            let p = model.predict_proba(&x)?;
            let label = model.classify(&x, threshold)?;
            let id = dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| dir.display().to_string());
            rows.push_str(&format!("{id},{p},{label}\n"));
        }
    }

    match out {
        Some(path) => {
            std::fs::write(path, &rows).map_err(Error::io(path))?;
            builder.output(path).write(path)?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(rows.as_bytes()).map_err(|e| Error::Io {
                path: PathBuf::from("<stdout>"),
                source: e,
            })?;
        }
    }
    Ok(rows)
}

pub fn cmd_evaluate(
    model_path: &Path,
    dataset_path: &Path,
    threshold: f64,
    out_report: &Path,
    out_roc: &Path,
) -> Result<Metrics> {
    let builder = ManifestBuilder::new("evaluate")
        .arg("threshold", threshold)
        .input(model_path)
        .input(dataset_path)
        .output(out_report)
        .output(out_roc);
    let model = load_model(model_path)?;
    let ds = LabeledDataset::read(dataset_path)?;
    if ds.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: ds.dim(),
        });
    }
    let mut scores = Vec::with_capacity(ds.len());
    let mut preds = Vec::with_capacity(ds.len());
    for x in ds.vectors() {
        scores.push(model.predict_proba(x)?);
        preds.push(model.classify(x, threshold)?);
    }
    let m = metrics(&confusion(ds.labels(), &preds)?)?;
    let curve = roc(ds.labels(), &scores)?;
    m.write_csv(out_report, &[("auc", curve.auc)])?;
    curve.write_csv(out_roc)?;
    builder.write(out_report)?;
    Ok(m)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_cv(
    dataset_path: &Path,
    folds: usize,
    k: usize,
    cfg: &TrainConfig,
    mask: InteractionMask,
    threshold: f64,
    out: &Path,
) -> Result<Vec<Metrics>> {
    let builder = ManifestBuilder::new("cv")
        .args_from(cfg, k)
        .arg("folds", folds)
        .arg("threshold", threshold)
        .input(dataset_path)
        .output(out);
    let ds = LabeledDataset::read(dataset_path)?;
    let per_fold = cross_validate(&ds, folds, k, cfg, &mask, threshold)?;
    write_cv_csv(out, &per_fold)?;
    builder.write(out)?;
    Ok(per_fold)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_families(
    dataset_path: &Path,
    k: usize,
    cfg: &TrainConfig,
    mask: InteractionMask,
    test_fraction: f64,
    threshold: f64,
    out: &Path,
) -> Result<FamilyReport> {
    let builder = ManifestBuilder::new("families")
        .args_from(cfg, k)
        .arg("test_fraction", test_fraction)
        .arg("threshold", threshold)
        .input(dataset_path)
        .output(out);
    let ds = LabeledDataset::read(dataset_path)?;
    let report = evaluate_families(&ds, k, cfg, &mask, test_fraction, threshold)?;
    report.write_csv(out)?;
    for (family, reason) in &report.skipped {
        eprintln!("families: skipped {family}: {reason}");
    }
    builder.write(out)?;
    Ok(report)
}

/// Dispatches a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenCorpus {
            spec,
            apps,
            seed,
            out,
        } => {
            let mut spec = match spec {
                Some(path) => CorpusSpec::read(&path)?,
                None => CorpusSpec::desk_default(),
            };
            if let Some(apps) = apps {
                spec.n_apps = apps;
            }
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            cmd_gen_corpus(&spec, &out)
        }
        Command::Extract {
            bundles,
            dicts,
            jobs,
            out,
        } => cmd_extract(&bundles, &dicts, &out, jobs).map(|_| ()),
        Command::Encode {
            tokens,
            vocab,
            vocab_out,
            out,
        } => cmd_encode(&tokens, vocab.as_deref(), &out, vocab_out.as_deref()),
        Command::Train {
            dataset,
            model,
            alpha,
            train,
            mask,
            out,
        } => cmd_train(
            &dataset,
            model,
            train.k,
            alpha,
            &train.to_config(),
            mask.to_mask()?,
            &out,
        ),
        Command::Predict {
            model,
            dataset,
            bundle,
            dicts,
            vocab,
            threshold,
            out,
        } => {
            let input = match (&dataset, &bundle) {
                (Some(ds), None) => PredictInput::Dataset(ds),
                (None, Some(dir)) => PredictInput::Bundle {
                    dir,
                    dicts: dicts.as_deref().expect("clap enforces --dicts"),
                    vocab: vocab.as_deref().expect("clap enforces --vocab"),
                },
                _ => {
                    return Err(Error::InvalidConfig(
                        "predict needs exactly one of --dataset or --bundle".into(),
                    ))
                }
            };
            cmd_predict(&model, input, threshold, out.as_deref()).map(|_| ())
        }
        Command::Evaluate {
            model,
            dataset,
            threshold,
            out_report,
            out_roc,
        } => cmd_evaluate(&model, &dataset, threshold, &out_report, &out_roc).map(|_| ()),
        Command::Cv {
            dataset,
            folds,
            threshold,
            train,
            mask,
            out,
        } => cmd_cv(
            &dataset,
            folds,
            train.k,
            &train.to_config(),
            mask.to_mask()?,
            threshold,
            &out,
        )
        .map(|_| ()),
        Command::Families {
            dataset,
            test_fraction,
            threshold,
            train,
            mask,
            out,
        } => cmd_families(
            &dataset,
            train.k,
            &train.to_config(),
            mask.to_mask()?,
            test_fraction,
            threshold,
            &out,
        )
        .map(|_| ()),
    }
}
