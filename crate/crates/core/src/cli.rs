//! The `realism` command.
//!
//! Results go to files or stdout; progress and the effective configuration
//! go to stderr. Failures print one line `error[<category>]: <message>` to
//! stderr and exit with status 1.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::evaluation::{
    build_train_set, default_mode, encode_reports, evaluate, render_table, split, EvalMode,
    SplitSpec,
};
use crate::features::{featurize_with, read_features, write_features, Aggregation, FeatureTable};
use crate::format::format_sig9;
use crate::labels::{read_labels, write_labels, LabelSet};
use crate::layers::parse_layer_list;
use crate::pool::{build_pools, load_pool, pool_path, save_pool, PoolConfig, PoolScope};
use crate::regression::{
    fit, label_from_logit, load_model, save_model, sigmoid, FitOptions, LabelMode,
};
use crate::tensor_io::{check_bundle_files, list_bundle_ids, read_bundle};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const THREADS_ENV: &str = "REALISM_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "realism",
    version,
    about = "Image realism scoring from nearest-neighbor activation distances"
)]
struct Cli {
    /// Flat key=value file with pipeline defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build per-layer reference pools from real-image activation bundles.
    BuildRef(BuildRefArgs),
    /// Compute per-layer nearest-neighbor distance features.
    Featurize(FeaturizeArgs),
    /// Split a label file into train and test sets by image.
    Split(SplitArgs),
    /// Fit the logistic realism model.
    Train(TrainArgs),
    /// Predict realism probabilities.
    Predict(PredictArgs),
    /// Score models on labelled test sets.
    Evaluate(EvaluateArgs),
    /// Print the version.
    Version,
}

#[derive(Debug, Args)]
struct BuildRefArgs {
    #[arg(long)]
    bundles: Option<PathBuf>,
    /// Comma separated layer names.
    #[arg(long)]
    layers: Option<String>,
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// pooled or location.
    #[arg(long)]
    scope: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FeaturizeArgs {
    #[arg(long)]
    bundles: Option<PathBuf>,
    #[arg(long)]
    pools: Option<PathBuf>,
    #[arg(long)]
    layers: Option<String>,
    /// sum or mean.
    #[arg(long)]
    aggregation: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    frac: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    stratified: bool,
    /// Defaults to `<labels stem>.train.csv` next to the input.
    #[arg(long)]
    train_out: Option<PathBuf>,
    /// Defaults to `<labels stem>.test.csv` next to the input.
    #[arg(long)]
    test_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// rows (one row per human label) or mean (one row per image).
    #[arg(long)]
    aggregate_labels: Option<String>,
    /// Recorded in the model; defaults to the label file stem.
    #[arg(long)]
    dataset_id: Option<String>,
    /// Recorded in the model for provenance.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Repeatable; every model is scored on every label file.
    #[arg(long)]
    model: Vec<PathBuf>,
    /// Repeatable; feature tables are concatenated.
    #[arg(long)]
    features: Vec<PathBuf>,
    /// Repeatable.
    #[arg(long)]
    labels: Vec<PathBuf>,
    /// Names for the label files, in order; defaults to their stems.
    #[arg(long)]
    test_id: Vec<String>,
    /// binary, spectrum or both; defaults to the label file kind.
    #[arg(long)]
    mode: Option<String>,
    /// Key/value report file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Aligned text table file (also printed to stdout).
    #[arg(long)]
    table: Option<PathBuf>,
}

/// Run with explicit arguments (first item is the program name) and return
/// the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!(
                "error[{}]: {}",
                e.category(),
                e.to_string().replace('\n', " ")
            );
            1
        }
    }
}

/// Apply `REALISM_THREADS` (0 or unset: rayon's default).
pub fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{THREADS_ENV} must be an integer, got {value:?}")))?;
    if n > 0 {
        // a pool may already exist when running in-process more than once
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    init_threads()?;
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    match cli.command {
        Command::BuildRef(a) => build_ref(&mut cfg, a),
        Command::Featurize(a) => featurize_cmd(&mut cfg, a),
        Command::Split(a) => split_cmd(&mut cfg, a),
        Command::Train(a) => train_cmd(&mut cfg, a),
        Command::Predict(a) => predict_cmd(&mut cfg, a),
        Command::Evaluate(a) => evaluate_cmd(&mut cfg, a),
        Command::Version => {
            println!("realism {VERSION}");
            Ok(())
        }
    }
}

fn log_config(command: &str, cfg: &PipelineConfig, extra: &[(&str, String)]) {
    eprintln!("[{command}] effective config:");
    for line in cfg.describe().lines() {
        eprintln!("  {line}");
    }
    for (k, v) in extra {
        eprintln!("  {k}={v}");
    }
}

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| Error::Config(format!("--{name} is required")))
}

fn existing_dir(path: &Path) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "directory not found"),
        ))
    }
}

fn existing_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        ))
    }
}

/// Output location must be in an existing directory.
fn writable_target(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => existing_dir(p),
        _ => Ok(()),
    }
}

fn layers_override(cfg: &mut PipelineConfig, layers: Option<String>) -> Result<()> {
    if let Some(l) = layers {
        cfg.layers =
            parse_layer_list(&l).ok_or_else(|| Error::Config(format!("bad layer list {l:?}")))?;
    }
    Ok(())
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn build_ref(cfg: &mut PipelineConfig, a: BuildRefArgs) -> Result<()> {
    layers_override(cfg, a.layers)?;
    if let Some(cap) = a.cap {
        cfg.pool_cap = cap;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(scope) = a.scope {
        cfg.scope = PoolScope::parse(&scope)?;
    }
    cfg.validate()?;
    let bundles = required(a.bundles, &cfg.bundles, "bundles")?;
    let out = required(a.out, &cfg.pools, "out")?;
    log_config(
        "build-ref",
        cfg,
        &[
            ("bundles", bundles.display().to_string()),
            ("out", out.display().to_string()),
        ],
    );

    existing_dir(&bundles)?;
    let ids = list_bundle_ids(&bundles)?;
    if ids.is_empty() {
        return Err(Error::Empty(format!(
            "no image bundles under {}",
            bundles.display()
        )));
    }
    check_bundle_files(&bundles, &ids, &cfg.layers)?;
    eprintln!(
        "[build-ref] {} images, {} layers",
        ids.len(),
        cfg.layers.len()
    );

    let pool_cfg = PoolConfig {
        pool_cap: cfg.pool_cap,
        seed: cfg.seed,
        layers: cfg.layers.clone(),
        scope: cfg.scope,
    };
    let stream = ids.iter().map(|id| read_bundle(&bundles, id, &cfg.layers));
    let pools = build_pools(stream, &pool_cfg)?;

    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    for p in &pools {
        save_pool(pool_path(&out, p.layer_name()), p)?;
        println!("{}\t{}\t{}", p.layer_name(), p.len(), p.channels());
    }
    Ok(())
}

fn featurize_cmd(cfg: &mut PipelineConfig, a: FeaturizeArgs) -> Result<()> {
    layers_override(cfg, a.layers)?;
    if let Some(agg) = a.aggregation {
        cfg.aggregation = Aggregation::parse(&agg)?;
    }
    cfg.validate()?;
    let bundles = required(a.bundles, &cfg.bundles, "bundles")?;
    let pools_dir = required(a.pools, &cfg.pools, "pools")?;
    let out = required(a.out, &cfg.features, "out")?;
    log_config(
        "featurize",
        cfg,
        &[
            ("bundles", bundles.display().to_string()),
            ("pools", pools_dir.display().to_string()),
            ("out", out.display().to_string()),
        ],
    );

    existing_dir(&bundles)?;
    existing_dir(&pools_dir)?;
    writable_target(&out)?;
    let ids = list_bundle_ids(&bundles)?;
    if ids.is_empty() {
        return Err(Error::Empty(format!(
            "no image bundles under {}",
            bundles.display()
        )));
    }
    check_bundle_files(&bundles, &ids, &cfg.layers)?;
    let pools = cfg
        .layers
        .iter()
        .map(|l| {
            let p = load_pool(pool_path(&pools_dir, l))?;
            if p.layer_name() != l {
                return Err(Error::LayerMismatch(format!(
                    "pool file for {l:?} holds layer {:?}",
                    p.layer_name()
                )));
            }
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;
    eprintln!(
        "[featurize] {} images against {} pools",
        ids.len(),
        pools.len()
    );

    let aggregation = cfg.aggregation;
    let rows = ids
        .par_iter()
        .map(|id| {
            let bundle = read_bundle(&bundles, id, &cfg.layers)?;
            featurize_with(&bundle, &pools, aggregation)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = FeatureTable::new(cfg.layers.clone());
    for r in rows {
        table.push(r)?;
    }
    write_features(&out, &table)?;
    eprintln!(
        "[featurize] wrote {} rows to {}",
        table.rows.len(),
        out.display()
    );
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}.csv"))
}

fn split_cmd(cfg: &mut PipelineConfig, a: SplitArgs) -> Result<()> {
    if let Some(f) = a.frac {
        cfg.test_fraction = f;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let labels_path = required(a.labels, &cfg.labels, "labels")?;
    existing_file(&labels_path)?;
    let train_out = a
        .train_out
        .unwrap_or_else(|| sibling(&labels_path, "train"));
    let test_out = a.test_out.unwrap_or_else(|| sibling(&labels_path, "test"));
    writable_target(&train_out)?;
    writable_target(&test_out)?;
    log_config(
        "split",
        cfg,
        &[
            ("labels", labels_path.display().to_string()),
            ("stratified", a.stratified.to_string()),
            ("train_out", train_out.display().to_string()),
            ("test_out", test_out.display().to_string()),
        ],
    );

    let labels = read_labels(&labels_path)?;
    let spec = SplitSpec {
        test_fraction: cfg.test_fraction,
        seed: cfg.seed,
        stratified: a.stratified,
    };
    let (train, test) = split(&labels.records, &spec)?;
    let (train, test) = (
        LabelSet::new(labels.kind, train),
        LabelSet::new(labels.kind, test),
    );
    write_labels(&train_out, &train)?;
    write_labels(&test_out, &test)?;
    println!(
        "train_images={} train_records={} test_images={} test_records={}",
        train.image_ids().len(),
        train.records.len(),
        test.image_ids().len(),
        test.records.len()
    );
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn train_cmd(cfg: &mut PipelineConfig, a: TrainArgs) -> Result<()> {
    if let Some(l) = a.lambda {
        cfg.lambda = l;
    }
    if let Some(t) = a.tol {
        cfg.tol = t;
    }
    if let Some(m) = a.max_iter {
        cfg.max_iter = m;
    }
    if let Some(mode) = a.aggregate_labels {
        cfg.label_mode = LabelMode::parse(&mode)?;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let features_path = required(a.features, &cfg.features, "features")?;
    let labels_path = required(a.labels, &cfg.labels, "labels")?;
    let out = required(a.out, &cfg.model, "out")?;
    existing_file(&features_path)?;
    existing_file(&labels_path)?;
    writable_target(&out)?;
    let dataset = a.dataset_id.unwrap_or_else(|| stem(&labels_path));
    log_config(
        "train",
        cfg,
        &[
            ("features", features_path.display().to_string()),
            ("labels", labels_path.display().to_string()),
            ("dataset_id", dataset.clone()),
            ("out", out.display().to_string()),
        ],
    );

    let features = read_features(&features_path)?;
    let labels = read_labels(&labels_path)?;
    let train = build_train_set(&features, &labels, cfg.label_mode)?;
    let opts = FitOptions {
        lambda: cfg.lambda,
        tol: cfg.tol,
        max_iter: cfg.max_iter,
    };
    let mut model = fit(&train, &opts)?;
    model.meta.dataset = dataset;
    model.meta.seed = cfg.seed;
    model.meta.label_mode = cfg.label_mode;
    if !model.meta.converged {
        eprintln!(
            "[train] warning: not converged after {} iterations, gradient max-norm {:e}",
            model.meta.iterations, model.meta.grad_norm
        );
    }
    save_model(&out, &model)?;
    println!(
        "rows={} iterations={} converged={} grad_norm={:e}",
        model.meta.rows, model.meta.iterations, model.meta.converged, model.meta.grad_norm
    );
    Ok(())
}

fn predict_cmd(cfg: &mut PipelineConfig, a: PredictArgs) -> Result<()> {
    let model_path = required(a.model, &cfg.model, "model")?;
    let features_path = required(a.features, &cfg.features, "features")?;
    existing_file(&model_path)?;
    existing_file(&features_path)?;
    if let Some(out) = &a.out {
        writable_target(out)?;
    }
    log_config(
        "predict",
        cfg,
        &[
            ("model", model_path.display().to_string()),
            ("features", features_path.display().to_string()),
        ],
    );
    let model = load_model(&model_path)?;
    let features = read_features(&features_path)?;
    model.check_layers(&features.layers)?;
    let mut out = String::from("image_id,proba,label\n");
    for row in &features.rows {
        let t = model.logit(&row.values)?;
        out.push_str(&format!(
            "{},{},{}\n",
            row.image_id,
            format_sig9(sigmoid(t)),
            label_from_logit(t)
        ));
    }
    match a.out {
        Some(path) => write_file(&path, out),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

fn evaluate_cmd(cfg: &mut PipelineConfig, a: EvaluateArgs) -> Result<()> {
    let models = if a.model.is_empty() {
        vec![required(None, &cfg.model, "model")?]
    } else {
        a.model
    };
    let feature_paths = if a.features.is_empty() {
        vec![required(None, &cfg.features, "features")?]
    } else {
        a.features
    };
    let label_paths = if a.labels.is_empty() {
        vec![required(None, &cfg.labels, "labels")?]
    } else {
        a.labels
    };
    if !a.test_id.is_empty() && a.test_id.len() != label_paths.len() {
        return Err(Error::Config(
            "--test-id must be given once per --labels".into(),
        ));
    }
    let mode = a.mode.as_deref().map(EvalMode::parse).transpose()?;
    for p in models.iter().chain(&feature_paths).chain(&label_paths) {
        existing_file(p)?;
    }
    let report_out = a.out.or_else(|| cfg.report.clone());
    for p in report_out.iter().chain(&a.table) {
        writable_target(p)?;
    }
    log_config(
        "evaluate",
        cfg,
        &[("mode", mode.map_or("auto", EvalMode::as_str).to_string())],
    );

    let features = FeatureTable::merge(
        feature_paths
            .iter()
            .map(read_features)
            .collect::<Result<Vec<_>>>()?,
    )?;
    let label_sets = label_paths
        .iter()
        .map(read_labels)
        .collect::<Result<Vec<_>>>()?;
    let mut reports = Vec::new();
    for model_path in &models {
        let model = load_model(model_path)?;
        for (i, labels) in label_sets.iter().enumerate() {
            let test_id = a
                .test_id
                .get(i)
                .cloned()
                .unwrap_or_else(|| stem(&label_paths[i]));
            let m = mode.unwrap_or_else(|| default_mode(labels.kind));
            reports.push(evaluate(&model, &features, labels, m, &test_id)?);
        }
    }
    let table = render_table(&reports);
    print!("{table}");
    if let Some(path) = &a.table {
        write_file(path, &table)?;
    }
    if let Some(path) = &report_out {
        write_file(path, encode_reports(&reports))?;
    }
    Ok(())
}
