//! Subcommands of the `hrtfgroup` binary.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use serde_json::Value;

use hrtf_core::datamodel::synth::generate_synthetic_dataset;
use hrtf_core::datamodel::{load_dataset, write_dataset, LoadOptions};
use hrtf_core::grouping::Strategy;
use hrtf_core::neuralnet::{
    dnn_objective, gradient_check, vae_objective, DnnBatch, GradCheckConfig, GradCheckReport,
    NormMode, PredictorDnn, VaeModel, LATENT_DIM,
};
use hrtf_core::pipeline::{
    compare_runs, evaluate_fold, fit_router, fold_ids, map_folds, read_records_csv, summarize,
    train_grouped, write_records_csv, write_summary, EvalRecord, ExperimentConfig, GroupedModelSet,
    PreparedDataset, SplitStats, Summary, EXPERIMENT_FILE,
};
use hrtf_core::preproc::{MinMax, MODEL_INPUT_DIM, N_BINS};

pub const FOLDS_DIR: &str = "folds";
pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SYNTH_FILE: &str = "synth.json";
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser, Debug)]
#[command(name = "hrtfgroup", version)]
#[command(about = "Spatially grouped personalized HRTF prediction experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Only log warnings and errors
    #[arg(short, long, global = true)]
    pub quiet: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic spherical-head dataset
    Synth(SynthArgs),
    /// Train per-group VAE and predictor models for every fold
    Train(TrainArgs),
    /// Score trained models on their held-out subjects
    Evaluate(EvaluateArgs),
    /// Write the group of every grid direction as CSV
    Groupmap(GroupmapArgs),
    /// Check analytic gradients against finite differences
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    pub subjects: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Experiment settings shared by `train` and `groupmap`. Values are resolved
/// as defaults (or the desk preset), then `--config`, then these flags.
#[derive(Args, Debug, Default, Clone)]
pub struct ExperimentArgs {
    /// experiment.json; missing keys keep their defaults
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Start from the small-budget preset instead of the full defaults
    #[arg(long)]
    pub desk: bool,
    #[arg(long)]
    pub strategy: Option<Strategy>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Held-out subject to run; repeat for several, omit for all
    #[arg(long = "fold")]
    pub folds: Vec<String>,
    #[arg(long)]
    pub vae_epochs: Option<usize>,
    #[arg(long)]
    pub dnn_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Fail on incomplete subjects instead of skipping them
    #[arg(long)]
    pub strict: bool,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Output directory of `train`
    #[arg(long)]
    pub models: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Output directory of another `evaluate` run to compare against
    #[arg(long)]
    pub compare_with: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long)]
    pub strict: bool,
}

#[derive(Args, Debug)]
pub struct GroupmapArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// CSV file to write
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[arg(long)]
    pub strict: bool,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Parameters compared per network
    #[arg(long, default_value_t = 500)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Examples in the probe batch
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => cmd_evaluate(&a).map(|_| ()),
        Command::Groupmap(a) => cmd_groupmap(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
    }
}

fn write_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

#[derive(Serialize)]
struct SynthRun {
    subjects: usize,
    seed: u64,
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let ds = generate_synthetic_dataset(a.subjects, a.seed)?;
    write_dataset(&ds, &a.out)
        .with_context(|| format!("writing dataset to {}", a.out.display()))?;
    write_pretty(
        &a.out.join(SYNTH_FILE),
        &SynthRun {
            subjects: a.subjects,
            seed: a.seed,
        },
    )?;
    println!(
        "wrote {} subjects x {} directions to {} (fingerprint {})",
        ds.subjects.len(),
        ds.grid.len(),
        a.out.display(),
        &ds.fingerprint()[..16]
    );
    Ok(())
}

/// Recursively overlay `patch` onto `base`.
fn merge_json(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge_json(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

/// Defaults (or the desk preset), overlaid with the config file, overlaid
/// with explicit flags.
pub fn resolve_config(a: &ExperimentArgs) -> Result<ExperimentConfig> {
    let base = if a.desk {
        ExperimentConfig::desk()
    } else {
        ExperimentConfig::default()
    };
    let mut cfg = match &a.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let patch: Value = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            let mut merged = serde_json::to_value(&base)?;
            merge_json(&mut merged, patch);
            serde_json::from_value(merged)
                .with_context(|| format!("invalid experiment config {}", path.display()))?
        }
        None => base,
    };
    if let Some(s) = a.strategy {
        cfg.strategy = s;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if !a.folds.is_empty() {
        cfg.folds = Some(a.folds.clone());
    }
    if let Some(e) = a.vae_epochs {
        cfg.train.vae_epochs = e;
    }
    if let Some(e) = a.dnn_epochs {
        cfg.train.dnn_epochs = e;
    }
    if let Some(b) = a.batch_size {
        cfg.train.batch_size = b;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_prepared(data: &Path, strict: bool) -> Result<PreparedDataset> {
    let ds = load_dataset(data, &LoadOptions { strict })
        .with_context(|| format!("loading dataset from {}", data.display()))?;
    if ds.subjects.len() < 3 {
        bail!(
            "{} has {} usable subjects; cross-validation needs at least 3",
            data.display(),
            ds.subjects.len()
        );
    }
    Ok(PreparedDataset::new(ds)?)
}

fn fold_dir(root: &Path, fold: &str) -> PathBuf {
    root.join(FOLDS_DIR).join(fold)
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = resolve_config(&a.experiment)?;
    let prep = load_prepared(&a.data, a.strict)?;
    // surface data/config problems before any training starts
    let folds = fold_ids(&prep, &cfg)?;
    for f in &folds {
        hrtf_core::pipeline::fit_fold_preprocessing(&prep, &cfg, f)
            .with_context(|| format!("preparing fold {f}"))?;
    }
    create_dir(&a.out)?;
    cfg.save(&a.out.join(EXPERIMENT_FILE))?;
    info!(
        "training {} folds with the {} strategy on {} subjects",
        folds.len(),
        cfg.strategy,
        prep.dataset.subjects.len()
    );
    let counts = map_folds(&folds, a.workers, |f| {
        let models = train_grouped(&prep, &cfg, f)?;
        models.save(&fold_dir(&a.out, f))?;
        info!("fold {f}: {} group models saved", models.groups.len());
        Ok(models.groups.len())
    })?;
    println!(
        "trained {} folds ({} group models) into {}",
        folds.len(),
        counts.iter().sum::<usize>(),
        a.out.display()
    );
    Ok(())
}

fn list_folds(models: &Path) -> Result<Vec<String>> {
    let dir = models.join(FOLDS_DIR);
    let mut out = Vec::new();
    for entry in fs::read_dir(&dir).with_context(|| format!("reading {}", dir.display()))? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            out.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    out.sort();
    if out.is_empty() {
        bail!("no trained folds under {}", dir.display());
    }
    Ok(out)
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<Summary> {
    let cfg = ExperimentConfig::load(&a.models.join(EXPERIMENT_FILE))?;
    let prep = load_prepared(&a.data, a.strict)?;
    let folds = list_folds(&a.models)?;
    let per_fold = map_folds(&folds, a.workers, |f| {
        let models = GroupedModelSet::load(&fold_dir(&a.models, f))?;
        models.verify_against(&prep)?;
        evaluate_fold(&models, &prep)
    })?;
    let records: Vec<EvalRecord> = per_fold.concat();
    let mut summary = summarize(&records);
    if let Some(other) = &a.compare_with {
        let theirs = read_records_csv(&other.join(RECORDS_FILE))?;
        let name = |recs: &[EvalRecord]| {
            recs.first()
                .map(|r| r.strategy.to_string())
                .unwrap_or_else(|| "empty".into())
        };
        summary.anova.extend(compare_runs(
            &name(&records),
            &records,
            &name(&theirs),
            &theirs,
        ));
    }
    create_dir(&a.out)?;
    cfg.save(&a.out.join(EXPERIMENT_FILE))?;
    write_records_csv(&a.out.join(RECORDS_FILE), &records)?;
    write_summary(&a.out.join(SUMMARY_FILE), &summary)?;
    print_summary(&summary);
    Ok(summary)
}

fn fmt2(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into())
}

fn print_row(name: &str, s: &SplitStats) {
    println!(
        "{name:<16} {:>8} {:>8} {:>8} {:>7}",
        fmt2(s.all.mean_lsd),
        fmt2(s.seen.mean_lsd),
        fmt2(s.unseen.mean_lsd),
        s.all.n
    );
}

/// Human-readable table, two decimals.
pub fn print_summary(s: &Summary) {
    println!(
        "{:<16} {:>8} {:>8} {:>8} {:>7}",
        "mean LSD (dB)", "all", "seen", "unseen", "n"
    );
    println!(
        "{:<16} {:>8} {:>8} {:>8} {:>7}",
        "overall",
        fmt2(s.mean_lsd),
        fmt2(s.seen_mean_lsd),
        fmt2(s.unseen_mean_lsd),
        s.n_records
    );
    for (k, v) in &s.per_side {
        print_row(k, v);
    }
    for (k, v) in &s.per_group {
        print_row(k, v);
    }
    for e in &s.anova {
        println!(
            "ANOVA {} ({}): F({}, {}) = {:.2}, p = {:.3e}",
            e.comparison,
            e.condition,
            e.result.df_between,
            e.result.df_within,
            e.result.f_stat,
            e.result.p_value
        );
    }
}

pub fn cmd_groupmap(a: &GroupmapArgs) -> Result<()> {
    let cfg = resolve_config(&a.experiment)?;
    let prep = load_prepared(&a.data, a.strict)?;
    // with --fold the mask excludes that subject, as in training
    let subjects: Vec<String> = match &cfg.folds {
        Some(f) => prep
            .dataset
            .subject_ids()
            .into_iter()
            .filter(|id| !f.contains(id))
            .collect(),
        None => prep.dataset.subject_ids(),
    };
    let router = fit_router(&prep, &cfg, &subjects)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let mut w =
        csv::Writer::from_path(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    w.write_record(["azimuth", "elevation", "x", "y", "z", "group"])?;
    for (i, d) in prep.dataset.grid.directions.iter().enumerate() {
        let label = match router.assignment[i] {
            Some(g) => router.groups[g].id.label.as_str(),
            None => "none",
        };
        w.write_record([
            d.azimuth_deg.to_string(),
            d.elevation_deg.to_string(),
            d.cartesian[0].to_string(),
            d.cartesian[1].to_string(),
            d.cartesian[2].to_string(),
            label.to_string(),
        ])?;
    }
    w.flush()?;
    cfg.save(&a.out.with_extension("config.json"))?;
    for g in &router.groups {
        println!("{:<12} {:>5} directions", g.id.label, g.directions.len());
    }
    Ok(())
}

/// Random VAE and predictor with warmed-up batch-norm statistics, checked in
/// eval mode on a random batch.
pub fn gradcheck_reports(a: &GradcheckArgs) -> Result<(GradCheckReport, GradCheckReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let batch = a.batch.max(2);
    let uniform = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
        Array2::from_shape_simple_fn((rows, cols), || rng.random::<f64>())
    };
    let mut vae = VaeModel::new(&mut rng);
    let mut dnn = PredictorDnn::new(&mut rng);
    let x = uniform(batch, N_BINS, &mut rng);
    let inputs = uniform(batch, MODEL_INPUT_DIM, &mut rng);
    for _ in 0..3 {
        let warm = uniform(32, N_BINS, &mut rng);
        let (_, cache) = vae.forward(warm.view(), NormMode::Train, None)?;
        vae.update_running(&cache, 32);
        let warm_in = uniform(32, MODEL_INPUT_DIM, &mut rng);
        let (_, _, cache) = dnn.forward(warm_in.view(), NormMode::Train)?;
        dnn.update_running(&cache, 32);
    }
    let noise =
        Array2::from_shape_simple_fn((batch, LATENT_DIM), || rng.sample::<f64, _>(StandardNormal));
    let beta = 1e-3;
    let cfg = GradCheckConfig {
        samples: a.samples,
        seed: a.seed,
        ..Default::default()
    };
    let (_, grad, _, _) = vae_objective(&vae, x.view(), NormMode::Eval, Some(noise.view()), beta)?;
    let vae_report = gradient_check(
        &vae,
        &grad,
        |m| {
            let (l, _, p, _) =
                vae_objective(m, x.view(), NormMode::Eval, Some(noise.view()), beta)?;
            Ok((l.total, p))
        },
        &cfg,
    )?;
    let norm = MinMax::Global {
        min_db: -45.0,
        max_db: 5.0,
    };
    let data = DnnBatch::new(&vae, inputs, x.clone())?;
    let lambda = 0.01;
    let (_, grad, _, _) = dnn_objective(&dnn, &vae, &data, NormMode::Eval, lambda, &norm)?;
    let dnn_report = gradient_check(
        &dnn,
        &grad,
        |m| {
            let (l, _, p, _) = dnn_objective(m, &vae, &data, NormMode::Eval, lambda, &norm)?;
            Ok((l.total, p))
        },
        &cfg,
    )?;
    Ok((vae_report, dnn_report))
}

pub fn cmd_gradcheck(a: &GradcheckArgs) -> Result<()> {
    let (v, d) = gradcheck_reports(a)?;
    let mut ok = true;
    for (name, r) in [("vae_loss", &v), ("dnn_loss", &d)] {
        let pass = r.passes(GRADCHECK_TOLERANCE) && r.checked >= a.samples;
        ok &= pass;
        println!(
            "{name}: max relative error {:.3e} over {} parameters ({} kinks excluded) {}",
            r.max_rel_error,
            r.checked,
            r.excluded_kinks,
            if pass { "PASS" } else { "FAIL" }
        );
    }
    if !ok {
        bail!("gradient check exceeded relative error {GRADCHECK_TOLERANCE}");
    }
    Ok(())
}
