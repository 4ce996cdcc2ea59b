//! Leave-one-subject-out experiments: seen/unseen direction splits,
//! per-group training, LSD scoring, aggregation and ANOVA.

mod anova;
mod config;
mod eval;
mod lsd;
mod models;
mod split;

pub use anova::{
    f_survival, ln_gamma, one_way_anova, one_way_anova_groups, regularized_beta, AnovaResult,
};
pub use config::{ExperimentConfig, MinMaxScope, EXPERIMENT_FILE};
pub use eval::{
    compare_runs, evaluate_fold, read_records_csv, summarize, write_records_csv, write_summary,
    AnovaEntry, CellStats, EvalRecord, SplitStats, Summary,
};
pub use lsd::lsd;
pub use models::{
    fit_fold_preprocessing, fit_router, predict_hrtf, train_grouped, FoldPreprocessing, GroupModel,
    GroupedModelSet, PreparedDataset, TrainingProvenance, DNN_FILE, GROUPS_DIR, MANIFEST_FILE,
    PLAN_FILE, PROVENANCE_FILE, ROUTER_FILE, VAE_FILE,
};
pub use split::{derive_seed, make_split_plan, unseen_count, SplitPlan};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Held-out subjects of a run: the configured list, or every subject.
pub fn fold_ids(prep: &PreparedDataset, cfg: &ExperimentConfig) -> Result<Vec<String>> {
    match &cfg.folds {
        Some(ids) => {
            for id in ids {
                prep.subject_index(id)?;
            }
            Ok(ids.clone())
        }
        None => Ok(prep.dataset.subject_ids()),
    }
}

/// Run `f` on every fold with up to `workers` threads. Results keep fold
/// order, and each fold draws only from its own seeds, so the thread count
/// never changes the output.
pub fn map_folds<T, F>(folds: &[String], workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&str) -> Result<T> + Sync + Send,
{
    if workers <= 1 {
        return folds.iter().map(|id| f(id)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    pool.install(|| folds.par_iter().map(|id| f(id)).collect())
}

/// Train and evaluate every fold in memory.
pub fn cross_validate(
    prep: &PreparedDataset,
    cfg: &ExperimentConfig,
    workers: usize,
) -> Result<Vec<EvalRecord>> {
    let folds = fold_ids(prep, cfg)?;
    let per_fold = map_folds(&folds, workers, |id| {
        let models = train_grouped(prep, cfg, id)?;
        evaluate_fold(&models, prep)
    })?;
    Ok(per_fold.concat())
}
