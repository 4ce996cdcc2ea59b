use std::fs;
use std::path::Path;

use log::info;
use ndarray::{Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, MinMaxScope, EXPERIMENT_FILE};
use super::split::{derive_seed, make_split_plan, SplitPlan};
use crate::datamodel::{build_cipic_grid, Dataset, MeasurementGrid};
use crate::error::{Error, Result};
use crate::grouping::{build_router, compute_de_mask, GroupId, Router};
use crate::neuralnet::{
    train_dnn, train_vae, Checkpoint, DnnBatch, EpochLog, NormMode, PredictorDnn, VaeModel,
};
use crate::preproc::{
    build_model_input, dataset_hrtfs_db, fit_anthro_stats, fit_minmax, AnthroProfile, Hrtf,
    HrtfScale, MinMax, MinMaxMode, PreprocManifest, SpectrumAnalyzer, MODEL_INPUT_DIM,
};

pub const PLAN_FILE: &str = "plan.json";
pub const ROUTER_FILE: &str = "router.json";
pub const GROUPS_DIR: &str = "groups";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const VAE_FILE: &str = "vae.json";
pub const DNN_FILE: &str = "dnn.json";
pub const PROVENANCE_FILE: &str = "provenance.json";

/// A dataset with its dB HRTFs computed once.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub dataset: Dataset,
    pub analyzer: SpectrumAnalyzer,
    /// `hrtfs_db[s]` is subject `s`'s dB HRTFs, one row per grid direction.
    pub hrtfs_db: Vec<Array2<f64>>,
    pub fingerprint: String,
}

impl PreparedDataset {
    pub fn new(dataset: Dataset) -> Result<Self> {
        let analyzer = SpectrumAnalyzer::standard();
        let hrtfs_db = dataset_hrtfs_db(&dataset, &analyzer)?;
        let fingerprint = dataset.fingerprint();
        Ok(PreparedDataset {
            dataset,
            analyzer,
            hrtfs_db,
            fingerprint,
        })
    }

    pub fn subject_index(&self, id: &str) -> Result<usize> {
        self.dataset
            .subjects
            .iter()
            .position(|s| s.id == id)
            .ok_or_else(|| Error::InvalidArgument(format!("subject {id} is not in the dataset")))
    }
}

/// What a group model was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingProvenance {
    pub dataset_fingerprint: String,
    pub subjects: Vec<String>,
    /// Grid directions that contributed training examples.
    pub directions: Vec<usize>,
    pub n_examples: usize,
    pub vae_log: Vec<EpochLog>,
    pub dnn_log: Vec<EpochLog>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupModel {
    pub id: GroupId,
    pub manifest: PreprocManifest,
    pub vae: VaeModel,
    pub dnn: PredictorDnn,
    pub provenance: TrainingProvenance,
}

/// One fold's router plus a trained model pair per group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedModelSet {
    pub config: ExperimentConfig,
    pub grid: MeasurementGrid,
    pub plan: SplitPlan,
    pub router: Router,
    /// Same order as `router.groups`.
    pub groups: Vec<GroupModel>,
}

/// Statistics fitted on a fold's training data, before any network training.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPreprocessing {
    pub plan: SplitPlan,
    pub router: Router,
    /// One per router group.
    pub manifests: Vec<PreprocManifest>,
    /// Seen training directions per router group.
    pub train_directions: Vec<Vec<usize>>,
}

fn training_rows<'a>(
    prep: &'a PreparedDataset,
    plan: &SplitPlan,
) -> Result<Vec<(usize, &'a Array2<f64>)>> {
    plan.train_subject_ids
        .iter()
        .map(|id| {
            let s = prep.subject_index(id)?;
            Ok((s, &prep.hrtfs_db[s]))
        })
        .collect()
}

/// Fit every fold-level statistic: split, anthropometric statistics, DE
/// mask, router and per-group min-max. Only training subjects are read.
pub fn fit_fold_preprocessing(
    prep: &PreparedDataset,
    cfg: &ExperimentConfig,
    fold_subject: &str,
) -> Result<FoldPreprocessing> {
    cfg.validate()?;
    let ds = &prep.dataset;
    let plan = make_split_plan(
        ds,
        fold_subject,
        derive_seed(cfg.seed, &["split", fold_subject]),
        cfg.unseen_fraction,
    )?;
    if plan.train_subject_ids.len() < 2 {
        return Err(Error::InvalidArgument(
            "cross-validation needs at least two training subjects per fold".into(),
        ));
    }
    let train = training_rows(prep, &plan)?;
    let profiles: Vec<AnthroProfile> = train
        .iter()
        .map(|&(s, _)| AnthroProfile::raw(ds.subjects[s].anthro_raw.clone()))
        .collect();
    let stats = fit_anthro_stats(&profiles, cfg.std_convention)?;

    let router = fit_router(prep, cfg, &plan.train_subject_ids)?;

    let seen = plan.seen_mask(ds.grid.len());
    let train_directions: Vec<Vec<usize>> = router
        .groups
        .iter()
        .map(|g| g.directions.iter().copied().filter(|&d| seen[d]).collect())
        .collect();
    for (g, dirs) in router.groups.iter().zip(&train_directions) {
        if dirs.is_empty() {
            return Err(Error::DegenerateGroup(g.id.to_string()));
        }
    }
    let fit_on = |dirs: &[usize]| -> Result<MinMax> {
        fit_minmax(
            train
                .iter()
                .flat_map(|(_, h)| dirs.iter().map(move |&d| row_slice(h.row(d)))),
            cfg.minmax_mode,
        )
    };
    let shared = match cfg.minmax_scope {
        MinMaxScope::Global => {
            let all: Vec<usize> = train_directions.concat();
            Some(fit_on(&all)?)
        }
        MinMaxScope::PerGroup => None,
    };
    let manifests = train_directions
        .iter()
        .map(|dirs| {
            let mm = match &shared {
                Some(m) => m.clone(),
                None => fit_on(dirs)?,
            };
            PreprocManifest::new(stats.clone(), cfg.std_convention, mm, &prep.analyzer)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FoldPreprocessing {
        plan,
        router,
        manifests,
        train_directions,
    })
}

/// Router for `cfg.strategy`, with the DE mask (when needed) computed from
/// `subjects` only. The mask covers every contralateral direction, so it is
/// fitted on all directions of those subjects.
pub fn fit_router(
    prep: &PreparedDataset,
    cfg: &ExperimentConfig,
    subjects: &[String],
) -> Result<Router> {
    let mask = if cfg.strategy.needs_mask() {
        let rows = subjects
            .iter()
            .map(|id| Ok(&prep.hrtfs_db[prep.subject_index(id)?]))
            .collect::<Result<Vec<_>>>()?;
        let mm = fit_minmax(
            rows.iter()
                .flat_map(|h| h.rows().into_iter().map(row_slice)),
            MinMaxMode::Global,
        )?;
        let normalized = rows
            .iter()
            .map(|h| normalize_matrix(h, &mm))
            .collect::<Result<Vec<_>>>()?;
        Some(compute_de_mask(
            &normalized,
            subjects,
            &prep.dataset.grid,
            prep.analyzer.axis(),
            &cfg.de,
        )?)
    } else {
        None
    };
    build_router(cfg.strategy, &prep.dataset.grid, mask.as_ref())
}

fn row_slice<'a>(row: ArrayView1<'a, f64>) -> &'a [f64] {
    row.to_slice().expect("standard layout")
}

fn normalize_matrix(h: &Array2<f64>, mm: &MinMax) -> Result<Array2<f64>> {
    let mut out = Array2::zeros(h.dim());
    for (src, mut dst) in h.rows().into_iter().zip(out.rows_mut()) {
        let n = mm.apply(row_slice(src))?;
        dst.assign(&ArrayView1::from(&n.values));
    }
    Ok(out)
}

/// Train one fold: a VAE then a frozen-VAE predictor for every group.
pub fn train_grouped(
    prep: &PreparedDataset,
    cfg: &ExperimentConfig,
    fold_subject: &str,
) -> Result<GroupedModelSet> {
    let fp = fit_fold_preprocessing(prep, cfg, fold_subject)?;
    let ds = &prep.dataset;
    let train = training_rows(prep, &fp.plan)?;
    let mut groups = Vec::with_capacity(fp.router.groups.len());
    for ((group, dirs), manifest) in fp
        .router
        .groups
        .iter()
        .zip(&fp.train_directions)
        .zip(&fp.manifests)
    {
        let n = train.len() * dirs.len();
        let mut inputs = Array2::zeros((n, MODEL_INPUT_DIM));
        let mut targets = Array2::zeros((n, prep.analyzer.axis().len()));
        let mut row = 0;
        for &(s, h) in &train {
            let profile = manifest.normalize_profile(&ds.subjects[s].anthro_raw)?;
            for &d in dirs {
                if fp.router.route(d)?.id != group.id {
                    return Err(Error::Internal(format!(
                        "direction {d} assembled for {} but routed elsewhere",
                        group.id
                    )));
                }
                let x = build_model_input(&profile, &ds.grid.directions[d])?;
                inputs.row_mut(row).assign(&ArrayView1::from(&x));
                let t = manifest.minmax.apply(row_slice(h.row(d)))?;
                targets.row_mut(row).assign(&ArrayView1::from(&t.values));
                row += 1;
            }
        }
        info!(
            "fold {fold_subject} group {}: {} examples from {} subjects",
            group.id,
            n,
            train.len()
        );
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            cfg.seed,
            &["train", fold_subject, group.id.label.as_str()],
        ));
        let (vae, vae_log) = train_vae(targets.view(), &cfg.train, &mut rng)?;
        let batch = DnnBatch::new(&vae, inputs, targets)?;
        let (dnn, dnn_log) = train_dnn(&vae, &batch, &manifest.minmax, &cfg.train, &mut rng)?;
        groups.push(GroupModel {
            id: group.id,
            manifest: manifest.clone(),
            vae,
            dnn,
            provenance: TrainingProvenance {
                dataset_fingerprint: prep.fingerprint.clone(),
                subjects: fp.plan.train_subject_ids.clone(),
                directions: dirs.clone(),
                n_examples: n,
                vae_log,
                dnn_log,
            },
        });
    }
    Ok(GroupedModelSet {
        config: cfg.clone(),
        grid: ds.grid.clone(),
        plan: fp.plan,
        router: fp.router,
        groups,
    })
}

impl GroupedModelSet {
    pub fn model_for(&self, direction_index: usize) -> Result<&GroupModel> {
        let g = self.router.route(direction_index)?;
        self.groups
            .iter()
            .find(|m| m.id == g.id)
            .ok_or_else(|| Error::Internal(format!("no model for group {}", g.id)))
    }

    /// Predicted dB HRTFs for `directions` (all in one group) of a raw profile.
    pub fn predict_group(
        &self,
        model: &GroupModel,
        anthro_raw: &[f64],
        directions: &[usize],
    ) -> Result<Array2<f64>> {
        let profile = model.manifest.normalize_profile(anthro_raw)?;
        let mut inputs = Array2::zeros((directions.len(), MODEL_INPUT_DIM));
        for (r, &d) in directions.iter().enumerate() {
            let dir = self
                .grid
                .directions
                .get(d)
                .ok_or_else(|| Error::InvalidArgument(format!("direction {d} not on grid")))?;
            let x = build_model_input(&profile, dir)?;
            inputs.row_mut(r).assign(&ArrayView1::from(&x));
        }
        let (mean, _, _) = model.dnn.forward(inputs.view(), NormMode::Eval)?;
        let (decoded, _) = model.vae.decode(mean.view(), NormMode::Eval)?;
        let mut out = Array2::zeros(decoded.dim());
        for (src, mut dst) in decoded.axis_iter(Axis(0)).zip(out.rows_mut()) {
            let db = model.manifest.minmax.inverse(row_slice(src))?;
            dst.assign(&ArrayView1::from(&db));
        }
        Ok(out)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.config.save(&dir.join(EXPERIMENT_FILE))?;
        write_json(&dir.join(PLAN_FILE), &self.plan)?;
        write_json(&dir.join(ROUTER_FILE), &self.router)?;
        for g in &self.groups {
            let gdir = dir.join(GROUPS_DIR).join(g.id.label.as_str());
            fs::create_dir_all(&gdir).map_err(|e| Error::io(&gdir, e))?;
            let hash = g.manifest.hash();
            write_json(&gdir.join(MANIFEST_FILE), &g.manifest)?;
            write_json(&gdir.join(PROVENANCE_FILE), &g.provenance)?;
            Checkpoint::new(g.vae.clone(), hash.clone(), self.config.train)
                .save(&gdir.join(VAE_FILE))?;
            Checkpoint::new(g.dnn.clone(), hash, self.config.train).save(&gdir.join(DNN_FILE))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let config = ExperimentConfig::load(&dir.join(EXPERIMENT_FILE))?;
        let plan: SplitPlan = read_json(&dir.join(PLAN_FILE))?;
        let router: Router = read_json(&dir.join(ROUTER_FILE))?;
        router.check_partition()?;
        let mut groups = Vec::with_capacity(router.groups.len());
        for g in &router.groups {
            let gdir = dir.join(GROUPS_DIR).join(g.id.label.as_str());
            for f in [MANIFEST_FILE, VAE_FILE, DNN_FILE] {
                let p = gdir.join(f);
                if !p.exists() {
                    return Err(Error::MissingCheckpoint {
                        group: g.id.to_string(),
                        path: p,
                    });
                }
            }
            let manifest: PreprocManifest = read_json(&gdir.join(MANIFEST_FILE))?;
            let hash = manifest.hash();
            let vae = Checkpoint::<VaeModel>::load_for(&gdir.join(VAE_FILE), &hash)?.model;
            let dnn = Checkpoint::<PredictorDnn>::load_for(&gdir.join(DNN_FILE), &hash)?.model;
            let provenance: TrainingProvenance = read_json(&gdir.join(PROVENANCE_FILE))?;
            groups.push(GroupModel {
                id: g.id,
                manifest,
                vae,
                dnn,
                provenance,
            });
        }
        Ok(GroupedModelSet {
            config,
            grid: build_cipic_grid(),
            plan,
            router,
            groups,
        })
    }

    /// Refit the fold's preprocessing on `prep` and require identical
    /// manifests and router, so models are never applied to data they were
    /// not trained for.
    pub fn verify_against(&self, prep: &PreparedDataset) -> Result<()> {
        let fp = fit_fold_preprocessing(prep, &self.config, &self.plan.fold_subject_id)?;
        if fp.plan != self.plan {
            return Err(Error::Config(format!(
                "split plan of fold {} does not match the data",
                self.plan.fold_subject_id
            )));
        }
        if fp.router != self.router {
            return Err(Error::Config(format!(
                "router of fold {} does not match the data",
                self.plan.fold_subject_id
            )));
        }
        for (g, m) in self.groups.iter().zip(&fp.manifests) {
            if g.manifest.hash() != m.hash() {
                return Err(Error::Config(format!(
                    "manifest hash mismatch for group {}: models expect {}, data gives {}",
                    g.id,
                    g.manifest.hash(),
                    m.hash()
                )));
            }
        }
        Ok(())
    }
}

/// Route, run the predictor, decode the latent mean and denormalize.
pub fn predict_hrtf(
    models: &GroupedModelSet,
    anthro_raw: &[f64],
    direction_index: usize,
) -> Result<Hrtf> {
    let model = models.model_for(direction_index)?;
    let db = models.predict_group(model, anthro_raw, &[direction_index])?;
    Ok(Hrtf {
        bins: db.row(0).to_vec(),
        scale: HrtfScale::Db,
        direction_index,
        subject_id: String::new(),
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::malformed(path.display().to_string(), e.to_string()))
}
