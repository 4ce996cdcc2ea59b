use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::anova::{one_way_anova, AnovaResult};
use super::lsd::lsd;
use super::models::{GroupedModelSet, PreparedDataset};
use crate::datamodel::Side;
use crate::error::{Error, Result};
use crate::grouping::{GroupId, GroupLabel, Strategy};

/// LSD of one predicted HRTF of a held-out subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub subject_id: String,
    pub direction_index: usize,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub strategy: Strategy,
    pub group: GroupLabel,
    pub side: Side,
    pub seen: bool,
    pub lsd_db: f64,
}

impl EvalRecord {
    pub fn group_id(&self) -> GroupId {
        GroupId {
            strategy: self.strategy,
            label: self.group,
        }
    }
}

/// Predict every direction the router covers for the fold's held-out
/// subject and score it against the measured HRTF. Records are ordered by
/// direction index.
pub fn evaluate_fold(models: &GroupedModelSet, prep: &PreparedDataset) -> Result<Vec<EvalRecord>> {
    let subject_id = &models.plan.fold_subject_id;
    let s = prep.subject_index(subject_id)?;
    let subject = &prep.dataset.subjects[s];
    let truth = &prep.hrtfs_db[s];
    let seen = models.plan.seen_mask(prep.dataset.grid.len());
    let mut records = Vec::with_capacity(prep.dataset.grid.len());
    for (group, model) in models.router.groups.iter().zip(&models.groups) {
        if group.id != model.id {
            return Err(Error::Internal(
                "model order differs from router order".into(),
            ));
        }
        let predicted = models.predict_group(model, &subject.anthro_raw, &group.directions)?;
        for (row, &d) in predicted.rows().into_iter().zip(&group.directions) {
            let dir = &prep.dataset.grid.directions[d];
            let value = lsd(
                truth.row(d).as_slice().expect("standard layout"),
                row.as_slice().expect("standard layout"),
                None,
            )?;
            records.push(EvalRecord {
                subject_id: subject_id.clone(),
                direction_index: d,
                azimuth_deg: dir.azimuth_deg,
                elevation_deg: dir.elevation_deg,
                strategy: group.id.strategy,
                group: group.id.label,
                side: dir.side(),
                seen: seen[d],
                lsd_db: value,
            });
        }
    }
    records.sort_by_key(|r| r.direction_index);
    Ok(records)
}

/// Count and mean LSD of a set of records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub n: usize,
    pub mean_lsd: Option<f64>,
}

impl CellStats {
    pub fn of<'a>(records: impl IntoIterator<Item = &'a EvalRecord>) -> Self {
        let (n, sum) = records
            .into_iter()
            .fold((0usize, 0.0), |(n, s), r| (n + 1, s + r.lsd_db));
        CellStats {
            n,
            mean_lsd: (n > 0).then(|| sum / n as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub all: CellStats,
    pub seen: CellStats,
    pub unseen: CellStats,
}

impl SplitStats {
    pub fn of(records: &[&EvalRecord]) -> Self {
        SplitStats {
            all: CellStats::of(records.iter().copied()),
            seen: CellStats::of(records.iter().copied().filter(|r| r.seen)),
            unseen: CellStats::of(records.iter().copied().filter(|r| !r.seen)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaEntry {
    pub comparison: String,
    /// `seen` or `unseen`.
    pub condition: String,
    pub n_a: usize,
    pub n_b: usize,
    pub result: AnovaResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub strategy: Option<Strategy>,
    pub folds: Vec<String>,
    pub n_records: usize,
    pub mean_lsd: Option<f64>,
    pub seen_mean_lsd: Option<f64>,
    pub unseen_mean_lsd: Option<f64>,
    pub per_side: BTreeMap<String, SplitStats>,
    pub per_group: BTreeMap<String, SplitStats>,
    pub anova: Vec<AnovaEntry>,
}

fn anova_by_condition(comparison: &str, a: &[&EvalRecord], b: &[&EvalRecord]) -> Vec<AnovaEntry> {
    let mut out = Vec::new();
    for (condition, seen) in [("seen", true), ("unseen", false)] {
        let xa: Vec<f64> = a
            .iter()
            .filter(|r| r.seen == seen)
            .map(|r| r.lsd_db)
            .collect();
        let xb: Vec<f64> = b
            .iter()
            .filter(|r| r.seen == seen)
            .map(|r| r.lsd_db)
            .collect();
        if let Ok(result) = one_way_anova(&xa, &xb) {
            out.push(AnovaEntry {
                comparison: comparison.to_string(),
                condition: condition.to_string(),
                n_a: xa.len(),
                n_b: xb.len(),
                result,
            });
        }
    }
    out
}

/// Aggregate records into overall, per-side and per-group means, with an
/// ipsilateral-vs-contralateral ANOVA for seen and unseen directions.
pub fn summarize(records: &[EvalRecord]) -> Summary {
    let all: Vec<&EvalRecord> = records.iter().collect();
    let overall = SplitStats::of(&all);
    let mut strategies: Vec<Strategy> = records.iter().map(|r| r.strategy).collect();
    strategies.dedup();
    let mut folds: Vec<String> = records.iter().map(|r| r.subject_id.clone()).collect();
    folds.sort();
    folds.dedup();
    let by_side =
        |side: Side| -> Vec<&EvalRecord> { records.iter().filter(|r| r.side == side).collect() };
    let ipsi = by_side(Side::Ipsilateral);
    let contra = by_side(Side::Contralateral);
    let mut per_side = BTreeMap::new();
    for (side, recs) in [(Side::Ipsilateral, &ipsi), (Side::Contralateral, &contra)] {
        if !recs.is_empty() {
            per_side.insert(side.as_str().to_string(), SplitStats::of(recs));
        }
    }
    let mut labels: Vec<GroupLabel> = records.iter().map(|r| r.group).collect();
    labels.sort();
    labels.dedup();
    let per_group = labels
        .into_iter()
        .map(|l| {
            let recs: Vec<&EvalRecord> = records.iter().filter(|r| r.group == l).collect();
            (l.as_str().to_string(), SplitStats::of(&recs))
        })
        .collect();
    Summary {
        strategy: (strategies.len() == 1).then(|| strategies[0]),
        folds,
        n_records: records.len(),
        mean_lsd: overall.all.mean_lsd,
        seen_mean_lsd: overall.seen.mean_lsd,
        unseen_mean_lsd: overall.unseen.mean_lsd,
        per_side,
        per_group,
        anova: anova_by_condition("ipsilateral_vs_contralateral", &ipsi, &contra),
    }
}

/// ANOVA between two runs' records, separately for seen and unseen directions.
pub fn compare_runs(
    name_a: &str,
    a: &[EvalRecord],
    name_b: &str,
    b: &[EvalRecord],
) -> Vec<AnovaEntry> {
    let ra: Vec<&EvalRecord> = a.iter().collect();
    let rb: Vec<&EvalRecord> = b.iter().collect();
    anova_by_condition(&format!("{name_a}_vs_{name_b}"), &ra, &rb)
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordRow {
    subject_id: String,
    direction_index: usize,
    azimuth_deg: f64,
    elevation_deg: f64,
    strategy: Strategy,
    group: GroupLabel,
    side: Side,
    seen: bool,
    lsd_db: f64,
}

pub fn write_records_csv(path: &Path, records: &[EvalRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in records {
        w.serialize(RecordRow {
            subject_id: r.subject_id.clone(),
            direction_index: r.direction_index,
            azimuth_deg: r.azimuth_deg,
            elevation_deg: r.elevation_deg,
            strategy: r.strategy,
            group: r.group,
            side: r.side,
            seen: r.seen,
            lsd_db: r.lsd_db,
        })
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records_csv(path: &Path) -> Result<Vec<EvalRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize::<RecordRow>()
        .map(|row| {
            let row = row.map_err(|e| csv_error(path, e))?;
            Ok(EvalRecord {
                subject_id: row.subject_id,
                direction_index: row.direction_index,
                azimuth_deg: row.azimuth_deg,
                elevation_deg: row.elevation_deg,
                strategy: row.strategy,
                group: row.group,
                side: row.side,
                seen: row.seen,
                lsd_db: row.lsd_db,
            })
        })
        .collect()
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::malformed(path.display().to_string(), e.to_string())
}
