use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use log::warn;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{build_cipic_grid, MeasurementGrid, HRIR_LEN, N_ANTHRO, SAMPLE_RATE_HZ};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ANTHRO_FILE: &str = "anthro.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: String,
    /// 17 torso/head parameters followed by 10 left-pinna parameters.
    pub anthro_raw: Vec<f64>,
    /// One row per grid direction (grid order), `HRIR_LEN` samples per row.
    pub hrirs: Array2<f64>,
}

impl Subject {
    pub fn validate(&self, n_directions: usize) -> Result<()> {
        if self.anthro_raw.len() != N_ANTHRO {
            return Err(Error::malformed(
                format!("subject {}", self.id),
                format!(
                    "expected {N_ANTHRO} anthropometric values, got {}",
                    self.anthro_raw.len()
                ),
            ));
        }
        if let Some(i) = self.anthro_raw.iter().position(|v| !v.is_finite()) {
            return Err(Error::malformed(
                format!("subject {}", self.id),
                format!("anthropometric value p{} is not finite", i + 1),
            ));
        }
        if self.hrirs.ncols() != HRIR_LEN {
            return Err(Error::malformed(
                format!("subject {}", self.id),
                format!("HRIR length {} != {HRIR_LEN}", self.hrirs.ncols()),
            ));
        }
        if self.hrirs.nrows() != n_directions {
            return Err(Error::IncompleteGrid {
                subject_id: self.id.clone(),
                found: self.hrirs.nrows(),
                expected: n_directions,
            });
        }
        if self.hrirs.iter().any(|v| !v.is_finite()) {
            return Err(Error::malformed(
                format!("subject {}", self.id),
                "HRIR contains non-finite samples",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub subjects: Vec<Subject>,
    pub grid: MeasurementGrid,
    pub sample_rate_hz: u32,
}

impl Dataset {
    pub fn new(subjects: Vec<Subject>, grid: MeasurementGrid) -> Result<Self> {
        let ds = Dataset {
            subjects,
            grid,
            sample_rate_hz: SAMPLE_RATE_HZ,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for s in &self.subjects {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::malformed(
                    "dataset",
                    format!("duplicate subject id {}", s.id),
                ));
            }
            s.validate(self.grid.len())?;
        }
        Ok(())
    }

    pub fn subject(&self, id: &str) -> Option<&Subject> {
        self.subjects.iter().find(|s| s.id == id)
    }

    pub fn subject_ids(&self) -> Vec<String> {
        self.subjects.iter().map(|s| s.id.clone()).collect()
    }

    /// SHA-256 over ids, anthropometrics and HRIR samples, hex-encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.sample_rate_hz.to_le_bytes());
        for s in &self.subjects {
            h.update(s.id.as_bytes());
            h.update([0u8]);
            for v in &s.anthro_raw {
                h.update(v.to_le_bytes());
            }
            for v in s.hrirs.iter() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetManifest {
    sample_rate_hz: u32,
    hrir_len: usize,
    grid: String,
    subjects: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Fail on incomplete subjects instead of skipping them.
    pub strict: bool,
}

/// A subject dropped during loading.
#[derive(Debug)]
pub struct SkippedSubject {
    pub id: String,
    pub reason: Error,
}

pub fn hrir_file_name(id: &str) -> String {
    format!("hrir_{id}.f64")
}

/// Load a dataset directory, skipping incomplete subjects unless `strict`.
pub fn load_dataset(dir: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset> {
    load_dataset_report(dir, opts).map(|(ds, _)| ds)
}

pub fn load_dataset_report(
    dir: impl AsRef<Path>,
    opts: &LoadOptions,
) -> Result<(Dataset, Vec<SkippedSubject>)> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)
        .map_err(|e| Error::malformed(manifest_path.display().to_string(), e.to_string()))?;
    if manifest.sample_rate_hz != SAMPLE_RATE_HZ {
        return Err(Error::malformed(
            MANIFEST_FILE,
            format!(
                "sample_rate_hz {} != {SAMPLE_RATE_HZ}",
                manifest.sample_rate_hz
            ),
        ));
    }
    if manifest.hrir_len != HRIR_LEN {
        return Err(Error::malformed(
            MANIFEST_FILE,
            format!("hrir_len {} != {HRIR_LEN}", manifest.hrir_len),
        ));
    }
    if manifest.grid != "cipic" {
        return Err(Error::malformed(
            MANIFEST_FILE,
            format!("unknown grid {:?}", manifest.grid),
        ));
    }
    let grid = build_cipic_grid();

    let anthro = read_anthro_csv(&dir.join(ANTHRO_FILE))?;

    let mut subjects = Vec::new();
    let mut skipped = Vec::new();
    for id in &manifest.subjects {
        let anthro_raw = anthro
            .iter()
            .find(|(sid, _)| sid == id)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| Error::malformed(ANTHRO_FILE, format!("no row for subject {id}")))?;
        let hrirs = read_hrir_file(&dir.join(hrir_file_name(id)))?;
        let subject = Subject {
            id: id.clone(),
            anthro_raw,
            hrirs,
        };
        match subject.validate(grid.len()) {
            Ok(()) => subjects.push(subject),
            Err(e @ Error::IncompleteGrid { .. }) if !opts.strict => {
                warn!("skipping subject: {e}");
                skipped.push(SkippedSubject {
                    id: id.clone(),
                    reason: e,
                });
            }
            Err(e) => return Err(e),
        }
    }
    let ds = Dataset {
        subjects,
        grid,
        sample_rate_hz: manifest.sample_rate_hz,
    };
    ds.validate()?;
    Ok((ds, skipped))
}

fn read_anthro_csv(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let expected: Vec<String> = std::iter::once("id".to_string())
        .chain((1..=N_ANTHRO).map(|i| format!("p{i}")))
        .collect();
    if headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::malformed(
            path.display().to_string(),
            format!("header must be id,p1..p{N_ANTHRO}"),
        ));
    }
    let mut rows = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let id = record[0].to_string();
        let values = record
            .iter()
            .skip(1)
            .enumerate()
            .map(|(i, field)| {
                field.trim().parse::<f64>().map_err(|_| {
                    Error::malformed(
                        path.display().to_string(),
                        format!("row {row}: p{} = {field:?} is not a number", i + 1),
                    )
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((id, values));
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::malformed(path.display().to_string(), format!("{other:?}")),
    }
}

fn read_hrir_file(path: &Path) -> Result<Array2<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::malformed(
            path.display().to_string(),
            format!("{} bytes is not a whole number of f64 samples", bytes.len()),
        ));
    }
    let samples: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let rows = samples.len() / HRIR_LEN;
    let tail = samples.len() % HRIR_LEN;
    if tail != 0 {
        return Err(Error::malformed(
            path.display().to_string(),
            format!("HRIR row {rows} has length {tail}, expected {HRIR_LEN}"),
        ));
    }
    Array2::from_shape_vec((rows, HRIR_LEN), samples)
        .map_err(|e| Error::Internal(format!("hrir reshape: {e}")))
}

/// Write a dataset in the on-disk directory format. Files are written
/// byte-deterministically.
pub fn write_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let manifest = DatasetManifest {
        sample_rate_hz: ds.sample_rate_hz,
        hrir_len: HRIR_LEN,
        grid: "cipic".into(),
        subjects: ds.subject_ids(),
    };
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

    let path = dir.join(ANTHRO_FILE);
    let mut out = String::from("id");
    for i in 1..=N_ANTHRO {
        out.push_str(&format!(",p{i}"));
    }
    out.push('\n');
    for s in &ds.subjects {
        out.push_str(&s.id);
        for v in &s.anthro_raw {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    fs::write(&path, out).map_err(|e| Error::io(&path, e))?;

    for s in &ds.subjects {
        let path = dir.join(hrir_file_name(&s.id));
        let mut buf = Vec::with_capacity(s.hrirs.len() * 8);
        for v in s.hrirs.iter() {
            buf.write_all(&v.to_le_bytes()).expect("vec write");
        }
        fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::synth::generate_synthetic_dataset;

    #[test]
    fn round_trip_two_subjects() {
        let ds = generate_synthetic_dataset(2, 11).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        write_dataset(&ds, tmp.path()).unwrap();
        let back = load_dataset(tmp.path(), &LoadOptions::default()).unwrap();
        assert_eq!(back.subjects.len(), 2);
        assert_eq!(back, ds);
        assert_eq!(back.fingerprint(), ds.fingerprint());
    }

    fn truncate_rows(path: &Path, keep_samples: usize) {
        let bytes = fs::read(path).unwrap();
        fs::write(path, &bytes[..keep_samples * 8]).unwrap();
    }

    #[test]
    fn incomplete_subject_skipped_or_rejected() {
        let ds = generate_synthetic_dataset(2, 3).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        write_dataset(&ds, tmp.path()).unwrap();
        let victim = tmp.path().join(hrir_file_name(&ds.subjects[1].id));
        truncate_rows(&victim, 1249 * HRIR_LEN);

        let (loaded, skipped) = load_dataset_report(tmp.path(), &LoadOptions::default()).unwrap();
        assert_eq!(loaded.subjects.len(), 1);
        assert_eq!(skipped.len(), 1);
        assert_eq!(skipped[0].id, ds.subjects[1].id);

        let err = load_dataset(tmp.path(), &LoadOptions { strict: true }).unwrap_err();
        match err {
            Error::IncompleteGrid {
                found, expected, ..
            } => {
                assert_eq!((found, expected), (1249, 1250));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn short_row_is_malformed() {
        let ds = generate_synthetic_dataset(1, 3).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        write_dataset(&ds, tmp.path()).unwrap();
        let victim = tmp.path().join(hrir_file_name(&ds.subjects[0].id));
        truncate_rows(&victim, 1249 * HRIR_LEN + 199);
        let err = load_dataset(tmp.path(), &LoadOptions::default()).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Malformed { .. }));
        assert!(msg.contains("row 1249"), "{msg}");
        assert!(msg.contains("length 199"), "{msg}");
    }

    #[test]
    fn missing_files_reported() {
        let tmp = tempfile::tempdir().unwrap();
        let err = load_dataset(tmp.path(), &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));

        let ds = generate_synthetic_dataset(1, 3).unwrap();
        write_dataset(&ds, tmp.path()).unwrap();
        fs::remove_file(tmp.path().join(hrir_file_name(&ds.subjects[0].id))).unwrap();
        let err = load_dataset(tmp.path(), &LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("hrir_"), "{err}");
    }

    #[test]
    fn bad_anthro_value() {
        let ds = generate_synthetic_dataset(1, 3).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        write_dataset(&ds, tmp.path()).unwrap();
        let path = tmp.path().join(ANTHRO_FILE);
        let text = fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        let mut fields: Vec<&str> = lines[1].split(',').collect();
        fields[3] = "abc";
        lines[1] = fields.join(",");
        fs::write(&path, lines.join("\n")).unwrap();
        let err = load_dataset(tmp.path(), &LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("p3"), "{err}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut ds = generate_synthetic_dataset(2, 3).unwrap();
        ds.subjects[1].id = ds.subjects[0].id.clone();
        assert!(ds.validate().is_err());
    }
}
