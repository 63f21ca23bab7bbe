//! File formats: numeric CSV tables, trait/covariate tables keyed by
//! subject id, the covariance manifest, smoothed covariances and sweep
//! reports. Floats are written with 17 significant digits.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VcompError};
use crate::estimate::CovarianceSet;
use crate::functional::{FunctionalGrid, SmoothedCovariance};
use crate::model::{CovariateMatrix, TraitMatrix};
use crate::simulation::SimulationReport;

/// Round-trip float formatting (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| VcompError::InvalidInput(format!("{what}: cannot parse `{s}` as a number")))
}

fn write_rows(path: &Path, header: Option<Vec<String>>, rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if let Some(h) = header {
        w.write_record(&h)?;
    }
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// Headerless numeric CSV.
pub fn write_matrix_csv(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    write_rows(path.as_ref(), None, (0..m.nrows()).map(|i| m.row(i).iter().map(|&v| fmt_f64(v)).collect()))
}

/// Numeric CSV; a first row that does not parse as numbers is treated as a
/// header and skipped.
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
    let what = path.display().to_string();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: Result<Vec<f64>> = rec.iter().map(|s| parse_f64(s, &what)).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(e),
        }
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(VcompError::InvalidInput(format!("{what}: empty or ragged numeric table")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Header `subject_id,<names...>`, one row per subject.
fn read_keyed_table(path: &Path) -> Result<(Vec<String>, Vec<String>, DMatrix<f64>)> {
    let what = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(VcompError::InvalidInput(format!("{what}: expected a subject id column and at least one value column")));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(VcompError::InvalidInput(format!("{what}: row for `{}` has {} fields", &rec[0], rec.len())));
        }
        ids.push(rec[0].to_string());
        for s in rec.iter().skip(1) {
            values.push(parse_f64(s, &what)?);
        }
    }
    let m = DMatrix::from_row_slice(ids.len(), names.len(), &values);
    Ok((ids, names, m))
}

pub fn read_traits_csv(path: impl AsRef<Path>) -> Result<TraitMatrix> {
    let (ids, names, m) = read_keyed_table(path.as_ref())?;
    TraitMatrix::new(m, ids, names)
}

pub fn write_traits_csv(path: impl AsRef<Path>, y: &TraitMatrix) -> Result<()> {
    let mut header = vec!["subject_id".to_string()];
    header.extend(y.trait_ids().iter().cloned());
    let rows = (0..y.n_subjects()).map(|i| {
        let mut r = vec![y.subject_ids()[i].clone()];
        r.extend(y.values().row(i).iter().map(|&v| fmt_f64(v)));
        r
    });
    write_rows(path.as_ref(), Some(header), rows)
}

/// Covariates keyed by subject id, reordered to `subject_order`; an
/// intercept is prepended unless an all-ones column is present.
pub fn read_covariates_csv(path: impl AsRef<Path>, subject_order: &[String]) -> Result<CovariateMatrix> {
    let (ids, names, m) = read_keyed_table(path.as_ref())?;
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let rows = subject_order
        .iter()
        .map(|s| index.get(s.as_str()).copied().ok_or_else(|| VcompError::UnknownSubject(s.clone())))
        .collect::<Result<Vec<_>>>()?;
    let ordered = m.select_rows(rows.iter());
    let has_intercept = (0..ordered.ncols()).any(|c| ordered.column(c).iter().all(|&v| v == 1.0));
    if has_intercept {
        CovariateMatrix::new(ordered, names)
    } else {
        CovariateMatrix::with_intercept(ordered, names)
    }
}

/// One column of grid points, optional header.
pub fn read_grid_csv(path: impl AsRef<Path>) -> Result<FunctionalGrid> {
    let m = read_matrix_csv(path)?;
    if m.ncols() != 1 {
        return Err(VcompError::InvalidInput(format!("grid file must have one column, got {}", m.ncols())));
    }
    FunctionalGrid::new(m.column(0).iter().copied().collect())
}

pub fn write_grid_csv(path: impl AsRef<Path>, grid: &FunctionalGrid) -> Result<()> {
    write_rows(path.as_ref(), Some(vec!["t".into()]), grid.timepoints().iter().map(|&t| vec![fmt_f64(t)]))
}

/// Square covariance with trait ids as header.
pub fn write_labeled_covariance(path: impl AsRef<Path>, sigma: &DMatrix<f64>, ids: &[String]) -> Result<()> {
    write_rows(
        path.as_ref(),
        Some(ids.to_vec()),
        (0..sigma.nrows()).map(|i| sigma.row(i).iter().map(|&v| fmt_f64(v)).collect()),
    )
}

/// Metadata written next to per-component covariance CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub labels: Vec<String>,
    /// Component CSV file names, relative to the manifest.
    pub files: Vec<String>,
    pub trait_ids: Vec<String>,
    pub n: usize,
    pub q: usize,
    pub estimator: String,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub psd_certified: Vec<bool>,
    /// Per-trait standard deviations used for back-scaling.
    pub scale_vector: Vec<f64>,
    pub options: serde_json::Value,
}

/// Writes `<label>.csv` per component plus `manifest.json` into `dir`.
pub fn write_estimate(dir: impl AsRef<Path>, set: &CovarianceSet, manifest: &Manifest) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (file, sigma) in manifest.files.iter().zip(set.sigmas()) {
        write_labeled_covariance(dir.join(file), sigma, &manifest.trait_ids)?;
    }
    let path = dir.join("manifest.json");
    write_json(&path, manifest)?;
    Ok(path)
}

/// Reads a manifest and its component matrices.
pub fn read_estimate(manifest_path: impl AsRef<Path>) -> Result<(CovarianceSet, Manifest)> {
    let path = manifest_path.as_ref();
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(path)?)?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let sigmas = manifest.files.iter().map(|f| read_matrix_csv(dir.join(f))).collect::<Result<Vec<_>>>()?;
    for s in &sigmas {
        if s.nrows() != manifest.q || s.ncols() != manifest.q {
            return Err(VcompError::DimensionMismatch(format!("component is {}x{}, manifest says q = {}", s.nrows(), s.ncols(), manifest.q)));
        }
    }
    Ok((CovarianceSet::new(sigmas, manifest.labels.clone())?, manifest))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedMeta {
    pub bandwidth: f64,
    pub gcv_score: f64,
    pub noise_variance: Option<f64>,
}

/// `<stem>.csv` with the grid as header row and `<stem>.json` metadata.
pub fn write_smoothed(dir: impl AsRef<Path>, stem: &str, s: &SmoothedCovariance) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let header = s.grid.timepoints().iter().map(|&t| fmt_f64(t)).collect();
    write_rows(
        &dir.join(format!("{stem}.csv")),
        Some(header),
        (0..s.values.nrows()).map(|i| s.values.row(i).iter().map(|&v| fmt_f64(v)).collect()),
    )?;
    let meta = SmoothedMeta { bandwidth: s.bandwidth, gcv_score: s.gcv_score, noise_variance: s.noise_variance };
    write_json(dir.join(format!("{stem}.json")), &meta)
}

pub fn read_smoothed(dir: impl AsRef<Path>, stem: &str) -> Result<SmoothedCovariance> {
    let dir = dir.as_ref();
    let csv_path = dir.join(format!("{stem}.csv"));
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(&csv_path)?;
    let what = csv_path.display().to_string();
    let grid = FunctionalGrid::new(rdr.headers()?.iter().map(|s| parse_f64(s, &what)).collect::<Result<_>>()?)?;
    let values = read_matrix_csv(&csv_path)?;
    let meta: SmoothedMeta = serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
    Ok(SmoothedCovariance { grid, values, bandwidth: meta.bandwidth, gcv_score: meta.gcv_score, noise_variance: meta.noise_variance })
}

/// `metrics.csv`, `failures.csv`, `summary.json` (deterministic) and
/// `runtimes.csv` (wall clock).
pub fn write_report(dir: impl AsRef<Path>, report: &SimulationReport) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_rows(
        &dir.join("metrics.csv"),
        Some(["estimator", "n", "replicate", "metric", "value"].map(String::from).to_vec()),
        report
            .metrics
            .iter()
            .map(|r| vec![r.estimator.clone(), r.n.to_string(), r.replicate.to_string(), r.metric.clone(), fmt_f64(r.value)]),
    )?;
    write_rows(
        &dir.join("runtimes.csv"),
        Some(["estimator", "n", "replicate", "seconds"].map(String::from).to_vec()),
        report
            .runtimes
            .iter()
            .map(|r| vec![r.estimator.clone(), r.n.to_string(), r.replicate.to_string(), fmt_f64(r.seconds)]),
    )?;
    write_rows(
        &dir.join("failures.csv"),
        Some(["estimator", "n", "replicate", "message"].map(String::from).to_vec()),
        report
            .failures
            .iter()
            .map(|r| vec![r.estimator.clone(), r.n.to_string(), r.replicate.to_string(), r.message.clone()]),
    )?;
    write_json(dir.join("summary.json"), &report.summary())
}
