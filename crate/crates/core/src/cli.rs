//! Command-line front end: `estimate`, `regress`, `simulate`, `smooth`.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 solver did
//! not converge (outputs are still written), 4 internal failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VcompError};
use crate::estimate::{mvhe_fit, mvrehe_fit, objective_value, CovarianceSet, SolveOptions};
use crate::functional::{estimate_noise_variance, smooth_covariance, Bandwidth};
use crate::io::{self, Manifest};
use crate::model::{
    build_household, build_kinship, residualize, standardize_columns, ComponentSpec, CovariateMatrix, Pedigree,
    TraitMatrix,
};
use crate::regression::{
    component_correlation, cross_fit_select, cross_fit_select_precomputed, refit_selected, to_correlation,
    ComponentChoice, CrossFitOptions, RegressionGrids,
};
use crate::simulation::{run_sweep, DesignConfig, PartitionConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;
pub const EXIT_INTERNAL: u8 = 4;

pub const THREADS_ENV: &str = "VCOMP_THREADS";

#[derive(Debug, Parser)]
#[command(name = "vcomp", version, about = "Multivariate variance components and latent regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorArg {
    Mvrehe,
    Mvhe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ComponentArg {
    Genetic,
    Common,
    Unique,
    Observed,
}

impl ComponentArg {
    fn choice(self) -> ComponentChoice {
        match self {
            ComponentArg::Genetic => ComponentChoice::Latent("G".into()),
            ComponentArg::Common => ComponentChoice::Latent("C".into()),
            ComponentArg::Unique => ComponentChoice::Latent("E".into()),
            ComponentArg::Observed => ComponentChoice::Observed,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit E/G/C covariance matrices from traits and a pedigree.
    Estimate {
        #[arg(long)]
        traits: PathBuf,
        #[arg(long)]
        pedigree: PathBuf,
        #[arg(long)]
        covariates: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "mvrehe")]
        estimator: EstimatorArg,
        /// mvHE only: skip the PSD truncation.
        #[arg(long)]
        no_truncate: bool,
        /// JSON file with solver options.
        #[arg(long)]
        solve: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split-based selection and fitting of latent regressions.
    Regress {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        component: ComponentArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replicate sweep from a design file.
    Simulate {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Smooth every component of an estimate into covariance functions.
    Smooth {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        /// Fixed bandwidth; GCV selection when omitted.
        #[arg(long)]
        bandwidth: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exit code for an error.
pub fn exit_code(e: &VcompError) -> u8 {
    match e {
        VcompError::Eigen(_) => EXIT_INTERNAL,
        VcompError::Io(err) if err.kind() != std::io::ErrorKind::NotFound => EXIT_INTERNAL,
        _ => EXIT_INVALID,
    }
}

/// Caps the global rayon pool from `VCOMP_THREADS`; results never depend on
/// the thread count.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let cap: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&v| v > 0)
        .ok_or_else(|| VcompError::InvalidInput(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    let threads = cap.min(std::thread::available_parallelism().map_or(cap, |n| n.get()));
    // a pool that is already set up (e.g. in tests) is left alone
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

/// Parses arguments, runs the command, returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return exit_code(&e);
    }
    match run(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cmd: &Command) -> Result<u8> {
    match cmd {
        Command::Estimate { traits, pedigree, covariates, estimator, no_truncate, solve, out } => {
            let solve = match solve {
                Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
                None => SolveOptions::default(),
            };
            cmd_estimate(traits, pedigree, covariates.as_deref(), *estimator, !*no_truncate, &solve, out)
        }
        Command::Regress { config, component, out } => cmd_regress(config, *component, out),
        Command::Simulate { design, out } => cmd_simulate(design, out),
        Command::Smooth { manifest, grid, bandwidth, out } => cmd_smooth(manifest, grid, *bandwidth, out),
    }
}

/// Traits aligned with a pedigree, residualized on covariates (or just
/// centred) and standardized, plus the ACE kernels.
pub struct PreparedData {
    pub traits: TraitMatrix,
    pub scale: nalgebra::DVector<f64>,
    pub spec: ComponentSpec,
}

pub fn prepare_data(traits: &Path, pedigree: &Path, covariates: Option<&Path>) -> Result<PreparedData> {
    let y = io::read_traits_csv(traits)?;
    let ped = Pedigree::from_csv(pedigree)?;
    let kinship = build_kinship(&ped, y.subject_ids())?;
    let household = build_household(&kinship)?;
    let spec = ComponentSpec::ace(kinship, household)?;
    let x = match covariates {
        Some(p) => io::read_covariates_csv(p, y.subject_ids())?,
        None => CovariateMatrix::intercept_only(y.n_subjects()),
    };
    let std = standardize_columns(&residualize(&y, &x)?)?;
    Ok(PreparedData { traits: std.traits, scale: std.scale, spec })
}

#[derive(Debug, Serialize)]
struct EstimateOptionsRecord<'a> {
    estimator: EstimatorArg,
    truncate: bool,
    solve: &'a SolveOptions,
}

pub fn cmd_estimate(
    traits: &Path,
    pedigree: &Path,
    covariates: Option<&Path>,
    estimator: EstimatorArg,
    truncate: bool,
    solve: &SolveOptions,
    out: &Path,
) -> Result<u8> {
    solve.validate()?;
    let data = prepare_data(traits, pedigree, covariates)?;
    let (fit, iterations, converged, diagnostics) = match estimator {
        EstimatorArg::Mvrehe => {
            let (set, diag) = mvrehe_fit(&data.traits, &data.spec, solve)?;
            let json = serde_json::to_value(&diag)?;
            (set, diag.iterations, diag.converged, json)
        }
        EstimatorArg::Mvhe => (mvhe_fit(&data.traits, &data.spec, truncate)?, 0, true, serde_json::Value::Null),
    };
    let objective = objective_value(data.traits.values(), &data.spec, fit.sigmas())?;
    let scaled = fit.map(|s| crate::model::back_scale(s, &data.scale))?;
    let manifest = Manifest {
        labels: scaled.labels().to_vec(),
        files: scaled.labels().iter().map(|l| format!("{l}.csv")).collect(),
        trait_ids: data.traits.trait_ids().to_vec(),
        n: data.traits.n_subjects(),
        q: data.traits.n_traits(),
        estimator: match estimator {
            EstimatorArg::Mvrehe => "mvrehe".into(),
            EstimatorArg::Mvhe if truncate => "mvhe".into(),
            EstimatorArg::Mvhe => "mvhe-unconstrained".into(),
        },
        objective,
        iterations,
        converged,
        psd_certified: scaled.psd_certified().to_vec(),
        scale_vector: data.scale.iter().copied().collect(),
        options: serde_json::to_value(EstimateOptionsRecord { estimator, truncate, solve })?,
    };
    io::write_estimate(out, &scaled, &manifest)?;
    io::write_json(out.join("diagnostics.json"), &diagnostics)?;
    if !converged {
        eprintln!("warning: mvREHE hit the iteration cap ({iterations}); outputs are flagged");
        return Ok(EXIT_NOT_CONVERGED);
    }
    Ok(EXIT_OK)
}

/// Precomputed split estimates for `regress`: manifests of the two halves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifests {
    pub first: PathBuf,
    pub second: PathBuf,
}

/// `regress` configuration. Either `traits` + `pedigree` (estimation runs
/// internally on family-level splits) or `splits` must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressConfig {
    #[serde(default)]
    pub traits: Option<PathBuf>,
    #[serde(default)]
    pub pedigree: Option<PathBuf>,
    #[serde(default)]
    pub covariates: Option<PathBuf>,
    #[serde(default)]
    pub splits: Vec<SplitManifests>,
    /// Full-data estimate used for the final refit in `splits` mode; the
    /// average of the split estimates when absent.
    #[serde(default)]
    pub full: Option<PathBuf>,
    pub partition: PartitionConfig,
    #[serde(default)]
    pub grids: RegressionGrids,
    #[serde(default)]
    pub cross_fit: CrossFitOptions,
}

impl RegressConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let mut cfg: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        for p in [&mut cfg.traits, &mut cfg.pedigree, &mut cfg.covariates, &mut cfg.full].into_iter().flatten() {
            fix(p);
        }
        for s in &mut cfg.splits {
            fix(&mut s.first);
            fix(&mut s.second);
        }
        Ok(cfg)
    }
}

#[derive(Debug, Serialize)]
struct FitRecord {
    response_index: usize,
    response_id: String,
    hyperparameters: crate::regression::Hyperparameters,
    r2_in_sample: f64,
    r2_out_of_sample: Option<f64>,
    objective: f64,
    converged: bool,
    predictor_ids: Vec<String>,
    beta: Vec<f64>,
}

fn component_sigma(set: &CovarianceSet, component: &ComponentChoice) -> Result<DMatrix<f64>> {
    match component {
        ComponentChoice::Observed => Ok(set.total()),
        ComponentChoice::Latent(l) => {
            set.get(l).cloned().ok_or_else(|| VcompError::InvalidInput(format!("estimate has no component `{l}`")))
        }
    }
}

pub fn cmd_regress(config: &Path, component: ComponentArg, out: &Path) -> Result<u8> {
    let cfg = RegressConfig::from_json_file(config)?;
    let part = cfg.partition.build()?;
    let choice = component.choice();
    let (tuning, full_corr, trait_ids) = match (&cfg.traits, &cfg.pedigree) {
        (Some(t), Some(p)) => {
            let data = prepare_data(t, p, cfg.covariates.as_deref())?;
            let tuning = cross_fit_select(&data.traits, &data.spec, &part, &choice, &cfg.grids, &cfg.cross_fit)?;
            let all: Vec<usize> = (0..data.traits.n_subjects()).collect();
            let corr = component_correlation(&data.traits, &data.spec, &all, &choice, &cfg.cross_fit.solve)?;
            (tuning, corr, data.traits.trait_ids().to_vec())
        }
        _ if !cfg.splits.is_empty() => {
            let mut pairs = Vec::with_capacity(cfg.splits.len());
            let mut ids = None;
            for s in &cfg.splits {
                let (a, ma) = io::read_estimate(&s.first)?;
                let (b, _) = io::read_estimate(&s.second)?;
                pairs.push((component_sigma(&a, &choice)?, component_sigma(&b, &choice)?));
                ids.get_or_insert(ma.trait_ids);
            }
            let ids = ids.expect("at least one split");
            let tuning = cross_fit_select_precomputed(&pairs, &ids, &part, &choice, &cfg.grids, &cfg.cross_fit.tensor)?;
            let full = match &cfg.full {
                Some(p) => component_sigma(&io::read_estimate(p)?.0, &choice)?,
                None => {
                    let sum = pairs.iter().fold(DMatrix::zeros(ids.len(), ids.len()), |acc, (a, b)| acc + a + b);
                    sum / (2 * pairs.len()) as f64
                }
            };
            (tuning, to_correlation(&full)?.matrix, ids)
        }
        _ => {
            return Err(VcompError::InvalidInput(
                "regress config needs `traits` and `pedigree`, or a non-empty `splits` list".into(),
            ))
        }
    };

    fs::create_dir_all(out.join("fits"))?;
    io::write_json(out.join("tuning.json"), &tuning)?;
    let predictor_ids: Vec<String> = part.predictors().iter().map(|&i| trait_ids[i].clone()).collect();
    let mut failures = Vec::new();
    for (r, fit) in tuning.responses.iter().zip(refit_selected(&full_corr, &part, &tuning, &cfg.cross_fit.tensor)) {
        match fit {
            Ok(f) => {
                let rec = FitRecord {
                    response_index: f.response_index,
                    response_id: r.response_id.clone(),
                    hyperparameters: f.hyperparameters,
                    r2_in_sample: f.r2_in_sample,
                    r2_out_of_sample: f.r2_out_of_sample,
                    objective: f.objective,
                    converged: f.converged,
                    predictor_ids: predictor_ids.clone(),
                    beta: f.beta.iter().copied().collect(),
                };
                io::write_json(out.join("fits").join(format!("{}.json", r.response_id)), &rec)?;
            }
            Err(e) => failures.push(serde_json::json!({ "response_id": r.response_id, "error": e.to_string() })),
        }
    }
    io::write_json(out.join("failures.json"), &failures)?;
    Ok(EXIT_OK)
}

pub fn cmd_simulate(design: &Path, out: &Path) -> Result<u8> {
    let cfg = DesignConfig::from_json_file(design)?;
    let built = cfg.build()?;
    let report = run_sweep(&built, &cfg.sweep)?;
    io::write_report(out, &report)?;
    Ok(EXIT_OK)
}

pub fn cmd_smooth(manifest: &Path, grid: &Path, bandwidth: Option<f64>, out: &Path) -> Result<u8> {
    let (set, _) = io::read_estimate(manifest)?;
    let grid = io::read_grid_csv(grid)?;
    if grid.len() != set.n_traits() {
        return Err(VcompError::DimensionMismatch(format!(
            "grid has {} points but the estimate has {} traits",
            grid.len(),
            set.n_traits()
        )));
    }
    let bw = bandwidth.map_or(Bandwidth::Auto, Bandwidth::Fixed);
    fs::create_dir_all(out)?;
    for (label, sigma) in set.labels().iter().zip(set.sigmas()) {
        let mut sm = smooth_covariance(sigma, &grid, bw)?;
        if label == "E" {
            sm.noise_variance = Some(estimate_noise_variance(sigma, &sm)?);
        }
        io::write_smoothed(out, &format!("smoothed_{label}"), &sm)?;
    }
    Ok(EXIT_OK)
}
