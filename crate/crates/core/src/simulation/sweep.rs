use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VcompError};
use crate::estimate::{heritability, mvhe_from_state, mvrehe_from_state, univariate_fit, CovarianceSet, SolveOptions, SolverState};
use crate::linalg;
use crate::model::{ComponentSpec, TraitMatrix};
use crate::regression::{
    fit_with, latent_beta_unregularized, latent_r2, to_correlation, BlockPartition, Hyperparameters, TensorOptions,
};
use crate::simulation::design::{PreparedDesign, SimulationDesign};
use crate::simulation::sampling::job_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepEstimator {
    Mvrehe,
    /// mvHE followed by PSD truncation.
    Mvhe,
    /// Returns the ground truth; sanity baseline.
    Oracle,
    /// Per-trait constrained fits; off-diagonals are zero.
    Univariate,
}

impl SweepEstimator {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepEstimator::Mvrehe => "mvrehe",
            SweepEstimator::Mvhe => "mvhe",
            SweepEstimator::Oracle => "oracle",
            SweepEstimator::Univariate => "univariate",
        }
    }
}

/// Fixed regression settings scored in every replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepRegression {
    pub hyperparameters: Vec<Hyperparameters>,
    pub tensor: TensorOptions,
}

impl Default for SweepRegression {
    fn default() -> Self {
        Self {
            hyperparameters: vec![
                Hyperparameters::Ridge { lambda: 3.0 },
                Hyperparameters::Lasso { lambda: 0.3 },
                Hyperparameters::Tensor { rank: 1, lambda: 0.2 },
            ],
            tensor: TensorOptions { max_alternations: 200, tolerance: 1e-9, step_tolerance: 1e-4, ..TensorOptions::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepOptions {
    pub estimators: Vec<SweepEstimator>,
    pub solve: SolveOptions,
    /// Regression metrics are computed only when set and the design has a
    /// partition.
    pub regression: Option<SweepRegression>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            estimators: vec![SweepEstimator::Mvrehe, SweepEstimator::Mvhe, SweepEstimator::Oracle],
            solve: SolveOptions::default(),
            regression: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub estimator: String,
    pub n: usize,
    pub replicate: usize,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeRow {
    pub estimator: String,
    pub n: usize,
    pub replicate: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub estimator: String,
    pub n: usize,
    pub replicate: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub estimator: String,
    pub n: usize,
    pub metric: String,
    pub median: f64,
    pub count: usize,
}

/// Long-format sweep output. `metrics` and `failures` are deterministic
/// given the design seed; `runtimes` are wall-clock measurements.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub metrics: Vec<MetricRow>,
    pub runtimes: Vec<RuntimeRow>,
    pub failures: Vec<FailureRow>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

impl SimulationReport {
    pub fn values(&self, estimator: &str, n: usize, metric: &str) -> Vec<f64> {
        self.metrics
            .iter()
            .filter(|r| r.estimator == estimator && r.n == n && r.metric == metric)
            .map(|r| r.value)
            .collect()
    }

    pub fn median(&self, estimator: &str, n: usize, metric: &str) -> Option<f64> {
        let v = self.values(estimator, n, metric);
        (!v.is_empty()).then(|| median(v))
    }

    pub fn mean(&self, estimator: &str, n: usize, metric: &str) -> Option<f64> {
        let v = self.values(estimator, n, metric);
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Median per (estimator, n, metric), sorted by key.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut groups: BTreeMap<(String, usize, String), Vec<f64>> = BTreeMap::new();
        for r in &self.metrics {
            groups.entry((r.estimator.clone(), r.n, r.metric.clone())).or_default().push(r.value);
        }
        groups
            .into_iter()
            .map(|((estimator, n, metric), v)| SummaryRow { estimator, n, metric, count: v.len(), median: median(v) })
            .collect()
    }
}

/// Per-design quantities derived from the truth once.
struct TruthCache {
    heritability: DVector<f64>,
    /// Genetic correlation matrix plus unregularized-oracle R² per response.
    regression: Option<(DMatrix<f64>, Vec<f64>)>,
}

fn truth_cache(design: &SimulationDesign, opts: &SweepOptions) -> Result<TruthCache> {
    let heritability = match design.truth.index_of("G") {
        Some(_) => heritability(&design.truth)?,
        None => DVector::zeros(0),
    };
    let regression = match (&opts.regression, &design.partition, design.truth.get("G")) {
        (Some(_), Some(part), Some(g)) => {
            let corr = to_correlation(g)?.matrix;
            let oracle = part
                .responses()
                .iter()
                .map(|&j| {
                    let beta = latent_beta_unregularized(&corr, part, j)?;
                    latent_r2(&corr, part, j, &beta)
                })
                .collect::<Result<Vec<_>>>()?;
            Some((corr, oracle))
        }
        _ => None,
    };
    Ok(TruthCache { heritability, regression })
}

fn estimate(
    which: SweepEstimator,
    y: &TraitMatrix,
    spec: &ComponentSpec,
    state: &mut Option<SolverState>,
    design: &SimulationDesign,
    solve: &SolveOptions,
) -> Result<CovarianceSet> {
    let mut state_for = |reduce: bool| -> Result<SolverState> {
        match state.take() {
            Some(s) if s.is_reduced() == reduce => Ok(s),
            _ => SolverState::new(y.values(), spec, reduce),
        }
    };
    match which {
        SweepEstimator::Oracle => Ok(design.truth.clone()),
        SweepEstimator::Mvrehe => {
            let s = state_for(solve.reduce_for(y.n_subjects(), y.n_traits()))?;
            let out = mvrehe_from_state(&s, spec.labels(), solve);
            *state = Some(s);
            let (set, diag) = out?;
            if !diag.converged {
                log::warn!("mvREHE did not converge within {} cycles", diag.iterations);
            }
            Ok(set)
        }
        SweepEstimator::Mvhe => {
            let s = state_for(false)?;
            let out = mvhe_from_state(&s, spec.labels(), true);
            *state = Some(s);
            out
        }
        SweepEstimator::Univariate => {
            let q = y.n_traits();
            let m = spec.n_components();
            let mut sigmas = vec![DMatrix::zeros(q, q); m];
            for t in 0..q {
                let col = y.values().column(t).into_owned();
                let comp = univariate_fit(&col, spec, true)?;
                for k in 0..m {
                    sigmas[k][(t, t)] = comp[k];
                }
            }
            CovarianceSet::new(sigmas, spec.labels().to_vec())
        }
    }
}

fn regression_ratios(
    which: SweepEstimator,
    est_g: &DMatrix<f64>,
    part: &BlockPartition,
    truth_corr: &DMatrix<f64>,
    oracle: &[f64],
    reg: &SweepRegression,
) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::with_capacity(reg.hyperparameters.len());
    if which == SweepEstimator::Oracle {
        // the oracle scores its own unregularized optimum, so the ratio is 1
        for h in &reg.hyperparameters {
            out.push((format!("r2_ratio_{}", h.method().as_str()), 1.0));
        }
        return Ok(out);
    }
    let corr = to_correlation(est_g)?.matrix;
    for h in &reg.hyperparameters {
        let mut ratios = Vec::with_capacity(oracle.len());
        for (&j, &r_star) in part.responses().iter().zip(oracle) {
            if !(r_star > 1e-12) {
                continue;
            }
            let fit = fit_with(&corr, part, j, *h, &reg.tensor)?;
            ratios.push(latent_r2(truth_corr, part, j, &fit.beta)? / r_star);
        }
        if ratios.is_empty() {
            return Err(VcompError::ZeroVariance("no response has positive oracle R²".into()));
        }
        out.push((format!("r2_ratio_{}", h.method().as_str()), ratios.iter().sum::<f64>() / ratios.len() as f64));
    }
    Ok(out)
}

struct JobOutput {
    metrics: Vec<MetricRow>,
    runtimes: Vec<RuntimeRow>,
    failures: Vec<FailureRow>,
}

fn run_job(
    design: &SimulationDesign,
    prepared: &PreparedDesign,
    opts: &SweepOptions,
    cache: &TruthCache,
    replicate: usize,
) -> JobOutput {
    let n = prepared.n_subjects();
    let mut out = JobOutput { metrics: vec![], runtimes: vec![], failures: vec![] };
    let y = match prepared.sample(job_seed(design.seed, n, replicate)) {
        Ok(y) => y,
        Err(e) => {
            out.failures.push(FailureRow { estimator: "sampler".into(), n, replicate, message: e.to_string() });
            return out;
        }
    };
    let mut state = None;
    for &which in &opts.estimators {
        let name = which.as_str().to_string();
        let row = |metric: String, value: f64| MetricRow { estimator: name.clone(), n, replicate, metric, value };
        let start = Instant::now();
        let result = estimate(which, &y, prepared.spec(), &mut state, design, &opts.solve);
        out.runtimes.push(RuntimeRow { estimator: name.clone(), n, replicate, seconds: start.elapsed().as_secs_f64() });
        let est = match result {
            Ok(e) => e,
            Err(e) => {
                out.failures.push(FailureRow { estimator: name.clone(), n, replicate, message: e.to_string() });
                continue;
            }
        };
        let metrics = (|| -> Result<Vec<MetricRow>> {
            let mut rows = Vec::new();
            for (label, truth) in design.truth.labels().iter().zip(design.truth.sigmas()) {
                let sigma = est.get(label).ok_or_else(|| VcompError::InvalidInput(format!("missing {label}")))?;
                rows.push(row(format!("spectral_error_{label}"), linalg::spectral_norm_sym(&(sigma - truth))?));
            }
            if cache.heritability.len() > 0 {
                let h = heritability(&est)?;
                rows.push(row("heritability_error".into(), (h - &cache.heritability).norm()));
            }
            if let (Some((corr, oracle)), Some(reg), Some(part)) =
                (&cache.regression, &opts.regression, &design.partition)
            {
                let g = est.get("G").expect("truth has G");
                for (metric, value) in regression_ratios(which, g, part, corr, oracle, reg)? {
                    rows.push(row(metric, value));
                }
            }
            Ok(rows)
        })();
        match metrics {
            Ok(rows) => out.metrics.extend(rows),
            Err(e) => out.failures.push(FailureRow { estimator: name, n, replicate, message: e.to_string() }),
        }
    }
    out
}

/// Simulates every `(n, replicate)` job, fits each estimator and records
/// spectral errors per component, heritability L2 error and (optionally)
/// mean achieved/oracle latent R² per regression method.
///
/// Jobs run on the rayon pool; each draws from its own stream seeded by
/// `(seed, n, replicate)`, so results do not depend on the thread count.
/// Estimator failures are recorded and do not stop the sweep.
pub fn run_sweep(design: &SimulationDesign, opts: &SweepOptions) -> Result<SimulationReport> {
    design.validate()?;
    opts.solve.validate()?;
    if opts.estimators.is_empty() {
        return Err(VcompError::InvalidInput("no estimators requested".into()));
    }
    let cache = truth_cache(design, opts)?;
    let mut report = SimulationReport::default();
    for &n in &design.n_grid {
        let prepared = design.prepare(n)?;
        let jobs: Vec<JobOutput> = (0..design.replicates)
            .into_par_iter()
            .map(|r| run_job(design, &prepared, opts, &cache, r))
            .collect();
        for j in jobs {
            report.metrics.extend(j.metrics);
            report.runtimes.extend(j.runtimes);
            report.failures.extend(j.failures);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::design::FamilyMix;
    use crate::simulation::truth::make_lowdim_truth;

    fn design() -> SimulationDesign {
        SimulationDesign {
            n_grid: vec![60],
            truth: make_lowdim_truth(3, 0.5, 2).unwrap(),
            family_mix: FamilyMix { base_size: 60, ..Default::default() },
            replicates: 2,
            seed: 9,
            partition: Some(BlockPartition::new(vec![0, 1], vec![2]).unwrap()),
        }
    }

    #[test]
    fn oracle_has_zero_error_and_unit_ratio() {
        let opts = SweepOptions {
            estimators: vec![SweepEstimator::Oracle],
            regression: Some(SweepRegression {
                hyperparameters: vec![Hyperparameters::Ridge { lambda: 0.5 }],
                ..Default::default()
            }),
            ..Default::default()
        };
        let rep = run_sweep(&design(), &opts).unwrap();
        assert!(rep.failures.is_empty());
        for r in &rep.metrics {
            if r.metric.starts_with("spectral") || r.metric == "heritability_error" {
                assert_eq!(r.value, 0.0);
            } else {
                assert_eq!(r.value, 1.0);
            }
        }
    }

    #[test]
    fn sweep_is_deterministic() {
        let opts = SweepOptions {
            estimators: vec![SweepEstimator::Mvrehe, SweepEstimator::Mvhe, SweepEstimator::Univariate],
            ..Default::default()
        };
        let a = run_sweep(&design(), &opts).unwrap();
        let b = run_sweep(&design(), &opts).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.metrics.len(), 2 * 3 * 4);
    }

    #[test]
    fn median_of_even_count() {
        assert_eq!(median(vec![3.0, 1.0, 2.0, 10.0]), 2.5);
    }
}
