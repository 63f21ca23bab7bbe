use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VcompError};
use crate::estimate::{mvrehe_fit, SolveOptions};
use crate::linalg;
use crate::model::{ComponentSpec, KernelKind, TraitMatrix};
use crate::regression::fit::{Hyperparameters, LatentRegressionFit, Method};
use crate::regression::lasso::{lasso_from_blocks, lasso_path_from_blocks};
use crate::regression::partition::{BlockPartition, RegressionBlocks};
use crate::regression::plugin::{r2_from_blocks, ridge_from_blocks, to_correlation};
use crate::regression::tensor::{tensor_from_blocks, TensorOptions};

/// Which covariance the regression is defined on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentChoice {
    /// A latent component by label (`G`, `C`, `E`, ...).
    Latent(String),
    /// The observed-data covariance `YᵀY / n` (classical regression).
    Observed,
}

impl ComponentChoice {
    pub fn genetic() -> Self {
        ComponentChoice::Latent("G".into())
    }

    pub fn name(&self) -> String {
        match self {
            ComponentChoice::Latent(l) => l.clone(),
            ComponentChoice::Observed => "observed".into(),
        }
    }
}

fn log_grid(lo_exp: f64, hi_exp: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![10f64.powf(lo_exp)];
    }
    (0..count)
        .map(|i| 10f64.powf(lo_exp + (hi_exp - lo_exp) * i as f64 / (count - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressionGrids {
    pub ridge: Vec<f64>,
    pub lasso: Vec<f64>,
    pub tensor_ranks: Vec<usize>,
    pub tensor_lambdas: Vec<f64>,
}

impl Default for RegressionGrids {
    fn default() -> Self {
        Self {
            ridge: log_grid(-4.0, 0.0, 10),
            lasso: log_grid(-4.0, 0.0, 10),
            tensor_ranks: vec![1, 2, 3],
            tensor_lambdas: log_grid(-3.0, 0.0, 4),
        }
    }
}

impl RegressionGrids {
    pub fn single(h: Hyperparameters) -> Self {
        let mut g = Self { ridge: vec![], lasso: vec![], tensor_ranks: vec![], tensor_lambdas: vec![] };
        match h {
            Hyperparameters::Ridge { lambda } => g.ridge.push(lambda),
            Hyperparameters::Lasso { lambda } => g.lasso.push(lambda),
            Hyperparameters::Tensor { rank, lambda } => {
                g.tensor_ranks.push(rank);
                g.tensor_lambdas.push(lambda);
            }
        }
        g
    }

    /// Every candidate in a fixed order: ridge, lasso, then tensor
    /// (rank-major). Tensor candidates are skipped without a matrix layout.
    pub fn candidates(&self, with_tensor: bool) -> Vec<Hyperparameters> {
        let mut out: Vec<Hyperparameters> =
            self.ridge.iter().map(|&lambda| Hyperparameters::Ridge { lambda }).collect();
        out.extend(self.lasso.iter().map(|&lambda| Hyperparameters::Lasso { lambda }));
        if with_tensor {
            for &rank in &self.tensor_ranks {
                out.extend(self.tensor_lambdas.iter().map(|&lambda| Hyperparameters::Tensor { rank, lambda }));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrossFitOptions {
    /// Number of random half-splits; each is used in both directions.
    pub n_splits: usize,
    pub seed: u64,
    pub solve: SolveOptions,
    pub tensor: TensorOptions,
}

impl Default for CrossFitOptions {
    fn default() -> Self {
        Self { n_splits: 10, seed: 0, solve: SolveOptions::default(), tensor: TensorOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub hyperparameters: Hyperparameters,
    pub r2_out_mean: f64,
    pub r2_in_mean: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseTuning {
    pub response_index: usize,
    pub response_id: String,
    pub grid: Vec<GridScore>,
    pub selected: Option<GridScore>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub component: ComponentChoice,
    pub n_splits: usize,
    pub tie_rule: String,
    pub responses: Vec<ResponseTuning>,
}

impl TuningResult {
    /// Share of responses whose selected method is `method`.
    pub fn win_share(&self, method: Method) -> f64 {
        let selected: Vec<_> = self.responses.iter().filter_map(|r| r.selected.as_ref()).collect();
        if selected.is_empty() {
            return 0.0;
        }
        selected.iter().filter(|s| s.hyperparameters.method() == method).count() as f64 / selected.len() as f64
    }

    pub fn max_r2_out(&self) -> Option<f64> {
        self.responses
            .iter()
            .filter_map(|r| r.selected.as_ref().map(|s| s.r2_out_mean))
            .fold(None, |m, v| Some(m.map_or(v, |m: f64| m.max(v))))
    }
}

/// Groups of rows linked through any non-identity kernel (families /
/// households). Splits never separate a group.
pub fn family_groups(spec: &ComponentSpec) -> Vec<Vec<usize>> {
    let n = spec.n_subjects();
    let mut pattern = DMatrix::<f64>::identity(n, n);
    for k in spec.kernels().iter().filter(|k| k.kind() != KernelKind::Identity) {
        pattern += k.matrix().abs();
    }
    linalg::nonzero_blocks(&pattern)
}

/// Random family-level half split: groups are shuffled and each is assigned
/// to the currently smaller half.
pub fn family_half_split(groups: &[Vec<usize>], rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.shuffle(rng);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for g in order {
        let target = if a.len() <= b.len() { &mut a } else { &mut b };
        target.extend_from_slice(&groups[g]);
    }
    a.sort_unstable();
    b.sort_unstable();
    (a, b)
}

/// Covariance of the requested component on a subset of rows, on the
/// correlation scale.
pub fn component_correlation(
    y: &TraitMatrix,
    spec: &ComponentSpec,
    rows: &[usize],
    component: &ComponentChoice,
    solve: &SolveOptions,
) -> Result<DMatrix<f64>> {
    let sub_y = y.select_rows(rows)?;
    let sigma = match component {
        ComponentChoice::Observed => {
            let v = sub_y.values();
            v.tr_mul(v) / v.nrows() as f64
        }
        ComponentChoice::Latent(label) => {
            let sub_spec = spec.select(rows)?;
            let (set, _) = mvrehe_fit(&sub_y, &sub_spec, solve)?;
            set.get(label)
                .cloned()
                .ok_or_else(|| VcompError::InvalidInput(format!("no component labelled `{label}`")))?
        }
    };
    Ok(to_correlation(&sigma)?.matrix)
}

/// Fits every candidate for one response on `fit_sigma`. Lasso candidates
/// share one warm-started path.
pub(crate) fn fit_candidates(
    blocks: &RegressionBlocks,
    part: &BlockPartition,
    j: usize,
    candidates: &[Hyperparameters],
    tensor: &TensorOptions,
) -> Vec<Result<LatentRegressionFit>> {
    let lasso_idx: Vec<usize> = candidates
        .iter()
        .enumerate()
        .filter(|(_, h)| h.method() == Method::Lasso)
        .map(|(i, _)| i)
        .collect();
    let lasso_lambdas: Vec<f64> = lasso_idx
        .iter()
        .map(|&i| match candidates[i] {
            Hyperparameters::Lasso { lambda } => lambda,
            _ => unreachable!(),
        })
        .collect();
    let mut lasso_fits = if lasso_lambdas.is_empty() {
        Vec::new()
    } else {
        match lasso_path_from_blocks(blocks, j, &lasso_lambdas) {
            Ok(f) => f.into_iter().map(Ok).collect(),
            Err(e) => lasso_lambdas.iter().map(|_| Err(VcompError::Singular(e.to_string()))).collect(),
        }
    }
    .into_iter();

    candidates
        .iter()
        .map(|h| match *h {
            Hyperparameters::Ridge { lambda } => ridge_from_blocks(blocks, j, lambda),
            Hyperparameters::Lasso { .. } => lasso_fits.next().expect("one fit per lasso candidate"),
            Hyperparameters::Tensor { rank, lambda } => tensor_from_blocks(blocks, part, j, rank, lambda, tensor),
        })
        .collect()
}

/// Fits a single hyperparameter setting.
pub fn fit_with(
    sigma: &DMatrix<f64>,
    part: &BlockPartition,
    j: usize,
    h: Hyperparameters,
    tensor: &TensorOptions,
) -> Result<LatentRegressionFit> {
    let blocks = RegressionBlocks::extract(sigma, part, j)?;
    match h {
        Hyperparameters::Ridge { lambda } => ridge_from_blocks(&blocks, j, lambda),
        Hyperparameters::Lasso { lambda } => lasso_from_blocks(&blocks, j, lambda),
        Hyperparameters::Tensor { rank, lambda } => tensor_from_blocks(&blocks, part, j, rank, lambda, tensor),
    }
}

fn better(a: &GridScore, b: &GridScore) -> bool {
    if a.r2_out_mean != b.r2_out_mean {
        return a.r2_out_mean > b.r2_out_mean;
    }
    let (am, bm) = (a.hyperparameters.method(), b.hyperparameters.method());
    am == bm && a.hyperparameters.strength() > b.hyperparameters.strength()
}

/// Split-based selection of regularization method and hyperparameters.
///
/// For each of `n_splits` family-level half splits and both directions:
/// estimate the component on one half, convert to correlations, fit every
/// candidate there, and score its latent R² against the other half's
/// estimated correlation matrix. Scores are averaged over all `2·n_splits`
/// evaluations and the best candidate per response is selected; exact ties
/// go to the more strongly regularized setting of the same method.
pub fn cross_fit_select(
    y: &TraitMatrix,
    spec: &ComponentSpec,
    part: &BlockPartition,
    component: &ComponentChoice,
    grids: &RegressionGrids,
    opts: &CrossFitOptions,
) -> Result<TuningResult> {
    if opts.n_splits == 0 {
        return Err(VcompError::InvalidInput("n_splits must be positive".into()));
    }
    if part.max_index() >= y.n_traits() {
        return Err(VcompError::DimensionMismatch(format!(
            "partition indexes trait {} of {}",
            part.max_index(),
            y.n_traits()
        )));
    }
    let candidates = grids.candidates(part.matrix_side().is_some());
    if candidates.is_empty() {
        return Err(VcompError::InvalidInput("empty hyperparameter grid".into()));
    }
    let groups = family_groups(spec);
    if groups.len() < 2 {
        return Err(VcompError::InvalidInput("need at least two families to split".into()));
    }

    // (fit half, evaluation half) correlation pairs
    let halves: Vec<(Vec<usize>, Vec<usize>)> = (0..opts.n_splits)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(s as u64));
            family_half_split(&groups, &mut rng)
        })
        .collect();
    let correlations: Vec<(DMatrix<f64>, DMatrix<f64>)> = halves
        .par_iter()
        .map(|(a, b)| {
            let ca = component_correlation(y, spec, a, component, &opts.solve)?;
            let cb = component_correlation(y, spec, b, component, &opts.solve)?;
            Ok((ca, cb))
        })
        .collect::<Result<_>>()?;
    Ok(select_over_splits(&correlations, y.trait_ids(), part, component, &candidates, &opts.tensor))
}

/// Selection from precomputed per-split covariance estimates: each pair is
/// the component covariance on the two halves of one split. Both
/// directions are scored, as in [`cross_fit_select`].
pub fn cross_fit_select_precomputed(
    split_covariances: &[(DMatrix<f64>, DMatrix<f64>)],
    trait_ids: &[String],
    part: &BlockPartition,
    component: &ComponentChoice,
    grids: &RegressionGrids,
    tensor: &TensorOptions,
) -> Result<TuningResult> {
    if split_covariances.is_empty() {
        return Err(VcompError::InvalidInput("no split covariances given".into()));
    }
    for (a, b) in split_covariances {
        for m in [a, b] {
            if m.nrows() != trait_ids.len() || m.ncols() != trait_ids.len() {
                return Err(VcompError::DimensionMismatch(format!(
                    "split covariance is {}x{} for {} traits",
                    m.nrows(),
                    m.ncols(),
                    trait_ids.len()
                )));
            }
        }
    }
    if part.max_index() >= trait_ids.len() {
        return Err(VcompError::DimensionMismatch("partition indexes traits beyond q".into()));
    }
    let candidates = grids.candidates(part.matrix_side().is_some());
    if candidates.is_empty() {
        return Err(VcompError::InvalidInput("empty hyperparameter grid".into()));
    }
    let correlations = split_covariances
        .iter()
        .map(|(a, b)| Ok((to_correlation(a)?.matrix, to_correlation(b)?.matrix)))
        .collect::<Result<Vec<_>>>()?;
    Ok(select_over_splits(&correlations, trait_ids, part, component, &candidates, tensor))
}

fn select_over_splits(
    correlations: &[(DMatrix<f64>, DMatrix<f64>)],
    trait_ids: &[String],
    part: &BlockPartition,
    component: &ComponentChoice,
    candidates: &[Hyperparameters],
    tensor: &TensorOptions,
) -> TuningResult {
    let directions: Vec<(&DMatrix<f64>, &DMatrix<f64>)> =
        correlations.iter().flat_map(|(a, b)| [(a, b), (b, a)]).collect();
    let responses = part
        .responses()
        .par_iter()
        .map(|&j| tune_response(trait_ids, part, j, candidates, &directions, tensor))
        .collect();
    TuningResult {
        component: component.clone(),
        n_splits: correlations.len(),
        tie_rule: "ties broken toward stronger regularization within a method".into(),
        responses,
    }
}

fn tune_response(
    trait_ids: &[String],
    part: &BlockPartition,
    j: usize,
    candidates: &[Hyperparameters],
    directions: &[(&DMatrix<f64>, &DMatrix<f64>)],
    tensor: &TensorOptions,
) -> ResponseTuning {
    let mut out_sum = vec![0.0; candidates.len()];
    let mut in_sum = vec![0.0; candidates.len()];
    let mut count = vec![0usize; candidates.len()];
    let mut last_error = None;
    for (fit_corr, eval_corr) in directions {
        let blocks = match RegressionBlocks::extract(fit_corr, part, j) {
            Ok(b) => b,
            Err(e) => {
                last_error = Some(e.to_string());
                continue;
            }
        };
        let eval_blocks = match RegressionBlocks::extract(eval_corr, part, j) {
            Ok(b) => b,
            Err(e) => {
                last_error = Some(e.to_string());
                continue;
            }
        };
        for (c, fit) in fit_candidates(&blocks, part, j, candidates, tensor).into_iter().enumerate() {
            match fit.and_then(|f| Ok((f.r2_in_sample, r2_from_blocks(&eval_blocks, &f.beta)?))) {
                Ok((r2_in, r2_out)) => {
                    in_sum[c] += r2_in;
                    out_sum[c] += r2_out;
                    count[c] += 1;
                }
                Err(e) => last_error = Some(e.to_string()),
            }
        }
    }
    let grid: Vec<GridScore> = candidates
        .iter()
        .enumerate()
        .filter(|(c, _)| count[*c] > 0)
        .map(|(c, h)| GridScore {
            hyperparameters: *h,
            r2_out_mean: out_sum[c] / count[c] as f64,
            r2_in_mean: in_sum[c] / count[c] as f64,
            evaluations: count[c],
        })
        .collect();
    let mut selected: Option<GridScore> = None;
    for g in &grid {
        if selected.as_ref().is_none_or(|s| better(g, s)) {
            selected = Some(g.clone());
        }
    }
    ResponseTuning {
        response_index: j,
        response_id: trait_ids[j].clone(),
        error: if selected.is_none() { last_error } else { None },
        grid,
        selected,
    }
}

/// Refits each response's selected setting on the full-data correlation
/// matrix; `r2_out_of_sample` carries the averaged split score.
pub fn refit_selected(
    corr: &DMatrix<f64>,
    part: &BlockPartition,
    tuning: &TuningResult,
    tensor: &TensorOptions,
) -> Vec<Result<LatentRegressionFit>> {
    tuning
        .responses
        .par_iter()
        .map(|r| {
            let sel = r.selected.as_ref().ok_or_else(|| {
                VcompError::InvalidInput(format!(
                    "response `{}` has no selection: {}",
                    r.response_id,
                    r.error.as_deref().unwrap_or("no successful fit")
                ))
            })?;
            let mut fit = fit_with(corr, part, r.response_index, sel.hyperparameters, tensor)?;
            fit.r2_out_of_sample = Some(sel.r2_out_mean);
            Ok(fit)
        })
        .collect()
}
