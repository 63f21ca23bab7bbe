use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VcompError};
use crate::estimate::CovarianceSet;
use crate::linalg;
use crate::regression::BlockPartition;

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// `D^{-1/2} A D^{-1/2}`; assumes a strictly positive diagonal.
fn normalize_to_correlation(a: &DMatrix<f64>) -> DMatrix<f64> {
    let d: Vec<f64> = (0..a.nrows()).map(|i| a[(i, i)].sqrt()).collect();
    let mut c = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] / (d[i] * d[j]));
    c.fill_diagonal(1.0);
    linalg::symmetrize(&c)
}

/// Random correlation matrix from a normalized Gram matrix `G Gᵀ` with
/// `G` a `q × q` standard Gaussian matrix.
pub fn random_correlation(q: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = gaussian(rng, q, q);
    normalize_to_correlation(&(&g * g.transpose()))
}

/// `diag(√s) R diag(√s)`.
fn scale_by_shares(r: &DMatrix<f64>, shares: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(r.nrows(), r.ncols(), |i, j| r[(i, j)] * (shares[i] * shares[j]).sqrt())
}

/// Low-dimensional ground truth: one random correlation matrix per
/// component, scaled so every trait has unit total variance with genetic
/// share `heritability_target` and the remainder split equally between the
/// common and unique environment. Labels are `E`, `G`, `C`.
pub fn make_lowdim_truth(q: usize, heritability_target: f64, seed: u64) -> Result<CovarianceSet> {
    if q == 0 {
        return Err(VcompError::InvalidInput("q must be positive".into()));
    }
    if !(heritability_target > 0.0 && heritability_target < 1.0) {
        return Err(VcompError::InvalidInput(format!(
            "heritability target must lie in (0, 1), got {heritability_target}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r_e = random_correlation(q, &mut rng);
    let r_g = random_correlation(q, &mut rng);
    let r_c = random_correlation(q, &mut rng);
    let env = (1.0 - heritability_target) / 2.0;
    let sigmas = vec![r_e * env, r_g * heritability_target, r_c * env];
    CovarianceSet::new(sigmas, vec!["E".into(), "G".into(), "C".into()])
}

/// Settings for the synthetic connectome-like truth: `side × side`
/// structural traits followed by `n_functional` functional traits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConnectomeTruthConfig {
    pub side: usize,
    pub n_functional: usize,
    /// Rank of the shared structural genetic factors.
    pub structural_rank: usize,
    /// Rank of functional genetic variation unrelated to structure.
    pub functional_rank: usize,
    /// Idiosyncratic genetic variance relative to unit factor loadings.
    pub idiosyncratic: f64,
    /// Multiplier on the rank-1 structure→function genetic coupling.
    pub coupling: f64,
    pub common_rank: usize,
    /// Per-trait heritability drawn uniformly from this range.
    pub heritability_range: (f64, f64),
    pub common_share: f64,
    pub seed: u64,
}

impl Default for ConnectomeTruthConfig {
    fn default() -> Self {
        Self {
            side: 10,
            n_functional: 100,
            structural_rank: 12,
            functional_rank: 8,
            idiosyncratic: 0.05,
            coupling: 1.0,
            common_rank: 5,
            heritability_range: (0.2, 0.6),
            common_share: 0.1,
            seed: 2024,
        }
    }
}

/// Synthetic stand-in for a connectome-scale truth (default `q = 200`).
///
/// Genetic structure: structural traits load on `structural_rank` factors
/// plus idiosyncratic noise; functional trait `j` depends on structure
/// through a rank-1 coefficient matrix `u_j v_jᵀ` plus its own factors.
/// All components are normalized to correlations and scaled per trait by
/// the drawn heritability / common / unique shares. Returns the truth and
/// the matching column-major partition.
pub fn connectome_truth(cfg: &ConnectomeTruthConfig) -> Result<(CovarianceSet, BlockPartition)> {
    let p = cfg.side;
    let s = p * p;
    let f = cfg.n_functional;
    if p == 0 || f == 0 {
        return Err(VcompError::InvalidInput("side and n_functional must be positive".into()));
    }
    let (h_lo, h_hi) = cfg.heritability_range;
    if !(h_lo > 0.0 && h_hi >= h_lo && h_hi + cfg.common_share < 1.0 && cfg.common_share >= 0.0) {
        return Err(VcompError::InvalidInput("heritability range and common share must leave unique variance".into()));
    }
    let q = s + f;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let loadings = gaussian(&mut rng, s, cfg.structural_rank.max(1)) / (cfg.structural_rank.max(1) as f64).sqrt();
    let mut sigma_ss = &loadings * loadings.transpose();
    for i in 0..s {
        sigma_ss[(i, i)] += cfg.idiosyncratic;
    }
    // unit structural variances keep mat(β) rank 1 on the correlation scale
    let sigma_ss = normalize_to_correlation(&sigma_ss);
    let mut coupling = DMatrix::zeros(f, s);
    for j in 0..f {
        let u = gaussian(&mut rng, p, 1);
        let v = gaussian(&mut rng, p, 1);
        let b = &u * v.transpose();
        let row = DVector::from_column_slice(b.as_slice());
        coupling.row_mut(j).copy_from(&(row.transpose() * (cfg.coupling / p as f64)));
    }
    let func_loadings = gaussian(&mut rng, f, cfg.functional_rank.max(1)) / (cfg.functional_rank.max(1) as f64).sqrt();

    let sigma_sf = &sigma_ss * coupling.transpose();
    let mut sigma_ff = &coupling * &sigma_sf + &func_loadings * func_loadings.transpose();
    for i in 0..f {
        sigma_ff[(i, i)] += cfg.idiosyncratic;
    }
    let mut genetic = DMatrix::zeros(q, q);
    genetic.view_mut((0, 0), (s, s)).copy_from(&sigma_ss);
    genetic.view_mut((0, s), (s, f)).copy_from(&sigma_sf);
    genetic.view_mut((s, 0), (f, s)).copy_from(&sigma_sf.transpose());
    genetic.view_mut((s, s), (f, f)).copy_from(&sigma_ff);
    let r_g = normalize_to_correlation(&linalg::symmetrize(&genetic));

    let common_loadings = gaussian(&mut rng, q, cfg.common_rank.max(1));
    let mut common = &common_loadings * common_loadings.transpose();
    for i in 0..q {
        common[(i, i)] += cfg.idiosyncratic;
    }
    let r_c = normalize_to_correlation(&common);
    let r_e = random_correlation(q, &mut rng);

    let h = DVector::from_fn(q, |_, _| rng.random_range(h_lo..=h_hi));
    let c = DVector::from_element(q, cfg.common_share);
    let e = DVector::from_fn(q, |i, _| 1.0 - h[i] - c[i]);
    let sigmas = vec![scale_by_shares(&r_e, &e), scale_by_shares(&r_g, &h), scale_by_shares(&r_c, &c)];
    let set = CovarianceSet::new(sigmas, vec!["E".into(), "G".into(), "C".into()])?;
    let part = BlockPartition::new((0..s).collect(), (s..q).collect())?.with_matrix_shape(p)?;
    Ok((set, part))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::heritability;

    #[test]
    fn lowdim_heritability_hits_target() {
        let t = make_lowdim_truth(5, 0.5, 3).unwrap();
        let h = heritability(&t).unwrap();
        for v in h.iter() {
            approx::assert_abs_diff_eq!(*v, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn random_correlation_has_unit_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = random_correlation(6, &mut rng);
        assert!(r.diagonal().iter().all(|&d| d == 1.0));
    }

    #[test]
    fn lowdim_rejects_bad_target() {
        assert!(make_lowdim_truth(5, 1.0, 0).is_err());
        assert!(make_lowdim_truth(5, 0.0, 0).is_err());
    }

    #[test]
    fn connectome_truth_shape() {
        let cfg = ConnectomeTruthConfig { side: 3, n_functional: 4, ..Default::default() };
        let (set, part) = connectome_truth(&cfg).unwrap();
        assert_eq!(set.n_traits(), 13);
        assert!(set.all_certified());
        assert_eq!(part.matrix_side(), Some(3));
        assert_eq!(part.responses(), &[9, 10, 11, 12]);
    }
}
