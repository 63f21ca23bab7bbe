//! Covariance functions on a shared grid: bivariate local-linear smoothing
//! of estimated covariance matrices with the diagonal left out, noise
//! variance recovery, and integrated squared error.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VcompError};
use crate::estimate::CovarianceSet;
use crate::linalg;

/// Local designs whose scaled determinant falls below this are singular.
const LOCAL_DESIGN_RTOL: f64 = 1e-10;
const BANDWIDTH_GRID_SIZE: usize = 15;
const MAX_BANDWIDTH: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalGrid {
    timepoints: Vec<f64>,
}

impl FunctionalGrid {
    pub fn new(timepoints: Vec<f64>) -> Result<Self> {
        if timepoints.len() < 5 {
            return Err(VcompError::InvalidInput(format!("grid needs at least 5 points, got {}", timepoints.len())));
        }
        if timepoints.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(VcompError::InvalidInput("grid points must lie in [0, 1]".into()));
        }
        if timepoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(VcompError::InvalidInput("grid must be strictly increasing".into()));
        }
        Ok(Self { timepoints })
    }

    /// `q` equally spaced points from 0 to 1.
    pub fn uniform(q: usize) -> Result<Self> {
        let d = (q.max(2) - 1) as f64;
        Self::new((0..q).map(|i| i as f64 / d).collect())
    }

    pub fn timepoints(&self) -> &[f64] {
        &self.timepoints
    }

    pub fn len(&self) -> usize {
        self.timepoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timepoints.is_empty()
    }

    fn median_gap(&self) -> f64 {
        let mut gaps: Vec<f64> = self.timepoints.windows(2).map(|w| w[1] - w[0]).collect();
        gaps.sort_by(f64::total_cmp);
        let m = gaps.len() / 2;
        if gaps.len() % 2 == 1 {
            gaps[m]
        } else {
            0.5 * (gaps[m - 1] + gaps[m])
        }
    }

    /// Quadrature weights over `[0, 1]`: trapezoid between grid points, with
    /// the function held constant from each end to the boundary.
    fn trapezoid_weights(&self) -> Vec<f64> {
        let t = &self.timepoints;
        let q = t.len();
        let mut w = vec![0.0; q];
        for i in 0..q - 1 {
            let h = t[i + 1] - t[i];
            w[i] += h / 2.0;
            w[i + 1] += h / 2.0;
        }
        w[0] += t[0];
        w[q - 1] += 1.0 - t[q - 1];
        w
    }

    /// Lengths of the nearest-point cells within `[0, 1]`.
    fn voronoi_weights(&self) -> Vec<f64> {
        let t = &self.timepoints;
        let q = t.len();
        (0..q)
            .map(|i| {
                let lo = if i == 0 { 0.0 } else { 0.5 * (t[i - 1] + t[i]) };
                let hi = if i == q - 1 { 1.0 } else { 0.5 * (t[i] + t[i + 1]) };
                hi - lo
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Minimize GCV over [`bandwidth_grid`].
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedCovariance {
    pub grid: FunctionalGrid,
    pub values: DMatrix<f64>,
    pub bandwidth: f64,
    pub gcv_score: f64,
    /// Set only for the identity-kernel component.
    pub noise_variance: Option<f64>,
}

fn epanechnikov(u: f64) -> f64 {
    if u.abs() < 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

/// Per-axis weight tables: `p[a][(i, j)] = K((t_j - x_i)/h) (t_j - x_i)^a`
/// for evaluation points `x`.
fn axis_tables(t: &[f64], x: &[f64], h: f64) -> [DMatrix<f64>; 3] {
    let mut p = [DMatrix::zeros(x.len(), t.len()), DMatrix::zeros(x.len(), t.len()), DMatrix::zeros(x.len(), t.len())];
    for (i, &xi) in x.iter().enumerate() {
        for (j, &tj) in t.iter().enumerate() {
            let d = tj - xi;
            let w = epanechnikov(d / h);
            if w > 0.0 {
                p[0][(i, j)] = w;
                p[1][(i, j)] = w * d;
                p[2][(i, j)] = w * d * d;
            }
        }
    }
    p
}

/// Local-linear fit on the grid itself. Returns fitted surface and the
/// self-weights of each evaluation point (the hat-matrix diagonal for the
/// off-diagonal data points), or `None` if some local design is singular.
fn local_linear(sigma: &DMatrix<f64>, t: &[f64], h: f64) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let q = t.len();
    let p = axis_tables(t, t, h);
    let mut off = sigma.clone();
    off.fill_diagonal(0.0);
    // Σ_{j≠l} a_j b_l = (Σa)(Σb) - Σ_j a_j b_j
    let sums: Vec<Vec<f64>> = p.iter().map(|m| (0..q).map(|i| m.row(i).sum()).collect()).collect();
    let moment = |a: usize, b: usize| -> DMatrix<f64> {
        let diag = &p[a] * p[b].transpose();
        DMatrix::from_fn(q, q, |i, k| sums[a][i] * sums[b][k] - diag[(i, k)])
    };
    let m00 = moment(0, 0);
    let m10 = moment(1, 0);
    let m01 = moment(0, 1);
    let m20 = moment(2, 0);
    let m02 = moment(0, 2);
    let m11 = moment(1, 1);
    let r0 = &p[0] * &off * p[0].transpose();
    let r1 = &p[1] * &off * p[0].transpose();
    let r2 = &p[0] * &off * p[1].transpose();

    let mut fit = DMatrix::zeros(q, q);
    let mut selfw = DMatrix::zeros(q, q);
    let k0 = epanechnikov(0.0);
    for i in 0..q {
        for k in 0..q {
            let m = Matrix3::new(
                m00[(i, k)], m10[(i, k)], m01[(i, k)],
                m10[(i, k)], m20[(i, k)], m11[(i, k)],
                m01[(i, k)], m11[(i, k)], m02[(i, k)],
            );
            let scale = m[(0, 0)] * m[(1, 1)] * m[(2, 2)];
            if !(scale > 0.0) || !(m.determinant() / scale > LOCAL_DESIGN_RTOL) {
                return None;
            }
            let inv = m.try_inverse()?;
            let row0 = inv.row(0);
            fit[(i, k)] = row0.dot(&Vector3::new(r0[(i, k)], r1[(i, k)], r2[(i, k)]).transpose());
            selfw[(i, k)] = k0 * k0 * inv[(0, 0)];
        }
    }
    Some((fit, selfw))
}

/// `(RSS / N) / (1 - tr(L) / N)²` over the off-diagonal points.
fn gcv(sigma: &DMatrix<f64>, fit: &DMatrix<f64>, selfw: &DMatrix<f64>) -> f64 {
    let q = sigma.nrows();
    let (mut rss, mut tr) = (0.0, 0.0);
    for i in 0..q {
        for k in (0..q).filter(|&k| k != i) {
            rss += (sigma[(i, k)] - fit[(i, k)]).powi(2);
            tr += selfw[(i, k)];
        }
    }
    let n = (q * (q - 1)) as f64;
    (rss / n) / (1.0 - tr / n).powi(2)
}

/// Candidate bandwidths: log-spaced from twice the median grid gap to 0.5.
pub fn bandwidth_grid(grid: &FunctionalGrid) -> Vec<f64> {
    bandwidth_grid_sized(grid, BANDWIDTH_GRID_SIZE)
}

pub fn bandwidth_grid_sized(grid: &FunctionalGrid, count: usize) -> Vec<f64> {
    let lo = (2.0 * grid.median_gap()).min(MAX_BANDWIDTH);
    if count <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), MAX_BANDWIDTH.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

fn check_input(sigma_hat: &DMatrix<f64>, grid: &FunctionalGrid) -> Result<()> {
    if sigma_hat.nrows() != grid.len() || sigma_hat.ncols() != grid.len() {
        return Err(VcompError::DimensionMismatch(format!(
            "{}x{} covariance for a grid of {} points",
            sigma_hat.nrows(),
            sigma_hat.ncols(),
            grid.len()
        )));
    }
    Ok(())
}

/// Smooths at a fixed bandwidth; `None` for a singular local design.
fn smooth_at(sigma: &DMatrix<f64>, grid: &FunctionalGrid, h: f64) -> Option<(DMatrix<f64>, f64)> {
    let (fit, selfw) = local_linear(sigma, grid.timepoints(), h)?;
    let score = gcv(sigma, &fit, &selfw);
    Some((linalg::symmetrize(&fit), score))
}

/// GCV score of bandwidth `h`; errors when the local design is singular.
pub fn gcv_score(sigma_hat: &DMatrix<f64>, grid: &FunctionalGrid, h: f64) -> Result<f64> {
    check_input(sigma_hat, grid)?;
    let sigma = linalg::symmetrize(sigma_hat);
    smooth_at(&sigma, grid, h).map(|(_, s)| s).ok_or(VcompError::NoAdmissibleBandwidth)
}

/// Bivariate local-linear smoothing of the off-diagonal entries of
/// `sigma_hat` with a product Epanechnikov kernel, evaluated on the full
/// grid (diagonal included) and symmetrized.
pub fn smooth_covariance(sigma_hat: &DMatrix<f64>, grid: &FunctionalGrid, bandwidth: Bandwidth) -> Result<SmoothedCovariance> {
    check_input(sigma_hat, grid)?;
    let sigma = linalg::symmetrize(sigma_hat);
    let candidates = match bandwidth {
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => vec![h],
        Bandwidth::Fixed(h) => return Err(VcompError::InvalidInput(format!("bandwidth must be positive, got {h}"))),
        Bandwidth::Auto => bandwidth_grid(grid),
    };
    smooth_over(&sigma, grid, &candidates)
}

/// Like [`smooth_covariance`] with an explicit candidate list.
pub fn smooth_covariance_over(sigma_hat: &DMatrix<f64>, grid: &FunctionalGrid, candidates: &[f64]) -> Result<SmoothedCovariance> {
    check_input(sigma_hat, grid)?;
    if candidates.iter().any(|h| !(*h > 0.0)) {
        return Err(VcompError::InvalidInput("bandwidths must be positive".into()));
    }
    smooth_over(&linalg::symmetrize(sigma_hat), grid, candidates)
}

fn smooth_over(sigma: &DMatrix<f64>, grid: &FunctionalGrid, candidates: &[f64]) -> Result<SmoothedCovariance> {
    let fits: Vec<Option<(DMatrix<f64>, f64)>> = candidates.par_iter().map(|&h| smooth_at(sigma, grid, h)).collect();
    let mut best: Option<(usize, DMatrix<f64>, f64)> = None;
    for (i, f) in fits.into_iter().enumerate() {
        match f {
            Some((fit, score)) if best.as_ref().is_none_or(|b| score < b.2) => best = Some((i, fit, score)),
            Some(_) => {}
            None => log::debug!("bandwidth {} excluded: singular local design", candidates[i]),
        }
    }
    let (i, values, gcv_score) = best.ok_or(VcompError::NoAdmissibleBandwidth)?;
    Ok(SmoothedCovariance { grid: grid.clone(), values, bandwidth: candidates[i], gcv_score, noise_variance: None })
}

/// `max(0, mean_j([Σ̂]_jj - Ĉ(t_j, t_j)))`.
pub fn estimate_noise_variance(sigma_hat: &DMatrix<f64>, smoothed: &SmoothedCovariance) -> Result<f64> {
    check_input(sigma_hat, &smoothed.grid)?;
    let q = sigma_hat.nrows();
    let gap: f64 = (0..q).map(|j| sigma_hat[(j, j)] - smoothed.values[(j, j)]).sum::<f64>() / q as f64;
    Ok(gap.max(0.0))
}

/// `Σ_{k=1}^{50} k^{-2α} cos(kπs) cos(kπt)` on the grid.
pub fn functional_truth(alpha: f64, grid: &FunctionalGrid) -> DMatrix<f64> {
    let t = grid.timepoints();
    let q = t.len();
    let mut basis = DMatrix::zeros(q, 50);
    for k in 1..=50 {
        let scale = (k as f64).powf(-alpha);
        for (i, &ti) in t.iter().enumerate() {
            basis[(i, k - 1)] = scale * (k as f64 * std::f64::consts::PI * ti).cos();
        }
    }
    linalg::symmetrize(&(&basis * basis.transpose()))
}

/// How an estimate is read as a function on the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpretation {
    /// Grid values of a smooth surface; trapezoidal quadrature.
    Smooth,
    /// Constant on each grid point's nearest-neighbour cell.
    PiecewiseConstant,
}

/// `∫∫ (Ĉ - C)²` over `[0, 1]²`.
pub fn integrated_squared_error(
    estimate: &DMatrix<f64>,
    truth: &DMatrix<f64>,
    grid: &FunctionalGrid,
    interpretation: Interpretation,
) -> Result<f64> {
    check_input(estimate, grid)?;
    check_input(truth, grid)?;
    let w = match interpretation {
        Interpretation::Smooth => grid.trapezoid_weights(),
        Interpretation::PiecewiseConstant => grid.voronoi_weights(),
    };
    let q = grid.len();
    let mut total = 0.0;
    for j in 0..q {
        for i in 0..q {
            total += w[i] * w[j] * (estimate[(i, j)] - truth[(i, j)]).powi(2);
        }
    }
    Ok(total)
}

/// Ground truth for the functional-trait simulation: `C_G = C_E` from
/// [`functional_truth`], observational noise `σ² I` folded into the
/// identity component, and no common-environment covariance. Labels
/// `E`, `G`, `C`.
pub fn functional_simulation_truth(alpha: f64, grid: &FunctionalGrid, noise_variance: f64) -> Result<CovarianceSet> {
    if !(noise_variance >= 0.0) {
        return Err(VcompError::InvalidInput("noise variance must be >= 0".into()));
    }
    let c = functional_truth(alpha, grid);
    let q = grid.len();
    let mut e = c.clone();
    for i in 0..q {
        e[(i, i)] += noise_variance;
    }
    CovarianceSet::new(vec![e, c, DMatrix::zeros(q, q)], vec!["E".into(), "G".into(), "C".into()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn grid_validation() {
        assert!(FunctionalGrid::new(vec![0.0, 0.1, 0.2, 0.3]).is_err());
        assert!(FunctionalGrid::new(vec![0.0, 0.2, 0.1, 0.3, 0.4]).is_err());
        assert!(FunctionalGrid::new(vec![0.0, 0.2, 0.3, 0.4, 1.5]).is_err());
        assert_eq!(FunctionalGrid::uniform(11).unwrap().timepoints()[10], 1.0);
    }

    #[test]
    fn constant_surface_is_reproduced() {
        let g = FunctionalGrid::uniform(12).unwrap();
        let mut s = DMatrix::from_element(12, 12, 0.7);
        s.fill_diagonal(5.0);
        let out = smooth_covariance(&s, &g, Bandwidth::Fixed(0.3)).unwrap();
        assert_abs_diff_eq!(out.values, DMatrix::from_element(12, 12, 0.7), epsilon = 1e-10);
    }

    #[test]
    fn affine_surface_is_reproduced() {
        let g = FunctionalGrid::uniform(15).unwrap();
        let t = g.timepoints().to_vec();
        let f = |s: f64, u: f64| 0.5 + 2.0 * s - 1.5 * u;
        let mut m = DMatrix::from_fn(15, 15, |i, j| f(t[i], t[j]) + f(t[j], t[i]));
        m.fill_diagonal(-9.0);
        let out = smooth_covariance(&m, &g, Bandwidth::Fixed(0.25)).unwrap();
        for i in 0..15 {
            for j in 0..15 {
                assert_abs_diff_eq!(out.values[(i, j)], f(t[i], t[j]) + f(t[j], t[i]), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn tiny_bandwidth_is_rejected() {
        let g = FunctionalGrid::uniform(10).unwrap();
        let s = DMatrix::identity(10, 10);
        assert!(matches!(
            smooth_covariance(&s, &g, Bandwidth::Fixed(0.01)),
            Err(VcompError::NoAdmissibleBandwidth)
        ));
    }

    #[test]
    fn truth_corner_value() {
        let g = FunctionalGrid::uniform(20).unwrap();
        let c = functional_truth(1.0, &g);
        let expect: f64 = (1..=50).map(|k| (k as f64).powi(-2)).sum();
        assert_abs_diff_eq!(c[(0, 0)], expect, epsilon = 1e-12);
        assert_abs_diff_eq!(c[(0, 0)], 1.625133, epsilon = 1e-6);
        assert_eq!(c, c.transpose());
    }

    #[test]
    fn ise_of_constant_offset() {
        let g = FunctionalGrid::new(vec![0.1, 0.2, 0.45, 0.7, 0.9]).unwrap();
        let a = DMatrix::from_element(5, 5, 1.0);
        let b = DMatrix::from_element(5, 5, 1.3);
        for kind in [Interpretation::Smooth, Interpretation::PiecewiseConstant] {
            assert_abs_diff_eq!(integrated_squared_error(&b, &a, &g, kind).unwrap(), 0.09, epsilon = 1e-12);
        }
    }

    #[test]
    fn noise_variance_gap() {
        let g = FunctionalGrid::uniform(8).unwrap();
        let c = functional_truth(2.0, &g);
        let sm = SmoothedCovariance { grid: g, values: c.clone(), bandwidth: 0.2, gcv_score: 0.0, noise_variance: None };
        let mut s = c.clone();
        for i in 0..8 {
            s[(i, i)] += 2.0;
        }
        assert_abs_diff_eq!(estimate_noise_variance(&s, &sm).unwrap(), 2.0, epsilon = 1e-12);
        assert_eq!(estimate_noise_variance(&c, &sm).unwrap(), 0.0);
    }
}
