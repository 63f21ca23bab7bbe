// Shared fixtures and brute-force references for the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use vcomp::model::{build_household, build_kinship, ComponentSpec, KernelKind, StructureKernel, TraitMatrix};
use vcomp::regression::BlockPartition;
use vcomp::simulation::FamilyMix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

pub fn random_symmetric(q: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = gaussian(q, q, rng);
    (&a + a.transpose()) * 0.5
}

pub fn random_psd(q: usize, rank: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let b = gaussian(q, rank, rng);
    &b * b.transpose()
}

/// Unit-diagonal PSD kernel from a normalized Gram matrix.
pub fn random_kernel(n: usize, rng: &mut ChaCha8Rng) -> StructureKernel {
    let b = gaussian(n, (n / 3).max(2), rng);
    let g = &b * b.transpose();
    let d = DVector::from_iterator(n, (0..n).map(|i| 1.0 / g[(i, i)].sqrt()));
    let m = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { g[(i, j)] * d[i] * d[j] });
    StructureKernel::new(m, KernelKind::Custom).expect("valid kernel")
}

/// Identity plus `k` random kernels.
pub fn random_spec(n: usize, k: usize, rng: &mut ChaCha8Rng) -> ComponentSpec {
    let mut kernels = vec![StructureKernel::identity(n)];
    let mut labels = vec!["E".to_string()];
    for i in 0..k {
        kernels.push(random_kernel(n, rng));
        labels.push(format!("K{i}"));
    }
    ComponentSpec::new(kernels, labels).expect("well-conditioned spec")
}

/// ACE spec on the default family mix, truncated to `n` subjects.
pub fn family_spec(n: usize, seed: u64) -> ComponentSpec {
    let ped = FamilyMix { seed, ..FamilyMix::default() }.pedigree(n).expect("pedigree");
    let kin = build_kinship(&ped, &ped.subject_ids()).expect("kinship");
    let house = build_household(&kin).expect("household");
    ComponentSpec::ace(kin, house).expect("spec")
}

pub fn traits(y: DMatrix<f64>) -> TraitMatrix {
    TraitMatrix::from_matrix(y).expect("trait matrix")
}

/// Moment statistics computed straight from the definitions.
pub struct Moments {
    pub w: Vec<DMatrix<f64>>,
    pub q: DMatrix<f64>,
    pub constant: f64,
}

pub fn moments(y: &DMatrix<f64>, spec: &ComponentSpec) -> Moments {
    let ks: Vec<&DMatrix<f64>> = spec.kernels().iter().map(|k| k.matrix()).collect();
    let m = ks.len();
    let w = ks.iter().map(|d| y.transpose() * *d * y).collect();
    let q = DMatrix::from_fn(m, m, |a, b| (0..ks[a].len()).map(|i| ks[a][i] * ks[b][i]).sum());
    Moments { w, q, constant: y.norm_squared().powi(2) }
}

/// `Σ_{j,l} ‖y_j y_lᵀ - Σ_k Σ_k[j,l] D_k‖²_F`, evaluated term by term.
pub fn objective_direct(y: &DMatrix<f64>, spec: &ComponentSpec, sigmas: &[DMatrix<f64>]) -> f64 {
    let q = y.ncols();
    let mut total = 0.0;
    for j in 0..q {
        for l in 0..q {
            let mut r = y.column(j) * y.column(l).transpose();
            for (k, s) in spec.kernels().iter().zip(sigmas) {
                r -= k.matrix() * s[(j, l)];
            }
            total += r.norm_squared();
        }
    }
    total
}

pub fn objective_moments(m: &Moments, sigmas: &[DMatrix<f64>]) -> f64 {
    let mut f = m.constant;
    for (z, sz) in sigmas.iter().enumerate() {
        f -= 2.0 * m.w[z].dot(sz);
        for (k, sk) in sigmas.iter().enumerate() {
            f += m.q[(z, k)] * sz.dot(sk);
        }
    }
    f
}

/// Eigenvalue clipping written against the raw eigensolver.
pub fn clip_eigen(s: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = nalgebra::SymmetricEigen::new((s + s.transpose()) * 0.5);
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0)));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Nearest PSD matrix via the polar decomposition: `(S + H) / 2` with
/// `H = V Σ Vᵀ` from the SVD of `S`.
pub fn polar_projection(s: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (s + s.transpose()) * 0.5;
    let svd = sym.clone().svd(true, true);
    let v_t = svd.v_t.expect("right vectors");
    let h = v_t.transpose() * DMatrix::from_diagonal(&svd.singular_values) * &v_t;
    (sym + h) * 0.5
}

/// Accelerated projected gradient on the constrained moment objective.
pub fn projected_gradient(m: &Moments, max_iter: usize) -> Vec<DMatrix<f64>> {
    let q = m.w[0].nrows();
    let k = m.w.len();
    let lmax = nalgebra::SymmetricEigen::new(m.q.clone()).eigenvalues.max();
    let step = 1.0 / (2.0 * lmax);
    let mut x: Vec<DMatrix<f64>> = vec![DMatrix::zeros(q, q); k];
    let mut yk = x.clone();
    let mut t = 1.0f64;
    for _ in 0..max_iter {
        let next: Vec<DMatrix<f64>> = (0..k)
            .map(|z| {
                let mut g = -&m.w[z];
                for (c, yc) in yk.iter().enumerate() {
                    g += yc * m.q[(z, c)];
                }
                clip_eigen(&(&yk[z] - g * (2.0 * step)))
            })
            .collect();
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let mom = (t - 1.0) / t_next;
        let change: f64 = next.iter().zip(&x).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt();
        let size: f64 = next.iter().map(|a| a.norm_squared()).sum::<f64>().sqrt();
        yk = next.iter().zip(&x).map(|(a, b)| a + (a - b) * mom).collect();
        x = next;
        t = t_next;
        if change <= 1e-14 * (1.0 + size) {
            break;
        }
    }
    x
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

pub fn min_eig(a: &DMatrix<f64>) -> f64 {
    nalgebra::SymmetricEigen::new((a + a.transpose()) * 0.5).eigenvalues.min()
}

pub fn spectral(a: &DMatrix<f64>) -> f64 {
    nalgebra::SymmetricEigen::new((a + a.transpose()) * 0.5).eigenvalues.amax()
}

/// `p` predictors followed by one response, with a random PSD covariance.
pub fn instance(p: usize, seed: u64) -> (DMatrix<f64>, BlockPartition) {
    let mut r = rng(seed);
    let sigma = random_psd(p + 1, p + 3, &mut r);
    (sigma, BlockPartition::new((0..p).collect(), vec![p]).unwrap())
}

pub fn blocks(sigma: &DMatrix<f64>, p: usize) -> (DMatrix<f64>, DVector<f64>) {
    (sigma.view((0, 0), (p, p)).into_owned(), sigma.view((0, p), (p, 1)).column(0).into_owned())
}

pub fn lasso_objective(s: &DMatrix<f64>, c: &DVector<f64>, b: &DVector<f64>, lambda: f64) -> f64 {
    b.dot(&(s * b)) - 2.0 * b.dot(c) + lambda * b.lp_norm(1)
}

/// Exact lasso minimum by enumerating sign patterns: on a fixed pattern the
/// problem is a linear solve, and the minimizer is the best consistent one.
pub fn lasso_enumeration(s: &DMatrix<f64>, c: &DVector<f64>, lambda: f64) -> f64 {
    let p = c.len();
    let mut best = 0.0f64;
    for code in 0..3usize.pow(p as u32) {
        let mut signs = vec![0i32; p];
        let mut x = code;
        for v in signs.iter_mut() {
            *v = (x % 3) as i32 - 1;
            x /= 3;
        }
        let active: Vec<usize> = (0..p).filter(|&i| signs[i] != 0).collect();
        if active.is_empty() {
            continue;
        }
        let sa = s.select_rows(active.iter()).select_columns(active.iter());
        let rhs = DVector::from_iterator(active.len(), active.iter().map(|&i| c[i] - lambda / 2.0 * signs[i] as f64));
        let Some(sol) = sa.lu().solve(&rhs) else { continue };
        if active.iter().zip(sol.iter()).any(|(&i, &v)| v * signs[i] as f64 <= 0.0) {
            continue;
        }
        let mut b = DVector::zeros(p);
        for (&i, &v) in active.iter().zip(sol.iter()) {
            b[i] = v;
        }
        best = best.min(lasso_objective(s, c, &b, lambda));
    }
    best
}

pub fn tensor_instance(p: usize, seed: u64) -> (DMatrix<f64>, BlockPartition, DMatrix<f64>) {
    let mut r = rng(seed);
    let m = p * p;
    let c = gaussian(m, 1, &mut r);
    let mut sigma = DMatrix::identity(m + 1, m + 1);
    for a in 0..m {
        sigma[(a, m)] = c[a];
        sigma[(m, a)] = c[a];
    }
    sigma[(m, m)] = c.norm_squared() + 1.0;
    let part = BlockPartition::new((0..m).collect(), vec![m]).unwrap().with_matrix_shape(p).unwrap();
    // column-major cells: predictor a is entry (a % p, a / p)
    let mat_c = DMatrix::from_column_slice(p, p, c.as_slice());
    (sigma, part, mat_c)
}

pub fn truncated_svd(m: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for &i in order.iter().take(r) {
        out += u.column(i) * v_t.row(i) * svd.singular_values[i];
    }
    out
}
