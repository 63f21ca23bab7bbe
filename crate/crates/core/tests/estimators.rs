mod common;

use approx::assert_relative_eq;
use nalgebra::DMatrix;

use common::*;
use vcomp::estimate::{mvhe_fit, mvrehe_fit, objective_value, Initialization, SolveOptions, SvdReduction};
use vcomp::model::{ComponentSpec, KernelKind, StructureKernel};

fn tight() -> SolveOptions {
    SolveOptions { tolerance: 1e-13, max_iterations: 20_000, ..SolveOptions::default() }
}

#[test]
fn library_objective_matches_term_by_term_sum() {
    let mut r = rng(1);
    for _ in 0..5 {
        let spec = random_spec(12, 2, &mut r);
        let y = gaussian(12, 3, &mut r);
        let sigmas: Vec<DMatrix<f64>> = (0..3).map(|_| random_symmetric(3, &mut r)).collect();
        let direct = objective_direct(&y, &spec, &sigmas);
        assert_relative_eq!(objective_value(&y, &spec, &sigmas).unwrap(), direct, max_relative = 1e-10);
        assert_relative_eq!(objective_moments(&moments(&y, &spec), &sigmas), direct, max_relative = 1e-10);
    }
}

#[test]
fn unconstrained_mvhe_zeroes_the_gradient() {
    let mut r = rng(2);
    let spec = random_spec(30, 2, &mut r);
    let y = gaussian(30, 4, &mut r);
    let fit = mvhe_fit(&traits(y.clone()), &spec, false).unwrap();
    let m = moments(&y, &spec);
    for z in 0..3 {
        let mut g = -&m.w[z];
        for (k, s) in fit.sigmas().iter().enumerate() {
            g += s * m.q[(z, k)];
        }
        assert!(g.norm() < 1e-9 * m.w[z].norm().max(1.0), "gradient {}", g.norm());
    }
}

#[test]
fn truncated_mvhe_clips_each_unconstrained_block() {
    let mut r = rng(3);
    let spec = random_spec(25, 1, &mut r);
    let y = gaussian(25, 5, &mut r);
    let raw = mvhe_fit(&traits(y.clone()), &spec, false).unwrap();
    let cut = mvhe_fit(&traits(y), &spec, true).unwrap();
    for (a, b) in raw.sigmas().iter().zip(cut.sigmas()) {
        assert!((clip_eigen(a) - b).norm() < 1e-10 * a.norm().max(1.0));
    }
    assert!(cut.all_certified());
}

#[test]
fn mvrehe_reaches_projected_gradient_optimum() {
    let mut r = rng(4);
    for k in [1, 2] {
        let spec = random_spec(20, k, &mut r);
        let y = gaussian(20, 3, &mut r);
        let (fit, diag) = mvrehe_fit(&traits(y.clone()), &spec, &tight()).unwrap();
        assert!(diag.converged);
        let m = moments(&y, &spec);
        let oracle = objective_moments(&m, &projected_gradient(&m, 200_000));
        let ours = objective_direct(&y, &spec, fit.sigmas());
        assert!((ours - oracle).abs() <= 1e-6 * oracle.abs(), "{ours} vs {oracle}");
        for s in fit.sigmas() {
            assert!(min_eig(s) >= -1e-10 * spectral(s).max(1.0));
        }
    }
}

#[test]
fn block_updates_never_raise_the_objective() {
    let mut r = rng(5);
    let spec = family_spec(120, 3);
    let y = gaussian(120, 6, &mut r);
    let (_, diag) = mvrehe_fit(&traits(y), &spec, &SolveOptions::default()).unwrap();
    for w in diag.block_trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-10 * w[0].abs(), "{} -> {}", w[0], w[1]);
    }
    for w in diag.objective_trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-10 * w[0].abs());
    }
}

#[test]
fn warm_start_reaches_the_same_minimum() {
    let mut r = rng(6);
    let spec = random_spec(30, 2, &mut r);
    let y = gaussian(30, 4, &mut r);
    let (a, _) = mvrehe_fit(&traits(y.clone()), &spec, &tight()).unwrap();
    let warm = SolveOptions { initialization: Initialization::MvheTruncated, ..tight() };
    let (b, _) = mvrehe_fit(&traits(y.clone()), &spec, &warm).unwrap();
    let fa = objective_direct(&y, &spec, a.sigmas());
    let fb = objective_direct(&y, &spec, b.sigmas());
    assert!((fa - fb).abs() <= 1e-9 * fa);
}

#[test]
fn reduction_matches_full_solve_with_few_and_many_traits() {
    let mut r = rng(7);
    for (n, q) in [(40, 10), (20, 45)] {
        let spec = random_spec(n, 2, &mut r);
        let y = gaussian(n, q, &mut r);
        let run = |mode| {
            mvrehe_fit(&traits(y.clone()), &spec, &SolveOptions { use_svd_reduction: mode, ..SolveOptions::default() })
                .unwrap()
                .0
        };
        let (on, off) = (run(SvdReduction::On), run(SvdReduction::Off));
        for (a, b) in on.sigmas().iter().zip(off.sigmas()) {
            assert!((a - b).norm() <= 1e-8 * b.norm().max(1e-12), "n={n} q={q}");
        }
    }
}

#[test]
fn permuting_subjects_leaves_estimates_unchanged() {
    let mut r = rng(8);
    let n = 60;
    let spec = family_spec(n, 5);
    let y = gaussian(n, 4, &mut r);
    let perm: Vec<usize> = (0..n).map(|i| (i * 37 + 11) % n).collect();
    let y_p = DMatrix::from_fn(n, 4, |i, j| y[(perm[i], j)]);
    let kernels = spec
        .kernels()
        .iter()
        .map(|k| {
            let m = DMatrix::from_fn(n, n, |i, j| k.matrix()[(perm[i], perm[j])]);
            let kind = if k.kind() == KernelKind::Identity { KernelKind::Identity } else { KernelKind::Custom };
            StructureKernel::new(m, kind).unwrap()
        })
        .collect();
    let spec_p = ComponentSpec::new(kernels, spec.labels().to_vec()).unwrap();
    let (a, _) = mvrehe_fit(&traits(y), &spec, &SolveOptions::default()).unwrap();
    let (b, _) = mvrehe_fit(&traits(y_p), &spec_p, &SolveOptions::default()).unwrap();
    for (x, z) in a.sigmas().iter().zip(b.sigmas()) {
        assert!((x - z).norm() <= 1e-10 * x.norm().max(1.0));
    }
}

#[test]
fn objective_ordering_across_estimators() {
    let mut r = rng(9);
    for _ in 0..10 {
        let n = 15 + (uniform(&mut r, 0.0, 1.0) * 30.0) as usize;
        let spec = random_spec(n, 2, &mut r);
        let y = gaussian(n, 3, &mut r);
        let f = |s: &[DMatrix<f64>]| objective_direct(&y, &spec, s);
        let free = f(mvhe_fit(&traits(y.clone()), &spec, false).unwrap().sigmas());
        let cut = f(mvhe_fit(&traits(y.clone()), &spec, true).unwrap().sigmas());
        let rehe = f(mvrehe_fit(&traits(y.clone()), &spec, &SolveOptions::default()).unwrap().0.sigmas());
        let slack = 1e-9 * free.abs();
        assert!(free <= rehe + slack && rehe <= cut + slack, "{free} {rehe} {cut}");
    }
}

#[test]
fn collinear_kernels_are_rejected() {
    let n = 10;
    let k = StructureKernel::new(DMatrix::identity(n, n), KernelKind::Custom).unwrap();
    let err = ComponentSpec::new(vec![StructureKernel::identity(n), k], vec!["E".into(), "X".into()]).unwrap_err();
    assert!(matches!(err, vcomp::VcompError::SingularGram { .. }));
}
