mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;

use common::*;
use vcomp::functional::{smooth_covariance, Bandwidth, FunctionalGrid};
use vcomp::io::{read_matrix_csv, write_matrix_csv};
use vcomp::linalg::psd_project;
use vcomp::model::{
    build_household, build_kinship, residualize, standardize_columns, CovariateMatrix, Pedigree, PedigreeRecord,
    RelationClass,
};

/// One family: a list of member classes, twins always added in pairs.
fn family() -> impl Strategy<Value = Vec<RelationClass>> {
    prop::collection::vec(0u8..6, 1..5).prop_map(|codes| {
        let mut out = Vec::new();
        for c in codes {
            match c {
                0 => out.extend([RelationClass::Mz, RelationClass::Mz]),
                1 => out.extend([RelationClass::Dz, RelationClass::Dz]),
                2 | 3 => out.push(RelationClass::FullSib),
                4 => out.push(RelationClass::HalfSib),
                _ => out.push(RelationClass::Unrelated),
            }
        }
        out
    })
}

fn pedigree() -> impl Strategy<Value = Pedigree> {
    prop::collection::vec(family(), 1..8).prop_map(|families| {
        let mut records = Vec::new();
        let mut pair_no = 0;
        for (f, members) in families.iter().enumerate() {
            let mut open_pair: Option<String> = None;
            for (m, class) in members.iter().enumerate() {
                let pair = match class {
                    RelationClass::Mz | RelationClass::Dz => match open_pair.take() {
                        Some(p) => Some(p),
                        None => {
                            pair_no += 1;
                            let p = format!("p{pair_no}");
                            open_pair = Some(p.clone());
                            Some(p)
                        }
                    },
                    _ => None,
                };
                records.push(PedigreeRecord::new(&format!("s{f}_{m}"), &format!("f{f}"), *class, pair.as_deref()));
            }
        }
        Pedigree::new(records).expect("well-formed pedigree")
    })
}

fn symmetric(max_q: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (1..=max_q).prop_flat_map(|q| {
        prop::collection::vec(-5.0f64..5.0, q * q).prop_map(move |v| {
            let a = DMatrix::from_vec(q, q, v);
            (&a + a.transpose()) * 0.5
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kinship_of_disjoint_families_is_psd(ped in pedigree()) {
        let order = ped.subject_ids();
        let k = build_kinship(&ped, &order).unwrap();
        prop_assert!(min_eig(k.matrix()) >= -1e-10);
        let h = build_household(&k).unwrap();
        let (km, hm) = (k.matrix(), h.matrix());
        let families = ped.families_of(&order).unwrap();
        for i in 0..order.len() {
            for l in 0..order.len() {
                let related = if km[(i, l)] > 0.0 { 1.0 } else { 0.0 };
                prop_assert!(hm[(i, l)] >= related);
                if families[i] != families[l] {
                    prop_assert_eq!(km[(i, l)], 0.0);
                    prop_assert_eq!(hm[(i, l)], 0.0);
                }
            }
        }
    }

    #[test]
    fn projection_is_nearest_and_fixes_psd_input(s in symmetric(8), seed in any::<u64>()) {
        let p = psd_project(&s).unwrap();
        prop_assert!((&p - polar_projection(&s)).norm() <= 1e-9 * s.norm().max(1.0));
        prop_assert!(min_eig(&p) >= -1e-10 * s.norm().max(1.0));
        let again = psd_project(&p).unwrap();
        prop_assert!((&again - &p).norm() <= 1e-10 * p.norm().max(1.0));
        let mut r = rng(seed);
        let d = (&s - &p).norm();
        for _ in 0..20 {
            let c = random_psd(s.nrows(), 1 + (seed % 3) as usize, &mut r) * 0.5;
            prop_assert!(d <= (&s - &c).norm() + 1e-12);
        }
    }

    #[test]
    fn residualize_is_idempotent(seed in any::<u64>(), n in 8usize..40, q in 1usize..4, c in 1usize..4) {
        let mut r = rng(seed);
        let y = traits(gaussian(n, q, &mut r));
        let x = CovariateMatrix::with_intercept(gaussian(n, c, &mut r), (0..c).map(|i| format!("x{i}")).collect()).unwrap();
        let once = residualize(&y, &x).unwrap();
        let twice = residualize(&once, &x).unwrap();
        prop_assert!((once.values() - twice.values()).amax() <= 1e-10 * y.values().amax().max(1.0));
    }

    #[test]
    fn standardize_round_trips(seed in any::<u64>(), n in 3usize..30, q in 1usize..5, scale in 1e-3f64..1e3) {
        let mut r = rng(seed);
        let y = traits(gaussian(n, q, &mut r) * scale);
        let st = standardize_columns(&y).unwrap();
        let back = st.unscale(st.traits.values());
        prop_assert!((&back - y.values()).amax() <= 1e-12 * y.values().amax());
    }

    #[test]
    fn matrix_csv_round_trips_exactly(seed in any::<u64>(), r in 1usize..6, c in 1usize..6, exp in -200i32..200) {
        let mut g = rng(seed);
        let m = gaussian(r, c, &mut g) * 10f64.powi(exp);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_matrix_csv(&path, &m).unwrap();
        prop_assert_eq!(read_matrix_csv(&path).unwrap(), m);
    }

    #[test]
    fn smoother_reproduces_affine_surfaces(a in -2.0f64..2.0, b in -2.0f64..2.0, q in 12usize..25, h in 0.2f64..0.5) {
        let grid = FunctionalGrid::uniform(q).unwrap();
        let t = grid.timepoints().to_vec();
        let f = |s: f64, u: f64| a + b * (s + u);
        let mut m = DMatrix::from_fn(q, q, |i, j| f(t[i], t[j]));
        // the diagonal is excluded from the fit
        m.fill_diagonal(100.0);
        let out = smooth_covariance(&m, &grid, Bandwidth::Fixed(h)).unwrap();
        for i in 0..q {
            for j in 0..q {
                prop_assert!((out.values[(i, j)] - f(t[i], t[j])).abs() < 1e-9);
            }
        }
    }
}
