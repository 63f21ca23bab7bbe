//! With more traits than subjects the solver works in the row space of Y.
//! Both paths land on the same estimate; the reduced one is much faster.

use std::time::Instant;

use vcomp::estimate::{mvrehe_fit, SolveOptions, SvdReduction};
use vcomp::simulation::{make_lowdim_truth, FamilyMix, SimulationDesign};

fn main() -> vcomp::Result<()> {
    let (n, q) = (100, 300);
    let truth = make_lowdim_truth(q, 0.4, 5)?;
    let design = SimulationDesign { n_grid: vec![n], truth, family_mix: FamilyMix::default(), replicates: 1, seed: 9, partition: None };
    let prepared = design.prepare(n)?;
    let y = prepared.sample(1)?;

    let mut fits = Vec::new();
    for reduce in [SvdReduction::On, SvdReduction::Off] {
        let opts = SolveOptions { use_svd_reduction: reduce, ..SolveOptions::default() };
        let t = Instant::now();
        let (set, diag) = mvrehe_fit(&y, prepared.spec(), &opts)?;
        println!("{reduce:?}: {:.2}s, working dim {}, objective {:.6e}", t.elapsed().as_secs_f64(), diag.working_dim, diag.objective);
        fits.push(set);
    }
    for (a, b) in fits[0].sigmas().iter().zip(fits[1].sigmas()) {
        println!("relative difference {:.2e}", (a - b).norm() / b.norm().max(1e-300));
    }
    Ok(())
}
