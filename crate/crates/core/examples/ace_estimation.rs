//! Twin and sibling design with a known ACE truth: build the kinship and
//! household kernels from the pedigree, then compare mvREHE with mvHE.
//!
//! cargo run --release --example ace_estimation -- [n] [q]

use vcomp::estimate::{heritability, mvhe_fit, mvrehe_fit, SolveOptions};
use vcomp::linalg::spectral_norm_sym;
use vcomp::model::{build_household, build_kinship, ComponentSpec};
use vcomp::simulation::{make_lowdim_truth, FamilyMix, SimulationDesign};

fn main() -> vcomp::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(1000);
    let q: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(5);

    let truth = make_lowdim_truth(q, 0.5, 7)?;
    let mix = FamilyMix::default();
    let pedigree = mix.pedigree(n)?;
    let kinship = build_kinship(&pedigree, &pedigree.subject_ids())?;
    let household = build_household(&kinship)?;
    let spec = ComponentSpec::ace(kinship, household)?;
    println!("{} subjects, kernel Gram condition {:.1}", spec.n_subjects(), spec.gram_condition());

    let design = SimulationDesign { n_grid: vec![n], truth: truth.clone(), family_mix: mix, replicates: 1, seed: 3, partition: None };
    let y = design.prepare(n)?.sample(11)?;

    let (rehe, diag) = mvrehe_fit(&y, &spec, &SolveOptions::default())?;
    let he = mvhe_fit(&y, &spec, true)?;
    println!("mvREHE: {} cycles, converged {}", diag.iterations, diag.converged);
    for label in ["G", "C", "E"] {
        let t = truth.get(label).unwrap();
        println!(
            "  {label}: spectral error mvREHE {:.3}  mvHE {:.3}",
            spectral_norm_sym(&(rehe.get(label).unwrap() - t))?,
            spectral_norm_sym(&(he.get(label).unwrap() - t))?
        );
    }
    let h_true = heritability(&truth)?;
    let h_est = heritability(&rehe)?;
    for (j, (a, b)) in h_true.iter().zip(h_est.iter()).enumerate() {
        println!("  trait {j}: h² true {a:.3} estimated {b:.3}");
    }
    Ok(())
}
