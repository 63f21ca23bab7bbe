//! Draw Y ~ MN(0, K, Σ) and check the empirical row and column
//! second moments against tr(Σ)·K and tr(K)·Σ.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vcomp::model::{build_kinship, KernelKind, StructureKernel};
use vcomp::simulation::{FamilyMix, MatrixNormalSampler};

fn main() -> vcomp::Result<()> {
    let n = 40;
    let pedigree = FamilyMix::default().pedigree(n)?;
    let kinship = build_kinship(&pedigree, &pedigree.subject_ids())?;
    let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 2.0]);
    let sampler = MatrixNormalSampler::new(&kinship, &sigma)?;

    let draws = 20000;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut col = DMatrix::zeros(2, 2);
    let mut row = DMatrix::zeros(n, n);
    for _ in 0..draws {
        let y = sampler.sample(&mut rng);
        col += y.tr_mul(&y);
        row += &y * y.transpose();
    }
    let col_expected = &sigma * kinship.matrix().trace();
    let row_expected = kinship.matrix() * sigma.trace();
    println!("column moment error {:.3}", (col / draws as f64 - &col_expected).norm() / col_expected.norm());
    println!("row moment error    {:.3}", (row / draws as f64 - &row_expected).norm() / row_expected.norm());

    let identity = StructureKernel::new(DMatrix::identity(n, n), KernelKind::Identity)?;
    println!("identity kernel psd warning: {}", identity.psd_warning());
    Ok(())
}
