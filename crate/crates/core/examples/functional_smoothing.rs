//! Smooth a noisy covariance estimate on a time grid with local-linear
//! kernel smoothing (bandwidth by GCV) and recover the noise variance.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use vcomp::functional::{
    estimate_noise_variance, functional_truth, integrated_squared_error, smooth_covariance, Bandwidth, FunctionalGrid,
    Interpretation,
};
use vcomp::linalg::SymmetricRoot;

fn main() -> vcomp::Result<()> {
    let q = 60;
    let grid = FunctionalGrid::uniform(q)?;
    let c = functional_truth(1.0, &grid);
    let noise = 1.0;

    // sample covariance of n curves observed with white noise
    let n = 1000;
    let root = SymmetricRoot::new(&c)?.to_dense();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let z: DMatrix<f64> = DMatrix::from_fn(n, q, |_, _| StandardNormal.sample(&mut rng));
    let e: DMatrix<f64> = DMatrix::from_fn(n, q, |_, _| StandardNormal.sample(&mut rng));
    let y: DMatrix<f64> = z * root + e * noise;
    let raw = y.tr_mul(&y) / n as f64;

    let smoothed = smooth_covariance(&raw, &grid, Bandwidth::Auto)?;
    let sigma2 = estimate_noise_variance(&raw, &smoothed)?;
    println!("bandwidth {:.4}  gcv {:.4e}", smoothed.bandwidth, smoothed.gcv_score);
    println!("noise variance {sigma2:.3} (truth {})", noise * noise);
    let signal = &raw - DMatrix::identity(q, q) * sigma2;
    println!("ISE raw (noise removed) {:.4}", integrated_squared_error(&signal, &c, &grid, Interpretation::PiecewiseConstant)?);
    println!("ISE smoothed            {:.4}", integrated_squared_error(&smoothed.values, &c, &grid, Interpretation::Smooth)?);
    Ok(())
}
