//! Nearest PSD matrix in Frobenius norm: clip negative eigenvalues.

use nalgebra::DMatrix;
use vcomp::linalg::{min_eigenvalue, psd_project};

fn main() -> vcomp::Result<()> {
    let s = DMatrix::from_row_slice(3, 3, &[2.0, -1.5, 0.3, -1.5, 0.5, 0.8, 0.3, 0.8, -0.4]);
    let p = psd_project(&s)?;
    println!("input min eigenvalue     {:+.4}", min_eigenvalue(&s)?);
    println!("projected min eigenvalue {:+.4}", min_eigenvalue(&p)?);
    println!("distance moved           {:.4}", (&s - &p).norm());
    println!("projected:{p:.4}");
    Ok(())
}
