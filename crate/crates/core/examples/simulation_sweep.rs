//! Replicate sweep on the synthetic q = 200 truth comparing mvREHE with
//! truncated mvHE, including latent-regression R² ratios.
//!
//! cargo run --release --example simulation_sweep -- [replicates] [n,n,...]

use std::time::Instant;

use vcomp::simulation::{
    connectome_truth, run_sweep, ConnectomeTruthConfig, FamilyMix, SimulationDesign, SweepOptions, SweepRegression,
};

fn main() -> vcomp::Result<()> {
    let mut args = std::env::args().skip(1);
    let replicates: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(3);
    let n_grid: Vec<usize> = args
        .next()
        .map(|a| a.split(',').filter_map(|s| s.parse().ok()).collect())
        .unwrap_or_else(|| vec![250, 500, 1000, 2000]);

    let (truth, partition) = connectome_truth(&ConnectomeTruthConfig::default())?;
    let design = SimulationDesign {
        n_grid: n_grid.clone(),
        truth,
        family_mix: FamilyMix::default(),
        replicates,
        seed: 1,
        partition: Some(partition),
    };
    let opts = SweepOptions { regression: Some(SweepRegression::default()), ..SweepOptions::default() };

    let start = Instant::now();
    let report = run_sweep(&design, &opts)?;
    println!("{} jobs in {:.1}s, {} failures", n_grid.len() * replicates, start.elapsed().as_secs_f64(), report.failures.len());

    let metrics = ["spectral_error_G", "spectral_error_C", "spectral_error_E", "r2_ratio_ridge", "r2_ratio_lasso", "r2_ratio_tensor"];
    println!("{:>6} {:>8} {}", "n", "method", metrics.map(|m| format!("{m:>17}")).join(""));
    for &n in &n_grid {
        for est in ["mvrehe", "mvhe"] {
            let row: String = metrics
                .iter()
                .map(|m| format!("{:>17.4}", report.median(est, n, m).unwrap_or(f64::NAN)))
                .collect();
            println!("{n:>6} {est:>8} {row}");
        }
        for est in ["mvrehe", "mvhe"] {
            let secs: Vec<f64> = report.runtimes.iter().filter(|r| r.n == n && r.estimator == est).map(|r| r.seconds).collect();
            println!("       {est} mean fit time {:.3}s", secs.iter().sum::<f64>() / secs.len().max(1) as f64);
        }
    }
    Ok(())
}
