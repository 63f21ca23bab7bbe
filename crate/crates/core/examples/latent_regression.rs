//! Regress functional connectivity on structural connectivity at the
//! genetic level. Hyperparameters are chosen by family-level half splits
//! scored in both directions, then refit on all subjects.
//!
//! cargo run --release --example latent_regression -- [n] [splits]

use vcomp::regression::{cross_fit_select, refit_selected, component_correlation, ComponentChoice, CrossFitOptions, Method, RegressionGrids};
use vcomp::simulation::{connectome_truth, ConnectomeTruthConfig, FamilyMix, SimulationDesign};

fn main() -> vcomp::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(1000);
    let n_splits: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(2);

    let cfg = ConnectomeTruthConfig { n_functional: 20, ..ConnectomeTruthConfig::default() };
    let (truth, part) = connectome_truth(&cfg)?;
    let design = SimulationDesign { n_grid: vec![n], truth, family_mix: FamilyMix::default(), replicates: 1, seed: 4, partition: Some(part.clone()) };
    let prepared = design.prepare(n)?;
    let y = prepared.sample(21)?;

    let grids = RegressionGrids { ridge: vec![0.3, 1.0, 3.0], lasso: vec![0.1, 0.3], tensor_ranks: vec![1], tensor_lambdas: vec![0.1, 0.3] };
    let opts = CrossFitOptions { n_splits, ..CrossFitOptions::default() };
    for component in [ComponentChoice::genetic(), ComponentChoice::Observed] {
        let tuning = cross_fit_select(&y, prepared.spec(), &part, &component, &grids, &opts)?;
        println!(
            "{}: best out-of-sample R² {:.3}; wins ridge {:.2} lasso {:.2} tensor {:.2}",
            component.name(),
            tuning.max_r2_out().unwrap_or(f64::NAN),
            tuning.win_share(Method::Ridge),
            tuning.win_share(Method::Lasso),
            tuning.win_share(Method::Tensor)
        );
        if component == ComponentChoice::genetic() {
            let all: Vec<usize> = (0..n).collect();
            let corr = component_correlation(&y, prepared.spec(), &all, &component, &opts.solve)?;
            let fits = refit_selected(&corr, &part, &tuning, &opts.tensor);
            let ok = fits.iter().filter(|f| f.is_ok()).count();
            println!("  refit {ok}/{} responses on all subjects", fits.len());
        }
    }
    Ok(())
}
