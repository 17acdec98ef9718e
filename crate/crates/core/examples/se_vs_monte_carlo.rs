// Averaged SGD runs against the exact moment recursion and the SE surrogate.

use sgdphaselab::simulate::{run_full_moments, run_mc, run_se, McOptions, NoiseModel};
use sgdphaselab::spectrum::{eigendecompose, gamma_for_batch};
use sgdphaselab::{FeatureProblem, SgdParams};

pub fn run_example() -> sgdphaselab::Result<()> {
    let problem = FeatureProblem::random(24, 10, 1.0, 5)?;
    let eig = eigendecompose(&problem)?;
    let batch = 4;
    let gamma = gamma_for_batch(eig.spectrum.dataset_size(), batch)?;
    let params = SgdParams::new(0.8 / eig.spectrum.lambda_max(), 0.3, gamma, 200).with_batch(batch);

    let mc = run_mc(&problem, &params, &McOptions { runs: 2000, seed: 1, threads: None })?;
    let exact = run_full_moments(&problem, &params, NoiseModel::Exact)?;
    let se = run_se(&eig.spectrum, &params)?;
    let stderr = mc.stderr.as_ref().expect("Monte-Carlo carries standard errors");
    println!("{:>5} {:>12} {:>10} {:>12} {:>12}", "t", "mc", "stderr", "exact", "se");
    for t in [0, 10, 50, 100, 200] {
        println!("{t:>5} {:>12.5e} {:>10.2e} {:>12.5e} {:>12.5e}", mc.losses[t], stderr[t], exact.losses[t], se.losses[t]);
    }
    let z = (1..=200).map(|t| ((mc.losses[t] - exact.losses[t]) / stderr[t]).abs()).fold(0.0, f64::max);
    println!("largest deviation of Monte-Carlo from exact moments: {z:.2} standard errors");
    Ok(())
}

#[allow(dead_code)]
fn main() -> sgdphaselab::Result<()> {
    run_example()
}
