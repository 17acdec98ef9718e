// How well does `tau1 H Tr(HC) - tau2 HCH` approximate the exact sampling noise?

use nalgebra::DVector;

use sgdphaselab::cli::torus_kernel;
use sgdphaselab::simulate::se_fit_error;
use sgdphaselab::spectrum::build_torus_problem;
use sgdphaselab::FeatureProblem;

pub fn run_example() -> sgdphaselab::Result<()> {
    for (n, decay) in [(20, 0.5), (20, 1.0), (40, 2.0)] {
        let problem = FeatureProblem::random(n, n / 2, decay, 7)?;
        let rep = se_fit_error(&problem, &problem.initial_moment(), 1.0, 1.0)?;
        println!("random N={n} decay={decay}: E2(1,1) = {:.4}, best tau2 = {:.4} giving {:.4}", rep.e2, rep.tau2_star, rep.e2_star);
    }
    // circulant moments on a periodic grid are reproduced exactly
    let torus = build_torus_problem(&[24], &torus_kernel(24, 1.5))?;
    let problem = torus.problem(DVector::zeros(24), DVector::zeros(24))?;
    let c = build_torus_problem(&[24], &torus_kernel(24, 0.8))?.kernel_matrix();
    let rep = se_fit_error(&problem, &c, 1.0, 1.0)?;
    println!("torus N=24, circulant C: E2(1,1) = {:.2e}", rep.e2);
    Ok(())
}

#[allow(dead_code)]
fn main() -> sgdphaselab::Result<()> {
    run_example()
}
