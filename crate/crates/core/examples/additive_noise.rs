// Constant additive gradient noise: the loss settles on a floor instead of zero.

use sgdphaselab::simulate::{additive_floor_closed_form, run_additive_noise};
use sgdphaselab::spectrum::build_power_law;
use sgdphaselab::{PowerLawSpec, SgdParams};

pub fn run_example() -> sgdphaselab::Result<()> {
    let s = build_power_law(&PowerLawSpec::new(1.0, 1.5, 1.0, 1.0, 50))?;
    let g: Vec<f64> = s.lambdas().iter().map(|l| 0.01 * l).collect();
    println!("closed form at beta = 0: {:.6e}", additive_floor_closed_form(&s, 0.5, &g));
    for beta in [-0.5, 0.0, 0.5, 0.9] {
        let out = run_additive_noise(&s, &SgdParams::new(0.5, beta, 0.0, 50_000), &g)?;
        println!("beta={beta:>5}: floor {:.6e}, loss after 5e4 steps {:.6e}", out.floor, out.trajectory.final_loss());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> sgdphaselab::Result<()> {
    run_example()
}
