// Coarse (alpha, beta) map: does SE converge, and does `U~(1) < 1` say so?

use sgdphaselab::genfunc::{critical_alpha, eval_u1};
use sgdphaselab::simulate::run_se;
use sgdphaselab::spectrum::build_power_law;
use sgdphaselab::{GenFuncContext, PowerLawSpec, SgdParams};

pub fn run_example() -> sgdphaselab::Result<()> {
    let s = build_power_law(&PowerLawSpec::new(1.0, 1.5, 1.0, 1.0, 100))?;
    let gamma = 1.0;
    println!("rows: beta; columns: alpha from 0.2 to 4.0");
    println!("'#' converged, '.' diverged, '!' prediction disagrees");
    let mut disagreements = 0;
    for i in 0..10 {
        let beta = -0.45 + 0.15 * i as f64;
        let mut row = String::new();
        for j in 0..20 {
            let alpha = 0.2 * (j + 1) as f64;
            let params = SgdParams::new(alpha, beta, gamma, 2000);
            let ok = !run_se(&s, &params)?.diverged();
            let ctx = GenFuncContext::new(&s, alpha, beta, gamma, 1.0);
            let predicted = alpha < ctx.alpha_window() && eval_u1(&ctx) < 1.0;
            row.push(match (ok, ok == predicted) {
                (_, false) => '!',
                (true, _) => '#',
                (false, _) => '.',
            });
            disagreements += usize::from(ok != predicted);
        }
        let crit = critical_alpha(&s, beta, gamma, 1.0)?;
        println!("{beta:>6.2} {row}  alpha_crit = {crit:.3}");
    }
    println!("{disagreements} cells disagree (slow divergence near the boundary can outlast 2000 steps)");
    Ok(())
}

#[allow(dead_code)]
fn main() -> sgdphaselab::Result<()> {
    run_example()
}
