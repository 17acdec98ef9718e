// Slowly decaying spectra diverge at any learning rate; the rate is set by
// the convergence radius of the loss generating function.

use sgdphaselab::asymptotics::blowup_time;
use sgdphaselab::genfunc::{eval_u1, solve_divergence};
use sgdphaselab::simulate::{run_noiseless, run_se};
use sgdphaselab::spectrum::{build_power_law, PowerLawFit};
use sgdphaselab::{GenFuncContext, PowerLawSpec, SgdParams};

pub fn run_example() -> sgdphaselab::Result<()> {
    let spec = PowerLawSpec::new(1.0, 0.75, 1.0, 0.375, 8000);
    let s = build_power_law(&spec)?;
    let ctx = GenFuncContext::new(&s, 0.1, 0.0, 1.0, 1.0);
    println!("U~(1) = {:.3} with {} modes", eval_u1(&ctx), s.len());

    let div = solve_divergence(&ctx)?;
    let blow = blowup_time(&ctx, &PowerLawFit::from_spec(&spec))?;
    println!("r_L = {:.6}, t_div = {:.1}, prefactor = {:.3e}", div.r_l, div.t_div, div.prefactor);
    println!("a* = {:.4}, t_blowup = {:.1}, 1 - r_L = {:.3e} vs small-alpha {:.3e}", blow.a_star, blow.t_blowup, blow.one_minus_r_l, blow.epsilon_star);

    let steps = (6.0 * div.t_div) as usize;
    let params = SgdParams::new(0.1, 0.0, 1.0, steps);
    let se = run_se(&s, &params)?;
    let clean = run_noiseless(&s, &params)?;
    for t in [steps / 6, steps / 3, steps / 2, steps] {
        let t = t.min(se.losses.len() - 1);
        let asym = div.prefactor * div.r_l.powf(-(t as f64));
        println!("t={t:>6} SE {:.4e}  noiseless {:.4e}  prefactor r_L^-t {:.4e}", se.losses[t], clean.losses[t], asym);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> sgdphaselab::Result<()> {
    run_example()
}
