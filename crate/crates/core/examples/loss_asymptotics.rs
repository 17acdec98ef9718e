// Late-time power laws in the signal- and noise-dominated phases.

use sgdphaselab::asymptotics::loss_asymptote;
use sgdphaselab::simulate::run_se;
use sgdphaselab::spectrum::{build_power_law, C0Mode, PowerLawFit};
use sgdphaselab::{GenFuncContext, PowerLawSpec, SgdParams};

pub fn run_example() -> sgdphaselab::Result<()> {
    let cases = [
        (PowerLawSpec::new(1.0, 1.5, 1.0, 0.375, 4000), 0.1, 0.1),
        (PowerLawSpec::new(1.0, 1.5, 1.0, 3.0, 4000).with_mode(C0Mode::Pointwise), 0.15, 1.0),
    ];
    for (spec, alpha, gamma) in cases {
        let s = build_power_law(&spec)?;
        let params = SgdParams::new(alpha, 0.0, gamma, 20_000);
        let ctx = GenFuncContext::from_params(&s, &params).with_tail_nu(spec.nu);
        let rep = loss_asymptote(&ctx, &PowerLawFit::from_spec(&spec))?;
        println!(
            "{}: L(t) ~ {:.4e} t^{:.4}  (U1 = {:.4}, t_trans = {:?})",
            rep.phase.as_str(),
            rep.constant,
            rep.exponent,
            rep.u1,
            rep.t_trans.map(|t| t.round())
        );
        let tr = run_se(&s, &params)?;
        for t in [1000usize, 5000, 20_000] {
            println!("  t={t:>6}  SE {:.4e}  asymptote {:.4e}", tr.losses[t], rep.approx_loss(t as f64));
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> sgdphaselab::Result<()> {
    run_example()
}
