// Whether a little momentum helps at the zero-momentum optimal learning rate.

use sgdphaselab::asymptotics::{classify_phase, loss_asymptote, optimal_alpha, xi_criterion, PhaseLabel};
use sgdphaselab::spectrum::{build_power_law, PowerLawFit};
use sgdphaselab::{GenFuncContext, PowerLawSpec};

pub fn run_example() -> sgdphaselab::Result<()> {
    for (nu, kappa) in [(1.5, 3.5), (2.0, 5.0), (1.5, 2.5), (2.0, 3.5), (1.5, 0.375)] {
        let spec = PowerLawSpec::new(1.0, nu, 1.0, kappa, 1000);
        let s = build_power_law(&spec)?;
        let fit = PowerLawFit::from_spec(&spec);
        let phase = classify_phase(nu, fit.zeta());
        let (alpha, alpha_max) = optimal_alpha(&s, phase, nu, fit.zeta())?;
        let xi = xi_criterion(&s, nu, phase);
        let constant = |beta: f64| -> sgdphaselab::Result<f64> {
            let rep = loss_asymptote(&GenFuncContext::new(&s, alpha, beta, 1.0, 1.0), &fit)?;
            Ok(if phase == PhaseLabel::NoiseDominated { rep.c_noise } else { rep.c_signal })
        };
        let slope = (constant(1e-3)? - constant(-1e-3)?) / 2e-3;
        println!(
            "nu={nu} kappa={kappa}: {:<17} alpha_opt={alpha:.4} (max {alpha_max:.4}) Xi={:+.3e} dC/dbeta={slope:+.3e} -> {:?}",
            phase.as_str(),
            xi.xi,
            xi.recommendation
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> sgdphaselab::Result<()> {
    run_example()
}
