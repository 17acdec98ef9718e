// Text rendering of the (nu, zeta) phase plane.

use sgdphaselab::asymptotics::{classify_phase, PhaseLabel};
use sgdphaselab::cli::phase_cell;
use sgdphaselab::PowerLawSpec;

pub fn run_example() -> sgdphaselab::Result<()> {
    println!("rows: zeta from 3.0 down to 0.1; columns: nu from 0.3 to 3.0");
    println!("I immediate divergence, E eventual divergence, S signal, N noise, = boundary");
    for i in (0..30).rev() {
        let zeta = 0.1 + 0.1 * i as f64;
        let row: String = (0..28)
            .map(|j| {
                let nu = 0.3 + 0.1 * j as f64;
                match classify_phase(nu, zeta) {
                    PhaseLabel::ImmediateDivergence => 'I',
                    PhaseLabel::EventualDivergence => 'E',
                    PhaseLabel::SignalDominated => 'S',
                    PhaseLabel::NoiseDominated => 'N',
                    PhaseLabel::Boundary => '=',
                }
            })
            .collect();
        println!("{zeta:>4.1} {row}");
    }
    let template = PowerLawSpec::new(1.0, 1.5, 1.0, 1.0, 500);
    for (nu, zeta) in [(1.5, 0.25), (1.5, 2.0), (2.5, 1.0)] {
        let (phase, exponent, constant) = phase_cell(&template, nu, zeta, None, 0.0, 1.0, 1.0);
        println!("nu={nu} zeta={zeta}: {} L ~ {constant:.3e} t^{exponent:.3}", phase.as_str());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> sgdphaselab::Result<()> {
    run_example()
}
