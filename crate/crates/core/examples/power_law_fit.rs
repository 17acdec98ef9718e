// Build a power-law spectrum, write it as CSV, read it back and fit it.
//
// ```bash
// cargo run -p sgdphaselab --example power_law_fit
// ```

use sgdphaselab::spectrum::{build_power_law, fit_power_law, load_spectrum_csv, save_spectrum_csv, C0Mode};
use sgdphaselab::PowerLawSpec;

pub fn run_example() -> sgdphaselab::Result<()> {
    let spec = PowerLawSpec::new(1.0, 1.5, 1.0, 0.75, 500);
    let s = build_power_law(&spec)?;
    println!("{} modes, Tr H = {:.4}, L(0) = {:.4}", s.len(), s.trace(), s.initial_loss());

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("spectrum.csv");
    save_spectrum_csv(&s, &path)?;
    let back = load_spectrum_csv(&path)?;
    assert_eq!(back.lambdas(), s.lambdas());

    let fit = fit_power_law(&back, 1)?;
    println!("fit: Lambda={:.6} nu={:.6} K={:.6} kappa={:.6} zeta={:.6}", fit.lambda_scale, fit.nu, fit.k_scale, fit.kappa, fit.zeta());

    // pointwise targets put the law on the weights themselves
    let pw = build_power_law(&spec.with_mode(C0Mode::Pointwise))?;
    let fit = fit_power_law(&pw, 10)?;
    println!("pointwise, tail from mode 10: nu={:.4} kappa={:.4}", fit.nu, fit.kappa);
    Ok(())
}

#[allow(dead_code)]
fn main() -> sgdphaselab::Result<()> {
    run_example()
}
