//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sgdphaselab::asymptotics::{blowup_time, loss_asymptote, xi_criterion, classify_phase, optimal_alpha, PhaseLabel};
use sgdphaselab::cli::torus_kernel;
use sgdphaselab::genfunc::{critical_alpha, reconstruct_loss, solve_divergence, stability_report, GenFuncContext};
use sgdphaselab::simulate::{
    additive_floor_closed_form, exact_noise_covariance, run_additive_noise, run_full_moments, run_mc, run_noiseless,
    run_se, se_noise_diagonal, McOptions, NoiseModel,
};
use sgdphaselab::spectrum::{
    build_power_law, build_torus_problem, gamma_for_batch, C0Mode, PowerLawFit, PowerLawSpec,
};
use sgdphaselab::{DatasetSize, FeatureProblem, SgdParams, Spectrum};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / y.abs().max(f64::MIN_POSITIVE)).fold(0.0, f64::max)
}

/// OLS slope and intercept of `y` on `x`.
fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let s = sxy / sxx;
    (s, my - s * mx)
}

fn random_psd(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose()
}

fn c1_noise_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for n in 1..=6usize {
        let d = 3;
        let psi = DMatrix::from_fn(d, n, |_, _| rng.random_range(-1.0..1.0));
        let problem = FeatureProblem::new(psi.clone(), DVector::zeros(d), DVector::zeros(d)).unwrap();
        let c = random_psd(d, &mut rng);
        let h = problem.hessian();
        let sigma = exact_noise_covariance(&problem, &c).unwrap();
        let scale = sigma.abs().max();
        for b in 1..=n {
            let gamma = gamma_for_batch(DatasetSize::Finite(n), b).unwrap();
            let mut acc = DMatrix::zeros(d, d);
            let mut count = 0usize;
            for mask in 0u32..(1 << n) {
                if mask.count_ones() as usize != b {
                    continue;
                }
                let mut hb = DMatrix::zeros(d, d);
                for i in (0..n).filter(|i| mask & (1 << i) != 0) {
                    hb += psi.column(i) * psi.column(i).transpose();
                }
                let dev = hb / b as f64 - &h;
                acc += &dev * &c * &dev;
                count += 1;
            }
            let enumerated = acc / count as f64;
            let predicted = &sigma * gamma;
            let denom = predicted.abs().max().max(1e-300);
            let err = (&enumerated - &predicted).abs().max();
            let rel = if gamma == 0.0 { err / scale } else { err / denom };
            worst = worst.max(rel);
        }
    }
    outcome(worst <= 1e-12, format!("max relative error {worst:.2e}"))
}

fn c2_genfunc_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let lambdas: Vec<f64> = (0..20).map(|_| rng.random_range(0.01..1.0)).collect();
        let c0: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..1.0)).collect();
        let s = Spectrum::from_c0(lambdas, c0, DatasetSize::Infinite).unwrap();
        let beta = rng.random_range(-0.5..0.9);
        let gamma = rng.random_range(0.05..1.0);
        let tau2 = rng.random_range(0.0..1.0);
        let crit = critical_alpha(&s, beta, gamma, tau2).unwrap();
        let alpha = crit * rng.random_range(0.2..0.95);
        let params = SgdParams::new(alpha, beta, gamma, 200).with_tau(1.0, tau2);
        let se = run_se(&s, &params).unwrap();
        let ctx = GenFuncContext::from_params(&s, &params);
        let rec = reconstruct_loss(&ctx, 200);
        worst = worst.max(max_rel(&rec.losses, &se.losses));
    }
    outcome(worst <= 1e-10, format!("max relative error {worst:.2e} over 10 spectra"))
}

fn c3_mc_vs_moments() -> Outcome {
    let problem = FeatureProblem::random(16, 8, 1.0, 3).unwrap();
    let lmax = sgdphaselab::spectrum::eigendecompose(&problem).unwrap().spectrum.lambda_max();
    let gamma = gamma_for_batch(DatasetSize::Finite(16), 4).unwrap();
    let params = SgdParams::new(0.8 / lmax, 0.3, gamma, 50).with_batch(4);
    let exact = run_full_moments(&problem, &params, NoiseModel::Exact).unwrap();
    let mc = run_mc(&problem, &params, &McOptions { runs: 10_000, seed: 7, threads: None }).unwrap();
    let se = mc.stderr.as_ref().unwrap();
    let mut worst = 0.0f64;
    for ((m, x), e) in mc.losses.iter().zip(&exact.losses).zip(se).skip(1) {
        worst = worst.max((m - x).abs() / e);
    }
    let same_start = (mc.losses[0] - exact.losses[0]).abs() <= 1e-12 * exact.losses[0];
    outcome(worst <= 4.0 && same_start, format!("max deviation {worst:.2} standard errors"))
}

fn c4_torus_exactness() -> Outcome {
    let n = 64;
    let torus = build_torus_problem(&[n], &torus_kernel(n, 1.3)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let w_star = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let problem = torus.problem(w_star, DVector::zeros(n)).unwrap();
    let c = random_psd(n, &mut rng);
    let sigma = exact_noise_covariance(&problem, &c).unwrap();
    let exact_diag = torus.fourier_diagonal(&sigma);
    let se_diag = se_noise_diagonal(torus.eigenvalues(), &torus.fourier_diagonal(&c), 1.0, 1.0);
    let scale = exact_diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diag_err = exact_diag.iter().zip(&se_diag).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;

    let spectrum = torus.spectrum(&problem.delta()).unwrap();
    let gamma = gamma_for_batch(DatasetSize::Finite(n), 8).unwrap();
    let alpha = 0.5 / spectrum.lambda_max();
    let params = SgdParams::new(alpha, 0.5, gamma, 500).with_batch(8);
    let se = run_se(&spectrum, &params).unwrap();
    let full = run_full_moments(&problem, &params, NoiseModel::Exact).unwrap();
    let traj_err = max_rel(&se.losses, &full.losses);
    outcome(
        diag_err <= 1e-12 && traj_err <= 1e-10 && se.losses.len() == 501,
        format!("noise diagonal {diag_err:.2e}, trajectory {traj_err:.2e}"),
    )
}

fn c5_stability_boundary() -> Outcome {
    let spec = PowerLawSpec::new(1.0, 1.5, 1.0, 3.0, 200);
    let s = build_power_law(&spec).unwrap();
    let gamma = gamma_for_batch(DatasetSize::Infinite, 10).unwrap();
    let alphas: Vec<f64> = (1..=40).map(|i| 4.0 * i as f64 / 40.0).collect();
    let mut worst = 0usize;
    let mut misplaced = 0usize;
    for j in 0..20 {
        let beta = j as f64 / 20.0;
        let mut emp = Vec::new();
        let mut pred = Vec::new();
        for &a in &alphas {
            let p = SgdParams::new(a, beta, gamma, 1000);
            let traj = run_se(&s, &p).unwrap();
            emp.push(traj.diverged() || traj.final_loss() > traj.losses[0]);
            let ctx = GenFuncContext::from_params(&s, &p).with_tail_nu(spec.nu);
            pred.push(!stability_report(&ctx).converges);
        }
        let first = |v: &[bool]| v.iter().position(|d| *d).unwrap_or(v.len());
        let (ie, ip) = (first(&emp), first(&pred));
        worst = worst.max(ie.abs_diff(ip));
        // any disagreement must sit within one cell of the predicted frontier
        for i in 0..alphas.len() {
            if emp[i] != pred[i] && i.abs_diff(ip) > 1 && (i + 1).abs_diff(ip) > 1 {
                misplaced += 1;
            }
        }
    }
    outcome(worst <= 1 && misplaced == 0, format!("worst frontier offset {worst} cells, {misplaced} stray cells"))
}

/// Slope over the last decade and level ratio `L(T) / (C T^exponent)`.
fn tail_slope_and_level(losses: &[f64], constant: f64, exponent: f64) -> (f64, f64) {
    let t_end = losses.len() - 1;
    let ts: Vec<usize> = (0..=200)
        .map(|i| ((t_end as f64 / 10.0) * 10f64.powf(i as f64 / 200.0)).round() as usize)
        .collect();
    let x: Vec<f64> = ts.iter().map(|t| (*t as f64).ln()).collect();
    let y: Vec<f64> = ts.iter().map(|t| losses[*t].ln()).collect();
    let (slope, _) = line_fit(&x, &y);
    let level = losses[t_end] / (constant * (t_end as f64).powf(exponent));
    (slope, level)
}

fn c6_constants() -> Outcome {
    let sig = PowerLawSpec::new(1.0, 1.5, 1.0, 0.375, 4000);
    let s = build_power_law(&sig).unwrap();
    let p = SgdParams::new(0.1, 0.0, 0.1, 100_000);
    let ctx = GenFuncContext::from_params(&s, &p).with_tail_nu(sig.nu);
    let rep = loss_asymptote(&ctx, &PowerLawFit::from_spec(&sig)).unwrap();
    let traj = run_se(&s, &p).unwrap();
    let (slope_a, level_a) = tail_slope_and_level(&traj.losses, rep.c_signal, -sig.zeta());
    let ok_a = rep.phase == PhaseLabel::SignalDominated && (slope_a + 0.25).abs() <= 0.05 && (level_a - 1.0).abs() <= 0.2;

    let noise = PowerLawSpec::new(1.0, 1.5, 1.0, 3.0, 4000).with_mode(C0Mode::Pointwise);
    let s = build_power_law(&noise).unwrap();
    let p = SgdParams::new(0.15, 0.0, 1.0, 100_000);
    let ctx = GenFuncContext::from_params(&s, &p).with_tail_nu(noise.nu);
    let rep = loss_asymptote(&ctx, &PowerLawFit::from_spec(&noise)).unwrap();
    let traj = run_se(&s, &p).unwrap();
    let (slope_b, level_b) = tail_slope_and_level(&traj.losses, rep.c_noise, 1.0 / noise.nu - 2.0);
    let ok_b = rep.phase == PhaseLabel::NoiseDominated
        && (slope_b + 4.0 / 3.0).abs() <= 0.05
        && (level_b - 1.0).abs() <= 0.2;
    outcome(
        ok_a && ok_b,
        format!("signal slope {slope_a:.4} level {level_a:.3}; noise slope {slope_b:.4} level {level_b:.3}"),
    )
}

fn c7_divergence() -> Outcome {
    let spec = PowerLawSpec::new(1.0, 0.75, 1.0, 0.375, 32_000);
    let s = build_power_law(&spec).unwrap();
    let p0 = SgdParams::new(0.1, 0.0, 1.0, 0);
    let ctx = GenFuncContext::from_params(&s, &p0);
    let div = solve_divergence(&ctx).unwrap();
    let blow = blowup_time(&ctx, &PowerLawFit::from_spec(&spec)).unwrap();
    let steps = (10.0 * div.t_div).ceil() as usize + 1;
    let se = run_se(&s, &p0.with_steps(steps)).unwrap();
    let clean = run_noiseless(&s, &p0.with_steps(steps)).unwrap();
    if se.losses.len() <= steps {
        return outcome(false, "SE run stopped early");
    }
    let lo = (5.0 * div.t_div).round() as usize;
    let hi = (10.0 * div.t_div).round() as usize;
    let x: Vec<f64> = (lo..=hi).map(|t| t as f64).collect();
    let y: Vec<f64> = (lo..=hi).map(|t| se.losses[t].ln()).collect();
    let (rate, icpt) = line_fit(&x, &y);
    let expected = -div.r_l.ln();
    let rate_err = (rate - expected).abs() / expected;
    let cross = (1..=steps).find(|&t| (icpt + rate * t as f64).exp() >= clean.losses[t]).unwrap_or(steps);
    let ratio = cross as f64 / blow.t_blowup;
    outcome(
        rate_err <= 0.05 && (0.5..=2.0).contains(&ratio) && blow.residual <= 1e-10,
        format!("rate error {rate_err:.2e}, crossover/t_blowup {ratio:.3} (t_div {:.1})", div.t_div),
    )
}

fn c8_xi_sign() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    let configs = [(1.5, 3.5), (2.0, 5.0), (1.5, 2.5), (2.0, 3.5), (1.5, 0.375)];
    for &(nu, kappa) in &configs {
        let spec = PowerLawSpec::new(1.0, nu, 1.0, kappa, 1000);
        let s = build_power_law(&spec).unwrap();
        let fit = PowerLawFit::from_spec(&spec);
        let phase = classify_phase(nu, fit.zeta());
        let (alpha, _) = optimal_alpha(&s, phase, nu, fit.zeta()).unwrap();
        let approx = |beta: f64| {
            let ctx = GenFuncContext::new(&s, alpha, beta, 1.0, 1.0).with_tail_nu(nu);
            let rep = loss_asymptote(&ctx, &fit).unwrap();
            match phase {
                PhaseLabel::NoiseDominated => rep.c_noise,
                _ => rep.c_signal,
            }
        };
        let h = 1e-3;
        let deriv = (approx(h) - approx(-h)) / (2.0 * h);
        let xi = xi_criterion(&s, nu, phase).xi;
        let good = if phase == PhaseLabel::NoiseDominated { deriv.signum() == xi.signum() } else { deriv < 0.0 };
        ok &= good;
        lines.push(format!("({nu},{kappa}) Xi={xi:.3e} d={deriv:.3e}"));
    }
    outcome(ok, lines.join("; "))
}

fn c9_noiseless_boundary() -> Outcome {
    let s = Spectrum::from_c0(vec![1.0, 0.6, 0.25, 0.05], vec![1.0, 0.5, 2.0, 1.0], DatasetSize::Infinite).unwrap();
    let alphas: Vec<f64> = (1..=30).map(|i| 4.0 * i as f64 / 30.0).collect();
    let betas: Vec<f64> = (0..30).map(|j| -0.9 + 1.85 * j as f64 / 29.0).collect();
    let da = alphas[1] - alphas[0];
    let mut stray = 0;
    let mut mismatched = 0;
    for &b in &betas {
        for &a in &alphas {
            let p = SgdParams::new(a, b, 0.0, 2000);
            let traj = run_noiseless(&s, &p).unwrap();
            let emp = !traj.diverged() && traj.final_loss() < traj.losses[0];
            let pred = a < 2.0 * (1.0 + b) / s.lambda_max();
            if emp != pred {
                mismatched += 1;
                if (a - 2.0 * (1.0 + b)).abs() > da {
                    stray += 1;
                }
            }
        }
    }
    outcome(stray == 0, format!("{mismatched} boundary-adjacent mismatches, {stray} beyond one grid step"))
}

fn c10_additive_floor() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut worst = 0.0f64;
    for case in 0..5 {
        let m = if case < 2 { 1 } else { 2 + case * 3 };
        let lambdas: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
        let c0: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
        let g: Vec<f64> = (0..m).map(|_| rng.random_range(0.01..1.0)).collect();
        let s = Spectrum::from_c0(lambdas, c0, DatasetSize::Infinite).unwrap();
        let alpha = rng.random_range(0.1..1.5);
        let out = run_additive_noise(&s, &SgdParams::new(alpha, 0.0, 0.0, 10_000), &g).unwrap();
        let analytic = additive_floor_closed_form(&s, alpha, &g);
        worst = worst.max((out.trajectory.final_loss() - analytic).abs() / analytic);
    }
    outcome(worst <= 1e-6, format!("max relative error {worst:.2e}"))
}

fn c11_budget_scaling() -> Outcome {
    let spec = PowerLawSpec::new(1.0, 1.5, 1.0, 0.375, 2000);
    let s = build_power_law(&spec).unwrap();
    let (beta, budget) = (0.99, 320_000usize);
    let mut curves = Vec::new();
    for b in [8usize, 16, 32] {
        let gamma = 1.0 / b as f64;
        let alpha = 0.5 * critical_alpha(&s, beta, gamma, 1.0).unwrap();
        let traj = run_se(&s, &SgdParams::new(alpha, beta, gamma, budget / b)).unwrap();
        if traj.diverged() {
            return outcome(false, format!("b={b} diverged"));
        }
        curves.push((b, traj.losses));
    }
    let mut spread = 0.0f64;
    for i in 0..=50 {
        let x = budget as f64 / 10.0 * 10f64.powf(i as f64 / 50.0);
        let ys: Vec<f64> = curves
            .iter()
            .map(|(b, l)| {
                let t = x / *b as f64;
                let k = (t.floor() as usize).min(l.len() - 2);
                let f = t - k as f64;
                l[k] * (1.0 - f) + l[k + 1] * f
            })
            .collect();
        let (lo, hi) = ys.iter().fold((f64::INFINITY, 0.0f64), |(a, c), y| (a.min(*y), c.max(*y)));
        spread = spread.max(hi / lo - 1.0);
    }
    outcome(spread <= 0.15, format!("max relative spread {:.1}%", 100.0 * spread))
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 11] = [
        ("1 noise covariance oracle", c1_noise_oracle),
        ("2 generating function identity", c2_genfunc_identity),
        ("3 Monte-Carlo vs exact moments", c3_mc_vs_moments),
        ("4 torus SE exactness", c4_torus_exactness),
        ("5 stability boundary", c5_stability_boundary),
        ("6 loss constants", c6_constants),
        ("7 divergence rate and blow-up", c7_divergence),
        ("8 momentum sign criterion", c8_xi_sign),
        ("9 noiseless boundary", c9_noiseless_boundary),
        ("10 additive noise floor", c10_additive_floor),
        ("11 budget scaling", c11_budget_scaling),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let res = check();
        let secs = start.elapsed().as_secs_f64();
        println!("{} criterion {name}: {} ({secs:.1}s)", if res.pass { "PASS" } else { "FAIL" }, res.detail);
        if !res.pass {
            failed += 1;
        }
    }
    println!("{} of 11 criteria passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
