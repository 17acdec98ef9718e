//! Generating functions of the SE dynamics.
//!
//! With `L~(z) = sum_t L(t) z^t` the loss obeys
//! `L~(z) = V~(z) / (2 (1 - z U~(z)))`, where the noise function `U~` and
//! the signal function `V~` are sums of rational terms over the spectrum.
//! All functions here fix `tau1 = 1` and write `tau = tau2`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::json;
use crate::simulate::{divergence_threshold, meta, LossTrajectory, Regime, SgdParams};
use crate::special::bisect;
use crate::spectrum::Spectrum;

#[derive(Clone, Copy, Debug)]
pub struct GenFuncContext<'a> {
    pub spectrum: &'a Spectrum,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub tau: f64,
    /// Eigenvalue exponent of the untruncated spectrum, when known. A value
    /// `nu <= 1` means `sum_k lambda_k` diverges, so `U~(1)` is infinite
    /// even though every truncated sum is finite.
    pub tail_nu: Option<f64>,
}

impl<'a> GenFuncContext<'a> {
    pub fn new(spectrum: &'a Spectrum, alpha: f64, beta: f64, gamma: f64, tau: f64) -> Self {
        GenFuncContext { spectrum, alpha, beta, gamma, tau, tail_nu: None }
    }

    /// Context for simulator parameters. The noise enters only through
    /// `gamma tau1` and `gamma tau2`, so `(gamma, tau1, tau2)` maps to
    /// `(gamma tau1, tau2 / tau1)`.
    pub fn from_params(spectrum: &'a Spectrum, params: &SgdParams) -> Self {
        let (gamma, tau) = if params.tau1 == 1.0 || params.gamma == 0.0 {
            (params.gamma, params.tau2)
        } else {
            (params.gamma * params.tau1, params.tau2 / params.tau1)
        };
        Self::new(spectrum, params.alpha, params.beta, gamma, tau)
    }

    pub fn with_tail_nu(mut self, nu: f64) -> Self {
        self.tail_nu = Some(nu);
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    /// Upper end of the noiseless window `2(1 + beta)/lambda_max`.
    pub fn alpha_window(&self) -> f64 {
        2.0 * (1.0 + self.beta) / self.spectrum.lambda_max()
    }

    /// Check the analysis assumptions; the error names the first violated one.
    pub fn check(&self) -> Result<()> {
        if !(self.beta > -1.0 && self.beta < 1.0) {
            return Err(Error::Domain(format!("beta = {} is outside (-1, 1)", self.beta)));
        }
        if !(self.alpha > 0.0 && self.alpha < self.alpha_window()) {
            return Err(Error::Domain(format!(
                "alpha = {} is outside (0, 2(1+beta)/lambda_max) = (0, {})",
                self.alpha,
                self.alpha_window()
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Domain(format!("gamma = {} is outside [0, 1]", self.gamma)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Domain(format!("tau = {} is outside (0, 1]", self.tau)));
        }
        Ok(())
    }

    pub fn params(&self, steps: usize) -> SgdParams {
        SgdParams::new(self.alpha, self.beta, self.gamma, steps).with_tau(1.0, self.tau)
    }
}

/// Coefficients `[c0, c1, c2, c3]` of the cubic `S(z)`.
pub fn s_coefficients(alpha: f64, beta: f64, g: f64, lambda: f64) -> [f64; 4] {
    let (a, b, l) = (alpha, beta, lambda);
    let a2l2 = a * a * l * l;
    let c1 = a2l2 * g - a2l2 + 2.0 * a * b * l + 2.0 * a * l - b * b - b - 1.0;
    let c2 = a2l2 * b * g + a2l2 * b - 2.0 * a * b * b * l - 2.0 * a * b * l + b * b * b + b * b + b;
    [1.0, c1, c2, -b * b * b]
}

/// Denominator polynomial `S(alpha, beta, g, lambda, z)`; pass `g = tau gamma`.
pub fn eval_s(alpha: f64, beta: f64, g: f64, lambda: f64, z: f64) -> f64 {
    let c = s_coefficients(alpha, beta, g, lambda);
    c[0] + z * (c[1] + z * (c[2] + z * c[3]))
}

fn eval_s_prime(c: &[f64; 4], z: f64) -> f64 {
    c[1] + z * (2.0 * c[2] + z * 3.0 * c[3])
}

/// `U~(z)`, `V~(z)` and their derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct UvValues {
    pub u: f64,
    pub v: f64,
    pub du: f64,
    pub dv: f64,
}

fn uv_unchecked(ctx: &GenFuncContext, z: f64) -> UvValues {
    let (a, b) = (ctx.alpha, ctx.beta);
    let g = ctx.tau * ctx.gamma;
    let mut out = UvValues { u: 0.0, v: 0.0, du: 0.0, dv: 0.0 };
    for (&l, &lc) in ctx.spectrum.lambdas().iter().zip(ctx.spectrum.lambda_c()) {
        let c = s_coefficients(a, b, g, l);
        let s = c[0] + z * (c[1] + z * (c[2] + z * c[3]));
        let ds = eval_s_prime(&c, z);
        let nu_k = ctx.gamma * a * a * l * l;
        let un = nu_k * (b * z + 1.0);
        let dun = nu_k * b;
        let vn = lc * (2.0 * a * b * l * z + b * b * b * z * z - b * b * z - b * z + 1.0);
        let dvn = lc * (2.0 * a * b * l + 2.0 * b * b * b * z - b * b - b);
        out.u += un / s;
        out.v += vn / s;
        out.du += (dun * s - un * ds) / (s * s);
        out.dv += (dvn * s - vn * ds) / (s * s);
    }
    out
}

/// Termwise evaluation on `z` in `[0, 1)`.
pub fn eval_uv(ctx: &GenFuncContext, z: f64) -> Result<UvValues> {
    ctx.check()?;
    if !(0.0..1.0).contains(&z) {
        return Err(Error::Domain(format!("z = {z} is outside [0, 1)")));
    }
    Ok(uv_unchecked(ctx, z))
}

/// `U~(1) = sum_k lambda_k / (lambda_k (tau - (1-beta)/(gamma(1+beta))) + 2(1-beta)/(alpha gamma))`.
///
/// Evaluated in the equivalent form with `gamma` in the numerator, so
/// `gamma = 0` gives 0 without special casing.
pub fn eval_u1(ctx: &GenFuncContext) -> f64 {
    let (a, b) = (ctx.alpha, ctx.beta);
    let g = ctx.tau * ctx.gamma;
    ctx.spectrum
        .lambdas()
        .iter()
        .map(|&l| ctx.gamma * a * l * (1.0 + b) / (a * l * (b * g + b + g - 1.0) + 2.0 * (1.0 - b * b)))
        .sum()
}

/// `V~(1)`, finite inside the noiseless window.
pub fn eval_v1(ctx: &GenFuncContext) -> f64 {
    let (a, b) = (ctx.alpha, ctx.beta);
    let g = ctx.tau * ctx.gamma;
    ctx.spectrum
        .lambdas()
        .iter()
        .zip(ctx.spectrum.lambda_c())
        .map(|(&l, &lc)| lc * (2.0 * a * b * l + (1.0 - b) * (1.0 - b * b)) / eval_s(a, b, g, l, 1.0))
        .sum()
}

/// Root of `sum_k lambda_k / (tau lambda_k + x) = 1`.
pub fn solve_lambda_crit(spectrum: &Spectrum, tau: f64) -> Result<f64> {
    let lam = spectrum.lambdas();
    if tau == 0.0 {
        return Ok(spectrum.trace());
    }
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("tau = {tau} must be non-negative")));
    }
    let at_zero = lam.len() as f64 / tau;
    if at_zero == 1.0 {
        return Ok(0.0);
    }
    if at_zero < 1.0 {
        return Err(Error::NoRoot(format!("sum at x -> 0 is M/tau = {at_zero} < 1")));
    }
    let f = |x: f64| lam.iter().map(|l| l / (tau * l + x)).sum::<f64>() - 1.0;
    bisect(f, 0.0, spectrum.trace(), 1e-12 * spectrum.lambda_max())
}

/// Largest alpha with `U~(1) <= 1` inside the noiseless window (at fixed beta, gamma, tau).
pub fn critical_alpha(spectrum: &Spectrum, beta: f64, gamma: f64, tau: f64) -> Result<f64> {
    let probe = GenFuncContext::new(spectrum, 1.0, beta, gamma, tau);
    let window = probe.alpha_window();
    if !(beta > -1.0 && beta < 1.0) {
        return Err(Error::Domain(format!("beta = {beta} is outside (-1, 1)")));
    }
    if gamma == 0.0 || eval_u1(&probe.with_alpha(window)) <= 1.0 {
        return Ok(window);
    }
    bisect(|a| eval_u1(&probe.with_alpha(a)) - 1.0, 0.0, window, 1e-14 * window)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RegimeFlags {
    /// `sum lambda^2 = inf` in the untruncated spectrum (nu <= 1/2).
    pub immediate_divergence: bool,
    /// `sum lambda = inf` in the untruncated spectrum (1/2 < nu <= 1).
    pub eventual_divergence: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    #[serde(rename = "U1", serialize_with = "json::f64")]
    pub u1: f64,
    pub converges: bool,
    #[serde(serialize_with = "json::f64")]
    pub lambda_crit: f64,
    #[serde(serialize_with = "json::f64")]
    pub alpha_eff: f64,
    /// `2 / (gamma lambda_crit)`.
    #[serde(serialize_with = "json::f64")]
    pub alpha_eff_bound: f64,
    /// Critical effective learning rate at the given beta, gamma, tau.
    #[serde(serialize_with = "json::f64")]
    pub alpha_eff_critical: f64,
    /// Bound on `x_c / lambda_crit - 1`: `(lambda_max/lambda_crit)(1-beta)/(gamma(1+beta))`.
    #[serde(serialize_with = "json::f64")]
    pub tightness_bound: f64,
    pub regime_flags: RegimeFlags,
    /// Reason the context lies outside the analysis domain, if it does.
    pub domain: Option<String>,
}

pub fn stability_report(ctx: &GenFuncContext) -> StabilityReport {
    let flags = RegimeFlags {
        immediate_divergence: ctx.tail_nu.is_some_and(|nu| nu <= 0.5),
        eventual_divergence: ctx.tail_nu.is_some_and(|nu| nu > 0.5 && nu <= 1.0),
    };
    let domain = ctx.check().err().map(|e| e.to_string());
    let u1 = if flags.immediate_divergence || flags.eventual_divergence {
        f64::INFINITY
    } else if domain.is_some() && !(ctx.beta > -1.0 && ctx.beta < 1.0) {
        f64::NAN
    } else {
        eval_u1(ctx)
    };
    let lambda_crit = solve_lambda_crit(ctx.spectrum, ctx.tau).unwrap_or(f64::NAN);
    let alpha_eff = ctx.alpha / (1.0 - ctx.beta);
    let alpha_eff_bound = 2.0 / (ctx.gamma * lambda_crit);
    let alpha_eff_critical = critical_alpha(ctx.spectrum, ctx.beta, ctx.gamma, ctx.tau)
        .map(|a| a / (1.0 - ctx.beta))
        .unwrap_or(f64::NAN);
    let tightness_bound =
        ctx.spectrum.lambda_max() / lambda_crit * (1.0 - ctx.beta) / (ctx.gamma * (1.0 + ctx.beta));
    let converges = domain.is_none() && u1 < 1.0;
    StabilityReport {
        u1,
        converges,
        lambda_crit,
        alpha_eff,
        alpha_eff_bound,
        alpha_eff_critical,
        tightness_bound,
        regime_flags: flags,
        domain,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DivergenceReport {
    /// Convergence radius of the loss generating function.
    pub r_l: f64,
    /// `-1 / ln r_L`.
    pub t_div: f64,
    /// Amplitude of the asymptote `L(t) ~ prefactor r_L^-t`.
    pub prefactor: f64,
    /// `|r_L U~(r_L) - 1|`.
    pub residual: f64,
}

pub fn solve_divergence(ctx: &GenFuncContext) -> Result<DivergenceReport> {
    ctx.check()?;
    let u1 = eval_u1(ctx);
    if !(u1 > 1.0) {
        return Err(Error::NotDivergent(u1));
    }
    let h = |r: f64| if r >= 1.0 { u1 - 1.0 } else { r * uv_unchecked(ctx, r).u - 1.0 };
    let r = bisect(h, 0.0, 1.0, 0.0)?;
    let uv = uv_unchecked(ctx, r);
    let prefactor = uv.v / (2.0 * (1.0 + r * r * uv.du));
    Ok(DivergenceReport { r_l: r, t_div: -1.0 / r.ln(), prefactor, residual: (r * uv.u - 1.0).abs() })
}

/// Taylor coefficients: `u[t-1] = U_t`, `v[t-1] = V_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct UvSequences {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// First `t` coefficients of `U~` and `V~` by iterating the per-mode operator.
pub fn compute_uv_sequences(ctx: &GenFuncContext, t: usize) -> UvSequences {
    let (a, b) = (ctx.alpha, ctx.beta);
    let lam = ctx.spectrum.lambdas();
    let m = lam.len();
    // Per mode: (c, j, v) for the noise seed and for the signal seed.
    let mut un: Vec<[f64; 3]> = lam.iter().map(|l| [ctx.gamma * a * a * l * l; 3]).collect();
    let mut sg: Vec<[f64; 3]> = ctx.spectrum.lambda_c().iter().map(|&lc| [lc, 0.0, 0.0]).collect();
    let mut u = Vec::with_capacity(t);
    let mut v = Vec::with_capacity(t);
    let step = |s: &mut [f64; 3], l: f64| {
        let p = 1.0 - a * l;
        let q = -a * l;
        let [c, j, w] = *s;
        let self_noise = ctx.tau * ctx.gamma * a * a * l * l * c;
        let bw = b * b * w;
        s[0] = p * p * c + 2.0 * p * b * j + bw - self_noise;
        s[1] = p * q * c + (p + q) * b * j + bw - self_noise;
        s[2] = q * q * c + 2.0 * q * b * j + bw - self_noise;
    };
    for _ in 0..t {
        u.push(un.iter().map(|s| s[0]).sum());
        v.push(sg.iter().map(|s| s[0]).sum());
        for k in 0..m {
            step(&mut un[k], lam[k]);
            step(&mut sg[k], lam[k]);
        }
    }
    UvSequences { u, v }
}

/// Loss from the renewal identity `L(T) = V_{T+1}/2 + sum_{t=1..T} U_{T+1-t} L(t-1)`.
pub fn reconstruct_loss(ctx: &GenFuncContext, steps: usize) -> LossTrajectory {
    let seq = compute_uv_sequences(ctx, steps + 1);
    let mut losses: Vec<f64> = Vec::with_capacity(steps + 1);
    let mut diverged_at = None;
    let mut thr = f64::INFINITY;
    for big_t in 0..=steps {
        let mut l = 0.5 * seq.v[big_t];
        for t in 1..=big_t {
            l += seq.u[big_t - t] * losses[t - 1];
        }
        losses.push(l);
        if big_t == 0 {
            thr = divergence_threshold(l);
        } else if !(l <= thr) {
            diverged_at = Some(big_t);
            break;
        }
    }
    LossTrajectory { losses, stderr: None, diverged_at, metadata: meta(Regime::Reconstructed, &ctx.params(steps)) }
}
