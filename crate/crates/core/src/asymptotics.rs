//! Late-time behavior under power-law spectra: phases, loss constants,
//! characteristic times and learning-rate/momentum recommendations.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::genfunc::{eval_u1, eval_v1, solve_divergence, GenFuncContext};
use crate::json;
use crate::special::{bisect, gamma};
use crate::spectrum::{PowerLawFit, Spectrum};

/// Half-width of the band around `zeta = 2 - 1/nu` labeled as boundary.
pub const BOUNDARY_BAND: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseLabel {
    SignalDominated,
    NoiseDominated,
    Boundary,
    EventualDivergence,
    ImmediateDivergence,
}

impl PhaseLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            PhaseLabel::SignalDominated => "signal_dominated",
            PhaseLabel::NoiseDominated => "noise_dominated",
            PhaseLabel::Boundary => "boundary",
            PhaseLabel::EventualDivergence => "eventual_divergence",
            PhaseLabel::ImmediateDivergence => "immediate_divergence",
        }
    }

    pub fn is_divergent(&self) -> bool {
        matches!(self, PhaseLabel::EventualDivergence | PhaseLabel::ImmediateDivergence)
    }
}

pub fn classify_phase(nu: f64, zeta: f64) -> PhaseLabel {
    if nu <= 0.5 {
        PhaseLabel::ImmediateDivergence
    } else if nu <= 1.0 {
        PhaseLabel::EventualDivergence
    } else {
        let split = 2.0 - 1.0 / nu;
        if (zeta - split).abs() < BOUNDARY_BAND {
            PhaseLabel::Boundary
        } else if zeta < split {
            PhaseLabel::SignalDominated
        } else {
            PhaseLabel::NoiseDominated
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentumAdvice {
    PositiveMomentum,
    NegativeMomentum,
    Neutral,
    NotApplicable,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct XiReport {
    #[serde(serialize_with = "json::f64")]
    pub xi: f64,
    pub recommendation: MomentumAdvice,
}

/// `Xi = nu Tr H Tr HC0 - (nu - 1) Tr H^2 Tr C0` and the momentum direction
/// that lowers the late-time loss at the zero-momentum optimal alpha.
pub fn xi_criterion(spectrum: &Spectrum, nu: f64, phase: PhaseLabel) -> XiReport {
    let xi = nu * spectrum.trace() * spectrum.weighted_trace()
        - (nu - 1.0) * spectrum.trace_sq() * spectrum.trace_c0();
    let recommendation = match phase {
        PhaseLabel::SignalDominated => MomentumAdvice::PositiveMomentum,
        PhaseLabel::NoiseDominated if xi > 0.0 => MomentumAdvice::NegativeMomentum,
        PhaseLabel::NoiseDominated if xi < 0.0 => MomentumAdvice::PositiveMomentum,
        PhaseLabel::NoiseDominated => MomentumAdvice::Neutral,
        _ => MomentumAdvice::NotApplicable,
    };
    XiReport { xi, recommendation }
}

/// `(alpha_opt, alpha_max)` at zero momentum with `tau = gamma = 1`.
pub fn optimal_alpha(spectrum: &Spectrum, phase: PhaseLabel, nu: f64, zeta: f64) -> Result<(f64, f64)> {
    let tr = spectrum.trace();
    let alpha_max = 2.0 / tr;
    let alpha_opt = match phase {
        PhaseLabel::NoiseDominated if nu > 1.0 => 2.0 * (nu - 1.0) / ((3.0 * nu - 1.0) * tr),
        PhaseLabel::SignalDominated => 2.0 * zeta / ((zeta + 1.0) * tr),
        other => {
            return Err(Error::NotApplicable(format!("no optimal alpha formula in phase {}", other.as_str())))
        }
    };
    debug_assert!(alpha_opt < alpha_max);
    Ok((alpha_opt, alpha_max))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AsymptoteReport {
    pub phase: PhaseLabel,
    /// Exponent of the dominant term `L(t) ~ constant t^exponent`.
    #[serde(serialize_with = "json::f64")]
    pub exponent: f64,
    #[serde(serialize_with = "json::f64")]
    pub constant: f64,
    #[serde(serialize_with = "json::f64")]
    pub c_signal: f64,
    #[serde(serialize_with = "json::f64")]
    pub c_noise: f64,
    #[serde(serialize_with = "json::opt_f64")]
    pub t_trans: Option<f64>,
    #[serde(rename = "U1", serialize_with = "json::f64")]
    pub u1: f64,
    #[serde(rename = "V1", serialize_with = "json::f64")]
    pub v1: f64,
    #[serde(serialize_with = "json::f64")]
    pub xi: f64,
    pub recommendation: MomentumAdvice,
    #[serde(serialize_with = "json::f64")]
    pub alpha_opt: f64,
    #[serde(serialize_with = "json::f64")]
    pub alpha_max: f64,
}

impl AsymptoteReport {
    /// Dominant-term approximation of the loss at step `t`.
    pub fn approx_loss(&self, t: f64) -> f64 {
        self.constant * t.powf(self.exponent)
    }
}

/// `C_signal = K Gamma(zeta+1) / (2(1-U1)) (2 alpha Lambda/(1-beta))^-zeta`.
pub fn signal_constant(ctx: &GenFuncContext, fit: &PowerLawFit, u1: f64) -> Result<f64> {
    let z = fit.zeta();
    let scale = 2.0 * ctx.alpha * fit.lambda_scale / (1.0 - ctx.beta);
    Ok(fit.k_scale * gamma(z + 1.0)? / (2.0 * (1.0 - u1)) * scale.powf(-z))
}

/// `C_noise = gamma V1 Gamma(2-1/nu) / (8 nu (1-U1)^2) (2 alpha Lambda/(1-beta))^(1/nu)`.
pub fn noise_constant(ctx: &GenFuncContext, fit: &PowerLawFit, u1: f64, v1: f64) -> Result<f64> {
    let nu = fit.nu;
    let scale = 2.0 * ctx.alpha * fit.lambda_scale / (1.0 - ctx.beta);
    Ok(ctx.gamma * v1 * gamma(2.0 - 1.0 / nu)? / (8.0 * nu * (1.0 - u1).powi(2)) * scale.powf(1.0 / nu))
}

pub fn loss_asymptote(ctx: &GenFuncContext, fit: &PowerLawFit) -> Result<AsymptoteReport> {
    ctx.check()?;
    let zeta = fit.zeta();
    let phase = classify_phase(fit.nu, zeta);
    if phase.is_divergent() {
        return Err(Error::NotConvergent(f64::INFINITY));
    }
    let u1 = eval_u1(ctx);
    if !(u1 < 1.0) {
        return Err(Error::NotConvergent(u1));
    }
    let v1 = eval_v1(ctx);
    let c_signal = signal_constant(ctx, fit, u1)?;
    let c_noise = noise_constant(ctx, fit, u1, v1)?;
    let (exponent, constant) = match phase {
        PhaseLabel::SignalDominated => (-zeta, c_signal),
        PhaseLabel::NoiseDominated => (1.0 / fit.nu - 2.0, c_noise),
        _ => (-zeta, f64::NAN),
    };
    let t_trans = if phase == PhaseLabel::NoiseDominated && c_noise > 0.0 {
        transition_time(c_signal, c_noise, fit.nu, zeta).ok()
    } else {
        None
    };
    let xi = xi_criterion(ctx.spectrum, fit.nu, phase);
    let (alpha_opt, alpha_max) =
        optimal_alpha(ctx.spectrum, phase, fit.nu, zeta).unwrap_or((f64::NAN, 2.0 / ctx.spectrum.trace()));
    Ok(AsymptoteReport {
        phase,
        exponent,
        constant,
        c_signal,
        c_noise,
        t_trans,
        u1,
        v1,
        xi: xi.xi,
        recommendation: xi.recommendation,
        alpha_opt,
        alpha_max,
    })
}

/// `t_trans = (C_signal / C_noise)^(1/(zeta - 2 + 1/nu))`, noise phase only.
pub fn transition_time(c_signal: f64, c_noise: f64, nu: f64, zeta: f64) -> Result<f64> {
    if classify_phase(nu, zeta) != PhaseLabel::NoiseDominated {
        return Err(Error::NotApplicable("transition time needs the noise-dominated phase".into()));
    }
    if !(c_signal > 0.0 && c_noise > 0.0 && c_signal.is_finite() && c_noise.is_finite()) {
        return Err(Error::NotApplicable("constants must be finite and positive".into()));
    }
    Ok((c_signal / c_noise).powf(1.0 / (zeta - 2.0 + 1.0 / nu)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BlowupReport {
    /// Root of `(1/nu - 1)/Gamma(1-zeta) a^-zeta = e^a`.
    pub a_star: f64,
    /// Small-alpha closed form of `1 - r_L`.
    pub epsilon_star: f64,
    /// `1 - r_L` from the generating function.
    pub one_minus_r_l: f64,
    pub t_div: f64,
    /// `a_star t_div`.
    pub t_blowup: f64,
    /// `|(1/nu - 1)/Gamma(1-zeta) a*^-zeta - e^a*|`.
    pub residual: f64,
}

/// Root of the crossover equation for `1/2 < nu < 1`, `zeta < 1`.
pub fn a_star(nu: f64, zeta: f64) -> Result<(f64, f64)> {
    if !(nu > 0.5 && nu < 1.0 && zeta > 0.0 && zeta < 1.0) {
        return Err(Error::NotApplicable(format!("a* needs 1/2 < nu < 1 and 0 < zeta < 1 (nu={nu}, zeta={zeta})")));
    }
    let c = (1.0 / nu - 1.0) / gamma(1.0 - zeta)?;
    let lc = c.ln();
    let h = |a: f64| lc - zeta * a.ln() - a;
    let hi = lc.abs() + 50.0;
    let a = bisect(h, f64::MIN_POSITIVE, hi, 0.0)?;
    Ok((a, (c * a.powf(-zeta) - a.exp()).abs()))
}

/// Blow-up time for zero momentum, `tau = gamma = 1` and `1/2 < nu < 1`, `zeta < 1`.
pub fn blowup_time(ctx: &GenFuncContext, fit: &PowerLawFit) -> Result<BlowupReport> {
    if ctx.beta != 0.0 || ctx.tau != 1.0 || ctx.gamma != 1.0 {
        return Err(Error::NotApplicable("blow-up time needs beta = 0 and tau = gamma = 1".into()));
    }
    let nu = fit.nu;
    let (a_star, residual) = a_star(nu, fit.zeta())?;
    let base = gamma(2.0 - 1.0 / nu)? * gamma(1.0 / nu - 1.0)? / (4.0 * nu);
    let epsilon_star = base.powf(nu / (1.0 - nu)) * (2.0 * ctx.alpha * fit.lambda_scale).powf(1.0 / (1.0 - nu));
    let div = solve_divergence(ctx)?;
    Ok(BlowupReport {
        a_star,
        epsilon_star,
        one_minus_r_l: 1.0 - div.r_l,
        t_div: div.t_div,
        t_blowup: a_star * div.t_div,
        residual,
    })
}
