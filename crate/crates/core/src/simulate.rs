//! Loss trajectories of heavy-ball mini-batch SGD at several fidelity levels.
//!
//! Every path tracks second moments of the deviation `dw = w - w*` and the
//! momentum `v`, stepping `v' = beta v - alpha grad`, `dw' = dw + v'`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::{FeatureProblem, Spectrum};

/// Divergence is declared once the loss exceeds this multiple of L(0).
pub const DIVERGENCE_FACTOR: f64 = 1e12;
/// Absolute divergence threshold when L(0) = 0.
pub const DIVERGENCE_ABS: f64 = 1e300;
/// Largest dimension accepted by the dense second-moment simulator.
pub const DENSE_LIMIT: usize = 256;
/// Monte-Carlo runs per work unit; fixes the summation order.
pub const MC_CHUNK: usize = 64;
/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "SGDPHASELAB_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub steps: usize,
    /// Batch size; only the Monte-Carlo path samples batches.
    pub batch: Option<usize>,
}

impl SgdParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64, steps: usize) -> Self {
        SgdParams { alpha, beta, gamma, tau1: 1.0, tau2: 1.0, steps, batch: None }
    }

    pub fn with_tau(mut self, tau1: f64, tau2: f64) -> Self {
        self.tau1 = tau1;
        self.tau2 = tau2;
        self
    }

    pub fn with_batch(mut self, b: usize) -> Self {
        self.batch = Some(b);
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn alpha_eff(&self) -> f64 {
        self.alpha / (1.0 - self.beta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParams(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.beta > -1.0 && self.beta < 1.0) {
            return Err(Error::InvalidParams(format!("beta must lie in (-1, 1), got {}", self.beta)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidParams(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if !self.tau1.is_finite() || !self.tau2.is_finite() {
            return Err(Error::InvalidParams("tau1 and tau2 must be finite".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidParams("steps must be positive".into()));
        }
        if self.batch == Some(0) {
            return Err(Error::InvalidParams("batch must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Se,
    Noiseless,
    FullMoments,
    MonteCarlo,
    AdditiveNoise,
    Reconstructed,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Se => "se",
            Regime::Noiseless => "noiseless",
            Regime::FullMoments => "full-moments",
            Regime::MonteCarlo => "monte-carlo",
            Regime::AdditiveNoise => "additive-noise",
            Regime::Reconstructed => "reconstructed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryMeta {
    pub regime: Regime,
    pub params: SgdParams,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    /// Some diagonal second moment went negative (possible under the SE recursion).
    pub negative_moments: bool,
}

/// Losses L(0..=T); truncated at `diverged_at` when the run blew up.
#[derive(Clone, Debug, PartialEq)]
pub struct LossTrajectory {
    pub losses: Vec<f64>,
    /// Per-step standard error of the mean, Monte-Carlo only.
    pub stderr: Option<Vec<f64>>,
    pub diverged_at: Option<usize>,
    pub metadata: TrajectoryMeta,
}

impl LossTrajectory {
    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("trajectories hold L(0)")
    }

    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

pub(crate) fn divergence_threshold(l0: f64) -> f64 {
    if l0 > 0.0 {
        DIVERGENCE_FACTOR * l0
    } else {
        DIVERGENCE_ABS
    }
}

pub(crate) fn meta(regime: Regime, params: &SgdParams) -> TrajectoryMeta {
    TrajectoryMeta { regime, params: *params, runs: None, seed: None, negative_moments: false }
}

/// SE recursion on per-mode 2x2 blocks, stored in output space (scaled by lambda_k).
pub fn run_se(spectrum: &Spectrum, params: &SgdParams) -> Result<LossTrajectory> {
    params.validate()?;
    Ok(se_trajectory(spectrum, params, Regime::Se))
}

fn se_trajectory(spectrum: &Spectrum, params: &SgdParams, regime: Regime) -> LossTrajectory {
    let (a, b, g) = (params.alpha, params.beta, params.gamma);
    let lam = spectrum.lambdas();
    let m = lam.len();
    let mut c = spectrum.lambda_c().to_vec();
    let mut j = vec![0.0; m];
    let mut v = vec![0.0; m];
    let noise: Vec<f64> = lam.iter().map(|l| g * a * a * l * l).collect();
    let mut total: f64 = c.iter().sum();
    let l0 = 0.5 * total;
    let thr = divergence_threshold(l0);
    let mut losses = Vec::with_capacity(params.steps + 1);
    losses.push(l0);
    let mut out = meta(regime, params);
    let mut diverged_at = None;
    for t in 1..=params.steps {
        let mut next_total = 0.0;
        let mut negative = false;
        for k in 0..m {
            let p = 1.0 - a * lam[k];
            let q = -a * lam[k];
            let nz = noise[k] * (params.tau1 * total - params.tau2 * c[k]);
            let (ck, jk, vk) = (c[k], j[k], v[k]);
            let bv = b * b * vk;
            c[k] = p * p * ck + 2.0 * p * b * jk + bv + nz;
            j[k] = p * q * ck + (p + q) * b * jk + bv + nz;
            v[k] = q * q * ck + 2.0 * q * b * jk + bv + nz;
            negative |= c[k] < 0.0;
            next_total += c[k];
        }
        out.negative_moments |= negative;
        total = next_total;
        let loss = 0.5 * total;
        losses.push(loss);
        if !(loss <= thr) {
            diverged_at = Some(t);
            break;
        }
    }
    LossTrajectory { losses, stderr: None, diverged_at, metadata: out }
}

/// Full-batch dynamics: the SE recursion with gamma forced to zero.
pub fn run_noiseless(spectrum: &Spectrum, params: &SgdParams) -> Result<LossTrajectory> {
    let p = params.with_gamma(0.0);
    p.validate()?;
    Ok(se_trajectory(spectrum, &p, Regime::Noiseless))
}

/// Noiseless convergence window: `|beta| < 1` and `alpha < 2(1 + beta)/lambda_max`.
pub fn noiseless_converges(alpha: f64, beta: f64, lambda_max: f64) -> bool {
    beta > -1.0 && beta < 1.0 && alpha > 0.0 && alpha < 2.0 * (1.0 + beta) / lambda_max
}

/// Noise term used by the dense simulator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseModel {
    /// Exact sampling-noise covariance of the finite dataset.
    Exact,
    /// `tau1 H Tr(HC) - tau2 HCH` with the taus from [`SgdParams`].
    Spectral,
}

/// Exact noise covariance
/// `Sigma(C) = (1/N) sum_i <psi_i, C psi_i> psi_i psi_i^T - HCH`.
pub fn exact_noise_covariance(problem: &FeatureProblem, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = problem.d();
    if c.shape() != (d, d) {
        return Err(Error::InvalidParams(format!("C is {:?}, expected ({d}, {d})", c.shape())));
    }
    let h = problem.hessian();
    Ok(exact_sigma(problem.features(), &h, c))
}

fn exact_sigma(psi: &DMatrix<f64>, h: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = psi.ncols();
    let cpsi = c * psi;
    let mut weighted = psi.clone();
    for i in 0..n {
        let q = psi.column(i).dot(&cpsi.column(i)) / n as f64;
        weighted.column_mut(i).scale_mut(q);
    }
    let s = &weighted * psi.transpose() - h * c * h;
    (&s + s.transpose()) * 0.5
}

fn spectral_sigma(h: &DMatrix<f64>, c: &DMatrix<f64>, tau1: f64, tau2: f64) -> DMatrix<f64> {
    let hc = h * c;
    let s = h * (tau1 * hc.trace()) - (&hc * h) * tau2;
    (&s + s.transpose()) * 0.5
}

/// SE diagonal `tau1 lambda_k sum_l lambda_l C_ll - tau2 lambda_k^2 C_kk`.
pub fn se_noise_diagonal(lambdas: &[f64], c_diag: &[f64], tau1: f64, tau2: f64) -> Vec<f64> {
    let tr: f64 = lambdas.iter().zip(c_diag).map(|(l, c)| l * c).sum();
    lambdas
        .iter()
        .zip(c_diag)
        .map(|(l, c)| tau1 * l * tr - tau2 * l * l * c)
        .collect()
}

/// Dense recursion on the full (C, J, V) matrices.
pub fn run_full_moments(
    problem: &FeatureProblem,
    params: &SgdParams,
    noise: NoiseModel,
) -> Result<LossTrajectory> {
    params.validate()?;
    let d = problem.d();
    if d > DENSE_LIMIT {
        return Err(Error::Resource { dim: d, limit: DENSE_LIMIT });
    }
    let (a, b, g) = (params.alpha, params.beta, params.gamma);
    let h = problem.hessian();
    let p = DMatrix::identity(d, d) - &h * a;
    let q = &h * (-a);
    let mut c = problem.initial_moment();
    let mut j = DMatrix::zeros(d, d);
    let mut v = DMatrix::zeros(d, d);
    let loss = |c: &DMatrix<f64>| 0.5 * h.component_mul(c).sum();
    let l0 = loss(&c);
    let thr = divergence_threshold(l0);
    let mut losses = vec![l0];
    let mut diverged_at = None;
    let mut out = meta(Regime::FullMoments, params);
    for t in 1..=params.steps {
        let sigma = match noise {
            NoiseModel::Exact => exact_sigma(problem.features(), &h, &c),
            NoiseModel::Spectral => spectral_sigma(&h, &c, params.tau1, params.tau2),
        } * (g * a * a);
        let jt = j.transpose();
        let bv = &v * (b * b);
        let pc = &p * &c;
        let qc = &q * &c;
        let c_new = &pc * &p + (&p * &j + &jt * &p) * b + &bv + &sigma;
        let j_new = &pc * &q + (&p * &j + &jt * &q) * b + &bv + &sigma;
        let v_new = &qc * &q + (&q * &j + &jt * &q) * b + &bv + &sigma;
        c = (&c_new + c_new.transpose()) * 0.5;
        v = (&v_new + v_new.transpose()) * 0.5;
        j = j_new;
        out.negative_moments |= c.diagonal().iter().any(|x| *x < 0.0);
        let l = loss(&c);
        losses.push(l);
        if !(l <= thr) {
            diverged_at = Some(t);
            break;
        }
    }
    Ok(LossTrajectory { losses, stderr: None, diverged_at, metadata: out })
}

/// Monte-Carlo settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct McOptions {
    pub runs: usize,
    pub seed: u64,
    /// Worker threads; `None` uses all cores. Capped by `SGDPHASELAB_THREADS`.
    pub threads: Option<usize>,
}

/// Thread pool honoring the requested size and the environment cap.
pub fn thread_pool(requested: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut n = requested
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .max(1);
    if let Some(cap) = std::env::var(THREADS_ENV).ok().and_then(|s| s.trim().parse::<usize>().ok()) {
        n = n.min(cap.max(1));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))
}

/// Mean population loss over independent stochastic runs.
///
/// Run r draws from ChaCha8 seeded with `seed` on stream r, so results do
/// not depend on the thread count. `params.gamma` is unused: noise comes
/// from the sampled batches of size `params.batch`.
pub fn run_mc(problem: &FeatureProblem, params: &SgdParams, opts: &McOptions) -> Result<LossTrajectory> {
    params.validate()?;
    let n = problem.n();
    let b = params.batch.ok_or_else(|| Error::InvalidParams("Monte-Carlo needs a batch size".into()))?;
    if b > n {
        return Err(Error::InvalidBatch { batch: b, dataset: n.to_string() });
    }
    if opts.runs == 0 {
        return Err(Error::InvalidParams("runs must be positive".into()));
    }
    let steps = params.steps;
    let h = problem.hessian();
    let chunks: Vec<(usize, usize)> = (0..opts.runs)
        .step_by(MC_CHUNK)
        .map(|s| (s, (s + MC_CHUNK).min(opts.runs)))
        .collect();
    let pool = thread_pool(opts.threads)?;
    // Welford per chunk, merged in chunk order so the result is thread-independent.
    let partial: Vec<(f64, Vec<f64>, Vec<f64>)> = pool.install(|| {
        chunks
            .par_iter()
            .map(|&(lo, hi)| {
                let mut mean = vec![0.0; steps + 1];
                let mut m2 = vec![0.0; steps + 1];
                for (i, run) in (lo..hi).enumerate() {
                    let k = (i + 1) as f64;
                    let traj = mc_single(problem, &h, params, b, opts.seed, run as u64);
                    for (t, l) in traj.into_iter().enumerate() {
                        let d = l - mean[t];
                        mean[t] += d / k;
                        m2[t] += d * (l - mean[t]);
                    }
                }
                ((hi - lo) as f64, mean, m2)
            })
            .collect()
    });
    let mut count = 0.0;
    let mut mean = vec![0.0; steps + 1];
    let mut m2 = vec![0.0; steps + 1];
    for (nb, mb, qb) in &partial {
        let total = count + nb;
        for t in 0..=steps {
            let d = mb[t] - mean[t];
            mean[t] += d * nb / total;
            m2[t] += qb[t] + d * d * count * nb / total;
        }
        count = total;
    }
    let mut losses = mean;
    let mut stderr: Vec<f64> = m2
        .iter()
        .map(|q| if opts.runs < 2 { 0.0 } else { (q.max(0.0) / (count - 1.0) / count).sqrt() })
        .collect();
    let thr = divergence_threshold(losses[0]);
    let diverged_at = losses.iter().position(|l| !(*l <= thr));
    if let Some(t) = diverged_at {
        losses.truncate(t + 1);
        stderr.truncate(t + 1);
    }
    let mut md = meta(Regime::MonteCarlo, params);
    md.runs = Some(opts.runs);
    md.seed = Some(opts.seed);
    Ok(LossTrajectory { losses, stderr: Some(stderr), diverged_at, metadata: md })
}

fn mc_single(problem: &FeatureProblem, h: &DMatrix<f64>, params: &SgdParams, b: usize, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let psi = problem.features();
    let n = problem.n();
    let d = problem.d();
    let mut dw = problem.delta();
    let mut v = DVector::zeros(d);
    let mut grad = DVector::zeros(d);
    let loss = |x: &DVector<f64>| 0.5 * (h * x).dot(x);
    let mut out = Vec::with_capacity(params.steps + 1);
    out.push(loss(&dw));
    for _ in 0..params.steps {
        grad.fill(0.0);
        let mut batch = rand::seq::index::sample(&mut rng, n, b).into_vec();
        batch.sort_unstable();
        for i in batch {
            let col = psi.column(i);
            grad.axpy(col.dot(&dw) / b as f64, &col, 1.0);
        }
        v.scale_mut(params.beta);
        v.axpy(-params.alpha, &grad, 1.0);
        dw += &v;
        out.push(loss(&dw));
    }
    out
}

/// E2 distance between exact noise and its SE surrogate, as a quadratic form in (tau1, tau2).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeFitReport {
    pub tau1: f64,
    pub tau2: f64,
    /// E2 at (tau1, tau2).
    pub e2: f64,
    /// E2(t) = 1 + 2 lin . t + t^T quad t.
    pub quad: [[f64; 2]; 2],
    pub lin: [f64; 2],
    /// Minimizer of E2 over tau2 with tau1 = 1.
    pub tau2_star: f64,
    pub e2_star: f64,
}

impl SeFitReport {
    pub fn eval(&self, tau1: f64, tau2: f64) -> f64 {
        let t = [tau1, tau2];
        let mut e = 1.0 + 2.0 * (self.lin[0] * t[0] + self.lin[1] * t[1]);
        for i in 0..2 {
            for k in 0..2 {
                e += t[i] * self.quad[i][k] * t[k];
            }
        }
        e
    }
}

pub fn se_fit_error(problem: &FeatureProblem, c: &DMatrix<f64>, tau1: f64, tau2: f64) -> Result<SeFitReport> {
    let sigma = exact_noise_covariance(problem, c)?;
    let h = problem.hessian();
    let a = &h * (&h * c).trace();
    let bm = &h * c * &h;
    let ss = sigma.norm_squared();
    if !(ss > 0.0) {
        return Err(Error::Undefined("exact noise covariance is zero".into()));
    }
    let dot = |x: &DMatrix<f64>, y: &DMatrix<f64>| x.component_mul(y).sum();
    let ab = dot(&a, &bm);
    let quad = [[a.norm_squared() / ss, -ab / ss], [-ab / ss, bm.norm_squared() / ss]];
    let lin = [-dot(&sigma, &a) / ss, dot(&sigma, &bm) / ss];
    let direct = (&sigma - &a * tau1 + &bm * tau2).norm_squared() / ss;
    let tau2_star = -(lin[1] + quad[1][0]) / quad[1][1];
    let mut rep = SeFitReport { tau1, tau2, e2: direct, quad, lin, tau2_star, e2_star: f64::NAN };
    rep.e2_star = rep.eval(1.0, tau2_star);
    Ok(rep)
}

/// Trajectory under additive noise of per-mode covariance `g_diag` and its stationary loss.
#[derive(Clone, Debug, PartialEq)]
pub struct AdditiveNoiseOutcome {
    pub trajectory: LossTrajectory,
    /// Stationary per-mode C_kk.
    pub stationary_c: Vec<f64>,
    /// Stationary loss `1/2 sum_k lambda_k C_kk`.
    pub floor: f64,
}

/// Closed-form stationary loss at zero momentum: `1/2 sum_k alpha G_kk / (2 - alpha lambda_k)`.
pub fn additive_floor_closed_form(spectrum: &Spectrum, alpha: f64, g_diag: &[f64]) -> f64 {
    0.5 * spectrum
        .lambdas()
        .iter()
        .zip(g_diag)
        .map(|(l, g)| alpha * g / (2.0 - alpha * l))
        .sum::<f64>()
}

pub fn run_additive_noise(spectrum: &Spectrum, params: &SgdParams, g_diag: &[f64]) -> Result<AdditiveNoiseOutcome> {
    params.validate()?;
    if g_diag.len() != spectrum.len() {
        return Err(Error::InvalidParams(format!("{} noise entries for {} modes", g_diag.len(), spectrum.len())));
    }
    if g_diag.iter().any(|g| !(*g >= 0.0)) {
        return Err(Error::InvalidParams("noise covariance diagonal must be non-negative".into()));
    }
    let (a, b) = (params.alpha, params.beta);
    if !noiseless_converges(a, b, spectrum.lambda_max()) {
        return Err(Error::NoStationaryState(format!(
            "alpha = {a} is outside the noiseless window 2(1+beta)/lambda_max = {}",
            2.0 * (1.0 + b) / spectrum.lambda_max()
        )));
    }
    let lam = spectrum.lambdas();
    let m = lam.len();
    let mut stationary_c = Vec::with_capacity(m);
    for k in 0..m {
        let p = 1.0 - a * lam[k];
        let q = -a * lam[k];
        let map = Matrix3::new(
            p * p, 2.0 * p * b, b * b,
            p * q, (p + q) * b, b * b,
            q * q, 2.0 * q * b, b * b,
        );
        let rhs = Vector3::repeat(a * a * g_diag[k]);
        let x = (Matrix3::identity() - map)
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::NoStationaryState(format!("singular stationary system at mode {}", k + 1)))?;
        stationary_c.push(x[0]);
    }
    let floor = 0.5 * lam.iter().zip(&stationary_c).map(|(l, c)| l * c).sum::<f64>();

    let mut c = spectrum.c0().to_vec();
    let mut j = vec![0.0; m];
    let mut v = vec![0.0; m];
    let l0 = spectrum.initial_loss();
    let thr = divergence_threshold(l0);
    let mut losses = vec![l0];
    let mut diverged_at = None;
    for t in 1..=params.steps {
        let mut loss = 0.0;
        for k in 0..m {
            let p = 1.0 - a * lam[k];
            let q = -a * lam[k];
            let nz = a * a * g_diag[k];
            let (ck, jk, vk) = (c[k], j[k], v[k]);
            let bv = b * b * vk;
            c[k] = p * p * ck + 2.0 * p * b * jk + bv + nz;
            j[k] = p * q * ck + (p + q) * b * jk + bv + nz;
            v[k] = q * q * ck + 2.0 * q * b * jk + bv + nz;
            loss += lam[k] * c[k];
        }
        let loss = 0.5 * loss;
        losses.push(loss);
        if !(loss <= thr) {
            diverged_at = Some(t);
            break;
        }
    }
    let trajectory = LossTrajectory { losses, stderr: None, diverged_at, metadata: meta(Regime::AdditiveNoise, params) };
    Ok(AdditiveNoiseOutcome { trajectory, stationary_c, floor })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::DatasetSize;

    fn single(l: f64, c: f64) -> Spectrum {
        Spectrum::from_c0(vec![l], vec![c], DatasetSize::Infinite).unwrap()
    }

    #[test]
    fn se_one_step_hand_value() {
        let p = SgdParams::new(0.5, 0.0, 1.0, 1);
        let t = run_se(&single(1.0, 1.0), &p).unwrap();
        assert_eq!(t.losses[0], 0.5);
        assert!((t.losses[1] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn gamma_zero_matches_noiseless_exactly() {
        let s = Spectrum::from_c0(vec![1.0, 0.3, 0.01], vec![0.2, 1.0, 4.0], DatasetSize::Infinite).unwrap();
        let p = SgdParams::new(0.7, 0.4, 0.0, 200);
        assert_eq!(run_se(&s, &p).unwrap().losses, run_noiseless(&s, &p).unwrap().losses);
    }

    #[test]
    fn noiseless_window() {
        let s = single(1.0, 1.0);
        for beta in [-0.5, 0.0, 0.6] {
            let a = 2.0 * (1.0 + beta) + 0.01;
            let t = run_noiseless(&s, &SgdParams::new(a, beta, 0.0, 100_000)).unwrap();
            assert!(t.diverged(), "beta={beta}");
        }
        let t = run_noiseless(&s, &SgdParams::new(1.9, 0.0, 0.0, 10_000)).unwrap();
        assert!(t.final_loss() < 1e-8 * t.losses[0]);
        let z = run_noiseless(&single(1.0, 0.0), &SgdParams::new(0.5, 0.3, 0.0, 50)).unwrap();
        assert!(z.losses.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn params_validation() {
        assert!(SgdParams::new(0.5, 1.5, 0.1, 10).validate().is_err());
        assert!(SgdParams::new(-0.5, 0.0, 0.1, 10).validate().is_err());
        assert!(SgdParams::new(0.5, 0.0, 1.1, 10).validate().is_err());
        assert!(SgdParams::new(0.5, 0.0, 0.1, 0).validate().is_err());
    }

    #[test]
    fn additive_hand_value() {
        let s = single(1.0, 1.0);
        let out = run_additive_noise(&s, &SgdParams::new(1.0, 0.0, 0.0, 10), &[1.0]).unwrap();
        assert!((out.stationary_c[0] - 1.0).abs() < 1e-15);
        assert!((out.floor - 0.5).abs() < 1e-15);
        assert!(run_additive_noise(&s, &SgdParams::new(2.0, 0.0, 0.0, 10), &[1.0]).is_err());
    }

    #[test]
    fn additive_without_noise_is_noiseless() {
        let s = Spectrum::from_c0(vec![1.0, 0.2], vec![1.0, 3.0], DatasetSize::Infinite).unwrap();
        let p = SgdParams::new(0.8, 0.0, 0.0, 100);
        let a = run_additive_noise(&s, &p, &[0.0, 0.0]).unwrap();
        let n = run_noiseless(&s, &p).unwrap();
        for (x, y) in a.trajectory.losses.iter().zip(&n.losses) {
            assert!((x - y).abs() <= 1e-14 * y.abs().max(1e-300));
        }
    }

    #[test]
    fn se_diagonal_cases() {
        assert_eq!(se_noise_diagonal(&[1.0, 0.5], &[0.0, 0.0], 1.0, 1.0), vec![0.0, 0.0]);
        assert!(se_noise_diagonal(&[0.7], &[2.0], 0.6, 0.6)[0].abs() < 1e-15);
    }

    #[test]
    fn single_sample_has_no_noise() {
        let p = FeatureProblem::random(1, 3, 0.0, 1).unwrap();
        let s = exact_noise_covariance(&p, &DMatrix::identity(3, 3)).unwrap();
        assert!(s.norm() < 1e-15);
    }
}
