//! Spectral descriptions of quadratic problems: construction from power laws,
//! eigendecomposition of explicit feature problems, circulant (torus)
//! problems, power-law fitting and CSV exchange.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json;

/// Relative threshold below which Hessian eigenvalues count as zero.
pub const RANK_EPS: f64 = 1e-12;
/// Tolerated negative DFT coefficient of a kernel, relative to the largest.
pub const PSD_EPS: f64 = 1e-10;

/// Number of training points N; power-law spectra model an infinite dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSize {
    Finite(usize),
    Infinite,
}

impl std::fmt::Display for DatasetSize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DatasetSize::Finite(n) => write!(f, "{n}"),
            DatasetSize::Infinite => f.write_str("infinite"),
        }
    }
}

/// Eigenvalues of H with the diagonal initial second moments in the eigenbasis.
///
/// Both `c0` and the output-space weights `lambda * c0` are stored so that
/// either can round-trip exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    lambdas: Vec<f64>,
    lambda_c: Vec<f64>,
    c0: Vec<f64>,
    dataset_size: DatasetSize,
}

impl Spectrum {
    /// Build from eigenvalues and initial moments `C_kk,0`.
    pub fn from_c0(lambdas: Vec<f64>, c0: Vec<f64>, dataset_size: DatasetSize) -> Result<Self> {
        let lambda_c = lambdas.iter().zip(&c0).map(|(l, c)| l * c).collect();
        Self::assemble(lambdas, lambda_c, c0, dataset_size)
    }

    /// Build from eigenvalues and output-space weights `lambda_k * C_kk,0`.
    pub fn from_lambda_c(
        lambdas: Vec<f64>,
        lambda_c: Vec<f64>,
        dataset_size: DatasetSize,
    ) -> Result<Self> {
        let c0 = lambdas.iter().zip(&lambda_c).map(|(l, lc)| lc / l).collect();
        Self::assemble(lambdas, lambda_c, c0, dataset_size)
    }

    fn assemble(
        lambdas: Vec<f64>,
        lambda_c: Vec<f64>,
        c0: Vec<f64>,
        dataset_size: DatasetSize,
    ) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::InvalidSpectrum("no modes".into()));
        }
        if lambdas.len() != lambda_c.len() {
            return Err(Error::InvalidSpectrum(format!(
                "{} eigenvalues but {} initial moments",
                lambdas.len(),
                lambda_c.len()
            )));
        }
        if let DatasetSize::Finite(0) = dataset_size {
            return Err(Error::InvalidSpectrum("dataset size must be positive".into()));
        }
        for (k, (&l, &c)) in lambdas.iter().zip(&c0).enumerate() {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidSpectrum(format!("mode {}: eigenvalue {l} is not positive", k + 1)));
            }
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::InvalidSpectrum(format!("mode {}: initial moment {c} is not a non-negative number", k + 1)));
            }
        }
        let mut s = Spectrum { lambdas, lambda_c, c0, dataset_size };
        if s.lambdas.windows(2).any(|w| w[0] < w[1]) {
            let mut idx: Vec<usize> = (0..s.lambdas.len()).collect();
            idx.sort_by(|&a, &b| s.lambdas[b].total_cmp(&s.lambdas[a]));
            s.lambdas = idx.iter().map(|&i| s.lambdas[i]).collect();
            s.lambda_c = idx.iter().map(|&i| s.lambda_c[i]).collect();
            s.c0 = idx.iter().map(|&i| s.c0[i]).collect();
        }
        if !s.trace().is_finite() || !s.weighted_trace().is_finite() {
            return Err(Error::InvalidSpectrum("traces are not finite".into()));
        }
        Ok(s)
    }

    pub fn with_dataset_size(mut self, n: DatasetSize) -> Self {
        self.dataset_size = n;
        self
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn c0(&self) -> &[f64] {
        &self.c0
    }

    /// Output-space initial weights `lambda_k * C_kk,0`.
    pub fn lambda_c(&self) -> &[f64] {
        &self.lambda_c
    }

    pub fn dataset_size(&self) -> DatasetSize {
        self.dataset_size
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambdas[0]
    }

    /// Tr H.
    pub fn trace(&self) -> f64 {
        self.lambdas.iter().sum()
    }

    /// Tr H^2.
    pub fn trace_sq(&self) -> f64 {
        self.lambdas.iter().map(|l| l * l).sum()
    }

    /// Tr HC_0, twice the initial loss.
    pub fn weighted_trace(&self) -> f64 {
        self.lambda_c.iter().sum()
    }

    /// Tr C_0.
    pub fn trace_c0(&self) -> f64 {
        self.c0.iter().sum()
    }

    pub fn initial_loss(&self) -> f64 {
        0.5 * self.weighted_trace()
    }

    /// Tail sums `S_k = sum_{l >= k} lambda_l C_ll,0`, index 0 holding `S_1`.
    pub fn partial_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        let mut acc = 0.0;
        for k in (0..self.len()).rev() {
            acc += self.lambda_c[k];
            out[k] = acc;
        }
        out
    }
}

/// How initial moments are generated from the power law `S_k = K k^-kappa`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum C0Mode {
    /// `lambda_k C_kk = S_k - S_{k+1}` with `S_{M+1} = 0`.
    #[default]
    Differenced,
    /// `lambda_k C_kk = K kappa k^(-kappa-1)`.
    Pointwise,
}

impl std::str::FromStr for C0Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "differenced" | "differenced-partial-sums" => Ok(C0Mode::Differenced),
            "pointwise" => Ok(C0Mode::Pointwise),
            other => Err(Error::InvalidSpec(format!("unknown C0 mode `{other}`"))),
        }
    }
}

/// `lambda_k = Lambda k^-nu`, `sum_{l>=k} lambda_l C_ll,0 ~ K k^-kappa`, truncated at `modes`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawSpec {
    #[serde(rename = "Lambda")]
    pub lambda_scale: f64,
    pub nu: f64,
    #[serde(rename = "K")]
    pub k_scale: f64,
    pub kappa: f64,
    pub modes: usize,
    pub mode: C0Mode,
}

/// Integral estimates of what truncation at M modes leaves out.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailEstimate {
    /// `int_M^inf Lambda k^-nu dk`; infinite for nu <= 1.
    #[serde(serialize_with = "json::f64")]
    pub trace: f64,
    /// `K M^-kappa`, the target mass carried beyond (differenced: lumped into) mode M.
    #[serde(serialize_with = "json::f64")]
    pub weighted_trace: f64,
}

impl PowerLawSpec {
    pub fn new(lambda_scale: f64, nu: f64, k_scale: f64, kappa: f64, modes: usize) -> Self {
        PowerLawSpec { lambda_scale, nu, k_scale, kappa, modes, mode: C0Mode::Differenced }
    }

    pub fn with_mode(mut self, mode: C0Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn zeta(&self) -> f64 {
        self.kappa / self.nu
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("Lambda", self.lambda_scale),
            ("nu", self.nu),
            ("K", self.k_scale),
            ("kappa", self.kappa),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidSpec(format!("{name} must be positive, got {v}")));
            }
        }
        if self.modes < 2 {
            return Err(Error::InvalidSpec(format!("need at least 2 modes, got {}", self.modes)));
        }
        Ok(())
    }

    pub fn tail_estimate(&self) -> TailEstimate {
        let m = self.modes as f64;
        let trace = if self.nu > 1.0 {
            self.lambda_scale * m.powf(1.0 - self.nu) / (self.nu - 1.0)
        } else {
            f64::INFINITY
        };
        TailEstimate { trace, weighted_trace: self.k_scale * m.powf(-self.kappa) }
    }
}

/// Truncated power-law spectrum; the dataset is taken to be infinite.
pub fn build_power_law(spec: &PowerLawSpec) -> Result<Spectrum> {
    spec.validate()?;
    let m = spec.modes;
    let lambdas: Vec<f64> = (1..=m).map(|k| spec.lambda_scale * (k as f64).powf(-spec.nu)).collect();
    let lambda_c: Vec<f64> = match spec.mode {
        C0Mode::Differenced => {
            let s = |k: usize| if k > m { 0.0 } else { spec.k_scale * (k as f64).powf(-spec.kappa) };
            (1..=m).map(|k| s(k) - s(k + 1)).collect()
        }
        C0Mode::Pointwise => (1..=m)
            .map(|k| spec.k_scale * spec.kappa * (k as f64).powf(-spec.kappa - 1.0))
            .collect(),
    };
    Spectrum::from_lambda_c(lambdas, lambda_c, DatasetSize::Infinite)
}

/// Sampling-noise amplitude gamma for batch size `b`.
pub fn gamma_for_batch(n: DatasetSize, b: usize) -> Result<f64> {
    let bad = || Error::InvalidBatch { batch: b, dataset: n.to_string() };
    if b < 1 {
        return Err(bad());
    }
    match n {
        DatasetSize::Infinite => Ok(1.0 / b as f64),
        DatasetSize::Finite(n) if b > n => Err(bad()),
        DatasetSize::Finite(n) if b == n => Ok(0.0),
        DatasetSize::Finite(n) => Ok((n - b) as f64 / ((n - 1) as f64 * b as f64)),
    }
}

/// Linear model with explicit features: column i of `features` is psi(x_i).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureProblem {
    features: DMatrix<f64>,
    w_star: DVector<f64>,
    w0: DVector<f64>,
}

impl FeatureProblem {
    pub fn new(features: DMatrix<f64>, w_star: DVector<f64>, w0: DVector<f64>) -> Result<Self> {
        let (d, n) = features.shape();
        if d == 0 || n == 0 {
            return Err(Error::InvalidParams("feature matrix must be non-empty".into()));
        }
        if w_star.len() != d || w0.len() != d {
            return Err(Error::InvalidParams(format!(
                "feature dimension {d} but w* has {} and w0 has {} entries",
                w_star.len(),
                w0.len()
            )));
        }
        if features.iter().chain(w_star.iter()).chain(w0.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams("non-finite entry in problem".into()));
        }
        Ok(FeatureProblem { features, w_star, w0 })
    }

    /// Random problem: features uniform on [-1, 1] scaled by `j^(-decay/2)`
    /// along coordinate j, optimum uniform on [-1, 1], start at zero.
    pub fn random(n: usize, d: usize, decay: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features = DMatrix::from_fn(d, n, |j, _| {
            rng.random_range(-1.0..1.0) * ((j + 1) as f64).powf(-0.5 * decay)
        });
        let w_star = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        Self::new(features, w_star, DVector::zeros(d))
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn w_star(&self) -> &DVector<f64> {
        &self.w_star
    }

    pub fn w0(&self) -> &DVector<f64> {
        &self.w0
    }

    pub fn n(&self) -> usize {
        self.features.ncols()
    }

    pub fn d(&self) -> usize {
        self.features.nrows()
    }

    /// H = Psi Psi^T / N.
    pub fn hessian(&self) -> DMatrix<f64> {
        let h = &self.features * self.features.transpose() / self.n() as f64;
        (&h + h.transpose()) * 0.5
    }

    /// Initial deviation w0 - w*.
    pub fn delta(&self) -> DVector<f64> {
        &self.w0 - &self.w_star
    }

    /// Rank-one initial second moment (w0 - w*)(w0 - w*)^T.
    pub fn initial_moment(&self) -> DMatrix<f64> {
        let d = self.delta();
        &d * d.transpose()
    }

    /// Same problem with features replaced by `features * rotation^T`.
    pub fn rotated(&self, rotation: &DMatrix<f64>) -> Result<Self> {
        Self::new(&self.features * rotation.transpose(), self.w_star.clone(), self.w0.clone())
    }
}

/// Eigenbasis of H restricted to its numerically nonzero part.
#[derive(Clone, Debug)]
pub struct Eigendecomposition {
    pub spectrum: Spectrum,
    /// Column k is the eigenvector of `spectrum.lambdas()[k]`.
    pub basis: DMatrix<f64>,
}

pub fn eigendecompose(problem: &FeatureProblem) -> Result<Eigendecomposition> {
    let eig = SymmetricEigen::new(problem.hessian());
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if lmax <= 0.0 {
        return Err(Error::EmptySpectrum);
    }
    let mut keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > RANK_EPS * lmax)
        .collect();
    keep.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let delta = problem.delta();
    let basis = DMatrix::from_fn(problem.d(), keep.len(), |r, c| eig.eigenvectors[(r, keep[c])]);
    let lambdas = keep.iter().map(|&i| eig.eigenvalues[i]).collect();
    let c0 = (0..keep.len()).map(|c| basis.column(c).dot(&delta).powi(2)).collect();
    let spectrum = Spectrum::from_c0(lambdas, c0, DatasetSize::Finite(problem.n()))?;
    Ok(Eigendecomposition { spectrum, basis })
}

/// Translation-invariant problem on a regular grid of the torus.
///
/// Kernel samples `K_i` are the entries of the normalized Gram matrix
/// `Psi^T Psi / N` as a function of the grid offset `i`; the Hessian then
/// shares its spectrum with that circulant matrix.
#[derive(Clone, Debug)]
pub struct TorusProblem {
    grid: Vec<usize>,
    kernel: Vec<f64>,
    eigenvalues: Vec<f64>,
    features: DMatrix<f64>,
}

fn unflatten(mut flat: usize, grid: &[usize]) -> Vec<usize> {
    let mut out = vec![0; grid.len()];
    for (d, &n) in grid.iter().enumerate().rev() {
        out[d] = flat % n;
        flat /= n;
    }
    out
}

fn flatten(idx: &[usize], grid: &[usize]) -> usize {
    idx.iter().zip(grid).fold(0, |acc, (&i, &n)| acc * n + i)
}

pub fn build_torus_problem(grid: &[usize], kernel_values: &[f64]) -> Result<TorusProblem> {
    if grid.is_empty() || grid.contains(&0) {
        return Err(Error::InvalidParams("grid sizes must be positive".into()));
    }
    let n: usize = grid.iter().product();
    if kernel_values.len() != n {
        return Err(Error::InvalidParams(format!(
            "grid has {n} points but {} kernel values were given",
            kernel_values.len()
        )));
    }
    let scale = kernel_values.iter().fold(0.0f64, |m, k| m.max(k.abs()));
    for i in 0..n {
        let neg: Vec<usize> = unflatten(i, grid).iter().zip(grid).map(|(&a, &m)| (m - a) % m).collect();
        let j = flatten(&neg, grid);
        if (kernel_values[i] - kernel_values[j]).abs() > 1e-12 * scale {
            return Err(Error::AsymmetricKernel(i));
        }
    }
    let coords: Vec<Vec<usize>> = (0..n).map(|i| unflatten(i, grid)).collect();
    let phase = |k: usize, i: usize| -> f64 {
        coords[k]
            .iter()
            .zip(&coords[i])
            .zip(grid)
            .map(|((&a, &b), &m)| ((a * b) % m) as f64 / m as f64)
            .sum::<f64>()
            * 2.0
            * PI
    };
    let raw: Vec<f64> = (0..n)
        .map(|k| (0..n).map(|i| kernel_values[i] * phase(k, i).cos()).sum())
        .collect();
    let lmax = raw.iter().cloned().fold(f64::MIN, f64::max);
    let mut eigenvalues = raw;
    for (k, l) in eigenvalues.iter_mut().enumerate() {
        if *l < -PSD_EPS * lmax.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::NonPsdKernel { mode: k, value: *l });
        }
        *l = l.max(0.0);
    }
    let root_n = (n as f64).sqrt();
    let psi: Vec<f64> = (0..n)
        .map(|m| (0..n).map(|k| eigenvalues[k].sqrt() * phase(k, m).cos()).sum::<f64>() / root_n)
        .collect();
    let features = DMatrix::from_fn(n, n, |i, j| {
        let diff: Vec<usize> = coords[i].iter().zip(&coords[j]).zip(grid).map(|((&a, &b), &m)| (a + m - b) % m).collect();
        psi[flatten(&diff, grid)]
    });
    Ok(TorusProblem { grid: grid.to_vec(), kernel: kernel_values.to_vec(), eigenvalues, features })
}

impl TorusProblem {
    pub fn grid(&self) -> &[usize] {
        &self.grid
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Eigenvalues indexed by flat wave vector k (not sorted).
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Dense circulant kernel matrix `K_{i-j}`.
    pub fn kernel_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| {
            let a = unflatten(i, &self.grid);
            let b = unflatten(j, &self.grid);
            let diff: Vec<usize> = a.iter().zip(&b).zip(&self.grid).map(|((&x, &y), &m)| (x + m - y) % m).collect();
            self.kernel[flatten(&diff, &self.grid)]
        })
    }

    /// Explicit feature problem with the synthesized symmetric circulant features.
    pub fn problem(&self, w_star: DVector<f64>, w0: DVector<f64>) -> Result<FeatureProblem> {
        FeatureProblem::new(self.features.clone(), w_star, w0)
    }

    fn fourier_vectors(&self, k: usize) -> (DVector<f64>, DVector<f64>) {
        let n = self.n();
        let kc = unflatten(k, &self.grid);
        let root_n = (n as f64).sqrt();
        let theta = |i: usize| {
            let ic = unflatten(i, &self.grid);
            2.0 * PI
                * kc.iter().zip(&ic).zip(&self.grid).map(|((&a, &b), &m)| ((a * b) % m) as f64 / m as f64).sum::<f64>()
        };
        let a = DVector::from_fn(n, |i, _| theta(i).cos() / root_n);
        let b = DVector::from_fn(n, |i, _| theta(i).sin() / root_n);
        (a, b)
    }

    /// Diagonal `phi_k^H M phi_k` of a real symmetric matrix in the Fourier basis.
    pub fn fourier_diagonal(&self, m: &DMatrix<f64>) -> Vec<f64> {
        (0..self.n())
            .map(|k| {
                let (a, b) = self.fourier_vectors(k);
                (m * &a).dot(&a) + (m * &b).dot(&b)
            })
            .collect()
    }

    /// Spectrum of the problem with initial deviation `delta_w`; zero modes dropped.
    pub fn spectrum(&self, delta_w: &DVector<f64>) -> Result<Spectrum> {
        let lmax = self.eigenvalues.iter().cloned().fold(0.0, f64::max);
        if lmax <= 0.0 {
            return Err(Error::EmptySpectrum);
        }
        let mut lambdas = Vec::new();
        let mut c0 = Vec::new();
        for k in 0..self.n() {
            if self.eigenvalues[k] > RANK_EPS * lmax {
                let (a, b) = self.fourier_vectors(k);
                lambdas.push(self.eigenvalues[k]);
                c0.push(a.dot(delta_w).powi(2) + b.dot(delta_w).powi(2));
            }
        }
        Spectrum::from_c0(lambdas, c0, DatasetSize::Finite(self.n()))
    }
}

/// Least-squares log-log fit of eigenvalues and tail sums.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    #[serde(rename = "Lambda")]
    pub lambda_scale: f64,
    pub nu: f64,
    #[serde(rename = "K")]
    pub k_scale: f64,
    pub kappa: f64,
    /// First mode (1-based) included in the fit.
    pub tail_start: usize,
    /// Mean squared residual of the eigenvalue fit.
    pub residual: f64,
    /// Mean squared residual of the tail-sum fit.
    pub partial_sum_residual: f64,
}

impl PowerLawFit {
    /// The exponents and scales a spec was generated with.
    pub fn from_spec(spec: &PowerLawSpec) -> Self {
        PowerLawFit {
            lambda_scale: spec.lambda_scale,
            nu: spec.nu,
            k_scale: spec.k_scale,
            kappa: spec.kappa,
            tail_start: 1,
            residual: 0.0,
            partial_sum_residual: 0.0,
        }
    }

    pub fn zeta(&self) -> f64 {
        self.kappa / self.nu
    }
}

/// Ordinary least squares `y = a + b x`; returns (a, b, mean squared residual).
fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let res = x.iter().zip(y).map(|(u, v)| (v - a - b * u).powi(2)).sum::<f64>() / n;
    (a, b, res)
}

pub const MIN_TAIL: usize = 8;

pub fn fit_power_law(spectrum: &Spectrum, tail_start: usize) -> Result<PowerLawFit> {
    let m = spectrum.len();
    let start = tail_start.max(1);
    if start > m || m - start + 1 < MIN_TAIL {
        return Err(Error::NonLoggable(format!(
            "tail from mode {start} has {} points, need at least {MIN_TAIL}",
            (m + 1).saturating_sub(start)
        )));
    }
    let sums = spectrum.partial_sums();
    let ks: Vec<f64> = (start..=m).map(|k| (k as f64).ln()).collect();
    let mut ll = Vec::with_capacity(ks.len());
    let mut ls = Vec::with_capacity(ks.len());
    for k in start..=m {
        let (l, s) = (spectrum.lambdas()[k - 1], sums[k - 1]);
        if !(l > 0.0) || !(s > 0.0) {
            return Err(Error::NonLoggable(format!("mode {k}: lambda={l}, S={s}")));
        }
        ll.push(l.ln());
        ls.push(s.ln());
    }
    let (a1, b1, r1) = ols(&ks, &ll);
    let (a2, b2, r2) = ols(&ks, &ls);
    if !(-b1 > 0.0) {
        return Err(Error::NonLoggable(format!("eigenvalues do not decay (slope {b1})")));
    }
    Ok(PowerLawFit {
        lambda_scale: a1.exp(),
        nu: -b1,
        k_scale: a2.exp(),
        kappa: -b2,
        tail_start: start,
        residual: r1,
        partial_sum_residual: r2,
    })
}

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, msg: msg.into() }
}

/// Read `k,lambda,lambda_c` (or `lambda,lambda_c`) rows; `#` lines are comments.
pub fn load_spectrum_csv(path: impl AsRef<Path>) -> Result<Spectrum> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => parse_err(path, 0, format!("{other:?}")),
        })?;
    let mut lambdas = Vec::new();
    let mut lambda_c = Vec::new();
    let mut first = true;
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if first {
            first = false;
            let fields: Vec<&str> = rec.iter().map(|f| f.trim()).collect();
            if fields == ["k", "lambda", "lambda_c"] || fields == ["lambda", "lambda_c"] {
                continue;
            }
        }
        let vals: Vec<f64> = rec
            .iter()
            .enumerate()
            .map(|(c, f)| {
                f.parse::<f64>()
                    .map_err(|_| parse_err(path, line, format!("column {}: `{f}` is not a number", c + 1)))
            })
            .collect::<Result<_>>()?;
        let (l, lc) = match vals.as_slice() {
            [l, lc] | [_, l, lc] => (*l, *lc),
            _ => return Err(parse_err(path, line, format!("expected 2 or 3 columns, found {}", vals.len()))),
        };
        if !(l > 0.0 && l.is_finite()) {
            return Err(parse_err(path, line, format!("eigenvalue {l} must be positive")));
        }
        if !(lc >= 0.0 && lc.is_finite()) {
            return Err(parse_err(path, line, format!("lambda_c {lc} must be non-negative")));
        }
        lambdas.push(l);
        lambda_c.push(lc);
    }
    if lambdas.is_empty() {
        return Err(parse_err(path, 0, "no data rows"));
    }
    Spectrum::from_lambda_c(lambdas, lambda_c, DatasetSize::Infinite)
}

/// CSV text of a spectrum in the format read by [`load_spectrum_csv`].
pub fn spectrum_csv(spectrum: &Spectrum) -> String {
    let mut out = String::from("k,lambda,lambda_c\n");
    for (k, (l, lc)) in spectrum.lambdas().iter().zip(spectrum.lambda_c()).enumerate() {
        let _ = writeln!(out, "{},{},{}", k + 1, l, lc);
    }
    out
}

pub fn save_spectrum_csv(spectrum: &Spectrum, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, spectrum_csv(spectrum))?;
    Ok(())
}
