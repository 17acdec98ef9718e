//! Command-line front end: flag and config-file parsing, commands, and
//! CSV/JSON/SVG emission with a checksummed manifest.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Parser, ValueEnum};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::asymptotics::{blowup_time, classify_phase, loss_asymptote, BlowupReport, PhaseLabel};
use crate::error::{Error, Result};
use crate::genfunc::{critical_alpha, solve_divergence, stability_report, DivergenceReport, GenFuncContext};
use crate::json::{self, fmt_f64};
use crate::plot::{heatmap_svg, line_chart_svg, Guide, Heatmap, LineChart, Marker, Series};
use crate::simulate::{
    run_full_moments, run_mc, run_noiseless, run_se, se_fit_error, thread_pool, LossTrajectory, McOptions, NoiseModel,
    SgdParams,
};
use crate::spectrum::{
    build_power_law, build_torus_problem, eigendecompose, fit_power_law, gamma_for_batch, load_spectrum_csv, C0Mode,
    DatasetSize, FeatureProblem, PowerLawFit, PowerLawSpec, Spectrum, TailEstimate,
};

pub const DEFAULT_OUT: &str = "sgdphaselab-out";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Loss trajectories for the requested regimes.
    Simulate,
    /// (alpha, beta) grid of SE final losses against the predicted boundary.
    StabilityMap,
    /// Late-time loss constants and exponents.
    Asymptotics,
    /// Exponential divergence rate and blow-up time.
    Divergence,
    /// (nu, zeta) grid of phases, exponents and constants.
    PhaseDiagram,
    /// Power-law fit of a spectrum.
    Fit,
    /// Best SE approximation of the exact noise term.
    SeError,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::StabilityMap => "stability-map",
            Command::Asymptotics => "asymptotics",
            Command::Divergence => "divergence",
            Command::PhaseDiagram => "phase-diagram",
            Command::Fit => "fit",
            Command::SeError => "se-error",
        }
    }
}

#[derive(Parser, Debug, Clone)]
#[command(name = "sgdphaselab", version, about = "Mini-batch SGD with momentum on quadratic problems", allow_negative_numbers = true)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Flat `key = value` file using the long flag names as keys; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
}

/// Every tunable, as given on the command line or in a config file.
#[derive(clap::Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Settings {
    /// Eigenvalue decay exponent of a synthetic power-law spectrum.
    #[arg(long)]
    pub nu: Option<f64>,
    /// Target tail-sum decay exponent of a synthetic power-law spectrum.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Eigenvalue scale (default 1).
    #[arg(long = "Lambda")]
    #[serde(rename = "Lambda")]
    pub lambda_scale: Option<f64>,
    /// Target tail-sum scale (default 1).
    #[arg(long = "K")]
    #[serde(rename = "K")]
    pub k_scale: Option<f64>,
    /// Number of modes kept (default 1000, stability-map preset 200).
    #[arg(long)]
    pub modes: Option<usize>,
    /// How target weights are laid on modes: differenced or pointwise.
    #[arg(long)]
    pub c0_mode: Option<String>,
    /// Spectrum CSV with rows `k,lambda,lambda_c`.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Points of a 1-D torus problem.
    #[arg(long)]
    pub torus_n: Option<usize>,
    /// Fourier-spectrum decay of the torus kernel (default 1.5).
    #[arg(long)]
    pub torus_decay: Option<f64>,
    /// Data points of a random-feature problem.
    #[arg(long)]
    pub features_n: Option<usize>,
    /// Feature dimension of a random-feature problem (default: features-n).
    #[arg(long)]
    pub features_d: Option<usize>,
    /// Per-coordinate feature decay exponent (default 1).
    #[arg(long)]
    pub features_decay: Option<f64>,
    /// Learning rate (required by simulate, asymptotics and divergence)
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Momentum in (-1, 1) (default 0)
    #[arg(long)]
    pub beta: Option<f64>,
    /// Batch size (default 1).
    #[arg(long)]
    pub batch: Option<usize>,
    /// Comma-separated batch sizes; overrides --batch for simulate.
    #[arg(long)]
    pub batches: Option<String>,
    /// Dataset size N, or `inf`.
    #[arg(long)]
    pub dataset_size: Option<String>,
    /// Noise amplitude; defaults to the value implied by batch and dataset size.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Weight of the trace term of the SE noise (default 1)
    #[arg(long)]
    pub tau1: Option<f64>,
    /// Weight of the per-mode term of the SE noise (default 1)
    #[arg(long)]
    pub tau2: Option<f64>,
    /// Iterations T (default 10000, stability-map preset 1000).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Monte-Carlo runs (default 1000).
    #[arg(long)]
    pub runs: Option<usize>,
    /// Monte-Carlo seed; run r uses stream r
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads, further capped by SGDPHASELAB_THREADS.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Comma-separated regimes for simulate: se, noiseless, full, mc.
    #[arg(long)]
    pub regime: Option<String>,
    /// `lo:hi:n` learning-rate grid.
    #[arg(long, allow_hyphen_values = true)]
    pub grid_alpha: Option<String>,
    /// `lo:hi:n` momentum grid.
    #[arg(long, allow_hyphen_values = true)]
    pub grid_beta: Option<String>,
    /// `lo:hi:n` grid of nu for phase-diagram.
    #[arg(long, allow_hyphen_values = true)]
    pub grid_nu: Option<String>,
    /// `lo:hi:n` grid of zeta for phase-diagram.
    #[arg(long, allow_hyphen_values = true)]
    pub grid_zeta: Option<String>,
    /// First mode (1-based) of the power-law fit.
    #[arg(long)]
    pub tail_start: Option<usize>,
    /// Stability-map at 100x50 cells, 1000 modes and 10^4 steps.
    #[arg(long)]
    #[serde(default)]
    pub full_scale: bool,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long)]
    #[serde(default)]
    pub plot: bool,
}

impl Settings {
    pub fn from_toml_file(path: &Path) -> Result<Settings> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
    }

    /// Values set here win; unset ones fall back to `base`.
    pub fn over(&self, base: &Settings) -> Settings {
        let mut top = serde_json::to_value(self).expect("settings serialize");
        let bottom = serde_json::to_value(base).expect("settings serialize");
        if let (Some(t), Some(b)) = (top.as_object_mut(), bottom.as_object()) {
            for (k, v) in b {
                let unset = matches!(t.get(k), None | Some(serde_json::Value::Null) | Some(serde_json::Value::Bool(false)));
                if unset {
                    t.insert(k.clone(), v.clone());
                }
            }
        }
        serde_json::from_value(top).expect("merged settings deserialize")
    }
}

/// Inclusive linear grid `lo:hi:n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        Grid { lo, hi, n }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.n - 1) as f64;
        (0..self.n).map(|i| if i + 1 == self.n { self.hi } else { self.lo + step * i as f64 }).collect()
    }
}

impl FromStr for Grid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Grid> {
        let bad = || Error::Config(format!("grid `{s}` is not of the form lo:hi:n"));
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].parse().map_err(|_| bad())?;
        let n: usize = parts[2].parse().map_err(|_| bad())?;
        if n == 0 || !lo.is_finite() || !hi.is_finite() || (n > 1 && hi <= lo) {
            return Err(Error::Config(format!("grid `{s}` needs n >= 1 and lo < hi")));
        }
        Ok(Grid { lo, hi, n })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ProblemSource {
    PowerLaw(PowerLawSpec),
    Csv { path: PathBuf },
    Torus { n: usize, decay: f64, seed: u64 },
    Features { n: usize, d: usize, decay: f64, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunKind {
    Se,
    Noiseless,
    Full,
    Mc,
}

impl RunKind {
    fn file_stem(&self) -> &'static str {
        match self {
            RunKind::Se => "se",
            RunKind::Noiseless => "noiseless",
            RunKind::Full => "full",
            RunKind::Mc => "mc",
        }
    }
}

impl FromStr for RunKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<RunKind> {
        match s.trim() {
            "se" => Ok(RunKind::Se),
            "noiseless" => Ok(RunKind::Noiseless),
            "full" | "full-moments" => Ok(RunKind::Full),
            "mc" | "monte-carlo" => Ok(RunKind::Mc),
            other => Err(Error::Config(format!("unknown regime `{other}` (expected se, noiseless, full or mc)"))),
        }
    }
}

/// Validated, defaults-filled experiment description.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub source: Option<ProblemSource>,
    pub alpha: Option<f64>,
    pub beta: f64,
    pub batches: Vec<usize>,
    pub dataset_size: Option<DatasetSize>,
    pub gamma: Option<f64>,
    pub tau1: f64,
    pub tau2: f64,
    pub steps: usize,
    pub runs: usize,
    pub seed: u64,
    pub threads: Option<usize>,
    pub regimes: Vec<RunKind>,
    pub grid_alpha: Grid,
    pub grid_beta: Grid,
    pub grid_nu: Grid,
    pub grid_zeta: Grid,
    pub tail_start: Option<usize>,
    pub out: PathBuf,
    pub plot: bool,
    /// The merged flag/file values, echoed into the manifest.
    #[serde(skip)]
    pub settings: Settings,
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<T>().map_err(|_| Error::Config(format!("bad {what} `{p}`"))))
        .collect()
}

/// Parse argv (program name first) into a validated config.
pub fn parse_args<I, T>(args: I) -> Result<ExperimentConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
    parse_config(&cli)
}

pub fn parse_config(cli: &Cli) -> Result<ExperimentConfig> {
    let settings = match &cli.config {
        Some(path) => cli.settings.over(&Settings::from_toml_file(path)?),
        None => cli.settings.clone(),
    };
    build_config(cli.command, settings)
}

pub fn build_config(command: Command, s: Settings) -> Result<ExperimentConfig> {
    let power_flags: Vec<&str> = [
        ("--nu", s.nu.is_some()),
        ("--kappa", s.kappa.is_some()),
        ("--Lambda", s.lambda_scale.is_some()),
        ("--K", s.k_scale.is_some()),
        ("--modes", s.modes.is_some()),
        ("--c0-mode", s.c0_mode.is_some()),
    ]
    .into_iter()
    .filter_map(|(n, set)| set.then_some(n))
    .collect();
    let mut sources: Vec<&str> = Vec::new();
    if let Some(f) = power_flags.first() {
        sources.push(f);
    }
    if s.csv.is_some() {
        sources.push("--csv");
    }
    if s.torus_n.is_some() || s.torus_decay.is_some() {
        sources.push("--torus-n");
    }
    if s.features_n.is_some() || s.features_d.is_some() || s.features_decay.is_some() {
        sources.push("--features-n");
    }
    if sources.len() > 1 {
        return Err(Error::Config(format!("conflicting problem sources: {}", sources.join(" and "))));
    }

    let preset = command == Command::StabilityMap;
    let full = preset && s.full_scale;
    let seed = s.seed.unwrap_or(0);
    let c0_mode = s.c0_mode.as_deref().map(C0Mode::from_str).transpose()?.unwrap_or_default();
    let default_modes = if preset && !full { 200 } else { 1000 };
    let template = |nu: f64, kappa: f64| {
        PowerLawSpec::new(
            s.lambda_scale.unwrap_or(1.0),
            nu,
            s.k_scale.unwrap_or(1.0),
            kappa,
            s.modes.unwrap_or(default_modes),
        )
        .with_mode(c0_mode)
    };

    let source = if let Some(path) = &s.csv {
        Some(ProblemSource::Csv { path: path.clone() })
    } else if s.torus_n.is_some() || s.torus_decay.is_some() {
        let n = s.torus_n.ok_or_else(|| Error::Config("--torus-decay needs --torus-n".into()))?;
        Some(ProblemSource::Torus { n, decay: s.torus_decay.unwrap_or(1.5), seed })
    } else if s.features_n.is_some() || s.features_d.is_some() || s.features_decay.is_some() {
        let n = s.features_n.ok_or_else(|| Error::Config("random features need --features-n".into()))?;
        Some(ProblemSource::Features { n, d: s.features_d.unwrap_or(n), decay: s.features_decay.unwrap_or(1.0), seed })
    } else if command == Command::PhaseDiagram {
        Some(ProblemSource::PowerLaw(template(s.nu.unwrap_or(1.5), s.kappa.unwrap_or(1.0))))
    } else {
        match (s.nu, s.kappa) {
            (Some(nu), Some(kappa)) => Some(ProblemSource::PowerLaw(template(nu, kappa))),
            (None, None) if power_flags.is_empty() => None,
            _ => return Err(Error::Config("a power-law spectrum needs both --nu and --kappa".into())),
        }
    };
    if let Some(ProblemSource::PowerLaw(spec)) = &source {
        spec.validate()?;
    }
    if source.is_none() {
        return Err(Error::Config(
            "no problem source: give --nu/--kappa, --csv, --torus-n or --features-n".into(),
        ));
    }

    let beta = s.beta.unwrap_or(0.0);
    if !(beta > -1.0 && beta < 1.0) {
        return Err(Error::InvalidParams(format!("beta must lie in (-1, 1), got {beta}")));
    }
    if let Some(a) = s.alpha {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidParams(format!("alpha must be positive, got {a}")));
        }
    }
    if matches!(command, Command::Simulate | Command::Asymptotics | Command::Divergence) && s.alpha.is_none() {
        return Err(Error::Config(format!("{} needs --alpha", command.name())));
    }
    if let Some(g) = s.gamma {
        if !(g >= 0.0 && g.is_finite()) {
            return Err(Error::InvalidParams(format!("gamma must be nonnegative, got {g}")));
        }
    }
    let batches = match &s.batches {
        Some(list) => parse_list::<usize>(list, "batch size")?,
        None => vec![s.batch.unwrap_or(1)],
    };
    if batches.is_empty() || batches.contains(&0) {
        return Err(Error::InvalidParams("batch sizes must be positive".into()));
    }
    let dataset_size = match s.dataset_size.as_deref() {
        None => None,
        Some("inf") | Some("infinite") => Some(DatasetSize::Infinite),
        Some(v) => Some(DatasetSize::Finite(
            v.parse().map_err(|_| Error::Config(format!("dataset-size `{v}` is neither an integer nor `inf`")))?,
        )),
    };
    let regimes = parse_list::<String>(s.regime.as_deref().unwrap_or("se"), "regime")?
        .iter()
        .map(|r| r.parse())
        .collect::<Result<Vec<RunKind>>>()?;
    if regimes.is_empty() {
        return Err(Error::Config("no regime requested".into()));
    }
    let grid = |v: &Option<String>, default: Grid| v.as_deref().map(Grid::from_str).transpose().map(|g| g.unwrap_or(default));
    let (ga, gb) = if full {
        (Grid::new(0.04, 4.0, 100), Grid::new(0.0, 0.98, 50))
    } else {
        (Grid::new(0.1, 4.0, 40), Grid::new(0.0, 0.95, 20))
    };
    let grid_beta = grid(&s.grid_beta, gb)?;
    if grid_beta.values().iter().any(|b| !(*b > -1.0 && *b < 1.0)) {
        return Err(Error::InvalidParams("beta grid must lie in (-1, 1)".into()));
    }
    let grid_alpha = grid(&s.grid_alpha, ga)?;
    if grid_alpha.lo <= 0.0 {
        return Err(Error::InvalidParams("alpha grid must be positive".into()));
    }
    let grid_nu = grid(&s.grid_nu, Grid::new(0.3, 3.0, 28))?;
    let grid_zeta = grid(&s.grid_zeta, Grid::new(0.1, 3.0, 30))?;
    if grid_nu.lo <= 0.0 || grid_zeta.lo <= 0.0 {
        return Err(Error::InvalidParams("nu and zeta grids must be positive".into()));
    }
    let steps = s.steps.unwrap_or(if preset && !full { 1000 } else { 10_000 });
    let runs = s.runs.unwrap_or(1000);
    if runs == 0 {
        return Err(Error::InvalidParams("runs must be positive".into()));
    }

    Ok(ExperimentConfig {
        command,
        source,
        alpha: s.alpha,
        beta,
        batches,
        dataset_size,
        gamma: s.gamma,
        tau1: s.tau1.unwrap_or(1.0),
        tau2: s.tau2.unwrap_or(1.0),
        steps,
        runs,
        seed,
        threads: s.threads,
        regimes,
        grid_alpha,
        grid_beta,
        grid_nu,
        grid_zeta,
        tail_start: s.tail_start,
        out: s.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
        plot: s.plot,
        settings: s,
    })
}

/// Spectrum plus whatever else the source provides.
pub struct LoadedProblem {
    pub spectrum: Spectrum,
    pub problem: Option<FeatureProblem>,
    /// Exact exponents for synthetic power laws.
    pub known_fit: Option<PowerLawFit>,
    pub tail: Option<TailEstimate>,
}

/// Kernel samples of a 1-D torus whose Fourier coefficients decay as `(1+|k|)^-decay`.
pub fn torus_kernel(n: usize, decay: f64) -> Vec<f64> {
    let lam = |k: usize| (1.0 + k.min(n - k) as f64).powf(-decay);
    (0..n)
        .map(|i| {
            (0..n).map(|k| lam(k) * (2.0 * std::f64::consts::PI * ((i * k) % n) as f64 / n as f64).cos()).sum::<f64>()
                / n as f64
        })
        .collect()
}

pub fn load_problem(source: &ProblemSource, dataset_size: Option<DatasetSize>) -> Result<LoadedProblem> {
    let mut loaded = match source {
        ProblemSource::PowerLaw(spec) => LoadedProblem {
            spectrum: build_power_law(spec)?,
            problem: None,
            known_fit: Some(PowerLawFit::from_spec(spec)),
            tail: Some(spec.tail_estimate()),
        },
        ProblemSource::Csv { path } => {
            LoadedProblem { spectrum: load_spectrum_csv(path)?, problem: None, known_fit: None, tail: None }
        }
        ProblemSource::Torus { n, decay, seed } => {
            if *n < 2 {
                return Err(Error::InvalidParams("torus needs at least 2 points".into()));
            }
            let torus = build_torus_problem(&[*n], &torus_kernel(*n, *decay))?;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let w_star = DVector::from_fn(*n, |_, _| rng.random_range(-1.0..1.0));
            let problem = torus.problem(w_star, DVector::zeros(*n))?;
            let spectrum = torus.spectrum(&problem.delta())?;
            LoadedProblem { spectrum, problem: Some(problem), known_fit: None, tail: None }
        }
        ProblemSource::Features { n, d, decay, seed } => {
            let problem = FeatureProblem::random(*n, *d, *decay, *seed)?;
            let spectrum = eigendecompose(&problem)?.spectrum;
            LoadedProblem { spectrum, problem: Some(problem), known_fit: None, tail: None }
        }
    };
    if let Some(n) = dataset_size {
        loaded.spectrum = loaded.spectrum.with_dataset_size(n);
    }
    Ok(loaded)
}

/// Writes output files and remembers them for the manifest or for cleanup.
struct Emitter {
    dir: PathBuf,
    created: bool,
    written: Vec<String>,
}

impl Emitter {
    fn new(dir: &Path) -> Result<Self> {
        let created = !dir.exists();
        fs::create_dir_all(dir)?;
        Ok(Emitter { dir: dir.to_path_buf(), created, written: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
        fs::write(path, contents)?;
        Ok(())
    }

    fn discard(&self) {
        for name in &self.written {
            let _ = fs::remove_file(self.dir.join(name));
        }
        if self.created {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: Command,
    pub config: Settings,
    pub seed: u64,
    pub wall_time_s: f64,
    pub files: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Result of a successful run: emitted files relative to the output directory.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub out: PathBuf,
    pub files: Vec<String>,
}

pub fn trajectory_csv(traj: &LossTrajectory) -> String {
    let mut out = String::from("t,loss,stderr\n");
    for (t, l) in traj.losses.iter().enumerate() {
        let se = traj.stderr.as_ref().map(|s| fmt_f64(s[t])).unwrap_or_default();
        out.push_str(&format!("{t},{},{se}\n", fmt_f64(*l)));
    }
    out
}

#[derive(Serialize)]
struct TrajectorySidecar<'a> {
    regime: &'static str,
    params: &'a SgdParams,
    runs: Option<usize>,
    seed: Option<u64>,
    diverged: bool,
    diverged_at: Option<usize>,
    negative_moments: bool,
    #[serde(serialize_with = "json::f64")]
    final_loss: f64,
    source: &'a ProblemSource,
    truncation_tail: Option<TailEstimate>,
}

fn sidecar(traj: &LossTrajectory, source: &ProblemSource, tail: Option<TailEstimate>) -> String {
    json::to_string(&TrajectorySidecar {
        regime: traj.metadata.regime.name(),
        params: &traj.metadata.params,
        runs: traj.metadata.runs,
        seed: traj.metadata.seed,
        diverged: traj.diverged(),
        diverged_at: traj.diverged_at,
        negative_moments: traj.metadata.negative_moments,
        final_loss: traj.final_loss(),
        source,
        truncation_tail: tail,
    })
}

/// Parse, run and report; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = parse_config(&cli).and_then(|cfg| run_command(&cfg));
    match result {
        Ok(outcome) => {
            eprintln!("wrote {} files to {}", outcome.files.len(), outcome.out.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Execute a validated config; on failure every file it wrote is removed.
pub fn run_command(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let start = Instant::now();
    let mut em = Emitter::new(&cfg.out)?;
    let result = dispatch(cfg, &mut em).and_then(|_| {
        let mut files = Vec::new();
        for name in &em.written {
            let bytes = fs::read(em.dir.join(name))?;
            files.push(ManifestEntry { path: name.clone(), sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 });
        }
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: cfg.command,
            config: cfg.settings.clone(),
            seed: cfg.seed,
            wall_time_s: start.elapsed().as_secs_f64(),
            files,
        };
        em.write("manifest.json", &json::to_string(&manifest))
    });
    match result {
        Ok(()) => Ok(RunOutcome { out: cfg.out.clone(), files: em.written.clone() }),
        Err(e) => {
            em.discard();
            Err(e)
        }
    }
}

fn dispatch(cfg: &ExperimentConfig, em: &mut Emitter) -> Result<()> {
    match cfg.command {
        Command::Simulate => cmd_simulate(cfg, em),
        Command::StabilityMap => cmd_stability_map(cfg, em),
        Command::Asymptotics => cmd_asymptotics(cfg, em),
        Command::Divergence => cmd_divergence(cfg, em),
        Command::PhaseDiagram => cmd_phase_diagram(cfg, em),
        Command::Fit => cmd_fit(cfg, em),
        Command::SeError => cmd_se_error(cfg, em),
    }
}

fn source(cfg: &ExperimentConfig) -> &ProblemSource {
    cfg.source.as_ref().expect("validated configs carry a source")
}

fn params_for(cfg: &ExperimentConfig, spectrum: &Spectrum, alpha: f64, beta: f64, batch: usize) -> Result<SgdParams> {
    let gamma = match cfg.gamma {
        Some(g) => g,
        None => gamma_for_batch(spectrum.dataset_size(), batch)?,
    };
    let p = SgdParams::new(alpha, beta, gamma, cfg.steps).with_tau(cfg.tau1, cfg.tau2).with_batch(batch);
    p.validate()?;
    Ok(p)
}

fn fit_for(cfg: &ExperimentConfig, loaded: &LoadedProblem) -> Result<PowerLawFit> {
    match (&loaded.known_fit, cfg.tail_start) {
        (Some(fit), None) => Ok(*fit),
        _ => fit_power_law(&loaded.spectrum, cfg.tail_start.unwrap_or(1)),
    }
}

fn needs_problem<'a>(loaded: &'a LoadedProblem, what: &str) -> Result<&'a FeatureProblem> {
    loaded
        .problem
        .as_ref()
        .ok_or_else(|| Error::Config(format!("{what} needs an explicit feature problem (--torus-n or --features-n)")))
}

fn cmd_simulate(cfg: &ExperimentConfig, em: &mut Emitter) -> Result<()> {
    let loaded = load_problem(source(cfg), cfg.dataset_size)?;
    let alpha = cfg.alpha.expect("validated");
    let mut series = Vec::new();
    for &b in &cfg.batches {
        let params = params_for(cfg, &loaded.spectrum, alpha, cfg.beta, b)?;
        let suffix = if cfg.batches.len() > 1 { format!("_b{b}") } else { String::new() };
        for kind in &cfg.regimes {
            let traj = match kind {
                RunKind::Se => run_se(&loaded.spectrum, &params)?,
                RunKind::Noiseless => run_noiseless(&loaded.spectrum, &params)?,
                RunKind::Full => run_full_moments(needs_problem(&loaded, "regime full")?, &params, NoiseModel::Exact)?,
                RunKind::Mc => run_mc(
                    needs_problem(&loaded, "regime mc")?,
                    &params,
                    &McOptions { runs: cfg.runs, seed: cfg.seed, threads: cfg.threads },
                )?,
            };
            let stem = format!("trajectory_{}{suffix}", kind.file_stem());
            em.write(&format!("{stem}.csv"), &trajectory_csv(&traj))?;
            em.write(&format!("{stem}.json"), &sidecar(&traj, source(cfg), loaded.tail))?;
            series.push(Series::from_losses(format!("{}{suffix}", kind.file_stem()), &traj.losses));
        }
    }
    if cfg.plot {
        let series: Vec<Series> = series
            .into_iter()
            .map(|mut s| {
                s.points.retain(|p| p.1 > 0.0 && p.1.is_finite());
                s
            })
            .filter(|s| !s.points.is_empty())
            .collect();
        let guides = match (&loaded.known_fit, series.first()) {
            (Some(fit), Some(s)) => vec![Guide { label: format!("t^-{:.3}", fit.zeta()), slope: -fit.zeta(), anchor: s.points[0] }],
            _ => Vec::new(),
        };
        let chart = LineChart { title: "loss".into(), x_label: "t".into(), y_label: "L(t)".into(), series, guides, markers: vec![] };
        em.write("loss.svg", &line_chart_svg(&chart)?)?;
    }
    Ok(())
}

fn cmd_stability_map(cfg: &ExperimentConfig, em: &mut Emitter) -> Result<()> {
    let loaded = load_problem(source(cfg), cfg.dataset_size)?;
    let spectrum = &loaded.spectrum;
    let alphas = cfg.grid_alpha.values();
    let betas = cfg.grid_beta.values();
    let batch = cfg.batches[0];
    let tail_nu = loaded.known_fit.map(|f| f.nu);
    let cells: Vec<(f64, f64)> = betas.iter().flat_map(|&b| alphas.iter().map(move |&a| (a, b))).collect();
    let pool = thread_pool(cfg.threads)?;
    // (alpha, beta, final loss, U1, critical alpha_eff)
    type Cell = (f64, f64, f64, f64, f64);
    let rows: Vec<Result<Cell>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(a, b)| {
                let params = params_for(cfg, spectrum, a, b, batch)?;
                let traj = run_se(spectrum, &params)?;
                let final_loss = if traj.diverged() { f64::INFINITY } else { traj.final_loss() };
                let mut ctx = GenFuncContext::from_params(spectrum, &params);
                if let Some(nu) = tail_nu {
                    ctx = ctx.with_tail_nu(nu);
                }
                let rep = stability_report(&ctx);
                Ok((a, b, final_loss, rep.u1, rep.alpha_eff_critical))
            })
            .collect()
    });
    let mut csv = String::from("alpha,beta,final_loss,predicted_U1,predicted_boundary\n");
    let mut values = vec![vec![f64::NAN; alphas.len()]; betas.len()];
    let mut boundary = Vec::new();
    for (i, row) in rows.into_iter().enumerate() {
        let (a, b, l, u1, crit) = row?;
        csv.push_str(&format!("{},{},{},{},{}\n", fmt_f64(a), fmt_f64(b), fmt_f64(l), fmt_f64(u1), fmt_f64(crit)));
        values[i / alphas.len()][i % alphas.len()] = l;
        if i % alphas.len() == 0 && crit.is_finite() {
            boundary.push((crit * (1.0 - b), b));
        }
    }
    em.write("stability_map.csv", &csv)?;
    if cfg.plot {
        let map = Heatmap {
            title: "final loss".into(),
            x_label: "alpha".into(),
            y_label: "beta".into(),
            xs: alphas,
            ys: betas,
            values,
            log_color: true,
            boundary,
        };
        em.write("stability_map.svg", &heatmap_svg(&map)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct AsymptoticsOutput<'a> {
    fit: &'a PowerLawFit,
    #[serde(serialize_with = "json::f64")]
    zeta: f64,
    params: &'a SgdParams,
    stability: crate::genfunc::StabilityReport,
    asymptote: crate::asymptotics::AsymptoteReport,
    truncation_tail: Option<TailEstimate>,
}

fn cmd_asymptotics(cfg: &ExperimentConfig, em: &mut Emitter) -> Result<()> {
    let loaded = load_problem(source(cfg), cfg.dataset_size)?;
    let fit = fit_for(cfg, &loaded)?;
    let params = params_for(cfg, &loaded.spectrum, cfg.alpha.expect("validated"), cfg.beta, cfg.batches[0])?;
    let ctx = GenFuncContext::from_params(&loaded.spectrum, &params).with_tail_nu(fit.nu);
    let asymptote = loss_asymptote(&ctx, &fit)?;
    let out = AsymptoticsOutput {
        fit: &fit,
        zeta: fit.zeta(),
        params: &params,
        stability: stability_report(&ctx),
        asymptote: asymptote.clone(),
        truncation_tail: loaded.tail,
    };
    em.write("asymptotics.json", &json::to_string(&out))?;
    if cfg.plot {
        let traj = run_se(&loaded.spectrum, &params)?;
        em.write("trajectory_se.csv", &trajectory_csv(&traj))?;
        let mut s = Series::from_losses("se", &traj.losses);
        s.points.retain(|p| p.1 > 0.0 && p.1.is_finite());
        let mut guides = Vec::new();
        if asymptote.constant > 0.0 {
            guides.push(Guide {
                label: format!("{:.3e} t^{:.3}", asymptote.constant, asymptote.exponent),
                slope: asymptote.exponent,
                anchor: (1.0, asymptote.constant),
            });
        }
        let markers = asymptote.t_trans.map(|t| vec![Marker { label: "t_trans".into(), x: t }]).unwrap_or_default();
        let chart = LineChart { title: "loss asymptote".into(), x_label: "t".into(), y_label: "L(t)".into(), series: vec![s], guides, markers };
        em.write("asymptotics.svg", &line_chart_svg(&chart)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct DivergenceOutput<'a> {
    params: &'a SgdParams,
    divergence: DivergenceReport,
    blowup: Option<BlowupReport>,
    /// Reason the blow-up analysis was skipped, if it was.
    blowup_skipped: Option<String>,
    markers: Markers,
}

#[derive(Serialize)]
struct Markers {
    t_div: f64,
    t_blowup: Option<f64>,
}

fn cmd_divergence(cfg: &ExperimentConfig, em: &mut Emitter) -> Result<()> {
    let loaded = load_problem(source(cfg), cfg.dataset_size)?;
    let params = params_for(cfg, &loaded.spectrum, cfg.alpha.expect("validated"), cfg.beta, cfg.batches[0])?;
    let ctx = GenFuncContext::from_params(&loaded.spectrum, &params);
    let divergence = solve_divergence(&ctx)?;
    let (blowup, blowup_skipped) = match fit_for(cfg, &loaded).and_then(|fit| blowup_time(&ctx, &fit)) {
        Ok(b) => (Some(b), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let traj = run_se(&loaded.spectrum, &params)?;
    em.write("trajectory_se.csv", &trajectory_csv(&traj))?;
    em.write("trajectory_se.json", &sidecar(&traj, source(cfg), loaded.tail))?;
    let markers = Markers { t_div: divergence.t_div, t_blowup: blowup.map(|b| b.t_blowup) };
    if cfg.plot {
        let mut s = Series::from_losses("se", &traj.losses);
        s.points.retain(|p| p.1 > 0.0 && p.1.is_finite());
        let mut m = vec![Marker { label: "t_div".into(), x: markers.t_div }];
        if let Some(t) = markers.t_blowup {
            m.push(Marker { label: "t_blowup".into(), x: t });
        }
        let chart = LineChart { title: "divergence".into(), x_label: "t".into(), y_label: "L(t)".into(), series: vec![s], guides: vec![], markers: m };
        em.write("divergence.svg", &line_chart_svg(&chart)?)?;
    }
    let out = DivergenceOutput { params: &params, divergence, blowup, blowup_skipped, markers };
    em.write("divergence.json", &json::to_string(&out))?;
    Ok(())
}

fn phase_code(p: PhaseLabel) -> f64 {
    match p {
        PhaseLabel::ImmediateDivergence => 0.0,
        PhaseLabel::EventualDivergence => 1.0,
        PhaseLabel::SignalDominated => 2.0,
        PhaseLabel::Boundary => 2.5,
        PhaseLabel::NoiseDominated => 3.0,
    }
}

/// One phase-diagram cell. Without `alpha` the constant is taken at half the
/// critical learning rate of that cell's spectrum.
pub fn phase_cell(template: &PowerLawSpec, nu: f64, zeta: f64, alpha: Option<f64>, beta: f64, gamma: f64, tau: f64) -> (PhaseLabel, f64, f64) {
    let phase = classify_phase(nu, zeta);
    let exponent = match phase {
        PhaseLabel::SignalDominated | PhaseLabel::Boundary => -zeta,
        PhaseLabel::NoiseDominated => 1.0 / nu - 2.0,
        _ => f64::NAN,
    };
    let constant = if matches!(phase, PhaseLabel::SignalDominated | PhaseLabel::NoiseDominated) {
        let spec = PowerLawSpec { nu, kappa: zeta * nu, ..*template };
        build_power_law(&spec)
            .and_then(|s| {
                let a = match alpha {
                    Some(a) => a,
                    None => 0.5 * critical_alpha(&s, beta, gamma, tau)?,
                };
                let ctx = GenFuncContext::new(&s, a, beta, gamma, tau).with_tail_nu(nu);
                loss_asymptote(&ctx, &PowerLawFit::from_spec(&spec)).map(|r| r.constant)
            })
            .unwrap_or(f64::NAN)
    } else {
        f64::NAN
    };
    (phase, exponent, constant)
}

fn cmd_phase_diagram(cfg: &ExperimentConfig, em: &mut Emitter) -> Result<()> {
    let template = match source(cfg) {
        ProblemSource::PowerLaw(spec) => *spec,
        _ => return Err(Error::Config("phase-diagram works on synthetic power-law spectra only".into())),
    };
    let gamma = match cfg.gamma {
        Some(g) => g,
        None => gamma_for_batch(cfg.dataset_size.unwrap_or(DatasetSize::Infinite), cfg.batches[0])?,
    };
    let (g_eff, tau) = (gamma * cfg.tau1, if cfg.tau1 != 0.0 { cfg.tau2 / cfg.tau1 } else { 0.0 });
    let nus = cfg.grid_nu.values();
    let zetas = cfg.grid_zeta.values();
    let cells: Vec<(f64, f64)> = nus.iter().flat_map(|&n| zetas.iter().map(move |&z| (n, z))).collect();
    let pool = thread_pool(cfg.threads)?;
    let rows: Vec<(PhaseLabel, f64, f64)> = pool.install(|| {
        cells.par_iter().map(|&(n, z)| phase_cell(&template, n, z, cfg.alpha, cfg.beta, g_eff, tau)).collect()
    });
    let mut csv = String::from("nu,zeta,phase,exponent,constant\n");
    let mut values = vec![vec![f64::NAN; nus.len()]; zetas.len()];
    for (i, ((n, z), (p, e, c))) in cells.iter().zip(&rows).enumerate() {
        csv.push_str(&format!("{},{},{},{},{}\n", fmt_f64(*n), fmt_f64(*z), p.as_str(), fmt_f64(*e), fmt_f64(*c)));
        values[i % zetas.len()][i / zetas.len()] = phase_code(*p);
    }
    em.write("phase_diagram.csv", &csv)?;
    if cfg.plot {
        let boundary: Vec<(f64, f64)> = nus
            .iter()
            .filter(|&&n| n > 1.0)
            .map(|&n| (n, 2.0 - 1.0 / n))
            .filter(|&(_, z)| z >= cfg.grid_zeta.lo && z <= cfg.grid_zeta.hi)
            .collect();
        let map = Heatmap {
            title: "phase".into(),
            x_label: "nu".into(),
            y_label: "zeta".into(),
            xs: nus,
            ys: zetas,
            values,
            log_color: false,
            boundary,
        };
        em.write("phase_diagram.svg", &heatmap_svg(&map)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct FitOutput {
    fit: PowerLawFit,
    #[serde(serialize_with = "json::f64")]
    zeta: f64,
    phase: PhaseLabel,
    modes: usize,
    dataset_size: String,
}

fn cmd_fit(cfg: &ExperimentConfig, em: &mut Emitter) -> Result<()> {
    let loaded = load_problem(source(cfg), cfg.dataset_size)?;
    let fit = fit_power_law(&loaded.spectrum, cfg.tail_start.unwrap_or(1))?;
    let out = FitOutput {
        fit,
        zeta: fit.zeta(),
        phase: classify_phase(fit.nu, fit.zeta()),
        modes: loaded.spectrum.len(),
        dataset_size: loaded.spectrum.dataset_size().to_string(),
    };
    em.write("fit.json", &json::to_string(&out))?;
    if cfg.plot {
        let pts = loaded.spectrum.lambdas().iter().enumerate().map(|(k, l)| ((k + 1) as f64, *l)).collect();
        let chart = LineChart {
            title: "eigenvalues".into(),
            x_label: "k".into(),
            y_label: "lambda_k".into(),
            series: vec![Series::new("lambda", pts)],
            guides: vec![Guide { label: format!("k^-{:.3}", fit.nu), slope: -fit.nu, anchor: (1.0, fit.lambda_scale) }],
            markers: vec![],
        };
        em.write("fit.svg", &line_chart_svg(&chart)?)?;
    }
    Ok(())
}

fn cmd_se_error(cfg: &ExperimentConfig, em: &mut Emitter) -> Result<()> {
    let loaded = load_problem(source(cfg), cfg.dataset_size)?;
    let problem = needs_problem(&loaded, "se-error")?;
    let report = se_fit_error(problem, &problem.initial_moment(), cfg.tau1, cfg.tau2)?;
    em.write("se_error.json", &json::to_string(&report))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parse() {
        let g: Grid = "0.1:4:40".parse().unwrap();
        let v = g.values();
        assert_eq!(v.len(), 40);
        assert_eq!(v[0], 0.1);
        assert_eq!(v[39], 4.0);
        assert!("1:0:3".parse::<Grid>().is_err());
        assert!("1:2".parse::<Grid>().is_err());
    }

    #[test]
    fn minimal_flags() {
        let cfg = parse_args(["x", "simulate", "--nu", "1.5", "--kappa", "3", "--alpha", "0.5", "--beta", "0", "--batch", "10"]).unwrap();
        assert_eq!(cfg.tau1, 1.0);
        assert_eq!(cfg.tau2, 1.0);
        assert_eq!(cfg.runs, 1000);
        assert_eq!(cfg.steps, 10_000);
        assert_eq!(cfg.batches, vec![10]);
    }

    #[test]
    fn conflicts_and_ranges() {
        let e = parse_args(["x", "fit", "--csv", "a.csv", "--nu", "1.5"]).unwrap_err();
        assert!(e.to_string().contains("conflicting"));
        let e = parse_args(["x", "simulate", "--nu", "1.5", "--kappa", "3", "--alpha", "0.5", "--beta", "1.5"]).unwrap_err();
        assert!(e.to_string().contains("(-1, 1)"));
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn negative_momentum_flag() {
        let cfg = parse_args(["x", "simulate", "--nu", "1.5", "--kappa", "3", "--alpha", "0.5", "--beta", "-0.3"]).unwrap();
        assert_eq!(cfg.beta, -0.3);
    }
}
