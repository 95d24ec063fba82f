//! Monte Carlo estimation of `E[sup_t ||f_t - fbar_t||^q]^{1/q}` across the
//! Kraichnan family and log-log rate fitting against the predicted exponents.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_io::write_field;
use crate::grid::{Grid, ScalarField};
use crate::initial::InitialData;
use crate::noise::{CovarianceSpec, NoiseBasis, SeedCoords};
use crate::norms::{lebesgue_norm_values, NormSpec, SobolevWeights};
use crate::solvers::{SolverConfig, Stepper, DEFAULT_NOISE_CFL};
use crate::stats::{moment, ols, percentile, Bootstrap};

/// Largest admissible `||f - fbar - Z||_2 / ||f_0||_2` at any step.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Soft gate on the relative change of the smallest-ell estimate when `L` doubles.
pub const L_DOUBLING_TOL: f64 = 0.15;
/// Gate on the spread (max / min) of the implied bound constants.
pub const CONSTANT_SPREAD_TOL: f64 = 10.0;

const BOOTSTRAP_SALT: u64 = 0x5eed_b007_5742_0001;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Equation {
    Transport,
    Euler,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    #[default]
    Homogeneous,
    Inhomogeneous,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseChoice {
    #[default]
    Kraichnan,
    /// No noise at all (`kappa = 0`); a control run.
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub equation: Equation,
    pub dim: usize,
    pub box_length: f64,
    pub points_per_dim: usize,
    /// Lebesgue exponent of the initial data.
    pub p: f64,
    /// Sobolev index of the error norm (the norm is of order `-alpha`).
    pub alpha: f64,
    /// Moment order; `None` picks 2 for transport, `ceil(p') + 1` for Euler.
    #[serde(default)]
    pub q: Option<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub ell_grid: Vec<f64>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub norm_kind: NormKind,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub initial: InitialData,
    #[serde(default)]
    pub noise: NoiseChoice,
    #[serde(default)]
    pub mollify: Option<f64>,
    #[serde(default = "default_true")]
    pub dealias: bool,
    #[serde(default = "default_noise_cfl")]
    pub noise_cfl: f64,
    #[serde(default = "default_bootstrap")]
    pub bootstrap_resamples: usize,
    #[serde(default)]
    pub l_doubling: bool,
    #[serde(default)]
    pub per_path_csv: bool,
    #[serde(default)]
    pub snapshot_every: Option<usize>,
}

fn default_lambda() -> f64 {
    1.0
}
fn default_epsilon() -> f64 {
    0.01
}
fn default_true() -> bool {
    true
}
fn default_noise_cfl() -> f64 {
    DEFAULT_NOISE_CFL
}
fn default_bootstrap() -> usize {
    1000
}

/// Which estimate the configuration falls under.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum Regime {
    /// Homogeneous norm, `alpha in (d/2, d/2 + 1)`.
    TransportHomogeneous,
    /// Homogeneous norm, `alpha` at or below `d/2`, via the mixed interpolation.
    TransportHomogeneousInterpolated { theta: f64 },
    /// Inhomogeneous norm, `alpha in (d(1/p - 1/2), d/2]`.
    TransportInhomogeneous { weight: f64 },
    Euler { theta: f64 },
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dim, self.box_length, self.points_per_dim)
    }

    pub fn effective_q(&self) -> f64 {
        match (self.q, self.equation) {
            (Some(q), _) => q,
            (None, Equation::Transport) => 2.0,
            (None, Equation::Euler) => (self.p / (self.p - 1.0)).ceil() + 1.0,
        }
    }

    /// Same config with every default made explicit.
    pub fn resolved(&self) -> Self {
        Self { q: Some(self.effective_q()), ..self.clone() }
    }

    /// `r = p / (2 - p)`, infinite at `p = 2`.
    pub fn r_exponent(&self) -> f64 {
        if self.p >= 2.0 {
            f64::INFINITY
        } else {
            self.p / (2.0 - self.p)
        }
    }

    pub fn norm_spec(&self) -> NormSpec {
        match self.norm_kind {
            NormKind::Homogeneous => NormSpec::HomogeneousSobolev { order: -self.alpha },
            NormKind::Inhomogeneous => NormSpec::InhomogeneousSobolev { order: -self.alpha },
        }
    }

    pub fn solver_config(&self, kappa: f64) -> Result<SolverConfig> {
        let mut s = SolverConfig::new(kappa, self.dt, self.horizon)?;
        s.dealias = self.dealias;
        s.noise_cfl = self.noise_cfl;
        Ok(s)
    }

    /// Checks structure and the hypothesis window of the matching estimate.
    pub fn regime(&self) -> Result<Regime> {
        let d = self.dim as f64;
        let (p, a, eps) = (self.p, self.alpha, self.epsilon);
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::ParameterOutOfRange(format!("epsilon {eps} not in (0, 1)")));
        }
        if self.effective_q() < 1.0 {
            return Err(Error::ParameterOutOfRange(format!("moment order {} < 1", self.effective_q())));
        }
        match self.equation {
            Equation::Transport => {
                if !(p > 1.0 && p <= 2.0) {
                    return Err(Error::ParameterOutOfRange(format!("transport needs p in (1, 2], got {p}")));
                }
                match self.norm_kind {
                    NormKind::Homogeneous => {
                        if a > d / 2.0 && a < d / 2.0 + 1.0 {
                            return Ok(Regime::TransportHomogeneous);
                        }
                        let lo = d * (d + 2.0) * (2.0 - p) / (2.0 * (2.0 * p + d * (2.0 - p)));
                        if a > lo && a <= d / 2.0 {
                            let theta = p * (d / 2.0 + eps - a) / (d * (p - 1.0));
                            if !(theta > 0.0 && theta < 1.0) {
                                return Err(Error::ParameterOutOfRange(format!(
                                    "interpolation weight {theta} not in (0, 1) for alpha = {a}, epsilon = {eps}"
                                )));
                            }
                            return Ok(Regime::TransportHomogeneousInterpolated { theta });
                        }
                        Err(Error::ParameterOutOfRange(format!(
                            "homogeneous transport needs alpha in ({lo:.4}, {}] or ({}, {}), got {a}",
                            d / 2.0,
                            d / 2.0,
                            d / 2.0 + 1.0
                        )))
                    }
                    NormKind::Inhomogeneous => {
                        let lo = d * (1.0 / p - 0.5);
                        if !(a > lo && a <= d / 2.0) {
                            return Err(Error::ParameterOutOfRange(format!(
                                "inhomogeneous transport needs alpha in ({lo:.4}, {}], got {a}",
                                d / 2.0
                            )));
                        }
                        if !(eps < (a - lo).min(1.0)) {
                            return Err(Error::ParameterOutOfRange(format!(
                                "epsilon must be below min(1, alpha - d(1/p - 1/2)) = {:.4}",
                                (a - lo).min(1.0)
                            )));
                        }
                        Ok(Regime::TransportInhomogeneous { weight: eps / (d + 4.0 * eps - 2.0 * a) })
                    }
                }
            }
            Equation::Euler => {
                if self.dim != 2 {
                    return Err(Error::ParameterOutOfRange("Euler needs d = 2".into()));
                }
                if !(p > 2f64.sqrt() && p < 2.0) {
                    return Err(Error::ParameterOutOfRange(format!("Euler needs p in (sqrt 2, 2), got {p}")));
                }
                if !(a > 2.0 - p && a < 2.0 - 2.0 / p) {
                    return Err(Error::ParameterOutOfRange(format!(
                        "Euler needs alpha in ({:.4}, {:.4}), got {a}",
                        2.0 - p,
                        2.0 - 2.0 / p
                    )));
                }
                if self.norm_kind != NormKind::Homogeneous {
                    return Err(Error::ParameterOutOfRange("Euler estimate is for the homogeneous norm".into()));
                }
                let pc = p / (p - 1.0);
                if !(self.effective_q() > pc) {
                    return Err(Error::ParameterOutOfRange(format!(
                        "Euler needs q > p' = {pc:.4}, got {}",
                        self.effective_q()
                    )));
                }
                let theta = pc * (1.0 - a + eps) / 2.0;
                if !(theta > 0.0 && theta < 1.0) {
                    return Err(Error::ParameterOutOfRange(format!("theta = {theta} not in (0, 1)")));
                }
                Ok(Regime::Euler { theta })
            }
        }
    }

    /// Exponents `(a, b)` with bound `||f_0||_p ||g||_1^a ||g||_r^b`.
    pub fn bound_powers(&self) -> Result<(f64, f64)> {
        Ok(match self.regime()? {
            Regime::TransportHomogeneous => (0.0, 0.5),
            Regime::TransportHomogeneousInterpolated { theta } | Regime::Euler { theta } => {
                (theta / 2.0, (1.0 - theta) / 2.0)
            }
            Regime::TransportInhomogeneous { weight } => (0.5 - weight, weight),
        })
    }

    /// Full validation: structure, hypotheses, grid, initial data,
    /// resolvability of every ell.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        self.regime()?;
        if self.ell_grid.is_empty() || self.ell_grid.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidConfig("ell_grid must hold positive values".into()));
        }
        if self.samples == 0 {
            return Err(Error::InvalidConfig("samples must be >= 1".into()));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidConfig("lambda must be positive".into()));
        }
        if let Some(n) = self.mollify {
            if !(n > 0.0) {
                return Err(Error::InvalidConfig("mollify must be positive".into()));
            }
        }
        if self.snapshot_every == Some(0) {
            return Err(Error::InvalidConfig("snapshot_every must be >= 1".into()));
        }
        self.solver_config(0.0)?;
        self.initial.validate(&grid)?;
        if self.noise == NoiseChoice::Kraichnan {
            for &ell in &self.ell_grid {
                let support = 2.0 / ell;
                let reach = support + grid.fundamental() * (self.dim as f64).sqrt() / 2.0;
                if reach >= grid.max_wavenumber() {
                    return Err(Error::UnresolvedSpectrum { support, max_wavenumber: grid.max_wavenumber() });
                }
            }
        }
        Ok(())
    }

    pub fn covariance(&self, ell: f64) -> Result<CovarianceSpec> {
        let base = match self.noise {
            NoiseChoice::Kraichnan => CovarianceSpec::kraichnan(self.dim, ell, self.lambda)?,
            NoiseChoice::Zero => CovarianceSpec::zero(self.dim)?,
        };
        match self.mollify {
            Some(n) => base.mollify(n),
            None => Ok(base),
        }
    }
}

/// Exponent `s` in `error ~ ell^s` implied by the bound, using
/// `||g_ell||_r ~ ell^{d(r-1)/r}` and `||g_ell||_1 = 1`.
pub fn predicted_exponent(cfg: &ExperimentConfig) -> Result<f64> {
    let (_, b) = cfg.bound_powers()?;
    let r = cfg.r_exponent();
    let d = cfg.dim as f64;
    let decay = if r.is_infinite() { d } else { d * (r - 1.0) / r };
    Ok(b * decay)
}

/// One path's summary.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSummary {
    pub sup_error: f64,
    pub sup_z: f64,
    pub max_defect: f64,
    /// `(t, ||f - fbar||, ||f||_p)` per step when requested.
    pub series: Vec<(f64, f64, Option<f64>)>,
}

/// Monte Carlo result for one ell.
#[derive(Clone, Debug, Serialize)]
pub struct EllResult {
    pub ell: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub z_estimate: f64,
    pub z_stderr: f64,
    pub max_identity_defect: f64,
    pub kappa: f64,
    pub basis_modes: usize,
    pub spectral_norm_1: f64,
    pub spectral_norm_r: f64,
    pub bound_rhs: f64,
    #[serde(skip)]
    pub path_values: Vec<f64>,
    #[serde(skip)]
    pub paths: Vec<PathSummary>,
}

struct EllContext<'a> {
    cfg: &'a ExperimentConfig,
    grid: Grid,
    basis: NoiseBasis,
    solver: SolverConfig,
    f0: ScalarField,
    weights: SobolevWeights,
    snapshot_dir: Option<(PathBuf, usize)>,
}

fn run_path(ctx: &EllContext, sample: u64) -> Result<PathSummary> {
    let cfg = ctx.cfg;
    let mut st = Stepper::new(&ctx.grid, &ctx.solver)?;
    if cfg.per_path_csv && cfg.equation == Equation::Transport {
        st.record_lp = Some(cfg.p);
    }
    let mut state = st.init_state(&ctx.f0)?;
    let threshold = IDENTITY_TOL * state.initial_l2;
    let mut out = PathSummary { sup_error: 0.0, sup_z: 0.0, max_defect: 0.0, series: Vec::new() };
    for n in 0..ctx.solver.steps() {
        let coords = SeedCoords::new(cfg.seed, sample, n as u64);
        match cfg.equation {
            Equation::Transport => {
                st.transport_step(&mut state, &ctx.basis, coords)?;
                let defect = state.identity_defect();
                if defect > threshold {
                    return Err(Error::IdentityDefect { defect, threshold });
                }
                out.max_defect = out.max_defect.max(defect);
                out.sup_z = out.sup_z.max(ctx.weights.norm_of(&state.z.coeffs));
            }
            Equation::Euler => {
                st.vorticity_step(&mut state.f, Some(&ctx.basis), coords)?;
                st.vorticity_step(&mut state.fbar, None, coords)?;
                state.step += 1;
                state.time = state.step as f64 * ctx.solver.dt;
                state.check_mass()?;
            }
        }
        let err = ctx.weights.norm_of_difference(&state.f.coeffs, &state.fbar.coeffs);
        out.sup_error = out.sup_error.max(err);
        if cfg.per_path_csv {
            let lp = state.diagnostics.last().and_then(|d| d.lp_norm);
            out.series.push((state.time, err, lp));
        }
        if let Some((dir, tag)) = &ctx.snapshot_dir {
            if sample == 0 && (n + 1) % cfg.snapshot_every.unwrap_or(usize::MAX) == 0 {
                let mut f = ScalarField::zeros(&ctx.grid);
                st.to_real_into(&state.f, &mut f.values);
                write_field(&dir.join(format!("ell{tag}_step{:06}_f.fld", n + 1)), &f, "f", state.time)?;
                st.to_real_into(&state.fbar, &mut f.values);
                write_field(&dir.join(format!("ell{tag}_step{:06}_fbar.fld", n + 1)), &f, "fbar", state.time)?;
            }
        }
    }
    Ok(out)
}

/// Runs `cfg.samples` paths at one ell (in parallel on the current rayon
/// pool) and returns the q-th moment estimate of the sup-in-time error.
pub fn mc_estimate(cfg: &ExperimentConfig, ell: f64) -> Result<EllResult> {
    mc_estimate_with(cfg, ell, None, 0)
}

fn mc_estimate_with(cfg: &ExperimentConfig, ell: f64, snapshot_dir: Option<&Path>, tag: usize) -> Result<EllResult> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let spec = cfg.covariance(ell)?;
    let basis = NoiseBasis::build(&spec, &grid)?;
    let kappa = basis.kappa_grid();
    let solver = cfg.solver_config(kappa)?;
    let f0 = cfg.initial.sample(&grid)?;
    if cfg.equation == Equation::Euler {
        crate::norms::require_mean_zero(&f0).map_err(|e| match e {
            Error::MeanNotZero { mean, threshold } => Error::NonzeroMeanVorticity { mean, threshold },
            other => other,
        })?;
    }
    let weights = SobolevWeights::new(&grid, cfg.norm_spec())?;
    let ctx = EllContext {
        cfg,
        grid: grid.clone(),
        basis,
        solver,
        f0,
        weights,
        snapshot_dir: match (snapshot_dir, cfg.snapshot_every) {
            (Some(d), Some(_)) => Some((d.to_path_buf(), tag)),
            _ => None,
        },
    };
    let paths: Vec<PathSummary> =
        (0..cfg.samples as u64).into_par_iter().map(|m| run_path(&ctx, m)).collect::<Result<Vec<_>>>()?;
    let q = cfg.effective_q();
    let values: Vec<f64> = paths.iter().map(|p| p.sup_error).collect();
    let zs: Vec<f64> = paths.iter().map(|p| p.sup_z).collect();
    let mut boot = Bootstrap::new(cfg.seed ^ BOOTSTRAP_SALT ^ ell.to_bits());
    let stderr = boot.moment_stderr(&values, q, cfg.bootstrap_resamples);
    let z_stderr = boot.moment_stderr(&zs, q, cfg.bootstrap_resamples);
    let r = cfg.r_exponent();
    let norm1 = spec.spectral_norm(1.0)?;
    let norm_r = spec.spectral_norm(r)?;
    let (a, b) = cfg.bound_powers()?;
    let f0_p = lebesgue_norm_values(&grid, &ctx.f0.values, cfg.p);
    Ok(EllResult {
        ell,
        estimate: moment(&values, q),
        stderr,
        z_estimate: moment(&zs, q),
        z_stderr,
        max_identity_defect: paths.iter().map(|p| p.max_defect).fold(0.0, f64::max),
        kappa,
        basis_modes: ctx.basis.basis_size(),
        spectral_norm_1: norm1,
        spectral_norm_r: norm_r,
        bound_rhs: f0_p * norm1.powf(a) * norm_r.powf(b),
        path_values: values,
        paths,
    })
}

/// Identity check and stochastic convolution moment for one ell.
#[derive(Clone, Debug, Serialize)]
pub struct ConvolutionReport {
    pub ell: f64,
    pub max_defect: f64,
    pub threshold: f64,
    pub z_estimate: f64,
    pub z_stderr: f64,
}

pub fn convolution_consistency(cfg: &ExperimentConfig, ell: f64) -> Result<ConvolutionReport> {
    if cfg.equation != Equation::Transport {
        return Err(Error::InvalidConfig("convolution consistency is defined for transport only".into()));
    }
    let res = mc_estimate(cfg, ell)?;
    let f0 = cfg.initial.sample(&cfg.grid()?)?;
    let threshold = IDENTITY_TOL * lebesgue_norm_values(&f0.grid, &f0.values, 2.0);
    Ok(ConvolutionReport {
        ell,
        max_defect: res.max_identity_defect,
        threshold,
        z_estimate: res.z_estimate,
        z_stderr: res.z_stderr,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Gates {
    /// Adjacent estimates (ell decreasing) drop by more than two combined standard errors.
    pub monotone_2sigma: bool,
    /// Fitted slope is at least half the predicted exponent.
    pub slope_at_least_half: bool,
    /// max / min of the per-ell implied constants is within the spread tolerance.
    pub constants_uniform: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RateFit {
    pub ell_values: Vec<f64>,
    pub estimates: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_ci: [f64; 2],
    pub predicted_exponent: f64,
    pub bound_constant: f64,
    pub constant_spread: f64,
    pub gates: Gates,
}

/// Log-log least squares of estimate against ell with a bootstrap 95%
/// interval over the per-path values.
pub fn fit_rate(cfg: &ExperimentConfig, results: &[EllResult]) -> Result<RateFit> {
    let mut pts: Vec<&EllResult> = results.iter().filter(|r| r.estimate > 0.0).collect();
    pts.sort_by(|a, b| b.ell.partial_cmp(&a.ell).unwrap());
    pts.dedup_by(|a, b| a.ell == b.ell);
    if pts.len() < 3 {
        return Err(Error::DegenerateFit(format!("{} distinct ell values with positive estimates, need 3", pts.len())));
    }
    let x: Vec<f64> = pts.iter().map(|r| r.ell.ln()).collect();
    let y: Vec<f64> = pts.iter().map(|r| r.estimate.ln()).collect();
    let (slope, intercept) = ols(&x, &y)?;
    let q = cfg.effective_q();
    let mut boot = Bootstrap::new(cfg.seed ^ BOOTSTRAP_SALT);
    let mut slopes = Vec::with_capacity(cfg.bootstrap_resamples);
    for _ in 0..cfg.bootstrap_resamples {
        let yb: Vec<f64> = pts.iter().map(|r| moment(&boot.resample(&r.path_values), q).ln()).collect();
        if yb.iter().all(|v| v.is_finite()) {
            slopes.push(ols(&x, &yb)?.0);
        }
    }
    let slope_ci = if slopes.len() >= 2 {
        [percentile(&slopes, 2.5).min(slope), percentile(&slopes, 97.5).max(slope)]
    } else {
        [slope, slope]
    };
    let implied: Vec<f64> = pts.iter().map(|r| r.estimate / r.bound_rhs).collect();
    let cmax = implied.iter().cloned().fold(0.0, f64::max);
    let cmin = implied.iter().cloned().fold(f64::INFINITY, f64::min);
    let predicted = predicted_exponent(cfg)?;
    let monotone = pts
        .windows(2)
        .all(|w| w[0].estimate - w[1].estimate > 2.0 * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt());
    Ok(RateFit {
        ell_values: pts.iter().map(|r| r.ell).collect(),
        estimates: pts.iter().map(|r| r.estimate).collect(),
        stderrs: pts.iter().map(|r| r.stderr).collect(),
        slope,
        intercept,
        slope_ci,
        predicted_exponent: predicted,
        bound_constant: cmax,
        constant_spread: cmax / cmin,
        gates: Gates {
            monotone_2sigma: monotone,
            slope_at_least_half: slope >= 0.5 * predicted,
            constants_uniform: cmax / cmin <= CONSTANT_SPREAD_TOL,
        },
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LDoubling {
    pub ell: f64,
    pub estimate: f64,
    pub doubled_estimate: f64,
    pub relative_change: f64,
    pub within_tolerance: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RateReport {
    pub results: Vec<EllResult>,
    pub fit: RateFit,
    pub l_doubling: Option<LDoubling>,
}

/// Full ell sweep, fit, and the optional domain-doubling check.
/// `snapshot_dir` receives `.fld` files when `snapshot_every` is set.
pub fn run_rate(cfg: &ExperimentConfig, snapshot_dir: Option<&Path>) -> Result<RateReport> {
    cfg.validate()?;
    let mut results = Vec::with_capacity(cfg.ell_grid.len());
    for (i, &ell) in cfg.ell_grid.iter().enumerate() {
        results.push(mc_estimate_with(cfg, ell, snapshot_dir, i)?);
    }
    let fit = fit_rate(cfg, &results)?;
    let l_doubling = if cfg.l_doubling {
        let smallest = results.iter().min_by(|a, b| a.ell.partial_cmp(&b.ell).unwrap()).unwrap();
        let doubled = ExperimentConfig {
            box_length: 2.0 * cfg.box_length,
            points_per_dim: 2 * cfg.points_per_dim,
            initial: recentre(&cfg.initial, cfg.box_length),
            ell_grid: vec![smallest.ell],
            snapshot_every: None,
            ..cfg.clone()
        };
        let big = mc_estimate(&doubled, smallest.ell)?;
        let rel = (big.estimate - smallest.estimate).abs() / smallest.estimate;
        Some(LDoubling {
            ell: smallest.ell,
            estimate: smallest.estimate,
            doubled_estimate: big.estimate,
            relative_change: rel,
            within_tolerance: rel <= L_DOUBLING_TOL,
        })
    } else {
        None
    };
    Ok(RateReport { results, fit, l_doubling })
}

/// Shifts an explicit centre by `L / 2` so the data sits at the same place
/// relative to the centre of the doubled box.
fn recentre(init: &InitialData, l: f64) -> InitialData {
    let shift = |c: &Option<[f64; 2]>| c.map(|c| [c[0] + l / 2.0, c[1] + l / 2.0]);
    match init {
        InitialData::Bump { center, radius, amplitude } => {
            InitialData::Bump { center: shift(center), radius: *radius, amplitude: *amplitude }
        }
        InitialData::Singular { center, beta, radius, amplitude } => {
            InitialData::Singular { center: shift(center), beta: *beta, radius: *radius, amplitude: *amplitude }
        }
        InitialData::SingularDipole { center, beta, radius, separation, amplitude } => InitialData::SingularDipole {
            center: shift(center),
            beta: *beta,
            radius: *radius,
            separation: *separation,
            amplitude: *amplitude,
        },
    }
}

/// `ell, estimate, stderr, bound_rhs`.
pub fn write_rates_csv(path: &Path, results: &[EllResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["ell", "estimate", "stderr", "bound_rhs"])?;
    for r in results {
        w.write_record([r.ell.to_string(), r.estimate.to_string(), r.stderr.to_string(), r.bound_rhs.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-path `time, error, lp_norm` files; returns the paths written.
pub fn write_path_csvs(dir: &Path, results: &[EllResult]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (i, r) in results.iter().enumerate() {
        for (m, p) in r.paths.iter().enumerate() {
            if p.series.is_empty() {
                continue;
            }
            let path = dir.join(format!("path_ell{i}_sample{m}.csv"));
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["time", "error", "lp_norm"])?;
            for (t, e, lp) in &p.series {
                w.write_record([t.to_string(), e.to_string(), lp.map(|v| v.to_string()).unwrap_or_default()])?;
            }
            w.flush()?;
            written.push(path);
        }
    }
    Ok(written)
}

#[derive(Serialize)]
struct FitJson<'a> {
    fit: &'a RateFit,
    results: &'a [EllResult],
    l_doubling: &'a Option<LDoubling>,
    regime: Regime,
    q: f64,
    dealias: bool,
    sup_recording: &'static str,
    config: &'a ExperimentConfig,
    code_version: &'static str,
}

pub fn write_fit_json(path: &Path, cfg: &ExperimentConfig, report: &RateReport) -> Result<()> {
    let doc = FitJson {
        fit: &report.fit,
        results: &report.results,
        l_doubling: &report.l_doubling,
        regime: cfg.regime()?,
        q: cfg.effective_q(),
        dealias: cfg.dealias,
        sup_recording: "every step",
        config: cfg,
        code_version: env!("CARGO_PKG_VERSION"),
    };
    std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}
