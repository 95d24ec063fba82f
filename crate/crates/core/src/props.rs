//! Deterministic property suites: heat-semigroup smoothing and continuity,
//! the mixed interpolation inequality, deterministic Navier-Stokes a-priori
//! bounds, the scheme-exact mild identity, L^p quasi-conservation, and the
//! noise validation battery.

use rustfft::num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, SpectralField, Transformer};
use crate::initial::InitialData;
use crate::noise::{CovarianceSpec, NoiseBasis, SeedCoords};
use crate::norms::{interpolation_check, interpolation_constants, lebesgue_norm_values, NormSpec, SobolevWeights};
use crate::numerics::{maximize_1d, pairwise_sum};
use crate::rng::{stream, CounterRng};
use crate::solvers::{SolverConfig, Stepper};
use crate::stats::ols;

pub const SUITES: [&str; 6] =
    ["heat-smoothing", "heat-continuity", "interp", "nse-bounds", "mild-identity", "lp-conservation"];

/// Relative slack on closed-form supremum bounds (round-off only).
pub const BOUND_SLACK: f64 = 1e-9;
/// Relative slack on the interpolation constant.
pub const INTERP_SLACK: f64 = 1e-6;
pub const NSE_LP_GROWTH: f64 = 1.02;
pub const NSE_TREND_FACTOR: f64 = 1.2;
pub const MILD_IDENTITY_TOL: f64 = 1e-10;
pub const LP_COARSE_TOL: f64 = 0.05;
pub const LP_SHRINK_RANGE: [f64; 2] = [1.4, 2.6];
pub const KAPPA_GRID_TOL: f64 = 0.02;
pub const COVARIANCE_TOL: f64 = 0.05;
pub const DIVERGENCE_TOL: f64 = 1e-10;
pub const ORTHOGONALITY_TOL: f64 = 1e-10;
pub const ISOTROPY_TOL: f64 = 1e-12;
pub const SCALING_TOL: f64 = 0.01;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, pass: value <= limit }
    }

    fn within(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), value, limit: hi, pass: (lo..=hi).contains(&value) }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    /// Extra numbers worth keeping next to the checks.
    pub details: serde_json::Value,
}

impl SuiteReport {
    fn new(suite: &str, checks: Vec<Check>, details: serde_json::Value) -> Self {
        Self { suite: suite.into(), passed: checks.iter().all(|c| c.pass), checks, details }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropsConfig {
    pub seed: u64,
    pub kappa: f64,
    pub heat_points: usize,
    pub heat_fields: usize,
    pub interp_points: usize,
    pub interp_box_length: f64,
    pub interp_fields: usize,
    pub interp_exponents: [f64; 3],
    pub nse_points: usize,
    pub nse_horizon: f64,
    pub nse_dt: f64,
    pub nse_p: f64,
    pub nse_initial: InitialData,
    pub mild_points: usize,
    pub mild_horizon: f64,
    pub mild_dt: f64,
    pub mild_ells: Vec<f64>,
    pub mild_seeds: Vec<u64>,
    pub lp_points: usize,
    pub lp_p: f64,
    pub lp_ell: f64,
    pub lp_horizon: f64,
    pub lp_dts: [f64; 2],
    pub lp_paths: usize,
    pub lp_initial: InitialData,
}

impl Default for PropsConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            kappa: 0.25,
            heat_points: 64,
            heat_fields: 100,
            interp_points: 64,
            interp_box_length: 8.0 * std::f64::consts::PI,
            interp_fields: 1000,
            interp_exponents: [0.4, 0.8, 1.2],
            nse_points: 256,
            nse_horizon: 1.0,
            nse_dt: 1e-3,
            nse_p: 1.6,
            nse_initial: InitialData::SingularDipole {
                center: None,
                beta: 1.24,
                radius: 1.0,
                separation: 0.5,
                amplitude: 1.0,
            },
            mild_points: 64,
            mild_horizon: 0.1,
            mild_dt: 2e-3,
            mild_ells: vec![0.4, 0.2],
            mild_seeds: vec![1, 2, 3],
            lp_points: 128,
            lp_p: 1.5,
            lp_ell: 0.4,
            lp_horizon: 0.12,
            lp_dts: [4e-3, 1e-3],
            lp_paths: 32,
            lp_initial: InitialData::Bump { center: None, radius: 1.0, amplitude: 1.0 },
        }
    }
}

impl PropsConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Random real band-limited field on `|j_i| <= kmax` with spectral decay
/// `(1 + |j|)^{-decay}` and, optionally, no zero mode.
pub fn random_field(grid: &Grid, rng: &mut CounterRng, kmax: i64, decay: f64, mean_zero: bool) -> ScalarField {
    let half = grid.n() as i64 / 2;
    let kmax = kmax.min(half - 1);
    let mut c = SpectralField::zeros(grid);
    let k1max = if grid.dim() == 2 { kmax } else { 0 };
    for j1 in -k1max..=k1max {
        for j0 in -kmax..=kmax {
            // One representative per Hermitian pair.
            if j1 < 0 || (j1 == 0 && j0 < 0) {
                continue;
            }
            let amp = (1.0 + ((j0 * j0 + j1 * j1) as f64).sqrt()).powf(-decay);
            if j0 == 0 && j1 == 0 {
                let v = if mean_zero { 0.0 } else { amp * rng.normal() };
                c.set_coeff([0, 0], Complex64::new(v, 0.0));
                continue;
            }
            let z = Complex64::new(rng.normal(), rng.normal()) * amp;
            c.set_coeff([j0, j1], z);
            c.set_coeff([-j0, -j1], z.conj());
        }
    }
    let mut f = ScalarField::zeros(grid);
    Transformer::new(grid).inverse_into(&c.coeffs, &mut f.values);
    f
}

pub fn run_suite(name: &str, cfg: &PropsConfig) -> Result<SuiteReport> {
    match name {
        "heat-smoothing" => heat_smoothing(cfg),
        "heat-continuity" => heat_continuity(cfg),
        "interp" => interp(cfg),
        "nse-bounds" => nse_bounds(cfg),
        "mild-identity" => mild_identity(cfg),
        "lp-conservation" => lp_conservation(cfg),
        other => Err(Error::Config(format!("unknown suite '{other}'; valid suites: {}", SUITES.join(", ")))),
    }
}

fn heat_times() -> Vec<f64> {
    (0..=12).map(|i| 10f64.powf(-3.0 + 0.25 * i as f64)).collect()
}

/// Draws the heat test fields together with their spectra.
fn heat_fields(cfg: &PropsConfig) -> Result<(Grid, Vec<SpectralField>)> {
    let grid = Grid::new(2, 2.0 * std::f64::consts::PI, cfg.heat_points)?;
    let mut rng = CounterRng::new(cfg.seed, stream::FIELDS);
    let mut t = Transformer::new(&grid);
    let half = grid.n() as i64 / 2;
    let fields = (0..cfg.heat_fields)
        .map(|_| {
            let kmax = 1 + rng.below((half - 1) as u64) as i64;
            let decay = 3.0 * rng.uniform();
            t.forward(&random_field(&grid, &mut rng, kmax, decay, true))
        })
        .collect();
    Ok((grid, fields))
}

fn heated(grid: &Grid, c: &SpectralField, kappa: f64, t: f64) -> Vec<Complex64> {
    (0..grid.len())
        .map(|s| {
            let [a, b] = grid.wavevector(s);
            c.coeffs[s] * (-kappa * (a * a + b * b) * t).exp()
        })
        .collect()
}

const HEAT_ORDERS: [f64; 3] = [-1.0, 0.0, 0.5];
const HEAT_RHOS: [f64; 2] = [0.5, 1.0];

/// `||e^{k t Delta} u||_{H^{a+r}} t^{r/2} / ||u||_{H^a}` against
/// `k^{-r/2} sup_s s^{r/2} e^{-s}` (homogeneous) and
/// `sup_s (t + s/k)^{r/2} e^{-s}` (inhomogeneous, `t <= 1`).
fn heat_smoothing(cfg: &PropsConfig) -> Result<SuiteReport> {
    let (grid, fields) = heat_fields(cfg)?;
    let k = cfg.kappa;
    let mut checks = Vec::new();
    for rho in HEAT_RHOS {
        let hom_bound = k.powf(-rho / 2.0) * (rho / 2.0).powf(rho / 2.0) * (-rho / 2.0).exp();
        let inh_bound = |t: f64| {
            let s = rho / 2.0 - k * t;
            if s > 0.0 {
                (rho / (2.0 * k)).powf(rho / 2.0) * (-s).exp()
            } else {
                t.powf(rho / 2.0)
            }
        };
        let mut worst_hom: f64 = 0.0;
        let mut worst_inh: f64 = 0.0;
        for alpha in HEAT_ORDERS {
            let wh = [
                SobolevWeights::new(&grid, NormSpec::HomogeneousSobolev { order: alpha })?,
                SobolevWeights::new(&grid, NormSpec::HomogeneousSobolev { order: alpha + rho })?,
            ];
            let wi = [
                SobolevWeights::new(&grid, NormSpec::InhomogeneousSobolev { order: alpha })?,
                SobolevWeights::new(&grid, NormSpec::InhomogeneousSobolev { order: alpha + rho })?,
            ];
            for c in &fields {
                let (h0, i0) = (wh[0].norm_of(&c.coeffs), wi[0].norm_of(&c.coeffs));
                for t in heat_times() {
                    let u = heated(&grid, c, k, t);
                    worst_hom = worst_hom.max(wh[1].norm_of(&u) * t.powf(rho / 2.0) / h0 / hom_bound);
                    worst_inh = worst_inh.max(wi[1].norm_of(&u) * t.powf(rho / 2.0) / i0 / inh_bound(t));
                }
            }
        }
        checks.push(Check::at_most(format!("homogeneous rho={rho} ratio/bound"), worst_hom, 1.0 + BOUND_SLACK));
        checks.push(Check::at_most(format!("inhomogeneous rho={rho} ratio/bound"), worst_inh, 1.0 + BOUND_SLACK));
    }
    Ok(SuiteReport::new(
        "heat-smoothing",
        checks,
        serde_json::json!({"fields": fields.len(), "kappa": k, "orders": HEAT_ORDERS, "times": heat_times()}),
    ))
}

/// `||(I - e^{k t Delta}) u||_{H^{a-r}} / (t^{r/2} ||u||_{H^a})` against
/// `k^{r/2} sup_s (1 - e^{-s}) s^{-r/2}` for both norm kinds.
fn heat_continuity(cfg: &PropsConfig) -> Result<SuiteReport> {
    let (grid, fields) = heat_fields(cfg)?;
    let k = cfg.kappa;
    let mut checks = Vec::new();
    let mut sups = Vec::new();
    for rho in HEAT_RHOS {
        let (_, sup) = maximize_1d(|s| if s > 0.0 { (1.0 - (-s).exp()) * s.powf(-rho / 2.0) } else { 0.0 }, 0.0, 40.0, 4000);
        sups.push(sup);
        let bound = k.powf(rho / 2.0) * sup;
        let mut worst_hom: f64 = 0.0;
        let mut worst_inh: f64 = 0.0;
        for alpha in HEAT_ORDERS {
            let specs = [
                (NormSpec::HomogeneousSobolev { order: alpha }, NormSpec::HomogeneousSobolev { order: alpha - rho }),
                (NormSpec::InhomogeneousSobolev { order: alpha }, NormSpec::InhomogeneousSobolev { order: alpha - rho }),
            ];
            for (n, (hi, lo)) in specs.into_iter().enumerate() {
                let (whi, wlo) = (SobolevWeights::new(&grid, hi)?, SobolevWeights::new(&grid, lo)?);
                for c in &fields {
                    let base = whi.norm_of(&c.coeffs);
                    for t in heat_times() {
                        let u = heated(&grid, c, k, t);
                        let r = wlo.norm_of_difference(&c.coeffs, &u) / (t.powf(rho / 2.0) * base) / bound;
                        if n == 0 {
                            worst_hom = worst_hom.max(r);
                        } else {
                            worst_inh = worst_inh.max(r);
                        }
                    }
                }
            }
        }
        checks.push(Check::at_most(format!("homogeneous rho={rho} ratio/bound"), worst_hom, 1.0 + BOUND_SLACK));
        checks.push(Check::at_most(format!("inhomogeneous rho={rho} ratio/bound"), worst_inh, 1.0 + BOUND_SLACK));
    }
    Ok(SuiteReport::new(
        "heat-continuity",
        checks,
        serde_json::json!({"fields": fields.len(), "kappa": k, "sup_factors": sups, "times": heat_times()}),
    ))
}

fn interp(cfg: &PropsConfig) -> Result<SuiteReport> {
    let [gamma, alpha, beta] = cfg.interp_exponents;
    let grid = Grid::new(2, cfg.interp_box_length, cfg.interp_points)?;
    let (derived, stated) = interpolation_constants(gamma, alpha, beta)?;
    let mut rng = CounterRng::new(cfg.seed, stream::FIELDS);
    let half = grid.n() as i64 / 2;
    let mut worst: f64 = 0.0;
    for _ in 0..cfg.interp_fields {
        let kmax = 1 + rng.below((half - 1) as u64) as i64;
        let decay = 4.0 * rng.uniform() - 1.0;
        let f = random_field(&grid, &mut rng, kmax, decay, true);
        worst = worst.max(interpolation_check(&f, gamma, alpha, beta)?.ratio);
    }
    // Single lattice modes sweep the closed-form ratio across |xi| = 1.
    let mut mode_defect: f64 = 0.0;
    for j in 1..half {
        let k = grid.fundamental() * j as f64;
        let f = ScalarField::from_fn(&grid, |x| (k * x[0]).cos());
        let got = interpolation_check(&f, gamma, alpha, beta)?.ratio;
        let want = crate::norms::interpolation_single_mode_ratio(k, gamma, alpha, beta)?;
        mode_defect = mode_defect.max((got - want).abs() / want);
        worst = worst.max(got);
    }
    let checks = vec![
        Check::at_most("max ratio vs derived constant", worst, derived * (1.0 + INTERP_SLACK)),
        Check::at_most("single-mode closed form relative defect", mode_defect, 1e-12),
    ];
    Ok(SuiteReport::new(
        "interp",
        checks,
        serde_json::json!({
            "fields": cfg.interp_fields,
            "exponents": cfg.interp_exponents,
            "max_ratio": worst,
            "derived_constant": derived,
            "stated_constant": stated,
            "within_stated_constant": worst <= stated * (1.0 + INTERP_SLACK),
        }),
    ))
}

/// Time series of the deterministic Navier-Stokes run.
#[derive(Clone, Debug, Serialize)]
pub struct NseSeries {
    pub times: Vec<f64>,
    /// `||w_t||_p / ||w_0||_p`.
    pub lp_ratio: Vec<f64>,
    /// `t^{1/2} ||grad w_t||_p / ||w_0||_p`.
    pub gradient_ratio: Vec<f64>,
}

pub fn nse_series(cfg: &PropsConfig) -> Result<NseSeries> {
    let grid = Grid::new(2, 2.0 * std::f64::consts::PI, cfg.nse_points)?;
    let w0 = cfg.nse_initial.sample(&grid)?;
    crate::norms::require_mean_zero(&w0).map_err(|e| match e {
        Error::MeanNotZero { mean, threshold } => Error::NonzeroMeanVorticity { mean, threshold },
        other => other,
    })?;
    let solver = SolverConfig::new(cfg.kappa, cfg.nse_dt, cfg.nse_horizon)?;
    let mut st = Stepper::new(&grid, &solver)?;
    let mut state = st.init_state(&w0)?;
    let p = cfg.nse_p;
    let base = lebesgue_norm_values(&grid, &w0.values, p);
    let mut out = NseSeries { times: Vec::new(), lp_ratio: Vec::new(), gradient_ratio: Vec::new() };
    let mut vals = vec![0.0; grid.len()];
    for n in 0..solver.steps() {
        st.vorticity_step(&mut state.fbar, None, SeedCoords::new(0, 0, n as u64))?;
        state.step += 1;
        let t = state.step as f64 * solver.dt;
        st.to_real_into(&state.fbar, &mut vals);
        let (gx, gy) = st.gradient_fields(&state.fbar);
        let grad: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
        out.times.push(t);
        out.lp_ratio.push(lebesgue_norm_values(&grid, &vals, p) / base);
        out.gradient_ratio.push(t.sqrt() * lebesgue_norm_values(&grid, &grad, p) / base);
    }
    let mean = state.fbar.mean();
    let threshold = crate::solvers::MASS_TOL * lebesgue_norm_values(&grid, &w0.values, 1.0) / grid.volume();
    if (mean - w0.mean()).abs() > threshold {
        return Err(Error::MassDrift { drift: mean - w0.mean(), threshold });
    }
    Ok(out)
}

fn nse_bounds(cfg: &PropsConfig) -> Result<SuiteReport> {
    let s = nse_series(cfg)?;
    let n = s.times.len();
    let q = (n / 4).max(1);
    let first = s.gradient_ratio[..q].iter().cloned().fold(0.0, f64::max);
    let last = s.gradient_ratio[n - q..].iter().cloned().fold(0.0, f64::max);
    let lp_max = s.lp_ratio.iter().cloned().fold(0.0, f64::max);
    let checks = vec![
        Check::at_most("max ||w_t||_p / ||w_0||_p", lp_max, NSE_LP_GROWTH),
        Check::at_most("last-quartile / first-quartile max of t^1/2 ||grad w_t||_p", last / first, NSE_TREND_FACTOR),
    ];
    let stride = (n / 50).max(1);
    let pick = |v: &[f64]| v.iter().step_by(stride).cloned().collect::<Vec<_>>();
    Ok(SuiteReport::new(
        "nse-bounds",
        checks,
        serde_json::json!({
            "first_quartile_max": first,
            "last_quartile_max": last,
            "times": pick(&s.times),
            "lp_ratio": pick(&s.lp_ratio),
            "gradient_ratio": pick(&s.gradient_ratio),
        }),
    ))
}

/// Per-path summary of a transport run.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TransportPath {
    /// `max_n ||f_n - fbar_n - Z_n||_2 / ||f_0||_2`.
    pub identity_defect: f64,
    /// `max_n | ||f_n||_p / ||f_0||_p - 1 |`.
    pub lp_deviation: f64,
}

pub fn transport_path(
    grid: &Grid,
    basis: &NoiseBasis,
    dt: f64,
    horizon: f64,
    f0: &ScalarField,
    coords: SeedCoords,
    p: f64,
) -> Result<TransportPath> {
    let solver = SolverConfig::new(basis.kappa_grid(), dt, horizon)?;
    let mut st = Stepper::new(grid, &solver)?;
    st.record_lp = Some(p);
    let mut state = st.init_state(f0)?;
    let base = lebesgue_norm_values(grid, &f0.values, p);
    let mut out = TransportPath { identity_defect: 0.0, lp_deviation: 0.0 };
    for n in 0..solver.steps() {
        st.transport_step(&mut state, basis, SeedCoords { step: n as u64, ..coords })?;
        out.identity_defect = out.identity_defect.max(state.identity_defect() / state.initial_l2);
        let lp = state.diagnostics.last().and_then(|d| d.lp_norm).unwrap_or(base);
        out.lp_deviation = out.lp_deviation.max((lp / base - 1.0).abs());
    }
    Ok(out)
}

fn mild_identity(cfg: &PropsConfig) -> Result<SuiteReport> {
    let grid = Grid::new(2, 2.0 * std::f64::consts::PI, cfg.mild_points)?;
    let initials = [
        InitialData::Bump { center: None, radius: 1.0, amplitude: 1.0 },
        InitialData::Singular { center: None, beta: 1.2, radius: 1.0, amplitude: 1.0 },
    ];
    let mut checks = Vec::new();
    let mut paths = 0;
    for &ell in &cfg.mild_ells {
        let basis = NoiseBasis::build(&CovarianceSpec::kraichnan(2, ell, 1.0)?, &grid)?;
        for (i, init) in initials.iter().enumerate() {
            let f0 = init.sample(&grid)?;
            let mut worst: f64 = 0.0;
            for &seed in &cfg.mild_seeds {
                let r = transport_path(&grid, &basis, cfg.mild_dt, cfg.mild_horizon, &f0, SeedCoords::new(seed, 0, 0), 2.0)?;
                worst = worst.max(r.identity_defect);
                paths += 1;
            }
            let name = if i == 0 { "bump" } else { "singular" };
            checks.push(Check::at_most(format!("ell={ell} {name} max relative defect"), worst, MILD_IDENTITY_TOL));
        }
    }
    let zero = NoiseBasis::empty(&grid);
    let f0 = initials[0].sample(&grid)?;
    let r = transport_path(&grid, &zero, cfg.mild_dt, cfg.mild_horizon, &f0, SeedCoords::new(0, 0, 0), 2.0)?;
    checks.push(Check::at_most("zero noise defect", r.identity_defect, 0.0));
    Ok(SuiteReport::new("mild-identity", checks, serde_json::json!({"paths": paths + 1})))
}

/// Mean over paths of the sup-deviation of `||f_t||_p / ||f_0||_p` from 1.
pub fn lp_deviation(cfg: &PropsConfig, dt: f64) -> Result<f64> {
    let grid = Grid::new(2, 2.0 * std::f64::consts::PI, cfg.lp_points)?;
    let basis = NoiseBasis::build(&CovarianceSpec::kraichnan(2, cfg.lp_ell, 1.0)?, &grid)?;
    let f0 = cfg.lp_initial.sample(&grid)?;
    let devs = (0..cfg.lp_paths as u64)
        .into_par_iter()
        .map(|m| {
            transport_path(&grid, &basis, dt, cfg.lp_horizon, &f0, SeedCoords::new(cfg.seed, m, 0), cfg.lp_p)
                .map(|r| r.lp_deviation)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(pairwise_sum(&devs) / devs.len() as f64)
}

fn lp_conservation(cfg: &PropsConfig) -> Result<SuiteReport> {
    let coarse = lp_deviation(cfg, cfg.lp_dts[0])?;
    let fine = lp_deviation(cfg, cfg.lp_dts[1])?;
    let shrink = coarse / fine;
    let checks = vec![
        Check::at_most(format!("mean sup deviation at dt={}", cfg.lp_dts[0]), coarse, LP_COARSE_TOL),
        Check::within(
            format!("shrink factor dt={} -> dt={}", cfg.lp_dts[0], cfg.lp_dts[1]),
            shrink,
            LP_SHRINK_RANGE[0],
            LP_SHRINK_RANGE[1],
        ),
    ];
    Ok(SuiteReport::new(
        "lp-conservation",
        checks,
        serde_json::json!({"coarse": coarse, "fine": fine, "dts": cfg.lp_dts, "paths": cfg.lp_paths}),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseValidateConfig {
    #[serde(default = "two")]
    pub dim: usize,
    pub box_length: f64,
    pub points_per_dim: usize,
    pub ell_grid: Vec<f64>,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mollify: Option<f64>,
    /// Increments drawn for the covariance, divergence and correlation checks.
    #[serde(default = "default_covariance_samples")]
    pub covariance_samples: usize,
}

fn two() -> usize {
    2
}
fn one() -> f64 {
    1.0
}
fn default_covariance_samples() -> usize {
    2000
}

impl NoiseValidateConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.dim != 2 {
            return Err(Error::InvalidConfig("noise validation runs in d = 2".into()));
        }
        if cfg.ell_grid.is_empty() || cfg.ell_grid.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::InvalidConfig("ell_grid must hold positive values".into()));
        }
        if cfg.covariance_samples < 2 {
            return Err(Error::InvalidConfig("covariance_samples must be >= 2".into()));
        }
        Ok(cfg)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EllNoiseReport {
    pub ell: f64,
    pub kappa: f64,
    pub kappa_grid: f64,
    pub basis_modes: usize,
    pub empirical_covariance: [[f64; 2]; 2],
    pub analytic_covariance: [[f64; 2]; 2],
    pub max_relative_divergence: f64,
    pub orthogonality_offdiag: f64,
    pub orthogonality_diag_defect: f64,
    pub isotropy_defect: f64,
    pub temporal_correlation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct NoiseReport {
    pub passed: bool,
    pub checks: Vec<Check>,
    pub ells: Vec<EllNoiseReport>,
    pub scaling_slope: f64,
    pub scaling_expected: f64,
}

/// Log-log slope of `||g_ell||_r` over `ell in {0.4, 0.2, 0.1, 0.05}`.
pub fn kraichnan_scaling_slope(dim: usize, lambda: f64, r: f64) -> Result<f64> {
    let ells = [0.4f64, 0.2, 0.1, 0.05];
    let x: Vec<f64> = ells.iter().map(|l| l.ln()).collect();
    let y = ells
        .iter()
        .map(|&l| CovarianceSpec::kraichnan(dim, l, lambda)?.spectral_norm(r).map(f64::ln))
        .collect::<Result<Vec<_>>>()?;
    Ok(ols(&x, &y)?.0)
}

pub fn noise_validate(cfg: &NoiseValidateConfig) -> Result<NoiseReport> {
    let grid = Grid::new(cfg.dim, cfg.box_length, cfg.points_per_dim)?;
    let m = cfg.covariance_samples;
    let mut checks = Vec::new();
    let mut ells = Vec::new();
    for &ell in &cfg.ell_grid {
        let mut spec = CovarianceSpec::kraichnan(cfg.dim, ell, cfg.lambda)?;
        if let Some(n) = cfg.mollify {
            spec = spec.mollify(n)?;
        }
        let basis = NoiseBasis::build(&spec, &grid)?;
        let kappa = spec.kappa()?;
        let kg = basis.kappa_grid();
        let cov = basis.empirical_covariance(m, [0, 0], cfg.seed)?;
        let mut div: f64 = 0.0;
        for s in 0..m as u64 {
            div = div.max(basis.sample_increment(1.0, SeedCoords::new(cfg.seed, s, 0))?.relative_divergence());
        }
        let orth = basis.orthogonality_report();
        let h = grid.spacing();
        let iso = basis.isotropy_defect(&[[h, 0.0], [3.0 * h, -2.0 * h], [0.37, 1.3], [2.0, 0.5]]);
        let rho = basis.temporal_correlation(m, cfg.seed);
        let scale = 2.0 * kg;
        let mut cov_err: f64 = 0.0;
        let mut analytic_err: f64 = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                let want = if a == b { scale } else { 0.0 };
                cov_err = cov_err.max((cov.empirical[a][b] - want).abs() / scale);
                analytic_err = analytic_err.max((cov.analytic[a][b] - want).abs() / scale);
            }
        }
        checks.push(Check::at_most(format!("ell={ell} |kappa_grid/kappa - 1|"), (kg / kappa - 1.0).abs(), KAPPA_GRID_TOL));
        checks.push(Check::at_most(format!("ell={ell} empirical Q(0) vs 2 kappa_grid I"), cov_err, COVARIANCE_TOL));
        checks.push(Check::at_most(format!("ell={ell} analytic Q_grid(0) vs 2 kappa_grid I"), analytic_err, 1e-12));
        checks.push(Check::at_most(format!("ell={ell} max relative divergence"), div, DIVERGENCE_TOL));
        checks.push(Check::at_most(format!("ell={ell} orthogonality off-diagonal"), orth.max_offdiag, ORTHOGONALITY_TOL));
        checks.push(Check::at_most(format!("ell={ell} orthogonality diagonal"), orth.max_diag_defect, ORTHOGONALITY_TOL));
        checks.push(Check::at_most(format!("ell={ell} isotropy"), iso, ISOTROPY_TOL));
        checks.push(Check::at_most(format!("ell={ell} |step correlation|"), rho.abs(), 3.0 / (m as f64).sqrt()));
        ells.push(EllNoiseReport {
            ell,
            kappa,
            kappa_grid: kg,
            basis_modes: basis.basis_size(),
            empirical_covariance: cov.empirical,
            analytic_covariance: cov.analytic,
            max_relative_divergence: div,
            orthogonality_offdiag: orth.max_offdiag,
            orthogonality_diag_defect: orth.max_diag_defect,
            isotropy_defect: iso,
            temporal_correlation: rho,
        });
    }
    let r = 3.0;
    let d = cfg.dim as f64;
    let expected = d * (r - 1.0) / r;
    let slope = kraichnan_scaling_slope(cfg.dim, cfg.lambda, r)?;
    checks.push(Check::at_most("Kraichnan r=3 norm slope relative error", (slope / expected - 1.0).abs(), SCALING_TOL));
    Ok(NoiseReport { passed: checks.iter().all(|c| c.pass), checks, ells, scaling_slope: slope, scaling_expected: expected })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PropsConfig {
        PropsConfig {
            heat_points: 16,
            heat_fields: 10,
            interp_points: 16,
            interp_fields: 50,
            nse_points: 32,
            nse_horizon: 0.05,
            nse_dt: 5e-3,
            mild_points: 32,
            mild_horizon: 0.02,
            mild_dt: 5e-3,
            mild_ells: vec![0.5],
            mild_seeds: vec![1],
            ..PropsConfig::default()
        }
    }

    #[test]
    fn random_field_is_band_limited_and_mean_zero() {
        let g = Grid::new(2, 3.0, 16).unwrap();
        let f = random_field(&g, &mut CounterRng::new(1, stream::FIELDS), 3, 1.0, true);
        let c = Transformer::new(&g).forward(&f);
        assert!(c.coeffs[0].norm() < 1e-14);
        for s in 0..g.len() {
            let j = g.lattice(s);
            if j[0].abs() > 3 || j[1].abs() > 3 {
                assert!(c.coeffs[s].norm() < 1e-13);
            }
        }
    }

    #[test]
    fn small_suites_pass() {
        let cfg = small();
        for name in ["heat-smoothing", "heat-continuity", "interp", "mild-identity"] {
            let r = run_suite(name, &cfg).unwrap();
            assert!(r.passed, "{}", serde_json::to_string_pretty(&r).unwrap());
        }
        assert!(matches!(run_suite("nope", &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn continuity_sup_factor_rho_one() {
        // sup_s (1 - e^{-s}) / sqrt(s) sits where 2 s e^{-s} = 1 - e^{-s}; bisect for it.
        let h = |s: f64| 2.0 * s * (-s).exp() - (1.0 - (-s).exp());
        let (mut a, mut b) = (0.5, 3.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if h(m) > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        let want = (1.0 - (-a).exp()) / a.sqrt();
        let (_, v) = maximize_1d(|s| if s > 0.0 { (1.0 - (-s).exp()) / s.sqrt() } else { 0.0 }, 0.0, 40.0, 4000);
        assert!((v - want).abs() < 1e-14, "{v} {want}");
    }

    #[test]
    fn props_config_defaults_roundtrip() {
        let cfg = PropsConfig::from_json("{}").unwrap();
        assert_eq!(cfg, PropsConfig::default());
        assert!(PropsConfig::from_json("{\"bogus\":1}").is_err());
    }
}
