//! Exponential Euler-Maruyama integrators for the stochastic transport
//! equation, the heat equation, stochastic 2D Euler and deterministic 2D
//! Navier-Stokes, all in vorticity / scalar form on the periodic grid.
//!
//! Transport (Ito form, noise at the left point):
//!
//! ```text
//! f_{n+1} = e^{kappa Delta dt} [f_n - M(dW_n . grad f_n)]
//! Z_{n+1} = e^{kappa Delta dt} [Z_n - M(dW_n . grad f_n)]
//! fbar_{n+1} = e^{kappa Delta dt} fbar_n
//! ```
//!
//! where `M` is the 2/3 mask (or the identity). The same update enters `f`
//! and `Z`, so `f_n - fbar_n - Z_n` stays at round-off.
//!
//! Vorticity: `w_{n+1} = e^{kappa Delta dt} [w_n - M((u_n dt + dW_n) . grad w_n)]`
//! with `u_n` from the Biot-Savart law.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dealias_mask, heat_multiplier, Grid, ScalarField, SpectralField, Transformer, VectorField};
use crate::noise::{NoiseBasis, SeedCoords};
use crate::norms::lebesgue_norm_values;

/// Advection Courant number bound, `dt max|u| N / L`.
pub const ADVECTION_CFL: f64 = 0.5;
/// Default bound on `max|dW| N / L`, the noise displacement in grid cells per step.
pub const DEFAULT_NOISE_CFL: f64 = 16.0;
/// Mass drift tolerance relative to `||f_0||_1 / L^d`.
pub const MASS_TOL: f64 = 1e-10;
/// Relative tolerance when matching the solver viscosity to the noise.
pub const KAPPA_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    ExponentialEuler,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub kappa: f64,
    pub dt: f64,
    pub horizon: f64,
    #[serde(default = "default_true")]
    pub dealias: bool,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "default_noise_cfl")]
    pub noise_cfl: f64,
}

fn default_true() -> bool {
    true
}

fn default_noise_cfl() -> f64 {
    DEFAULT_NOISE_CFL
}

impl SolverConfig {
    pub fn new(kappa: f64, dt: f64, horizon: f64) -> Result<Self> {
        let cfg = Self { kappa, dt, horizon, dealias: true, scheme: Scheme::ExponentialEuler, noise_cfl: DEFAULT_NOISE_CFL };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidConfig(format!("kappa must be >= 0 (got {})", self.kappa)));
        }
        if !(self.dt > 0.0 && self.horizon > 0.0 && self.dt <= self.horizon) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < dt <= T (got dt = {}, T = {})",
                self.dt, self.horizon
            )));
        }
        let steps = self.horizon / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps {
            return Err(Error::InvalidConfig(format!("T / dt = {steps} is not an integer")));
        }
        if !(self.noise_cfl > 0.0) {
            return Err(Error::InvalidConfig("noise_cfl must be positive".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// One recorded step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Diagnostic {
    pub time: f64,
    pub mean: f64,
    pub lp_norm: Option<f64>,
}

/// Spectral state of one sample path: `f` (or the stochastic vorticity),
/// its deterministic companion `fbar`, and the stochastic convolution `z`.
#[derive(Clone, Debug)]
pub struct PathState {
    pub time: f64,
    pub step: u64,
    pub f: SpectralField,
    pub fbar: SpectralField,
    pub z: SpectralField,
    /// Zero mode of `f_0`.
    initial_zero_mode: Complex64,
    /// `||f_0||_1 / L^d`.
    mass_scale: f64,
    /// `||f_0||_2`.
    pub initial_l2: f64,
    pub diagnostics: Vec<Diagnostic>,
}

impl PathState {
    pub fn new(f0: &ScalarField) -> Self {
        let grid = &f0.grid;
        let f = Transformer::new(grid).forward(f0);
        Self::from_parts(f0, f)
    }

    fn from_parts(f0: &ScalarField, f: SpectralField) -> Self {
        let grid = &f0.grid;
        Self {
            time: 0.0,
            step: 0,
            initial_zero_mode: f.coeffs[0],
            fbar: f.clone(),
            z: SpectralField::zeros(grid),
            f,
            mass_scale: lebesgue_norm_values(grid, &f0.values, 1.0) / grid.volume(),
            initial_l2: lebesgue_norm_values(grid, &f0.values, 2.0),
            diagnostics: Vec::new(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.f.grid
    }

    pub fn f_field(&self) -> ScalarField {
        to_real(&self.f)
    }

    pub fn fbar_field(&self) -> ScalarField {
        to_real(&self.fbar)
    }

    pub fn z_field(&self) -> ScalarField {
        to_real(&self.z)
    }

    /// `||f - fbar - Z||_2` via Parseval.
    pub fn identity_defect(&self) -> f64 {
        let cell = self.grid().spectral_cell();
        let s = crate::numerics::pairwise_sum_map(self.f.coeffs.len(), |i| {
            (self.f.coeffs[i] - self.fbar.coeffs[i] - self.z.coeffs[i]).norm_sqr()
        });
        (s * cell).sqrt()
    }

    /// Mass conservation for `f` and `fbar`.
    pub fn check_mass(&self) -> Result<()> {
        let scale = self.grid().inverse_scale();
        let threshold = MASS_TOL * self.mass_scale;
        for c in [self.f.coeffs[0], self.fbar.coeffs[0]] {
            let drift = (c - self.initial_zero_mode).norm() * scale;
            if drift > threshold {
                return Err(Error::MassDrift { drift, threshold });
            }
        }
        Ok(())
    }
}

fn to_real(f: &SpectralField) -> ScalarField {
    let mut out = ScalarField::zeros(&f.grid);
    Transformer::new(&f.grid).inverse_into(&f.coeffs, &mut out.values);
    out
}

/// Largest speeds seen during the last step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepInfo {
    /// `max |dW|` in length units.
    pub max_noise: f64,
    /// `max |u|`.
    pub max_velocity: f64,
}

/// Reusable per-worker integrator: precomputed symbols plus scratch buffers.
pub struct Stepper {
    grid: Grid,
    cfg: SolverConfig,
    heat: Vec<f64>,
    mask: Vec<f64>,
    kx: Vec<f64>,
    ky: Vec<f64>,
    inv_k2: Vec<f64>,
    transformer: Transformer,
    packed: Vec<Complex64>,
    spec: Vec<Complex64>,
    bufs: [Vec<f64>; 6],
    /// Record `||f||_p` after every step when set.
    pub record_lp: Option<f64>,
    pub last: StepInfo,
}

impl Stepper {
    pub fn new(grid: &Grid, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let n = grid.len();
        let symbol = |c: usize| -> Vec<f64> {
            (0..n).map(|s| if grid.is_nyquist(s) { 0.0 } else { grid.wavevector(s)[c] }).collect()
        };
        let kx = symbol(0);
        let ky = symbol(1);
        let inv_k2 = (0..n)
            .map(|s| {
                let k2 = kx[s] * kx[s] + ky[s] * ky[s];
                if k2 == 0.0 {
                    0.0
                } else {
                    1.0 / k2
                }
            })
            .collect();
        let mask = if cfg.dealias { dealias_mask(grid).values } else { vec![1.0; n] };
        Ok(Self {
            grid: grid.clone(),
            cfg: cfg.clone(),
            heat: heat_multiplier(grid, cfg.kappa, cfg.dt).values,
            mask,
            kx,
            ky,
            inv_k2,
            transformer: Transformer::new(grid),
            packed: vec![Complex64::new(0.0, 0.0); n],
            spec: vec![Complex64::new(0.0, 0.0); n],
            bufs: std::array::from_fn(|_| vec![0.0; n]),
            record_lp: None,
            last: StepInfo::default(),
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn init_state(&mut self, f0: &ScalarField) -> Result<PathState> {
        self.grid.check_same(&f0.grid)?;
        let mut f = SpectralField::zeros(&self.grid);
        self.transformer.forward_into(&f0.values, &mut f.coeffs);
        Ok(PathState::from_parts(f0, f))
    }

    fn check_kappa(&self, basis: &NoiseBasis) -> Result<()> {
        if basis.is_empty() {
            return Ok(());
        }
        let noise = basis.kappa_grid();
        if (self.cfg.kappa - noise).abs() > KAPPA_TOL * noise.max(self.cfg.kappa) {
            return Err(Error::KappaMismatch { solver: self.cfg.kappa, noise });
        }
        Ok(())
    }

    /// Samples `dW` into `bufs[0..2]` and enforces the noise bound.
    fn sample_noise(&mut self, basis: &NoiseBasis, coords: SeedCoords) -> Result<()> {
        let [b0, b1, ..] = &mut self.bufs;
        basis.sample_into(&mut self.transformer, self.cfg.dt, coords, &mut self.packed, b0, b1);
        let max2 = b0.iter().zip(b1.iter()).fold(0.0f64, |m, (x, y)| m.max(x * x + y * y));
        self.last.max_noise = max2.sqrt();
        let cells = self.last.max_noise * self.grid.n() as f64 / self.grid.box_length();
        if cells > self.cfg.noise_cfl {
            return Err(Error::CflViolation { what: "noise", value: cells, limit: self.cfg.noise_cfl });
        }
        Ok(())
    }

    /// Gradient of `f` into `bufs[2..4]`.
    fn gradient(&mut self, f: &SpectralField) {
        let (kx, ky) = (&self.kx, &self.ky);
        let [_, _, gx, gy, ..] = &mut self.bufs;
        let c = &f.coeffs;
        if self.grid.dim() == 1 {
            self.transformer.inverse_pair_with(|s| c[s] * Complex64::new(0.0, kx[s]), |_| Complex64::new(0.0, 0.0), gx, gy);
        } else {
            self.transformer.inverse_pair_with(
                |s| c[s] * Complex64::new(0.0, kx[s]),
                |s| c[s] * Complex64::new(0.0, ky[s]),
                gx,
                gy,
            );
        }
    }

    /// Biot-Savart velocity of `w` into `bufs[4..6]`; returns `max |u|`.
    fn velocity(&mut self, w: &SpectralField) -> f64 {
        let (kx, ky, inv) = (&self.kx, &self.ky, &self.inv_k2);
        let [.., ux, uy] = &mut self.bufs;
        let c = &w.coeffs;
        self.transformer.inverse_pair_with(
            |s| c[s] * Complex64::new(0.0, ky[s] * inv[s]),
            |s| c[s] * Complex64::new(0.0, -kx[s] * inv[s]),
            ux,
            uy,
        );
        ux.iter().zip(uy.iter()).fold(0.0f64, |m, (a, b)| m.max(a * a + b * b)).sqrt()
    }

    fn record(&mut self, state: &mut PathState) {
        let lp_norm = self.record_lp.map(|p| {
            let mut vals = std::mem::take(&mut self.bufs[5]);
            self.transformer.inverse_into(&state.f.coeffs, &mut vals);
            let v = lebesgue_norm_values(&self.grid, &vals, p);
            self.bufs[5] = vals;
            v
        });
        state.diagnostics.push(Diagnostic { time: state.time, mean: state.f.mean(), lp_norm });
    }

    /// Spectrum of `mask * (dW . grad f)` into `self.spec`.
    fn transport_update(&mut self, f: &SpectralField, basis: &NoiseBasis, coords: SeedCoords) -> Result<()> {
        self.sample_noise(basis, coords)?;
        self.gradient(f);
        let [w0, w1, gx, gy, prod, _] = &mut self.bufs;
        for i in 0..prod.len() {
            prod[i] = w0[i] * gx[i] + w1[i] * gy[i];
        }
        self.transformer.forward_into(prod, &mut self.spec);
        for (a, m) in self.spec.iter_mut().zip(&self.mask) {
            *a *= *m;
        }
        Ok(())
    }

    /// One transport step on `state.f`, with the heat companion and the
    /// stochastic convolution advanced alongside.
    pub fn transport_step(&mut self, state: &mut PathState, basis: &NoiseBasis, coords: SeedCoords) -> Result<()> {
        self.grid.check_same(state.grid())?;
        self.grid.check_same(basis.grid())?;
        self.check_kappa(basis)?;
        self.last = StepInfo::default();
        if basis.is_empty() {
            for (s, h) in self.heat.iter().enumerate() {
                state.f.coeffs[s] *= *h;
                state.z.coeffs[s] *= *h;
            }
        } else {
            self.transport_update(&state.f, basis, coords)?;
            for s in 0..self.heat.len() {
                let h = self.heat[s];
                let a = self.spec[s];
                state.f.coeffs[s] = (state.f.coeffs[s] - a) * h;
            }
            accumulate_convolution(&mut state.z, &self.spec, &self.heat);
        }
        for (c, h) in state.fbar.coeffs.iter_mut().zip(&self.heat) {
            *c *= *h;
        }
        state.step += 1;
        state.time = state.step as f64 * self.cfg.dt;
        state.check_mass()?;
        self.record(state);
        Ok(())
    }

    /// One vorticity step of `w`; `basis = None` (or an empty basis) gives
    /// the deterministic Navier-Stokes step.
    pub fn vorticity_step(&mut self, w: &mut SpectralField, basis: Option<&NoiseBasis>, coords: SeedCoords) -> Result<()> {
        if self.grid.dim() != 2 {
            return Err(Error::InvalidGrid("vorticity equations need d = 2".into()));
        }
        self.grid.check_same(&w.grid)?;
        self.last = StepInfo::default();
        let noisy = match basis {
            Some(b) if !b.is_empty() => {
                self.grid.check_same(b.grid())?;
                self.check_kappa(b)?;
                self.sample_noise(b, coords)?;
                true
            }
            _ => false,
        };
        let umax = self.velocity(w);
        self.last.max_velocity = umax;
        let courant = self.cfg.dt * umax * self.grid.n() as f64 / self.grid.box_length();
        if courant > ADVECTION_CFL {
            return Err(Error::CflViolation { what: "advection", value: courant, limit: ADVECTION_CFL });
        }
        self.gradient(w);
        let dt = self.cfg.dt;
        let [w0, w1, gx, gy, ux, uy] = &mut self.bufs;
        // Product written over ux.
        if noisy {
            for i in 0..ux.len() {
                ux[i] = (ux[i] * dt + w0[i]) * gx[i] + (uy[i] * dt + w1[i]) * gy[i];
            }
        } else {
            for i in 0..ux.len() {
                ux[i] = ux[i] * dt * gx[i] + uy[i] * dt * gy[i];
            }
        }
        self.transformer.forward_into(ux, &mut self.spec);
        for s in 0..self.heat.len() {
            w.coeffs[s] = (w.coeffs[s] - self.spec[s] * self.mask[s]) * self.heat[s];
        }
        Ok(())
    }

    /// Real-space gradient of `f`, returned as `(d/dx_1 f, d/dx_2 f)`.
    pub fn gradient_fields(&mut self, f: &SpectralField) -> (Vec<f64>, Vec<f64>) {
        self.gradient(f);
        (self.bufs[2].clone(), self.bufs[3].clone())
    }

    pub fn to_real_into(&mut self, f: &SpectralField, out: &mut [f64]) {
        self.transformer.inverse_into(&f.coeffs, out);
    }

    pub fn transformer(&mut self) -> &mut Transformer {
        &mut self.transformer
    }
}

/// `Z <- H (Z - update)` with the same masked update used for `f`.
pub fn accumulate_convolution(z: &mut SpectralField, update: &[Complex64], heat: &[f64]) {
    for ((c, a), h) in z.coeffs.iter_mut().zip(update).zip(heat) {
        *c = (*c - *a) * *h;
    }
}

/// One transport step (see [`Stepper::transport_step`]).
pub fn step_transport(state: &mut PathState, basis: &NoiseBasis, cfg: &SolverConfig, coords: SeedCoords) -> Result<()> {
    Stepper::new(state.grid(), cfg)?.transport_step(state, basis, coords)
}

/// Stochastic Euler step applied to `state.f`.
pub fn step_euler(state: &mut PathState, basis: &NoiseBasis, cfg: &SolverConfig, coords: SeedCoords) -> Result<()> {
    let mut st = Stepper::new(state.grid(), cfg)?;
    st.vorticity_step(&mut state.f, Some(basis), coords)?;
    state.step += 1;
    state.time = state.step as f64 * cfg.dt;
    state.check_mass()
}

/// Deterministic Navier-Stokes step applied to `state.fbar`.
pub fn step_nse(state: &mut PathState, cfg: &SolverConfig) -> Result<()> {
    let mut st = Stepper::new(state.grid(), cfg)?;
    st.vorticity_step(&mut state.fbar, None, SeedCoords::new(0, 0, 0))?;
    state.check_mass()
}

/// Exact heat flow `e^{kappa Delta t} f_0`.
pub fn solve_heat(f0: &ScalarField, kappa: f64, t: f64) -> Result<ScalarField> {
    if !(kappa >= 0.0 && t >= 0.0) {
        return Err(Error::InvalidConfig(format!("heat flow needs kappa, t >= 0 (got {kappa}, {t})")));
    }
    let mut tr = Transformer::new(&f0.grid);
    let mut c = tr.forward(f0);
    c.apply(&heat_multiplier(&f0.grid, kappa, t));
    let mut out = ScalarField::zeros(&f0.grid);
    tr.inverse_into(&c.coeffs, &mut out.values);
    Ok(out)
}

/// Velocity `u` with `div u = 0` and `curl u = d_1 u_2 - d_2 u_1 = w`:
/// `u^ = -i xi_perp w^ / |xi|^2`, `xi_perp = (-xi_2, xi_1)`.
pub fn biot_savart(omega: &ScalarField) -> Result<VectorField> {
    let grid = &omega.grid;
    if grid.dim() != 2 {
        return Err(Error::InvalidGrid("Biot-Savart needs d = 2".into()));
    }
    let mean = omega.mean();
    let threshold = MASS_TOL * lebesgue_norm_values(grid, &omega.values, 1.0) / grid.volume();
    if mean.abs() > threshold {
        return Err(Error::NonzeroMeanVorticity { mean, threshold });
    }
    let cfg = SolverConfig::new(0.0, 1.0, 1.0)?;
    let mut st = Stepper::new(grid, &cfg)?;
    let mut w = SpectralField::zeros(grid);
    st.transformer.forward_into(&omega.values, &mut w.coeffs);
    st.velocity(&w);
    let [.., ux, uy] = &st.bufs;
    VectorField::new(vec![ScalarField { grid: grid.clone(), values: ux.clone() }, ScalarField {
        grid: grid.clone(),
        values: uy.clone(),
    }])
}

/// Spectral divergence and curl defects of a velocity against `omega`,
/// relative to `max |xi| |u^|` and `max |w^|`.
pub fn velocity_defects(u: &VectorField, omega: &ScalarField) -> (f64, f64) {
    let grid = &omega.grid;
    let mut t = Transformer::new(grid);
    let u1 = t.forward(&u.components[0]);
    let u2 = t.forward(&u.components[1]);
    let w = t.forward(omega);
    let (mut div, mut curl, mut uscale) = (0.0f64, 0.0f64, 0.0f64);
    for s in 0..grid.len() {
        if grid.is_nyquist(s) {
            continue;
        }
        let [a, b] = grid.wavevector(s);
        let i = Complex64::i();
        div = div.max((i * a * u1.coeffs[s] + i * b * u2.coeffs[s]).norm());
        curl = curl.max((i * a * u2.coeffs[s] - i * b * u1.coeffs[s] - w.coeffs[s]).norm());
        uscale = uscale.max((a * a + b * b).sqrt() * (u1.coeffs[s].norm() + u2.coeffs[s].norm()));
    }
    let wscale = w.max_abs();
    (
        if uscale > 0.0 { div / uscale } else { 0.0 },
        if wscale > 0.0 { curl / wscale } else { 0.0 },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::CovarianceSpec;
    use std::f64::consts::PI;

    fn bump(grid: &Grid) -> ScalarField {
        crate::initial::InitialData::Bump { center: None, radius: 1.0, amplitude: 1.0 }.sample(grid).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::new(0.25, 1e-3, 0.25).is_ok());
        assert!(SolverConfig::new(0.25, 0.5, 0.25).is_err());
        assert!(SolverConfig::new(0.25, 0.3, 1.0).is_err());
        assert!(SolverConfig::new(-1.0, 0.1, 1.0).is_err());
    }

    #[test]
    fn empty_basis_is_heat_step() {
        let g = Grid::new(2, 2.0 * PI, 32).unwrap();
        let cfg = SolverConfig::new(0.3, 0.01, 0.1).unwrap();
        let f0 = bump(&g);
        let mut st = PathState::new(&f0);
        step_transport(&mut st, &NoiseBasis::empty(&g), &cfg, SeedCoords::new(1, 0, 0)).unwrap();
        let want = solve_heat(&f0, 0.3, 0.01).unwrap();
        let got = st.f_field();
        for (a, b) in got.values.iter().zip(&want.values) {
            assert!((a - b).abs() < 1e-13);
        }
        assert_eq!(st.identity_defect(), 0.0);
        assert!(st.z.coeffs.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn constant_is_fixed_point() {
        let g = Grid::new(2, 2.0 * PI, 32).unwrap();
        let spec = CovarianceSpec::kraichnan(2, 0.5, 1.0).unwrap();
        let basis = NoiseBasis::build(&spec, &g).unwrap();
        let cfg = SolverConfig::new(basis.kappa_grid(), 0.01, 0.1).unwrap();
        let f0 = ScalarField::from_fn(&g, |_| 2.5);
        let mut st = PathState::new(&f0);
        step_transport(&mut st, &basis, &cfg, SeedCoords::new(1, 0, 0)).unwrap();
        for v in st.f_field().values {
            assert!((v - 2.5).abs() < 1e-14);
        }
    }

    #[test]
    fn kappa_mismatch_rejected() {
        let g = Grid::new(2, 2.0 * PI, 32).unwrap();
        let basis = NoiseBasis::build(&CovarianceSpec::kraichnan(2, 0.5, 1.0).unwrap(), &g).unwrap();
        let cfg = SolverConfig::new(0.2, 0.01, 0.1).unwrap();
        let mut st = PathState::new(&bump(&g));
        assert!(matches!(
            step_transport(&mut st, &basis, &cfg, SeedCoords::new(1, 0, 0)),
            Err(Error::KappaMismatch { .. })
        ));
    }

    #[test]
    fn noise_cfl_enforced() {
        let g = Grid::new(2, 2.0 * PI, 32).unwrap();
        let basis = NoiseBasis::build(&CovarianceSpec::kraichnan(2, 0.5, 1.0).unwrap(), &g).unwrap();
        let mut cfg = SolverConfig::new(basis.kappa_grid(), 0.01, 0.1).unwrap();
        cfg.noise_cfl = 1e-3;
        let mut st = PathState::new(&bump(&g));
        assert!(matches!(
            step_transport(&mut st, &basis, &cfg, SeedCoords::new(1, 0, 0)),
            Err(Error::CflViolation { what: "noise", .. })
        ));
    }

    #[test]
    fn mild_identity_holds() {
        let g = Grid::new(2, 2.0 * PI, 64).unwrap();
        let basis = NoiseBasis::build(&CovarianceSpec::kraichnan(2, 0.3, 1.0).unwrap(), &g).unwrap();
        let cfg = SolverConfig::new(basis.kappa_grid(), 2e-3, 0.1).unwrap();
        let f0 = bump(&g);
        let mut stepper = Stepper::new(&g, &cfg).unwrap();
        let mut st = stepper.init_state(&f0).unwrap();
        for n in 0..cfg.steps() {
            stepper.transport_step(&mut st, &basis, SeedCoords::new(9, 0, n as u64)).unwrap();
            assert!(st.identity_defect() <= 1e-10 * st.initial_l2);
        }
        assert!(st.z.max_abs() > 0.0);
    }

    #[test]
    fn heat_solution_properties() {
        let g = Grid::new(2, 2.0 * PI, 16).unwrap();
        let f0 = ScalarField::from_fn(&g, |x| 0.3 + x[0].cos());
        assert_eq!(solve_heat(&f0, 1.0, 0.0).unwrap().values, {
            let mut t = Transformer::new(&g);
            let c = t.forward(&f0);
            let mut v = vec![0.0; g.len()];
            t.inverse_into(&c.coeffs, &mut v);
            v
        });
        let s = solve_heat(&f0, 1.0, 1.0).unwrap();
        for (i, v) in s.values.iter().enumerate() {
            let x = g.point(i);
            assert!((v - (0.3 + (-1.0f64).exp() * x[0].cos())).abs() < 1e-13);
        }
        assert!((s.mean() - f0.mean()).abs() < 1e-15);
    }

    #[test]
    fn biot_savart_single_mode() {
        let l = 3.0;
        let g = Grid::new(2, l, 32).unwrap();
        let k = 2.0 * PI / l;
        let w = ScalarField::from_fn(&g, |x| (k * x[0]).cos());
        let u = biot_savart(&w).unwrap();
        for i in 0..g.len() {
            let x = g.point(i);
            assert!(u.components[0].values[i].abs() < 1e-13);
            assert!((u.components[1].values[i] - (k * x[0]).sin() / k).abs() < 1e-13);
        }
        let (div, curl) = velocity_defects(&u, &w);
        assert!(div < 1e-12 && curl < 1e-12);
        assert!(biot_savart(&ScalarField::from_fn(&g, |_| 1.0)).is_err());
    }

    #[test]
    fn euler_without_noise_equals_nse() {
        let g = Grid::new(2, 2.0 * PI, 32).unwrap();
        let w0 = crate::initial::InitialData::SingularDipole {
            center: None,
            beta: 1.0,
            radius: 1.0,
            separation: 0.5,
            amplitude: 1.0,
        }
        .sample(&g)
        .unwrap();
        let cfg = SolverConfig::new(0.25, 1e-3, 0.1).unwrap();
        let mut st = PathState::new(&w0);
        for _ in 0..3 {
            step_euler(&mut st, &NoiseBasis::empty(&g), &cfg, SeedCoords::new(1, 0, 0)).unwrap();
            step_nse(&mut st, &cfg).unwrap();
        }
        assert_eq!(st.f, st.fbar);
    }
}
