//! Homogeneous, isotropic, divergence-free Gaussian transport noise.
//!
//! The covariance is specified through its Fourier transform
//! `Q^(xi) = g(xi) P_xi` with a radial spectral density `g` and the
//! projection `P_xi` onto the plane orthogonal to `xi`. On a grid the noise
//! is the finite series
//!
//! ```text
//! dW(x) = sum_modes a_j e_j sqrt(2) [cos(xi_j.x) Z_c + sin(xi_j.x) Z_s] sqrt(dt)
//! ```
//!
//! over one representative `j` per Hermitian pair, with `e_j` the unit
//! vector perpendicular to `xi_j` and `a_j^2` the spectral mass of `g` in the
//! lattice cell around `xi_j`.

use std::f64::consts::PI;
use std::path::Path;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, Transformer, VectorField};
use crate::numerics::{maximize_1d, unit_sphere_area};
use crate::quadrature::integrate;
use crate::rng;

/// Relative tolerance of all radial quadratures.
pub const QUAD_TOL: f64 = 1e-10;

/// Midpoint subdivisions per axis used to integrate `g` over a lattice cell.
pub const CELL_SUBDIVISIONS: usize = 16;

/// Radial density families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `c ell^{-lambda} |xi|^{-(d+lambda)}` on `1/ell <= |xi| <= 2/ell`.
    Kraichnan { ell: f64, lambda: f64 },
    /// Constant `height` on `a <= |xi| <= b`.
    Band { a: f64, b: f64, height: f64 },
    /// Piecewise-linear in `|xi|` through the nodes, zero outside them.
    Tabulated { radii: Vec<f64>, values: Vec<f64> },
    /// `g(xi) exp(-|xi|^2 / n_mol)`.
    Mollified { base: Box<Family>, n_mol: f64 },
    Zero,
}

/// Radial spectral density together with its dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceSpec {
    dim: usize,
    family: Family,
    /// Normalising constant c_{d,lambda} for the Kraichnan family (1 otherwise).
    norm_const: f64,
}

impl CovarianceSpec {
    pub fn kraichnan(dim: usize, ell: f64, lambda: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(ell > 0.0 && ell.is_finite()) || !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidCovariance(format!("kraichnan needs ell > 0, lambda > 0 (got {ell}, {lambda})")));
        }
        let mut spec = Self { dim, family: Family::Kraichnan { ell, lambda }, norm_const: 1.0 };
        // Normalise numerically so that ||g||_1 = 1.
        let mass = spec.radial_integral(|g, _| g)?;
        spec.norm_const = 1.0 / mass;
        Ok(spec)
    }

    pub fn band(dim: usize, a: f64, b: f64, height: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(a >= 0.0 && b > a && height >= 0.0 && b.is_finite() && height.is_finite()) {
            return Err(Error::InvalidCovariance(format!("band needs 0 <= a < b, height >= 0 (got {a}, {b}, {height})")));
        }
        Ok(Self { dim, family: Family::Band { a, b, height }, norm_const: 1.0 })
    }

    pub fn tabulated(dim: usize, radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        if radii.len() != values.len() || radii.len() < 2 {
            return Err(Error::InvalidCovariance("tabulated density needs >= 2 matching nodes".into()));
        }
        if radii.windows(2).any(|w| !(w[1] > w[0])) || radii[0] < 0.0 {
            return Err(Error::InvalidCovariance("tabulated radii must be nonnegative and increasing".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidCovariance("tabulated density must be finite and nonnegative".into()));
        }
        Ok(Self { dim, family: Family::Tabulated { radii, values }, norm_const: 1.0 })
    }

    /// Two-column CSV `(|xi|, g)`; a non-numeric first row is taken as a header.
    pub fn from_csv(dim: usize, path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
        let mut radii = Vec::new();
        let mut values = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() < 2 {
                return Err(Error::InvalidCovariance(format!("row {row}: expected two columns")));
            }
            match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
                (Ok(r), Ok(g)) => {
                    radii.push(r);
                    values.push(g);
                }
                _ if row == 0 => continue,
                _ => return Err(Error::InvalidCovariance(format!("row {row}: not numeric"))),
            }
        }
        Self::tabulated(dim, radii, values)
    }

    pub fn zero(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self { dim, family: Family::Zero, norm_const: 1.0 })
    }

    pub fn from_family(dim: usize, family: &Family) -> Result<Self> {
        match family {
            Family::Kraichnan { ell, lambda } => Self::kraichnan(dim, *ell, *lambda),
            Family::Band { a, b, height } => Self::band(dim, *a, *b, *height),
            Family::Tabulated { radii, values } => Self::tabulated(dim, radii.clone(), values.clone()),
            Family::Zero => Self::zero(dim),
            Family::Mollified { base, n_mol } => Self::from_family(dim, base)?.mollify(*n_mol),
        }
    }

    /// Density `g(xi) e^{-|xi|^2 / n_mol}`.
    pub fn mollify(&self, n_mol: f64) -> Result<Self> {
        if !(n_mol > 0.0) {
            return Err(Error::InvalidCovariance(format!("mollification parameter must be positive (got {n_mol})")));
        }
        Ok(Self {
            dim: self.dim,
            family: Family::Mollified { base: Box::new(self.family.clone()), n_mol },
            norm_const: self.norm_const,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// c_{d,lambda} for the Kraichnan family.
    pub fn normalizing_constant(&self) -> f64 {
        self.norm_const
    }

    /// `G(|xi|)`.
    pub fn radial(&self, rho: f64) -> f64 {
        self.norm_const * radial_value(&self.family, self.dim, rho)
    }

    pub fn density(&self, xi: [f64; 2]) -> f64 {
        self.radial((xi[0] * xi[0] + xi[1] * xi[1]).sqrt())
    }

    /// `sup { |xi| : g(xi) > 0 }`.
    pub fn support_radius(&self) -> f64 {
        support_radius(&self.family)
    }

    fn breakpoints(&self) -> Vec<f64> {
        breakpoints(&self.family)
    }

    /// `sigma_{d-1} \int_0^R h(G(rho), rho) rho^{d-1} drho` over the support.
    fn radial_integral<H: Fn(f64, f64) -> f64>(&self, h: H) -> Result<f64> {
        let support = self.support_radius();
        if support == 0.0 {
            return Ok(0.0);
        }
        let d = self.dim as i32;
        let v = integrate(
            |rho| {
                let g = self.radial(rho);
                if g == 0.0 {
                    0.0
                } else {
                    h(g, rho) * rho.powi(d - 1)
                }
            },
            0.0,
            support,
            &self.breakpoints(),
            QUAD_TOL,
        )?;
        Ok(unit_sphere_area(self.dim) * v)
    }

    /// `kappa = ((d-1)/(2d)) ||g||_1`, so that `Q(0) = 2 kappa I_d`.
    pub fn kappa(&self) -> Result<f64> {
        let d = self.dim as f64;
        Ok((d - 1.0) / (2.0 * d) * self.spectral_norm(1.0)?)
    }

    /// `||g||_{L^r(R^d)}` for `r >= 1`, `r = f64::INFINITY` for the sup norm.
    /// Stands in for `||Q^||_r` since `P_xi` is an orthogonal projection.
    pub fn spectral_norm(&self, r: f64) -> Result<f64> {
        if !(r >= 1.0) {
            return Err(Error::ParameterOutOfRange(format!("norm exponent {r} < 1")));
        }
        if r.is_infinite() {
            return Ok(self.sup_norm());
        }
        let integral = self.radial_integral(|g, _| g.powf(r))?;
        Ok(integral.powf(1.0 / r))
    }

    fn sup_norm(&self) -> f64 {
        match &self.family {
            Family::Zero => 0.0,
            Family::Kraichnan { ell, lambda } => {
                self.norm_const * ell.powf(-lambda) * (1.0 / ell).powf(-(self.dim as f64 + lambda))
            }
            Family::Band { height, .. } => *height,
            Family::Tabulated { values, .. } => values.iter().cloned().fold(0.0, f64::max),
            Family::Mollified { .. } => {
                let mut pts = self.breakpoints();
                pts.insert(0, 0.0);
                pts.push(self.support_radius());
                pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
                pts.dedup();
                let mut best: f64 = 0.0;
                for w in pts.windows(2) {
                    let span = w[1] - w[0];
                    let (lo, hi) = (w[0] + 1e-12 * span, w[1] - 1e-12 * span);
                    let (_, v) = maximize_1d(|r| self.radial(r), lo, hi, 512);
                    best = best.max(v).max(self.radial(lo)).max(self.radial(hi));
                }
                best
            }
        }
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 1 || dim == 2 {
        Ok(())
    } else {
        Err(Error::InvalidCovariance(format!("dimension {dim} not supported")))
    }
}

fn radial_value(family: &Family, dim: usize, rho: f64) -> f64 {
    match family {
        Family::Zero => 0.0,
        Family::Kraichnan { ell, lambda } => {
            if rho >= 1.0 / ell && rho <= 2.0 / ell {
                ell.powf(-lambda) * rho.powf(-(dim as f64 + lambda))
            } else {
                0.0
            }
        }
        Family::Band { a, b, height } => {
            if rho >= *a && rho <= *b {
                *height
            } else {
                0.0
            }
        }
        Family::Tabulated { radii, values } => {
            if rho < radii[0] || rho > *radii.last().unwrap() {
                return 0.0;
            }
            let k = radii.partition_point(|r| *r <= rho);
            if k == 0 {
                return values[0];
            }
            if k >= radii.len() {
                return *values.last().unwrap();
            }
            let (r0, r1) = (radii[k - 1], radii[k]);
            let w = (rho - r0) / (r1 - r0);
            values[k - 1] * (1.0 - w) + values[k] * w
        }
        Family::Mollified { base, n_mol } => radial_value(base, dim, rho) * (-rho * rho / n_mol).exp(),
    }
}

fn support_radius(family: &Family) -> f64 {
    match family {
        Family::Zero => 0.0,
        Family::Kraichnan { ell, .. } => 2.0 / ell,
        Family::Band { b, height, .. } => {
            if *height > 0.0 {
                *b
            } else {
                0.0
            }
        }
        Family::Tabulated { radii, values } => {
            match values.iter().rposition(|v| *v > 0.0) {
                None => 0.0,
                // Linear interpolation stays positive up to the next node.
                Some(k) => radii[(k + 1).min(radii.len() - 1)],
            }
        }
        Family::Mollified { base, .. } => support_radius(base),
    }
}

fn breakpoints(family: &Family) -> Vec<f64> {
    match family {
        Family::Zero => vec![],
        Family::Kraichnan { ell, .. } => vec![1.0 / ell, 2.0 / ell],
        Family::Band { a, b, .. } => vec![*a, *b],
        Family::Tabulated { radii, .. } => radii.clone(),
        Family::Mollified { base, .. } => breakpoints(base),
    }
}

/// One Hermitian-pair representative of the lattice basis, carrying a cos
/// and a sin phase.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseMode {
    pub lattice: [i64; 2],
    pub slot: usize,
    pub neg_slot: usize,
    pub wavevector: [f64; 2],
    /// Unit vector perpendicular to the wavevector.
    pub polarization: [f64; 2],
    /// `a_j`, square root of the cell's spectral mass.
    pub amplitude: f64,
}

/// Discretised noise on a grid.
#[derive(Clone, Debug)]
pub struct NoiseBasis {
    grid: Grid,
    modes: Vec<NoiseMode>,
    kappa_grid: f64,
}

/// `(experiment seed, sample index, step index)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedCoords {
    pub seed: u64,
    pub sample: u64,
    pub step: u64,
}

impl SeedCoords {
    pub fn new(seed: u64, sample: u64, step: u64) -> Self {
        Self { seed, sample, step }
    }
}

#[derive(Clone, Debug)]
pub struct NoiseIncrement {
    pub grid: Grid,
    pub dw: VectorField,
    pub dt: f64,
    pub seed_coords: SeedCoords,
}

impl NoiseBasis {
    /// Lattice basis for `spec` on `grid`. Each representative `j` gets the
    /// spectral mass of `g` over its lattice cell, integrated with a
    /// `CELL_SUBDIVISIONS^d` midpoint rule.
    pub fn build(spec: &CovarianceSpec, grid: &Grid) -> Result<Self> {
        if spec.dim() != grid.dim() {
            return Err(Error::InvalidCovariance(format!(
                "spec dimension {} does not match grid dimension {}",
                spec.dim(),
                grid.dim()
            )));
        }
        let support = spec.support_radius();
        let k0 = grid.fundamental();
        let reach = support + k0 * (grid.dim() as f64).sqrt() / 2.0;
        if support > 0.0 && reach >= grid.max_wavenumber() {
            return Err(Error::UnresolvedSpectrum { support, max_wavenumber: grid.max_wavenumber() });
        }
        let mut modes = Vec::new();
        if grid.dim() == 2 && support > 0.0 {
            let jmax = (reach / k0).ceil() as i64;
            let sub = CELL_SUBDIVISIONS;
            let offsets: Vec<f64> = (0..sub).map(|m| ((m as f64 + 0.5) / sub as f64 - 0.5) * k0).collect();
            let sub_area = (k0 / sub as f64).powi(2);
            for j1 in 0..=jmax {
                for j0 in -jmax..=jmax {
                    if j1 == 0 && j0 <= 0 {
                        continue;
                    }
                    let xi = [k0 * j0 as f64, k0 * j1 as f64];
                    let norm = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
                    if norm - k0 * std::f64::consts::FRAC_1_SQRT_2 > support {
                        continue;
                    }
                    let mut mass = 0.0;
                    for &dx in &offsets {
                        for &dy in &offsets {
                            mass += spec.density([xi[0] + dx, xi[1] + dy]);
                        }
                    }
                    mass *= sub_area;
                    if mass <= 0.0 {
                        continue;
                    }
                    let lattice = [j0, j1];
                    let slot = grid.spectral_index(lattice);
                    modes.push(NoiseMode {
                        lattice,
                        slot,
                        neg_slot: grid.spectral_index([-j0, -j1]),
                        wavevector: xi,
                        polarization: [-xi[1] / norm, xi[0] / norm],
                        amplitude: mass.sqrt(),
                    });
                }
            }
        }
        let d = grid.dim() as f64;
        // trace Q_grid(0) = sum over modes of 2 a^2 |e|^2.
        let trace: f64 = modes.iter().map(|m| 2.0 * m.amplitude * m.amplitude).sum();
        let kappa_grid = trace / (2.0 * d);
        Ok(Self { grid: grid.clone(), modes, kappa_grid })
    }

    pub fn empty(grid: &Grid) -> Self {
        Self { grid: grid.clone(), modes: Vec::new(), kappa_grid: 0.0 }
    }

    /// Single cos/sin pair with given amplitude at lattice point `j`.
    pub fn single_mode(grid: &Grid, j: [i64; 2], amplitude: f64) -> Result<Self> {
        if grid.dim() != 2 {
            return Err(Error::InvalidGrid("single_mode needs d = 2".into()));
        }
        let half = (grid.n() / 2) as i64;
        if j == [0, 0] || j[0].abs() >= half || j[1].abs() >= half {
            return Err(Error::UnresolvedSpectrum {
                support: grid.fundamental() * ((j[0] * j[0] + j[1] * j[1]) as f64).sqrt(),
                max_wavenumber: grid.max_wavenumber(),
            });
        }
        let k0 = grid.fundamental();
        let xi = [k0 * j[0] as f64, k0 * j[1] as f64];
        let norm = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
        let mode = NoiseMode {
            lattice: j,
            slot: grid.spectral_index(j),
            neg_slot: grid.spectral_index([-j[0], -j[1]]),
            wavevector: xi,
            polarization: [-xi[1] / norm, xi[0] / norm],
            amplitude,
        };
        Ok(Self { grid: grid.clone(), kappa_grid: amplitude * amplitude / 2.0, modes: vec![mode] })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn modes(&self) -> &[NoiseMode] {
        &self.modes
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Number of scalar basis functions (cos and sin phases counted separately).
    pub fn basis_size(&self) -> usize {
        2 * self.modes.len()
    }

    pub fn kappa_grid(&self) -> f64 {
        self.kappa_grid
    }

    /// Analytic grid covariance `Q_grid(r) = sum_modes 2 a^2 (e (x) e) cos(xi.r)`.
    pub fn analytic_covariance(&self, r: [f64; 2]) -> [[f64; 2]; 2] {
        let mut q = [[0.0; 2]; 2];
        for m in &self.modes {
            let c = 2.0 * m.amplitude * m.amplitude * (m.wavevector[0] * r[0] + m.wavevector[1] * r[1]).cos();
            for a in 0..2 {
                for b in 0..2 {
                    q[a][b] += c * m.polarization[a] * m.polarization[b];
                }
            }
        }
        q
    }

    /// Writes the calibrated spectrum of `dW_x + i dW_y` into `packed`
    /// (all other slots zeroed).
    pub fn fill_packed_spectrum(&self, dt: f64, coords: SeedCoords, packed: &mut [Complex64]) {
        packed.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        let scale = (2.0 * dt).sqrt() / (2.0 * self.grid.inverse_scale());
        for (idx, m) in self.modes.iter().enumerate() {
            let (zc, zs) = rng::mode_normals(coords.seed, coords.sample, coords.step, idx as u64);
            let amp = m.amplitude * scale;
            // A cos + B sin  <->  c_j = (A - iB)/2, c_{-j} = (A + iB)/2.
            let phase = Complex64::new(zc, -zs) * amp;
            let cx = phase * m.polarization[0];
            let cy = phase * m.polarization[1];
            packed[m.slot] = cx + Complex64::i() * cy;
            packed[m.neg_slot] = cx.conj() + Complex64::i() * cy.conj();
        }
    }

    /// Real-space increment components written into `out_x`, `out_y` using
    /// the caller's transform engine.
    pub fn sample_into(
        &self,
        transformer: &mut Transformer,
        dt: f64,
        coords: SeedCoords,
        packed: &mut Vec<Complex64>,
        out_x: &mut [f64],
        out_y: &mut [f64],
    ) {
        if self.modes.is_empty() {
            out_x.iter_mut().for_each(|v| *v = 0.0);
            out_y.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        self.fill_packed_spectrum(dt, coords, packed);
        let p = &*packed;
        transformer.inverse_pair_with(|s| p[s], |_| Complex64::new(0.0, 0.0), out_x, out_y);
        // The packed buffer already holds dW_x + i dW_y, so the "b" side is zero
        // and the imaginary output is the y component.
    }

    /// Draw one increment.
    pub fn sample_increment(&self, dt: f64, coords: SeedCoords) -> Result<NoiseIncrement> {
        if !(dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt must be positive (got {dt})")));
        }
        let grid = &self.grid;
        let mut t = Transformer::new(grid);
        let mut packed = vec![Complex64::new(0.0, 0.0); grid.len()];
        let mut x = vec![0.0; grid.len()];
        let mut y = vec![0.0; grid.len()];
        let components = if grid.dim() == 2 {
            self.sample_into(&mut t, dt, coords, &mut packed, &mut x, &mut y);
            vec![ScalarField { grid: grid.clone(), values: x }, ScalarField { grid: grid.clone(), values: y }]
        } else {
            vec![ScalarField::zeros(grid)]
        };
        Ok(NoiseIncrement { grid: grid.clone(), dw: VectorField { grid: grid.clone(), components }, dt, seed_coords: coords })
    }

    /// Monte Carlo estimate of `E[dW(x) (x) dW(x + r)] / dt` for a lattice
    /// displacement `r`, averaged over all grid points (homogeneity) and `samples`
    /// draws, next to the analytic `Q_grid(r)`.
    pub fn empirical_covariance(&self, samples: usize, displacement: [i64; 2], seed: u64) -> Result<CovarianceEstimate> {
        if samples < 2 {
            return Err(Error::InvalidConfig("empirical covariance needs at least 2 samples".into()));
        }
        let grid = &self.grid;
        let r = [displacement[0] as f64 * grid.spacing(), displacement[1] as f64 * grid.spacing()];
        let analytic = self.analytic_covariance(r);
        let mut empirical = [[0.0; 2]; 2];
        if self.modes.is_empty() {
            return Ok(CovarianceEstimate { empirical, analytic, samples });
        }
        let n = grid.n() as i64;
        let shifted: Vec<usize> = (0..grid.len())
            .map(|i| {
                let i0 = (i as i64 / n + displacement[0]).rem_euclid(n);
                let i1 = (i as i64 % n + displacement[1]).rem_euclid(n);
                (i0 * n + i1) as usize
            })
            .collect();
        let mut t = Transformer::new(grid);
        let mut packed = vec![Complex64::new(0.0, 0.0); grid.len()];
        let mut w = [vec![0.0; grid.len()], vec![0.0; grid.len()]];
        let dt = 1.0;
        for m in 0..samples {
            let [wx, wy] = &mut w;
            self.sample_into(&mut t, dt, SeedCoords::new(seed, m as u64, 0), &mut packed, wx, wy);
            for a in 0..2 {
                for b in 0..2 {
                    let s = crate::numerics::pairwise_sum_map(grid.len(), |i| w[a][i] * w[b][shifted[i]]);
                    empirical[a][b] += s / grid.len() as f64;
                }
            }
        }
        for row in empirical.iter_mut() {
            for v in row.iter_mut() {
                *v /= samples as f64 * dt;
            }
        }
        Ok(CovarianceEstimate { empirical, analytic, samples })
    }

    /// Checks the lattice analogue of `sum_k sigma_k^(xi) (x) conj(sigma_k^(eta)) = Q^(xi) delta(xi - eta)`
    /// by transforming every basis function. Values are scaled so the
    /// diagonal is `a_j^2 P_{xi_j}`.
    pub fn orthogonality_report(&self) -> OrthogonalityReport {
        let grid = &self.grid;
        let mut t = Transformer::new(grid);
        let scale = grid.inverse_scale();
        let mut diag_defect: f64 = 0.0;
        let mut offdiag: f64 = 0.0;
        let mut max_mass: f64 = 0.0;
        use std::collections::BTreeMap;
        let mut acc: BTreeMap<(usize, usize), [[Complex64; 2]; 2]> = BTreeMap::new();
        for m in &self.modes {
            max_mass = max_mass.max(m.amplitude * m.amplitude);
            for phase in 0..2 {
                let mut spectra = Vec::with_capacity(2);
                for c in 0..2 {
                    let f = ScalarField::from_fn(grid, |x| {
                        let arg = m.wavevector[0] * x[0] + m.wavevector[1] * x[1];
                        let basis = if phase == 0 { arg.cos() } else { arg.sin() };
                        m.amplitude * m.polarization[c] * std::f64::consts::SQRT_2 * basis
                    });
                    spectra.push(t.forward(&f));
                }
                let peak = spectra.iter().map(|s| s.max_abs()).fold(0.0, f64::max);
                let support: Vec<usize> = (0..grid.len())
                    .filter(|&s| spectra.iter().any(|sp| sp.coeffs[s].norm() > 1e-13 * peak))
                    .collect();
                for &j in &support {
                    for &k in &support {
                        let e = acc.entry((j, k)).or_insert([[Complex64::new(0.0, 0.0); 2]; 2]);
                        for a in 0..2 {
                            for b in 0..2 {
                                e[a][b] += spectra[a].coeffs[j] * spectra[b].coeffs[k].conj() * scale * scale;
                            }
                        }
                    }
                }
            }
        }
        let by_slot: std::collections::HashMap<usize, &NoiseMode> =
            self.modes.iter().flat_map(|m| [(m.slot, m), (m.neg_slot, m)]).collect();
        for ((j, k), mat) in &acc {
            if j == k {
                let m = by_slot.get(j);
                for a in 0..2 {
                    for b in 0..2 {
                        let want = match m {
                            Some(m) => {
                                let xi = m.wavevector;
                                let n2 = xi[0] * xi[0] + xi[1] * xi[1];
                                let p = if a == b { 1.0 } else { 0.0 } - xi[a] * xi[b] / n2;
                                m.amplitude * m.amplitude * p
                            }
                            None => 0.0,
                        };
                        diag_defect = diag_defect.max((mat[a][b] - want).norm());
                    }
                }
            } else {
                for row in mat {
                    for v in row {
                        offdiag = offdiag.max(v.norm());
                    }
                }
            }
        }
        let denom = if max_mass > 0.0 { max_mass } else { 1.0 };
        OrthogonalityReport { max_offdiag: offdiag / denom, max_diag_defect: diag_defect / denom }
    }

    /// `max |R Q_grid(r) R^T - Q_grid(R r)| / |Q_grid(0)|` over the given
    /// displacements and `R` the 90 degree rotation.
    pub fn isotropy_defect(&self, displacements: &[[f64; 2]]) -> f64 {
        let scale = 2.0 * self.kappa_grid;
        if scale == 0.0 || self.grid.dim() != 2 {
            return 0.0;
        }
        let rot = [[0.0, -1.0], [1.0, 0.0]];
        let mut worst: f64 = 0.0;
        for r in displacements {
            let q = self.analytic_covariance(*r);
            let rq = self.analytic_covariance([-r[1], r[0]]);
            for a in 0..2 {
                for b in 0..2 {
                    let mut v = 0.0;
                    for c in 0..2 {
                        for e in 0..2 {
                            v += rot[a][c] * q[c][e] * rot[b][e];
                        }
                    }
                    worst = worst.max((v - rq[a][b]).abs() / scale);
                }
            }
        }
        worst
    }

    /// Sample correlation between the increments of steps 0 and 1, using the
    /// spatial inner product `<dW_0, dW_1>` per sample.
    pub fn temporal_correlation(&self, samples: usize, seed: u64) -> f64 {
        if self.modes.is_empty() || samples == 0 {
            return 0.0;
        }
        let grid = &self.grid;
        let mut t = Transformer::new(grid);
        let mut packed = vec![Complex64::new(0.0, 0.0); grid.len()];
        let mut w0 = [vec![0.0; grid.len()], vec![0.0; grid.len()]];
        let mut w1 = [vec![0.0; grid.len()], vec![0.0; grid.len()]];
        let (mut cross, mut n0, mut n1) = (Vec::new(), Vec::new(), Vec::new());
        for m in 0..samples as u64 {
            let [ax, ay] = &mut w0;
            self.sample_into(&mut t, 1.0, SeedCoords::new(seed, m, 0), &mut packed, ax, ay);
            let [bx, by] = &mut w1;
            self.sample_into(&mut t, 1.0, SeedCoords::new(seed, m, 1), &mut packed, bx, by);
            let dot = |u: &[Vec<f64>; 2], v: &[Vec<f64>; 2]| {
                crate::numerics::pairwise_sum_map(grid.len(), |i| u[0][i] * v[0][i] + u[1][i] * v[1][i])
            };
            cross.push(dot(&w0, &w1));
            n0.push(dot(&w0, &w0));
            n1.push(dot(&w1, &w1));
        }
        let sum = |v: &[f64]| crate::numerics::pairwise_sum(v);
        sum(&cross) / (sum(&n0) * sum(&n1)).sqrt()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CovarianceEstimate {
    pub empirical: [[f64; 2]; 2],
    pub analytic: [[f64; 2]; 2],
    pub samples: usize,
}

/// Both entries are relative to the largest cell mass.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct OrthogonalityReport {
    pub max_offdiag: f64,
    pub max_diag_defect: f64,
}

impl NoiseIncrement {
    /// `max_j |xi_j . dW^(xi_j)| / max_j |xi_j| |dW^(xi_j)|`.
    pub fn relative_divergence(&self) -> f64 {
        let grid = &self.grid;
        if grid.dim() == 1 {
            return 0.0;
        }
        let mut t = Transformer::new(grid);
        let wx = t.forward(&self.dw.components[0]);
        let wy = t.forward(&self.dw.components[1]);
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for s in 0..grid.len() {
            let xi = grid.wavevector(s);
            let div = wx.coeffs[s] * xi[0] + wy.coeffs[s] * xi[1];
            num = num.max(div.norm());
            let k = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
            den = den.max(k * (wx.coeffs[s].norm_sqr() + wy.coeffs[s].norm_sqr()).sqrt());
        }
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }
}

/// Closed-form `c_{d,lambda} = lambda / (sigma_{d-1} (1 - 2^{-lambda}))`.
pub fn kraichnan_constant_closed_form(dim: usize, lambda: f64) -> f64 {
    lambda / (unit_sphere_area(dim) * (1.0 - 2f64.powf(-lambda)))
}

/// Area of the annulus `a <= |xi| <= b` in R^2.
pub fn annulus_area(a: f64, b: f64) -> f64 {
    PI * (b * b - a * a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kraichnan_normalisation_matches_closed_form() {
        for (d, lambda) in [(2, 1.0), (2, 0.5), (1, 2.0)] {
            let spec = CovarianceSpec::kraichnan(d, 0.1, lambda).unwrap();
            let closed = kraichnan_constant_closed_form(d, lambda);
            assert!((spec.normalizing_constant() - closed).abs() / closed < 1e-9);
            assert!((spec.spectral_norm(1.0).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn kappa_values() {
        let k = CovarianceSpec::kraichnan(2, 0.3, 1.0).unwrap().kappa().unwrap();
        assert!((k - 0.25).abs() < 1e-9);
        assert_eq!(CovarianceSpec::zero(2).unwrap().kappa().unwrap(), 0.0);
        let band = CovarianceSpec::band(2, 1.0, 2.0, 1.0).unwrap();
        let oracle = 0.25 * annulus_area(1.0, 2.0);
        assert!((band.kappa().unwrap() - oracle).abs() / oracle < 1e-9);
        assert!((oracle - 3.0 * PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn sup_norm_kraichnan() {
        let spec = CovarianceSpec::kraichnan(2, 0.2, 1.0).unwrap();
        let want = spec.normalizing_constant() * 0.2f64.powi(2);
        assert!((spec.spectral_norm(f64::INFINITY).unwrap() - want).abs() < 1e-14);
        for r in [1.0, 2.0, 3.0, f64::INFINITY] {
            assert_eq!(CovarianceSpec::zero(2).unwrap().spectral_norm(r).unwrap(), 0.0);
        }
    }

    #[test]
    fn mollify_reduces_mass() {
        let band = CovarianceSpec::band(2, 1.0, 2.0, 1.0).unwrap();
        let moll = band.mollify(4.0).unwrap();
        // Oracle: 2 pi \int_1^2 e^{-r^2/4} r dr = 4 pi (e^{-1/4} - e^{-1}).
        let oracle = 4.0 * PI * ((-0.25f64).exp() - (-1.0f64).exp());
        let got = moll.spectral_norm(1.0).unwrap();
        assert!((got - oracle).abs() / oracle < 1e-9);
        assert!(got < band.spectral_norm(1.0).unwrap());
        assert!(moll.kappa().unwrap() <= band.kappa().unwrap());
        let huge = band.mollify(1e300).unwrap();
        assert_eq!(huge.radial(1.5), band.radial(1.5));
        let z = CovarianceSpec::zero(2).unwrap().mollify(3.0).unwrap();
        assert_eq!(z.radial(1.0), 0.0);
        assert!(CovarianceSpec::zero(2).unwrap().mollify(0.0).is_err());
    }

    #[test]
    fn tabulated_interpolates() {
        let t = CovarianceSpec::tabulated(2, vec![1.0, 2.0, 3.0], vec![0.0, 2.0, 0.0]).unwrap();
        assert_eq!(t.radial(1.5), 1.0);
        assert_eq!(t.radial(2.0), 2.0);
        assert_eq!(t.radial(3.5), 0.0);
        assert_eq!(t.spectral_norm(f64::INFINITY).unwrap(), 2.0);
        assert!(CovarianceSpec::tabulated(2, vec![1.0, 0.5], vec![1.0, 1.0]).is_err());
        assert!(CovarianceSpec::tabulated(2, vec![1.0, 2.0], vec![1.0, -1.0]).is_err());
    }

    #[test]
    fn tabulated_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        std::fs::write(&path, "xi,g\n1.0,0.5\n2.0,0.5\n").unwrap();
        let t = CovarianceSpec::from_csv(2, &path).unwrap();
        assert_eq!(t.radial(1.5), 0.5);
        let oracle = 0.5 * annulus_area(1.0, 2.0);
        assert!((t.spectral_norm(1.0).unwrap() - oracle).abs() / oracle < 1e-9);
    }

    #[test]
    fn basis_polarisations_perpendicular() {
        let grid = Grid::new(2, 2.0 * PI, 32).unwrap();
        let spec = CovarianceSpec::band(2, 4.6, 5.4, 1.0).unwrap();
        let basis = NoiseBasis::build(&spec, &grid).unwrap();
        assert!(!basis.is_empty());
        for m in basis.modes() {
            let dot = m.polarization[0] * m.wavevector[0] + m.polarization[1] * m.wavevector[1];
            assert!(dot.abs() < 1e-14);
            // Cells touching the shell only.
            let r = (m.wavevector[0].powi(2) + m.wavevector[1].powi(2)).sqrt();
            assert!(r - 0.5f64.sqrt() <= 5.4 && r + 0.5f64.sqrt() >= 4.6);
        }
    }

    #[test]
    fn unresolved_spectrum_rejected() {
        let grid = Grid::new(2, 2.0 * PI, 16).unwrap();
        let spec = CovarianceSpec::kraichnan(2, 0.2, 1.0).unwrap();
        assert!(matches!(NoiseBasis::build(&spec, &grid), Err(Error::UnresolvedSpectrum { .. })));
    }

    #[test]
    fn kappa_grid_close_to_kappa() {
        let grid = Grid::new(2, 2.0 * PI, 64).unwrap();
        let spec = CovarianceSpec::kraichnan(2, 0.2, 1.0).unwrap();
        let basis = NoiseBasis::build(&spec, &grid).unwrap();
        let kappa = spec.kappa().unwrap();
        assert!((basis.kappa_grid() - kappa).abs() / kappa < 0.02);
        let q0 = basis.analytic_covariance([0.0, 0.0]);
        assert!((q0[0][0] - 2.0 * basis.kappa_grid()).abs() < 1e-12);
        assert!((q0[1][1] - 2.0 * basis.kappa_grid()).abs() < 1e-12);
        assert!(q0[0][1].abs() < 1e-12);
    }

    #[test]
    fn empty_basis_gives_zero_noise() {
        let grid = Grid::new(2, 1.0, 8).unwrap();
        let basis = NoiseBasis::empty(&grid);
        let inc = basis.sample_increment(0.1, SeedCoords::new(1, 2, 3)).unwrap();
        assert!(inc.dw.components.iter().all(|c| c.values.iter().all(|v| *v == 0.0)));
        let cov = basis.empirical_covariance(4, [0, 0], 1).unwrap();
        assert_eq!(cov.analytic, [[0.0; 2]; 2]);
        assert_eq!(cov.empirical, [[0.0; 2]; 2]);
    }

    #[test]
    fn single_mode_increment_closed_form() {
        let l = 2.0 * PI;
        let grid = Grid::new(2, l, 16).unwrap();
        let basis = NoiseBasis::single_mode(&grid, [2, 1], 0.7).unwrap();
        let dt = 0.01;
        let coords = SeedCoords::new(5, 0, 9);
        let inc = basis.sample_increment(dt, coords).unwrap();
        let (zc, zs) = rng::mode_normals(5, 0, 9, 0);
        let m = &basis.modes()[0];
        for i in 0..grid.len() {
            let x = grid.point(i);
            let arg = m.wavevector[0] * x[0] + m.wavevector[1] * x[1];
            let phi = std::f64::consts::SQRT_2 * (zc * arg.cos() + zs * arg.sin()) * dt.sqrt() * 0.7;
            for c in 0..2 {
                assert!((inc.dw.components[c].values[i] - phi * m.polarization[c]).abs() < 1e-13);
            }
        }
        let again = basis.sample_increment(dt, coords).unwrap();
        assert_eq!(inc.dw, again.dw);
    }

    #[test]
    fn increments_divergence_free() {
        let grid = Grid::new(2, 2.0 * PI, 32).unwrap();
        let basis = NoiseBasis::build(&CovarianceSpec::kraichnan(2, 0.3, 1.0).unwrap(), &grid).unwrap();
        for step in 0..5 {
            let inc = basis.sample_increment(1e-3, SeedCoords::new(3, 0, step)).unwrap();
            assert!(inc.relative_divergence() < 1e-10);
        }
    }

    #[test]
    fn homogeneity_and_isotropy() {
        let grid = Grid::new(2, 2.0 * PI, 32).unwrap();
        let basis = NoiseBasis::build(&CovarianceSpec::kraichnan(2, 0.3, 1.0).unwrap(), &grid).unwrap();
        assert!(basis.isotropy_defect(&[[0.3, -0.2], [1.1, 0.7], [0.0, 2.5]]) < 1e-12);
    }

    #[test]
    fn white_in_time() {
        let grid = Grid::new(2, 2.0 * PI, 32).unwrap();
        let basis = NoiseBasis::build(&CovarianceSpec::kraichnan(2, 0.3, 1.0).unwrap(), &grid).unwrap();
        let m = 200;
        assert!(basis.temporal_correlation(m, 9).abs() <= 3.0 / (m as f64).sqrt());
        // Same step twice is perfectly correlated.
        let a = basis.sample_increment(1.0, SeedCoords::new(9, 0, 0)).unwrap();
        let b = basis.sample_increment(1.0, SeedCoords::new(9, 0, 0)).unwrap();
        assert_eq!(a.dw, b.dw);
    }

    #[test]
    fn kraichnan_norm_scaling() {
        let ells = [0.4f64, 0.2, 0.1, 0.05];
        let x: Vec<f64> = ells.iter().map(|l| l.ln()).collect();
        let y: Vec<f64> =
            ells.iter().map(|&l| CovarianceSpec::kraichnan(2, l, 1.0).unwrap().spectral_norm(3.0).unwrap().ln()).collect();
        let slope = crate::stats::ols(&x, &y).unwrap().0;
        assert!((slope - 4.0 / 3.0).abs() < 1e-8, "{slope}");
    }

    #[test]
    fn orthogonality_small_grid() {
        let grid = Grid::new(2, 2.0 * PI, 16).unwrap();
        let basis = NoiseBasis::build(&CovarianceSpec::band(2, 1.5, 3.0, 0.2).unwrap(), &grid).unwrap();
        let rep = basis.orthogonality_report();
        assert!(rep.max_offdiag < 1e-10, "{rep:?}");
        assert!(rep.max_diag_defect < 1e-10, "{rep:?}");
    }
}
