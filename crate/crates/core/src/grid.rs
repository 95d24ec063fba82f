//! Periodic box discretisation of R^d (d = 1, 2) and the discrete Fourier
//! transform calibrated to the symmetric continuous convention
//!
//! ```text
//! f^(xi) = (2 pi)^{-d/2} \int e^{-i x.xi} f(x) dx
//! ```
//!
//! realised as the quadrature `coeffs(j) = (2 pi)^{-d/2} h^d sum_x e^{-i x.xi_j} f(x)`
//! on the lattice `xi_j = (2 pi / L) j`, `j in {-N/2, ..., N/2 - 1}^d`.
//!
//! With this scaling Parseval reads `h^d sum_x f(x)^2 = (2 pi / L)^d sum_j |coeffs(j)|^2`,
//! i.e. the lattice sum is the Riemann sum of `\int |f^|^2 dxi`.
//!
//! Storage: real fields are row-major with the first coordinate slowest,
//! `values[i0 * N + i1]` at `x = (i0 h, i1 h)`. Spectral coefficients are
//! kept in FFT order and, for d = 2, transposed: `coeffs[k1 * N + k0]`. Use
//! [`Grid::lattice`] / [`Grid::spectral_index`] instead of indexing by hand.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    box_length: f64,
    points_per_dim: usize,
}

impl Grid {
    pub fn new(dim: usize, box_length: f64, points_per_dim: usize) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in {{1, 2}}")));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(Error::InvalidGrid(format!("box length {box_length} must be positive")));
        }
        if points_per_dim < 4 || !points_per_dim.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "points per dimension {points_per_dim} must be even and >= 4"
            )));
        }
        Ok(Self { dim, box_length, points_per_dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn n(&self) -> usize {
        self.points_per_dim
    }

    /// Total number of samples, N^d.
    pub fn len(&self) -> usize {
        self.points_per_dim.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.box_length / self.points_per_dim as f64
    }

    /// h^d.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// L^d.
    pub fn volume(&self) -> f64 {
        self.box_length.powi(self.dim as i32)
    }

    /// Lattice spacing in wavenumber space, 2 pi / L.
    pub fn fundamental(&self) -> f64 {
        2.0 * PI / self.box_length
    }

    /// (2 pi / L)^d, the spectral volume of one lattice cell.
    pub fn spectral_cell(&self) -> f64 {
        self.fundamental().powi(self.dim as i32)
    }

    /// Largest representable wavenumber magnitude per axis, (2 pi / L) N / 2.
    pub fn max_wavenumber(&self) -> f64 {
        self.fundamental() * (self.points_per_dim / 2) as f64
    }

    /// Scale applied after an unnormalised forward DFT.
    pub fn forward_scale(&self) -> f64 {
        (2.0 * PI).powf(-(self.dim as f64) / 2.0) * self.cell_volume()
    }

    /// Scale applied after an unnormalised inverse DFT.
    pub fn inverse_scale(&self) -> f64 {
        (2.0 * PI).powf(self.dim as f64 / 2.0) / self.volume()
    }

    /// FFT-order position to signed frequency.
    #[inline]
    pub fn freq(&self, k: usize) -> i64 {
        let n = self.points_per_dim;
        if k < n / 2 {
            k as i64
        } else {
            k as i64 - n as i64
        }
    }

    /// Signed frequency to FFT-order position (wrapping modulo N).
    #[inline]
    pub fn position(&self, j: i64) -> usize {
        j.rem_euclid(self.points_per_dim as i64) as usize
    }

    /// Signed lattice index of a spectral slot; second entry is 0 for d = 1.
    #[inline]
    pub fn lattice(&self, s: usize) -> [i64; 2] {
        let n = self.points_per_dim;
        match self.dim {
            1 => [self.freq(s), 0],
            _ => [self.freq(s % n), self.freq(s / n)],
        }
    }

    #[inline]
    pub fn spectral_index(&self, j: [i64; 2]) -> usize {
        match self.dim {
            1 => self.position(j[0]),
            _ => self.position(j[1]) * self.points_per_dim + self.position(j[0]),
        }
    }

    /// Slot holding the lattice point -j.
    #[inline]
    pub fn negated(&self, s: usize) -> usize {
        let j = self.lattice(s);
        self.spectral_index([-j[0], -j[1]])
    }

    #[inline]
    pub fn wavevector(&self, s: usize) -> [f64; 2] {
        let j = self.lattice(s);
        let k0 = self.fundamental();
        [k0 * j[0] as f64, k0 * j[1] as f64]
    }

    /// True if any coordinate of the slot sits on the Nyquist frequency -N/2.
    #[inline]
    pub fn is_nyquist(&self, s: usize) -> bool {
        let half = (self.points_per_dim / 2) as i64;
        let j = self.lattice(s);
        j[0] == -half || (self.dim == 2 && j[1] == -half)
    }

    /// Physical coordinates of real-space sample `i`.
    #[inline]
    pub fn point(&self, i: usize) -> [f64; 2] {
        let n = self.points_per_dim;
        let h = self.spacing();
        match self.dim {
            1 => [i as f64 * h, 0.0],
            _ => [(i / n) as f64 * h, (i % n) as f64 * h],
        }
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Real samples on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite sample {bad}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self { grid: grid.clone(), values: vec![0.0; grid.len()] }
    }

    pub fn from_fn<F: Fn([f64; 2]) -> f64>(grid: &Grid, f: F) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Self { grid: grid.clone(), values }
    }

    /// Spatial mean, L^{-d} h^d sum_x f(x).
    pub fn mean(&self) -> f64 {
        crate::numerics::pairwise_sum(&self.values) / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        self.grid.check_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(ScalarField { grid: self.grid.clone(), values })
    }

    pub fn scaled(&self, c: f64) -> ScalarField {
        ScalarField { grid: self.grid.clone(), values: self.values.iter().map(|v| c * v).collect() }
    }
}

/// Fourier coefficients on the wavenumber lattice, in the calibrated convention.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    pub grid: Grid,
    pub coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: &Grid) -> Self {
        Self { grid: grid.clone(), coeffs: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn coeff(&self, j: [i64; 2]) -> Complex64 {
        self.coeffs[self.grid.spectral_index(j)]
    }

    pub fn set_coeff(&mut self, j: [i64; 2], value: Complex64) {
        let s = self.grid.spectral_index(j);
        self.coeffs[s] = value;
    }

    /// max_j |c(-j) - conj(c(j))|.
    pub fn hermitian_defect(&self) -> f64 {
        let g = &self.grid;
        (0..self.coeffs.len())
            .map(|s| (self.coeffs[g.negated(s)] - self.coeffs[s].conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.norm()))
    }

    /// Spatial mean recovered from the zero mode.
    pub fn mean(&self) -> f64 {
        self.coeffs[0].re * self.grid.inverse_scale()
    }

    pub fn apply(&mut self, m: &Multiplier) {
        for (c, w) in self.coeffs.iter_mut().zip(&m.values) {
            *c *= *w;
        }
    }
}

/// d real components sharing one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub grid: Grid,
    pub components: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(components: Vec<ScalarField>) -> Result<Self> {
        let grid = components
            .first()
            .map(|c| c.grid.clone())
            .ok_or_else(|| Error::InvalidGrid("vector field needs components".into()))?;
        if components.len() != grid.dim() {
            return Err(Error::InvalidGrid(format!(
                "{} components on a {}-d grid",
                components.len(),
                grid.dim()
            )));
        }
        for c in &components {
            grid.check_same(&c.grid)?;
        }
        Ok(Self { grid, components })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self { grid: grid.clone(), components: (0..grid.dim()).map(|_| ScalarField::zeros(grid)).collect() }
    }

    /// max_x |v(x)| (Euclidean norm over components).
    pub fn max_norm(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| self.components.iter().map(|c| c.values[i] * c.values[i]).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// Diagonal real Fourier multiplier.
#[derive(Clone, Debug, PartialEq)]
pub struct Multiplier {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl Multiplier {
    pub fn from_fn<F: Fn(usize) -> f64>(grid: &Grid, f: F) -> Self {
        Self { grid: grid.clone(), values: (0..grid.len()).map(f).collect() }
    }

    pub fn compose(&self, other: &Multiplier) -> Multiplier {
        Multiplier {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
        }
    }
}

/// `e^{-kappa |xi_j|^2 t}`, the exact grid realisation of the heat semigroup.
pub fn heat_multiplier(grid: &Grid, kappa: f64, t: f64) -> Multiplier {
    Multiplier::from_fn(grid, |s| {
        let [a, b] = grid.wavevector(s);
        (-kappa * (a * a + b * b) * t).exp()
    })
}

/// 2/3-rule mask: 1 where every |j_i| <= N/3, else 0.
pub fn dealias_mask(grid: &Grid) -> Multiplier {
    let cut = (grid.n() / 3) as i64;
    Multiplier::from_fn(grid, |s| {
        let j = grid.lattice(s);
        if j[0].abs() <= cut && j[1].abs() <= cut {
            1.0
        } else {
            0.0
        }
    })
}

/// Per-worker transform engine: shares FFT plans, owns scratch space.
pub struct Transformer {
    grid: Grid,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    buf: Vec<Complex64>,
}

impl Transformer {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(grid.n());
        let inv = planner.plan_fft_inverse(grid.n());
        let scratch_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Self {
            grid: grid.clone(),
            fwd,
            inv,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            buf: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Unnormalised forward DFT, real-space layout in, spectral layout out.
    pub fn dft_forward(&mut self, data: &mut [Complex64]) {
        self.fwd.process_with_scratch(data, &mut self.scratch);
        if self.grid.dim() == 2 {
            transpose_square(data, self.grid.n());
            self.fwd.process_with_scratch(data, &mut self.scratch);
        }
    }

    /// Unnormalised inverse DFT, spectral layout in, real-space layout out.
    pub fn dft_inverse(&mut self, data: &mut [Complex64]) {
        self.inv.process_with_scratch(data, &mut self.scratch);
        if self.grid.dim() == 2 {
            transpose_square(data, self.grid.n());
            self.inv.process_with_scratch(data, &mut self.scratch);
        }
    }

    pub fn forward(&mut self, f: &ScalarField) -> SpectralField {
        let mut out = SpectralField::zeros(&self.grid);
        self.forward_into(&f.values, &mut out.coeffs);
        out
    }

    /// Calibrated forward transform of real samples into `out`.
    pub fn forward_into(&mut self, values: &[f64], out: &mut [Complex64]) {
        for (o, v) in out.iter_mut().zip(values) {
            *o = Complex64::new(*v, 0.0);
        }
        self.dft_forward(out);
        let scale = self.grid.forward_scale();
        for o in out.iter_mut() {
            *o *= scale;
        }
    }

    /// Inverse transform with the Hermitian precondition enforced.
    pub fn inverse(&mut self, field: &SpectralField) -> Result<ScalarField> {
        let defect = field.hermitian_defect();
        let threshold = 1e-10 * field.max_abs();
        if defect > threshold {
            return Err(Error::HermitianViolation { defect, threshold });
        }
        let mut out = ScalarField::zeros(&self.grid);
        self.inverse_into(&field.coeffs, &mut out.values);
        Ok(out)
    }

    /// Calibrated inverse transform, keeping the real part. Caller
    /// guarantees Hermitian input.
    pub fn inverse_into(&mut self, coeffs: &[Complex64], out: &mut [f64]) {
        let mut buf = std::mem::take(&mut self.buf);
        buf.copy_from_slice(coeffs);
        self.dft_inverse(&mut buf);
        let scale = self.grid.inverse_scale();
        for (o, b) in out.iter_mut().zip(&buf) {
            *o = b.re * scale;
        }
        self.buf = buf;
    }

    /// Two Hermitian spectra inverted with one complex transform:
    /// `ifft(a + i b) = a(x) + i b(x)`. `a` and `b` produce the coefficient
    /// of slot `s` on demand.
    pub fn inverse_pair_with<A, B>(&mut self, a: A, b: B, out_a: &mut [f64], out_b: &mut [f64])
    where
        A: Fn(usize) -> Complex64,
        B: Fn(usize) -> Complex64,
    {
        let mut buf = std::mem::take(&mut self.buf);
        for (s, slot) in buf.iter_mut().enumerate() {
            *slot = a(s) + Complex64::i() * b(s);
        }
        self.dft_inverse(&mut buf);
        let scale = self.grid.inverse_scale();
        for ((oa, ob), v) in out_a.iter_mut().zip(out_b.iter_mut()).zip(&buf) {
            *oa = v.re * scale;
            *ob = v.im * scale;
        }
        self.buf = buf;
    }
}

/// In-place blocked transpose of an n x n row-major matrix.
fn transpose_square(data: &mut [Complex64], n: usize) {
    const B: usize = 32;
    let mut bi = 0;
    while bi < n {
        let mut bj = bi;
        while bj < n {
            let imax = (bi + B).min(n);
            let jmax = (bj + B).min(n);
            for i in bi..imax {
                let jstart = if bi == bj { i + 1 } else { bj };
                for j in jstart..jmax {
                    data.swap(i * n + j, j * n + i);
                }
            }
            bj += B;
        }
        bi += B;
    }
}

/// One-shot calibrated forward transform.
pub fn forward_transform(f: &ScalarField) -> SpectralField {
    Transformer::new(&f.grid).forward(f)
}

/// One-shot calibrated inverse transform; fails on non-Hermitian input.
pub fn inverse_transform(field: &SpectralField) -> Result<ScalarField> {
    Transformer::new(&field.grid).inverse(field)
}

/// Spectral derivative `i xi_c` with the Nyquist slots zeroed so that real
/// fields stay real.
#[inline]
pub fn derivative_symbol(grid: &Grid, s: usize, component: usize) -> Complex64 {
    if grid.is_nyquist(s) {
        return Complex64::new(0.0, 0.0);
    }
    Complex64::new(0.0, grid.wavevector(s)[component])
}
