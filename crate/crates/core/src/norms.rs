//! Sobolev, Lebesgue and fractional-Laplacian evaluations on the grid.
//!
//! Sobolev norms are lattice Riemann sums of the continuous integrals,
//!
//! ```text
//! ||f||_{H^s dot}^2 = sum_{j != 0} |xi_j|^{2s} |f^(xi_j)|^2 (2 pi / L)^d
//! ||f||_{H^s}^2     = sum_j       <xi_j>^{2s} |f^(xi_j)|^2 (2 pi / L)^d
//! ```
//!
//! with `<xi> = (1 + |xi|^2)^{1/2}`. The zero mode is always dropped from the
//! homogeneous norm.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, SpectralField, Transformer};
use crate::numerics::pairwise_sum_map;

/// Tolerance of the mean-zero precondition, relative to `||f||_1 / L^d`.
pub const MEAN_ZERO_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormSpec {
    /// `H^s dot` with Sobolev order `s` (negative for the weak norms).
    HomogeneousSobolev { order: f64 },
    /// `H^s` with Sobolev order `s`.
    InhomogeneousSobolev { order: f64 },
    /// `L^p`, `p = f64::INFINITY` allowed.
    Lebesgue { p: f64 },
}

impl NormSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NormSpec::HomogeneousSobolev { order } | NormSpec::InhomogeneousSobolev { order } => {
                if order.is_finite() {
                    Ok(())
                } else {
                    Err(Error::ParameterOutOfRange(format!("Sobolev order {order} not finite")))
                }
            }
            NormSpec::Lebesgue { p } => {
                if p >= 1.0 {
                    Ok(())
                } else {
                    Err(Error::ParameterOutOfRange(format!("Lebesgue exponent {p} < 1")))
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match *self {
            NormSpec::HomogeneousSobolev { order } => format!("Hdot^{order}"),
            NormSpec::InhomogeneousSobolev { order } => format!("H^{order}"),
            NormSpec::Lebesgue { p } => format!("L^{p}"),
        }
    }
}

/// `(h^d sum_x |f(x)|^p)^{1/p}`, or `max |f|` for `p = inf`.
pub fn lebesgue_norm(f: &ScalarField, p: f64) -> Result<f64> {
    NormSpec::Lebesgue { p }.validate()?;
    Ok(lebesgue_norm_values(&f.grid, &f.values, p))
}

pub(crate) fn lebesgue_norm_values(grid: &Grid, values: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    let s = if p == 1.0 {
        pairwise_sum_map(values.len(), |i| values[i].abs())
    } else if p == 2.0 {
        pairwise_sum_map(values.len(), |i| values[i] * values[i])
    } else {
        pairwise_sum_map(values.len(), |i| values[i].abs().powf(p))
    };
    (s * grid.cell_volume()).powf(1.0 / p)
}

/// Fails with `MeanNotZero` unless `|mean(f)| <= 1e-10 ||f||_1 / L^d`.
pub fn require_mean_zero(f: &ScalarField) -> Result<()> {
    let mean = f.mean();
    let scale = lebesgue_norm_values(&f.grid, &f.values, 1.0) / f.grid.volume();
    let threshold = MEAN_ZERO_TOL * scale;
    if mean.abs() > threshold {
        return Err(Error::MeanNotZero { mean, threshold });
    }
    Ok(())
}

/// Precomputed `w_j` with `||f||^2 = sum_j w_j |f^(xi_j)|^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct SobolevWeights {
    pub grid: Grid,
    pub spec: NormSpec,
    pub values: Vec<f64>,
}

impl SobolevWeights {
    pub fn new(grid: &Grid, spec: NormSpec) -> Result<Self> {
        spec.validate()?;
        let cell = grid.spectral_cell();
        let values = match spec {
            NormSpec::HomogeneousSobolev { order } => (0..grid.len())
                .map(|s| {
                    let [a, b] = grid.wavevector(s);
                    let k2 = a * a + b * b;
                    if k2 == 0.0 {
                        0.0
                    } else {
                        k2.powf(order) * cell
                    }
                })
                .collect(),
            NormSpec::InhomogeneousSobolev { order } => (0..grid.len())
                .map(|s| {
                    let [a, b] = grid.wavevector(s);
                    (1.0 + a * a + b * b).powf(order) * cell
                })
                .collect(),
            NormSpec::Lebesgue { .. } => {
                return Err(Error::ParameterOutOfRange("Lebesgue norms have no Fourier weights".into()))
            }
        };
        Ok(Self { grid: grid.clone(), spec, values })
    }

    /// Norm of already transformed coefficients. The caller is responsible
    /// for the mean-zero precondition of negative homogeneous orders.
    pub fn norm_of(&self, coeffs: &[Complex64]) -> f64 {
        pairwise_sum_map(coeffs.len(), |s| self.values[s] * coeffs[s].norm_sqr()).sqrt()
    }

    /// Norm of the difference `a - b` of two coefficient arrays.
    pub fn norm_of_difference(&self, a: &[Complex64], b: &[Complex64]) -> f64 {
        pairwise_sum_map(a.len(), |s| self.values[s] * (a[s] - b[s]).norm_sqr()).sqrt()
    }
}

fn needs_mean_zero(spec: &NormSpec) -> bool {
    matches!(*spec, NormSpec::HomogeneousSobolev { order } if order < 0.0)
}

/// Norm of a real-space field in any of the supported kinds.
pub fn sobolev_norm(f: &ScalarField, spec: NormSpec) -> Result<f64> {
    spec.validate()?;
    if let NormSpec::Lebesgue { p } = spec {
        return Ok(lebesgue_norm_values(&f.grid, &f.values, p));
    }
    if needs_mean_zero(&spec) {
        require_mean_zero(f)?;
    }
    let coeffs = Transformer::new(&f.grid).forward(f);
    Ok(SobolevWeights::new(&f.grid, spec)?.norm_of(&coeffs.coeffs))
}

/// Sobolev norm of spectral coefficients; for negative homogeneous orders the
/// zero mode must vanish to `1e-10` of the largest coefficient.
pub fn sobolev_norm_spectral(f: &SpectralField, spec: NormSpec) -> Result<f64> {
    if needs_mean_zero(&spec) {
        let threshold = MEAN_ZERO_TOL * f.max_abs();
        let c0 = f.coeffs[0].norm();
        if c0 > threshold {
            return Err(Error::MeanNotZero { mean: f.mean(), threshold: threshold * f.grid.inverse_scale() });
        }
    }
    Ok(SobolevWeights::new(&f.grid, spec)?.norm_of(&f.coeffs))
}

/// `Lambda^alpha f = (-Delta)^{alpha/2} f` as the multiplier `|xi|^alpha`
/// with the zero mode sent to 0.
pub fn fractional_laplacian(f: &ScalarField, alpha: f64) -> Result<ScalarField> {
    if alpha < 0.0 {
        require_mean_zero(f)?;
    }
    let grid = &f.grid;
    let mut t = Transformer::new(grid);
    let mut c = t.forward(f);
    for (s, v) in c.coeffs.iter_mut().enumerate() {
        let [a, b] = grid.wavevector(s);
        let k2 = a * a + b * b;
        *v *= if k2 == 0.0 {
            0.0
        } else if alpha == 0.0 {
            1.0
        } else {
            k2.powf(alpha / 2.0)
        };
    }
    let mut out = ScalarField::zeros(grid);
    t.inverse_into(&c.coeffs, &mut out.values);
    Ok(out)
}

/// Both sides of
/// `||f||_{H^-a dot} <= C ||f||_{H^-g}^th (||f||_{H^{-b-s} dot} + ||f||_{H^-b dot})^{1-th}`
/// with `a = th g + (1 - th) b` and `s = th g / (1 - th)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct InterpolationReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub theta: f64,
    /// `2^{th g / 2}`, the constant from splitting `<xi>/|xi|` at `|xi| = 1`.
    pub derived_constant: f64,
    /// `2^{th g / (1 - th)}`, a looser form of the same constant.
    pub stated_constant: f64,
}

pub fn interpolation_theta(gamma: f64, alpha: f64, beta: f64) -> Result<f64> {
    if !(0.0 < gamma && gamma < alpha && alpha < beta) {
        return Err(Error::ParameterOutOfRange(format!(
            "interpolation needs 0 < gamma < alpha < beta (got {gamma}, {alpha}, {beta})"
        )));
    }
    Ok((beta - alpha) / (beta - gamma))
}

pub fn interpolation_constants(gamma: f64, alpha: f64, beta: f64) -> Result<(f64, f64)> {
    let theta = interpolation_theta(gamma, alpha, beta)?;
    Ok((2f64.powf(theta * gamma / 2.0), 2f64.powf(theta * gamma / (1.0 - theta))))
}

pub fn interpolation_check(f: &ScalarField, gamma: f64, alpha: f64, beta: f64) -> Result<InterpolationReport> {
    let theta = interpolation_theta(gamma, alpha, beta)?;
    require_mean_zero(f)?;
    let grid = &f.grid;
    let c = Transformer::new(grid).forward(f);
    let norm = |spec| SobolevWeights::new(grid, spec).map(|w| w.norm_of(&c.coeffs));
    let shift = theta * gamma / (1.0 - theta);
    let lhs = norm(NormSpec::HomogeneousSobolev { order: -alpha })?;
    let low = norm(NormSpec::InhomogeneousSobolev { order: -gamma })?;
    let far = norm(NormSpec::HomogeneousSobolev { order: -beta - shift })?;
    let near = norm(NormSpec::HomogeneousSobolev { order: -beta })?;
    let rhs = low.powf(theta) * (far + near).powf(1.0 - theta);
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
    let (derived_constant, stated_constant) = interpolation_constants(gamma, alpha, beta)?;
    Ok(InterpolationReport { lhs, rhs, ratio, theta, derived_constant, stated_constant })
}

/// Closed-form ratio for a single Fourier mode of wavenumber `k`.
pub fn interpolation_single_mode_ratio(k: f64, gamma: f64, alpha: f64, beta: f64) -> Result<f64> {
    let theta = interpolation_theta(gamma, alpha, beta)?;
    let s = theta * gamma / (1.0 - theta);
    Ok((1.0 + k.powi(-2)).powf(theta * gamma / 2.0) / (1.0 + k.powf(-s)).powf(1.0 - theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn mode(grid: &Grid, j: [i64; 2], amp: f64) -> ScalarField {
        let k0 = grid.fundamental();
        ScalarField::from_fn(grid, |x| amp * (k0 * (j[0] as f64 * x[0] + j[1] as f64 * x[1])).cos())
    }

    #[test]
    fn zero_field_all_norms_vanish() {
        let g = Grid::new(2, 3.0, 8).unwrap();
        let f = ScalarField::zeros(&g);
        for spec in [
            NormSpec::HomogeneousSobolev { order: -1.0 },
            NormSpec::InhomogeneousSobolev { order: 0.5 },
            NormSpec::Lebesgue { p: 1.5 },
            NormSpec::Lebesgue { p: f64::INFINITY },
        ] {
            assert_eq!(sobolev_norm(&f, spec).unwrap(), 0.0);
        }
    }

    #[test]
    fn single_mode_negative_order() {
        // cos(k x) with |xi| = 2 on L = 2 pi: the two coefficients carry
        // total spectral mass ||f||_2^2 = L^2 / 2.
        let g = Grid::new(2, 2.0 * PI, 16).unwrap();
        let f = mode(&g, [2, 0], 1.0);
        let mass = (2.0 * PI * 2.0 * PI / 2.0f64).sqrt();
        let v = sobolev_norm(&f, NormSpec::HomogeneousSobolev { order: -1.0 }).unwrap();
        assert!((v - 0.5 * mass).abs() < 1e-12);
        let l2 = lebesgue_norm(&f, 2.0).unwrap();
        assert!((l2 - mass).abs() < 1e-12);
    }

    #[test]
    fn lebesgue_simple_cases() {
        let g = Grid::new(2, 3.0, 8).unwrap();
        let c = ScalarField::from_fn(&g, |_| 2.0);
        for p in [1.0, 1.5, 2.0, 3.0] {
            let want = 2.0 * 9f64.powf(1.0 / p);
            assert!((lebesgue_norm(&c, p).unwrap() - want).abs() < 1e-12);
        }
        let half = ScalarField::from_fn(&g, |x| if x[0] < 1.5 { 1.0 } else { 0.0 });
        assert!((lebesgue_norm(&half, 1.5).unwrap() - 4.5f64.powf(1.0 / 1.5)).abs() < 1e-12);
        assert_eq!(lebesgue_norm(&half, f64::INFINITY).unwrap(), 1.0);
        assert!(lebesgue_norm(&half, 0.5).is_err());
    }

    #[test]
    fn mean_required_for_negative_homogeneous() {
        let g = Grid::new(2, 1.0, 8).unwrap();
        let f = ScalarField::from_fn(&g, |x| 1.0 + x[0]);
        assert!(matches!(
            sobolev_norm(&f, NormSpec::HomogeneousSobolev { order: -0.5 }),
            Err(Error::MeanNotZero { .. })
        ));
        assert!(sobolev_norm(&f, NormSpec::InhomogeneousSobolev { order: -0.5 }).is_ok());
        assert!(fractional_laplacian(&f, -1.0).is_err());
    }

    #[test]
    fn laplacian_eigenfunction_and_inverse() {
        let g = Grid::new(2, 2.0 * PI, 16).unwrap();
        let f = mode(&g, [1, 0], 1.0);
        let l2 = fractional_laplacian(&f, 2.0).unwrap();
        for (a, b) in l2.values.iter().zip(&f.values) {
            assert!((a - b).abs() < 1e-12);
        }
        let h = mode(&g, [3, -2], 0.7);
        let back = fractional_laplacian(&fractional_laplacian(&h, 0.8).unwrap(), -0.8).unwrap();
        for (a, b) in back.values.iter().zip(&h.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolation_zero_and_single_mode() {
        let g = Grid::new(2, 8.0 * PI, 32).unwrap();
        let zero = interpolation_check(&ScalarField::zeros(&g), 0.4, 0.8, 1.2).unwrap();
        assert_eq!((zero.lhs, zero.rhs, zero.ratio), (0.0, 0.0, 0.0));
        for j in [[4, 0], [1, 1], [7, 3]] {
            let f = mode(&g, j, 1.3);
            let k = g.fundamental() * ((j[0] * j[0] + j[1] * j[1]) as f64).sqrt();
            let rep = interpolation_check(&f, 0.4, 0.8, 1.2).unwrap();
            let want = interpolation_single_mode_ratio(k, 0.4, 0.8, 1.2).unwrap();
            assert!((rep.ratio - want).abs() < 1e-12);
            assert!(rep.ratio <= rep.derived_constant);
            if k >= 1.0 {
                assert!(rep.ratio <= 1.0);
            }
        }
        let (sharp, stated) = interpolation_constants(0.4, 0.8, 1.2).unwrap();
        assert!((sharp - 2f64.powf(0.1)).abs() < 1e-15);
        assert!((stated - 2f64.powf(0.4)).abs() < 1e-15);
    }
}
