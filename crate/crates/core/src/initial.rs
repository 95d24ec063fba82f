//! Initial data families.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::quadrature::integrate;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum InitialData {
    /// `amplitude * exp(1 - 1 / (1 - r^2 / radius^2))` for `r < radius`.
    Bump {
        #[serde(default)]
        center: Option<[f64; 2]>,
        radius: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `amplitude * min(r^{-beta}, cap) * chi(r / radius)` where `cap` is the
    /// mean of `r^{-beta}` over the grid cell centred on the singularity.
    Singular {
        #[serde(default)]
        center: Option<[f64; 2]>,
        beta: f64,
        radius: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Two singular profiles of opposite sign at `center -/+ separation e_1`;
    /// the total integral vanishes on the grid.
    SingularDipole {
        #[serde(default)]
        center: Option<[f64; 2]>,
        beta: f64,
        radius: f64,
        separation: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// Smooth cutoff: 1 on `[0, 1/2]`, 0 on `[1, inf)`, C-infinity in between.
pub fn cutoff(s: f64) -> f64 {
    fn psi(t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            (-1.0 / t).exp()
        }
    }
    if s <= 0.5 {
        1.0
    } else if s >= 1.0 {
        0.0
    } else {
        let a = psi(1.0 - s);
        a / (a + psi(s - 0.5))
    }
}

/// Mean of `|y|^{-beta}` over the unit cell `[-1/2, 1/2]^d` centred on 0.
pub fn unit_cell_mean(dim: usize, beta: f64) -> Result<f64> {
    if !(0.0..(dim as f64)).contains(&beta) {
        return Err(Error::ParameterOutOfRange(format!("singular exponent {beta} outside [0, {dim})")));
    }
    match dim {
        1 => Ok(2.0 * 0.5f64.powf(1.0 - beta) / (1.0 - beta)),
        _ => {
            // 8 \int_0^{pi/4} \int_0^{1/(2 cos t)} r^{1-beta} dr dt
            let v = integrate(
                |t: f64| (0.5 / t.cos()).powf(2.0 - beta) / (2.0 - beta),
                0.0,
                std::f64::consts::FRAC_PI_4,
                &[],
                1e-12,
            )?;
            Ok(8.0 * v)
        }
    }
}

fn snap(grid: &Grid, c: Option<[f64; 2]>) -> [f64; 2] {
    let l = grid.box_length();
    let c = c.unwrap_or([l / 2.0, if grid.dim() == 2 { l / 2.0 } else { 0.0 }]);
    let h = grid.spacing();
    [(c[0] / h).round() * h, (c[1] / h).round() * h]
}

/// Periodic distance between two points of the box.
fn periodic_dist(grid: &Grid, x: [f64; 2], c: [f64; 2]) -> f64 {
    let l = grid.box_length();
    let mut r2 = 0.0;
    for i in 0..grid.dim() {
        let mut dx = (x[i] - c[i]).rem_euclid(l);
        if dx > l / 2.0 {
            dx -= l;
        }
        r2 += dx * dx;
    }
    r2.sqrt()
}

fn singular(grid: &Grid, center: [f64; 2], beta: f64, radius: f64, amplitude: f64) -> Result<ScalarField> {
    let cap = grid.spacing().powf(-beta) * unit_cell_mean(grid.dim(), beta)?;
    Ok(ScalarField::from_fn(grid, |x| {
        let r = periodic_dist(grid, x, center);
        let v = if r == 0.0 { cap } else { r.powf(-beta).min(cap) };
        amplitude * v * cutoff(r / radius)
    }))
}

impl InitialData {
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let l = grid.box_length();
        let (radius, extra) = match self {
            InitialData::Bump { radius, .. } => (*radius, 0.0),
            InitialData::Singular { radius, beta, .. } => {
                unit_cell_mean(grid.dim(), *beta)?;
                (*radius, 0.0)
            }
            InitialData::SingularDipole { radius, beta, separation, .. } => {
                if grid.dim() != 2 {
                    return Err(Error::InvalidConfig("dipole initial data needs d = 2".into()));
                }
                unit_cell_mean(grid.dim(), *beta)?;
                if !(*separation > 0.0) {
                    return Err(Error::InvalidConfig("dipole separation must be positive".into()));
                }
                (*radius, *separation)
            }
        };
        if !(radius > 0.0) || radius + extra >= l / 2.0 {
            return Err(Error::InvalidConfig(format!(
                "initial support radius {} does not fit in the box of length {l}",
                radius + extra
            )));
        }
        Ok(())
    }

    pub fn sample(&self, grid: &Grid) -> Result<ScalarField> {
        self.validate(grid)?;
        match self {
            InitialData::Bump { center, radius, amplitude } => {
                let c = snap(grid, *center);
                Ok(ScalarField::from_fn(grid, |x| {
                    let s = periodic_dist(grid, x, c) / radius;
                    if s < 1.0 {
                        amplitude * (1.0 - 1.0 / (1.0 - s * s)).exp()
                    } else {
                        0.0
                    }
                }))
            }
            InitialData::Singular { center, beta, radius, amplitude } => {
                singular(grid, snap(grid, *center), *beta, *radius, *amplitude)
            }
            InitialData::SingularDipole { center, beta, radius, separation, amplitude } => {
                let c = snap(grid, *center);
                let h = grid.spacing();
                let shift = (separation / h).round().max(1.0) * h;
                let plus = singular(grid, [c[0] - shift, c[1]], *beta, *radius, *amplitude)?;
                let minus = singular(grid, [c[0] + shift, c[1]], *beta, *radius, *amplitude)?;
                plus.sub(&minus)
            }
        }
    }

    /// Radius of the region carrying the data, measured from the centre.
    pub fn support_radius(&self) -> f64 {
        match self {
            InitialData::Bump { radius, .. } | InitialData::Singular { radius, .. } => *radius,
            InitialData::SingularDipole { radius, separation, .. } => radius + separation,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn cutoff_shape() {
        assert_eq!(cutoff(0.0), 1.0);
        assert_eq!(cutoff(0.5), 1.0);
        assert_eq!(cutoff(1.0), 0.0);
        let mut prev = 1.0;
        for i in 0..=100 {
            let v = cutoff(0.5 + 0.005 * i as f64);
            assert!(v <= prev && (0.0..=1.0).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn cell_mean_oracles() {
        // beta = 0: mean of 1.
        assert!((unit_cell_mean(2, 0.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((unit_cell_mean(1, 0.0).unwrap() - 1.0).abs() < 1e-12);
        // beta = 1 in 2D: 8 \int_0^{pi/4} sec(t)/2 dt = 4 ln(1 + sqrt 2).
        let want = 4.0 * (1.0 + 2f64.sqrt()).ln();
        assert!((unit_cell_mean(2, 1.0).unwrap() - want).abs() < 1e-10);
        // Cartesian iterated quadrature cross-check for beta = 1.3.
        let inner = |x: f64| integrate(|y: f64| (x * x + y * y).powf(-0.65), 0.0, 0.5, &[], 1e-12).unwrap();
        let cart = 4.0 * integrate(inner, 0.0, 0.5, &[], 1e-10).unwrap();
        assert!((unit_cell_mean(2, 1.3).unwrap() - cart).abs() / cart < 1e-8);
        assert!(unit_cell_mean(2, 2.0).is_err());
    }

    #[test]
    fn dipole_has_zero_mean() {
        let g = Grid::new(2, 2.0 * PI, 64).unwrap();
        let d = InitialData::SingularDipole { center: None, beta: 1.2, radius: 1.0, separation: 0.7, amplitude: 1.0 };
        let f = d.sample(&g).unwrap();
        let l1: f64 = f.values.iter().map(|v| v.abs()).sum();
        assert!(f.values.iter().sum::<f64>().abs() <= 1e-12 * l1);
    }

    #[test]
    fn singular_peak_is_capped() {
        let g = Grid::new(2, 2.0 * PI, 64).unwrap();
        let d = InitialData::Singular { center: None, beta: 1.2, radius: 1.0, amplitude: 1.0 };
        let f = d.sample(&g).unwrap();
        let cap = g.spacing().powf(-1.2) * unit_cell_mean(2, 1.2).unwrap();
        assert!((f.max_abs() - cap).abs() < 1e-12 * cap);
    }

    #[test]
    fn support_must_fit() {
        let g = Grid::new(2, 2.0, 16).unwrap();
        let d = InitialData::Bump { center: None, radius: 1.5, amplitude: 1.0 };
        assert!(d.sample(&g).is_err());
    }
}
