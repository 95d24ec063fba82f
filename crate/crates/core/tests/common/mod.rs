//! Dense-matrix reference implementation on 8x8 grids: every transform is an
//! explicit O(N^4) sum, independent of the FFT code path.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use spdelab::grid::{Grid, ScalarField, Transformer};
use spdelab::noise::{CovarianceSpec, NoiseBasis, SeedCoords};
use spdelab::norms::{fractional_laplacian, lebesgue_norm, sobolev_norm, NormSpec};
use spdelab::rng::{mode_normals, CounterRng};
use spdelab::solvers::{biot_savart, solve_heat, SolverConfig, Stepper};

pub const N: usize = 8;

struct Dense {
    l: f64,
    x: Vec<[f64; 2]>,
    j: Vec<[i64; 2]>,
}

impl Dense {
    fn new(l: f64) -> Self {
        let h = l / N as f64;
        let half = (N / 2) as i64;
        let x = (0..N * N).map(|i| [(i / N) as f64 * h, (i % N) as f64 * h]).collect();
        let j = (-half..half).flat_map(|a| (-half..half).map(move |b| [a, b])).collect();
        Self { l, x, j }
    }

    fn xi(&self, j: [i64; 2]) -> [f64; 2] {
        let k0 = 2.0 * PI / self.l;
        [k0 * j[0] as f64, k0 * j[1] as f64]
    }

    fn nyquist(&self, j: [i64; 2]) -> bool {
        let half = (N / 2) as i64;
        j[0] == -half || j[1] == -half
    }

    /// `c_j = (2 pi)^{-1} h^2 sum_x e^{-i x.xi_j} f(x)`.
    fn forward(&self, f: &[f64]) -> Vec<Complex64> {
        let h = self.l / N as f64;
        self.j
            .iter()
            .map(|&j| {
                let xi = self.xi(j);
                let mut acc = Complex64::new(0.0, 0.0);
                for (x, v) in self.x.iter().zip(f) {
                    acc += Complex64::from_polar(*v, -(xi[0] * x[0] + xi[1] * x[1]));
                }
                acc * h * h / (2.0 * PI)
            })
            .collect()
    }

    /// `f(x) = 2 pi / L^2 sum_j c_j e^{i x.xi_j}`, real part.
    fn inverse(&self, c: &[Complex64]) -> Vec<f64> {
        self.x
            .iter()
            .map(|x| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (&j, cj) in self.j.iter().zip(c) {
                    let xi = self.xi(j);
                    acc += cj * Complex64::from_polar(1.0, xi[0] * x[0] + xi[1] * x[1]);
                }
                acc.re * 2.0 * PI / (self.l * self.l)
            })
            .collect()
    }

    fn derivative(&self, c: &[Complex64], axis: usize) -> Vec<f64> {
        let d: Vec<Complex64> = self
            .j
            .iter()
            .zip(c)
            .map(|(&j, cj)| if self.nyquist(j) { Complex64::new(0.0, 0.0) } else { cj * Complex64::new(0.0, self.xi(j)[axis]) })
            .collect();
        self.inverse(&d)
    }

    fn heat(&self, c: &[Complex64], kappa: f64, t: f64) -> Vec<Complex64> {
        self.j
            .iter()
            .zip(c)
            .map(|(&j, cj)| {
                let xi = self.xi(j);
                cj * (-kappa * (xi[0] * xi[0] + xi[1] * xi[1]) * t).exp()
            })
            .collect()
    }

    fn mask(&self, c: &mut [Complex64]) {
        let cut = (N / 3) as i64;
        for (j, cj) in self.j.iter().zip(c.iter_mut()) {
            if j[0].abs() > cut || j[1].abs() > cut {
                *cj = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// `u = (i xi_2, -i xi_1) w^ / |xi|^2`, zero at the origin and on Nyquist slots.
    fn velocity(&self, c: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let (mut ux, mut uy) = (Vec::new(), Vec::new());
        for (&j, cj) in self.j.iter().zip(c) {
            let xi = self.xi(j);
            let k2 = xi[0] * xi[0] + xi[1] * xi[1];
            if k2 == 0.0 || self.nyquist(j) {
                ux.push(Complex64::new(0.0, 0.0));
                uy.push(Complex64::new(0.0, 0.0));
            } else {
                ux.push(cj * Complex64::new(0.0, xi[1] / k2));
                uy.push(cj * Complex64::new(0.0, -xi[0] / k2));
            }
        }
        (self.inverse(&ux), self.inverse(&uy))
    }

    /// `dW(x) = sum_k a_k e_k sqrt(2 dt) (z_c cos(xi.x) + z_s sin(xi.x))`.
    fn noise(&self, basis: &NoiseBasis, dt: f64, c: SeedCoords) -> (Vec<f64>, Vec<f64>) {
        let mut wx = vec![0.0; N * N];
        let mut wy = vec![0.0; N * N];
        for (k, m) in basis.modes().iter().enumerate() {
            let (zc, zs) = mode_normals(c.seed, c.sample, c.step, k as u64);
            for (i, x) in self.x.iter().enumerate() {
                let arg = m.wavevector[0] * x[0] + m.wavevector[1] * x[1];
                let v = m.amplitude * (2.0 * dt).sqrt() * (zc * arg.cos() + zs * arg.sin());
                wx[i] += v * m.polarization[0];
                wy[i] += v * m.polarization[1];
            }
        }
        (wx, wy)
    }
}

fn random(grid: &Grid, seed: u64, mean_zero: bool) -> ScalarField {
    let mut rng = CounterRng::new(seed, 99);
    let mut f = ScalarField::from_fn(grid, |_| 0.0);
    for v in f.values.iter_mut() {
        *v = rng.normal();
    }
    if mean_zero {
        let m = f.mean();
        f.values.iter_mut().for_each(|v| *v -= m);
    }
    f
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

fn spectral_field_values(st: &mut Stepper, f: &spdelab::grid::SpectralField) -> Vec<f64> {
    let mut out = vec![0.0; N * N];
    st.to_real_into(f, &mut out);
    out
}

/// Largest relative deviation of the forward and inverse transforms.
pub fn transform_error() -> f64 {
    let l = 3.0;
    let grid = Grid::new(2, l, N).unwrap();
    let dense = Dense::new(l);
    let f = random(&grid, 1, false);
    let c = Transformer::new(&grid).forward(&f);
    let want = dense.forward(&f.values);
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    let fwd = dense.j.iter().zip(&want).fold(0.0f64, |m, (&j, w)| m.max((c.coeff(j) - w).norm() / scale));
    fwd.max(max_rel(&dense.inverse(&want), &f.values))
}

/// One transport step, with and without dealiasing, for `f`, `Z` and `fbar`.
pub fn transport_error() -> f64 {
    let l = 2.0 * PI;
    let grid = Grid::new(2, l, N).unwrap();
    let dense = Dense::new(l);
    let basis = NoiseBasis::build(&CovarianceSpec::band(2, 1.0, 2.5, 0.3).unwrap(), &grid).unwrap();
    assert!(basis.basis_size() > 2);
    let f0 = random(&grid, 2, false);
    let dt = 1e-2;
    let coords = SeedCoords::new(5, 3, 0);
    let mut err = 0.0f64;
    for dealias in [true, false] {
        let mut cfg = SolverConfig::new(basis.kappa_grid(), dt, dt).unwrap();
        cfg.dealias = dealias;
        let mut st = Stepper::new(&grid, &cfg).unwrap();
        let mut state = st.init_state(&f0).unwrap();
        st.transport_step(&mut state, &basis, coords).unwrap();

        let c = dense.forward(&f0.values);
        let (wx, wy) = dense.noise(&basis, dt, coords);
        let (gx, gy) = (dense.derivative(&c, 0), dense.derivative(&c, 1));
        let prod: Vec<f64> = (0..N * N).map(|i| wx[i] * gx[i] + wy[i] * gy[i]).collect();
        let mut upd = dense.forward(&prod);
        if dealias {
            dense.mask(&mut upd);
        }
        let next: Vec<Complex64> = c.iter().zip(&upd).map(|(a, b)| a - b).collect();
        let f1 = dense.inverse(&dense.heat(&next, basis.kappa_grid(), dt));
        let neg: Vec<Complex64> = upd.iter().map(|b| -b).collect();
        let z1 = dense.inverse(&dense.heat(&neg, basis.kappa_grid(), dt));
        let fbar = dense.inverse(&dense.heat(&c, basis.kappa_grid(), dt));

        err = err
            .max(max_rel(&spectral_field_values(&mut st, &state.f), &f1))
            .max(max_rel(&spectral_field_values(&mut st, &state.z), &z1))
            .max(max_rel(&spectral_field_values(&mut st, &state.fbar), &fbar));
    }
    err
}

/// One stochastic Euler step and one deterministic Navier-Stokes step.
pub fn vorticity_error() -> f64 {
    let l = 2.0 * PI;
    let grid = Grid::new(2, l, N).unwrap();
    let dense = Dense::new(l);
    let basis = NoiseBasis::single_mode(&grid, [1, 2], 0.4).unwrap();
    let w0 = random(&grid, 3, true).scaled(0.1);
    let dt = 1e-2;
    let coords = SeedCoords::new(8, 0, 4);
    let cfg = SolverConfig::new(basis.kappa_grid(), dt, dt).unwrap();
    let c = dense.forward(&w0.values);
    let (ux, uy) = dense.velocity(&c);
    let (gx, gy) = (dense.derivative(&c, 0), dense.derivative(&c, 1));
    let (wx, wy) = dense.noise(&basis, dt, coords);
    let mut err = 0.0f64;
    for noisy in [true, false] {
        let mut st = Stepper::new(&grid, &cfg).unwrap();
        let mut w = Transformer::new(&grid).forward(&w0);
        st.vorticity_step(&mut w, if noisy { Some(&basis) } else { None }, coords).unwrap();
        let prod: Vec<f64> = (0..N * N)
            .map(|i| {
                let (nx, ny) = if noisy { (wx[i], wy[i]) } else { (0.0, 0.0) };
                (ux[i] * dt + nx) * gx[i] + (uy[i] * dt + ny) * gy[i]
            })
            .collect();
        let mut upd = dense.forward(&prod);
        dense.mask(&mut upd);
        let next: Vec<Complex64> = c.iter().zip(&upd).map(|(a, b)| a - b).collect();
        let want = dense.inverse(&dense.heat(&next, cfg.kappa, dt));
        err = err.max(max_rel(&spectral_field_values(&mut st, &w), &want));
    }
    err
}

/// Exact heat flow and Biot-Savart velocity.
pub fn heat_biot_savart_error() -> f64 {
    let l = 2.5;
    let grid = Grid::new(2, l, N).unwrap();
    let dense = Dense::new(l);
    let f = random(&grid, 4, true);
    let c = dense.forward(&f.values);
    let got = solve_heat(&f, 0.3, 0.05).unwrap();
    let u = biot_savart(&f).unwrap();
    let (ux, uy) = dense.velocity(&c);
    max_rel(&got.values, &dense.inverse(&dense.heat(&c, 0.3, 0.05)))
        .max(max_rel(&u.components[0].values, &ux))
        .max(max_rel(&u.components[1].values, &uy))
}

/// Sobolev, Lebesgue and fractional-Laplacian values against direct sums.
pub fn norms_error() -> f64 {
    let l = 2.0;
    let grid = Grid::new(2, l, N).unwrap();
    let dense = Dense::new(l);
    let f = random(&grid, 6, true);
    let c = dense.forward(&f.values);
    let cell = (2.0 * PI / l).powi(2);
    let direct = |w: &dyn Fn(f64) -> f64, skip_zero: bool| -> f64 {
        let mut s = 0.0;
        for (&j, cj) in dense.j.iter().zip(&c) {
            let xi = dense.xi(j);
            let k2 = xi[0] * xi[0] + xi[1] * xi[1];
            if skip_zero && k2 == 0.0 {
                continue;
            }
            s += w(k2) * cj.norm_sqr() * cell;
        }
        s.sqrt()
    };
    let rel = |a: f64, b: f64| (a - b).abs() / b;
    let mut err = 0.0f64;
    for order in [-1.7, -1.2, -0.6, 0.0, 0.8, 2.0] {
        let hom = sobolev_norm(&f, NormSpec::HomogeneousSobolev { order }).unwrap();
        err = err.max(rel(hom, direct(&|k2: f64| k2.powf(order), true)));
        let inh = sobolev_norm(&f, NormSpec::InhomogeneousSobolev { order }).unwrap();
        err = err.max(rel(inh, direct(&|k2: f64| (1.0 + k2).powf(order), false)));
    }
    let h2 = (l / N as f64).powi(2);
    for p in [1.0, 1.5, 2.0, 3.0] {
        let want = (f.values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * h2).powf(1.0 / p);
        err = err.max(rel(lebesgue_norm(&f, p).unwrap(), want));
    }
    let max = f.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    err = err.max(rel(lebesgue_norm(&f, f64::INFINITY).unwrap(), max));
    // Lambda^a as a multiplier.
    let a = 0.7;
    let lam = fractional_laplacian(&f, a).unwrap();
    let mult: Vec<Complex64> = dense
        .j
        .iter()
        .zip(&c)
        .map(|(&j, cj)| {
            let xi = dense.xi(j);
            let k2 = xi[0] * xi[0] + xi[1] * xi[1];
            if k2 == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                cj * k2.powf(a / 2.0)
            }
        })
        .collect();
    err.max(max_rel(&lam.values, &dense.inverse(&mult)))
}
