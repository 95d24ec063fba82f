//! Moment estimates, seeded bootstrap and log-log regression.

use crate::error::{Error, Result};
use crate::numerics::pairwise_sum_map;
use crate::rng::{stream, CounterRng};

/// `(mean of v^q)^{1/q}`.
pub fn moment(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let s = pairwise_sum_map(values.len(), |i| values[i].powf(q));
    (s / values.len() as f64).powf(1.0 / q)
}

/// Sample standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = pairwise_sum_map(n, |i| values[i]) / n as f64;
    (pairwise_sum_map(n, |i| (values[i] - mean).powi(2)) / (n - 1) as f64).sqrt()
}

/// Linear-interpolated percentile, `pct` in `[0, 100]`.
pub fn percentile(values: &[f64], pct: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = pct / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Ordinary least squares `y = intercept + slope x`.
pub fn ols(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return Err(Error::DegenerateFit(format!("need >= 2 paired points, got {n}")));
    }
    let mx = pairwise_sum_map(n, |i| x[i]) / n as f64;
    let my = pairwise_sum_map(n, |i| y[i]) / n as f64;
    let sxx = pairwise_sum_map(n, |i| (x[i] - mx).powi(2));
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("abscissae are all equal".into()));
    }
    let sxy = pairwise_sum_map(n, |i| (x[i] - mx) * (y[i] - my));
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Sequential seeded resampler.
pub struct Bootstrap {
    rng: CounterRng,
}

impl Bootstrap {
    pub fn new(seed: u64) -> Self {
        Self { rng: CounterRng::new(seed, stream::BOOTSTRAP) }
    }

    /// One resample (with replacement) of `values`.
    pub fn resample(&mut self, values: &[f64]) -> Vec<f64> {
        let n = values.len() as u64;
        (0..values.len()).map(|_| values[self.rng.below(n) as usize]).collect()
    }

    /// Bootstrap standard error of the q-th moment estimate.
    pub fn moment_stderr(&mut self, values: &[f64], q: f64, resamples: usize) -> f64 {
        if values.len() < 2 || resamples < 2 {
            return 0.0;
        }
        let reps: Vec<f64> = (0..resamples).map(|_| moment(&self.resample(values), q)).collect();
        std_dev(&reps)
    }
}
