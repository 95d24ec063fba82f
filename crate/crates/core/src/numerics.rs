//! Small numerical kernels shared across modules.

const PAIRWISE_BLOCK: usize = 128;

/// Pairwise (tree) summation. The reduction tree depends only on the length
/// of the input, so results are reproducible bit for bit.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    pairwise_sum_map(values.len(), |i| values[i])
}

/// Pairwise summation of `term(0) + ... + term(n-1)`.
pub fn pairwise_sum_map<F: Fn(usize) -> f64>(n: usize, term: F) -> f64 {
    fn rec<F: Fn(usize) -> f64>(lo: usize, hi: usize, term: &F) -> f64 {
        if hi - lo <= PAIRWISE_BLOCK {
            let mut acc = 0.0;
            for i in lo..hi {
                acc += term(i);
            }
            acc
        } else {
            let mid = lo + (hi - lo) / 2;
            rec(lo, mid, term) + rec(mid, hi, term)
        }
    }
    if n == 0 {
        return 0.0;
    }
    rec(0, n, &term)
}

/// Surface area of the unit sphere in R^d (d = 1 counts the two endpoints).
pub fn unit_sphere_area(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI,
        _ => panic!("unsupported dimension {d}"),
    }
}

/// Maximise a unimodal-ish function on `[lo, hi]`: dense scan followed by
/// golden-section refinement around the best sample.
pub fn maximize_1d<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, samples: usize) -> (f64, f64) {
    let n = samples.max(8);
    let step = (hi - lo) / n as f64;
    let mut best_x = lo;
    let mut best = f(lo);
    for i in 1..=n {
        let x = lo + step * i as f64;
        let v = f(x);
        if v > best {
            best = v;
            best_x = x;
        }
    }
    let mut a = (best_x - step).max(lo);
    let mut b = (best_x + step).min(hi);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= 1e-14 * (1.0 + best_x.abs()) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let (x, v) = if fc > fd { (c, fc) } else { (d, fd) };
    if v > best {
        (x, v)
    } else {
        (best_x, best)
    }
}
