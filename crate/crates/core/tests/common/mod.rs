//! Brute-force reference implementations shared by the test targets.
#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;

/// Entrywise mean and deviation by explicit index loops.
pub fn stats_oracle(samples: &[Array2<f64>], sqrt: bool) -> (Array2<f64>, Array2<f64>) {
    let (r, c) = samples[0].dim();
    let n = samples.len() as f64;
    let mut mean = Array2::zeros((r, c));
    let mut dev = Array2::zeros((r, c));
    for i in 0..r {
        for j in 0..c {
            let mut s = 0.0;
            for m in samples {
                s += m[[i, j]];
            }
            let mu = s / n;
            let mut q = 0.0;
            for m in samples {
                q += (m[[i, j]] - mu) * (m[[i, j]] - mu);
            }
            let v = q / (n - 1.0);
            mean[[i, j]] = mu;
            dev[[i, j]] = if sqrt { v.sqrt() } else { v };
        }
    }
    (mean, dev)
}

pub fn count_oracle(m: &Array2<f64>, s: &Array2<f64>, eps: f64, abs: bool) -> usize {
    let mut n = 0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = if abs { m[[i, j]].abs() } else { m[[i, j]] };
            if s[[i, j]] <= eps && v > eps {
                n += 1;
            }
        }
    }
    n
}

pub fn ood_oracle(m: &Array2<f64>, mean: &Array2<f64>, s: &Array2<f64>, delta: f64) -> usize {
    let mut n = 0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let lo = mean[[i, j]] - delta * s[[i, j]];
            let hi = mean[[i, j]] + delta * s[[i, j]];
            if lo <= m[[i, j]] && m[[i, j]] <= hi {
                n += 1;
            }
        }
    }
    n
}

/// Mean and `n - 1` deviation of a list of counts.
pub fn moments_oracle(counts: &[usize]) -> (f64, f64) {
    let n = counts.len() as f64;
    let mut s = 0.0;
    for &c in counts {
        s += c as f64;
    }
    let mu = s / n;
    if counts.len() == 1 {
        return (mu, 0.0);
    }
    let mut q = 0.0;
    for &c in counts {
        q += (c as f64 - mu) * (c as f64 - mu);
    }
    (mu, (q / (n - 1.0)).sqrt())
}

/// Small matrix with entries drawn from a handful of values so that
/// threshold comparisons hit equality now and then.
pub fn lumpy_matrix<R: Rng>(rng: &mut R, r: usize, c: usize) -> Array2<f64> {
    const VALUES: [f64; 7] = [-0.5, 0.0, 0.01, 0.05, 0.1, 0.3, 1.0];
    Array2::from_shape_simple_fn((r, c), || {
        if rng.random_bool(0.5) {
            VALUES[rng.random_range(0..VALUES.len())]
        } else {
            rng.random_range(-1.0..1.0)
        }
    })
}
