#![allow(dead_code)]

use rand::Rng;
use svshrink::matnorm::{sample_around, singular_values, Mat};

/// Scalar Kummer series summed term by term.
pub fn kummer(a: f64, b: f64, x: f64) -> f64 {
    let (mut t, mut s, mut k) = (1.0, 1.0, 0.0);
    while k < 20_000.0 {
        t *= (a + k) * x / ((b + k) * (k + 1.0));
        s += t;
        if t.abs() < 1e-18 * s.abs() && k > x {
            break;
        }
        k += 1.0;
    }
    s
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// `prod sigma_i^{-(n-m-1)}` computed directly from singular values.
pub fn svs_density(x: &Mat) -> f64 {
    let (n, m) = x.shape();
    singular_values(x)
        .iter()
        .map(|s| s.powi(-((n - m - 1) as i32)))
        .product()
}

/// Monte Carlo `E[pi_SVS(M)]`, `M ~ N(y, v I, I)`: mean and standard error.
pub fn mc_marginal<R: Rng>(y: &Mat, v: f64, draws: usize, rng: &mut R) -> (f64, f64) {
    let vals: Vec<f64> = (0..draws)
        .map(|_| svs_density(&sample_around(y, v, rng)))
        .collect();
    svshrink::stats::mean_and_stderr(&vals)
}

/// Self-normalized importance-sampling posterior mean of `M` under the SVS
/// prior (proposal `N(y, v I, I)`, weights `pi_SVS`), with delta-method
/// standard errors per entry.
pub fn is_posterior_mean<R: Rng>(y: &Mat, v: f64, draws: usize, rng: &mut R) -> (Mat, Mat) {
    let (n, m) = y.shape();
    let mut samples = Vec::with_capacity(draws);
    let mut weights = Vec::with_capacity(draws);
    for _ in 0..draws {
        let s = sample_around(y, v, rng);
        weights.push(svs_density(&s));
        samples.push(s);
    }
    let wsum: f64 = weights.iter().sum();
    let mut mean = Mat::zeros(n, m);
    for (s, w) in samples.iter().zip(&weights) {
        mean += s * (*w / wsum);
    }
    let mut var = Mat::zeros(n, m);
    for (s, w) in samples.iter().zip(&weights) {
        let d = s - &mean;
        var += d.component_mul(&d) * (w * w);
    }
    let se = var.map(|v| v.sqrt() / wsum);
    (mean, se)
}
