//! Numerical Laplacians, sphere averages and the Laplacian of orthogonally
//! invariant functions in singular value coordinates.

use rand::Rng;

use crate::error::{Error, Result};
use crate::matnorm::{standard_normal, Mat, ModelSpec};

/// `1e-4 (1 + ||x||_F)`.
pub fn default_laplacian_step(x: &Mat) -> f64 {
    1e-4 * (1.0 + x.norm())
}

/// Second-order central-difference Laplacian summed over all entries.
pub fn fd_laplacian<F: Fn(&Mat) -> f64>(f: F, x: &Mat, h: f64) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "step must be positive, got {h}"
        )));
    }
    let f0 = f(x);
    if !f0.is_finite() {
        return Err(Error::Degenerate(
            "function is not finite at the center".into(),
        ));
    }
    let mut work = x.clone();
    let mut acc = 0.0;
    for idx in 0..work.len() {
        let x0 = work[idx];
        work[idx] = x0 + h;
        let up = f(&work);
        work[idx] = x0 - h;
        let dn = f(&work);
        work[idx] = x0;
        if !(up.is_finite() && dn.is_finite()) {
            return Err(Error::Degenerate("stencil touches a singular point".into()));
        }
        acc += (up - 2.0 * f0 + dn) / (h * h);
    }
    Ok(acc)
}

/// Monte Carlo mean of `f` over the sphere of given radius around `center`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereAverage {
    pub average: f64,
    pub std_error: f64,
    pub center_value: f64,
}

pub fn sphere_average_test<F, R>(
    f: F,
    center: &Mat,
    radius: f64,
    draws: usize,
    rng: &mut R,
) -> Result<SphereAverage>
where
    F: Fn(&Mat) -> f64,
    R: Rng + ?Sized,
{
    if !(radius > 0.0) || draws < 2 {
        return Err(Error::InvalidParameter(
            "sphere test needs a positive radius and at least 2 draws".into(),
        ));
    }
    let mut vals = Vec::with_capacity(draws);
    for _ in 0..draws {
        let mut g = standard_normal(center.nrows(), center.ncols(), rng);
        let norm = g.norm();
        if norm == 0.0 {
            continue;
        }
        g *= radius / norm;
        vals.push(f(&(center + g)));
    }
    let (average, std_error) = crate::stats::mean_and_stderr(&vals);
    Ok(SphereAverage {
        average,
        std_error,
        center_value: f(center),
    })
}

/// First and diagonal second partial derivatives of `g(sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvPartials {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

/// Central-difference partials of `g` at `sigma`.
pub fn sv_partials_fd<G: Fn(&[f64]) -> f64>(g: G, sigma: &[f64], h: f64) -> SvPartials {
    let g0 = g(sigma);
    let mut s = sigma.to_vec();
    let mut first = Vec::with_capacity(s.len());
    let mut second = Vec::with_capacity(s.len());
    for i in 0..s.len() {
        let s0 = s[i];
        s[i] = s0 + h;
        let up = g(&s);
        s[i] = s0 - h;
        let dn = g(&s);
        s[i] = s0;
        first.push((up - dn) / (2.0 * h));
        second.push((up - 2.0 * g0 + dn) / (h * h));
    }
    SvPartials { first, second }
}

/// Laplacian of `X -> g(sigma(X))` on `n x m` matrices:
///
/// ```text
/// 2 sum_{i<j} (s_i g_i - s_j g_j) / (s_i^2 - s_j^2) + (n - m) sum_i g_i / s_i + sum_i g_ii
/// ```
///
/// Requires distinct positive singular values.
pub fn sv_laplacian(sigma: &[f64], spec: &ModelSpec, partials: &SvPartials) -> Result<f64> {
    let m = spec.m();
    if sigma.len() != m || partials.first.len() != m || partials.second.len() != m {
        return Err(Error::InvalidParameter(format!(
            "expected {m} singular values and partials"
        )));
    }
    if sigma.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Degenerate("singular values must be positive".into()));
    }
    let g = &partials.first;
    let mut cross = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            let den = sigma[i] * sigma[i] - sigma[j] * sigma[j];
            if den == 0.0 {
                return Err(Error::Degenerate("repeated singular values".into()));
            }
            cross += (sigma[i] * g[i] - sigma[j] * g[j]) / den;
        }
    }
    let radial: f64 = (0..m).map(|i| g[i] / sigma[i]).sum();
    let diag: f64 = partials.second.iter().sum();
    Ok(2.0 * cross + (spec.n() - m) as f64 * radial + diag)
}

/// `prod_{i<j} (s_i^2 - s_j^2)^2 prod_i s_i^{2(n-m)}`.
pub fn metric_det(sigma: &[f64], spec: &ModelSpec) -> f64 {
    let mut d = 1.0;
    for i in 0..sigma.len() {
        for j in i + 1..sigma.len() {
            let t = sigma[i] * sigma[i] - sigma[j] * sigma[j];
            d *= t * t;
        }
        d *= sigma[i].powi(2 * (spec.n() - spec.m()) as i32);
    }
    d
}
