//! Per-point superharmonicity diagnostics for the orthogonally invariant
//! priors: an ambient finite-difference Laplacian, the Laplacian in singular
//! value coordinates, and a sphere-average comparison.

use serde::Serialize;

use super::harmonic::{
    default_laplacian_step, fd_laplacian, sphere_average_test, sv_laplacian, sv_partials_fd,
};
use super::{log_prior_mat, PriorKind};
use crate::error::{Error, Result};
use crate::matnorm::{diag_embedded, rng_stream, singular_values, standard_normal, Mat, ModelSpec};

/// Points whose smallest singular value falls below this are skipped.
pub const MIN_SINGULAR: f64 = 1e-2;

/// Relative FD allowance; the absolute budget is
/// `FD_RELATIVE_BUDGET * |pi(x)| / s^2` with `s` the curvature scale of the
/// prior at `x` (smallest singular value, or the norm for the Stein prior).
pub const FD_RELATIVE_BUDGET: f64 = 1e-3;

/// Expected sign of the Laplacian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expectation {
    /// Zero within the FD budget.
    Harmonic,
    /// Strictly negative.
    Superharmonic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointCheck {
    pub singular_values: Vec<f64>,
    pub prior_value: f64,
    pub fd_laplacian: f64,
    pub sv_laplacian: f64,
    pub budget: f64,
    pub sphere_average: f64,
    pub sphere_std_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuperharmonicReport {
    pub prior: String,
    pub expectation: Expectation,
    pub points: Vec<PointCheck>,
    /// One note per skipped point.
    pub excluded: Vec<String>,
}

impl SuperharmonicReport {
    pub fn passed(&self) -> bool {
        !self.points.is_empty() && self.points.iter().all(|p| p.passed)
    }
}

/// Checks `count` random full-rank points drawn as `scale * N(0, I, I)`.
pub fn check_superharmonic(
    kind: &PriorKind,
    spec: &ModelSpec,
    count: usize,
    scale: f64,
    seed: u64,
    sphere_draws: usize,
) -> Result<SuperharmonicReport> {
    let expectation = match kind {
        PriorKind::Svs | PriorKind::Stein | PriorKind::Uniform => Expectation::Harmonic,
        PriorKind::RegularizedSvs(_) => Expectation::Superharmonic,
        PriorKind::TransformedSvs(_) => {
            return Err(Error::InvalidParameter(
                "transformed prior is not orthogonally invariant".into(),
            ))
        }
    };
    kind.validate(spec)?;
    let (n, m) = (spec.n(), spec.m());
    let prior = |z: &Mat| {
        log_prior_mat(kind, spec, z)
            .map(f64::exp)
            .unwrap_or(f64::NAN)
    };
    let prior_sv = |s: &[f64]| prior(&diag_embedded(n, m, s));
    let mut rng = rng_stream(seed, 0);
    let mut points = Vec::with_capacity(count);
    let mut excluded = Vec::new();
    let mut attempts = 0;
    while points.len() < count {
        attempts += 1;
        if attempts > 20 * count + 100 {
            return Err(Error::Degenerate(
                "too many degenerate sample points".into(),
            ));
        }
        let x = standard_normal(n, m, &mut rng) * scale;
        let s = singular_values(&x);
        let smin = *s.last().unwrap();
        let gap = s
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(f64::INFINITY, f64::min);
        if smin < MIN_SINGULAR || gap < MIN_SINGULAR {
            excluded.push(format!("singular values {s:?} too close to degenerate"));
            continue;
        }
        let f0 = prior(&x);
        let curvature = match kind {
            PriorKind::Stein => x.norm(),
            _ => smin,
        };
        let budget = FD_RELATIVE_BUDGET * f0.abs() / (curvature * curvature);
        let fd = match fd_laplacian(prior, &x, default_laplacian_step(&x)) {
            Ok(v) => v,
            Err(e) => {
                excluded.push(format!("singular values {s:?}: {e}"));
                continue;
            }
        };
        let partials = sv_partials_fd(prior_sv, &s, 1e-4 * smin);
        let sv = sv_laplacian(&s, spec, &partials)?;
        let sphere = sphere_average_test(prior, &x, 0.25 * smin, sphere_draws.max(2), &mut rng)?;
        let sign_ok = |l: f64| match expectation {
            Expectation::Harmonic => l.abs() <= budget,
            Expectation::Superharmonic => l < 0.0,
        };
        let sphere_ok = sphere.average <= sphere.center_value + 3.0 * sphere.std_error;
        points.push(PointCheck {
            singular_values: s,
            prior_value: f0,
            fd_laplacian: fd,
            sv_laplacian: sv,
            budget,
            sphere_average: sphere.average,
            sphere_std_error: sphere.std_error,
            passed: sign_ok(fd) && sign_ok(sv) && sphere_ok,
        });
    }
    Ok(SuperharmonicReport {
        prior: kind.label().to_string(),
        expectation,
        points,
        excluded,
    })
}
