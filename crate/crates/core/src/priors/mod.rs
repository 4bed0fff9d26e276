//! Prior densities, marginal densities of the observation, log-marginal
//! gradients, and numerical superharmonicity tools.

mod check;
mod harmonic;
mod marginal;

pub use check::{check_superharmonic, Expectation, PointCheck, SuperharmonicReport};

pub use harmonic::{
    default_laplacian_step, fd_laplacian, metric_det, sphere_average_test, sv_laplacian,
    sv_partials_fd, SphereAverage, SvPartials,
};
pub use marginal::{
    grad_log_marginal, grad_log_marginal_with, log_marginal, log_marginal_from_singulars,
    log_marginal_stein, log_marginal_svs, log_marginal_svs_checked, GradReport, GradScheme,
    Marginal, FD_EPS,
};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matnorm::{singular_values, unvec, vec_of, Mat, MeanMatrix, ModelSpec};

/// Prior on the mean matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorKind {
    /// Flat prior, `pi(M) = 1`.
    Uniform,
    /// `||M||_F^{-(nm-2)}` on the vectorized mean.
    Stein,
    /// Singular value shrinkage prior `det(M^T M)^{-(n-m-1)/2}`.
    Svs,
    /// `det(M^T M + I/k)^{-(n-m-1)/2}`.
    RegularizedSvs(u32),
    /// Shrinkage prior evaluated at `vec^{-1}(A^{-1} vec M)` for an invertible
    /// `nm x nm` matrix `A`.
    TransformedSvs(DMatrix<f64>),
}

impl PriorKind {
    /// Validates parameters against the model dimensions.
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        match self {
            PriorKind::RegularizedSvs(k) if *k == 0 => Err(Error::InvalidParameter(
                "regularized prior requires k >= 1".into(),
            )),
            PriorKind::TransformedSvs(a) => {
                let d = spec.dim();
                if a.shape() != (d, d) {
                    return Err(Error::DimensionMismatch {
                        expected_rows: d,
                        expected_cols: d,
                        rows: a.nrows(),
                        cols: a.ncols(),
                    });
                }
                if a.clone().lu().try_inverse().is_none() {
                    return Err(Error::Domain("transform matrix is singular".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PriorKind::Uniform => "uniform",
            PriorKind::Stein => "stein",
            PriorKind::Svs => "svs",
            PriorKind::RegularizedSvs(_) => "svs-regularized",
            PriorKind::TransformedSvs(_) => "svs-transformed",
        }
    }
}

/// Numerical rank test: singular values at or below this fraction of the
/// largest one (times the larger dimension) count as zero.
fn is_rank_deficient(sigma: &[f64], dim: usize) -> bool {
    let smax = sigma.first().copied().unwrap_or(0.0);
    let smin = sigma.last().copied().unwrap_or(0.0);
    smax == 0.0 || smin <= f64::EPSILON * dim as f64 * smax
}

/// `log pi(M)`; `+inf` where the density is singular (rank-deficient `M`
/// for the shrinkage prior, `M = 0` for the Stein prior).
pub fn log_prior(kind: &PriorKind, spec: &ModelSpec, m_matrix: &MeanMatrix) -> Result<f64> {
    log_prior_mat(kind, spec, m_matrix.entries())
}

/// [`log_prior`] on a bare matrix.
pub fn log_prior_mat(kind: &PriorKind, spec: &ModelSpec, x: &Mat) -> Result<f64> {
    spec.check_shape(x)?;
    let (n, m) = (spec.n(), spec.m());
    let c = (n - m - 1) as f64;
    Ok(match kind {
        PriorKind::Uniform => 0.0,
        PriorKind::Stein => {
            let r = x.norm();
            if r == 0.0 {
                f64::INFINITY
            } else {
                -((n * m) as f64 - 2.0) * r.ln()
            }
        }
        PriorKind::Svs => log_svs_prior(n, m, x),
        PriorKind::RegularizedSvs(k) => {
            if *k == 0 {
                return Err(Error::InvalidParameter(
                    "regularized prior requires k >= 1".into(),
                ));
            }
            let eps = 1.0 / *k as f64;
            let s = singular_values(x);
            -0.5 * c * s.iter().map(|v| (v * v + eps).ln()).sum::<f64>()
        }
        PriorKind::TransformedSvs(a) => {
            let back = back_transform(a, x)?;
            log_svs_prior(n, m, &back)
        }
    })
}

fn log_svs_prior(n: usize, m: usize, x: &Mat) -> f64 {
    let s = singular_values(x);
    if is_rank_deficient(&s, n) {
        return f64::INFINITY;
    }
    -((n - m - 1) as f64) * s.iter().map(|v| v.ln()).sum::<f64>()
}

/// `vec^{-1}(A^{-1} vec x)`.
pub fn back_transform(a: &DMatrix<f64>, x: &Mat) -> Result<Mat> {
    let v = vec_of(x);
    if a.shape() != (v.len(), v.len()) {
        return Err(Error::DimensionMismatch {
            expected_rows: v.len(),
            expected_cols: v.len(),
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let sol = a
        .clone()
        .lu()
        .solve(&v)
        .ok_or_else(|| Error::Domain("transform matrix is singular".into()))?;
    unvec(&sol, x.nrows(), x.ncols())
}

/// Prior density `pi(M)` (may be `+inf`).
pub fn prior_density(kind: &PriorKind, spec: &ModelSpec, x: &Mat) -> Result<f64> {
    log_prior_mat(kind, spec, x).map(f64::exp)
}
