//! Marginal density of `Y ~ N_{n,m}(M, v I, I)` under the shrinkage and
//! Stein priors, and finite-difference gradients of its logarithm.

use crate::error::{Error, Result};
use crate::matnorm::{singular_values, svd, Mat, ModelSpec};
use crate::zonal::{ln_mv_gamma, log_etr_hyp1f1, SeriesControl};

use super::PriorKind;

/// Default central-difference step for log-marginal gradients.
pub const FD_EPS: f64 = 1e-6;

/// Log-marginal value with series diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Marginal {
    pub value: f64,
    pub converged: bool,
    pub terms_used: usize,
}

/// `log m(Y; v)` for the shrinkage prior on `n x m` matrices, as a function of
/// the singular values of `Y`:
///
/// ```text
/// -(m(n-m-1)/2) log v + log c - tr(Y^T Y)/(2v) + log 1F1((m+1)/2; n/2; Y^T Y/(2v))
/// log c = -(m(n-m-1)/2) log 2 + log Gamma_m((m+1)/2) - log Gamma_m(n/2)
/// ```
pub fn log_marginal_from_singulars(
    n: usize,
    m: usize,
    sigma: &[f64],
    v: f64,
    ctrl: &SeriesControl,
) -> Result<Marginal> {
    if m == 0 || n < m + 2 {
        return Err(Error::InvalidDimensions { n, m });
    }
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "scale must be positive, got {v}"
        )));
    }
    let a = (m as f64 + 1.0) / 2.0;
    let b = n as f64 / 2.0;
    let q = m as f64 * (n - m - 1) as f64 / 2.0;
    let ln_c = -q * std::f64::consts::LN_2 + ln_mv_gamma(m, a)? - ln_mv_gamma(m, b)?;
    let eigs: Vec<f64> = sigma.iter().map(|s| s * s / (2.0 * v)).collect();
    let fused = log_etr_hyp1f1(a, b, &eigs, ctrl)?;
    Ok(Marginal {
        value: -q * v.ln() + ln_c + fused.log_abs,
        converged: fused.converged,
        terms_used: fused.terms_used,
    })
}

/// Shrinkage-prior log-marginal with diagnostics.
pub fn log_marginal_svs_checked(
    spec: &ModelSpec,
    y: &Mat,
    scale: f64,
    ctrl: &SeriesControl,
) -> Result<Marginal> {
    spec.check_shape(y)?;
    log_marginal_from_singulars(spec.n(), spec.m(), &singular_values(y), scale, ctrl)
}

/// Shrinkage-prior log-marginal; a truncated series is an error.
pub fn log_marginal_svs(
    spec: &ModelSpec,
    y: &Mat,
    scale: f64,
    ctrl: &SeriesControl,
) -> Result<f64> {
    let r = log_marginal_svs_checked(spec, y, scale, ctrl)?;
    require_converged(r, y)
}

/// Stein-prior log-marginal: the one-column shrinkage marginal in dimension
/// `nm` evaluated at `||Y||_F`.
pub fn log_marginal_stein(
    spec: &ModelSpec,
    y: &Mat,
    scale: f64,
    ctrl: &SeriesControl,
) -> Result<Marginal> {
    spec.check_shape(y)?;
    log_marginal_from_singulars(spec.dim(), 1, &[y.norm()], scale, ctrl)
}

/// Log-marginal for the priors with a closed-form marginal.
pub fn log_marginal(
    kind: &PriorKind,
    spec: &ModelSpec,
    y: &Mat,
    scale: f64,
    ctrl: &SeriesControl,
) -> Result<Marginal> {
    match kind {
        PriorKind::Uniform => {
            spec.check_shape(y)?;
            Ok(Marginal {
                value: 0.0,
                converged: true,
                terms_used: 0,
            })
        }
        PriorKind::Svs => log_marginal_svs_checked(spec, y, scale, ctrl),
        PriorKind::Stein => log_marginal_stein(spec, y, scale, ctrl),
        other => Err(Error::InvalidParameter(format!(
            "no closed-form marginal for the {} prior",
            other.label()
        ))),
    }
}

fn require_converged(r: Marginal, y: &Mat) -> Result<f64> {
    if r.converged {
        Ok(r.value)
    } else {
        Err(Error::NonConvergence {
            terms_used: r.terms_used,
            point: Some(format!("{:?}", singular_values(y))),
        })
    }
}

/// How the gradient of the log-marginal is differenced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradScheme {
    /// Central difference in every entry of `Y` (`2nm` evaluations).
    #[default]
    Entrywise,
    /// Central difference in each singular value, mapped back through
    /// `U diag(d) V^T` (`2m` evaluations; 2 for the Stein prior).
    SingularValue,
}

/// Gradient with series diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub grad: Mat,
    /// False if any evaluation hit the order cap.
    pub converged: bool,
    pub evaluations: usize,
}

/// `grad_Y log m(Y; scale)` by entrywise central differences with the
/// default series control. A truncated series is an error.
pub fn grad_log_marginal(
    kind: &PriorKind,
    spec: &ModelSpec,
    y: &Mat,
    scale: f64,
    eps: f64,
) -> Result<Mat> {
    let r = grad_log_marginal_with(
        kind,
        spec,
        y,
        scale,
        eps,
        &SeriesControl::default(),
        GradScheme::Entrywise,
    )?;
    if !r.converged {
        return Err(Error::NonConvergence {
            terms_used: SeriesControl::default().max_order,
            point: Some(format!("{:?}", singular_values(y))),
        });
    }
    Ok(r.grad)
}

pub fn grad_log_marginal_with(
    kind: &PriorKind,
    spec: &ModelSpec,
    y: &Mat,
    scale: f64,
    eps: f64,
    ctrl: &SeriesControl,
    scheme: GradScheme,
) -> Result<GradReport> {
    spec.check_shape(y)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "step must be positive, got {eps}"
        )));
    }
    if let PriorKind::Uniform = kind {
        return Ok(GradReport {
            grad: Mat::zeros(spec.n(), spec.m()),
            converged: true,
            evaluations: 0,
        });
    }
    if !matches!(kind, PriorKind::Svs | PriorKind::Stein) {
        return Err(Error::InvalidParameter(format!(
            "no closed-form marginal for the {} prior",
            kind.label()
        )));
    }
    match scheme {
        GradScheme::Entrywise => entrywise(kind, spec, y, scale, eps, ctrl),
        GradScheme::SingularValue => match kind {
            PriorKind::Stein => radial(spec, y, scale, eps, ctrl),
            _ => by_singular_values(spec, y, scale, eps, ctrl),
        },
    }
}

fn entrywise(
    kind: &PriorKind,
    spec: &ModelSpec,
    y: &Mat,
    scale: f64,
    eps: f64,
    ctrl: &SeriesControl,
) -> Result<GradReport> {
    let mut grad = Mat::zeros(spec.n(), spec.m());
    let mut converged = true;
    let mut work = y.clone();
    for j in 0..spec.m() {
        for i in 0..spec.n() {
            let y0 = work[(i, j)];
            work[(i, j)] = y0 + eps;
            let up = log_marginal(kind, spec, &work, scale, ctrl)?;
            work[(i, j)] = y0 - eps;
            let dn = log_marginal(kind, spec, &work, scale, ctrl)?;
            work[(i, j)] = y0;
            converged &= up.converged && dn.converged;
            grad[(i, j)] = (up.value - dn.value) / (2.0 * eps);
        }
    }
    Ok(GradReport {
        grad,
        converged,
        evaluations: 2 * spec.dim(),
    })
}

fn by_singular_values(
    spec: &ModelSpec,
    y: &Mat,
    scale: f64,
    eps: f64,
    ctrl: &SeriesControl,
) -> Result<GradReport> {
    let dec = svd(y);
    let mut d = vec![0.0; spec.m()];
    let mut converged = true;
    let mut s = dec.sigma.clone();
    for i in 0..spec.m() {
        let s0 = s[i];
        s[i] = s0 + eps;
        let up = log_marginal_from_singulars(spec.n(), spec.m(), &s, scale, ctrl)?;
        s[i] = s0 - eps;
        let dn = log_marginal_from_singulars(spec.n(), spec.m(), &s, scale, ctrl)?;
        s[i] = s0;
        converged &= up.converged && dn.converged;
        d[i] = (up.value - dn.value) / (2.0 * eps);
    }
    Ok(GradReport {
        grad: dec.compose(&d),
        converged,
        evaluations: 2 * spec.m(),
    })
}

fn radial(
    spec: &ModelSpec,
    y: &Mat,
    scale: f64,
    eps: f64,
    ctrl: &SeriesControl,
) -> Result<GradReport> {
    let r = y.norm();
    if r == 0.0 {
        return Ok(GradReport {
            grad: Mat::zeros(spec.n(), spec.m()),
            converged: true,
            evaluations: 0,
        });
    }
    let up = log_marginal_from_singulars(spec.dim(), 1, &[r + eps], scale, ctrl)?;
    let dn = log_marginal_from_singulars(spec.dim(), 1, &[r - eps], scale, ctrl)?;
    let d = (up.value - dn.value) / (2.0 * eps);
    Ok(GradReport {
        grad: y * (d / r),
        converged: up.converged && dn.converged,
        evaluations: 2,
    })
}
