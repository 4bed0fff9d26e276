//! Point estimators of the mean matrix.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matnorm::{singular_values, svd, Mat, ModelSpec};
use crate::priors::{grad_log_marginal_with, GradScheme, PriorKind, FD_EPS};
use crate::zonal::SeriesControl;

/// Estimator labels used in reports, tables and the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorId {
    Mle,
    JamesStein,
    EfronMorris,
    EfronMorrisPlus,
    SteinBayes,
    SvsBayes,
}

impl EstimatorId {
    pub const ALL: [EstimatorId; 6] = [
        EstimatorId::Mle,
        EstimatorId::JamesStein,
        EstimatorId::EfronMorris,
        EstimatorId::EfronMorrisPlus,
        EstimatorId::SteinBayes,
        EstimatorId::SvsBayes,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EstimatorId::Mle => "mle",
            EstimatorId::JamesStein => "js",
            EstimatorId::EfronMorris => "em",
            EstimatorId::EfronMorrisPlus => "em-plus",
            EstimatorId::SteinBayes => "stein-bayes",
            EstimatorId::SvsBayes => "svs-bayes",
        }
    }
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for EstimatorId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        EstimatorId::ALL
            .into_iter()
            .find(|e| e.label() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown estimator '{s}'")))
    }
}

/// Series diagnostics of a Bayes estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub converged: bool,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub estimate: Mat,
    pub estimator_id: EstimatorId,
    pub diagnostics: Option<Diagnostics>,
}

impl EstimateReport {
    fn plain(estimate: Mat, id: EstimatorId) -> Self {
        Self {
            estimate,
            estimator_id: id,
            diagnostics: None,
        }
    }
}

fn check_scale(scale: f64) -> Result<()> {
    if scale > 0.0 && scale.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "scale must be positive, got {scale}"
        )))
    }
}

pub fn mle(spec: &ModelSpec, x: &Mat) -> Result<EstimateReport> {
    spec.check_shape(x)?;
    Ok(EstimateReport::plain(x.clone(), EstimatorId::Mle))
}

/// `(1 - (nm - 2) scale / ||x||^2) x`.
pub fn james_stein(spec: &ModelSpec, x: &Mat, scale: f64) -> Result<EstimateReport> {
    spec.check_shape(x)?;
    check_scale(scale)?;
    let r2 = x.norm_squared();
    if r2 == 0.0 {
        return Err(Error::DivisionByZero(
            "James-Stein estimator at x = 0".into(),
        ));
    }
    let f = 1.0 - (spec.dim() as f64 - 2.0) * scale / r2;
    Ok(EstimateReport::plain(x * f, EstimatorId::JamesStein))
}

fn require_full_rank(spec: &ModelSpec, x: &Mat) -> Result<()> {
    let s = singular_values(x);
    let smax = s.first().copied().unwrap_or(0.0);
    if s.iter()
        .any(|&v| v <= f64::EPSILON * spec.n() as f64 * smax)
        || smax == 0.0
    {
        return Err(Error::RankDeficient);
    }
    Ok(())
}

/// `X (I - (n - m - 1) scale (X^T X)^{-1})`.
pub fn efron_morris(spec: &ModelSpec, x: &Mat, scale: f64) -> Result<EstimateReport> {
    spec.check_shape(x)?;
    check_scale(scale)?;
    require_full_rank(spec, x)?;
    let s = x.transpose() * x;
    let inv = s.cholesky().ok_or(Error::RankDeficient)?.inverse();
    let c = (spec.n() - spec.m() - 1) as f64 * scale;
    let m = spec.m();
    let est = x * (Mat::identity(m, m) - inv * c);
    Ok(EstimateReport::plain(est, EstimatorId::EfronMorris))
}

/// Efron-Morris in singular value form, `sigma_i -> (1 - c / sigma_i^2) sigma_i`,
/// optionally truncated at zero.
pub fn efron_morris_svd(
    spec: &ModelSpec,
    x: &Mat,
    scale: f64,
    positive_part: bool,
) -> Result<EstimateReport> {
    spec.check_shape(x)?;
    check_scale(scale)?;
    require_full_rank(spec, x)?;
    let c = (spec.n() - spec.m() - 1) as f64 * scale;
    let dec = svd(x);
    let d: Vec<f64> = dec
        .sigma
        .iter()
        .map(|&s| {
            let v = (1.0 - c / (s * s)) * s;
            if positive_part {
                v.max(0.0)
            } else {
                v
            }
        })
        .collect();
    let id = if positive_part {
        EstimatorId::EfronMorrisPlus
    } else {
        EstimatorId::EfronMorris
    };
    Ok(EstimateReport::plain(dec.compose(&d), id))
}

/// Positive-part Efron-Morris.
pub fn efron_morris_plus(spec: &ModelSpec, x: &Mat, scale: f64) -> Result<EstimateReport> {
    efron_morris_svd(spec, x, scale, true)
}

/// `x + scale * grad log m(x; scale)` with entrywise differences at step
/// `1e-6`. A truncated series is an error naming the point.
pub fn bayes_estimate(
    kind: &PriorKind,
    spec: &ModelSpec,
    x: &Mat,
    scale: f64,
    ctrl: &SeriesControl,
) -> Result<EstimateReport> {
    let r = bayes_estimate_with(kind, spec, x, scale, ctrl, GradScheme::Entrywise)?;
    if let Some(d) = r.diagnostics {
        if !d.converged {
            return Err(Error::NonConvergence {
                terms_used: ctrl.max_order,
                point: Some(format!("singular values {:?}", singular_values(x))),
            });
        }
    }
    Ok(r)
}

/// [`bayes_estimate`] with a chosen gradient scheme; truncation is reported
/// in the diagnostics instead of failing.
pub fn bayes_estimate_with(
    kind: &PriorKind,
    spec: &ModelSpec,
    x: &Mat,
    scale: f64,
    ctrl: &SeriesControl,
    scheme: GradScheme,
) -> Result<EstimateReport> {
    check_scale(scale)?;
    let id = match kind {
        PriorKind::Svs => EstimatorId::SvsBayes,
        PriorKind::Stein => EstimatorId::SteinBayes,
        other => {
            return Err(Error::InvalidParameter(format!(
                "Bayes estimator needs the svs or stein prior, got {}",
                other.label()
            )))
        }
    };
    let g = grad_log_marginal_with(kind, spec, x, scale, FD_EPS, ctrl, scheme)?;
    Ok(EstimateReport {
        estimate: x + g.grad * scale,
        estimator_id: id,
        diagnostics: Some(Diagnostics {
            converged: g.converged,
            evaluations: g.evaluations,
        }),
    })
}

/// Runs the estimator named by `id`.
pub fn estimate(
    id: EstimatorId,
    spec: &ModelSpec,
    x: &Mat,
    scale: f64,
    ctrl: &SeriesControl,
    scheme: GradScheme,
) -> Result<EstimateReport> {
    match id {
        EstimatorId::Mle => mle(spec, x),
        EstimatorId::JamesStein => james_stein(spec, x, scale),
        EstimatorId::EfronMorris => efron_morris(spec, x, scale),
        EstimatorId::EfronMorrisPlus => efron_morris_plus(spec, x, scale),
        EstimatorId::SteinBayes => {
            bayes_estimate_with(&PriorKind::Stein, spec, x, scale, ctrl, scheme)
        }
        EstimatorId::SvsBayes => bayes_estimate_with(&PriorKind::Svs, spec, x, scale, ctrl, scheme),
    }
}

/// Squared Frobenius distance.
pub fn frobenius_loss(estimate: &Mat, truth: &Mat) -> f64 {
    (estimate - truth).norm_squared()
}
