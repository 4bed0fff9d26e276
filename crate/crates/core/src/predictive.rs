//! Bayesian predictive densities for a future observation
//! `Y~ ~ N_{n,m}(M, v2 I, I)` given `Y ~ N_{n,m}(M, v1 I, I)`, and the
//! Kullback-Leibler loss.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matnorm::{log_density_iso, sample_around, singular_values, Mat, MeanMatrix, ModelSpec};
use crate::priors::{log_marginal_from_singulars, Marginal};
use crate::zonal::{log_etr_hyp1f1, SeriesControl};

/// Observation, candidate future value, and the model they live in.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveQuery {
    spec: ModelSpec,
    y: Mat,
    y_future: Mat,
}

impl PredictiveQuery {
    pub fn new(spec: ModelSpec, y: Mat, y_future: Mat) -> Result<Self> {
        spec.check_shape(&y)?;
        spec.check_shape(&y_future)?;
        Ok(Self { spec, y, y_future })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn y(&self) -> &Mat {
        &self.y
    }

    pub fn y_future(&self) -> &Mat {
        &self.y_future
    }

    /// `Z = v0 (Y / v1 + Y~ / v2)`, distributed as `N(M, v0 I, I)`.
    pub fn z(&self) -> Mat {
        let s = &self.spec;
        (&self.y / s.v1() + &self.y_future / s.v2()) * s.v0()
    }

    /// `log p(Y, Y~ | M) - log p(Z | M)`, which does not depend on `M`.
    fn log_sufficiency_ratio(&self) -> f64 {
        let s = &self.spec;
        let zero = Mat::zeros(s.n(), s.m());
        log_density_iso(&self.y, &zero, s.v1()) + log_density_iso(&self.y_future, &zero, s.v2())
            - log_density_iso(&self.z(), &zero, s.v0())
    }
}

/// Prior behind a predictive density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictiveKind {
    Uniform,
    Stein,
    Svs,
}

impl PredictiveKind {
    pub const ALL: [PredictiveKind; 3] = [
        PredictiveKind::Uniform,
        PredictiveKind::Stein,
        PredictiveKind::Svs,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PredictiveKind::Uniform => "uniform",
            PredictiveKind::Stein => "stein",
            PredictiveKind::Svs => "svs",
        }
    }
}

impl fmt::Display for PredictiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PredictiveKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PredictiveKind::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown predictive '{s}'")))
    }
}

/// Log predictive value with series diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredValue {
    pub value: f64,
    pub converged: bool,
}

/// `log N(Y~; Y, (v1 + v2) I, I)`.
pub fn log_pred_uniform(q: &PredictiveQuery) -> f64 {
    let s = q.spec();
    log_density_iso(q.y_future(), q.y(), s.v1() + s.v2())
}

fn combine(q: &PredictiveQuery, mz: Marginal, my: Marginal) -> PredValue {
    PredValue {
        value: q.log_sufficiency_ratio() + mz.value - my.value,
        converged: mz.converged && my.converged,
    }
}

/// Shrinkage-prior predictive with diagnostics.
pub fn log_pred_svs_checked(q: &PredictiveQuery, ctrl: &SeriesControl) -> Result<PredValue> {
    let s = q.spec();
    let (n, m) = (s.n(), s.m());
    let mz = log_marginal_from_singulars(n, m, &singular_values(&q.z()), s.v0(), ctrl)?;
    let my = log_marginal_from_singulars(n, m, &singular_values(q.y()), s.v1(), ctrl)?;
    Ok(combine(q, mz, my))
}

/// Stein-prior predictive: the one-column shrinkage predictive on `vec`.
pub fn log_pred_stein_checked(q: &PredictiveQuery, ctrl: &SeriesControl) -> Result<PredValue> {
    let s = q.spec();
    let d = s.dim();
    let mz = log_marginal_from_singulars(d, 1, &[q.z().norm()], s.v0(), ctrl)?;
    let my = log_marginal_from_singulars(d, 1, &[q.y().norm()], s.v1(), ctrl)?;
    Ok(combine(q, mz, my))
}

fn require(v: PredValue, terms: usize) -> Result<f64> {
    if v.converged {
        Ok(v.value)
    } else {
        Err(Error::NonConvergence {
            terms_used: terms,
            point: None,
        })
    }
}

/// Shrinkage-prior predictive `log p(Y~ | Y)`; a truncated series is an error.
pub fn log_pred_svs(q: &PredictiveQuery, ctrl: &SeriesControl) -> Result<f64> {
    require(log_pred_svs_checked(q, ctrl)?, ctrl.max_order)
}

/// Stein-prior predictive `log p(Y~ | Y)`; a truncated series is an error.
pub fn log_pred_stein(q: &PredictiveQuery, ctrl: &SeriesControl) -> Result<f64> {
    require(log_pred_stein_checked(q, ctrl)?, ctrl.max_order)
}

/// Closed form of the shrinkage-prior predictive for `v1 = v2 = 1`, with
/// `Z = Y + Y~`:
///
/// ```text
/// (2 pi)^{-mn/2} etr{-(Y~ - Y)^T (Y~ - Y)/4 - Z^T Z/4 + Y^T Y/2}
///   2^{-m(m+1)/2} 1F1((m+1)/2; n/2; Z^T Z/4) / 1F1((m+1)/2; n/2; Y^T Y/2)
/// ```
pub fn log_pred_svs_unit(q: &PredictiveQuery, ctrl: &SeriesControl) -> Result<f64> {
    let s = q.spec();
    if s.v1() != 1.0 || s.v2() != 1.0 {
        return Err(Error::InvalidParameter(
            "closed form requires unit observation and future scales".into(),
        ));
    }
    let (n, m) = (s.n() as f64, s.m() as f64);
    let (a, b) = ((m + 1.0) / 2.0, n / 2.0);
    let z = q.y() + q.y_future();
    let eig =
        |x: &Mat, c: f64| -> Vec<f64> { singular_values(x).iter().map(|v| v * v * c).collect() };
    let fz = log_etr_hyp1f1(a, b, &eig(&z, 0.25), ctrl)?;
    let fy = log_etr_hyp1f1(a, b, &eig(q.y(), 0.5), ctrl)?;
    if !(fz.converged && fy.converged) {
        return Err(Error::NonConvergence {
            terms_used: fz.terms_used.max(fy.terms_used),
            point: None,
        });
    }
    let diff = (q.y_future() - q.y()).norm_squared();
    Ok(-0.5 * m * n * (2.0 * std::f64::consts::PI).ln()
        - 0.25 * diff
        - 0.5 * m * (m + 1.0) * std::f64::consts::LN_2
        + fz.log_abs
        - fy.log_abs)
}

/// Dispatches on the prior.
pub fn log_pred(
    kind: PredictiveKind,
    q: &PredictiveQuery,
    ctrl: &SeriesControl,
) -> Result<PredValue> {
    match kind {
        PredictiveKind::Uniform => Ok(PredValue {
            value: log_pred_uniform(q),
            converged: true,
        }),
        PredictiveKind::Stein => log_pred_stein_checked(q, ctrl),
        PredictiveKind::Svs => log_pred_svs_checked(q, ctrl),
    }
}

/// `log p(Y~ | M) - log p^(Y~ | Y)` for given draws.
pub fn kl_loss_at(
    kind: PredictiveKind,
    spec: &ModelSpec,
    truth: &Mat,
    y: &Mat,
    y_future: &Mat,
    ctrl: &SeriesControl,
) -> Result<PredValue> {
    spec.check_shape(truth)?;
    let q = PredictiveQuery::new(*spec, y.clone(), y_future.clone())?;
    let p = log_pred(kind, &q, ctrl)?;
    Ok(PredValue {
        value: log_density_iso(y_future, truth, spec.v2()) - p.value,
        converged: p.converged,
    })
}

/// Draws `Y ~ N(M, v1 I, I)` then `Y~ ~ N(M, v2 I, I)` and returns the KL
/// loss of the chosen predictive; its expectation is the KL risk.
pub fn kl_loss_sample<R: Rng + ?Sized>(
    spec: &ModelSpec,
    truth: &MeanMatrix,
    kind: PredictiveKind,
    ctrl: &SeriesControl,
    rng: &mut R,
) -> Result<PredValue> {
    let m = truth.entries();
    spec.check_shape(m)?;
    let y = sample_around(m, spec.v1(), rng);
    let yf = sample_around(m, spec.v2(), rng);
    kl_loss_at(kind, spec, m, &y, &yf, ctrl)
}

/// KL risk of the uniform-prior predictive, `(nm/2) log(1 + v1/v2)`.
pub fn uniform_kl_risk(spec: &ModelSpec) -> f64 {
    0.5 * spec.dim() as f64 * (1.0 + spec.v1() / spec.v2()).ln()
}
