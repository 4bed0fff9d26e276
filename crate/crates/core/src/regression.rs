//! Multivariate linear regression `Y = X B + E` reduced to a matrix-variate
//! Normal mean problem, and the transformed shrinkage prior for a future
//! observation whose covariance is not proportional to the current one.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::matnorm::{singular_values, standard_normal, unvec, vec_of, Mat, ModelSpec};
use crate::priors::{back_transform, fd_laplacian, log_prior_mat, PriorKind};

/// `Y = X B + E`, rows of `E` independent `N(0, noise_var I_q)`, with a future
/// design `X~` and noise variance for prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    design: Mat,
    response: Mat,
    noise_var: f64,
    future_design: Mat,
    future_noise_var: f64,
}

impl RegressionProblem {
    pub fn new(
        design: Mat,
        response: Mat,
        noise_var: f64,
        future_design: Mat,
        future_noise_var: f64,
    ) -> Result<Self> {
        let (n, p) = design.shape();
        let q = response.ncols();
        if response.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected_rows: n,
                expected_cols: q,
                rows: response.nrows(),
                cols: q,
            });
        }
        if future_design.ncols() != p {
            return Err(Error::DimensionMismatch {
                expected_rows: future_design.nrows(),
                expected_cols: p,
                rows: future_design.nrows(),
                cols: future_design.ncols(),
            });
        }
        if p < q {
            return Err(Error::InvalidParameter(format!(
                "need at least as many predictors as responses (p = {p}, q = {q})"
            )));
        }
        if !(noise_var > 0.0) || !(future_noise_var > 0.0) {
            return Err(Error::InvalidParameter(
                "noise variances must be positive".into(),
            ));
        }
        gram_inverse(&design)?;
        Ok(Self {
            design,
            response,
            noise_var,
            future_design,
            future_noise_var,
        })
    }

    pub fn design(&self) -> &Mat {
        &self.design
    }

    pub fn response(&self) -> &Mat {
        &self.response
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn future_design(&self) -> &Mat {
        &self.future_design
    }

    pub fn future_noise_var(&self) -> f64 {
        self.future_noise_var
    }

    /// Same problem with a new response.
    pub fn with_response(&self, response: Mat) -> Result<Self> {
        Self::new(
            self.design.clone(),
            response,
            self.noise_var,
            self.future_design.clone(),
            self.future_noise_var,
        )
    }
}

fn gram_inverse(x: &Mat) -> Result<Mat> {
    let s = singular_values(x);
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0
        || s.iter()
            .any(|&v| v <= f64::EPSILON * x.nrows().max(1) as f64 * smax)
    {
        return Err(Error::RankDeficient);
    }
    let g = x.transpose() * x;
    Ok(g.cholesky().ok_or(Error::RankDeficient)?.inverse())
}

/// Least-squares reduction of a regression problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    /// `(X^T X)^{-1} X^T Y ~ N_{p,q}(B, noise_var (X^T X)^{-1}, I)`.
    pub y1: Mat,
    /// `noise_var (X^T X)^{-1}`.
    pub y1_cov_scale: Mat,
    /// Residual `Y - X Y1`, orthogonal to the columns of `X`.
    pub y2: Mat,
}

pub fn reduce(problem: &RegressionProblem) -> Result<Reduction> {
    let x = problem.design();
    let ginv = gram_inverse(x)?;
    let y1 = &ginv * x.transpose() * problem.response();
    let y2 = problem.response() - x * &y1;
    Ok(Reduction {
        y1,
        y1_cov_scale: ginv * problem.noise_var(),
        y2,
    })
}

/// Scale `v` with `noise_var (X^T X)^{-1} = v I`, if the design makes the
/// reduced covariance isotropic.
pub fn isotropic_scale(problem: &RegressionProblem, tol: f64) -> Option<f64> {
    let c = gram_inverse(problem.design()).ok()? * problem.noise_var();
    let p = c.nrows();
    let v = c.trace() / p as f64;
    let off = (&c - Mat::identity(p, p) * v).amax();
    (off <= tol * v).then_some(v)
}

/// `n x p` design with orthonormal columns.
pub fn orthonormal_design<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Result<Mat> {
    if n < p {
        return Err(Error::InvalidDimensions { n, m: p });
    }
    let q = standard_normal(n, p, rng).qr().q();
    Ok(q.columns(0, p).into_owned())
}

/// Covariances of `vec` of the current and future mean-matrix observations.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariancePairGeneral {
    obs_cov: Mat,
    fut_cov: Mat,
}

impl CovariancePairGeneral {
    pub fn new(obs_cov: Mat, fut_cov: Mat) -> Result<Self> {
        for c in [&obs_cov, &fut_cov] {
            check_spd(c)?;
        }
        if obs_cov.shape() != fut_cov.shape() {
            return Err(Error::DimensionMismatch {
                expected_rows: obs_cov.nrows(),
                expected_cols: obs_cov.ncols(),
                rows: fut_cov.nrows(),
                cols: fut_cov.ncols(),
            });
        }
        Ok(Self { obs_cov, fut_cov })
    }

    /// `I_q (x) noise_var (X^T X)^{-1}` and `I_q (x) future_noise_var (X~^T X~)^{-1}`.
    pub fn from_regression(problem: &RegressionProblem) -> Result<Self> {
        let q = problem.response().ncols();
        let c = gram_inverse(problem.design())? * problem.noise_var();
        let ct = gram_inverse(problem.future_design())? * problem.future_noise_var();
        let iq = Mat::identity(q, q);
        Self::new(iq.kronecker(&c), iq.kronecker(&ct))
    }

    pub fn obs_cov(&self) -> &Mat {
        &self.obs_cov
    }

    pub fn fut_cov(&self) -> &Mat {
        &self.fut_cov
    }
}

fn check_spd(c: &Mat) -> Result<()> {
    if !c.is_square() {
        return Err(Error::Domain("covariance must be square".into()));
    }
    let scale = c.amax().max(1e-300);
    if (c - c.transpose()).amax() > 1e-10 * scale {
        return Err(Error::Domain("covariance is not symmetric".into()));
    }
    let e = SymmetricEigen::new(c.clone());
    if e.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Domain("covariance is not positive definite".into()));
    }
    Ok(())
}

/// Eigendecomposition with eigenvalues descending and each eigenvector's
/// first nonzero entry positive.
pub fn canonical_eigen(c: &Mat) -> (Vec<f64>, Mat) {
    let sym = (c + c.transpose()) * 0.5;
    let e = SymmetricEigen::new(sym);
    let k = c.nrows();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| e.eigenvalues[j].total_cmp(&e.eigenvalues[i]));
    let mut q = Mat::zeros(k, k);
    let mut vals = Vec::with_capacity(k);
    for (col, &i) in order.iter().enumerate() {
        let mut v = e.eigenvectors.column(i).into_owned();
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                v = -v;
            }
        }
        q.set_column(col, &v);
        vals.push(e.eigenvalues[i]);
    }
    (vals, q)
}

fn sym_sqrt(c: &Mat) -> Mat {
    let (vals, q) = canonical_eigen(c);
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        vals.len(),
        vals.iter().map(|v| v.max(0.0).sqrt()),
    ));
    &q * d * q.transpose()
}

fn spd_inverse(c: &Mat) -> Result<Mat> {
    Ok(c.clone()
        .cholesky()
        .ok_or_else(|| Error::Domain("covariance is not positive definite".into()))?
        .inverse())
}

/// Intermediate quantities of the transform construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AStar {
    /// `(obs^{-1} + fut^{-1})^{-1}`.
    pub sigma1: Mat,
    /// Eigenvalues of `sigma1^{1/2} obs^{-1} sigma1^{1/2}`, descending.
    pub lambda: Vec<f64>,
    pub a_star: Mat,
}

/// `A* = Sigma1^{1/2} Q (Lambda^{-1} - I)^{1/2}` where
/// `Sigma1 = (Sigma2^{-1} + Sigma~^{-1})^{-1}`, `Sigma2` is the observation
/// covariance and `Sigma1^{1/2} Sigma2^{-1} Sigma1^{1/2} = Q Lambda Q^T`.
pub fn build_a_star(cov: &CovariancePairGeneral) -> Result<Mat> {
    Ok(build_a_star_parts(cov)?.a_star)
}

pub fn build_a_star_parts(cov: &CovariancePairGeneral) -> Result<AStar> {
    let obs_inv = spd_inverse(cov.obs_cov())?;
    let fut_inv = spd_inverse(cov.fut_cov())?;
    let sigma1 = spd_inverse(&(&obs_inv + &fut_inv))?;
    let root = sym_sqrt(&sigma1);
    let k = &root * &obs_inv * &root;
    let (lambda, q) = canonical_eigen(&k);
    if lambda.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
        return Err(Error::Domain(format!(
            "eigenvalues outside (0, 1): {lambda:?}"
        )));
    }
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        lambda.len(),
        lambda.iter().map(|l| (1.0 / l - 1.0).sqrt()),
    ));
    let a_star = &root * q * d;
    Ok(AStar {
        sigma1,
        lambda,
        a_star,
    })
}

/// `log pi_SVS(vec^{-1}(A*^{-1} vec M))`.
pub fn prior_koba_eval(a_star: &Mat, spec: &ModelSpec, m_matrix: &Mat) -> Result<f64> {
    let kind = PriorKind::TransformedSvs(a_star.clone());
    kind.validate(spec)?;
    log_prior_mat(&kind, spec, m_matrix)
}

/// Per-point results of a Laplacian sign check.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianCheck {
    pub values: Vec<f64>,
    /// Finite-difference error allowance per point.
    pub budgets: Vec<f64>,
    /// Indices of points whose Laplacian exceeds its allowance.
    pub flagged: Vec<usize>,
    /// Indices of skipped points with the reason.
    pub excluded: Vec<(usize, String)>,
}

impl LaplacianCheck {
    pub fn passed(&self) -> bool {
        self.flagged.is_empty()
    }
}

/// Distance from the rank-deficient set below which points are skipped.
pub const SINGULAR_EXCLUSION: f64 = 1e-6;

fn laplacian_check<F, A>(
    points: &[Mat],
    h: Option<f64>,
    density: F,
    argument: A,
) -> Result<LaplacianCheck>
where
    F: Fn(&Mat) -> Result<f64>,
    A: Fn(&Mat) -> Result<Mat>,
{
    let mut out = LaplacianCheck {
        values: Vec::new(),
        budgets: Vec::new(),
        flagged: Vec::new(),
        excluded: Vec::new(),
    };
    for (i, p) in points.iter().enumerate() {
        let arg = argument(p)?;
        let smin = singular_values(&arg).last().copied().unwrap_or(0.0);
        if smin < SINGULAR_EXCLUSION {
            out.excluded
                .push((i, format!("smallest singular value {smin:e}")));
            continue;
        }
        let step = h.unwrap_or_else(|| crate::priors::default_laplacian_step(p));
        let f0 = density(p)?;
        let lap = match fd_laplacian(|z: &Mat| density(z).unwrap_or(f64::NAN), p, step) {
            Ok(v) => v,
            Err(e) => {
                out.excluded.push((i, e.to_string()));
                continue;
            }
        };
        let budget = 1e-3 * f0.abs() / (smin * smin);
        if lap > budget {
            out.flagged.push(i);
        }
        out.values.push(lap);
        out.budgets.push(budget);
    }
    Ok(out)
}

/// Laplacian in `V` of `V -> pi(vec^{-1}(A* vec V))` where `pi` is `base`
/// (the shrinkage prior or its regularization) composed with the inverse
/// transform; by construction this is `base(V)`.
pub fn koba_superharmonicity_check(
    a_star: &Mat,
    spec: &ModelSpec,
    sample_points: &[Mat],
    h: Option<f64>,
) -> Result<LaplacianCheck> {
    koba_superharmonicity_check_with(&PriorKind::Svs, a_star, spec, sample_points, h)
}

pub fn koba_superharmonicity_check_with(
    base: &PriorKind,
    a_star: &Mat,
    spec: &ModelSpec,
    sample_points: &[Mat],
    h: Option<f64>,
) -> Result<LaplacianCheck> {
    PriorKind::TransformedSvs(a_star.clone()).validate(spec)?;
    let forward = |v: &Mat| unvec(&(a_star * vec_of(v)), spec.n(), spec.m());
    let density = |v: &Mat| -> Result<f64> {
        let back = back_transform(a_star, &forward(v)?)?;
        Ok(log_prior_mat(base, spec, &back)?.exp())
    };
    let argument = |v: &Mat| back_transform(a_star, &forward(v)?);
    laplacian_check(sample_points, h, density, argument)
}

/// Laplacian in `V` of `V -> base(vec^{-1}(T vec V))` for an arbitrary map
/// `T`; with a map that does not match the prior this need not be
/// superharmonic.
pub fn composed_laplacian_check(
    base: &PriorKind,
    map: &Mat,
    spec: &ModelSpec,
    sample_points: &[Mat],
    h: Option<f64>,
) -> Result<LaplacianCheck> {
    let argument = |v: &Mat| unvec(&(map * vec_of(v)), spec.n(), spec.m());
    let density = |v: &Mat| -> Result<f64> { Ok(log_prior_mat(base, spec, &argument(v)?)?.exp()) };
    laplacian_check(sample_points, h, density, argument)
}
