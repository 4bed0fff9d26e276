//! Matrix-variate Normal model with isotropic row covariance, sampling,
//! densities, the singular value decomposition and the vectorization bridge.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

/// Random stream used throughout the crate.
pub type RngStream = ChaCha8Rng;

/// Independent stream `stream` derived from a master seed. Streams with
/// different indices never overlap, so replications can be generated in any
/// order.
pub fn rng_stream(master_seed: u64, stream: u64) -> RngStream {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Dimensions and covariance scales of `Y ~ N_{n,m}(M, v1 I_n, I_m)` with a
/// future observation `Y~ ~ N_{n,m}(M, v2 I_n, I_m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelSpecRaw", into = "ModelSpecRaw")]
pub struct ModelSpec {
    n: usize,
    m: usize,
    v1: f64,
    v2: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelSpecRaw {
    n: usize,
    m: usize,
    v1: f64,
    v2: f64,
}

impl TryFrom<ModelSpecRaw> for ModelSpec {
    type Error = Error;
    fn try_from(r: ModelSpecRaw) -> Result<Self> {
        ModelSpec::new(r.n, r.m, r.v1, r.v2)
    }
}

impl From<ModelSpec> for ModelSpecRaw {
    fn from(s: ModelSpec) -> Self {
        ModelSpecRaw {
            n: s.n,
            m: s.m,
            v1: s.v1,
            v2: s.v2,
        }
    }
}

impl ModelSpec {
    pub fn new(n: usize, m: usize, v1: f64, v2: f64) -> Result<Self> {
        if m == 0 || n < m + 2 {
            return Err(Error::InvalidDimensions { n, m });
        }
        if !(v1 > 0.0 && v1.is_finite()) || !(v2 > 0.0 && v2.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "covariance scales must be positive and finite (v1 = {v1}, v2 = {v2})"
            )));
        }
        Ok(Self { n, m, v1, v2 })
    }

    /// Spec with unit observation and future scales.
    pub fn unit(n: usize, m: usize) -> Result<Self> {
        Self::new(n, m, 1.0, 1.0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn v1(&self) -> f64 {
        self.v1
    }

    pub fn v2(&self) -> f64 {
        self.v2
    }

    /// `v0 = v1 v2 / (v1 + v2)`, the scale of the sufficient statistic of
    /// `(Y, Y~)`.
    pub fn v0(&self) -> f64 {
        self.v1 * self.v2 / (self.v1 + self.v2)
    }

    /// `n m`, the dimension of the vectorized model.
    pub fn dim(&self) -> usize {
        self.n * self.m
    }

    pub fn check_shape(&self, x: &Mat) -> Result<()> {
        if x.nrows() != self.n || x.ncols() != self.m {
            return Err(Error::DimensionMismatch {
                expected_rows: self.n,
                expected_cols: self.m,
                rows: x.nrows(),
                cols: x.ncols(),
            });
        }
        Ok(())
    }
}

/// Mean matrix `M` tied to the dimensions of a [`ModelSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct MeanMatrix {
    entries: Mat,
}

impl MeanMatrix {
    pub fn new(spec: &ModelSpec, entries: Mat) -> Result<Self> {
        spec.check_shape(&entries)?;
        Ok(Self { entries })
    }

    pub fn zeros(spec: &ModelSpec) -> Self {
        Self {
            entries: Mat::zeros(spec.n(), spec.m()),
        }
    }

    pub fn entries(&self) -> &Mat {
        &self.entries
    }

    pub fn into_inner(self) -> Mat {
        self.entries
    }
}

/// Draws `M + sqrt(scale) G` with `G` standard Normal, i.e. a sample of
/// `N_{n,m}(M, scale I_n, I_m)`.
pub fn sample<R: Rng + ?Sized>(
    spec: &ModelSpec,
    mean: &MeanMatrix,
    scale: f64,
    rng: &mut R,
) -> Result<Mat> {
    spec.check_shape(mean.entries())?;
    if !(scale >= 0.0) || !scale.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "scale must be nonnegative, got {scale}"
        )));
    }
    Ok(sample_around(mean.entries(), scale, rng))
}

/// Adds isotropic Gaussian noise of variance `scale` to every entry of
/// `mean`. Entries are drawn in column-major order.
pub fn sample_around<R: Rng + ?Sized>(mean: &Mat, scale: f64, rng: &mut R) -> Mat {
    let sd = scale.sqrt();
    let mut out = mean.clone();
    for v in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v += sd * z;
    }
    out
}

/// Standard Normal `rows x cols` matrix.
pub fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `log N_{n,m}(x; M, scale I_n, I_m)`.
pub fn log_density(spec: &ModelSpec, x: &Mat, mean: &MeanMatrix, scale: f64) -> Result<f64> {
    spec.check_shape(x)?;
    spec.check_shape(mean.entries())?;
    if !(scale > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "scale must be positive, got {scale}"
        )));
    }
    Ok(log_density_iso(x, mean.entries(), scale))
}

/// Isotropic Gaussian log-density without shape bookkeeping.
pub fn log_density_iso(x: &Mat, mean: &Mat, scale: f64) -> f64 {
    let d = (x.nrows() * x.ncols()) as f64;
    let r2 = (x - mean).norm_squared();
    -0.5 * d * (2.0 * std::f64::consts::PI * scale).ln() - r2 / (2.0 * scale)
}

/// Column-major vectorization.
pub fn vec_of(x: &Mat) -> DVector<f64> {
    DVector::from_column_slice(x.as_slice())
}

/// Inverse of [`vec_of`].
pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> Result<Mat> {
    if v.len() != rows * cols {
        return Err(Error::DimensionMismatch {
            expected_rows: rows * cols,
            expected_cols: 1,
            rows: v.len(),
            cols: 1,
        });
    }
    Ok(Mat::from_column_slice(rows, cols, v.as_slice()))
}

/// Full singular value decomposition `x = U diag(sigma) V^T`.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `n x n` orthogonal.
    pub u: Mat,
    /// `min(n, m)` singular values in descending order.
    pub sigma: Vec<f64>,
    /// `m x m` orthogonal.
    pub v: Mat,
}

impl Svd {
    /// `U_k diag(d) V^T` using the leading `k = d.len()` columns of `U`.
    pub fn compose(&self, d: &[f64]) -> Mat {
        let k = d.len();
        let mut out = Mat::zeros(self.u.nrows(), self.v.nrows());
        for (i, &di) in d.iter().enumerate().take(k) {
            if di != 0.0 {
                out += di * self.u.column(i) * self.v.column(i).transpose();
            }
        }
        out
    }
}

/// Singular value decomposition with singular values in descending order
/// (ties keep the solver's order), `U` completed to a full orthogonal
/// matrix, and each column of `U` signed so its first nonzero entry is
/// positive (the matching column of `V` flips with it).
pub fn svd(x: &Mat) -> Svd {
    let (n, m) = x.shape();
    if n < m {
        let t = svd(&x.transpose());
        return Svd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        };
    }
    if m == 0 {
        return Svd {
            u: Mat::identity(n, n),
            sigma: Vec::new(),
            v: Mat::zeros(0, 0),
        };
    }
    let dec = x.clone().svd_unordered(true, true);
    let uu = dec.u.expect("left vectors requested");
    let vt = dec.v_t.expect("right vectors requested");
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| dec.singular_values[j].total_cmp(&dec.singular_values[i]));
    let sigma: Vec<f64> = order
        .iter()
        .map(|&i| dec.singular_values[i].max(0.0))
        .collect();
    let mut u = Mat::zeros(n, n);
    let mut v = Mat::zeros(m, m);
    for (k, &i) in order.iter().enumerate() {
        u.set_column(k, &uu.column(i));
        v.set_column(k, &vt.row(i).transpose());
    }
    complete_basis(&mut u, m);
    for k in 0..n {
        if first_nonzero_negative(&u, k) {
            let c = -u.column(k);
            u.set_column(k, &c);
            if k < m {
                let c = -v.column(k);
                v.set_column(k, &c);
            }
        }
    }
    Svd { u, sigma, v }
}

/// Singular values only, descending.
pub fn singular_values(x: &Mat) -> Vec<f64> {
    let mut s: Vec<f64> = x
        .clone()
        .svd_unordered(false, false)
        .singular_values
        .iter()
        .map(|v| v.max(0.0))
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn first_nonzero_negative(u: &Mat, k: usize) -> bool {
    for i in 0..u.nrows() {
        let v = u[(i, k)];
        if v.abs() > 1e-12 {
            return v < 0.0;
        }
    }
    false
}

/// Fills columns `filled..n` of `u` with an orthonormal complement of the
/// first `filled` columns, by Gram-Schmidt on the standard basis.
fn complete_basis(u: &mut Mat, filled: usize) {
    let n = u.nrows();
    let mut k = filled;
    let mut e = 0;
    while k < n && e < n {
        let mut c = DVector::<f64>::zeros(n);
        c[e] = 1.0;
        for _ in 0..2 {
            for j in 0..k {
                let d = u.column(j).dot(&c);
                c -= d * u.column(j);
            }
        }
        let norm = c.norm();
        if norm > 1e-8 {
            u.set_column(k, &(c / norm));
            k += 1;
        }
        e += 1;
    }
}

/// Haar-distributed random orthogonal `k x k` matrix.
pub fn haar_orthogonal<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Mat {
    let g = standard_normal(k, k, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            let c = -q.column(j);
            q.set_column(j, &c);
        }
    }
    q
}

/// `n x m` matrix with `diag(sigma)` in its top block and zeros elsewhere.
pub fn diag_embedded(n: usize, m: usize, sigma: &[f64]) -> Mat {
    let mut x = Mat::zeros(n, m);
    for (i, &s) in sigma.iter().enumerate().take(n.min(m)) {
        x[(i, i)] = s;
    }
    x
}
