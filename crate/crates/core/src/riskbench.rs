//! Monte Carlo risk experiments over a grid of singular values of the true
//! mean, with per-replication seeding and common random numbers across the
//! compared methods.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{bayes_estimate_with, estimate, frobenius_loss, EstimatorId};
use crate::matnorm::{diag_embedded, rng_stream, sample_around, Mat, MeanMatrix, ModelSpec};
use crate::predictive::{kl_loss_at, PredictiveKind};
use crate::priors::{
    default_laplacian_step, fd_laplacian, log_marginal_svs_checked, GradScheme, PriorKind,
};
use crate::regression::{orthonormal_design, reduce, RegressionProblem};
use crate::stats::{mean, mean_and_stderr};
use crate::zonal::SeriesControl;

pub const CSV_HEADER: &str = "grid_value,method,mean_risk,std_error,replications,flags";

/// Minimum number of replications accepted by an experiment.
pub const MIN_REPLICATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Frobenius loss of point estimators.
    Estimation,
    /// Kullback-Leibler loss of predictive densities.
    Prediction,
}

fn default_replications() -> usize {
    10_000
}

/// Description of a risk experiment; also the JSON input format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskExperiment {
    pub spec: ModelSpec,
    pub kind: ExperimentKind,
    /// One entry per singular value; the swept position is ignored and may be
    /// `null`.
    pub fixed_singulars: Vec<Option<f64>>,
    /// 1-based position of the swept singular value.
    pub swept_index: usize,
    pub grid: Vec<f64>,
    pub methods: Vec<String>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub grad_scheme: GradScheme,
    #[serde(default)]
    pub series: SeriesControl,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Method {
    Estimator(EstimatorId),
    Predictive(PredictiveKind),
}

impl RiskExperiment {
    pub fn validate(&self) -> Result<()> {
        let m = self.spec.m();
        if self.fixed_singulars.len() != m {
            return Err(Error::InvalidParameter(format!(
                "expected {m} singular values, got {}",
                self.fixed_singulars.len()
            )));
        }
        if self.swept_index == 0 || self.swept_index > m {
            return Err(Error::InvalidParameter(format!(
                "swept index must lie in 1..={m}, got {}",
                self.swept_index
            )));
        }
        for (i, s) in self.fixed_singulars.iter().enumerate() {
            if i + 1 == self.swept_index {
                continue;
            }
            match s {
                Some(v) if *v >= 0.0 && v.is_finite() => {}
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "singular value {} must be a nonnegative number",
                        i + 1
                    )))
                }
            }
        }
        if self.grid.is_empty() || self.grid.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(Error::InvalidParameter(
                "grid values must be nonnegative".into(),
            ));
        }
        if self.replications < MIN_REPLICATIONS {
            return Err(Error::InvalidParameter(format!(
                "at least {MIN_REPLICATIONS} replications required, got {}",
                self.replications
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("no methods requested".into()));
        }
        self.resolve_methods().map(|_| ())
    }

    fn resolve_methods(&self) -> Result<Vec<Method>> {
        self.methods
            .iter()
            .map(|s| match self.kind {
                ExperimentKind::Estimation => s.parse().map(Method::Estimator),
                ExperimentKind::Prediction => s.parse().map(Method::Predictive),
            })
            .collect()
    }

    /// Singular values of the true mean at a grid value.
    pub fn singulars_at(&self, grid_value: f64) -> Vec<f64> {
        self.fixed_singulars
            .iter()
            .enumerate()
            .map(|(i, s)| {
                if i + 1 == self.swept_index {
                    grid_value
                } else {
                    s.unwrap_or(0.0)
                }
            })
            .collect()
    }
}

/// `diag(sigma)` in the top block of an `n x m` matrix.
pub fn mean_from_singulars(spec: &ModelSpec, sigma: &[f64]) -> Result<MeanMatrix> {
    if sigma.len() != spec.m() {
        return Err(Error::InvalidParameter(format!(
            "expected {} singular values, got {}",
            spec.m(),
            sigma.len()
        )));
    }
    if sigma.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::InvalidParameter(
            "singular values must be nonnegative".into(),
        ));
    }
    MeanMatrix::new(spec, diag_embedded(spec.n(), spec.m(), sigma))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub grid_value: f64,
    pub method: String,
    pub mean_risk: f64,
    pub std_error: f64,
    pub replications: usize,
    /// Empty, or `nonconverged=<count>` when the series hit its order cap in
    /// some replications.
    pub flags: String,
}

/// Risk estimates, plus per-replication losses when produced by a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RiskTable {
    pub rows: Vec<RiskRow>,
    losses: BTreeMap<(usize, String), Vec<f64>>,
    grid: Vec<f64>,
}

impl RiskTable {
    pub fn row(&self, grid_value: f64, method: &str) -> Option<&RiskRow> {
        self.rows
            .iter()
            .find(|r| r.grid_value == grid_value && r.method == method)
    }

    /// Per-replication losses at grid position `grid_index`.
    pub fn losses(&self, grid_index: usize, method: &str) -> Option<&[f64]> {
        self.losses
            .get(&(grid_index, method.to_string()))
            .map(Vec::as_slice)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Mean and standard error of the per-replication difference
    /// `loss(a) - loss(b)` under common random numbers.
    pub fn paired_difference(&self, grid_index: usize, a: &str, b: &str) -> Option<(f64, f64)> {
        let la = self.losses(grid_index, a)?;
        let lb = self.losses(grid_index, b)?;
        let d: Vec<f64> = la.iter().zip(lb).map(|(x, y)| x - y).collect();
        Some(mean_and_stderr(&d))
    }

    pub fn has_flags(&self) -> bool {
        self.rows.iter().any(|r| !r.flags.is_empty())
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.rows.is_empty() {
            w.write_record(CSV_HEADER.split(','))
                .expect("writing to memory cannot fail");
        }
        for r in &self.rows {
            w.serialize(r).expect("writing to memory cannot fail");
        }
        let bytes = w.into_inner().expect("writing to memory cannot fail");
        String::from_utf8(bytes).expect("CSV output is UTF-8")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let header = rd
            .headers()
            .map_err(|e| Error::InvalidParameter(format!("bad CSV header: {e}")))?;
        if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
            return Err(Error::InvalidParameter(format!(
                "unexpected CSV header '{}'",
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let rows: Vec<RiskRow> = rd
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidParameter(format!("bad CSV row: {e}")))?;
        let mut grid: Vec<f64> = Vec::new();
        for r in &rows {
            if !grid.contains(&r.grid_value) {
                grid.push(r.grid_value);
            }
        }
        Ok(Self {
            rows,
            losses: BTreeMap::new(),
            grid,
        })
    }
}

/// Stream index of replication `rep` at grid position `grid_index`.
pub fn stream_id(grid_index: usize, rep: usize) -> u64 {
    ((grid_index as u64) << 32) | rep as u64
}

/// Runs the experiment according to its kind.
pub fn run_experiment(exp: &RiskExperiment) -> Result<RiskTable> {
    match exp.kind {
        ExperimentKind::Estimation => run_estimation_experiment(exp),
        ExperimentKind::Prediction => run_prediction_experiment(exp),
    }
}

pub fn run_estimation_experiment(exp: &RiskExperiment) -> Result<RiskTable> {
    if exp.kind != ExperimentKind::Estimation {
        return Err(Error::InvalidParameter(
            "not an estimation experiment".into(),
        ));
    }
    run(exp)
}

pub fn run_prediction_experiment(exp: &RiskExperiment) -> Result<RiskTable> {
    if exp.kind != ExperimentKind::Prediction {
        return Err(Error::InvalidParameter(
            "not a prediction experiment".into(),
        ));
    }
    run(exp)
}

fn replication(
    exp: &RiskExperiment,
    methods: &[Method],
    truth: &Mat,
    grid_index: usize,
    rep: usize,
) -> Result<Vec<(f64, bool)>> {
    let spec = &exp.spec;
    let mut rng = rng_stream(exp.master_seed, stream_id(grid_index, rep));
    let y = sample_around(truth, spec.v1(), &mut rng);
    let y_future = match exp.kind {
        ExperimentKind::Prediction => Some(sample_around(truth, spec.v2(), &mut rng)),
        ExperimentKind::Estimation => None,
    };
    methods
        .iter()
        .map(|m| match (m, &y_future) {
            (Method::Estimator(id), _) => {
                let r = estimate(*id, spec, &y, spec.v1(), &exp.series, exp.grad_scheme)?;
                let ok = r.diagnostics.is_none_or(|d| d.converged);
                Ok((frobenius_loss(&r.estimate, truth), ok))
            }
            (Method::Predictive(k), Some(yf)) => {
                let v = kl_loss_at(*k, spec, truth, &y, yf, &exp.series)?;
                Ok((v.value, v.converged))
            }
            (Method::Predictive(_), None) => unreachable!("future draw exists for prediction"),
        })
        .collect()
}

fn run(exp: &RiskExperiment) -> Result<RiskTable> {
    exp.validate()?;
    let methods = exp.resolve_methods()?;
    let mut rows = Vec::new();
    let mut losses = BTreeMap::new();
    for (g, &gv) in exp.grid.iter().enumerate() {
        let truth = mean_from_singulars(&exp.spec, &exp.singulars_at(gv))?.into_inner();
        let per_rep: Vec<Vec<(f64, bool)>> = (0..exp.replications)
            .into_par_iter()
            .map(|r| replication(exp, &methods, &truth, g, r))
            .collect::<Result<_>>()?;
        for (k, label) in exp.methods.iter().enumerate() {
            let l: Vec<f64> = per_rep.iter().map(|v| v[k].0).collect();
            let bad = per_rep.iter().filter(|v| !v[k].1).count();
            let (mu, se) = mean_and_stderr(&l);
            rows.push(RiskRow {
                grid_value: gv,
                method: label.clone(),
                mean_risk: mu,
                std_error: se,
                replications: exp.replications,
                flags: if bad == 0 {
                    String::new()
                } else {
                    format!("nonconverged={bad}")
                },
            });
            losses.insert((g, label.clone()), l);
        }
    }
    rows.sort_by(|a, b| {
        a.grid_value
            .total_cmp(&b.grid_value)
            .then_with(|| a.method.cmp(&b.method))
    });
    Ok(RiskTable {
        rows,
        losses,
        grid: exp.grid.clone(),
    })
}

/// `{0, 2, 4, ..., 20}`.
pub fn default_grid() -> Vec<f64> {
    (0..=10).map(|i| 2.0 * i as f64).collect()
}

/// Named experiment configurations `fig1` to `fig8`: estimation for 1-4 and
/// prediction for 5-8, with
///
/// | preset | n | m | fixed            | swept |
/// |--------|---|---|------------------|-------|
/// | 1, 5   | 4 | 2 | s1 = 20          | s2    |
/// | 2, 6   | 4 | 2 | s2 = 0           | s1    |
/// | 3, 7   | 5 | 3 | s1 = 5, s3 = 0   | s2    |
/// | 4, 8   | 5 | 3 | s2 = s3 = 0      | s1    |
pub fn preset(name: &str, replications: usize, master_seed: u64) -> Result<RiskExperiment> {
    let idx: usize = name
        .strip_prefix("fig")
        .and_then(|s| s.parse().ok())
        .filter(|i| (1..=8).contains(i))
        .ok_or_else(|| Error::InvalidParameter(format!("unknown preset '{name}'")))?;
    let kind = if idx <= 4 {
        ExperimentKind::Estimation
    } else {
        ExperimentKind::Prediction
    };
    let (spec, fixed, swept) = match (idx - 1) % 4 {
        0 => (ModelSpec::unit(4, 2)?, vec![Some(20.0), None], 2),
        1 => (ModelSpec::unit(4, 2)?, vec![None, Some(0.0)], 1),
        2 => (ModelSpec::unit(5, 3)?, vec![Some(5.0), None, Some(0.0)], 2),
        _ => (ModelSpec::unit(5, 3)?, vec![None, Some(0.0), Some(0.0)], 1),
    };
    let methods: Vec<String> = match kind {
        ExperimentKind::Estimation => [
            EstimatorId::Mle,
            EstimatorId::EfronMorris,
            EstimatorId::SteinBayes,
            EstimatorId::SvsBayes,
        ]
        .iter()
        .map(|e| e.label().to_string())
        .collect(),
        ExperimentKind::Prediction => PredictiveKind::ALL
            .iter()
            .map(|k| k.label().to_string())
            .collect(),
    };
    let grad_scheme = if spec.m() >= 3 {
        GradScheme::SingularValue
    } else {
        GradScheme::Entrywise
    };
    Ok(RiskExperiment {
        spec,
        kind,
        fixed_singulars: fixed,
        swept_index: swept,
        grid: default_grid(),
        methods,
        replications,
        master_seed,
        grad_scheme,
        series: SeriesControl::default(),
    })
}

/// Both sides of the risk-difference identity for the shrinkage-prior Bayes
/// estimator:
///
/// ```text
/// E||X - M||^2 - E||M^ - M||^2 = v^2 E[||grad log m||^2 - 2 lap(m) / m]
/// ```
///
/// The two sides are estimated from independent draws, so their standard
/// errors combine in quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskIdentity {
    /// Paired Monte Carlo risk difference (left side) with standard error.
    pub risk_difference: (f64, f64),
    /// Monte Carlo mean of the right side with standard error.
    pub unbiased_estimate: (f64, f64),
    pub all_converged: bool,
}

impl RiskIdentity {
    /// `|lhs - rhs|` in units of `sqrt(se_lhs^2 + se_rhs^2)`.
    pub fn discrepancy(&self) -> f64 {
        let (l, sl) = self.risk_difference;
        let (u, su) = self.unbiased_estimate;
        (l - u).abs() / (sl * sl + su * su).sqrt()
    }
}

pub fn risk_identity_check(
    spec: &ModelSpec,
    sigma: &[f64],
    replications: usize,
    master_seed: u64,
    ctrl: &SeriesControl,
) -> Result<RiskIdentity> {
    let truth = mean_from_singulars(spec, sigma)?.into_inner();
    let v = spec.v1();
    let lhs: Vec<(f64, bool)> = (0..replications)
        .into_par_iter()
        .map(|r| -> Result<(f64, bool)> {
            let mut rng = rng_stream(master_seed, stream_id(0, r));
            let x = sample_around(&truth, v, &mut rng);
            let est =
                bayes_estimate_with(&PriorKind::Svs, spec, &x, v, ctrl, GradScheme::Entrywise)?;
            let gain = frobenius_loss(&x, &truth) - frobenius_loss(&est.estimate, &truth);
            Ok((gain, est.diagnostics.is_none_or(|d| d.converged)))
        })
        .collect::<Result<_>>()?;
    let rhs: Vec<(f64, bool)> = (0..replications)
        .into_par_iter()
        .map(|r| -> Result<(f64, bool)> {
            let mut rng = rng_stream(master_seed, stream_id(1, r));
            let x = sample_around(&truth, v, &mut rng);
            let est =
                bayes_estimate_with(&PriorKind::Svs, spec, &x, v, ctrl, GradScheme::Entrywise)?;
            let grad = (&est.estimate - &x) / v;
            let base = log_marginal_svs_checked(spec, &x, v, ctrl)?;
            let ratio = |z: &Mat| {
                log_marginal_svs_checked(spec, z, v, ctrl)
                    .map(|m| (m.value - base.value).exp())
                    .unwrap_or(f64::NAN)
            };
            let lap = fd_laplacian(ratio, &x, default_laplacian_step(&x))?;
            let ok = base.converged && est.diagnostics.is_none_or(|d| d.converged);
            Ok((v * v * (grad.norm_squared() - 2.0 * lap), ok))
        })
        .collect::<Result<_>>()?;
    let l: Vec<f64> = lhs.iter().map(|t| t.0).collect();
    let u: Vec<f64> = rhs.iter().map(|t| t.0).collect();
    Ok(RiskIdentity {
        risk_difference: mean_and_stderr(&l),
        unbiased_estimate: mean_and_stderr(&u),
        all_converged: lhs.iter().chain(&rhs).all(|t| t.1),
    })
}

/// Reduced-rank regression simulation: `B = F G` with `p x r` and `r x q`
/// Gaussian factors, an orthonormal design, and Frobenius risk of the least
/// squares and shrinkage-prior Bayes estimates of `B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedRankConfig {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub rank: usize,
    pub noise_var: f64,
    pub replications: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedRankResult {
    pub mle: (f64, f64),
    pub svs: (f64, f64),
    /// Paired `loss(mle) - loss(svs)`.
    pub difference: (f64, f64),
    pub all_converged: bool,
}

pub fn reduced_rank_experiment(
    cfg: &ReducedRankConfig,
    ctrl: &SeriesControl,
) -> Result<ReducedRankResult> {
    if cfg.rank == 0 || cfg.rank > cfg.q {
        return Err(Error::InvalidParameter(format!(
            "rank must lie in 1..={}",
            cfg.q
        )));
    }
    let spec = ModelSpec::new(cfg.p, cfg.q, cfg.noise_var, cfg.noise_var)?;
    let mut setup = rng_stream(cfg.master_seed, u64::MAX);
    let design = orthonormal_design(cfg.n, cfg.p, &mut setup)?;
    let f = crate::matnorm::standard_normal(cfg.p, cfg.rank, &mut setup);
    let g = crate::matnorm::standard_normal(cfg.rank, cfg.q, &mut setup);
    let b = f * g;
    let signal = &design * &b;
    let base = RegressionProblem::new(
        design.clone(),
        signal.clone(),
        cfg.noise_var,
        design.clone(),
        cfg.noise_var,
    )?;
    let per_rep: Vec<(f64, f64, bool)> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| -> Result<(f64, f64, bool)> {
            let mut rng = rng_stream(cfg.master_seed, stream_id(0, r));
            let y = sample_around(&signal, cfg.noise_var, &mut rng);
            let red = reduce(&base.with_response(y)?)?;
            let est = bayes_estimate_with(
                &PriorKind::Svs,
                &spec,
                &red.y1,
                cfg.noise_var,
                ctrl,
                GradScheme::Entrywise,
            )?;
            Ok((
                frobenius_loss(&red.y1, &b),
                frobenius_loss(&est.estimate, &b),
                est.diagnostics.is_none_or(|d| d.converged),
            ))
        })
        .collect::<Result<_>>()?;
    let mle: Vec<f64> = per_rep.iter().map(|t| t.0).collect();
    let svs: Vec<f64> = per_rep.iter().map(|t| t.1).collect();
    let diff: Vec<f64> = per_rep.iter().map(|t| t.0 - t.1).collect();
    Ok(ReducedRankResult {
        mle: mean_and_stderr(&mle),
        svs: mean_and_stderr(&svs),
        difference: mean_and_stderr(&diff),
        all_converged: per_rep.iter().all(|t| t.2),
    })
}

/// One line per method with its average risk over the grid.
pub fn summary(table: &RiskTable) -> Vec<String> {
    let mut methods: Vec<&str> = table.rows.iter().map(|r| r.method.as_str()).collect();
    methods.sort();
    methods.dedup();
    methods
        .into_iter()
        .map(|m| {
            let v: Vec<f64> = table
                .rows
                .iter()
                .filter(|r| r.method == m)
                .map(|r| r.mean_risk)
                .collect();
            let flagged = table
                .rows
                .iter()
                .filter(|r| r.method == m && !r.flags.is_empty())
                .count();
            format!(
                "{m}: mean risk over grid {:.4} (min {:.4}, max {:.4}), flagged rows {flagged}",
                mean(&v),
                v.iter().cloned().fold(f64::INFINITY, f64::min),
                v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            )
        })
        .collect()
}

/// Per-grid-point comparison of `method` against `baseline`: the paired risk
/// difference `baseline - method` must be at least `margin` standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominanceRow {
    pub grid_value: f64,
    pub difference: f64,
    pub std_error: f64,
    pub passed: bool,
}

pub fn dominance(
    table: &RiskTable,
    baseline: &str,
    method: &str,
    margin: f64,
) -> Option<Vec<DominanceRow>> {
    table
        .grid()
        .iter()
        .enumerate()
        .map(|(g, &gv)| {
            let (d, se) = table.paired_difference(g, baseline, method)?;
            Some(DominanceRow {
                grid_value: gv,
                difference: d,
                std_error: se,
                passed: d >= margin * se,
            })
        })
        .collect()
}
