use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use svshrink::estimators::{estimate, EstimatorId};
use svshrink::matnorm::singular_values;
use svshrink::priors::{check_superharmonic, GradScheme, SuperharmonicReport};
use svshrink::riskbench::{
    dominance, preset, run_experiment, summary, ExperimentKind, RiskExperiment,
};
use svshrink::zonal::log_hyp1f1_matrix;
use svshrink::{ModelSpec, PriorKind, SeriesControl};

mod matrix_file;

use matrix_file::{parse_matrix, rows_of};

#[derive(Parser)]
#[command(
    name = "svshrink",
    version,
    about = "Singular value shrinkage for matrix-variate Normal means"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the mean matrix from an observed matrix file.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo risk experiment and write its CSV table.
    Bench(BenchArgs),
    /// Check (super)harmonicity of a prior at random points.
    CheckSuperharmonic(SuperArgs),
    /// Evaluate the confluent hypergeometric function of matrix argument.
    Hypergeom(HypergeomArgs),
}

#[derive(Args)]
struct SeriesArgs {
    /// Largest partition weight visited by the zonal series.
    #[arg(long)]
    max_order: Option<usize>,
    /// Relative truncation tolerance of the zonal series.
    #[arg(long)]
    rel_tol: Option<f64>,
}

impl SeriesArgs {
    fn control(&self, base: SeriesControl) -> Result<SeriesControl> {
        Ok(SeriesControl::new(
            self.max_order.unwrap_or(base.max_order),
            self.rel_tol.unwrap_or(base.rel_tol),
        )?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Entrywise,
    SingularValue,
}

impl From<SchemeArg> for GradScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Entrywise => GradScheme::Entrywise,
            SchemeArg::SingularValue => GradScheme::SingularValue,
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    /// Matrix file: `n m` header, then n rows of m numbers.
    input: PathBuf,
    /// Expected number of rows; checked against the file.
    #[arg(long)]
    n: Option<usize>,
    /// Expected number of columns; checked against the file.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    v1: f64,
    #[arg(long, default_value_t = 1.0)]
    v2: f64,
    /// Comma-separated estimator labels.
    #[arg(long, default_value = "mle", value_delimiter = ',')]
    method: Vec<String>,
    #[arg(long, value_enum, default_value = "entrywise")]
    scheme: SchemeArg,
    #[command(flatten)]
    series: SeriesArgs,
    /// Output JSON path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Named configuration, `fig1` to `fig8`.
    #[arg(long, conflicts_with = "experiment")]
    preset: Option<String>,
    /// Experiment description in JSON.
    #[arg(long)]
    experiment: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    #[command(flatten)]
    series: SeriesArgs,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Fail unless the shrinkage method beats the baseline by this many
    /// paired standard errors at every grid point.
    #[arg(long)]
    assert_dominance: Option<f64>,
}

#[derive(Args)]
struct SuperArgs {
    /// `svs`, `stein`, `uniform` or `regularized:K`.
    #[arg(long, default_value = "svs")]
    prior: String,
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 100)]
    points: usize,
    /// Points are drawn as `scale * N(0, I, I)`.
    #[arg(long, default_value_t = 2.0)]
    scale: f64,
    #[arg(long, default_value_t = 200)]
    sphere_draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSON path for the full report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HypergeomArgs {
    #[arg(long, allow_hyphen_values = true)]
    a: f64,
    #[arg(long, allow_hyphen_values = true)]
    b: f64,
    /// Comma-separated eigenvalues of the argument.
    #[arg(
        long,
        value_delimiter = ',',
        required = true,
        allow_hyphen_values = true
    )]
    eig: Vec<f64>,
    #[command(flatten)]
    series: SeriesArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct MethodReport {
    method: String,
    estimate: Vec<Vec<f64>>,
    singular_values: Vec<f64>,
    converged: Option<bool>,
    evaluations: Option<usize>,
}

#[derive(Serialize)]
struct EstimateOutput {
    n: usize,
    m: usize,
    v1: f64,
    input_singular_values: Vec<f64>,
    reports: Vec<MethodReport>,
}

#[derive(Serialize)]
struct HypergeomOutput {
    a: f64,
    b: f64,
    eigenvalues: Vec<f64>,
    value: f64,
    log_abs_value: f64,
    sign: f64,
    converged: bool,
    terms_used: usize,
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_estimate(a: &EstimateArgs) -> Result<bool> {
    let text =
        fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let x = parse_matrix(&text).with_context(|| format!("parsing {}", a.input.display()))?;
    let (n, m) = x.shape();
    if a.n.is_some_and(|v| v != n) || a.m.is_some_and(|v| v != m) {
        bail!(
            "matrix is {n}x{m} but --n/--m request {}x{}",
            a.n.unwrap_or(n),
            a.m.unwrap_or(m)
        );
    }
    let spec = ModelSpec::new(n, m, a.v1, a.v2)?;
    let ctrl = a.series.control(SeriesControl::default())?;
    let ids: Vec<EstimatorId> = a
        .method
        .iter()
        .map(|s| s.parse().map_err(|e| anyhow!("{e}")))
        .collect::<Result<_>>()?;
    let mut ok = true;
    let mut reports = Vec::new();
    for id in ids {
        let r = estimate(id, &spec, &x, a.v1, &ctrl, a.scheme.into())?;
        if let Some(d) = r.diagnostics {
            if !d.converged {
                ok = false;
                eprintln!(
                    "{id}: series did not converge within max order {}",
                    ctrl.max_order
                );
            }
        }
        reports.push(MethodReport {
            method: id.label().to_string(),
            singular_values: singular_values(&r.estimate),
            estimate: rows_of(&r.estimate),
            converged: r.diagnostics.map(|d| d.converged),
            evaluations: r.diagnostics.map(|d| d.evaluations),
        });
    }
    let out = EstimateOutput {
        n,
        m,
        v1: a.v1,
        input_singular_values: singular_values(&x),
        reports,
    };
    write_or_print(a.out.as_deref(), &serde_json::to_string_pretty(&out)?)?;
    Ok(ok)
}

fn cmd_bench(a: &BenchArgs) -> Result<bool> {
    let mut exp: RiskExperiment = match (&a.preset, &a.experiment) {
        (Some(name), None) => preset(name, a.replications.unwrap_or(2000), a.seed.unwrap_or(1))?,
        (None, Some(path)) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        _ => bail!("exactly one of --preset and --experiment is required"),
    };
    if let Some(r) = a.replications {
        exp.replications = r;
    }
    if let Some(s) = a.seed {
        exp.master_seed = s;
    }
    exp.series = a.series.control(exp.series)?;
    let table = run_experiment(&exp)?;
    fs::write(&a.out, table.to_csv()).with_context(|| format!("writing {}", a.out.display()))?;
    for line in summary(&table) {
        println!("{line}");
    }
    let mut ok = !table.has_flags();
    if !ok {
        eprintln!("some rows are flagged for series nonconvergence");
    }
    let (baseline, shrink) = match exp.kind {
        ExperimentKind::Estimation => ("mle", "svs-bayes"),
        ExperimentKind::Prediction => ("uniform", "svs"),
    };
    if let Some(margin) = a.assert_dominance {
        let rows = dominance(&table, baseline, shrink, margin)
            .ok_or_else(|| anyhow!("dominance check needs methods '{baseline}' and '{shrink}'"))?;
        for r in &rows {
            println!(
                "dominance {shrink} vs {baseline} at {}: gain {:.6} se {:.6} {}",
                r.grid_value,
                r.difference,
                r.std_error,
                if r.passed { "PASS" } else { "FAIL" }
            );
        }
        ok &= rows.iter().all(|r| r.passed);
    }
    Ok(ok)
}

fn parse_prior(s: &str) -> Result<PriorKind> {
    Ok(match s {
        "svs" => PriorKind::Svs,
        "stein" => PriorKind::Stein,
        "uniform" => PriorKind::Uniform,
        _ => {
            let k = s
                .strip_prefix("regularized:")
                .and_then(|k| k.parse().ok())
                .ok_or_else(|| anyhow!("unknown prior '{s}'"))?;
            PriorKind::RegularizedSvs(k)
        }
    })
}

fn cmd_check_superharmonic(a: &SuperArgs) -> Result<bool> {
    let spec = ModelSpec::unit(a.n, a.m)?;
    let kind = parse_prior(&a.prior)?;
    let report: SuperharmonicReport =
        check_superharmonic(&kind, &spec, a.points, a.scale, a.seed, a.sphere_draws)?;
    let failed = report.points.iter().filter(|p| !p.passed).count();
    for note in &report.excluded {
        eprintln!("excluded: {note}");
    }
    println!(
        "{} prior, expected {:?}: {} points checked, {} failed, {} excluded",
        report.prior,
        report.expectation,
        report.points.len(),
        failed,
        report.excluded.len()
    );
    if let Some(p) = &a.out {
        fs::write(p, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(report.passed())
}

fn cmd_hypergeom(a: &HypergeomArgs) -> Result<bool> {
    let ctrl = a.series.control(SeriesControl::default())?;
    let f = log_hyp1f1_matrix(a.a, a.b, &a.eig, &ctrl)?;
    let out = HypergeomOutput {
        a: a.a,
        b: a.b,
        eigenvalues: a.eig.clone(),
        value: f.sign * f.log_abs.exp(),
        log_abs_value: f.log_abs,
        sign: f.sign,
        converged: f.converged,
        terms_used: f.terms_used,
    };
    write_or_print(a.out.as_deref(), &serde_json::to_string_pretty(&out)?)?;
    if !f.converged {
        eprintln!(
            "series did not converge within max order {}",
            ctrl.max_order
        );
    }
    Ok(f.converged)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Bench(a) => cmd_bench(a),
        Command::CheckSuperharmonic(a) => cmd_check_superharmonic(a),
        Command::Hypergeom(a) => cmd_hypergeom(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
