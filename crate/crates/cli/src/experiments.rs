//! Experiment runners: wire a validated config into the numerical
//! modules, write plot-ready CSV artifacts plus a summary record, and
//! finish with a run manifest.
//!
//! All computation happens before any file is touched, so a failing
//! run leaves no partial output.  Every artifact is written atomically
//! (temporary file in the target directory, then rename).  CSV bodies
//! depend only on config and seed; wall-clock data lives exclusively
//! in the manifest.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use eigenlab_core::domain::{boundary_csv, boundary_slopes_vector, extremal_check, DomainPath};
use eigenlab_core::eigen::{
    group_multiplets, solve_eigen_with, spectrum_to_csv, Spectrum, MULTIPLET_REL_TOL,
};
use eigenlab_core::fields::{MetricField, ScalarField};
use eigenlab_core::mesh::Mesh;
use eigenlab_core::operator::OperatorPair;
use eigenlab_core::ricci::{blowup_probe, eigen_along_flow, FemOptions, FlowOptions, Monotonicity};
use eigenlab_core::splitting::splitting_experiment;
use eigenlab_core::variation::{
    fd_slopes, hadamard_slopes, EigenProblem, MetricPath, SlopeReport, TensorFamily,
};

use crate::config::{CheckSpec, ExpectSpec, ExperimentConfig, ExperimentKind};
use crate::error::{io_err, CliError, Result};

/// Record of one completed run; `artifacts` are file names relative to
/// the manifest's own directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config_sha256: String,
    pub tool_version: String,
    pub seed: u64,
    pub started_unix_ms: u64,
    pub wall_ms: u64,
    pub artifacts: Vec<String>,
}

/// One pass/fail line of the summary record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SummaryRow {
    pub metric: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// The machine-readable outcome the report command aggregates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub experiment: String,
    pub rows: Vec<SummaryRow>,
}

struct Artifact {
    name: String,
    body: String,
}

/// Executes the configured experiment and writes all outputs under
/// `out_dir`.  Returns the manifest along with the path it was written
/// to.
pub fn run_config(
    cfg: &ExperimentConfig,
    raw_config: &[u8],
    out_dir: &Path,
) -> Result<(RunManifest, PathBuf)> {
    cfg.validate()?;
    let started_unix_ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0);
    let clock = Instant::now();

    let (artifacts, rows) = match cfg.experiment {
        ExperimentKind::Spectrum => run_spectrum(cfg)?,
        ExperimentKind::VaryMetric => run_vary_metric(cfg)?,
        ExperimentKind::VaryDomain => run_vary_domain(cfg)?,
        ExperimentKind::Split => run_split(cfg)?,
        ExperimentKind::ExtremalCheck => run_extremal(cfg)?,
        ExperimentKind::RicciFlow => run_ricci(cfg)?,
    };

    let summary = RunSummary {
        experiment: cfg.experiment.name().to_string(),
        rows,
    };
    let summary_json = to_pretty_json(&summary)?;

    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let mut names = Vec::new();
    for a in &artifacts {
        write_atomic(out_dir, &a.name, a.body.as_bytes())?;
        names.push(a.name.clone());
    }
    write_atomic(out_dir, "summary.json", summary_json.as_bytes())?;
    names.push("summary.json".to_string());

    let manifest = RunManifest {
        experiment: cfg.experiment.name().to_string(),
        config_sha256: sha256_hex(raw_config),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        started_unix_ms,
        wall_ms: clock.elapsed().as_millis() as u64,
        artifacts: names,
    };
    let manifest_json = to_pretty_json(&manifest)?;
    write_atomic(out_dir, "manifest.json", manifest_json.as_bytes())?;
    Ok((manifest, out_dir.join("manifest.json")))
}

fn to_pretty_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Config(format!("serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let mut tmp = tempfile::Builder::new()
        .prefix(".tmp-")
        .tempfile_in(dir)
        .map_err(|e| io_err(dir, e))?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.flush())
        .map_err(|e| io_err(tmp.path(), e))?;
    let dest = dir.join(name);
    tmp.persist(&dest).map_err(|e| io_err(&dest, e.error))?;
    Ok(())
}

/// Everything a mesh-based experiment starts from.
struct Workbench {
    mesh: Mesh,
    g: MetricField,
    eta: ScalarField,
    family: TensorFamily,
}

impl Workbench {
    fn build(cfg: &ExperimentConfig) -> Result<Workbench> {
        let mesh = cfg
            .domain
            .as_ref()
            .expect("validated")
            .build()?;
        let g = MetricField::flat(&mesh);
        let eta = cfg.fields.eta.build(&mesh);
        let family = cfg.fields.family.build(&mesh);
        Ok(Workbench {
            mesh,
            g,
            eta,
            family,
        })
    }

    fn problem(&self, cfg: &ExperimentConfig) -> EigenProblem<'_> {
        EigenProblem {
            mesh: &self.mesh,
            g: &self.g,
            family: &self.family,
            eta: &self.eta,
            bc: cfg.fields.bc.to_core(),
        }
    }
}

fn solve(
    cfg: &ExperimentConfig,
    problem: &EigenProblem,
    k: usize,
) -> Result<(OperatorPair, Spectrum)> {
    let op = problem.operator()?;
    let spectrum = solve_eigen_with(&op, &cfg.solver.options(k))?;
    Ok((op, spectrum))
}

/// Solve window: enough pairs for the requested cluster plus a guard
/// band for branch matching, never less than the configured `k`.
fn window(cfg: &ExperimentConfig, cluster: &[usize]) -> usize {
    let hi = cluster.iter().copied().max().unwrap_or(0);
    cfg.solver.k.max(hi + 3)
}

fn run_spectrum(cfg: &ExperimentConfig) -> Result<(Vec<Artifact>, Vec<SummaryRow>)> {
    let wb = Workbench::build(cfg)?;
    let problem = wb.problem(cfg);
    let (_op, spectrum) = solve(cfg, &problem, cfg.solver.k)?;
    let clusters = group_multiplets(&spectrum.lambdas, MULTIPLET_REL_TOL);
    let csv = spectrum_to_csv(&spectrum, &clusters);

    let check = cfg.check();
    let mut rows = vec![SummaryRow {
        metric: "max_residual".into(),
        value: spectrum.residuals.iter().cloned().fold(0.0, f64::max),
        tolerance: cfg.solver.residual_target,
        pass: spectrum
            .residuals
            .iter()
            .all(|r| *r <= cfg.solver.residual_target),
    }];
    if let Some(reference) = &check.reference {
        if reference.len() > spectrum.k() {
            return Err(CliError::Config(format!(
                "check.reference lists {} values but solver.k is {}",
                reference.len(),
                spectrum.k()
            )));
        }
        let tol = check.tolerance.unwrap_or(5e-3);
        let mut worst = 0.0_f64;
        for (i, r) in reference.iter().enumerate() {
            let denom = r.abs().max(1e-12);
            worst = worst.max((spectrum.lambdas[i] - r).abs() / denom);
        }
        rows.push(SummaryRow {
            metric: "max_rel_err_vs_reference".into(),
            value: worst,
            tolerance: tol,
            pass: worst <= tol,
        });
    }
    Ok((
        vec![Artifact {
            name: "spectrum.csv".into(),
            body: csv,
        }],
        rows,
    ))
}

fn slope_rows(report: &SlopeReport, check: &CheckSpec) -> Vec<SummaryRow> {
    let tol = check.tolerance.unwrap_or(1e-2);
    let worst = report.rel_err.iter().cloned().fold(0.0, f64::max);
    vec![SummaryRow {
        metric: "max_rel_err_vs_fd".into(),
        value: worst,
        tolerance: tol,
        pass: worst <= tol,
    }]
}

fn run_vary_metric(cfg: &ExperimentConfig) -> Result<(Vec<Artifact>, Vec<SummaryRow>)> {
    let wb = Workbench::build(cfg)?;
    let problem = wb.problem(cfg);
    let cluster = cfg.cluster.as_ref().expect("validated");
    let (op, spectrum) = solve(cfg, &problem, window(cfg, cluster))?;
    let var = cfg
        .variation
        .as_ref()
        .expect("validated")
        .build_metric(&wb.mesh, &wb.g, cfg.seed);
    let predicted = hadamard_slopes(&problem, &op, &spectrum, cluster, &var)?;
    let path = MetricPath {
        problem: &problem,
        var: &var,
    };
    let fd = fd_slopes(
        &path,
        cluster,
        &cfg.schedule(),
        &cfg.solver.options(window(cfg, cluster)),
    )?;
    let report = SlopeReport::build(&predicted, &fd);
    Ok((
        vec![Artifact {
            name: "slopes.csv".into(),
            body: report.to_csv(),
        }],
        slope_rows(&report, &cfg.check()),
    ))
}

fn run_vary_domain(cfg: &ExperimentConfig) -> Result<(Vec<Artifact>, Vec<SummaryRow>)> {
    let wb = Workbench::build(cfg)?;
    let problem = wb.problem(cfg);
    let cluster = cfg.cluster.as_ref().expect("validated");
    let (op, spectrum) = solve(cfg, &problem, window(cfg, cluster))?;
    let v = cfg
        .variation
        .as_ref()
        .expect("validated")
        .build_domain(&wb.mesh, cfg.seed);
    let predicted = boundary_slopes_vector(&problem, &op, &spectrum, cluster, &v)?;
    let path = DomainPath {
        problem: &problem,
        v: &v,
    };
    let fd = fd_slopes(
        &path,
        cluster,
        &cfg.schedule(),
        &cfg.solver.options(window(cfg, cluster)),
    )?;
    let report = SlopeReport::build(&predicted, &fd);
    Ok((
        vec![Artifact {
            name: "slopes.csv".into(),
            body: report.to_csv(),
        }],
        slope_rows(&report, &cfg.check()),
    ))
}

fn run_split(cfg: &ExperimentConfig) -> Result<(Vec<Artifact>, Vec<SummaryRow>)> {
    let wb = Workbench::build(cfg)?;
    let problem = wb.problem(cfg);
    let cluster = cfg.cluster.as_ref().expect("validated");
    let split = cfg.split.as_ref().expect("validated");
    let (op, spectrum) = solve(cfg, &problem, window(cfg, cluster))?;
    let stats = splitting_experiment(
        &problem,
        &op,
        &spectrum,
        cluster,
        split.mode.to_core(),
        split.trials,
        cfg.seed,
    )?;
    let fraction = stats.fraction.unwrap_or(0.0);
    let min_fraction = cfg.check().min_fraction.unwrap_or(0.9);
    let rows = vec![SummaryRow {
        metric: "split_fraction".into(),
        value: fraction,
        tolerance: min_fraction,
        pass: fraction >= min_fraction,
    }];
    Ok((
        vec![Artifact {
            name: "splits.csv".into(),
            body: stats.to_csv(),
        }],
        rows,
    ))
}

fn run_extremal(cfg: &ExperimentConfig) -> Result<(Vec<Artifact>, Vec<SummaryRow>)> {
    let wb = Workbench::build(cfg)?;
    let problem = wb.problem(cfg);
    let indices = cfg.cluster.clone().unwrap_or_else(|| vec![0]);
    let hi = indices.iter().copied().max().unwrap_or(0);
    let (op, spectrum) = solve(cfg, &problem, cfg.solver.k.max(hi + 1))?;
    let check = cfg.check();
    let threshold = check.ratio_threshold.unwrap_or(0.02);
    let expect = check.expect.unwrap_or(ExpectSpec::Below);
    let mut artifacts = Vec::new();
    let mut rows = Vec::new();
    for &k in &indices {
        let report = extremal_check(&problem, &op, &spectrum, k)?;
        artifacts.push(Artifact {
            name: format!("profile_{k}.csv"),
            body: boundary_csv(&wb.mesh, &wb.g, &report.values),
        });
        let pass = match expect {
            ExpectSpec::Below => report.deviation_ratio <= threshold,
            ExpectSpec::Above => report.deviation_ratio >= threshold,
        };
        rows.push(SummaryRow {
            metric: format!("deviation_ratio_{k}"),
            value: report.deviation_ratio,
            tolerance: threshold,
            pass,
        });
    }
    Ok((artifacts, rows))
}

fn run_ricci(cfg: &ExperimentConfig) -> Result<(Vec<Artifact>, Vec<SummaryRow>)> {
    let flow = cfg.flow.as_ref().expect("validated").build();
    let family = cfg.fields.family.build_for_flow()?;
    let grid = cfg.flow_grid.as_ref().expect("validated");
    let levels = cfg.levels.as_ref().expect("validated");
    let opts = FlowOptions {
        fem: cfg
            .fem_subdivisions
            .map(|subdivisions| FemOptions { subdivisions }),
    };
    let trace = eigen_along_flow(&flow, &family, levels, grid, &opts)?;

    let check = cfg.check();
    let mut artifacts = vec![Artifact {
        name: "trace.csv".into(),
        body: trace.to_csv(),
    }];
    let mut worst = 0.0_f64;
    for s in &trace.series {
        for i in 0..grid.len() {
            let denom = 1.0 + s.primes_exact[i].abs();
            worst = worst.max((s.primes_pred[i] - s.primes_exact[i]).abs() / denom);
        }
    }
    let rate_tol = check.tolerance.unwrap_or(1e-9);
    let mut rows = vec![SummaryRow {
        metric: "max_rate_rel_err".into(),
        value: worst,
        tolerance: rate_tol,
        pass: worst <= rate_tol,
    }];
    let verdict_rank = match trace.verdict {
        Monotonicity::StrictlyIncreasing => 2.0,
        Monotonicity::NonDecreasing => 1.0,
        Monotonicity::NotMonotone => 0.0,
    };
    rows.push(SummaryRow {
        metric: "verdict_rank".into(),
        value: verdict_rank,
        tolerance: 1.0,
        pass: verdict_rank >= 1.0,
    });
    let fem_worst = trace
        .series
        .iter()
        .filter_map(|s| s.fem_rel_err)
        .fold(f64::NAN, f64::max);
    if fem_worst.is_finite() {
        let fem_tol = 1e-2;
        rows.push(SummaryRow {
            metric: "fem_rel_err".into(),
            value: fem_worst,
            tolerance: fem_tol,
            pass: fem_worst <= fem_tol,
        });
    }

    if let Some(b) = &cfg.blowup {
        let probe = blowup_probe(&flow, &family, b.level, &b.times, b.epsilon)?;
        let mut csv = String::from("t,lambda,slope,slope_bound,product\n");
        for i in 0..probe.times.len() {
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                probe.times[i],
                probe.lambdas[i],
                probe.slopes[i],
                probe.slope_bounds[i],
                probe.products[i]
            );
        }
        artifacts.push(Artifact {
            name: "blowup.csv".into(),
            body: csv,
        });
        rows.push(SummaryRow {
            metric: "blowup_product_rel_spread".into(),
            value: probe.product_rel_spread,
            tolerance: 1e-10,
            pass: probe.product_rel_spread <= 1e-10,
        });
    }
    Ok((artifacts, rows))
}
