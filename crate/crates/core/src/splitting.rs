//! Sign classification of coefficient families and Monte-Carlo
//! splitting experiments.
//!
//! The classifier evaluates the splitting-indicator tensor
//! `G = (n-4) T + 2 dF_g(g)` of a coefficient rule `T = F(g)` in
//! nominal dimension `n` and classifies the sign of its generalized
//! eigenvalues against `g` over all cells: definite positive or
//! negative (the condition under which multiple eigenvalues split
//! generically), identically zero, or indefinite.
//!
//! The experiments draw seeded random smooth perturbations (conformal
//! plus shear metric variations, or deformation vector fields), compute
//! first-order branch slopes of a degenerate cluster, and record how
//! often the slopes split the cluster at first order.

use crate::domain::boundary_slopes_vector;
use crate::eigen::Spectrum;
use crate::error::{Error, Result};
use crate::fields::{
    MetricField, ScalarField, ScalarRole, SymTensorField, TensorRole, VectorField,
};
use crate::linalg::SymMat;
use crate::mesh::{Mesh, Topology};
use crate::operator::OperatorPair;
use crate::variation::{hadamard_slopes, EigenProblem, TensorFamily, VariationSpec};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt::Write as _;

/// Sign class of the generalized eigenvalues of `(G, g)` over the mesh.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    Positive,
    Negative,
    IdenticallyZero,
    /// Mixed signs; the witness cell exhibits them.
    Indefinite { witness: usize },
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Classification::Positive => write!(f, "positive"),
            Classification::Negative => write!(f, "negative"),
            Classification::IdenticallyZero => write!(f, "identically-zero"),
            Classification::Indefinite { witness } => {
                write!(f, "indefinite (witness cell {witness})")
            }
        }
    }
}

/// The classifier's output: the tensor itself plus its sign class.
#[derive(Clone, Debug)]
pub struct IndicatorReport {
    pub g_tensor: SymTensorField,
    pub classification: Classification,
    /// Extreme generalized eigenvalues over all cells.
    pub min_eig: f64,
    pub max_eig: f64,
}

/// Evaluates `G = (n-4) T + 2 dF_g(g)` for a coefficient rule in
/// nominal dimension `n` and classifies its sign against the metric.
pub fn splitting_indicator(
    family: &TensorFamily,
    mesh: &Mesh,
    g: &MetricField,
    n: usize,
) -> Result<IndicatorReport> {
    let t = family.tensor(mesh, g)?;
    let rate_at_g = family.tensor_rate(mesh, &g.as_tensor(TensorRole::MetricVariation));
    let factor = n as f64 - 4.0;
    let cells: Vec<SymMat> = (0..mesh.nc())
        .map(|c| t.at(c).scale(factor).axpy(2.0, rate_at_g.at(c)))
        .collect();
    let g_tensor = SymTensorField::from_cells(mesh.dim, TensorRole::Curvature, cells);

    let mut min_eig = f64::INFINITY;
    let mut max_eig = f64::NEG_INFINITY;
    let mut spans: Vec<(f64, f64)> = Vec::with_capacity(mesh.nc());
    for c in 0..mesh.nc() {
        let [lo, hi] = g_tensor.at(c).gen_eigs(g.at(c), mesh.dim);
        min_eig = min_eig.min(lo);
        max_eig = max_eig.max(hi);
        spans.push((lo, hi));
    }
    let scale = min_eig.abs().max(max_eig.abs());
    let ztol = 1e-12 * (1.0 + scale);
    let classification = if scale <= ztol {
        Classification::IdenticallyZero
    } else if min_eig > ztol {
        Classification::Positive
    } else if max_eig < -ztol {
        Classification::Negative
    } else {
        // first cell that blocks both definite classifications
        let witness = spans
            .iter()
            .position(|&(lo, hi)| lo <= ztol && hi >= -ztol && (lo < -ztol || hi > ztol))
            .or_else(|| spans.iter().position(|&(lo, _)| lo <= ztol))
            .unwrap_or(0);
        Classification::Indefinite { witness }
    };
    Ok(IndicatorReport {
        g_tensor,
        classification,
        min_eig,
        max_eig,
    })
}

/// First-order splitting threshold: a slope gap above
/// `SPLIT_GAP_REL_TOL * (1 + |lambda|)` counts as a split.
pub const SPLIT_GAP_REL_TOL: f64 = 1e-6;

/// A cluster whose internal spread exceeds this relative limit is a
/// near-cluster of simple eigenvalues, not a discretized multiplet.
pub const NEAR_CLUSTER_REL_LIMIT: f64 = 1e-3;

/// Which kind of random perturbation a trial draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplittingMode {
    Metric,
    Domain,
}

impl std::fmt::Display for SplittingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SplittingMode::Metric => write!(f, "metric"),
            SplittingMode::Domain => write!(f, "domain"),
        }
    }
}

/// Per-trial and aggregate results of a splitting experiment.
#[derive(Clone, Debug)]
pub struct SplittingStats {
    pub mode: SplittingMode,
    pub trials: usize,
    pub seed: u64,
    pub lambda: f64,
    pub multiplicity: usize,
    pub threshold: f64,
    /// Minimal pairwise slope gap per trial.
    pub gaps: Vec<f64>,
    /// Whether the cluster splits completely (all slopes distinct).
    pub splits: Vec<bool>,
    /// Number of distinct slope groups per trial.
    pub distinct: Vec<usize>,
    /// Fraction of fully split trials; absent when `trials = 0`.
    pub fraction: Option<f64>,
}

impl SplittingStats {
    /// CSV layout `trial,gap,split`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("trial,gap,split\n");
        for i in 0..self.trials {
            let _ = writeln!(out, "{},{},{}", i, self.gaps[i], self.splits[i]);
        }
        out
    }

    /// Fraction of trials with at least two distinct slope groups.
    pub fn partial_fraction(&self) -> Option<f64> {
        if self.trials == 0 {
            return None;
        }
        let k = self.distinct.iter().filter(|&&d| d >= 2).count();
        Some(k as f64 / self.trials as f64)
    }
}

/// Minimal pairwise gap of a sorted slope list (0 for fewer than two).
pub fn min_slope_gap(slopes: &[f64]) -> f64 {
    if slopes.len() < 2 {
        return 0.0;
    }
    slopes
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

fn distinct_groups(slopes: &[f64], tol: f64) -> usize {
    if slopes.is_empty() {
        return 0;
    }
    1 + slopes.windows(2).filter(|w| w[1] - w[0] > tol).count()
}

/// Runs seeded random-perturbation trials against a degenerate cluster
/// and records how often its first-order branch slopes split.
///
/// Deterministic for a given `(seed, trials)`: each trial derives its
/// own RNG stream from the master seed, and trials are aggregated in
/// index order regardless of scheduling.
pub fn splitting_experiment(
    problem: &EigenProblem,
    op: &OperatorPair,
    spectrum: &Spectrum,
    cluster: &[usize],
    mode: SplittingMode,
    trials: usize,
    seed: u64,
) -> Result<SplittingStats> {
    if cluster.len() < 2 {
        return Err(Error::Invalid(
            "splitting experiment needs a cluster of multiplicity >= 2".into(),
        ));
    }
    let lambdas: Vec<f64> = cluster.iter().map(|&i| spectrum.lambdas[i]).collect();
    let lambda = lambdas.iter().sum::<f64>() / lambdas.len() as f64;
    let spread = lambdas.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
    let limit = NEAR_CLUSTER_REL_LIMIT * (1.0 + lambda.abs());
    if spread > limit {
        return Err(Error::NearClusterMisuse { gap: spread, limit });
    }
    let threshold = SPLIT_GAP_REL_TOL * (1.0 + lambda.abs());

    let results: Result<Vec<(f64, usize)>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64 + 1);
            let slopes = match mode {
                SplittingMode::Metric => {
                    let var = random_metric_variation(&mut rng, problem.mesh, problem.g);
                    hadamard_slopes(problem, op, spectrum, cluster, &var)?.slopes
                }
                SplittingMode::Domain => {
                    let v = random_vector_field(&mut rng, problem.mesh);
                    boundary_slopes_vector(problem, op, spectrum, cluster, &v)?.slopes
                }
            };
            Ok((min_slope_gap(&slopes), distinct_groups(&slopes, threshold)))
        })
        .collect();
    let results = results?;

    let gaps: Vec<f64> = results.iter().map(|r| r.0).collect();
    let distinct: Vec<usize> = results.iter().map(|r| r.1).collect();
    let splits: Vec<bool> = gaps.iter().map(|&gp| gp > threshold).collect();
    let fraction = if trials == 0 {
        None
    } else {
        Some(splits.iter().filter(|&&s| s).count() as f64 / trials as f64)
    };
    Ok(SplittingStats {
        mode,
        trials,
        seed,
        lambda,
        multiplicity: cluster.len(),
        threshold,
        gaps,
        splits,
        distinct,
        fraction,
    })
}

// ---------------------------------------------------------------------
// random smooth fields
// ---------------------------------------------------------------------

/// Truncated trigonometric series with decaying coefficients: a
/// reproducible proxy for a generic smooth function.
struct TrigSeries {
    terms: Vec<(f64, f64, f64, f64)>, // (amplitude, kx, ky, phase)
}

impl TrigSeries {
    fn eval(&self, p: &[f64]) -> f64 {
        let y = if p.len() > 1 { p[1] } else { 0.0 };
        self.terms
            .iter()
            .map(|&(a, kx, ky, ph)| a * (kx * p[0] + ky * y + ph).cos())
            .sum()
    }
}

fn domain_extent(mesh: &Mesh) -> [f64; 2] {
    if let Topology::FlatTorus { lx, ly } = mesh.topology {
        return [lx, ly];
    }
    let mut min = [f64::INFINITY; 2];
    let mut max = [f64::NEG_INFINITY; 2];
    for v in 0..mesh.nv() {
        let p = mesh.vertex(v);
        for d in 0..mesh.dim.min(p.len()) {
            min[d] = min[d].min(p[d]);
            max[d] = max[d].max(p[d]);
        }
    }
    [
        (max[0] - min[0]).max(1e-12),
        if mesh.dim > 1 {
            (max[1] - min[1]).max(1e-12)
        } else {
            1.0
        },
    ]
}

fn random_series(rng: &mut ChaCha8Rng, mesh: &Mesh, terms: usize) -> TrigSeries {
    let ext = domain_extent(mesh);
    // periodic topologies need full-period frequencies to stay smooth
    // across the seam
    let base = if mesh.topology.is_closed() {
        std::f64::consts::TAU
    } else {
        std::f64::consts::PI
    };
    let mut out = Vec::with_capacity(terms);
    for _ in 0..terms {
        let p = rng.gen_range(0..=2) as f64;
        let q = if mesh.dim > 1 {
            rng.gen_range(0..=2) as f64
        } else {
            0.0
        };
        let amp = rng.gen_range(-1.0..1.0) / (1.0 + p * p + q * q);
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        out.push((amp, base * p / ext[0], base * q / ext[1], phase));
    }
    TrigSeries { terms: out }
}

/// Random conformal-plus-shear metric variation, scaled so the
/// perturbed metric stays positive-definite for parameters well beyond
/// any finite-difference step.
pub fn random_metric_variation(
    rng: &mut ChaCha8Rng,
    mesh: &Mesh,
    g: &MetricField,
) -> VariationSpec {
    let conf = random_series(rng, mesh, 4);
    let sh1 = random_series(rng, mesh, 3);
    let sh2 = random_series(rng, mesh, 3);
    let cells: Vec<SymMat> = (0..mesh.nc())
        .map(|c| {
            let p = mesh.cell_midpoint_global(c);
            let a = conf.eval(&p);
            let mut h = g.at(c).scale(a);
            if mesh.dim == 2 {
                let b1 = sh1.eval(&p);
                let b2 = sh2.eval(&p);
                h = h.axpy(1.0, &SymMat::new(b1, b2, -b1));
            }
            h
        })
        .collect();
    let mut h = SymTensorField::from_cells(mesh.dim, TensorRole::MetricVariation, cells);
    // normalize the largest generalized eigenvalue against g to 0.3
    let mut worst = 0.0_f64;
    for c in 0..mesh.nc() {
        let [lo, hi] = h.at(c).gen_eigs(g.at(c), mesh.dim);
        worst = worst.max(lo.abs()).max(hi.abs());
    }
    if worst > 0.0 {
        h = h.scaled(0.3 / worst);
    }
    VariationSpec {
        h,
        eta_rate: ScalarField::zero(mesh, ScalarRole::WeightRate),
    }
}

/// Random smooth deformation field.
pub fn random_vector_field(rng: &mut ChaCha8Rng, mesh: &Mesh) -> VectorField {
    let sx = random_series(rng, mesh, 4);
    let sy = random_series(rng, mesh, 4);
    VectorField::from_fn(mesh, |p| {
        [sx.eval(p), if p.len() > 1 { sy.eval(p) } else { 0.0 }]
    })
}
