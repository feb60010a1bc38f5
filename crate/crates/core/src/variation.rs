//! First-order eigenvalue variation under metric, coefficient and
//! weight deformations, with a finite-difference oracle.
//!
//! For a curve `g(t) = g + tH`, coefficient rule `T = F(g)` and weight
//! rate `eta_dot`, the first-order behavior of an eigenvalue cluster is
//! governed by the symmetric slope matrix
//!
//! `S_ij = 1/2 * integral [ h (-lambda phi_i phi_j + T(grad phi_i, grad phi_j))
//!         + 2 HH(grad phi_i, grad phi_j)
//!         + T(grad eta_dot, grad(phi_i phi_j)) ] dm`
//!
//! where `h = tr_g H` and `HH = T' - (T g^{-1} H + H g^{-1} T)` is the
//! combined coefficient variation.  The branch slopes of the cluster are
//! the eigenvalues of `S` (degenerate perturbation theory); a simple
//! eigenvalue reduces to the 1x1 case.
//!
//! With the quadrature used here (per-cell constant tensors, exact P1
//! element integrals), `S` coincides with the exact derivative of the
//! assembled pencil, so finite differences of the discrete eigenvalues
//! converge to the predicted slopes at second order in the step.

use crate::error::{Error, Result};
use crate::fields::{
    perturb_metric, MetricField, ScalarField, SymTensorField, TensorRole,
};
use crate::mesh::Mesh;
use crate::operator::{assemble, BoundaryCondition, OperatorPair};
use crate::eigen::{solve_eigen_with, SolveOptions, Spectrum};
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use std::fmt::Write as _;

/// How the coefficient tensor depends on the metric.
#[derive(Clone, Debug)]
pub enum TensorFamily {
    /// `T` frozen independently of the metric; `T' = 0`.
    Fixed(SymTensorField),
    /// `T = g`; `T' = H`.
    MetricItself,
    /// `T = psi g` with a scalar factor field; `T' = psi H`.
    ConformalWeight(ScalarField),
}

impl TensorFamily {
    /// The coefficient tensor for a given metric.
    pub fn tensor(&self, mesh: &Mesh, g: &MetricField) -> Result<SymTensorField> {
        match self {
            TensorFamily::Fixed(t0) => {
                if t0.nc() != mesh.nc() {
                    return Err(Error::Invalid(
                        "fixed coefficient does not match the mesh".into(),
                    ));
                }
                Ok(t0.clone())
            }
            TensorFamily::MetricItself => Ok(g.as_tensor(TensorRole::Coefficient)),
            TensorFamily::ConformalWeight(psi) => {
                if psi.values.len() != mesh.nv() {
                    return Err(Error::Invalid(
                        "conformal factor does not match the mesh".into(),
                    ));
                }
                let cells = (0..mesh.nc())
                    .map(|c| g.at(c).scale(psi.cell_mean(mesh, c)))
                    .collect();
                Ok(SymTensorField::from_cells(
                    mesh.dim,
                    TensorRole::Coefficient,
                    cells,
                ))
            }
        }
    }

    /// Directional derivative `T' = dF_g(H)` of the coefficient rule.
    pub fn tensor_rate(&self, mesh: &Mesh, h: &SymTensorField) -> SymTensorField {
        match self {
            TensorFamily::Fixed(_) => SymTensorField::from_cells(
                mesh.dim,
                TensorRole::CompositeVariation,
                vec![crate::linalg::SymMat::ZERO; mesh.nc()],
            ),
            TensorFamily::MetricItself => SymTensorField::from_cells(
                mesh.dim,
                TensorRole::CompositeVariation,
                (0..h.nc()).map(|c| *h.at(c)).collect(),
            ),
            TensorFamily::ConformalWeight(psi) => SymTensorField::from_cells(
                mesh.dim,
                TensorRole::CompositeVariation,
                (0..h.nc())
                    .map(|c| h.at(c).scale(psi.cell_mean(mesh, c)))
                    .collect(),
            ),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TensorFamily::Fixed(_) => "fixed",
            TensorFamily::MetricItself => "metric",
            TensorFamily::ConformalWeight(_) => "conformal",
        }
    }
}

/// A complete base eigenproblem: mesh, metric, coefficient rule, weight
/// and boundary condition.
pub struct EigenProblem<'a> {
    pub mesh: &'a Mesh,
    pub g: &'a MetricField,
    pub family: &'a TensorFamily,
    pub eta: &'a ScalarField,
    pub bc: BoundaryCondition,
}

impl<'a> EigenProblem<'a> {
    pub fn coefficient(&self) -> Result<SymTensorField> {
        self.family.tensor(self.mesh, self.g)
    }

    pub fn operator(&self) -> Result<OperatorPair> {
        let t = self.coefficient()?;
        assemble(self.mesh, self.g, &t, self.eta, self.bc)
    }
}

/// A first-order deformation of the base problem: metric variation `H`
/// and weight rate.
pub struct VariationSpec {
    pub h: SymTensorField,
    pub eta_rate: ScalarField,
}

/// Combined coefficient variation
/// `HH = T' - (T g^{-1} H + H g^{-1} T)` per cell.
pub fn coefficient_response(
    g: &MetricField,
    t: &SymTensorField,
    h: &SymTensorField,
    t_rate: &SymTensorField,
) -> SymTensorField {
    let dim = g.dim;
    let cells = (0..g.nc())
        .map(|c| {
            let lowered = t.at(c).sym_product(g.inv(c), h.at(c), dim);
            t_rate.at(c).sub(&lowered)
        })
        .collect();
    SymTensorField::from_cells(dim, TensorRole::CompositeVariation, cells)
}

/// The symmetric slope matrix of a cluster together with its
/// eigenvalues (the branch slopes, ascending).
#[derive(Clone, Debug)]
pub struct SlopeMatrix {
    pub lambda: f64,
    pub matrix: DMatrix<f64>,
    pub slopes: Vec<f64>,
}

/// Evaluates the first-order slope matrix of an eigenvalue cluster
/// under a metric/coefficient/weight variation, and its eigenvalues.
///
/// `cluster` lists indices into `spectrum` (a multiplet as produced by
/// [`crate::eigen::group_multiplets`]); the corresponding eigenvectors
/// must be mass-orthonormal, which [`crate::eigen::solve_eigen`]
/// guarantees.
pub fn hadamard_slopes(
    problem: &EigenProblem,
    op: &OperatorPair,
    spectrum: &Spectrum,
    cluster: &[usize],
    var: &VariationSpec,
) -> Result<SlopeMatrix> {
    let mesh = problem.mesh;
    let dim = mesh.dim;
    if cluster.is_empty() {
        return Err(Error::Invalid("empty cluster".into()));
    }
    if cluster.iter().any(|&i| i >= spectrum.k()) {
        return Err(Error::Invalid("cluster index out of range".into()));
    }
    if var.h.nc() != mesh.nc() {
        return Err(Error::Invalid("variation does not match the mesh".into()));
    }
    if var.eta_rate.values.len() != mesh.nv() {
        return Err(Error::Invalid("weight rate does not match the mesh".into()));
    }
    if spectrum.bc != problem.bc {
        return Err(Error::BoundaryConditionMismatch {
            spectrum: spectrum.bc.to_string(),
            requested: problem.bc.to_string(),
        });
    }
    let m = cluster.len();
    let lambda = validate_cluster(op, spectrum, cluster)?;
    let g = problem.g;
    let t = problem.coefficient()?;
    let t_rate = problem.family.tensor_rate(mesh, &var.h);
    let hh = coefficient_response(g, &t, &var.h, &t_rate);

    // expanded eigenfunctions (vertex space)
    let phis: Vec<Vec<f64>> = cluster
        .iter()
        .map(|&i| op.expand(&spectrum.vectors[i]))
        .collect();

    let nodes = dim + 1;
    let mass_fac = 1.0 / ((nodes * (nodes + 1)) as f64);
    let mut s = DMatrix::zeros(m, m);

    for c in 0..mesh.nc() {
        let w = (-problem.eta.cell_mean(mesh, c)).exp() * g.sqrt_det(c) * mesh.chart_vol(c);
        let ginv = g.inv(c);
        let wt = t.at(c).sandwich(ginv, dim);
        let whh = hh.at(c).sandwich(ginv, dim);
        let h_trace = var.h.at(c).contract(ginv, dim);
        let deta = var.eta_rate.cell_grad(mesh, c);
        let vs = mesh.cell_verts(c);

        // per-eigenfunction cell data: vertex values, gradient, mean
        let mut vals = vec![[0.0_f64; 3]; m];
        let mut grads = vec![[0.0_f64; 2]; m];
        let mut means = vec![0.0_f64; m];
        for (q, phi) in phis.iter().enumerate() {
            let mut gsum = [0.0, 0.0];
            for (a, &v) in vs.iter().enumerate() {
                let pv = phi[v];
                vals[q][a] = pv;
                let ga = mesh.grad(c, a);
                gsum[0] += pv * ga[0];
                gsum[1] += pv * ga[1];
            }
            grads[q] = gsum;
            means[q] = vals[q][..nodes].iter().sum::<f64>() / nodes as f64;
        }

        for i in 0..m {
            for j in i..m {
                // exact element integral of phi_i phi_j
                let mut mij = 0.0;
                for a in 0..nodes {
                    for b in 0..nodes {
                        mij += vals[i][a] * vals[j][b] * if a == b { 2.0 } else { 1.0 };
                    }
                }
                mij *= mass_fac * w;
                let tij = wt.quad(grads[i], grads[j], dim) * w;
                let hhij = whh.quad(grads[i], grads[j], dim) * w;
                let eta_term = (wt.quad(deta, grads[j], dim) * means[i]
                    + wt.quad(deta, grads[i], dim) * means[j])
                    * w;
                let contrib =
                    0.5 * (h_trace * (-lambda * mij + tij) + 2.0 * hhij + eta_term);
                s[(i, j)] += contrib;
                if i != j {
                    s[(j, i)] += contrib;
                }
            }
        }
    }

    // symmetric by construction; eigenvalues are the branch slopes
    let eig = SymmetricEigen::new(s.clone());
    let mut slopes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    slopes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(SlopeMatrix {
        lambda,
        matrix: s,
        slopes,
    })
}

/// Checks that the cluster's eigenvectors are mass-orthonormal and
/// returns the cluster mean eigenvalue.
pub(crate) fn validate_cluster(
    op: &OperatorPair,
    spectrum: &Spectrum,
    cluster: &[usize],
) -> Result<f64> {
    let mut worst = 0.0_f64;
    for (a, &i) in cluster.iter().enumerate() {
        for (b, &j) in cluster.iter().enumerate() {
            let gij = op.b_inner(&spectrum.vectors[i], &spectrum.vectors[j]);
            let target = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((gij - target).abs());
        }
    }
    if worst > 1e-8 {
        return Err(Error::ClusterNotOrthonormal(worst));
    }
    Ok(cluster.iter().map(|&i| spectrum.lambdas[i]).sum::<f64>() / cluster.len() as f64)
}

// ---------------------------------------------------------------------
// finite-difference oracle
// ---------------------------------------------------------------------

/// A one-parameter family of assembled operators through `t = 0`.
pub trait OperatorPath: Sync {
    fn operator_at(&self, t: f64) -> Result<OperatorPair>;
}

/// The straight metric path `g + tH`, coefficient from the family rule,
/// weight `eta + t eta_dot`.
pub struct MetricPath<'a> {
    pub problem: &'a EigenProblem<'a>,
    pub var: &'a VariationSpec,
}

impl<'a> OperatorPath for MetricPath<'a> {
    fn operator_at(&self, t: f64) -> Result<OperatorPair> {
        let p = self.problem;
        let gt = perturb_metric(p.g, &self.var.h, t)?;
        let tt = p.family.tensor(p.mesh, &gt)?;
        let eta_t = p.eta.axpy(t, &self.var.eta_rate);
        assemble(p.mesh, &gt, &tt, &eta_t, p.bc)
    }
}

/// Decreasing central-difference step schedule.
#[derive(Clone, Debug)]
pub struct FdSchedule {
    pub steps: Vec<f64>,
}

impl Default for FdSchedule {
    fn default() -> FdSchedule {
        FdSchedule {
            steps: vec![1e-2, 5e-3, 2.5e-3],
        }
    }
}

impl FdSchedule {
    pub fn validate(&self, residual_target: f64) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::Invalid("empty finite-difference schedule".into()));
        }
        for w in self.steps.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::Invalid(
                    "finite-difference steps must be strictly decreasing".into(),
                ));
            }
        }
        let floor = residual_target.max(1e-16).sqrt();
        let smallest = *self.steps.last().unwrap();
        if !(smallest > floor) {
            return Err(Error::Invalid(format!(
                "smallest step {smallest:e} is below the noise floor {floor:e} set by the solver residual target"
            )));
        }
        Ok(())
    }

    fn halved(&self) -> FdSchedule {
        FdSchedule {
            steps: self.steps.iter().map(|s| s / 2.0).collect(),
        }
    }
}

/// Finite-difference slope estimates for a cluster.
#[derive(Clone, Debug)]
pub struct FdReport {
    /// Richardson-extrapolated branch slopes, ascending.
    pub slopes: Vec<f64>,
    /// Raw central differences per step (outer: step, inner: branch,
    /// ascending within each step).
    pub per_step: Vec<Vec<f64>>,
    /// Estimated convergence order per branch (NaN when the difference
    /// sequence is at noise level).
    pub orders: Vec<f64>,
    /// Difference of the last two Richardson extrapolants per branch.
    pub err_est: Vec<f64>,
    pub steps: Vec<f64>,
}

/// Central-difference branch slopes of an eigenvalue cluster along an
/// operator path, with Richardson extrapolation over the schedule.
///
/// Branches at `+t` and `-t` are paired through their eigenvector
/// overlaps in the base mass inner product; an ambiguous pairing (small
/// subspace overlap or a window collision with neighboring eigenvalues)
/// triggers one automatic retry with a halved schedule before failing.
pub fn fd_slopes(
    path: &dyn OperatorPath,
    cluster: &[usize],
    schedule: &FdSchedule,
    solver: &SolveOptions,
) -> Result<FdReport> {
    match fd_slopes_once(path, cluster, schedule, solver) {
        Err(Error::BranchMatching { .. }) => {
            fd_slopes_once(path, cluster, &schedule.halved(), solver)
        }
        other => other,
    }
}

fn fd_slopes_once(
    path: &dyn OperatorPath,
    cluster: &[usize],
    schedule: &FdSchedule,
    solver: &SolveOptions,
) -> Result<FdReport> {
    schedule.validate(solver.residual_target)?;
    if cluster.is_empty() {
        return Err(Error::Invalid("empty cluster".into()));
    }
    let mut sorted = cluster.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::Invalid(
            "cluster indices must be consecutive".into(),
        ));
    }
    let m = sorted.len();
    if m > 6 {
        return Err(Error::Invalid(
            "cluster too large for branch pairing (max multiplicity 6)".into(),
        ));
    }
    let first = sorted[0];
    let last = *sorted.last().unwrap();

    // base solve (defines the window and the overlap inner product)
    let op0 = path.operator_at(0.0)?;
    let n = op0.n_free();
    let k_solve = (last + 3).min(n);
    if last >= n {
        return Err(Error::TooManyEigenpairs {
            requested: last + 1,
            available: n,
        });
    }
    let mut opts = solver.clone();
    opts.k = k_solve;
    let spec0 = solve_eigen_with(&op0, &opts)?;
    let lam0 = &spec0.lambdas;
    let width = lam0[last] - lam0[first];
    let gap_below = if first > 0 {
        lam0[first] - lam0[first - 1]
    } else {
        f64::INFINITY
    };
    let gap_above = if last + 1 < k_solve {
        lam0[last + 1] - lam0[last]
    } else {
        f64::INFINITY
    };
    let guard = 0.45 * gap_below.min(gap_above).max(10.0 * width);

    // all +-t solves are independent
    let jobs: Vec<f64> = schedule
        .steps
        .iter()
        .flat_map(|&t| [t, -t])
        .collect();
    let solved: Result<Vec<Spectrum>> = jobs
        .par_iter()
        .map(|&t| {
            let op = path.operator_at(t)?;
            solve_eigen_with(&op, &opts)
        })
        .collect();
    let solved = solved?;

    let mut per_step: Vec<Vec<f64>> = Vec::with_capacity(schedule.steps.len());
    for (si, &t) in schedule.steps.iter().enumerate() {
        let plus = &solved[2 * si];
        let minus = &solved[2 * si + 1];
        // window guard: cluster eigenvalues must not migrate into the
        // neighboring part of the spectrum
        for spec in [plus, minus] {
            for &i in &sorted {
                if (spec.lambdas[i] - lam0[i]).abs() > guard.max(1e-9 * (1.0 + lam0[i].abs())) {
                    return Err(Error::BranchMatching {
                        step: t,
                        overlap: 0.0,
                    });
                }
            }
        }
        // Branch pairing through the base cluster basis: overlap each
        // perturbed eigenvector with the t = 0 eigenvectors in the base
        // mass inner product, then compose the two reference matchings.
        // (The composed matrix equals the direct +t/-t overlap up to
        // O(t^2) but is insensitive to the arbitrary rotation of a
        // degenerate base cluster.)
        let base_overlap = |spec: &Spectrum| -> DMatrix<f64> {
            let mut o = DMatrix::zeros(m, m);
            for (a, &i) in sorted.iter().enumerate() {
                for (b, &j) in sorted.iter().enumerate() {
                    o[(a, b)] = op0.b_inner(&spec0.vectors[i], &spec.vectors[j]);
                }
            }
            o
        };
        let o_plus = base_overlap(plus);
        let o_minus = base_overlap(minus);
        for (o, spec_t) in [(&o_plus, t), (&o_minus, -t)] {
            let min_sv = o
                .clone()
                .svd(false, false)
                .singular_values
                .iter()
                .fold(f64::INFINITY, |acc, &s| acc.min(s));
            if min_sv < 0.5 {
                return Err(Error::BranchMatching {
                    step: spec_t,
                    overlap: min_sv,
                });
            }
        }
        let composed = o_plus.transpose() * &o_minus;
        let perm = best_assignment(&composed);
        let mut diffs: Vec<f64> = (0..m)
            .map(|a| {
                let lp = plus.lambdas[sorted[a]];
                let lmn = minus.lambdas[sorted[perm[a]]];
                (lp - lmn) / (2.0 * t)
            })
            .collect();
        diffs.sort_by(|x, y| x.partial_cmp(y).unwrap());
        per_step.push(diffs);
    }

    // Richardson extrapolation per sorted branch
    let steps = &schedule.steps;
    let nsteps = steps.len();
    let richardson = |ia: usize, ib: usize, w: usize| -> f64 {
        let (ta, tb) = (steps[ia], steps[ib]);
        let (da, db) = (per_step[ia][w], per_step[ib][w]);
        (ta * ta * db - tb * tb * da) / (ta * ta - tb * tb)
    };
    let mut slopes = Vec::with_capacity(m);
    let mut err_est = Vec::with_capacity(m);
    let mut orders = Vec::with_capacity(m);
    for w in 0..m {
        if nsteps == 1 {
            slopes.push(per_step[0][w]);
            err_est.push(f64::NAN);
            orders.push(f64::NAN);
            continue;
        }
        let r_last = richardson(nsteps - 2, nsteps - 1, w);
        slopes.push(r_last);
        if nsteps >= 3 {
            let r_prev = richardson(nsteps - 3, nsteps - 2, w);
            err_est.push((r_last - r_prev).abs());
            let d1 = per_step[nsteps - 3][w] - per_step[nsteps - 2][w];
            let d2 = per_step[nsteps - 2][w] - per_step[nsteps - 1][w];
            let ratio = steps[nsteps - 3] / steps[nsteps - 2];
            let scale = per_step[nsteps - 1][w].abs().max(1.0);
            if d2.abs() > 1e-12 * scale && d1 / d2 > 0.0 {
                orders.push((d1 / d2).ln() / ratio.ln());
            } else {
                orders.push(f64::NAN);
            }
        } else {
            err_est.push((per_step[0][w] - per_step[1][w]).abs());
            orders.push(f64::NAN);
        }
    }
    // branches were sorted per step; keep global ascending order
    let mut order_idx: Vec<usize> = (0..m).collect();
    order_idx.sort_by(|&a, &b| slopes[a].partial_cmp(&slopes[b]).unwrap());
    let slopes: Vec<f64> = order_idx.iter().map(|&i| slopes[i]).collect();
    let err_est: Vec<f64> = order_idx.iter().map(|&i| err_est[i]).collect();
    let orders: Vec<f64> = order_idx.iter().map(|&i| orders[i]).collect();

    Ok(FdReport {
        slopes,
        per_step,
        orders,
        err_est,
        steps: steps.clone(),
    })
}

/// Permutation maximizing the total absolute overlap (assignment by
/// exhaustive search; multiplicities are tiny).
fn best_assignment(overlap: &DMatrix<f64>) -> Vec<usize> {
    let m = overlap.nrows();
    let mut best: Vec<usize> = (0..m).collect();
    let mut best_score = f64::NEG_INFINITY;
    let mut perm: Vec<usize> = (0..m).collect();
    permute(&mut perm, 0, &mut |p| {
        let score: f64 = (0..m).map(|i| overlap[(i, p[i])].abs()).sum();
        if score > best_score {
            best_score = score;
            best = p.to_vec();
        }
    });
    best
}

fn permute(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

// ---------------------------------------------------------------------
// combined report
// ---------------------------------------------------------------------

/// Predicted-versus-measured slope comparison for one cluster.
#[derive(Clone, Debug)]
pub struct SlopeReport {
    pub lambda: f64,
    pub multiplicity: usize,
    pub predicted: Vec<f64>,
    pub measured: Vec<f64>,
    pub rel_err: Vec<f64>,
    pub fd_order: Vec<f64>,
    pub fd_err_est: Vec<f64>,
    pub steps: Vec<f64>,
}

impl SlopeReport {
    pub fn build(predicted: &SlopeMatrix, fd: &FdReport) -> SlopeReport {
        let m = predicted.slopes.len();
        let floor = 1e-12 * (1.0 + predicted.lambda.abs());
        let rel_err: Vec<f64> = (0..m)
            .map(|i| {
                let p = predicted.slopes[i];
                let o = fd.slopes[i];
                (p - o).abs() / o.abs().max(floor)
            })
            .collect();
        SlopeReport {
            lambda: predicted.lambda,
            multiplicity: m,
            predicted: predicted.slopes.clone(),
            measured: fd.slopes.clone(),
            rel_err,
            fd_order: fd.orders.clone(),
            fd_err_est: fd.err_est.clone(),
            steps: fd.steps.clone(),
        }
    }

    pub fn max_rel_err(&self) -> f64 {
        self.rel_err.iter().fold(0.0_f64, |m, &e| m.max(e))
    }

    /// CSV layout `branch,predicted,oracle,rel_err,fd_order`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("branch,predicted,oracle,rel_err,fd_order\n");
        for i in 0..self.multiplicity {
            let _ = writeln!(
                s,
                "{},{},{},{:e},{}",
                i, self.predicted[i], self.measured[i], self.rel_err[i], self.fd_order[i]
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::{group_multiplets, solve_eigen, MULTIPLET_REL_TOL};
    use crate::fields::ScalarRole;
    use crate::linalg::SymMat;
    use crate::mesh::CanonicalDomain;

    fn interval_setup() -> (Mesh, MetricField, ScalarField) {
        let mesh = CanonicalDomain::Interval {
            length: std::f64::consts::PI,
            cells: 120,
        }
        .build()
        .unwrap();
        let g = MetricField::flat(&mesh);
        let eta = ScalarField::zero(&mesh, ScalarRole::Weight);
        (mesh, g, eta)
    }

    #[test]
    fn coefficient_response_for_metric_family_is_minus_h() {
        // T = g: HH = H - 2H = -H
        let mesh = CanonicalDomain::Rectangle {
            lx: 1.0,
            ly: 1.0,
            nx: 4,
            ny: 4,
        }
        .build()
        .unwrap();
        let g = MetricField::from_fn(&mesh, |_| SymMat::new(1.5, 0.2, 0.9)).unwrap();
        let t = g.as_tensor(TensorRole::Coefficient);
        let h = SymTensorField::constant(
            &mesh,
            SymMat::new(0.4, -0.1, 0.7),
            TensorRole::MetricVariation,
        );
        let family = TensorFamily::MetricItself;
        let t_rate = family.tensor_rate(&mesh, &h);
        let hh = coefficient_response(&g, &t, &h, &t_rate);
        for c in 0..mesh.nc() {
            let e = hh.at(c).axpy(1.0, h.at(c));
            assert!(e.max_abs(2) < 1e-13, "HH != -H: {:?}", hh.at(c));
        }
    }

    #[test]
    fn coefficient_response_fixed_identity_tensor_flat_metric() {
        // T = g = I fixed: HH = 0 - 2H|_arranged = -(TH + HT) with raised
        // indices trivial: HH = -2H
        let mesh = CanonicalDomain::Rectangle {
            lx: 1.0,
            ly: 1.0,
            nx: 3,
            ny: 3,
        }
        .build()
        .unwrap();
        let g = MetricField::flat(&mesh);
        let t = SymTensorField::constant(&mesh, SymMat::identity(), TensorRole::Coefficient);
        let h = SymTensorField::constant(
            &mesh,
            SymMat::new(0.3, 0.1, -0.2),
            TensorRole::MetricVariation,
        );
        let zero_rate = TensorFamily::Fixed(t.clone()).tensor_rate(&mesh, &h);
        let hh = coefficient_response(&g, &t, &h, &zero_rate);
        for c in 0..mesh.nc() {
            let e = hh.at(c).axpy(2.0, h.at(c));
            assert!(e.max_abs(2) < 1e-13);
        }
    }

    #[test]
    fn uniform_conformal_variation_gives_minus_lambda() {
        // H = g uniformly, family T = g: lambda(t) = lambda / (1 + t)
        // exactly (in any dimension), so every slope is -lambda
        let (mesh, g, eta) = interval_setup();
        let family = TensorFamily::MetricItself;
        let problem = EigenProblem {
            mesh: &mesh,
            g: &g,
            family: &family,
            eta: &eta,
            bc: BoundaryCondition::Dirichlet,
        };
        let op = problem.operator().unwrap();
        let spectrum = solve_eigen(&op, 3).unwrap();
        let var = VariationSpec {
            h: g.as_tensor(TensorRole::MetricVariation),
            eta_rate: ScalarField::zero(&mesh, ScalarRole::WeightRate),
        };
        for i in 0..3 {
            let sm = hadamard_slopes(&problem, &op, &spectrum, &[i], &var).unwrap();
            let expect = -spectrum.lambdas[i];
            assert!(
                (sm.slopes[0] - expect).abs() < 1e-10 * (1.0 + expect.abs()),
                "slope {} vs {}",
                sm.slopes[0],
                expect
            );
        }
    }

    #[test]
    fn fd_matches_prediction_simple_interval() {
        let (mesh, g, eta) = interval_setup();
        let family = TensorFamily::MetricItself;
        let problem = EigenProblem {
            mesh: &mesh,
            g: &g,
            family: &family,
            eta: &eta,
            bc: BoundaryCondition::Dirichlet,
        };
        let op = problem.operator().unwrap();
        let spectrum = solve_eigen(&op, 2).unwrap();
        // smooth non-uniform 1D variation
        let h = SymTensorField::from_fn(&mesh, TensorRole::MetricVariation, |p| {
            SymMat::new(0.5 + 0.3 * (2.0 * p[0]).sin(), 0.0, 0.0)
        });
        let var = VariationSpec {
            h,
            eta_rate: ScalarField::zero(&mesh, ScalarRole::WeightRate),
        };
        let sm = hadamard_slopes(&problem, &op, &spectrum, &[0], &var).unwrap();
        let path = MetricPath {
            problem: &problem,
            var: &var,
        };
        let fd = fd_slopes(&path, &[0], &FdSchedule::default(), &SolveOptions::new(1)).unwrap();
        let rel = (sm.slopes[0] - fd.slopes[0]).abs() / fd.slopes[0].abs();
        assert!(rel < 1e-6, "pred {} fd {}", sm.slopes[0], fd.slopes[0]);
        // second-order convergence of the raw differences
        assert!(
            fd.orders[0].is_nan() || (fd.orders[0] - 2.0).abs() < 0.7,
            "order {}",
            fd.orders[0]
        );
    }

    #[test]
    fn weight_rate_only_variation() {
        let (mesh, g, eta) = interval_setup();
        let family = TensorFamily::MetricItself;
        let problem = EigenProblem {
            mesh: &mesh,
            g: &g,
            family: &family,
            eta: &eta,
            bc: BoundaryCondition::TNeumann,
        };
        let op = problem.operator().unwrap();
        let spectrum = solve_eigen(&op, 3).unwrap();
        let var = VariationSpec {
            h: SymTensorField::constant(&mesh, SymMat::ZERO, TensorRole::MetricVariation),
            eta_rate: ScalarField::from_fn(&mesh, ScalarRole::WeightRate, |p| {
                (p[0] - 1.0).powi(2)
            }),
        };
        // lambda_1 is the first nonzero mode (index 1)
        let sm = hadamard_slopes(&problem, &op, &spectrum, &[1], &var).unwrap();
        let path = MetricPath {
            problem: &problem,
            var: &var,
        };
        let fd = fd_slopes(&path, &[1], &FdSchedule::default(), &SolveOptions::new(1)).unwrap();
        let denom = fd.slopes[0].abs().max(1e-6);
        // The weight-rate term of the slope matrix agrees with the
        // discrete pencil derivative only up to discretization error
        // (the two forms are related by integration by parts in the
        // continuum), so the comparison is O(h^2)-limited.
        assert!(
            (sm.slopes[0] - fd.slopes[0]).abs() / denom < 1e-3,
            "pred {} fd {}",
            sm.slopes[0],
            fd.slopes[0]
        );
    }

    #[test]
    fn cluster_slopes_invariant_under_basis_rotation() {
        // rotate a degenerate pair's eigenbasis; slope eigenvalues must
        // not change
        let mesh = CanonicalDomain::Rectangle {
            lx: std::f64::consts::PI,
            ly: std::f64::consts::PI,
            nx: 14,
            ny: 14,
        }
        .build()
        .unwrap();
        let g = MetricField::flat(&mesh);
        let eta = ScalarField::zero(&mesh, ScalarRole::Weight);
        let family = TensorFamily::MetricItself;
        let problem = EigenProblem {
            mesh: &mesh,
            g: &g,
            family: &family,
            eta: &eta,
            bc: BoundaryCondition::Dirichlet,
        };
        let op = problem.operator().unwrap();
        let mut spectrum = solve_eigen(&op, 4).unwrap();
        let clusters = group_multiplets(&spectrum.lambdas, MULTIPLET_REL_TOL);
        // second cluster is the (1,2)/(2,1) pair
        let pair = clusters
            .iter()
            .find(|c| c.len() == 2)
            .expect("square spectrum has a degenerate pair")
            .clone();
        let var = VariationSpec {
            h: SymTensorField::from_fn(&mesh, TensorRole::MetricVariation, |p| {
                SymMat::new(0.2 * p[0].sin(), 0.05, 0.1 * (p[1] * 0.7).cos())
            }),
            eta_rate: ScalarField::zero(&mesh, ScalarRole::WeightRate),
        };
        let s1 = hadamard_slopes(&problem, &op, &spectrum, &pair, &var).unwrap();
        // rotate the pair basis by 40 degrees
        let (c, s) = (40f64.to_radians().cos(), 40f64.to_radians().sin());
        let v0 = spectrum.vectors[pair[0]].clone();
        let v1 = spectrum.vectors[pair[1]].clone();
        for i in 0..v0.len() {
            spectrum.vectors[pair[0]][i] = c * v0[i] + s * v1[i];
            spectrum.vectors[pair[1]][i] = -s * v0[i] + c * v1[i];
        }
        let s2 = hadamard_slopes(&problem, &op, &spectrum, &pair, &var).unwrap();
        for (a, b) in s1.slopes.iter().zip(&s2.slopes) {
            assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn rejects_non_orthonormal_cluster() {
        let (mesh, g, eta) = interval_setup();
        let family = TensorFamily::MetricItself;
        let problem = EigenProblem {
            mesh: &mesh,
            g: &g,
            family: &family,
            eta: &eta,
            bc: BoundaryCondition::Dirichlet,
        };
        let op = problem.operator().unwrap();
        let mut spectrum = solve_eigen(&op, 2).unwrap();
        for v in &mut spectrum.vectors[0] {
            *v *= 1.5;
        }
        let var = VariationSpec {
            h: g.as_tensor(TensorRole::MetricVariation),
            eta_rate: ScalarField::zero(&mesh, ScalarRole::WeightRate),
        };
        assert!(matches!(
            hadamard_slopes(&problem, &op, &spectrum, &[0], &var),
            Err(Error::ClusterNotOrthonormal(_))
        ));
    }

    #[test]
    fn schedule_validation() {
        assert!(FdSchedule { steps: vec![] }.validate(1e-10).is_err());
        assert!(FdSchedule {
            steps: vec![1e-2, 1e-2]
        }
        .validate(1e-10)
        .is_err());
        assert!(FdSchedule {
            steps: vec![1e-2, 1e-6]
        }
        .validate(1e-10)
        .is_err());
        assert!(FdSchedule::default().validate(1e-10).is_ok());
    }

}
