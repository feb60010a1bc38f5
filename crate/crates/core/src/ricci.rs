//! Eigenvalue evolution along exactly-solvable Ricci flows.
//!
//! On round spheres and flat tori the flow `dg/dt = -2 Ric` preserves
//! homogeneity and reduces to an exact scale law `g(t) = c(t) g0`, so
//! eigenvalue evolution can be computed in closed form and used to
//! validate the evolution formula
//!
//! `lambda' = int R (lambda u^2 - T(grad u, grad u)) dm
//!          + int [4 Ric(T grad u, grad u) + T'(grad u, grad u)] dm`
//!
//! without any flow-solver error.  A finite-element cross-check on the
//! 2-sphere re-solves the eigenproblem on the scaled metric and feeds
//! the discrete eigenfunctions through the same quadrature.

use crate::eigen::{solve_eigen, Spectrum};
use crate::error::{Error, Result};
use crate::fields::{MetricField, ScalarField, ScalarRole, SymTensorField, TensorRole};
use crate::mesh::{CanonicalDomain, Mesh};
use crate::operator::{assemble, BoundaryCondition, OperatorPair};
use crate::variation::TensorFamily;
use rayon::prelude::*;
use std::fmt::Write as _;

/// A homogeneous Ricci flow: the metric evolves by pure scaling,
/// `g(t) = c(t) g0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HomogeneousFlow {
    /// Round n-sphere (n = 2 or 3) of the given initial radius.
    Sphere { n: usize, radius: f64 },
    /// Flat rectangular torus: a fixed point of the flow.
    FlatTorus { lx: f64, ly: f64 },
}

impl HomogeneousFlow {
    pub fn validate(&self) -> Result<()> {
        match *self {
            HomogeneousFlow::Sphere { n, radius } => {
                if !(n == 2 || n == 3) {
                    return Err(Error::Invalid(format!(
                        "sphere dimension {n} unsupported (2 or 3)"
                    )));
                }
                if !(radius > 0.0) || !radius.is_finite() {
                    return Err(Error::Invalid(format!("sphere radius {radius}")));
                }
            }
            HomogeneousFlow::FlatTorus { lx, ly } => {
                if !(lx > 0.0 && ly > 0.0) || !(lx.is_finite() && ly.is_finite()) {
                    return Err(Error::Invalid(format!("torus periods {lx} x {ly}")));
                }
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        match *self {
            HomogeneousFlow::Sphere { n, .. } => n,
            HomogeneousFlow::FlatTorus { .. } => 2,
        }
    }

    /// Ricci coefficient `rho` with `Ric = rho * g0`; the scale law is
    /// `c(t) = 1 - 2 rho t`.
    pub fn ricci_factor(&self) -> f64 {
        match *self {
            HomogeneousFlow::Sphere { n, radius } => (n as f64 - 1.0) / (radius * radius),
            HomogeneousFlow::FlatTorus { .. } => 0.0,
        }
    }

    /// Blow-up time `delta` with `c(delta) = 0` (infinite for the
    /// Ricci-flat torus).
    pub fn blow_up_time(&self) -> f64 {
        let rho = self.ricci_factor();
        if rho > 0.0 {
            1.0 / (2.0 * rho)
        } else {
            f64::INFINITY
        }
    }

    /// Scale factor `c(t) = 1 - 2 rho t` for `t` in `[0, delta)`.
    pub fn scale(&self, t: f64) -> Result<f64> {
        let delta = self.blow_up_time();
        if !t.is_finite() || t < 0.0 || t >= delta {
            return Err(Error::FlowTimeOutOfRange { t, delta });
        }
        Ok(1.0 - 2.0 * self.ricci_factor() * t)
    }

    /// Scalar curvature `R(t) = n * rho / c(t)`.
    pub fn scalar_curvature(&self, t: f64) -> Result<f64> {
        Ok(self.dimension() as f64 * self.ricci_factor() / self.scale(t)?)
    }

    /// Initial eigenvalue of the coefficient pencil at the given
    /// spectral level for `T = psi g0`: `psi l(l+n-1)/r^2` on the
    /// sphere, the sorted distinct dual-lattice values on the torus.
    pub fn analytic_eigenvalue(&self, level: usize, psi: f64) -> Result<f64> {
        match *self {
            HomogeneousFlow::Sphere { n, radius } => {
                let l = level as f64;
                Ok(psi * l * (l + n as f64 - 1.0) / (radius * radius))
            }
            HomogeneousFlow::FlatTorus { lx, ly } => {
                let mut vals = Vec::new();
                let bound = 12i64;
                for p in 0..=bound {
                    for q in 0..=bound {
                        let kx = std::f64::consts::TAU * p as f64 / lx;
                        let ky = std::f64::consts::TAU * q as f64 / ly;
                        vals.push(kx * kx + ky * ky);
                    }
                }
                vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                vals.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * (1.0 + *b));
                vals.get(level)
                    .map(|&v| psi * v)
                    .ok_or_else(|| Error::Invalid(format!("torus level {level} out of range")))
            }
        }
    }
}

/// Coefficient data of the flow at a fixed time, for `T = psi g(t)`.
/// All tensors are multiples of the initial metric `g0`:
/// `Ric = ric_factor g0`, `T = t_factor g0`, `T' = t_prime_factor g0`.
#[derive(Clone, Copy, Debug)]
pub struct FlowState {
    pub t: f64,
    pub c: f64,
    pub r_scalar: f64,
    pub ric_factor: f64,
    pub t_factor: f64,
    pub t_prime_factor: f64,
    pub psi: f64,
}

/// Evaluates scale, curvature, and the coefficient tensor with its time
/// derivative at flow time `t`.
pub fn flow_state(flow: &HomogeneousFlow, psi: f64, t: f64) -> Result<FlowState> {
    flow.validate()?;
    if !(psi > 0.0) || !psi.is_finite() {
        return Err(Error::Invalid(format!(
            "conformal factor must be a positive constant, got {psi}"
        )));
    }
    let c = flow.scale(t)?;
    let rho = flow.ricci_factor();
    Ok(FlowState {
        t,
        c,
        r_scalar: flow.dimension() as f64 * rho / c,
        ric_factor: rho,
        t_factor: psi * c,
        // dT/dt = psi dg/dt = -2 psi Ric
        t_prime_factor: -2.0 * psi * rho,
        psi,
    })
}

/// The four integrals entering the evolution formula, taken against the
/// weighted measure `dm`.
#[derive(Clone, Copy, Debug)]
pub struct RhsIntegrals {
    /// `int u^2 dm` (must be 1: the eigenfunction is mass-normalized).
    pub mass: f64,
    /// `int T(grad u, grad u) dm`.
    pub dirichlet: f64,
    /// `int Ric(T grad u, grad u) dm`.
    pub ric_t: f64,
    /// `int T'(grad u, grad u) dm`.
    pub t_prime: f64,
}

/// Closed-form integrals on a homogeneous flow: with `T`, `Ric`, `T'`
/// all proportional to `g0` they reduce to multiples of the eigenvalue.
pub fn analytic_integrals(state: &FlowState, lambda: f64) -> RhsIntegrals {
    let ratio = state.ric_factor / state.c;
    RhsIntegrals {
        mass: 1.0,
        dirichlet: lambda,
        ric_t: ratio * lambda,
        t_prime: state.t_prime_factor / state.t_factor * lambda,
    }
}

/// Predicted eigenvalue derivative
/// `lambda' = R (lambda * mass - dirichlet) + 4 ric_t + t_prime`
/// for a constant scalar curvature `R`.
pub fn evolution_rhs(lambda: f64, r_scalar: f64, ints: &RhsIntegrals) -> Result<f64> {
    if (ints.mass - 1.0).abs() > 1e-8 {
        return Err(Error::Invalid(format!(
            "eigenfunction is not mass-normalized: int u^2 dm = {}",
            ints.mass
        )));
    }
    Ok(r_scalar * (lambda * ints.mass - ints.dirichlet) + 4.0 * ints.ric_t + ints.t_prime)
}

/// Quadrature evaluation of the evolution integrals from a discrete
/// eigenfunction `u` (vertex values) on the scaled metric `g_t`.
pub fn fem_rhs_integrals(
    mesh: &Mesh,
    g_t: &MetricField,
    t_field: &SymTensorField,
    t_prime: &SymTensorField,
    ric: &SymTensorField,
    eta: &ScalarField,
    u: &[f64],
) -> Result<RhsIntegrals> {
    if u.len() != mesh.nv() {
        return Err(Error::Invalid(
            "eigenfunction length does not match the mesh".into(),
        ));
    }
    let dim = mesh.dim;
    let nodes = dim + 1;
    let mass_fac = 1.0 / ((nodes * (nodes + 1)) as f64);
    let mut out = RhsIntegrals {
        mass: 0.0,
        dirichlet: 0.0,
        ric_t: 0.0,
        t_prime: 0.0,
    };
    for c in 0..mesh.nc() {
        let w = (-eta.cell_mean(mesh, c)).exp() * g_t.sqrt_det(c) * mesh.chart_vol(c);
        let ginv = g_t.inv(c);
        let vs = mesh.cell_verts(c);
        let mut du = [0.0, 0.0];
        let mut m = 0.0;
        for (a, &va) in vs.iter().enumerate() {
            let ga = mesh.grad(c, a);
            du[0] += u[va] * ga[0];
            du[1] += u[va] * ga[1];
        }
        // exact element integral of u^2 for piecewise-linear u
        for a in 0..nodes {
            for b in 0..nodes {
                m += u[vs[a]] * u[vs[b]] * if a == b { 2.0 } else { 1.0 };
            }
        }
        out.mass += m * mass_fac * w;
        // raise one index of T against g_t, then contract
        let wt = t_field.at(c).sandwich(ginv, dim);
        out.dirichlet += wt.quad(du, du, dim) * w;
        // Ric(T grad u, grad u) = (g^-1 T g^-1 du)^T Ric (g^-1 du)
        let tdu = wt.apply(du, dim);
        let gdu = ginv.apply(du, dim);
        out.ric_t += ric.at(c).quad(tdu, gdu, dim) * w;
        let wtp = t_prime.at(c).sandwich(ginv, dim);
        out.t_prime += wtp.quad(du, du, dim) * w;
    }
    Ok(out)
}

/// Extracts the constant conformal factor of a flow-compatible family:
/// `MetricItself` means 1, a constant positive `ConformalWeight` yields
/// its value, anything else is rejected.
pub fn constant_conformal_factor(family: &TensorFamily) -> Result<f64> {
    match family {
        TensorFamily::MetricItself => Ok(1.0),
        TensorFamily::ConformalWeight(psi) => {
            let v0 = *psi
                .values
                .first()
                .ok_or_else(|| Error::Invalid("empty conformal factor".into()))?;
            let tol = 1e-12 * (1.0 + v0.abs());
            if psi.values.iter().any(|&v| (v - v0).abs() > tol) {
                return Err(Error::Invalid(
                    "flow experiments need a constant conformal factor".into(),
                ));
            }
            if !(v0 > 0.0) {
                return Err(Error::Invalid(format!(
                    "conformal factor must be positive, got {v0}"
                )));
            }
            Ok(v0)
        }
        TensorFamily::Fixed(_) => Err(Error::Invalid(
            "flow experiments support metric-proportional coefficient families only".into(),
        )),
    }
}

/// Monotonicity of the sampled eigenvalue curves.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Monotonicity {
    StrictlyIncreasing,
    NonDecreasing,
    NotMonotone,
}

impl std::fmt::Display for Monotonicity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Monotonicity::StrictlyIncreasing => write!(f, "strictly-increasing"),
            Monotonicity::NonDecreasing => write!(f, "non-decreasing"),
            Monotonicity::NotMonotone => write!(f, "not-monotone"),
        }
    }
}

/// One eigenvalue level tracked along the flow.
#[derive(Clone, Debug)]
pub struct TraceSeries {
    pub level: usize,
    pub lambda0: f64,
    /// Closed-form `lambda(t) = lambda0 / c(t)` per grid point.
    pub lambdas: Vec<f64>,
    /// Evolution-formula prediction per grid point.
    pub primes_pred: Vec<f64>,
    /// Exact derivative of the closed form per grid point.
    pub primes_exact: Vec<f64>,
    /// Finite-element re-solve on the scaled metric (2-sphere only).
    pub fem_lambdas: Option<Vec<f64>>,
    /// Evolution formula evaluated on the discrete eigenfunctions.
    pub fem_primes: Option<Vec<f64>>,
    /// Worst relative disagreement between the scaling law and the
    /// finite-element eigenvalues.
    pub fem_rel_err: Option<f64>,
}

/// Eigenvalue evolution sampled over a time grid.
#[derive(Clone, Debug)]
pub struct FlowTrace {
    pub times: Vec<f64>,
    pub scales: Vec<f64>,
    pub curvatures: Vec<f64>,
    pub series: Vec<TraceSeries>,
    /// Whether `T' >= -4 Ric(T, .)` holds (the monotonicity
    /// hypothesis); on these flows it reduces to `psi rho >= 0`.
    pub hypothesis_satisfied: bool,
    pub verdict: Monotonicity,
}

impl FlowTrace {
    /// CSV layout
    /// `t,lambda,lambda_prime_pred,lambda_prime_exact,c_of_t,R_min,R_max`,
    /// one block of rows per tracked level in level order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "level,t,lambda,lambda_prime_pred,lambda_prime_exact,c_of_t,R_min,R_max\n",
        );
        for s in &self.series {
            for (i, &t) in self.times.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    s.level,
                    t,
                    s.lambdas[i],
                    s.primes_pred[i],
                    s.primes_exact[i],
                    self.scales[i],
                    self.curvatures[i],
                    self.curvatures[i]
                );
            }
        }
        out
    }
}

/// Finite-element cross-check resolution (icosphere subdivision level).
#[derive(Clone, Copy, Debug)]
pub struct FemOptions {
    pub subdivisions: usize,
}

/// Optional extras for `eigen_along_flow`.
#[derive(Clone, Copy, Debug, Default)]
pub struct FlowOptions {
    pub fem: Option<FemOptions>,
}

fn validate_grid(flow: &HomogeneousFlow, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Invalid("empty time grid".into()));
    }
    let delta = flow.blow_up_time();
    for &t in grid {
        if !t.is_finite() || t < 0.0 || t >= delta {
            return Err(Error::FlowTimeOutOfRange { t, delta });
        }
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid("time grid must be strictly increasing".into()));
    }
    Ok(())
}

struct FemLevel {
    lambda: f64,
    prime: f64,
}

/// Re-solves the eigenproblem on the scaled icosphere metric and
/// evaluates the evolution quadrature on the discrete eigenfunctions.
fn fem_cross_check(
    mesh: &Mesh,
    g0: &MetricField,
    state: &FlowState,
    levels: &[usize],
    k: usize,
) -> Result<Vec<FemLevel>> {
    let eta = ScalarField::zero(mesh, ScalarRole::Weight);
    let g_t = g0.scaled(state.c)?;
    let t_field = g_t.as_tensor(TensorRole::Coefficient).scaled(state.psi);
    let ric = g0
        .as_tensor(TensorRole::Curvature)
        .scaled(state.ric_factor);
    let t_prime = ric.scaled(-2.0 * state.psi);
    let op: OperatorPair = assemble(mesh, &g_t, &t_field, &eta, BoundaryCondition::TNeumann)?;
    let spectrum: Spectrum = solve_eigen(&op, k)?;
    let mut out = Vec::with_capacity(levels.len());
    for &l in levels {
        let lo = l * l;
        let hi = (l + 1) * (l + 1);
        if hi > spectrum.k() {
            return Err(Error::TooManyEigenpairs {
                requested: hi,
                available: spectrum.k(),
            });
        }
        let mut lam = 0.0;
        let mut prime = 0.0;
        for i in lo..hi {
            lam += spectrum.lambdas[i];
            let u = op.expand(&spectrum.vectors[i]);
            let ints = fem_rhs_integrals(mesh, &g_t, &t_field, &t_prime, &ric, &eta, &u)?;
            prime += evolution_rhs(spectrum.lambdas[i], state.r_scalar, &ints)?;
        }
        let mult = (hi - lo) as f64;
        out.push(FemLevel {
            lambda: lam / mult,
            prime: prime / mult,
        });
    }
    Ok(out)
}

/// Tracks eigenvalue levels along the flow: closed-form scaling,
/// evolution-formula predictions at every grid point, an optional
/// finite-element cross-check, and a monotonicity verdict.
pub fn eigen_along_flow(
    flow: &HomogeneousFlow,
    family: &TensorFamily,
    levels: &[usize],
    grid: &[f64],
    opts: &FlowOptions,
) -> Result<FlowTrace> {
    flow.validate()?;
    validate_grid(flow, grid)?;
    if levels.is_empty() {
        return Err(Error::Invalid("no eigenvalue levels requested".into()));
    }
    let psi = constant_conformal_factor(family)?;
    let rho = flow.ricci_factor();

    let states: Vec<FlowState> = grid
        .iter()
        .map(|&t| flow_state(flow, psi, t))
        .collect::<Result<_>>()?;
    let scales: Vec<f64> = states.iter().map(|s| s.c).collect();
    let curvatures: Vec<f64> = states.iter().map(|s| s.r_scalar).collect();

    // finite-element cross-check: independent grid points in parallel
    let fem: Option<(Vec<Vec<FemLevel>>,)> = match &opts.fem {
        None => None,
        Some(f) => match flow {
            HomogeneousFlow::Sphere { n: 2, radius } => {
                let mesh = CanonicalDomain::Sphere {
                    radius: *radius,
                    subdivisions: f.subdivisions,
                }
                .build()?;
                let g0 = MetricField::flat(&mesh);
                let max_level = *levels.iter().max().unwrap();
                let k = (max_level + 1) * (max_level + 1) + 2;
                let per_point: Result<Vec<Vec<FemLevel>>> = states
                    .par_iter()
                    .map(|st| fem_cross_check(&mesh, &g0, st, levels, k))
                    .collect();
                Some((per_point?,))
            }
            _ => {
                return Err(Error::Invalid(
                    "finite-element cross-check is supported on the 2-sphere only".into(),
                ))
            }
        },
    };

    let mut series = Vec::with_capacity(levels.len());
    for (li, &level) in levels.iter().enumerate() {
        let lambda0 = flow.analytic_eigenvalue(level, psi)?;
        let lambdas: Vec<f64> = scales.iter().map(|&c| lambda0 / c).collect();
        let primes_exact: Vec<f64> = scales
            .iter()
            .map(|&c| 2.0 * rho * lambda0 / (c * c))
            .collect();
        let primes_pred: Vec<f64> = states
            .iter()
            .zip(&lambdas)
            .map(|(st, &lam)| evolution_rhs(lam, st.r_scalar, &analytic_integrals(st, lam)))
            .collect::<Result<_>>()?;
        let (fem_lambdas, fem_primes, fem_rel_err) = match &fem {
            None => (None, None, None),
            Some((per_point,)) => {
                let ls: Vec<f64> = per_point.iter().map(|pt| pt[li].lambda).collect();
                let ps: Vec<f64> = per_point.iter().map(|pt| pt[li].prime).collect();
                let err = ls
                    .iter()
                    .zip(&lambdas)
                    .map(|(&a, &b)| (a - b).abs() / b.abs().max(1e-300))
                    .fold(0.0_f64, f64::max);
                (Some(ls), Some(ps), Some(err))
            }
        };
        series.push(TraceSeries {
            level,
            lambda0,
            lambdas,
            primes_pred,
            primes_exact,
            fem_lambdas,
            fem_primes,
            fem_rel_err,
        });
    }

    let mut verdict = Monotonicity::StrictlyIncreasing;
    for s in &series {
        for w in s.lambdas.windows(2) {
            let tol = 1e-12 * (1.0 + w[0].abs());
            if w[1] < w[0] - tol {
                verdict = Monotonicity::NotMonotone;
            } else if w[1] <= w[0] + tol && verdict == Monotonicity::StrictlyIncreasing {
                verdict = Monotonicity::NonDecreasing;
            }
        }
    }
    Ok(FlowTrace {
        times: grid.to_vec(),
        scales,
        curvatures,
        series,
        hypothesis_satisfied: psi * rho >= 0.0,
        verdict,
    })
}

/// Blow-up diagnostics near the finite extinction time of a positively
/// curved flow.
#[derive(Clone, Debug)]
pub struct BlowupReport {
    pub epsilon: f64,
    pub delta: f64,
    pub times: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// Actual slope `lambda'(t)` of the closed form.
    pub slopes: Vec<f64>,
    /// Lower bound `lambda (R_min + (2 eps - 1) R_max)` for the slope.
    pub slope_bounds: Vec<f64>,
    /// Products `lambda(t) (delta - t)`: constant on an exact scale law.
    pub products: Vec<f64>,
    /// Fitted constant `C` with `lambda(t) >= C / (delta - t)`.
    pub fit_constant: f64,
    /// Relative spread of the products around their mean.
    pub product_rel_spread: f64,
    /// The weight-Hessian hypothesis of the blow-up argument is
    /// reported, never enforced; probes run with a constant weight.
    pub hessian_hypothesis_enforced: bool,
}

/// Samples an eigenvalue on a positively curved flow approaching the
/// blow-up time and checks the `lambda >= C/(delta - t)` divergence and
/// the pinched slope lower bound.
pub fn blowup_probe(
    flow: &HomogeneousFlow,
    family: &TensorFamily,
    level: usize,
    times: &[f64],
    epsilon: f64,
) -> Result<BlowupReport> {
    flow.validate()?;
    let rho = flow.ricci_factor();
    if rho <= 0.0 {
        return Err(Error::Invalid(
            "blow-up probe needs strictly positive Ricci curvature".into(),
        ));
    }
    if !(epsilon > 0.0 && epsilon <= 0.5) {
        return Err(Error::InvalidPinching(epsilon));
    }
    let n = flow.dimension() as f64;
    if epsilon > 1.0 / n + 1e-12 {
        return Err(Error::Invalid(format!(
            "pinching constant {epsilon} exceeds the round-sphere bound {}",
            1.0 / n
        )));
    }
    validate_grid(flow, times)?;
    let psi = constant_conformal_factor(family)?;
    let lambda0 = flow.analytic_eigenvalue(level, psi)?;
    let delta = flow.blow_up_time();

    let mut lambdas = Vec::with_capacity(times.len());
    let mut slopes = Vec::with_capacity(times.len());
    let mut slope_bounds = Vec::with_capacity(times.len());
    let mut products = Vec::with_capacity(times.len());
    for &t in times {
        let st = flow_state(flow, psi, t)?;
        let lam = lambda0 / st.c;
        lambdas.push(lam);
        slopes.push(2.0 * rho * lambda0 / (st.c * st.c));
        // R_min = R_max on a homogeneous flow
        slope_bounds.push(lam * st.r_scalar * (1.0 + (2.0 * epsilon - 1.0)));
        products.push(lam * (delta - t));
    }
    let fit_constant = products.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = products.iter().sum::<f64>() / products.len() as f64;
    let spread = products
        .iter()
        .map(|&p| (p - mean).abs())
        .fold(0.0_f64, f64::max)
        / mean.abs().max(1e-300);
    Ok(BlowupReport {
        epsilon,
        delta,
        times: times.to_vec(),
        lambdas,
        slopes,
        slope_bounds,
        products,
        fit_constant,
        product_rel_spread: spread,
        hessian_hypothesis_enforced: false,
    })
}
