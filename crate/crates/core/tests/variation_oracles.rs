//! Validates the metric-variation slope formula against oracles that do
//! not share its code path: exact scale laws of the discrete pencil,
//! Richardson-extrapolated finite differences along the perturbed
//! operator family, and a direct identity for the weighted-volume
//! derivative.

use eigenlab_core::eigen::{solve_eigen, SolveOptions};
use eigenlab_core::fields::{
    perturb_metric, MetricField, ScalarField, ScalarRole, SymTensorField, TensorRole,
};
use eigenlab_core::linalg::SymMat;
use eigenlab_core::mesh::{CanonicalDomain, Mesh};
use eigenlab_core::operator::BoundaryCondition;
use eigenlab_core::splitting::random_metric_variation;
use eigenlab_core::variation::{
    fd_slopes, hadamard_slopes, EigenProblem, FdSchedule, MetricPath, SlopeReport, TensorFamily,
    VariationSpec,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const PI: f64 = std::f64::consts::PI;

fn square(n: usize) -> (Mesh, MetricField, ScalarField) {
    let mesh = CanonicalDomain::Rectangle {
        lx: PI,
        ly: PI,
        nx: n,
        ny: n,
    }
    .build()
    .unwrap();
    let g = MetricField::flat(&mesh);
    let eta = ScalarField::zero(&mesh, ScalarRole::Weight);
    (mesh, g, eta)
}

/// Uniform conformal variation H = g: the discrete pencil obeys an
/// exact scale law, so the predicted slope must match it to roundoff.
#[test]
fn uniform_conformal_slope_for_each_family() {
    let (mesh, g, eta) = square(20);
    let psi = ScalarField::constant(&mesh, 2.5, ScalarRole::ConformalFactor);
    let frozen = g.as_tensor(TensorRole::Coefficient);
    let cases: Vec<(TensorFamily, f64)> = vec![
        // T rides with the metric: lambda(t) = lambda/(1+t)
        (TensorFamily::MetricItself, -1.0),
        (TensorFamily::ConformalWeight(psi), -1.0),
        // frozen T in two dimensions: lambda(t) = lambda/(1+t)^2
        (TensorFamily::Fixed(frozen), -2.0),
    ];
    for (family, factor) in &cases {
        let problem = EigenProblem {
            mesh: &mesh,
            g: &g,
            family,
            eta: &eta,
            bc: BoundaryCondition::Dirichlet,
        };
        let op = problem.operator().unwrap();
        let spectrum = solve_eigen(&op, 1).unwrap();
        let lambda = spectrum.lambdas[0];
        let var = VariationSpec {
            h: g.as_tensor(TensorRole::MetricVariation),
            eta_rate: ScalarField::zero(&mesh, ScalarRole::WeightRate),
        };
        let sm = hadamard_slopes(&problem, &op, &spectrum, &[0], &var).unwrap();
        let expect = factor * lambda;
        let rel = (sm.slopes[0] - expect).abs() / expect.abs();
        assert!(
            rel < 1e-10,
            "{} family: slope {} vs {expect}",
            family.name(),
            sm.slopes[0]
        );
    }
}

/// A generic seeded variation with a nonzero weight rate against the
/// finite-difference oracle.  The gradient terms of the formula match
/// the discrete derivative exactly; the weight-rate term agrees only up
/// to the discretization error of the underlying identity, which is
/// what the tolerance reflects.
#[test]
fn random_variation_matches_fd_on_simple_mode() {
    let (mesh, g, eta) = square(32);
    let family = TensorFamily::MetricItself;
    let problem = EigenProblem {
        mesh: &mesh,
        g: &g,
        family: &family,
        eta: &eta,
        bc: BoundaryCondition::Dirichlet,
    };
    let op = problem.operator().unwrap();
    let spectrum = solve_eigen(&op, 1).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut var = random_metric_variation(&mut rng, &mesh, &g);
    var.eta_rate = ScalarField::from_fn(&mesh, ScalarRole::WeightRate, |p| {
        0.4 * (p[0].cos() + 0.3 * (2.0 * p[1]).sin())
    });

    let predicted = hadamard_slopes(&problem, &op, &spectrum, &[0], &var).unwrap();
    let path = MetricPath {
        problem: &problem,
        var: &var,
    };
    let fd = fd_slopes(&path, &[0], &FdSchedule::default(), &SolveOptions::new(1)).unwrap();
    let report = SlopeReport::build(&predicted, &fd);
    let rel = report.max_rel_err();
    assert!(rel < 1e-2, "simple-mode slope mismatch {rel:e}");
}

/// Degenerate pair: branch slopes from the slope matrix against paired
/// finite differences.
#[test]
fn degenerate_pair_fd_cross_check() {
    let (mesh, g, eta) = square(32);
    let family = TensorFamily::MetricItself;
    let problem = EigenProblem {
        mesh: &mesh,
        g: &g,
        family: &family,
        eta: &eta,
        bc: BoundaryCondition::Dirichlet,
    };
    let op = problem.operator().unwrap();
    let spectrum = solve_eigen(&op, 4).unwrap();
    // indices 1,2 hold the symmetry-degenerate pair
    let gap = (spectrum.lambdas[2] - spectrum.lambdas[1]).abs();
    assert!(gap < 1e-9 * spectrum.lambdas[1]);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let var = random_metric_variation(&mut rng, &mesh, &g);
    let predicted = hadamard_slopes(&problem, &op, &spectrum, &[1, 2], &var).unwrap();
    let path = MetricPath {
        problem: &problem,
        var: &var,
    };
    let fd = fd_slopes(&path, &[1, 2], &FdSchedule::default(), &SolveOptions::new(4)).unwrap();
    let report = SlopeReport::build(&predicted, &fd);
    let rel = report.max_rel_err();
    assert!(rel < 1e-2, "pair slope mismatch {rel:e}");
    // the two branches genuinely separate under a generic variation
    assert!((predicted.slopes[1] - predicted.slopes[0]).abs() > 1e-3);
}

/// Frozen coefficient: every term of the slope formula is then an exact
/// derivative of the discrete pencil, so finite differences agree to
/// solver accuracy.
#[test]
fn frozen_coefficient_fd_is_exact() {
    let (mesh, g, eta) = square(24);
    let family = TensorFamily::Fixed(SymTensorField::constant(
        &mesh,
        SymMat::new(1.3, 0.2, 0.9),
        TensorRole::Coefficient,
    ));
    let problem = EigenProblem {
        mesh: &mesh,
        g: &g,
        family: &family,
        eta: &eta,
        bc: BoundaryCondition::Dirichlet,
    };
    let op = problem.operator().unwrap();
    let spectrum = solve_eigen(&op, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let var = random_metric_variation(&mut rng, &mesh, &g);
    let predicted = hadamard_slopes(&problem, &op, &spectrum, &[0], &var).unwrap();
    let path = MetricPath {
        problem: &problem,
        var: &var,
    };
    let fd = fd_slopes(&path, &[0], &FdSchedule::default(), &SolveOptions::new(1)).unwrap();
    let report = SlopeReport::build(&predicted, &fd);
    let rel = report.max_rel_err();
    assert!(rel < 1e-5, "frozen-coefficient mismatch {rel:e}");
}

/// The measure factor behind the slope formula: the derivative of the
/// weighted volume under g + tH equals the integral of half the
/// g-trace of H.  Checked against plain central differences of the
/// volume itself.
#[test]
fn weighted_volume_derivative_identity() {
    let mesh = CanonicalDomain::Rectangle {
        lx: 1.0,
        ly: 1.0,
        nx: 16,
        ny: 16,
    }
    .build()
    .unwrap();
    let g = MetricField::from_fn(&mesh, |p| {
        SymMat::new(1.0 + 0.3 * p[0], 0.1 * p[0] * p[1], 1.0 + 0.2 * p[1])
    })
    .unwrap();
    let eta = ScalarField::from_fn(&mesh, ScalarRole::Weight, |p| 0.5 * p[0] - 0.2 * p[1]);
    let h = SymTensorField::from_fn(&mesh, TensorRole::MetricVariation, |p| {
        SymMat::new(0.4 * (PI * p[1]).cos(), 0.15, 0.2 + 0.1 * p[0])
    });

    let volume = |t: f64| -> f64 {
        let gt = perturb_metric(&g, &h, t).unwrap();
        (0..mesh.nc())
            .map(|c| (-eta.cell_mean(&mesh, c)).exp() * gt.sqrt_det(c) * mesh.chart_vol(c))
            .sum()
    };
    let analytic: f64 = (0..mesh.nc())
        .map(|c| {
            let w = (-eta.cell_mean(&mesh, c)).exp() * g.sqrt_det(c) * mesh.chart_vol(c);
            0.5 * h.at(c).contract(g.inv(c), 2) * w
        })
        .sum();

    let fd_at = |t: f64| (volume(t) - volume(-t)) / (2.0 * t);
    let (ta, tb) = (1e-3, 5e-4);
    let (da, db) = (fd_at(ta), fd_at(tb));
    let richardson = (ta * ta * db - tb * tb * da) / (ta * ta - tb * tb);
    let rel = (analytic - richardson).abs() / analytic.abs();
    assert!(rel < 1e-9, "volume derivative mismatch {rel:e}");
}
