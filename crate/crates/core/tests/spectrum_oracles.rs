//! Cross-checks the assembled eigensolver against independently derived
//! spectra: separable sine modes, lattice sums, Bessel roots computed
//! from their power series, and spherical-harmonic levels.

use eigenlab_core::eigen::{group_multiplets, solve_eigen, MULTIPLET_REL_TOL};
use eigenlab_core::fields::{MetricField, ScalarField, ScalarRole, TensorRole};
use eigenlab_core::mesh::{CanonicalDomain, Mesh};
use eigenlab_core::operator::{assemble, BoundaryCondition, OperatorPair};

const PI: f64 = std::f64::consts::PI;

fn laplace_op(mesh: &Mesh, bc: BoundaryCondition) -> OperatorPair {
    let g = MetricField::flat(mesh);
    let t = g.as_tensor(TensorRole::Coefficient);
    let eta = ScalarField::zero(mesh, ScalarRole::Weight);
    assemble(mesh, &g, &t, &eta, bc).unwrap()
}

fn max_rel_err(got: &[f64], expect: &[f64]) -> f64 {
    got.iter()
        .zip(expect)
        .map(|(&a, &b)| (a - b).abs() / b.abs().max(1e-12))
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------
// Bessel-function oracle, independent of any mesh code
// ---------------------------------------------------------------------

fn bessel_j(n: usize, x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = half.powi(n as i32);
    for k in 1..=n {
        term /= k as f64;
    }
    let mut sum = term;
    let mut m = 1.0;
    while m < 200.0 {
        term *= -half * half / (m * (m + n as f64));
        sum += term;
        if term.abs() < 1e-17 * (sum.abs() + 1e-3) {
            break;
        }
        m += 1.0;
    }
    sum
}

fn bessel_root(n: usize, mut lo: f64, mut hi: f64) -> f64 {
    let flo = bessel_j(n, lo);
    assert!(flo * bessel_j(n, hi) < 0.0, "bracket does not straddle a root");
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if bessel_j(n, mid) * flo > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn bessel_oracle_sanity() {
    // classical values to 6 digits
    assert!((bessel_root(0, 2.0, 3.0) - 2.404_826).abs() < 1e-5);
    assert!((bessel_root(1, 3.0, 4.5) - 3.831_706).abs() < 1e-5);
    assert!((bessel_root(2, 4.6, 5.4) - 5.135_622).abs() < 1e-5);
}

// ---------------------------------------------------------------------
// spectra
// ---------------------------------------------------------------------

#[test]
fn interval_dirichlet_modes() {
    let mesh = CanonicalDomain::Interval {
        length: PI,
        cells: 400,
    }
    .build()
    .unwrap();
    let op = laplace_op(&mesh, BoundaryCondition::Dirichlet);
    let spectrum = solve_eigen(&op, 6).unwrap();
    let expect: Vec<f64> = (1..=6).map(|k| (k * k) as f64).collect();
    let err = max_rel_err(&spectrum.lambdas, &expect);
    assert!(err < 5e-3, "interval spectrum error {err:e}");
    assert!(spectrum.residuals.iter().all(|&r| r < 1e-7));
    assert!(spectrum.mass_orth_residual < 1e-8);
}

#[test]
fn square_dirichlet_modes_with_multiplets() {
    let mesh = CanonicalDomain::Rectangle {
        lx: PI,
        ly: PI,
        nx: 48,
        ny: 48,
    }
    .build()
    .unwrap();
    let op = laplace_op(&mesh, BoundaryCondition::Dirichlet);
    let spectrum = solve_eigen(&op, 8).unwrap();
    let expect = [2.0, 5.0, 5.0, 8.0, 10.0, 10.0, 13.0, 13.0];
    let err = max_rel_err(&spectrum.lambdas, &expect);
    assert!(err < 1e-2, "square spectrum error {err:e}");
    // symmetry-paired modes coincide at machine precision
    let clusters = group_multiplets(&spectrum.lambdas, MULTIPLET_REL_TOL);
    let sizes: Vec<usize> = clusters.iter().map(|c| c.len()).collect();
    assert_eq!(sizes, vec![1, 2, 1, 2, 2]);
}

#[test]
fn torus_lattice_modes() {
    let tau = std::f64::consts::TAU;
    let mesh = CanonicalDomain::FlatTorus {
        lx: tau,
        ly: tau,
        nx: 48,
        ny: 48,
    }
    .build()
    .unwrap();
    let op = laplace_op(&mesh, BoundaryCondition::TNeumann);
    let spectrum = solve_eigen(&op, 9).unwrap();
    assert!(spectrum.lambdas[0].abs() < 1e-9, "zero mode");
    let expect = [1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0];
    let err = max_rel_err(&spectrum.lambdas[1..9], &expect);
    assert!(err < 1e-2, "torus spectrum error {err:e}");
    // the first nonzero level keeps its exact fourfold degeneracy on
    // this grid; the diagonal/antidiagonal pairs of the next level are
    // only asymptotically degenerate
    let clusters = group_multiplets(&spectrum.lambdas, MULTIPLET_REL_TOL);
    assert_eq!(clusters[0], vec![0]);
    assert_eq!(clusters[1], vec![1, 2, 3, 4]);
}

#[test]
fn disk_dirichlet_matches_bessel_roots() {
    let mesh = CanonicalDomain::Disk {
        radius: 1.0,
        rings: 24,
    }
    .build()
    .unwrap();
    let op = laplace_op(&mesh, BoundaryCondition::Dirichlet);
    let spectrum = solve_eigen(&op, 5).unwrap();
    let j01 = bessel_root(0, 2.0, 3.0);
    let j11 = bessel_root(1, 3.0, 4.5);
    let j21 = bessel_root(2, 4.6, 5.4);
    let expect = [
        j01 * j01,
        j11 * j11,
        j11 * j11,
        j21 * j21,
        j21 * j21,
    ];
    let err = max_rel_err(&spectrum.lambdas, &expect);
    assert!(err < 1e-2, "disk spectrum error {err:e}");
    // angular pairs are exact on the symmetric mesh
    let clusters = group_multiplets(&spectrum.lambdas, MULTIPLET_REL_TOL);
    let sizes: Vec<usize> = clusters.iter().map(|c| c.len()).collect();
    assert_eq!(sizes, vec![1, 2, 2]);
}

#[test]
fn sphere_spherical_harmonic_levels() {
    let mesh = CanonicalDomain::Sphere {
        radius: 1.0,
        subdivisions: 3,
    }
    .build()
    .unwrap();
    let op = laplace_op(&mesh, BoundaryCondition::TNeumann);
    let spectrum = solve_eigen(&op, 9).unwrap();
    assert!(spectrum.lambdas[0].abs() < 1e-9);
    // the first level is well resolved; the second carries the larger
    // O(h^2) defect at this subdivision depth
    let err1 = max_rel_err(&spectrum.lambdas[1..4], &[2.0, 2.0, 2.0]);
    assert!(err1 < 1e-2, "sphere first level error {err1:e}");
    let err2 = max_rel_err(&spectrum.lambdas[4..9], &[6.0; 5]);
    assert!(err2 < 2e-2, "sphere second level error {err2:e}");
    let clusters = group_multiplets(&spectrum.lambdas, MULTIPLET_REL_TOL);
    let sizes: Vec<usize> = clusters.iter().map(|c| c.len()).collect();
    assert_eq!(sizes, vec![1, 3, 5]);
}

#[test]
fn refinement_converges_monotonically() {
    let exact: Vec<f64> = (1..=4).map(|k| (k * k) as f64).collect();
    let mut last = f64::INFINITY;
    for n in [60usize, 120, 240] {
        let mesh = CanonicalDomain::Interval {
            length: PI,
            cells: n,
        }
        .build()
        .unwrap();
        let op = laplace_op(&mesh, BoundaryCondition::Dirichlet);
        let spectrum = solve_eigen(&op, 4).unwrap();
        let err = max_rel_err(&spectrum.lambdas, &exact);
        assert!(err < last, "refinement n = {n} did not reduce error");
        last = err;
    }

    let mut last = f64::INFINITY;
    for n in [12usize, 24] {
        let mesh = CanonicalDomain::Rectangle {
            lx: PI,
            ly: PI,
            nx: n,
            ny: n,
        }
        .build()
        .unwrap();
        let op = laplace_op(&mesh, BoundaryCondition::Dirichlet);
        let spectrum = solve_eigen(&op, 3).unwrap();
        let err = max_rel_err(&spectrum.lambdas, &[2.0, 5.0, 5.0]);
        assert!(err < last);
        last = err;
    }
}

#[test]
fn constant_weight_shift_leaves_spectrum_unchanged() {
    let mesh = CanonicalDomain::Rectangle {
        lx: PI,
        ly: PI,
        nx: 20,
        ny: 20,
    }
    .build()
    .unwrap();
    let g = MetricField::flat(&mesh);
    let t = g.as_tensor(TensorRole::Coefficient);
    let base = ScalarField::zero(&mesh, ScalarRole::Weight);
    let shifted = base.shifted(0.7);
    let op_a = assemble(&mesh, &g, &t, &base, BoundaryCondition::Dirichlet).unwrap();
    let op_b = assemble(&mesh, &g, &t, &shifted, BoundaryCondition::Dirichlet).unwrap();
    let sa = solve_eigen(&op_a, 6).unwrap();
    let sb = solve_eigen(&op_b, 6).unwrap();
    let drift = max_rel_err(&sa.lambdas, &sb.lambdas);
    assert!(drift < 1e-10, "weight shift moved the spectrum by {drift:e}");
}

#[test]
fn coefficient_scaling_scales_spectrum_exactly() {
    let mesh = CanonicalDomain::Rectangle {
        lx: PI,
        ly: PI,
        nx: 20,
        ny: 20,
    }
    .build()
    .unwrap();
    let g = MetricField::flat(&mesh);
    let t = g.as_tensor(TensorRole::Coefficient);
    let t2 = t.scaled(2.0);
    let eta = ScalarField::zero(&mesh, ScalarRole::Weight);
    let sa = solve_eigen(
        &assemble(&mesh, &g, &t, &eta, BoundaryCondition::Dirichlet).unwrap(),
        6,
    )
    .unwrap();
    let sb = solve_eigen(
        &assemble(&mesh, &g, &t2, &eta, BoundaryCondition::Dirichlet).unwrap(),
        6,
    )
    .unwrap();
    let doubled: Vec<f64> = sa.lambdas.iter().map(|&l| 2.0 * l).collect();
    let drift = max_rel_err(&sb.lambdas, &doubled);
    assert!(drift < 1e-12, "scaling drift {drift:e}");
}
