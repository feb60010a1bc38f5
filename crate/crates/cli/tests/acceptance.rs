//! End-to-end acceptance checks, one test per shipped guarantee.
//!
//! Each test prints a single `acceptance NN <name>: PASS|FAIL` line
//! (visible with `--nocapture`, and always on failure) and pins the
//! tolerances the project promises.  Together these are the release
//! gate: spectrum accuracy against closed forms, the exact invariances
//! of the weighted operator, first-order slope formulas against
//! finite-difference oracles, the extremal-boundary and generic
//! splitting diagnostics, Ricci-flow evolution laws, and byte-level
//! determinism of the command-line artifacts.

use std::f64::consts::PI;
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};

use eigenlab_cli::{run_config, ExperimentConfig};
use eigenlab_core::domain::{boundary_slopes_vector, extremal_check, DomainPath};
use eigenlab_core::eigen::{
    group_multiplets, solve_eigen, solve_eigen_with, SolveOptions, MULTIPLET_REL_TOL,
};
use eigenlab_core::fields::{
    MetricField, ScalarField, ScalarRole, SymTensorField, TensorRole, VectorField,
};
use eigenlab_core::mesh::{CanonicalDomain, Mesh};
use eigenlab_core::operator::BoundaryCondition;
use eigenlab_core::ricci::{
    eigen_along_flow, FemOptions, FlowOptions, HomogeneousFlow, Monotonicity,
};
use eigenlab_core::splitting::{
    min_slope_gap, random_vector_field, splitting_experiment, splitting_indicator,
    Classification, SplittingMode,
};
use eigenlab_core::variation::{
    fd_slopes, hadamard_slopes, EigenProblem, FdSchedule, MetricPath, TensorFamily, VariationSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Runs a check and prints its one-line verdict, then re-raises any
/// failure so the harness still reports it.
fn acceptance(label: &str, body: impl FnOnce()) {
    let result = catch_unwind(AssertUnwindSafe(body));
    let status = if result.is_ok() { "PASS" } else { "FAIL" };
    println!("acceptance {label}: {status}");
    if let Err(cause) = result {
        resume_unwind(cause);
    }
}

/// Flat base data (metric and zero weight) over a canonical domain.
struct Base {
    mesh: Mesh,
    g: MetricField,
    eta: ScalarField,
}

impl Base {
    fn new(domain: CanonicalDomain) -> Base {
        let mesh = domain.build().unwrap();
        let g = MetricField::flat(&mesh);
        let eta = ScalarField::zero(&mesh, ScalarRole::Weight);
        Base { mesh, g, eta }
    }

    fn problem<'a>(
        &'a self,
        family: &'a TensorFamily,
        bc: BoundaryCondition,
    ) -> EigenProblem<'a> {
        EigenProblem {
            mesh: &self.mesh,
            g: &self.g,
            family,
            eta: &self.eta,
            bc,
        }
    }
}

fn unit_square(n: usize) -> CanonicalDomain {
    CanonicalDomain::Rectangle {
        lx: PI,
        ly: PI,
        nx: n,
        ny: n,
    }
}

/// Seeded conformal metric variation `H = a g` with a smooth random
/// trigonometric profile `a`.
fn seeded_conformal(seed: u64, mesh: &Mesh, g: &MetricField) -> VariationSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coef = [0.0_f64; 6];
    for c in coef.iter_mut() {
        *c = rng.gen_range(-1.0..1.0);
    }
    let profile = |p: &[f64]| -> f64 {
        let x = p[0];
        let y = if p.len() > 1 { p[1] } else { 0.0 };
        coef[0] * x.cos() * y.cos()
            + coef[1] * x.sin() * (2.0 * y).sin()
            + coef[2] * (2.0 * x).cos()
            + coef[3] * y.sin()
            + coef[4] * x.cos() * (2.0 * y).cos()
            + coef[5] * (2.0 * x).sin() * y.sin()
    };
    let cells = (0..mesh.nc())
        .map(|c| {
            let p = mesh.cell_midpoint_global(c);
            g.at(c).scale(0.25 * profile(&p))
        })
        .collect();
    VariationSpec {
        h: SymTensorField::from_cells(mesh.dim, TensorRole::MetricVariation, cells),
        eta_rate: ScalarField::zero(mesh, ScalarRole::WeightRate),
    }
}

fn uniform_variation(g: &MetricField, mesh: &Mesh) -> VariationSpec {
    VariationSpec {
        h: g.as_tensor(TensorRole::MetricVariation),
        eta_rate: ScalarField::zero(mesh, ScalarRole::WeightRate),
    }
}

#[test]
fn c01_spectrum_accuracy() {
    acceptance("01 spectrum-accuracy", || {
        let family = TensorFamily::MetricItself;

        // Interval (0, pi): eigenvalues k^2.
        let base = Base::new(CanonicalDomain::Interval {
            length: PI,
            cells: 400,
        });
        let problem = base.problem(&family, BoundaryCondition::Dirichlet);
        let spectrum = solve_eigen(&problem.operator().unwrap(), 6).unwrap();
        for (i, &lam) in spectrum.lambdas.iter().enumerate() {
            let exact = ((i + 1) * (i + 1)) as f64;
            let rel = (lam - exact).abs() / exact;
            assert!(rel <= 5e-3, "interval mode {i}: rel err {rel:.2e}");
        }

        // Square (0, pi)^2: eigenvalues j^2 + k^2 with doublets at 5 and 10.
        let base = Base::new(unit_square(100));
        let problem = base.problem(&family, BoundaryCondition::Dirichlet);
        let spectrum = solve_eigen(&problem.operator().unwrap(), 8).unwrap();
        let exact = [2.0, 5.0, 5.0, 8.0, 10.0, 10.0, 13.0, 13.0];
        for (i, &target) in exact.iter().enumerate() {
            let rel = (spectrum.lambdas[i] - target).abs() / target;
            assert!(rel <= 5e-3, "square mode {i}: rel err {rel:.2e}");
        }
        let clusters = group_multiplets(&spectrum.lambdas, MULTIPLET_REL_TOL);
        assert!(
            clusters.contains(&vec![1, 2]),
            "doublet at 5 not resolved: {clusters:?}"
        );
        assert!(
            clusters.contains(&vec![4, 5]),
            "doublet at 10 not resolved: {clusters:?}"
        );
    });
}

#[test]
fn c02_weighted_operator_invariance() {
    acceptance("02 weighted-operator-invariance", || {
        let mesh = unit_square(24).build().unwrap();
        let g = MetricField::flat(&mesh);
        let eta = ScalarField::from_fn(&mesh, ScalarRole::Weight, |p| {
            0.3 * p[0].cos() * p[1].cos()
        });
        let family = TensorFamily::MetricItself;
        let problem = EigenProblem {
            mesh: &mesh,
            g: &g,
            family: &family,
            eta: &eta,
            bc: BoundaryCondition::Dirichlet,
        };
        let s0 = solve_eigen(&problem.operator().unwrap(), 6).unwrap();

        // Shifting the weight by a constant rescales the measure and
        // must leave every eigenvalue unchanged.
        let eta_shifted = eta.shifted(1.7);
        let shifted = EigenProblem {
            eta: &eta_shifted,
            ..problem
        };
        let s1 = solve_eigen(&shifted.operator().unwrap(), 6).unwrap();
        for i in 0..6 {
            let rel = (s1.lambdas[i] - s0.lambdas[i]).abs() / s0.lambdas[i];
            assert!(rel <= 1e-10, "weight shift moved mode {i} by {rel:.2e}");
        }

        // Doubling the coefficient tensor doubles the Dirichlet form
        // and leaves the mass form alone: every eigenvalue doubles.
        let doubled = TensorFamily::ConformalWeight(ScalarField::constant(
            &mesh,
            2.0,
            ScalarRole::ConformalFactor,
        ));
        let scaled = EigenProblem {
            family: &doubled,
            ..problem
        };
        let s2 = solve_eigen(&scaled.operator().unwrap(), 6).unwrap();
        for i in 0..6 {
            let rel = (s2.lambdas[i] - 2.0 * s0.lambdas[i]).abs() / (2.0 * s0.lambdas[i]);
            assert!(rel <= 1e-12, "doubling moved mode {i} by {rel:.2e}");
        }
    });
}

#[test]
fn c03_metric_slope_formula() {
    acceptance("03 metric-slope-formula", || {
        let base = Base::new(unit_square(24));
        let family = TensorFamily::MetricItself;
        let problem = base.problem(&family, BoundaryCondition::Dirichlet);
        let op = problem.operator().unwrap();
        let spectrum = solve_eigen(&op, 4).unwrap();
        let lam = spectrum.lambdas[0];
        let uniform = uniform_variation(&base.g, &base.mesh);

        // Uniform H = g with T = g: pure scaling, slope exactly -lambda.
        let sm = hadamard_slopes(&problem, &op, &spectrum, &[0], &uniform).unwrap();
        let rel = (sm.slopes[0] + lam).abs() / lam;
        assert!(rel <= 1e-8, "coefficient-follows-metric slope: {rel:.2e}");

        // Frozen coefficient: only the measure and gradients respond,
        // slope exactly -2 lambda.
        let frozen = TensorFamily::Fixed(base.g.as_tensor(TensorRole::Coefficient));
        let problem_frozen = base.problem(&frozen, BoundaryCondition::Dirichlet);
        let op_frozen = problem_frozen.operator().unwrap();
        let s_frozen = solve_eigen(&op_frozen, 4).unwrap();
        let sm = hadamard_slopes(&problem_frozen, &op_frozen, &s_frozen, &[0], &uniform).unwrap();
        let rel = (sm.slopes[0] + 2.0 * s_frozen.lambdas[0]).abs() / (2.0 * s_frozen.lambdas[0]);
        assert!(rel <= 1e-8, "frozen-coefficient slope: {rel:.2e}");

        // Random conformal variation on a simple eigenvalue against a
        // Richardson-extrapolated central difference.
        let var = seeded_conformal(42, &base.mesh, &base.g);
        let pred = hadamard_slopes(&problem, &op, &spectrum, &[0], &var).unwrap().slopes[0];
        let path = MetricPath {
            problem: &problem,
            var: &var,
        };
        let fd = fd_slopes(&path, &[0], &FdSchedule::default(), &SolveOptions::new(4))
            .unwrap()
            .slopes[0];
        let rel = (pred - fd).abs() / fd.abs().max(1e-12);
        assert!(rel <= 1e-3, "conformal slope vs FD: {rel:.2e}");
    });
}

#[test]
fn c04_degenerate_branch_slopes() {
    acceptance("04 degenerate-branch-slopes", || {
        let base = Base::new(unit_square(24));
        let family = TensorFamily::MetricItself;
        let problem = base.problem(&family, BoundaryCondition::Dirichlet);
        let op = problem.operator().unwrap();
        let spectrum = solve_eigen(&op, 6).unwrap();
        let clusters = group_multiplets(&spectrum.lambdas, MULTIPLET_REL_TOL);
        assert!(
            clusters.contains(&vec![1, 2]),
            "first doublet not degenerate: {clusters:?}"
        );
        let scale = 1.0 + spectrum.lambdas[1];

        for seed in 1..=5u64 {
            let var = seeded_conformal(seed, &base.mesh, &base.g);
            let pred = hadamard_slopes(&problem, &op, &spectrum, &[1, 2], &var)
                .unwrap()
                .slopes;
            let path = MetricPath {
                problem: &problem,
                var: &var,
            };
            let fd = fd_slopes(&path, &[1, 2], &FdSchedule::default(), &SolveOptions::new(6))
                .unwrap()
                .slopes;
            for j in 0..2 {
                let rel = (pred[j] - fd[j]).abs() / fd[j].abs().max(1e-3 * scale);
                assert!(
                    rel <= 1e-2,
                    "seed {seed} branch {j}: predicted {} vs FD {} (rel {rel:.2e})",
                    pred[j],
                    fd[j]
                );
            }
        }
    });
}

#[test]
fn c05_domain_slope_formula() {
    acceptance("05 domain-slope-formula", || {
        let family = TensorFamily::MetricItself;

        // Interval dilation V = x d/dx: slope exactly -2 lambda.
        let base = Base::new(CanonicalDomain::Interval {
            length: PI,
            cells: 6000,
        });
        let problem = base.problem(&family, BoundaryCondition::Dirichlet);
        let op = problem.operator().unwrap();
        let spectrum = solve_eigen(&op, 2).unwrap();
        let v = VectorField::from_fn(&base.mesh, |p| [p[0], 0.0]);
        for k in 0..2 {
            let lam = spectrum.lambdas[k];
            let sm = boundary_slopes_vector(&problem, &op, &spectrum, &[k], &v).unwrap();
            let rel = (sm.slopes[0] + 2.0 * lam).abs() / (2.0 * lam);
            assert!(rel <= 1e-6, "interval mode {k}: rel err {rel:.2e}");
        }

        // Unit-disk radial dilation: boundary integral against the
        // finite-difference slope of the pulled-back family.  The
        // one-sided normal-derivative recovery on a curved boundary is
        // first-order, hence the loose tolerance.
        let base = Base::new(CanonicalDomain::Disk {
            radius: 1.0,
            rings: 64,
        });
        let problem = base.problem(&family, BoundaryCondition::Dirichlet);
        let op = problem.operator().unwrap();
        let spectrum = solve_eigen_with(&op, &SolveOptions::new(1)).unwrap();
        let v = VectorField::from_fn(&base.mesh, |p| [p[0], p[1]]);
        let pred = boundary_slopes_vector(&problem, &op, &spectrum, &[0], &v)
            .unwrap()
            .slopes[0];
        let path = DomainPath {
            problem: &problem,
            v: &v,
        };
        let fd = fd_slopes(&path, &[0], &FdSchedule::default(), &SolveOptions::new(1))
            .unwrap()
            .slopes[0];
        let rel = (pred - fd).abs() / fd.abs();
        assert!(rel <= 2e-2, "disk dilation: boundary {pred} vs FD {fd} (rel {rel:.2e})");
    });
}

#[test]
fn c06_conormal_domain_formula() {
    acceptance("06 conormal-domain-formula", || {
        let base = Base::new(unit_square(32));
        let family = TensorFamily::MetricItself;
        let problem = base.problem(&family, BoundaryCondition::TNeumann);
        let op = problem.operator().unwrap();
        let spectrum = solve_eigen(&op, 6).unwrap();
        let clusters = group_multiplets(&spectrum.lambdas, MULTIPLET_REL_TOL);
        assert!(
            clusters.contains(&vec![1, 2]),
            "first nonzero doublet not degenerate: {clusters:?}"
        );

        // Seeded deformation with nonzero normal component.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let v = random_vector_field(&mut rng, &base.mesh);
        let pred = boundary_slopes_vector(&problem, &op, &spectrum, &[1, 2], &v)
            .unwrap()
            .slopes;
        let path = DomainPath {
            problem: &problem,
            v: &v,
        };
        let fd = fd_slopes(&path, &[1, 2], &FdSchedule::default(), &SolveOptions::new(6))
            .unwrap()
            .slopes;
        for j in 0..2 {
            let rel = (pred[j] - fd[j]).abs() / fd[j].abs().max(1e-3);
            assert!(rel <= 2e-2, "branch {j}: {} vs FD {} (rel {rel:.2e})", pred[j], fd[j]);
        }

        // Tangential deformation: every slope vanishes.
        let vt = VectorField::from_fn(&base.mesh, |p| {
            [p[0].sin() * (1.0 + 0.2 * p[1]), p[1].sin()]
        });
        for cluster in [vec![1, 2], vec![3]] {
            let sm = boundary_slopes_vector(&problem, &op, &spectrum, &cluster, &vt).unwrap();
            for (j, &slope) in sm.slopes.iter().enumerate() {
                let lam = spectrum.lambdas[cluster[j]];
                assert!(
                    slope.abs() <= 1e-8 * (1.0 + lam),
                    "tangential slope {slope:.2e} at eigenvalue {lam}"
                );
            }
        }
    });
}

#[test]
fn c07_extremal_boundary_criterion() {
    acceptance("07 extremal-boundary-criterion", || {
        let family = TensorFamily::MetricItself;
        let disk_ratio = |rings: usize| -> f64 {
            let base = Base::new(CanonicalDomain::Disk { radius: 1.0, rings });
            let problem = base.problem(&family, BoundaryCondition::Dirichlet);
            let op = problem.operator().unwrap();
            let spectrum = solve_eigen_with(&op, &SolveOptions::new(1)).unwrap();
            extremal_check(&problem, &op, &spectrum, 0)
                .unwrap()
                .deviation_ratio
        };

        // The disk ground state has a rotation-invariant conormal
        // profile: the deviation ratio is small and shrinks under
        // refinement.
        let coarse = disk_ratio(16);
        let fine = disk_ratio(32);
        assert!(coarse <= 2e-2, "disk deviation ratio {coarse:.3e}");
        assert!(
            fine < coarse,
            "refinement did not improve: {coarse:.3e} -> {fine:.3e}"
        );

        // The square is not extremal: its profile varies along each edge.
        let base = Base::new(unit_square(24));
        let problem = base.problem(&family, BoundaryCondition::Dirichlet);
        let op = problem.operator().unwrap();
        let spectrum = solve_eigen(&op, 1).unwrap();
        let ratio = extremal_check(&problem, &op, &spectrum, 0)
            .unwrap()
            .deviation_ratio;
        assert!(ratio >= 0.2, "square deviation ratio only {ratio:.3e}");
    });
}

#[test]
fn c08_generic_splitting() {
    acceptance("08 generic-splitting", || {
        let base = Base::new(unit_square(20));
        let family = TensorFamily::MetricItself;
        let problem = base.problem(&family, BoundaryCondition::Dirichlet);
        let op = problem.operator().unwrap();
        let spectrum = solve_eigen(&op, 6).unwrap();
        let clusters = group_multiplets(&spectrum.lambdas, MULTIPLET_REL_TOL);
        assert!(clusters.contains(&vec![1, 2]), "doublet missing: {clusters:?}");

        let metric = splitting_experiment(
            &problem,
            &op,
            &spectrum,
            &[1, 2],
            SplittingMode::Metric,
            20,
            1,
        )
        .unwrap();
        let frac = metric.fraction.unwrap();
        assert!(frac >= 0.95, "metric splitting fraction {frac}");

        let domain = splitting_experiment(
            &problem,
            &op,
            &spectrum,
            &[1, 2],
            SplittingMode::Domain,
            20,
            2,
        )
        .unwrap();
        let frac = domain.fraction.unwrap();
        assert!(frac >= 0.95, "domain splitting fraction {frac}");

        // The deliberately non-generic uniform variation H = g scales
        // both branches identically: the slope gap is zero.
        let uniform = uniform_variation(&base.g, &base.mesh);
        let sm = hadamard_slopes(&problem, &op, &spectrum, &[1, 2], &uniform).unwrap();
        let gap = min_slope_gap(&sm.slopes);
        assert!(
            gap.abs() <= 1e-10 * (1.0 + spectrum.lambdas[1]),
            "uniform variation split the doublet: gap {gap:.2e}"
        );
    });
}

#[test]
fn c09_coefficient_sign_classifier() {
    acceptance("09 coefficient-sign-classifier", || {
        let mesh = unit_square(8).build().unwrap();
        let g = MetricField::flat(&mesh);

        let conformal = TensorFamily::ConformalWeight(ScalarField::constant(
            &mesh,
            1.5,
            ScalarRole::ConformalFactor,
        ));
        let report = splitting_indicator(&conformal, &mesh, &g, 3).unwrap();
        assert_eq!(report.classification, Classification::Positive);

        let report = splitting_indicator(&TensorFamily::MetricItself, &mesh, &g, 2).unwrap();
        assert_eq!(report.classification, Classification::IdenticallyZero);

        let spd = SymTensorField::constant(
            &mesh,
            *g.at(0),
            TensorRole::Coefficient,
        );
        let report = splitting_indicator(&TensorFamily::Fixed(spd), &mesh, &g, 3).unwrap();
        assert_eq!(report.classification, Classification::Negative);
    });
}

#[test]
fn c10_ricci_flow_evolution() {
    acceptance("10 ricci-flow-evolution", || {
        let family = TensorFamily::MetricItself;

        // Round 2-sphere: evolution rate 2 lambda at the start, and the
        // icosphere finite-element cross-check tracks the scaling law.
        let sphere2 = HomogeneousFlow::Sphere { n: 2, radius: 1.0 };
        let opts = FlowOptions {
            fem: Some(FemOptions { subdivisions: 4 }),
        };
        let trace = eigen_along_flow(&sphere2, &family, &[1], &[0.0, 0.1, 0.3], &opts).unwrap();
        let series = &trace.series[0];
        let rel = (series.primes_pred[0] - 2.0 * series.lambdas[0]).abs()
            / (2.0 * series.lambdas[0]);
        assert!(rel <= 1e-10, "2-sphere start rate: rel {rel:.2e}");
        let fem_err = series.fem_rel_err.unwrap();
        assert!(fem_err <= 1e-2, "icosphere cross-check: rel {fem_err:.2e}");
        assert_eq!(trace.verdict, Monotonicity::StrictlyIncreasing);

        // Round 3-sphere: rate 4 lambda, the product lambda(t) c(t) is
        // a flow invariant, and the eigenvalue grows 25-fold by t=0.24.
        let sphere3 = HomogeneousFlow::Sphere { n: 3, radius: 1.0 };
        let grid = [0.0, 0.06, 0.12, 0.18, 0.24];
        let trace =
            eigen_along_flow(&sphere3, &family, &[1], &grid, &FlowOptions::default()).unwrap();
        let series = &trace.series[0];
        let rel = (series.primes_pred[0] - 4.0 * series.lambdas[0]).abs()
            / (4.0 * series.lambdas[0]);
        assert!(rel <= 1e-10, "3-sphere start rate: rel {rel:.2e}");
        let invariant = series.lambdas[0] * trace.scales[0];
        for i in 0..grid.len() {
            let drift =
                (series.lambdas[i] * trace.scales[i] - invariant).abs() / invariant.abs();
            assert!(drift <= 1e-10, "lambda*c drift {drift:.2e} at t={}", grid[i]);
        }
        let growth = series.lambdas[4] / series.lambdas[0];
        assert!((growth - 25.0).abs() <= 1e-8, "growth factor {growth}");
        assert_eq!(trace.verdict, Monotonicity::StrictlyIncreasing);

        // Flat torus: a fixed point of the flow, rates identically zero
        // and the eigenvalue curve constant.
        let torus = HomogeneousFlow::FlatTorus { lx: 2.0 * PI, ly: PI };
        let trace =
            eigen_along_flow(&torus, &family, &[1], &[0.0, 0.5, 1.0], &FlowOptions::default())
                .unwrap();
        let series = &trace.series[0];
        for i in 0..3 {
            assert!(
                series.primes_pred[i].abs() <= 1e-12 * (1.0 + series.lambdas[i]),
                "torus rate {:.2e} at sample {i}",
                series.primes_pred[i]
            );
            let drift = (series.lambdas[i] - series.lambdas[0]).abs() / series.lambdas[0];
            assert!(drift <= 1e-12, "torus eigenvalue drift {drift:.2e}");
        }
        assert_eq!(trace.verdict, Monotonicity::NonDecreasing);
    });
}

#[test]
fn c11_determinism() {
    acceptance("11 determinism", || {
        let configs = [
            r#"{
                "experiment": "split",
                "seed": 42,
                "domain": {"kind": "rectangle", "lx": 3.141592653589793, "ly": 3.141592653589793, "nx": 14, "ny": 14},
                "cluster": [1, 2],
                "split": {"mode": "metric", "trials": 6}
            }"#,
            r#"{
                "experiment": "vary-domain",
                "seed": 3,
                "domain": {"kind": "rectangle", "lx": 3.141592653589793, "ly": 3.141592653589793, "nx": 16, "ny": 16},
                "solver": {"k": 4},
                "cluster": [0],
                "variation": {"kind": "seeded"}
            }"#,
        ];
        for raw in configs {
            let dir_a = tempfile::tempdir().unwrap();
            let dir_b = tempfile::tempdir().unwrap();
            let cfg_a = ExperimentConfig::parse(raw.as_bytes()).unwrap();
            let (manifest_a, _) = run_config(&cfg_a, raw.as_bytes(), dir_a.path()).unwrap();
            let cfg_b = ExperimentConfig::parse(raw.as_bytes()).unwrap();
            let (manifest_b, _) = run_config(&cfg_b, raw.as_bytes(), dir_b.path()).unwrap();

            assert_eq!(manifest_a.artifacts, manifest_b.artifacts);
            assert!(!manifest_a.artifacts.is_empty());
            for name in &manifest_a.artifacts {
                let body_a = std::fs::read(dir_a.path().join(name)).unwrap();
                let body_b = std::fs::read(dir_b.path().join(name)).unwrap();
                assert!(
                    body_a == body_b,
                    "artifact {name} differs between identical runs"
                );
            }
        }
    });
}
