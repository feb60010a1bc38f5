//! Weak-form assembly of the weighted operator pencil.
//!
//! For the operator `L f = div(T grad f) - <grad eta, T grad f>` on a
//! mesh with metric `g` and weight measure `dm = e^{-eta} dM`, the
//! generalized eigenproblem `-L phi = lambda phi` discretizes to
//! `K phi = lambda B phi` with
//!
//! `K_ab = integral T(grad phi_a, grad phi_b) dm`,
//! `B_ab = integral phi_a phi_b dm`.
//!
//! P1 elements with per-cell-constant coefficients make both integrals
//! exact: the stiffness integrand is constant per cell and the mass
//! element matrix is the standard simplex moment formula.  Homogeneous
//! Dirichlet conditions remove boundary vertices; the conormal condition
//! `T(grad phi, nu) = 0` is natural for this weak form and needs no
//! constraint.

use crate::error::{Error, Result};
use crate::fields::{ellipticity_bounds, MetricField, ScalarField, SymTensorField};
use crate::mesh::Mesh;
use crate::sparse::Csr;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// Homogeneous Dirichlet: eigenfunctions vanish on the boundary.
    Dirichlet,
    /// Conormal (weighted Neumann) condition `T(grad phi, nu) = 0`,
    /// imposed weakly; on closed manifolds this is the unconstrained
    /// problem.
    TNeumann,
}

impl std::fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryCondition::Dirichlet => write!(f, "dirichlet"),
            BoundaryCondition::TNeumann => write!(f, "t-neumann"),
        }
    }
}

/// Assembled stiffness/mass pencil restricted to free DOFs.
#[derive(Clone, Debug)]
pub struct OperatorPair {
    pub stiffness: Csr,
    pub mass: Csr,
    pub bc: BoundaryCondition,
    pub dim: usize,
    /// free index -> vertex index
    pub free_to_vertex: Vec<usize>,
    /// vertex index -> free index (None when constrained)
    pub vertex_to_free: Vec<Option<usize>>,
    /// Frobenius norms, used for relative residuals.
    pub stiffness_norm: f64,
    pub mass_norm: f64,
    /// Total weighted volume of the mesh (the measure of `dm`).
    pub weighted_volume: f64,
}

impl OperatorPair {
    pub fn n_free(&self) -> usize {
        self.free_to_vertex.len()
    }

    pub fn n_constrained(&self) -> usize {
        self.vertex_to_free.len() - self.free_to_vertex.len()
    }

    /// Zero-pads a free-DOF vector to the full vertex space.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.vertex_to_free.len()];
        for (f, &v) in self.free_to_vertex.iter().enumerate() {
            full[v] = x[f];
        }
        full
    }

    /// Restricts a vertex-space vector to free DOFs.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free_to_vertex.iter().map(|&v| full[v]).collect()
    }

    /// Mass (weighted L2) inner product of free-DOF vectors.
    pub fn b_inner(&self, x: &[f64], y: &[f64]) -> f64 {
        let by = self.mass.matvec_alloc(y);
        x.iter().zip(&by).map(|(a, b)| a * b).sum()
    }

    pub fn b_norm(&self, x: &[f64]) -> f64 {
        self.b_inner(x, x).max(0.0).sqrt()
    }

    /// Relative eigenpair residual `||K x - lambda B x||` scaled by the
    /// operator norms and `||x||`.
    pub fn eigen_residual(&self, lambda: f64, x: &[f64]) -> f64 {
        let kx = self.stiffness.matvec_alloc(x);
        let bx = self.mass.matvec_alloc(x);
        let mut num = 0.0;
        let mut xn = 0.0;
        for i in 0..x.len() {
            let r = kx[i] - lambda * bx[i];
            num += r * r;
            xn += x[i] * x[i];
        }
        let scale = (self.stiffness_norm + lambda.abs() * self.mass_norm) * xn.sqrt();
        num.sqrt() / scale.max(f64::MIN_POSITIVE)
    }
}

/// Assembles the operator pencil.  Validates field sizes and uniform
/// ellipticity of `T` before doing any work.
pub fn assemble(
    mesh: &Mesh,
    g: &MetricField,
    t: &SymTensorField,
    eta: &ScalarField,
    bc: BoundaryCondition,
) -> Result<OperatorPair> {
    if g.nc() != mesh.nc() || t.nc() != mesh.nc() {
        return Err(Error::Invalid(
            "metric or coefficient field does not match the mesh".into(),
        ));
    }
    if eta.values.len() != mesh.nv() {
        return Err(Error::Invalid(
            "weight field does not match the mesh vertex count".into(),
        ));
    }
    if !eta.values.iter().all(|v| v.is_finite()) {
        return Err(Error::Invalid("non-finite weight value".into()));
    }
    ellipticity_bounds(t, g)?;

    let nv = mesh.nv();
    let dim = mesh.dim;
    let nodes = dim + 1;

    // free DOF numbering
    let constrained: Vec<bool> = match bc {
        BoundaryCondition::Dirichlet => mesh.boundary_vertex_mask(),
        BoundaryCondition::TNeumann => vec![false; nv],
    };
    let mut vertex_to_free = vec![None; nv];
    let mut free_to_vertex = Vec::new();
    for v in 0..nv {
        if !constrained[v] {
            vertex_to_free[v] = Some(free_to_vertex.len());
            free_to_vertex.push(v);
        }
    }
    if free_to_vertex.is_empty() {
        return Err(Error::EmptyFreeSet);
    }
    let nfree = free_to_vertex.len();

    // element mass factor: integral of phi_a phi_b over the reference
    // simplex scaled by volume is vol * (1 + delta_ab) / ((d+1)(d+2))
    let mass_fac = 1.0 / ((nodes * (nodes + 1)) as f64);

    let mut k_trip: Vec<(usize, usize, f64)> = Vec::with_capacity(mesh.nc() * nodes * nodes);
    let mut b_trip: Vec<(usize, usize, f64)> = Vec::with_capacity(mesh.nc() * nodes * nodes);
    let mut weighted_volume = 0.0;

    for c in 0..mesh.nc() {
        let w = (-eta.cell_mean(mesh, c)).exp() * g.sqrt_det(c) * mesh.chart_vol(c);
        weighted_volume += w;
        let wt = t.at(c).sandwich(g.inv(c), dim); // g^{-1} T g^{-1}
        let vs = mesh.cell_verts(c);
        for a in 0..nodes {
            let fa = match vertex_to_free[vs[a]] {
                Some(f) => f,
                None => continue,
            };
            let ga = mesh.grad(c, a);
            for b in 0..nodes {
                let fb = match vertex_to_free[vs[b]] {
                    Some(f) => f,
                    None => continue,
                };
                let gb = mesh.grad(c, b);
                k_trip.push((fa, fb, wt.quad(ga, gb, dim) * w));
                let mab = w * mass_fac * if a == b { 2.0 } else { 1.0 };
                b_trip.push((fa, fb, mab));
            }
        }
    }

    let stiffness = Csr::from_triplets(nfree, &k_trip);
    let mass = Csr::from_triplets(nfree, &b_trip);
    let stiffness_norm = frob(&stiffness);
    let mass_norm = frob(&mass);

    Ok(OperatorPair {
        stiffness,
        mass,
        bc,
        dim,
        free_to_vertex,
        vertex_to_free,
        stiffness_norm,
        mass_norm,
        weighted_volume,
    })
}

fn frob(a: &Csr) -> f64 {
    a.val.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{ScalarRole, TensorRole};
    use crate::linalg::SymMat;
    use crate::mesh::CanonicalDomain;

    fn square_op(n: usize, bc: BoundaryCondition) -> OperatorPair {
        let mesh = CanonicalDomain::Rectangle {
            lx: 1.0,
            ly: 1.0,
            nx: n,
            ny: n,
        }
        .build()
        .unwrap();
        let g = MetricField::flat(&mesh);
        let t = SymTensorField::constant(&mesh, SymMat::identity(), TensorRole::Coefficient);
        let eta = ScalarField::zero(&mesh, ScalarRole::Weight);
        assemble(&mesh, &g, &t, &eta, bc).unwrap()
    }

    #[test]
    fn stiffness_and_mass_are_symmetric() {
        let op = square_op(6, BoundaryCondition::Dirichlet);
        assert!(op.stiffness.max_asymmetry() < 1e-14);
        assert!(op.mass.max_asymmetry() < 1e-14);
    }

    #[test]
    fn dirichlet_removes_boundary_vertices() {
        let op = square_op(6, BoundaryCondition::Dirichlet);
        assert_eq!(op.n_free(), 5 * 5);
        assert_eq!(op.n_constrained(), 49 - 25);
        let neumann = square_op(6, BoundaryCondition::TNeumann);
        assert_eq!(neumann.n_free(), 49);
    }

    #[test]
    fn mass_total_is_weighted_volume() {
        // sum of all mass entries = integral of 1 = weighted volume
        let op = square_op(5, BoundaryCondition::TNeumann);
        let total: f64 = op.mass.val.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((op.weighted_volume - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_function_is_in_stiffness_kernel_for_neumann() {
        let op = square_op(5, BoundaryCondition::TNeumann);
        let ones = vec![1.0; op.n_free()];
        let k1 = op.stiffness.matvec_alloc(&ones);
        let worst = k1.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(worst < 1e-13, "constant not in kernel: {worst}");
    }

    #[test]
    fn stiffness_matches_dirichlet_laplacian_energy() {
        // energy of the interpolated function x(1-x)y(1-y) under the flat
        // Laplacian, compared against a directly computed quadrature
        let mesh = CanonicalDomain::Rectangle {
            lx: 1.0,
            ly: 1.0,
            nx: 16,
            ny: 16,
        }
        .build()
        .unwrap();
        let g = MetricField::flat(&mesh);
        let t = SymTensorField::constant(&mesh, SymMat::identity(), TensorRole::Coefficient);
        let eta = ScalarField::zero(&mesh, ScalarRole::Weight);
        let op = assemble(&mesh, &g, &t, &eta, BoundaryCondition::Dirichlet).unwrap();
        let f = ScalarField::from_fn(&mesh, ScalarRole::Generic, |p| {
            p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1])
        });
        let x = op.restrict(&f.values);
        let kx = op.stiffness.matvec_alloc(&x);
        let energy: f64 = x.iter().zip(&kx).map(|(a, b)| a * b).sum();
        // exact Dirichlet energy of x(1-x)y(1-y) is 1/45; P1 interpolation
        // converges O(h^2)
        let exact = 1.0 / 45.0;
        assert!(
            (energy - exact).abs() / exact < 1e-2,
            "energy {energy} vs {exact}"
        );
    }

    #[test]
    fn weight_scales_measure() {
        let mesh = CanonicalDomain::Interval {
            length: 1.0,
            cells: 10,
        }
        .build()
        .unwrap();
        let g = MetricField::flat(&mesh);
        let t = SymTensorField::constant(&mesh, SymMat::identity(), TensorRole::Coefficient);
        let eta = ScalarField::constant(&mesh, 2.0_f64.ln(), ScalarRole::Weight);
        let op = assemble(&mesh, &g, &t, &eta, BoundaryCondition::TNeumann).unwrap();
        // e^{-ln 2} = 1/2 halves the volume
        assert!((op.weighted_volume - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_spd_coefficient() {
        let mesh = CanonicalDomain::Rectangle {
            lx: 1.0,
            ly: 1.0,
            nx: 4,
            ny: 4,
        }
        .build()
        .unwrap();
        let g = MetricField::flat(&mesh);
        let mut t = SymTensorField::constant(&mesh, SymMat::identity(), TensorRole::Coefficient);
        t.set(3, SymMat::new(1.0, 2.0, 1.0)); // det < 0
        let eta = ScalarField::zero(&mesh, ScalarRole::Weight);
        assert!(matches!(
            assemble(&mesh, &g, &t, &eta, BoundaryCondition::Dirichlet),
            Err(Error::NotPositiveDefinite { cell: 3, .. })
        ));
    }

    #[test]
    fn expand_restrict_roundtrip() {
        let op = square_op(4, BoundaryCondition::Dirichlet);
        let x: Vec<f64> = (0..op.n_free()).map(|i| i as f64 + 0.5).collect();
        let full = op.expand(&x);
        assert_eq!(op.restrict(&full), x);
        // constrained entries are zero
        for (v, f) in op.vertex_to_free.iter().enumerate() {
            if f.is_none() {
                assert_eq!(full[v], 0.0);
            }
        }
    }
}
