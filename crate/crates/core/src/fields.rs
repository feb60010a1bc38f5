//! Geometric fields over a mesh: metrics, symmetric 2-tensors, scalar
//! weights and vector fields.
//!
//! Coefficients are sampled per cell (piecewise constant, evaluated at
//! cell midpoints); scalar weights and vector fields live on vertices
//! and are interpolated linearly.  This is the discretization class the
//! whole workbench commits to: first-order formulas below only ever need
//! per-cell tensor values and P1 gradients.

use crate::error::{Error, Result};
use crate::linalg::{Mat2, SymMat};
use crate::mesh::Mesh;

/// What a symmetric tensor field represents; purely informational, but
/// keeps reports and debugging honest.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TensorRole {
    /// The coefficient tensor `T` of the operator.
    Coefficient,
    /// A metric variation `H = dg/dt`.
    MetricVariation,
    /// A derived first-order variation (e.g. the combined coefficient
    /// variation entering slope formulas).
    CompositeVariation,
    /// A curvature tensor (Ricci).
    Curvature,
    /// An indicator tensor used for sign classification.
    Indicator,
}

/// What a scalar field represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalarRole {
    /// The log-density weight `eta` (measure `e^{-eta} dM`).
    Weight,
    /// The time derivative of the weight.
    WeightRate,
    /// A conformal coefficient factor `psi`.
    ConformalFactor,
    /// Anything else.
    Generic,
}

/// Piecewise-constant Riemannian metric: one SPD tensor per cell, with
/// cached inverses and volume densities.
#[derive(Clone, Debug)]
pub struct MetricField {
    pub dim: usize,
    cells: Vec<SymMat>,
    inv: Vec<SymMat>,
    sqrt_det: Vec<f64>,
}

impl MetricField {
    /// Wraps per-cell tensors, verifying positive definiteness.
    pub fn from_cells(dim: usize, cells: Vec<SymMat>) -> Result<MetricField> {
        let mut inv = Vec::with_capacity(cells.len());
        let mut sqrt_det = Vec::with_capacity(cells.len());
        for (c, g) in cells.iter().enumerate() {
            if !g.is_spd(dim) {
                let min_eig = g.gen_eigs(&SymMat::identity(), dim)[0];
                return Err(Error::NotPositiveDefinite { cell: c, min_eig });
            }
            inv.push(g.inverse(dim));
            sqrt_det.push(g.det(dim).sqrt());
        }
        Ok(MetricField {
            dim,
            cells,
            inv,
            sqrt_det,
        })
    }

    /// The flat metric: identity in chart coordinates on every cell.
    pub fn flat(mesh: &Mesh) -> MetricField {
        let g = vec![SymMat::identity(); mesh.nc()];
        MetricField::from_cells(mesh.dim, g).unwrap()
    }

    /// Samples a metric-valued function of the global coordinates at
    /// cell midpoints.
    pub fn from_fn(
        mesh: &Mesh,
        f: impl Fn(&[f64]) -> SymMat,
    ) -> Result<MetricField> {
        let cells: Vec<SymMat> = (0..mesh.nc())
            .map(|c| f(&mesh.cell_midpoint_global(c)))
            .collect();
        MetricField::from_cells(mesh.dim, cells)
    }

    pub fn nc(&self) -> usize {
        self.cells.len()
    }

    pub fn at(&self, c: usize) -> &SymMat {
        &self.cells[c]
    }

    pub fn inv(&self, c: usize) -> &SymMat {
        &self.inv[c]
    }

    pub fn sqrt_det(&self, c: usize) -> f64 {
        self.sqrt_det[c]
    }

    /// Uniformly scaled metric `s * g` (s > 0).
    pub fn scaled(&self, s: f64) -> Result<MetricField> {
        if !(s > 0.0) {
            return Err(Error::DegenerateSize(format!("metric scale {s}")));
        }
        MetricField::from_cells(self.dim, self.cells.iter().map(|g| g.scale(s)).collect())
    }

    /// Per-cell tensors as a plain field (for algebra with variations).
    pub fn as_tensor(&self, role: TensorRole) -> SymTensorField {
        SymTensorField {
            dim: self.dim,
            role,
            cells: self.cells.clone(),
        }
    }
}

/// The metric induced by the mesh's own chart construction.  Charts are
/// built isometrically (global coordinates for planar meshes, per-cell
/// isometric layouts for embedded surfaces), so the induced metric is
/// the identity on every cell; degenerate cells are rejected at mesh
/// construction time.
pub fn induced_metric(mesh: &Mesh) -> MetricField {
    MetricField::flat(mesh)
}

/// Piecewise-constant symmetric 2-tensor field.
#[derive(Clone, Debug)]
pub struct SymTensorField {
    pub dim: usize,
    pub role: TensorRole,
    cells: Vec<SymMat>,
}

impl SymTensorField {
    pub fn from_cells(dim: usize, role: TensorRole, cells: Vec<SymMat>) -> SymTensorField {
        SymTensorField { dim, role, cells }
    }

    pub fn constant(mesh: &Mesh, value: SymMat, role: TensorRole) -> SymTensorField {
        SymTensorField {
            dim: mesh.dim,
            role,
            cells: vec![value; mesh.nc()],
        }
    }

    pub fn from_fn(
        mesh: &Mesh,
        role: TensorRole,
        f: impl Fn(&[f64]) -> SymMat,
    ) -> SymTensorField {
        SymTensorField {
            dim: mesh.dim,
            role,
            cells: (0..mesh.nc())
                .map(|c| f(&mesh.cell_midpoint_global(c)))
                .collect(),
        }
    }

    pub fn nc(&self) -> usize {
        self.cells.len()
    }

    pub fn at(&self, c: usize) -> &SymMat {
        &self.cells[c]
    }

    pub fn set(&mut self, c: usize, v: SymMat) {
        self.cells[c] = v;
    }

    pub fn scaled(&self, s: f64) -> SymTensorField {
        SymTensorField {
            dim: self.dim,
            role: self.role,
            cells: self.cells.iter().map(|t| t.scale(s)).collect(),
        }
    }

    /// Cell-wise `self + s * other`.
    pub fn axpy(&self, s: f64, other: &SymTensorField) -> SymTensorField {
        SymTensorField {
            dim: self.dim,
            role: self.role,
            cells: self
                .cells
                .iter()
                .zip(&other.cells)
                .map(|(a, b)| a.axpy(s, b))
                .collect(),
        }
    }
}

/// Uniform ellipticity bounds of a coefficient tensor relative to a
/// metric: the extreme generalized eigenvalues of `(T, g)` over all
/// cells.  Errors if `T` fails to be positive definite anywhere.
pub fn ellipticity_bounds(
    t: &SymTensorField,
    g: &MetricField,
) -> Result<(f64, f64)> {
    if t.nc() != g.nc() {
        return Err(Error::Invalid(
            "coefficient and metric defined on different meshes".into(),
        ));
    }
    let mut alpha = f64::INFINITY;
    let mut beta = f64::NEG_INFINITY;
    for c in 0..t.nc() {
        let [lo, hi] = t.at(c).gen_eigs(g.at(c), g.dim);
        if !(lo > 0.0) {
            return Err(Error::NotPositiveDefinite {
                cell: c,
                min_eig: lo,
            });
        }
        alpha = alpha.min(lo);
        beta = beta.max(hi);
    }
    Ok((alpha, beta))
}

/// `g + t H`, failing with the first cell where positivity is lost.
pub fn perturb_metric(g: &MetricField, h: &SymTensorField, t: f64) -> Result<MetricField> {
    if h.nc() != g.nc() {
        return Err(Error::Invalid(
            "variation and metric defined on different meshes".into(),
        ));
    }
    let mut cells = Vec::with_capacity(g.nc());
    for c in 0..g.nc() {
        let gt = g.at(c).axpy(t, h.at(c));
        if !gt.is_spd(g.dim) {
            return Err(Error::IndefinitePerturbation { cell: c, t });
        }
        cells.push(gt);
    }
    MetricField::from_cells(g.dim, cells)
}

/// Per-vertex scalar field with linear interpolation.
#[derive(Clone, Debug)]
pub struct ScalarField {
    pub role: ScalarRole,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn constant(mesh: &Mesh, value: f64, role: ScalarRole) -> ScalarField {
        ScalarField {
            role,
            values: vec![value; mesh.nv()],
        }
    }

    pub fn zero(mesh: &Mesh, role: ScalarRole) -> ScalarField {
        ScalarField::constant(mesh, 0.0, role)
    }

    pub fn from_fn(mesh: &Mesh, role: ScalarRole, f: impl Fn(&[f64]) -> f64) -> ScalarField {
        ScalarField {
            role,
            values: (0..mesh.nv()).map(|v| f(mesh.vertex(v))).collect(),
        }
    }

    pub fn from_values(role: ScalarRole, values: Vec<f64>) -> ScalarField {
        ScalarField { role, values }
    }

    /// Mean of the vertex values over a cell (the exact cell average of
    /// the P1 interpolant).
    pub fn cell_mean(&self, mesh: &Mesh, c: usize) -> f64 {
        let vs = mesh.cell_verts(c);
        vs.iter().map(|&v| self.values[v]).sum::<f64>() / vs.len() as f64
    }

    /// Chart-coordinate gradient of the P1 interpolant on a cell.
    pub fn cell_grad(&self, mesh: &Mesh, c: usize) -> [f64; 2] {
        let vs = mesh.cell_verts(c);
        let mut g = [0.0, 0.0];
        for (a, &v) in vs.iter().enumerate() {
            let ga = mesh.grad(c, a);
            g[0] += self.values[v] * ga[0];
            g[1] += self.values[v] * ga[1];
        }
        g
    }

    pub fn shifted(&self, delta: f64) -> ScalarField {
        ScalarField {
            role: self.role,
            values: self.values.iter().map(|v| v + delta).collect(),
        }
    }

    /// `self + s * other` vertex-wise.
    pub fn axpy(&self, s: f64, other: &ScalarField) -> ScalarField {
        ScalarField {
            role: self.role,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + s * b)
                .collect(),
        }
    }
}

/// Per-vertex vector field in chart components (`dim` components per
/// vertex), interpolated linearly.
#[derive(Clone, Debug)]
pub struct VectorField {
    pub dim: usize,
    pub values: Vec<f64>,
}

impl VectorField {
    pub fn zero(mesh: &Mesh) -> VectorField {
        VectorField {
            dim: mesh.dim,
            values: vec![0.0; mesh.nv() * mesh.dim],
        }
    }

    pub fn from_fn(mesh: &Mesh, f: impl Fn(&[f64]) -> [f64; 2]) -> VectorField {
        let mut values = Vec::with_capacity(mesh.nv() * mesh.dim);
        for v in 0..mesh.nv() {
            let w = f(mesh.vertex(v));
            for d in 0..mesh.dim {
                values.push(w[d]);
            }
        }
        VectorField {
            dim: mesh.dim,
            values,
        }
    }

    pub fn at(&self, v: usize) -> [f64; 2] {
        match self.dim {
            1 => [self.values[v], 0.0],
            _ => [self.values[v * 2], self.values[v * 2 + 1]],
        }
    }

    /// Mean value over a cell's vertices.
    pub fn cell_mean(&self, mesh: &Mesh, c: usize) -> [f64; 2] {
        let vs = mesh.cell_verts(c);
        let mut m = [0.0, 0.0];
        for &v in vs {
            let w = self.at(v);
            m[0] += w[0];
            m[1] += w[1];
        }
        [m[0] / vs.len() as f64, m[1] / vs.len() as f64]
    }

    /// Jacobian of the P1 interpolant on a cell: `J.m[k][i] = d V^k / d x^i`
    /// in chart coordinates.
    pub fn cell_jacobian(&self, mesh: &Mesh, c: usize) -> Mat2 {
        let vs = mesh.cell_verts(c);
        let mut j = Mat2::new(0.0, 0.0, 0.0, 0.0);
        for (a, &v) in vs.iter().enumerate() {
            let ga = mesh.grad(c, a);
            let w = self.at(v);
            for k in 0..mesh.dim {
                for i in 0..mesh.dim {
                    j.m[k][i] += w[k] * ga[i];
                }
            }
        }
        j
    }

    pub fn scaled(&self, s: f64) -> VectorField {
        VectorField {
            dim: self.dim,
            values: self.values.iter().map(|v| s * v).collect(),
        }
    }
}

/// Lie derivative of a piecewise-constant metric along a vector field:
/// per cell, `(L_V g)_ij = g_ik dV^k/dx^j + g_jk dV^k/dx^i`.  Connection
/// terms vanish because the metric is constant on each chart cell.
pub fn lie_derivative_metric(mesh: &Mesh, g: &MetricField, v: &VectorField) -> SymTensorField {
    let mut cells = Vec::with_capacity(mesh.nc());
    for c in 0..mesh.nc() {
        let j = v.cell_jacobian(mesh, c);
        let gc = g.at(c);
        match mesh.dim {
            1 => {
                cells.push(SymMat::new(2.0 * gc.xx * j.m[0][0], 0.0, 0.0));
            }
            _ => {
                // A = g J, H = A + A^T
                let a00 = gc.xx * j.m[0][0] + gc.xy * j.m[1][0];
                let a01 = gc.xx * j.m[0][1] + gc.xy * j.m[1][1];
                let a10 = gc.xy * j.m[0][0] + gc.yy * j.m[1][0];
                let a11 = gc.xy * j.m[0][1] + gc.yy * j.m[1][1];
                cells.push(SymMat::new(2.0 * a00, a01 + a10, 2.0 * a11));
            }
        }
    }
    SymTensorField::from_cells(mesh.dim, TensorRole::MetricVariation, cells)
}
