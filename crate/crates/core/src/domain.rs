//! Domain deformations: boundary-integral eigenvalue slopes, the
//! pullback-metric realization of a deformation (used as a volume-side
//! oracle), volume-preserving boundary fields, and the extremal-domain
//! constancy diagnostic.
//!
//! A deformation is a vector field `V` on the closed domain, realized
//! as the family `f_t = id + tV`.  Its first-order effect on a
//! Dirichlet eigenvalue cluster is
//!
//! `S_ij = - integral_bdry  dphi_i/dnu dphi_j/dnu T(nu,nu) <V,nu> dnu`
//!
//! and on a natural-condition cluster
//!
//! `S_ij = + integral_bdry (T(grad phi_i, grad phi_j) - lambda phi_i phi_j) <V,nu> dnu`
//!
//! where `nu` is the outward unit normal of the metric, `dnu` the
//! weighted boundary measure `e^{-eta} dsigma`, and only the normal
//! component of `V` enters.  The same deformation can be pulled back to
//! the fixed mesh (`g_t = f_t^* g`, `T_t = f_t^* T`,
//! `eta_t = eta . f_t`), which turns it into an ordinary coefficient
//! variation whose finite-difference slopes must agree with the
//! boundary integrals; that agreement is the main correctness check.

use crate::eigen::Spectrum;
use crate::error::{Error, Result};
use crate::fields::{
    MetricField, ScalarField, ScalarRole, SymTensorField, TensorRole, VectorField,
};
use crate::linalg::{inversion_step, Mat2};
use crate::mesh::Mesh;
use crate::operator::{assemble, BoundaryCondition, OperatorPair};
use crate::variation::{validate_cluster, EigenProblem, OperatorPath, SlopeMatrix, TensorFamily};
use nalgebra::{DMatrix, SymmetricEigen};
use std::fmt::Write as _;

/// Per-boundary-face scalar values, aligned with the mesh's boundary
/// face order.
#[derive(Clone, Debug)]
pub struct BoundaryField {
    pub values: Vec<f64>,
}

impl BoundaryField {
    pub fn from_values(mesh: &Mesh, values: Vec<f64>) -> Result<BoundaryField> {
        if values.len() != mesh.nb() {
            return Err(Error::Invalid(format!(
                "boundary field has {} values for {} faces",
                values.len(),
                mesh.nb()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite boundary value".into()));
        }
        Ok(BoundaryField { values })
    }

    /// Samples a function of the global face-midpoint coordinates.
    pub fn from_fn(mesh: &Mesh, f: impl Fn(&[f64]) -> f64) -> BoundaryField {
        let values = (0..mesh.nb())
            .map(|fi| {
                let vs = mesh.face_verts(fi);
                let mut mid = vec![0.0; mesh.coord_dim];
                for &v in vs {
                    let p = mesh.vertex(v);
                    for (m, &x) in mid.iter_mut().zip(p) {
                        *m += x / vs.len() as f64;
                    }
                }
                f(&mid)
            })
            .collect();
        BoundaryField { values }
    }

    /// Weighted integral over the boundary.
    pub fn integral(&self, mesh: &Mesh, g: &MetricField, eta: &ScalarField) -> f64 {
        (0..mesh.nb())
            .map(|f| self.values[f] * face_weight(mesh, g, eta, f))
            .sum()
    }

    /// Weighted integral of the absolute value.
    pub fn abs_integral(&self, mesh: &Mesh, g: &MetricField, eta: &ScalarField) -> f64 {
        (0..mesh.nb())
            .map(|f| self.values[f].abs() * face_weight(mesh, g, eta, f))
            .sum()
    }
}

/// Weighted measure of one boundary face: `e^{-eta}` times the metric
/// face length (in 1D a boundary face is a point with unit measure).
pub fn face_weight(mesh: &Mesh, g: &MetricField, eta: &ScalarField, f: usize) -> f64 {
    let face = mesh.face_geometry(f);
    let c = mesh.boundary_face(f).cell;
    let eta_face = face_mean(mesh, eta, f);
    let len = if mesh.dim == 1 {
        1.0
    } else {
        let tau = face.tangent;
        face.chart_len * g.at(c).quad(tau, tau, 2).sqrt()
    };
    (-eta_face).exp() * len
}

/// Outward unit normal of the metric, in the adjacent cell's chart.
pub fn metric_normal(mesh: &Mesh, g: &MetricField, f: usize) -> [f64; 2] {
    let face = mesh.face_geometry(f);
    let c = mesh.boundary_face(f).cell;
    let ginv = g.inv(c);
    let raised = ginv.apply(face.euclid_normal, mesh.dim);
    let norm = ginv
        .quad(face.euclid_normal, face.euclid_normal, mesh.dim)
        .sqrt();
    [raised[0] / norm, raised[1] / norm]
}

fn face_mean(mesh: &Mesh, s: &ScalarField, f: usize) -> f64 {
    let vs = mesh.face_verts(f);
    vs.iter().map(|&v| s.values[v]).sum::<f64>() / vs.len() as f64
}

fn face_vector_mean(mesh: &Mesh, v: &VectorField, f: usize) -> [f64; 2] {
    let vs = mesh.face_verts(f);
    let mut out = [0.0, 0.0];
    for &vert in vs {
        let val = v.at(vert);
        out[0] += val[0] / vs.len() as f64;
        out[1] += val[1] / vs.len() as f64;
    }
    out
}

/// A deformation family `f_t = id + tV` of the domain.
#[derive(Clone, Debug)]
pub struct DiffeoFamily {
    pub v: VectorField,
}

impl DiffeoFamily {
    /// Largest `|t|` for which `f_t` keeps every cell positively
    /// oriented (infinite when the deformation is orientation-safe for
    /// all parameters).
    pub fn max_parameter(&self, mesh: &Mesh) -> f64 {
        let mut bound = f64::INFINITY;
        for c in 0..mesh.nc() {
            let a = self.v.cell_jacobian(mesh, c);
            for positive in [true, false] {
                if let Some(root) = inversion_step(&a, mesh.dim, positive) {
                    bound = bound.min(root.abs());
                }
            }
        }
        bound
    }

    /// The normal component `<V, nu>` per boundary face.
    pub fn normal_component(&self, mesh: &Mesh, g: &MetricField) -> BoundaryField {
        normal_component(mesh, g, &self.v)
    }
}

/// `<V, nu>` of the metric per boundary face, sampled at face midpoints.
pub fn normal_component(mesh: &Mesh, g: &MetricField, v: &VectorField) -> BoundaryField {
    let values = (0..mesh.nb())
        .map(|f| {
            let c = mesh.boundary_face(f).cell;
            let nu = metric_normal(mesh, g, f);
            let vmid = face_vector_mean(mesh, v, f);
            g.at(c).quad(vmid, nu, mesh.dim)
        })
        .collect();
    BoundaryField { values }
}

/// Directional derivative `<grad s, V>` of a vertex scalar field,
/// recovered at vertices as the cell-volume-weighted average of the
/// (cellwise constant) chart gradient paired with `V` at the vertex.
/// The pairing is metric-free: a differential applied to a vector.
pub fn directional_derivative(
    mesh: &Mesh,
    s: &ScalarField,
    v: &VectorField,
    role: ScalarRole,
) -> ScalarField {
    let mut acc = vec![0.0; mesh.nv()];
    let mut wsum = vec![0.0; mesh.nv()];
    for c in 0..mesh.nc() {
        let ds = s.cell_grad(mesh, c);
        let w = mesh.chart_vol(c);
        for &vert in mesh.cell_verts(c) {
            let vv = v.at(vert);
            acc[vert] += w * (ds[0] * vv[0] + ds[1] * vv[1]);
            wsum[vert] += w;
        }
    }
    let values = acc
        .iter()
        .zip(&wsum)
        .map(|(a, w)| if *w > 0.0 { a / w } else { 0.0 })
        .collect();
    ScalarField::from_values(role, values)
}

fn cell_deformation(
    mesh: &Mesh,
    v: &VectorField,
    t: f64,
) -> Result<Vec<Mat2>> {
    let mut jacobians = Vec::with_capacity(mesh.nc());
    for c in 0..mesh.nc() {
        let j = v.cell_jacobian(mesh, c).id_plus_scaled(t, mesh.dim);
        if j.det(mesh.dim) <= 0.0 {
            return Err(Error::CellInversion { cell: c, t });
        }
        jacobians.push(j);
    }
    Ok(jacobians)
}

/// Pulls the metric and weight back through `f_t = id + tV` onto the
/// fixed mesh: `g_t = J^T g J` per cell and `eta_t = eta . f_t`, the
/// latter transported to first order in `t` (consistent with realizing
/// `f_t` as `id + tV` rather than an exact flow).
pub fn pullback_metric(
    mesh: &Mesh,
    g: &MetricField,
    eta: &ScalarField,
    v: &VectorField,
    t: f64,
) -> Result<(MetricField, ScalarField)> {
    let jacobians = cell_deformation(mesh, v, t)?;
    let cells = (0..mesh.nc())
        .map(|c| jacobians[c].pullback(g.at(c), mesh.dim))
        .collect();
    let g_t = MetricField::from_cells(mesh.dim, cells)?;
    let eta_dot = directional_derivative(mesh, eta, v, ScalarRole::WeightRate);
    let eta_t = eta.axpy(t, &eta_dot);
    Ok((g_t, eta_t))
}

/// Pulls a frozen coefficient field back through `f_t`, treating the
/// per-cell value as locally constant along the displacement (exact
/// for spatially uniform coefficients).
pub fn pullback_fixed_tensor(
    mesh: &Mesh,
    t0: &SymTensorField,
    v: &VectorField,
    t: f64,
) -> Result<SymTensorField> {
    let jacobians = cell_deformation(mesh, v, t)?;
    let cells = (0..mesh.nc())
        .map(|c| jacobians[c].pullback(t0.at(c), mesh.dim))
        .collect();
    Ok(SymTensorField::from_cells(
        mesh.dim,
        TensorRole::Coefficient,
        cells,
    ))
}

/// The pullback family as an operator path, for finite-difference
/// cross-checks of the boundary formulas.
pub struct DomainPath<'a> {
    pub problem: &'a EigenProblem<'a>,
    pub v: &'a VectorField,
}

impl<'a> OperatorPath for DomainPath<'a> {
    fn operator_at(&self, t: f64) -> Result<OperatorPair> {
        let p = self.problem;
        let (g_t, eta_t) = pullback_metric(p.mesh, p.g, p.eta, self.v, t)?;
        let coeff = match p.family {
            TensorFamily::Fixed(t0) => pullback_fixed_tensor(p.mesh, t0, self.v, t)?,
            TensorFamily::MetricItself => g_t.as_tensor(TensorRole::Coefficient),
            TensorFamily::ConformalWeight(psi) => {
                let psi_dot =
                    directional_derivative(p.mesh, psi, self.v, ScalarRole::ConformalFactor);
                let psi_t = psi.axpy(t, &psi_dot);
                TensorFamily::ConformalWeight(psi_t).tensor(p.mesh, &g_t)?
            }
        };
        assemble(p.mesh, &g_t, &coeff, &eta_t, p.bc)
    }
}

/// First-order cluster slopes under a boundary deformation with normal
/// component `v_normal`, via the boundary integrals (Dirichlet or
/// natural conditions chosen by the spectrum's tag).
pub fn boundary_slopes(
    problem: &EigenProblem,
    op: &OperatorPair,
    spectrum: &Spectrum,
    cluster: &[usize],
    v_normal: &BoundaryField,
) -> Result<SlopeMatrix> {
    let mesh = problem.mesh;
    let dim = mesh.dim;
    if mesh.nb() == 0 {
        return Err(Error::Invalid(
            "domain deformation requires a mesh with boundary".into(),
        ));
    }
    if v_normal.values.len() != mesh.nb() {
        return Err(Error::Invalid(
            "normal component field does not match the boundary".into(),
        ));
    }
    if cluster.is_empty() || cluster.iter().any(|&i| i >= spectrum.k()) {
        return Err(Error::Invalid("invalid cluster".into()));
    }
    if spectrum.bc != problem.bc {
        return Err(Error::BoundaryConditionMismatch {
            spectrum: spectrum.bc.to_string(),
            requested: problem.bc.to_string(),
        });
    }
    let lambda = validate_cluster(op, spectrum, cluster)?;
    let m = cluster.len();
    let g = problem.g;
    let t_field = problem.coefficient()?;
    let phis: Vec<Vec<f64>> = cluster
        .iter()
        .map(|&i| op.expand(&spectrum.vectors[i]))
        .collect();

    let mut s = DMatrix::zeros(m, m);
    for f in 0..mesh.nb() {
        let c = mesh.boundary_face(f).cell;
        let w = face_weight(mesh, g, problem.eta, f) * v_normal.values[f];
        if w == 0.0 {
            continue;
        }
        let tc = t_field.at(c);
        // cell gradients and face-midpoint traces of the cluster
        let mut grads = vec![[0.0_f64; 2]; m];
        let mut traces = vec![0.0_f64; m];
        for (q, phi) in phis.iter().enumerate() {
            let mut gsum = [0.0, 0.0];
            for (a, &vert) in mesh.cell_verts(c).iter().enumerate() {
                let ga = mesh.grad(c, a);
                gsum[0] += phi[vert] * ga[0];
                gsum[1] += phi[vert] * ga[1];
            }
            grads[q] = gsum;
            traces[q] =
                mesh.face_verts(f).iter().map(|&vt| phi[vt]).sum::<f64>()
                    / mesh.face_verts(f).len() as f64;
        }
        match problem.bc {
            BoundaryCondition::Dirichlet => {
                let nu = metric_normal(mesh, g, f);
                let t_nn = tc.quad(nu, nu, dim);
                let dnus: Vec<f64> = grads
                    .iter()
                    .map(|dphi| dphi[0] * nu[0] + dphi[1] * nu[1])
                    .collect();
                for i in 0..m {
                    for j in 0..m {
                        s[(i, j)] -= dnus[i] * dnus[j] * t_nn * w;
                    }
                }
            }
            BoundaryCondition::TNeumann => {
                let wt = tc.sandwich(g.inv(c), dim);
                for i in 0..m {
                    for j in 0..m {
                        s[(i, j)] += (wt.quad(grads[i], grads[j], dim)
                            - lambda * traces[i] * traces[j])
                            * w;
                    }
                }
            }
        }
    }

    let eig = SymmetricEigen::new(s.clone());
    let mut slopes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    slopes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(SlopeMatrix {
        lambda,
        matrix: s,
        slopes,
    })
}

/// Convenience wrapper taking the deformation as a vector field.
pub fn boundary_slopes_vector(
    problem: &EigenProblem,
    op: &OperatorPair,
    spectrum: &Spectrum,
    cluster: &[usize],
    v: &VectorField,
) -> Result<SlopeMatrix> {
    let vn = normal_component(problem.mesh, problem.g, v);
    boundary_slopes(problem, op, spectrum, cluster, &vn)
}

/// Subtracts the weighted mean so the result integrates to zero
/// against `dnu` (quadrature-exactly).
pub fn make_volume_preserving(
    mesh: &Mesh,
    g: &MetricField,
    eta: &ScalarField,
    profile: &BoundaryField,
) -> Result<BoundaryField> {
    if mesh.nb() == 0 {
        return Err(Error::Invalid(
            "volume-preserving field requires a boundary".into(),
        ));
    }
    let total: f64 = (0..mesh.nb()).map(|f| face_weight(mesh, g, eta, f)).sum();
    let mean = profile.integral(mesh, g, eta) / total;
    Ok(BoundaryField {
        values: profile.values.iter().map(|v| v - mean).collect(),
    })
}

/// The two-component piecewise-constant volume-preserving field: the
/// weighted measure of the second component on the first, and minus
/// the measure of the first on the second.
pub fn two_component_field(
    mesh: &Mesh,
    g: &MetricField,
    eta: &ScalarField,
) -> Result<BoundaryField> {
    let ncomp = mesh.n_boundary_components();
    if ncomp != 2 {
        return Err(Error::TwoComponentBoundary(ncomp));
    }
    let mut measures = [0.0_f64; 2];
    for f in 0..mesh.nb() {
        measures[mesh.boundary_face(f).component] += face_weight(mesh, g, eta, f);
    }
    let values = (0..mesh.nb())
        .map(|f| match mesh.boundary_face(f).component {
            0 => measures[1],
            _ => -measures[0],
        })
        .collect();
    Ok(BoundaryField { values })
}

/// Constancy statistics of `|dphi_k/dnu| sqrt(T(nu,nu))` over the
/// boundary (the quantity that is constant on extremal domains).
#[derive(Clone, Debug)]
pub struct ExtremalReport {
    pub lambda: f64,
    pub values: BoundaryField,
    pub mean: f64,
    pub std_dev: f64,
    /// `std_dev / mean`.
    pub deviation_ratio: f64,
    pub component_means: Vec<f64>,
}

/// Evaluates the extremal-domain diagnostic for eigenfunction `k` of a
/// Dirichlet spectrum.  For a cluster, apply it to each member.
pub fn extremal_check(
    problem: &EigenProblem,
    op: &OperatorPair,
    spectrum: &Spectrum,
    k: usize,
) -> Result<ExtremalReport> {
    let mesh = problem.mesh;
    if spectrum.bc != BoundaryCondition::Dirichlet {
        return Err(Error::BoundaryConditionMismatch {
            spectrum: spectrum.bc.to_string(),
            requested: BoundaryCondition::Dirichlet.to_string(),
        });
    }
    if k >= spectrum.k() {
        return Err(Error::Invalid(format!(
            "eigenfunction index {k} out of range (have {})",
            spectrum.k()
        )));
    }
    if mesh.nb() == 0 {
        return Err(Error::Invalid(
            "extremal check requires a mesh with boundary".into(),
        ));
    }
    let g = problem.g;
    let t_field = problem.coefficient()?;
    let phi = op.expand(&spectrum.vectors[k]);

    let nb = mesh.nb();
    let ncomp = mesh.n_boundary_components();
    let mut values = Vec::with_capacity(nb);
    let mut weights = Vec::with_capacity(nb);
    for f in 0..nb {
        let c = mesh.boundary_face(f).cell;
        let nu = metric_normal(mesh, g, f);
        let mut dphi = [0.0, 0.0];
        for (a, &vert) in mesh.cell_verts(c).iter().enumerate() {
            let ga = mesh.grad(c, a);
            dphi[0] += phi[vert] * ga[0];
            dphi[1] += phi[vert] * ga[1];
        }
        let dnu = dphi[0] * nu[0] + dphi[1] * nu[1];
        let t_nn = t_field.at(c).quad(nu, nu, mesh.dim);
        values.push(dnu.abs() * t_nn.sqrt());
        weights.push(face_weight(mesh, g, problem.eta, f));
    }
    let total: f64 = weights.iter().sum();
    let mean: f64 = values
        .iter()
        .zip(&weights)
        .map(|(v, w)| v * w)
        .sum::<f64>()
        / total;
    if mean <= 1e-14 * (1.0 + spectrum.lambdas[k].abs()) {
        return Err(Error::Invalid(
            "normal derivative vanishes on the whole boundary".into(),
        ));
    }
    let var: f64 = values
        .iter()
        .zip(&weights)
        .map(|(v, w)| (v - mean) * (v - mean) * w)
        .sum::<f64>()
        / total;
    let std_dev = var.sqrt();
    let mut comp_acc = vec![0.0_f64; ncomp];
    let mut comp_w = vec![0.0_f64; ncomp];
    for f in 0..nb {
        let comp = mesh.boundary_face(f).component;
        comp_acc[comp] += values[f] * weights[f];
        comp_w[comp] += weights[f];
    }
    let component_means = comp_acc
        .iter()
        .zip(&comp_w)
        .map(|(a, w)| a / w)
        .collect();
    Ok(ExtremalReport {
        lambda: spectrum.lambdas[k],
        values: BoundaryField { values },
        mean,
        std_dev,
        deviation_ratio: std_dev / mean,
        component_means,
    })
}

/// CSV layout `face_id,component,s,value`, with `s` the metric
/// arclength of the face midpoint measured from the start of its
/// boundary component.
pub fn boundary_csv(mesh: &Mesh, g: &MetricField, field: &BoundaryField) -> String {
    let mut out = String::from("face_id,component,s,value\n");
    let ncomp = mesh.n_boundary_components();
    let mut cursor = vec![0.0_f64; ncomp];
    for f in 0..mesh.nb() {
        let face = mesh.boundary_face(f);
        let len = if mesh.dim == 1 {
            0.0
        } else {
            let geo = mesh.face_geometry(f);
            geo.chart_len
                * g.at(face.cell).quad(geo.tangent, geo.tangent, 2).sqrt()
        };
        let s = cursor[face.component] + 0.5 * len;
        cursor[face.component] += len;
        let _ = writeln!(out, "{},{},{},{}", f, face.component, s, field.values[f]);
    }
    out
}
