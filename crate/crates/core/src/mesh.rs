//! Simplicial meshes in dimensions 1 and 2, with per-cell chart
//! coordinates and precomputed P1 basis gradients.
//!
//! Planar meshes use the global coordinates as the chart.  Closed
//! surfaces embedded in R^3 (spheres) get a per-cell isometric layout of
//! each triangle in a local 2D frame, so that the induced metric is the
//! identity in chart coordinates and all downstream tensor algebra is
//! uniformly 2-dimensional.  Flat tori unwrap periodic cells into a
//! consistent local chart.

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

/// Global topology of the mesh; decides boundary expectations and how
/// per-cell charts are produced.
#[derive(Clone, Debug, PartialEq)]
pub enum Topology {
    /// Chart domain with boundary (interval, rectangle, disk, annulus).
    Bounded,
    /// Closed flat torus with periods `lx`, `ly`; cells wrap around.
    FlatTorus { lx: f64, ly: f64 },
    /// Closed surface embedded in R^3; per-cell isometric charts.
    EmbeddedSurface,
}

impl Topology {
    pub fn is_closed(&self) -> bool {
        !matches!(self, Topology::Bounded)
    }
}

/// One boundary face: a vertex in 1D, an edge in 2D.  `verts[1]` equals
/// `verts[0]` in 1D.  `cell` is the unique adjacent cell and `component`
/// a label identifying the connected boundary component.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryFace {
    pub verts: [usize; 2],
    pub cell: usize,
    pub component: usize,
}

/// Simplicial mesh with precomputed chart geometry.
#[derive(Clone, Debug)]
pub struct Mesh {
    pub dim: usize,
    pub coord_dim: usize,
    /// Vertex coordinates, `nv * coord_dim`, row-major.
    pub coords: Vec<f64>,
    /// Cell vertex indices, `nc * (dim + 1)`.
    pub cells: Vec<usize>,
    pub boundary: Vec<BoundaryFace>,
    pub topology: Topology,
    /// Per-cell chart coordinates of the cell's vertices,
    /// `nc * (dim + 1) * dim`.
    chart_coords: Vec<f64>,
    /// Chart volume (length / area) per cell.
    chart_vols: Vec<f64>,
    /// P1 basis gradients in chart coordinates, `nc * (dim + 1) * 2`
    /// (second gradient component is zero in 1D).
    grads: Vec<f64>,
}

/// Geometry of a boundary face expressed in the chart of its adjacent
/// cell: unit tangent, outward Euclidean unit normal, chart length and
/// chart midpoint.  In 1D the tangent is zero and `chart_len` is 1.
#[derive(Clone, Copy, Debug)]
pub struct FaceGeometry {
    pub tangent: [f64; 2],
    pub euclid_normal: [f64; 2],
    pub chart_len: f64,
    pub midpoint: [f64; 2],
}

impl Mesh {
    /// Assembles a mesh from raw arrays, computing charts and gradients
    /// and validating all structural invariants.  Boundary face `cell`
    /// fields are reconstructed from connectivity (input values are
    /// ignored) and component labels are checked for consistency.
    pub fn new(
        dim: usize,
        coord_dim: usize,
        coords: Vec<f64>,
        cells: Vec<usize>,
        boundary: Vec<BoundaryFace>,
        topology: Topology,
    ) -> Result<Mesh> {
        if dim != 1 && dim != 2 {
            return Err(Error::UnsupportedDimension(dim));
        }
        if coord_dim < dim || coord_dim > 3 {
            return Err(Error::Invalid(format!(
                "coordinate dimension {coord_dim} incompatible with mesh dimension {dim}"
            )));
        }
        if coords.len() % coord_dim != 0 {
            return Err(Error::Invalid(
                "coordinate array length is not a multiple of coord_dim".into(),
            ));
        }
        let nv = coords.len() / coord_dim;
        let k = dim + 1;
        if cells.len() % k != 0 {
            return Err(Error::Invalid(
                "cell array length is not a multiple of dim + 1".into(),
            ));
        }
        if !coords.iter().all(|c| c.is_finite()) {
            return Err(Error::Invalid("non-finite vertex coordinate".into()));
        }
        let nc = cells.len() / k;
        if nc == 0 {
            return Err(Error::Invalid("mesh has no cells".into()));
        }
        for (i, &v) in cells.iter().enumerate() {
            if v >= nv {
                return Err(Error::Invalid(format!(
                    "cell {} references vertex {} out of range {}",
                    i / k,
                    v,
                    nv
                )));
            }
        }
        for c in 0..nc {
            let vs = &cells[c * k..(c + 1) * k];
            for a in 0..k {
                for b in 0..a {
                    if vs[a] == vs[b] {
                        return Err(Error::Invalid(format!(
                            "cell {c} repeats vertex {}",
                            vs[a]
                        )));
                    }
                }
            }
        }

        let mut mesh = Mesh {
            dim,
            coord_dim,
            coords,
            cells,
            boundary,
            topology,
            chart_coords: Vec::new(),
            chart_vols: Vec::new(),
            grads: Vec::new(),
        };
        mesh.build_charts()?;
        mesh.attach_boundary()?;
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn nv(&self) -> usize {
        self.coords.len() / self.coord_dim
    }

    pub fn nc(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    pub fn nb(&self) -> usize {
        self.boundary.len()
    }

    pub fn cell_verts(&self, c: usize) -> &[usize] {
        let k = self.dim + 1;
        &self.cells[c * k..(c + 1) * k]
    }

    pub fn vertex(&self, v: usize) -> &[f64] {
        &self.coords[v * self.coord_dim..(v + 1) * self.coord_dim]
    }

    /// Chart coordinates of local vertex `a` of cell `c`.
    pub fn chart_point(&self, c: usize, a: usize) -> [f64; 2] {
        let k = self.dim + 1;
        let base = (c * k + a) * self.dim;
        match self.dim {
            1 => [self.chart_coords[base], 0.0],
            _ => [self.chart_coords[base], self.chart_coords[base + 1]],
        }
    }

    pub fn chart_vol(&self, c: usize) -> f64 {
        self.chart_vols[c]
    }

    /// Gradient of the P1 basis function of local vertex `a` on cell `c`
    /// in chart coordinates.
    pub fn grad(&self, c: usize, a: usize) -> [f64; 2] {
        let k = self.dim + 1;
        let base = (c * k + a) * 2;
        [self.grads[base], self.grads[base + 1]]
    }

    /// Chart midpoint (barycenter) of a cell.
    pub fn cell_midpoint_chart(&self, c: usize) -> [f64; 2] {
        let k = self.dim + 1;
        let mut m = [0.0, 0.0];
        for a in 0..k {
            let p = self.chart_point(c, a);
            m[0] += p[0];
            m[1] += p[1];
        }
        [m[0] / k as f64, m[1] / k as f64]
    }

    /// Midpoint of a cell in global coordinates (used to sample fields).
    pub fn cell_midpoint_global(&self, c: usize) -> Vec<f64> {
        let k = self.dim + 1;
        let mut m = vec![0.0; self.coord_dim];
        for &v in self.cell_verts(c) {
            for (mi, x) in m.iter_mut().zip(self.vertex(v)) {
                *mi += x;
            }
        }
        for mi in &mut m {
            *mi /= k as f64;
        }
        m
    }

    /// The vertex indices of a boundary face (length `dim`).
    pub fn face_verts(&self, f: usize) -> &[usize] {
        let face = &self.boundary[f];
        &face.verts[..self.dim]
    }

    pub fn boundary_face(&self, f: usize) -> &BoundaryFace {
        &self.boundary[f]
    }

    /// Number of distinct boundary component labels.
    pub fn n_boundary_components(&self) -> usize {
        self.boundary
            .iter()
            .map(|f| f.component + 1)
            .max()
            .unwrap_or(0)
    }

    /// `true` for each vertex that lies on some boundary face.
    pub fn boundary_vertex_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.nv()];
        for f in 0..self.nb() {
            for &v in self.face_verts(f) {
                mask[v] = true;
            }
        }
        mask
    }

    /// Local index of global vertex `v` within cell `c`.
    pub fn local_index(&self, c: usize, v: usize) -> Option<usize> {
        self.cell_verts(c).iter().position(|&w| w == v)
    }

    /// Face geometry in the adjacent cell's chart.
    pub fn face_geometry(&self, f: usize) -> FaceGeometry {
        let face = self.boundary[f];
        let c = face.cell;
        if self.dim == 1 {
            let lv = self.local_index(c, face.verts[0]).unwrap();
            let other = 1 - lv;
            let x = self.chart_point(c, lv)[0];
            let xo = self.chart_point(c, other)[0];
            let dir = if x > xo { 1.0 } else { -1.0 };
            return FaceGeometry {
                tangent: [0.0, 0.0],
                euclid_normal: [dir, 0.0],
                chart_len: 1.0,
                midpoint: [x, 0.0],
            };
        }
        let la = self.local_index(c, face.verts[0]).unwrap();
        let lb = self.local_index(c, face.verts[1]).unwrap();
        let pa = self.chart_point(c, la);
        let pb = self.chart_point(c, lb);
        let tau = [pb[0] - pa[0], pb[1] - pa[1]];
        let len = (tau[0] * tau[0] + tau[1] * tau[1]).sqrt();
        let t = [tau[0] / len, tau[1] / len];
        let mut n = [t[1], -t[0]];
        let mid = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0];
        let cen = self.cell_midpoint_chart(c);
        if n[0] * (mid[0] - cen[0]) + n[1] * (mid[1] - cen[1]) < 0.0 {
            n = [-n[0], -n[1]];
        }
        FaceGeometry {
            tangent: t,
            euclid_normal: n,
            chart_len: len,
            midpoint: mid,
        }
    }

    /// Largest chart-space cell diameter; a mesh-size indicator.
    pub fn max_cell_diameter(&self) -> f64 {
        let k = self.dim + 1;
        let mut h = 0.0_f64;
        for c in 0..self.nc() {
            for a in 0..k {
                for b in 0..a {
                    let p = self.chart_point(c, a);
                    let q = self.chart_point(c, b);
                    let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                    h = h.max(d);
                }
            }
        }
        h
    }

    // ----- construction internals -----

    fn build_charts(&mut self) -> Result<()> {
        let k = self.dim + 1;
        let nc = self.nc();
        self.chart_coords = vec![0.0; nc * k * self.dim];
        self.chart_vols = vec![0.0; nc];
        self.grads = vec![0.0; nc * k * 2];

        for c in 0..nc {
            // Per-cell chart vertex positions.
            let mut pts = [[0.0_f64; 2]; 3];
            match (&self.topology, self.coord_dim) {
                (Topology::EmbeddedSurface, 3) => {
                    // isometric layout of the embedded triangle
                    let vs = self.cell_verts(c);
                    let p0: [f64; 3] = self.vertex(vs[0]).try_into().unwrap();
                    let p1: [f64; 3] = self.vertex(vs[1]).try_into().unwrap();
                    let p2: [f64; 3] = self.vertex(vs[2]).try_into().unwrap();
                    let e1 = [p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]];
                    let e2 = [p2[0] - p0[0], p2[1] - p0[1], p2[2] - p0[2]];
                    let l1 = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
                    if l1 == 0.0 {
                        return Err(Error::DegenerateCell { cell: c, volume: 0.0 });
                    }
                    let u = [e1[0] / l1, e1[1] / l1, e1[2] / l1];
                    let proj = e2[0] * u[0] + e2[1] * u[1] + e2[2] * u[2];
                    let w = [
                        e2[0] - proj * u[0],
                        e2[1] - proj * u[1],
                        e2[2] - proj * u[2],
                    ];
                    let h = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
                    pts[0] = [0.0, 0.0];
                    pts[1] = [l1, 0.0];
                    pts[2] = [proj, h];
                }
                (Topology::FlatTorus { lx, ly }, _) => {
                    // unwrap periodic coordinates relative to vertex 0
                    let vs: Vec<usize> = self.cell_verts(c).to_vec();
                    let base = [self.vertex(vs[0])[0], self.vertex(vs[0])[1]];
                    let periods = [*lx, *ly];
                    for (a, &v) in vs.iter().enumerate() {
                        let p = self.vertex(v);
                        for d in 0..2 {
                            let mut best = p[d];
                            let mut bestdist = (p[d] - base[d]).abs();
                            for shift in [-periods[d], periods[d]] {
                                let cand = p[d] + shift;
                                let dd = (cand - base[d]).abs();
                                if dd < bestdist {
                                    bestdist = dd;
                                    best = cand;
                                }
                            }
                            pts[a][d] = best;
                        }
                    }
                }
                _ => {
                    let vs: Vec<usize> = self.cell_verts(c).to_vec();
                    for (a, &v) in vs.iter().enumerate() {
                        let p = self.vertex(v);
                        for d in 0..self.dim {
                            pts[a][d] = p[d];
                        }
                    }
                }
            }

            // Orientation repair + volume + gradients.
            if self.dim == 1 {
                if pts[1][0] < pts[0][0] {
                    let k3 = self.dim + 1;
                    self.cells.swap(c * k3, c * k3 + 1);
                    pts.swap(0, 1);
                }
                let h = pts[1][0] - pts[0][0];
                if h <= 0.0 || !h.is_finite() {
                    return Err(Error::DegenerateCell { cell: c, volume: h });
                }
                self.chart_vols[c] = h;
                let g = [[-1.0 / h, 0.0], [1.0 / h, 0.0]];
                for a in 0..2 {
                    self.chart_coords[(c * 2 + a) * 1] = pts[a][0];
                    self.grads[(c * 2 + a) * 2] = g[a][0];
                    self.grads[(c * 2 + a) * 2 + 1] = g[a][1];
                }
            } else {
                let mut area2 = (pts[1][0] - pts[0][0]) * (pts[2][1] - pts[0][1])
                    - (pts[2][0] - pts[0][0]) * (pts[1][1] - pts[0][1]);
                if area2 < 0.0 {
                    let k3 = self.dim + 1;
                    self.cells.swap(c * k3 + 1, c * k3 + 2);
                    pts.swap(1, 2);
                    area2 = -area2;
                }
                let area = area2 / 2.0;
                let scale = self.max_coord_scale();
                if !(area > 1e-14 * scale * scale) || !area.is_finite() {
                    return Err(Error::DegenerateCell { cell: c, volume: area });
                }
                self.chart_vols[c] = area;
                for a in 0..3 {
                    let j = (a + 1) % 3;
                    let l = (a + 2) % 3;
                    let b = pts[j][1] - pts[l][1];
                    let cc = pts[l][0] - pts[j][0];
                    self.grads[(c * 3 + a) * 2] = b / area2;
                    self.grads[(c * 3 + a) * 2 + 1] = cc / area2;
                    self.chart_coords[(c * 3 + a) * 2] = pts[a][0];
                    self.chart_coords[(c * 3 + a) * 2 + 1] = pts[a][1];
                }
            }
        }
        Ok(())
    }

    fn max_coord_scale(&self) -> f64 {
        self.coords.iter().fold(1.0_f64, |m, &c| m.max(c.abs()))
    }

    /// Reconstructs the adjacent cell of every boundary face from the
    /// cell connectivity.
    fn attach_boundary(&mut self) -> Result<()> {
        if self.boundary.is_empty() {
            return Ok(());
        }
        let k = self.dim + 1;
        // map from sorted face vertex set to adjacent cells
        let mut face_cells: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for c in 0..self.nc() {
            let vs = self.cell_verts(c).to_vec();
            if self.dim == 1 {
                for &v in &vs {
                    face_cells.entry((v, v)).or_default().push(c);
                }
            } else {
                for a in 0..k {
                    let mut e = [vs[a], vs[(a + 1) % k]];
                    e.sort_unstable();
                    face_cells.entry((e[0], e[1])).or_default().push(c);
                }
            }
        }
        for (i, face) in self.boundary.iter_mut().enumerate() {
            let key = if self.dim == 1 {
                (face.verts[0], face.verts[0])
            } else {
                let mut e = [face.verts[0], face.verts[1]];
                e.sort_unstable();
                (e[0], e[1])
            };
            match face_cells.get(&key) {
                Some(cs) if self.dim == 2 && cs.len() == 1 => face.cell = cs[0],
                Some(cs) if self.dim == 1 && !cs.is_empty() => {
                    // an endpoint vertex belongs to exactly one cell
                    if cs.len() != 1 {
                        return Err(Error::Invalid(format!(
                            "boundary face {i} is interior (vertex shared by {} cells)",
                            cs.len()
                        )));
                    }
                    face.cell = cs[0];
                }
                Some(cs) => {
                    return Err(Error::Invalid(format!(
                        "boundary face {i} adjacent to {} cells, expected 1",
                        cs.len()
                    )));
                }
                None => {
                    return Err(Error::Invalid(format!(
                        "boundary face {i} does not match any cell facet"
                    )));
                }
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.topology.is_closed() && !self.boundary.is_empty() {
            return Err(Error::Invalid(
                "closed topology but boundary faces are present".into(),
            ));
        }
        if !self.topology.is_closed() && self.boundary.is_empty() {
            return Err(Error::Invalid(
                "bounded topology but no boundary faces given".into(),
            ));
        }
        // component labels: 0..ncomp contiguous, consistent across shared vertices
        if !self.boundary.is_empty() {
            let ncomp = self.n_boundary_components();
            let mut seen = vec![false; ncomp];
            for f in &self.boundary {
                seen[f.component] = true;
            }
            if !seen.iter().all(|&s| s) {
                return Err(Error::Invalid(
                    "boundary component labels are not contiguous".into(),
                ));
            }
            if self.dim == 2 {
                let mut vert_comp: HashMap<usize, usize> = HashMap::new();
                for f in &self.boundary {
                    for &v in &f.verts {
                        if let Some(&c0) = vert_comp.get(&v) {
                            if c0 != f.component {
                                return Err(Error::Invalid(format!(
                                    "vertex {v} carries two boundary component labels"
                                )));
                            }
                        } else {
                            vert_comp.insert(v, f.component);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    // ----- text file format -----

    /// Serializes the mesh to the text interchange format:
    /// a header `dim nv nc nb`, optional `#`-comment lines, `nv` vertex
    /// coordinate lines, `nc` cell index lines, and `nb` boundary lines
    /// (face vertex indices followed by a component label).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} {} {} {}",
            self.dim,
            self.nv(),
            self.nc(),
            self.nb()
        );
        match &self.topology {
            Topology::FlatTorus { lx, ly } => {
                let _ = writeln!(s, "# topology flat-torus {} {}", lx, ly);
            }
            Topology::EmbeddedSurface => {
                let _ = writeln!(s, "# topology embedded-surface");
            }
            Topology::Bounded => {}
        }
        for v in 0..self.nv() {
            let p = self.vertex(v);
            let line: Vec<String> = p.iter().map(|x| format!("{x}")).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        for c in 0..self.nc() {
            let line: Vec<String> = self.cell_verts(c).iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        for f in 0..self.nb() {
            let face = &self.boundary[f];
            let mut items: Vec<String> = self.face_verts(f).iter().map(|v| v.to_string()).collect();
            items.push(face.component.to_string());
            let _ = writeln!(s, "{}", items.join(" "));
        }
        s
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Parses the text interchange format produced by [`Mesh::to_text`].
    pub fn from_text(text: &str) -> Result<Mesh> {
        let mut topology: Option<Topology> = None;
        let mut data_lines: Vec<(usize, &str)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let toks: Vec<&str> = rest.split_whitespace().collect();
                if toks.first() == Some(&"topology") {
                    match toks.get(1) {
                        Some(&"flat-torus") => {
                            let lx = toks
                                .get(2)
                                .and_then(|t| t.parse().ok())
                                .ok_or(Error::MeshParse {
                                    line: i + 1,
                                    msg: "flat-torus needs two periods".into(),
                                })?;
                            let ly = toks
                                .get(3)
                                .and_then(|t| t.parse().ok())
                                .ok_or(Error::MeshParse {
                                    line: i + 1,
                                    msg: "flat-torus needs two periods".into(),
                                })?;
                            topology = Some(Topology::FlatTorus { lx, ly });
                        }
                        Some(&"embedded-surface") => {
                            topology = Some(Topology::EmbeddedSurface);
                        }
                        _ => {
                            return Err(Error::MeshParse {
                                line: i + 1,
                                msg: "unknown topology comment".into(),
                            })
                        }
                    }
                }
                continue;
            }
            data_lines.push((i + 1, line));
        }
        if data_lines.is_empty() {
            return Err(Error::MeshParse {
                line: 1,
                msg: "empty file".into(),
            });
        }
        let (hline, header) = data_lines[0];
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::MeshParse {
                line: hline,
                msg: format!("bad header: {e}"),
            })?;
        if head.len() != 4 {
            return Err(Error::MeshParse {
                line: hline,
                msg: "header must be `dim nv nc nb`".into(),
            });
        }
        let (dim, nv, nc, nb) = (head[0], head[1], head[2], head[3]);
        if dim != 1 && dim != 2 {
            return Err(Error::UnsupportedDimension(dim));
        }
        let expect = 1 + nv + nc + nb;
        if data_lines.len() != expect {
            return Err(Error::MeshParse {
                line: data_lines.last().unwrap().0,
                msg: format!("expected {} data lines, found {}", expect, data_lines.len()),
            });
        }

        let mut coords: Vec<f64> = Vec::new();
        let mut coord_dim = 0usize;
        for (ln, line) in &data_lines[1..1 + nv] {
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::MeshParse {
                    line: *ln,
                    msg: format!("bad vertex coordinate: {e}"),
                })?;
            if coord_dim == 0 {
                coord_dim = row.len();
                if coord_dim < dim || coord_dim > 3 {
                    return Err(Error::MeshParse {
                        line: *ln,
                        msg: format!("vertex has {} coordinates, mesh dim {}", row.len(), dim),
                    });
                }
            } else if row.len() != coord_dim {
                return Err(Error::MeshParse {
                    line: *ln,
                    msg: "inconsistent vertex coordinate count".into(),
                });
            }
            coords.extend(row);
        }

        let mut cells: Vec<usize> = Vec::new();
        for (ln, line) in &data_lines[1 + nv..1 + nv + nc] {
            let row: Vec<usize> = line
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::MeshParse {
                    line: *ln,
                    msg: format!("bad cell index: {e}"),
                })?;
            if row.len() != dim + 1 {
                return Err(Error::MeshParse {
                    line: *ln,
                    msg: format!("cell needs {} vertices, found {}", dim + 1, row.len()),
                });
            }
            cells.extend(row);
        }

        let mut boundary: Vec<BoundaryFace> = Vec::new();
        for (ln, line) in &data_lines[1 + nv + nc..] {
            let row: Vec<usize> = line
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::MeshParse {
                    line: *ln,
                    msg: format!("bad boundary index: {e}"),
                })?;
            if row.len() != dim + 1 {
                return Err(Error::MeshParse {
                    line: *ln,
                    msg: format!(
                        "boundary face needs {} vertex indices plus a component label",
                        dim
                    ),
                });
            }
            let verts = if dim == 1 {
                [row[0], row[0]]
            } else {
                [row[0], row[1]]
            };
            boundary.push(BoundaryFace {
                verts,
                cell: usize::MAX,
                component: row[dim],
            });
        }

        let topology = topology.unwrap_or({
            if nb == 0 && coord_dim == 3 {
                Topology::EmbeddedSurface
            } else {
                Topology::Bounded
            }
        });
        if matches!(topology, Topology::Bounded) && nb == 0 {
            return Err(Error::MeshParse {
                line: hline,
                msg: "closed mesh requires a `# topology ...` comment".into(),
            });
        }
        Mesh::new(dim, coord_dim, coords, cells, boundary, topology)
    }

    pub fn read_text(path: &Path) -> Result<Mesh> {
        let text = std::fs::read_to_string(path)?;
        Mesh::from_text(&text)
    }
}

// ---------------------------------------------------------------------
// canonical domain builders
// ---------------------------------------------------------------------

/// Specification of a canonical computational domain.
#[derive(Clone, Debug, PartialEq)]
pub enum CanonicalDomain {
    /// `[0, length]` split into `cells` segments.
    Interval { length: f64, cells: usize },
    /// `[0, lx] x [0, ly]` grid with all diagonals in the same direction,
    /// preserving the `x <-> y` reflection symmetry when `lx = ly` and
    /// `nx = ny`.
    Rectangle {
        lx: f64,
        ly: f64,
        nx: usize,
        ny: usize,
    },
    /// Round disk of the given radius meshed as a center vertex plus
    /// `rings` concentric rings, ring `j` carrying `8j` vertices.
    Disk { radius: f64, rings: usize },
    /// Annulus with `rings + 1` concentric rings of `sectors` vertices.
    Annulus {
        r_inner: f64,
        r_outer: f64,
        rings: usize,
        sectors: usize,
    },
    /// Flat torus `R^2 / (lx Z x ly Z)` on a uniform diagonal grid.
    FlatTorus {
        lx: f64,
        ly: f64,
        nx: usize,
        ny: usize,
    },
    /// Round sphere of the given radius: icosahedron subdivided
    /// `subdivisions` times, vertices projected to the sphere.
    Sphere { radius: f64, subdivisions: usize },
}

impl CanonicalDomain {
    /// Builds the mesh for this canonical domain.
    pub fn build(&self) -> Result<Mesh> {
        match *self {
            CanonicalDomain::Interval { length, cells } => interval_mesh(length, cells),
            CanonicalDomain::Rectangle { lx, ly, nx, ny } => rectangle_mesh(lx, ly, nx, ny),
            CanonicalDomain::Disk { radius, rings } => disk_mesh(radius, rings),
            CanonicalDomain::Annulus {
                r_inner,
                r_outer,
                rings,
                sectors,
            } => annulus_mesh(r_inner, r_outer, rings, sectors),
            CanonicalDomain::FlatTorus { lx, ly, nx, ny } => torus_mesh(lx, ly, nx, ny),
            CanonicalDomain::Sphere {
                radius,
                subdivisions,
            } => icosphere_mesh(radius, subdivisions),
        }
    }
}

/// Convenience dispatcher kept as a free function.
pub fn build_canonical(domain: &CanonicalDomain) -> Result<Mesh> {
    domain.build()
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::DegenerateSize(format!("{name} = {v}")));
    }
    Ok(())
}

fn interval_mesh(length: f64, n: usize) -> Result<Mesh> {
    check_positive("length", length)?;
    if n < 2 {
        return Err(Error::ResolutionTooCoarse { got: n, min: 2 });
    }
    let coords: Vec<f64> = (0..=n).map(|i| length * i as f64 / n as f64).collect();
    let mut cells = Vec::with_capacity(2 * n);
    for i in 0..n {
        cells.push(i);
        cells.push(i + 1);
    }
    let boundary = vec![
        BoundaryFace {
            verts: [0, 0],
            cell: usize::MAX,
            component: 0,
        },
        BoundaryFace {
            verts: [n, n],
            cell: usize::MAX,
            component: 1,
        },
    ];
    Mesh::new(1, 1, coords, cells, boundary, Topology::Bounded)
}

fn rectangle_mesh(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Mesh> {
    check_positive("lx", lx)?;
    check_positive("ly", ly)?;
    if nx < 2 || ny < 2 {
        return Err(Error::ResolutionTooCoarse {
            got: nx.min(ny),
            min: 2,
        });
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut coords = Vec::with_capacity(2 * (nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            coords.push(lx * i as f64 / nx as f64);
            coords.push(ly * j as f64 / ny as f64);
        }
    }
    // Alternating-diagonal (Union Jack) pattern.  For lx = ly and even
    // nx = ny the triangulation carries the full symmetry group of the
    // square (including the quarter turn), so symmetry-paired discrete
    // eigenvalues coincide to machine precision instead of splitting at
    // the O(h^2) level as they would on a one-diagonal grid.
    let mut cells = Vec::with_capacity(6 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            if (i + j) % 2 == 0 {
                cells.extend([v00, v10, v11]);
                cells.extend([v00, v11, v01]);
            } else {
                cells.extend([v00, v10, v01]);
                cells.extend([v10, v11, v01]);
            }
        }
    }
    let mut boundary = Vec::with_capacity(2 * (nx + ny));
    for i in 0..nx {
        boundary.push(edge_face(idx(i, 0), idx(i + 1, 0), 0));
    }
    for j in 0..ny {
        boundary.push(edge_face(idx(nx, j), idx(nx, j + 1), 0));
    }
    for i in (0..nx).rev() {
        boundary.push(edge_face(idx(i + 1, ny), idx(i, ny), 0));
    }
    for j in (0..ny).rev() {
        boundary.push(edge_face(idx(0, j + 1), idx(0, j), 0));
    }
    Mesh::new(2, 2, coords, cells, boundary, Topology::Bounded)
}

fn edge_face(a: usize, b: usize, component: usize) -> BoundaryFace {
    BoundaryFace {
        verts: [a, b],
        cell: usize::MAX,
        component,
    }
}

/// Disk meshed as rings of `8j` vertices; adjacent rings are stitched by
/// an angular advancing front.  The construction is symmetric under the
/// dihedral group of order 8 but not under finer rotations, so discrete
/// eigenvalue multiplets split only at the level of the discretization
/// error.
fn disk_mesh(radius: f64, rings: usize) -> Result<Mesh> {
    check_positive("radius", radius)?;
    if rings < 2 {
        return Err(Error::ResolutionTooCoarse { got: rings, min: 2 });
    }
    let mut coords = vec![0.0, 0.0];
    let mut ring_start = vec![0usize; rings + 1]; // index of first vertex of ring j
    ring_start[0] = 0; // ring 0 is the center vertex
    let mut next = 1usize;
    for j in 1..=rings {
        ring_start[j] = next;
        let m = 8 * j;
        let r = radius * j as f64 / rings as f64;
        for k in 0..m {
            let th = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
            coords.push(r * th.cos());
            coords.push(r * th.sin());
        }
        next += m;
    }
    let mut cells: Vec<usize> = Vec::new();
    // center fan
    for k in 0..8 {
        cells.extend([0, ring_start[1] + k, ring_start[1] + (k + 1) % 8]);
    }
    // ring j -> ring j+1 strips
    for j in 1..rings {
        let m1 = 8 * j;
        let m2 = 8 * (j + 1);
        let s1 = ring_start[j];
        let s2 = ring_start[j + 1];
        let mut a = 0usize; // inner steps taken
        let mut b = 0usize; // outer steps taken
        while a < m1 || b < m2 {
            let th_in_next = (a + 1) as f64 / m1 as f64;
            let th_out_next = (b + 1) as f64 / m2 as f64;
            let take_outer = b < m2 && (a == m1 || th_out_next <= th_in_next);
            if take_outer {
                cells.extend([s1 + a % m1, s2 + b % m2, s2 + (b + 1) % m2]);
                b += 1;
            } else {
                cells.extend([s1 + a % m1, s2 + b % m2, s1 + (a + 1) % m1]);
                a += 1;
            }
        }
    }
    let m_out = 8 * rings;
    let s_out = ring_start[rings];
    let mut boundary = Vec::with_capacity(m_out);
    for k in 0..m_out {
        boundary.push(edge_face(s_out + k, s_out + (k + 1) % m_out, 0));
    }
    Mesh::new(2, 2, coords, cells, boundary, Topology::Bounded)
}

fn annulus_mesh(r_inner: f64, r_outer: f64, rings: usize, sectors: usize) -> Result<Mesh> {
    check_positive("inner radius", r_inner)?;
    check_positive("outer radius", r_outer)?;
    if r_outer <= r_inner {
        return Err(Error::DegenerateSize(format!(
            "outer radius {r_outer} must exceed inner radius {r_inner}"
        )));
    }
    if rings < 2 || sectors < 4 {
        return Err(Error::ResolutionTooCoarse {
            got: rings.min(sectors),
            min: if rings < 2 { 2 } else { 4 },
        });
    }
    let m = sectors;
    let idx = |j: usize, k: usize| j * m + k % m;
    let mut coords = Vec::with_capacity(2 * (rings + 1) * m);
    for j in 0..=rings {
        let r = r_inner + (r_outer - r_inner) * j as f64 / rings as f64;
        for k in 0..m {
            let th = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
            coords.push(r * th.cos());
            coords.push(r * th.sin());
        }
    }
    let mut cells = Vec::with_capacity(6 * rings * m);
    for j in 0..rings {
        for k in 0..m {
            let (v00, v10, v01, v11) = (idx(j, k), idx(j, k + 1), idx(j + 1, k), idx(j + 1, k + 1));
            cells.extend([v00, v10, v11]);
            cells.extend([v00, v11, v01]);
        }
    }
    let mut boundary = Vec::with_capacity(2 * m);
    for k in 0..m {
        boundary.push(edge_face(idx(0, k), idx(0, k + 1), 0));
    }
    for k in 0..m {
        boundary.push(edge_face(idx(rings, k), idx(rings, k + 1), 1));
    }
    Mesh::new(2, 2, coords, cells, boundary, Topology::Bounded)
}

fn torus_mesh(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Mesh> {
    check_positive("lx", lx)?;
    check_positive("ly", ly)?;
    if nx < 3 || ny < 3 {
        return Err(Error::ResolutionTooCoarse {
            got: nx.min(ny),
            min: 3,
        });
    }
    let idx = |i: usize, j: usize| (j % ny) * nx + i % nx;
    let mut coords = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            coords.push(lx * i as f64 / nx as f64);
            coords.push(ly * j as f64 / ny as f64);
        }
    }
    let mut cells = Vec::with_capacity(6 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) =
                (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            cells.extend([v00, v10, v11]);
            cells.extend([v00, v11, v01]);
        }
    }
    Mesh::new(2, 2, coords, cells, Vec::new(), Topology::FlatTorus { lx, ly })
}

/// Icosahedron subdivided `sub` times and projected to the sphere.
fn icosphere_mesh(radius: f64, sub: usize) -> Result<Mesh> {
    check_positive("radius", radius)?;
    if sub > 7 {
        return Err(Error::Invalid(format!(
            "sphere subdivision level {sub} too fine (max 7)"
        )));
    }
    let t = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    for v in &mut verts {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        *v = [v[0] / n, v[1] / n, v[2] / n];
    }
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..sub {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut new_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mids = [0usize; 3];
            for e in 0..3 {
                let (a, b) = (f[e], f[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let id = *midpoint.entry(key).or_insert_with(|| {
                    let pa = verts[a];
                    let pb = verts[b];
                    let mut m = [
                        (pa[0] + pb[0]) / 2.0,
                        (pa[1] + pb[1]) / 2.0,
                        (pa[2] + pb[2]) / 2.0,
                    ];
                    let n = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
                    m = [m[0] / n, m[1] / n, m[2] / n];
                    verts.push(m);
                    verts.len() - 1
                });
                mids[e] = id;
            }
            new_faces.push([f[0], mids[0], mids[2]]);
            new_faces.push([f[1], mids[1], mids[0]]);
            new_faces.push([f[2], mids[2], mids[1]]);
            new_faces.push([mids[0], mids[1], mids[2]]);
        }
        faces = new_faces;
    }
    let mut coords = Vec::with_capacity(3 * verts.len());
    for v in &verts {
        coords.push(radius * v[0]);
        coords.push(radius * v[1]);
        coords.push(radius * v[2]);
    }
    let mut cells = Vec::with_capacity(3 * faces.len());
    for f in &faces {
        cells.extend(*f);
    }
    Mesh::new(2, 3, coords, cells, Vec::new(), Topology::EmbeddedSurface)
}
