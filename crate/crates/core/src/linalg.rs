//! Tiny dimension-aware linear algebra for per-cell tensors.
//!
//! The FEM path only covers mesh dimensions 1 and 2, so every pointwise
//! tensor is at most 2x2.  Rather than dragging a generic matrix type
//! through the assembly inner loops, symmetric tensors are stored as
//! three scalars and all contractions are written out explicitly with an
//! explicit `dim` argument (components beyond `dim` are ignored).

/// Symmetric `dim x dim` tensor in chart coordinates, `dim <= 2`.
/// For `dim == 1` only `xx` is meaningful.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymMat {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl SymMat {
    pub const ZERO: SymMat = SymMat {
        xx: 0.0,
        xy: 0.0,
        yy: 0.0,
    };

    pub fn identity() -> SymMat {
        SymMat {
            xx: 1.0,
            xy: 0.0,
            yy: 1.0,
        }
    }

    pub fn diag(xx: f64, yy: f64) -> SymMat {
        SymMat { xx, xy: 0.0, yy }
    }

    pub fn new(xx: f64, xy: f64, yy: f64) -> SymMat {
        SymMat { xx, xy, yy }
    }

    pub fn scale(&self, s: f64) -> SymMat {
        SymMat {
            xx: s * self.xx,
            xy: s * self.xy,
            yy: s * self.yy,
        }
    }

    pub fn add(&self, o: &SymMat) -> SymMat {
        SymMat {
            xx: self.xx + o.xx,
            xy: self.xy + o.xy,
            yy: self.yy + o.yy,
        }
    }

    pub fn sub(&self, o: &SymMat) -> SymMat {
        SymMat {
            xx: self.xx - o.xx,
            xy: self.xy - o.xy,
            yy: self.yy - o.yy,
        }
    }

    /// `self + s * o`.
    pub fn axpy(&self, s: f64, o: &SymMat) -> SymMat {
        SymMat {
            xx: self.xx + s * o.xx,
            xy: self.xy + s * o.xy,
            yy: self.yy + s * o.yy,
        }
    }

    pub fn det(&self, dim: usize) -> f64 {
        match dim {
            1 => self.xx,
            _ => self.xx * self.yy - self.xy * self.xy,
        }
    }

    pub fn trace(&self, dim: usize) -> f64 {
        match dim {
            1 => self.xx,
            _ => self.xx + self.yy,
        }
    }

    /// True when the tensor is symmetric positive definite.
    pub fn is_spd(&self, dim: usize) -> bool {
        match dim {
            1 => self.xx > 0.0,
            _ => self.xx > 0.0 && self.det(2) > 0.0,
        }
    }

    /// Inverse; callers must ensure a nonzero determinant.
    pub fn inverse(&self, dim: usize) -> SymMat {
        match dim {
            1 => SymMat {
                xx: 1.0 / self.xx,
                xy: 0.0,
                yy: 0.0,
            },
            _ => {
                let d = self.det(2);
                SymMat {
                    xx: self.yy / d,
                    xy: -self.xy / d,
                    yy: self.xx / d,
                }
            }
        }
    }

    /// Matrix-vector product (the `y` component is zero in 1D).
    pub fn apply(&self, v: [f64; 2], dim: usize) -> [f64; 2] {
        match dim {
            1 => [self.xx * v[0], 0.0],
            _ => [
                self.xx * v[0] + self.xy * v[1],
                self.xy * v[0] + self.yy * v[1],
            ],
        }
    }

    /// Bilinear form `p^T A q`.
    pub fn quad(&self, p: [f64; 2], q: [f64; 2], dim: usize) -> f64 {
        match dim {
            1 => self.xx * p[0] * q[0],
            _ => {
                self.xx * p[0] * q[0]
                    + self.xy * (p[0] * q[1] + p[1] * q[0])
                    + self.yy * p[1] * q[1]
            }
        }
    }

    /// Full contraction `tr(B A)` of two symmetric tensors
    /// (`B` typically an inverse metric): `sum_ij B_ij A_ij`.
    pub fn contract(&self, b: &SymMat, dim: usize) -> f64 {
        match dim {
            1 => self.xx * b.xx,
            _ => self.xx * b.xx + 2.0 * self.xy * b.xy + self.yy * b.yy,
        }
    }

    /// Triple product `M * self * M` for symmetric `M`; the result is
    /// symmetric.  Used for `g^{-1} T g^{-1}` and Jacobian pullbacks with
    /// symmetric Jacobians.
    pub fn sandwich(&self, m: &SymMat, dim: usize) -> SymMat {
        match dim {
            1 => SymMat {
                xx: m.xx * self.xx * m.xx,
                xy: 0.0,
                yy: 0.0,
            },
            _ => {
                // rows of M * self
                let a00 = m.xx * self.xx + m.xy * self.xy;
                let a01 = m.xx * self.xy + m.xy * self.yy;
                let a10 = m.xy * self.xx + m.yy * self.xy;
                let a11 = m.xy * self.xy + m.yy * self.yy;
                SymMat {
                    xx: a00 * m.xx + a01 * m.xy,
                    xy: a00 * m.xy + a01 * m.yy,
                    yy: a10 * m.xy + a11 * m.yy,
                }
            }
        }
    }

    /// Symmetrized metric-contracted product
    /// `self * Ginv * other + other * Ginv * self` where `Ginv` is the
    /// inverse metric; this is the "one index raised" composition that
    /// appears in tensor-variation formulas.
    pub fn sym_product(&self, ginv: &SymMat, other: &SymMat, dim: usize) -> SymMat {
        match dim {
            1 => SymMat {
                xx: 2.0 * self.xx * ginv.xx * other.xx,
                xy: 0.0,
                yy: 0.0,
            },
            _ => {
                // P = self * Ginv (general 2x2)
                let p00 = self.xx * ginv.xx + self.xy * ginv.xy;
                let p01 = self.xx * ginv.xy + self.xy * ginv.yy;
                let p10 = self.xy * ginv.xx + self.yy * ginv.xy;
                let p11 = self.xy * ginv.xy + self.yy * ginv.yy;
                // M = P * other; result is M + M^T
                let m00 = p00 * other.xx + p01 * other.xy;
                let m01 = p00 * other.xy + p01 * other.yy;
                let m10 = p10 * other.xx + p11 * other.xy;
                let m11 = p10 * other.xy + p11 * other.yy;
                SymMat {
                    xx: 2.0 * m00,
                    xy: m01 + m10,
                    yy: 2.0 * m11,
                }
            }
        }
    }

    /// Eigenvalues of the pencil `(self, g)` (that is, roots of
    /// `det(self - mu g) = 0`) in ascending order; `g` must be SPD.
    /// In 1D both entries equal the single eigenvalue.
    pub fn gen_eigs(&self, g: &SymMat, dim: usize) -> [f64; 2] {
        match dim {
            1 => {
                let v = self.xx / g.xx;
                [v, v]
            }
            _ => {
                let a = g.det(2);
                let b = self.xx * g.yy + self.yy * g.xx - 2.0 * self.xy * g.xy;
                let c = self.det(2);
                let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
                let mu1 = (b - disc) / (2.0 * a);
                let mu2 = (b + disc) / (2.0 * a);
                [mu1.min(mu2), mu1.max(mu2)]
            }
        }
    }

    /// Max absolute component (used for tolerance checks).
    pub fn max_abs(&self, dim: usize) -> f64 {
        match dim {
            1 => self.xx.abs(),
            _ => self.xx.abs().max(self.xy.abs()).max(self.yy.abs()),
        }
    }
}

/// General (not necessarily symmetric) `dim x dim` matrix, row-major.
/// Used for deformation Jacobians `I + t DV`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2 {
    pub m: [[f64; 2]; 2],
}

impl Mat2 {
    pub fn identity() -> Mat2 {
        Mat2 {
            m: [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    pub fn new(m00: f64, m01: f64, m10: f64, m11: f64) -> Mat2 {
        Mat2 {
            m: [[m00, m01], [m10, m11]],
        }
    }

    pub fn det(&self, dim: usize) -> f64 {
        match dim {
            1 => self.m[0][0],
            _ => self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0],
        }
    }

    pub fn trace(&self, dim: usize) -> f64 {
        match dim {
            1 => self.m[0][0],
            _ => self.m[0][0] + self.m[1][1],
        }
    }

    /// `I + s * self`.
    pub fn id_plus_scaled(&self, s: f64, dim: usize) -> Mat2 {
        let mut r = Mat2::identity();
        for i in 0..dim {
            for j in 0..dim {
                r.m[i][j] = if i == j { 1.0 } else { 0.0 } + s * self.m[i][j];
            }
        }
        r
    }

    /// Congruence pullback `J^T A J` of a symmetric tensor.
    pub fn pullback(&self, a: &SymMat, dim: usize) -> SymMat {
        match dim {
            1 => SymMat {
                xx: self.m[0][0] * a.xx * self.m[0][0],
                xy: 0.0,
                yy: 0.0,
            },
            _ => {
                let j = &self.m;
                // columns of J are the images of the basis vectors
                let c0 = [j[0][0], j[1][0]];
                let c1 = [j[0][1], j[1][1]];
                SymMat {
                    xx: a.quad(c0, c0, 2),
                    xy: a.quad(c0, c1, 2),
                    yy: a.quad(c1, c1, 2),
                }
            }
        }
    }
}

/// Root of `det(I + t M) = 0` closest to zero with the requested sign,
/// or `None` if the determinant never vanishes in that direction.
/// Useful for bounding safe deformation step sizes.
pub fn inversion_step(m: &Mat2, dim: usize, positive: bool) -> Option<f64> {
    // det(I + tM) = 1 + t tr(M) + t^2 det(M)   (the quadratic term drops in 1D)
    let b = m.trace(dim);
    let a = if dim == 2 { m.det(2) } else { 0.0 };
    let roots: Vec<f64> = if a.abs() < 1e-300 {
        if b.abs() < 1e-300 {
            vec![]
        } else {
            vec![-1.0 / b]
        }
    } else {
        let disc = b * b - 4.0 * a;
        if disc < 0.0 {
            vec![]
        } else {
            let s = disc.sqrt();
            vec![(-b - s) / (2.0 * a), (-b + s) / (2.0 * a)]
        }
    };
    roots
        .into_iter()
        .filter(|t| if positive { *t > 0.0 } else { *t < 0.0 })
        .min_by(|x, y| x.abs().partial_cmp(&y.abs()).unwrap())
}
