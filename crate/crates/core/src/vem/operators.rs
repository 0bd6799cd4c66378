use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use super::{ElementSpace, EdgeReference, TensorField, VemError};
use crate::basis::{BasisKind, ScalarBasis2D};
use crate::poly_dim;

/// Diagonal stabilization of the non-projected remainder. Only boundary DOFs
/// are weighted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stabilization {
    /// `S_ii = C |E|`.
    DofiDofi { c: f64 },
    /// `S_ii = C |E| max(1, (A_C)_ii)`.
    DRecipe { c: f64 },
    /// `S_ii = |E| max(n·D⁻¹(x_e) n, (A_C)_ii)` with `x_e` the midpoint of the DOF's edge.
    EdgeNormalDRecipe,
}

impl fmt::Display for Stabilization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stabilization::DofiDofi { c } => write!(f, "DofiDofi({c:e})"),
            Stabilization::DRecipe { c } => write!(f, "DRecipe({c:e})"),
            Stabilization::EdgeNormalDRecipe => write!(f, "EdgeNormalDRecipe"),
        }
    }
}

impl FromStr for Stabilization {
    type Err = VemError;

    /// Parses the `Display` form, e.g. `DofiDofi(1e-6)`, `DRecipe(1)`,
    /// `EdgeNormalDRecipe`; names are case-insensitive and may contain `-`/`_`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || VemError::Unknown { what: "stabilization", value: s.to_string() };
        let s = s.trim();
        let (name, arg) = match s.find('(') {
            Some(i) if s.ends_with(')') => (&s[..i], Some(s[i + 1..s.len() - 1].trim())),
            Some(_) => return Err(bad()),
            None => (s, None),
        };
        let name: String = name.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        let arg = arg.map(|a| a.trim_start_matches("C=").trim_start_matches("c="));
        let c = match arg {
            Some(a) => Some(a.parse::<f64>().ok().filter(|c| c.is_finite() && *c > 0.0).ok_or_else(bad)?),
            None => None,
        };
        match (name.as_str(), c) {
            ("dofidofi", Some(c)) => Ok(Stabilization::DofiDofi { c }),
            ("drecipe", Some(c)) => Ok(Stabilization::DRecipe { c }),
            ("edgenormaldrecipe", None) => Ok(Stabilization::EdgeNormalDRecipe),
            _ => Err(bad()),
        }
    }
}

/// Solves `A X = B` with Jacobi equilibration and full pivoting.
fn pivoted_solve(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>, VemError> {
    let n = a.nrows();
    let s: Vec<f64> = (0..n).map(|i| {
        let d = a[(i, i)].abs();
        if d > 0.0 { 1.0 / d.sqrt() } else { 1.0 }
    }).collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| s[i] * a[(i, j)] * s[j]);
    let lu = scaled.full_piv_lu();
    let u = lu.u();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..n {
        lo = lo.min(u[(i, i)].abs());
        hi = hi.max(u[(i, i)].abs());
    }
    let rcond = if hi > 0.0 { lo / hi } else { 0.0 };
    if !(rcond > n as f64 * f64::EPSILON) {
        return Err(VemError::SingularMatrix { what, rcond });
    }
    let sb = DMatrix::from_fn(n, b.ncols(), |i, j| s[i] * b[(i, j)]);
    let y = lu.solve(&sb).ok_or(VemError::SingularMatrix { what, rcond })?;
    Ok(DMatrix::from_fn(n, b.ncols(), |i, j| s[i] * y[(i, j)]))
}

/// `(∇p_α, g_b)_E` for the pressure basis and the internal gradient test functions.
fn internal_gradient_pairing(space: &ElementSpace) -> DMatrix<f64> {
    let n = poly_dim(space.k);
    let nb = space.layout.n_internal_grad;
    match space.layout.variant.basis_kind() {
        // ∇m_α is exactly the (α-1)-th gradient basis vector
        BasisKind::Monomial => DMatrix::from_fn(n, nb, |a, b| if a == b + 1 { 1.0 } else { 0.0 }),
        BasisKind::Orthonormal => {
            let pts = &space.rule.points;
            let w = &space.rule.weights;
            let (gx, gy) = space.pressure.eval_gradients(pts);
            let (vx, vy) = space.vector.eval(pts);
            let mut t = DMatrix::zeros(n, nb);
            for q in 0..pts.len() {
                for a in 0..n {
                    for b in 0..nb {
                        t[(a, b)] += w[q] * (gx[(q, a)] * vx[(q, b)] + gy[(q, a)] * vy[(q, b)]);
                    }
                }
            }
            t
        }
    }
}

/// `W_{αi} = (p_α, div φ_i)_E`, from the internal gradient moments and the
/// boundary DOFs only.
pub fn divergence_matrix(space: &ElementSpace, edge_ref: &EdgeReference) -> DMatrix<f64> {
    let mut w = space.boundary_pairing(&space.pressure.coeffs, edge_ref);
    let t = internal_gradient_pairing(space);
    let off = space.layout.num_boundary();
    for b in 0..space.layout.n_internal_grad {
        for a in 0..w.nrows() {
            w[(a, off + b)] -= space.geom.area * t[(a, b)];
        }
    }
    w
}

/// Vector-basis coefficients of `Π⁰_k φ_i`, one column per local DOF.
pub fn l2_projector(space: &ElementSpace, w: &DMatrix<f64>, edge_ref: &EdgeReference) -> Result<DMatrix<f64>, VemError> {
    let vb = &space.vector;
    let l = &space.layout;
    let kind = l.variant.basis_kind();
    let potentials = ScalarBasis2D {
        degree: space.k + 1,
        kind: BasisKind::Monomial,
        center: vb.center,
        h: vb.h,
        coeffs: vb.potentials.clone(),
    };
    let pv = potentials.eval(&space.rule.points);
    let qv = space.pressure.eval(&space.rule.points);
    let mut wq = qv.clone();
    for (mut row, &wi) in wq.row_iter_mut().zip(&space.rule.weights) {
        row *= wi;
    }
    // (P_a, p_α)
    let mpp = pv.transpose() * wq;
    // coefficients of div φ_i in the pressure basis
    let div = match kind {
        BasisKind::Orthonormal => w.clone(),
        BasisKind::Monomial => pivoted_solve(&space.pressure.mass(&space.rule), w, "pressure mass matrix")?,
    };
    let mut b = DMatrix::zeros(vb.dim(), l.num_dofs());
    let grad_rhs = space.boundary_pairing(&vb.potentials, edge_ref) - mpp * div;
    b.rows_mut(0, vb.n_grad).copy_from(&grad_rhs);
    for (c, dof) in l.internal_perp_range().enumerate() {
        b[(vb.n_grad + c, dof)] = space.geom.area;
    }
    match kind {
        BasisKind::Orthonormal => Ok(b),
        BasisKind::Monomial => pivoted_solve(&vb.gram(&space.rule), &b, "vector monomial Gram matrix"),
    }
}

/// DOF values of every vector basis function: `D_{ia} = dof_i(g_a)`.
pub fn vector_dof_matrix(space: &ElementSpace, edge_ref: &EdgeReference) -> DMatrix<f64> {
    let vb = &space.vector;
    let l = &space.layout;
    let m = l.per_edge();
    let mut d = DMatrix::zeros(l.num_dofs(), vb.dim());
    for (ie, e) in space.geom.edges.iter().enumerate() {
        let rule = match l.variant.boundary {
            super::BoundaryDofs::PointValues => &edge_ref.gauss,
            super::BoundaryDofs::EdgeMoments => &edge_ref.basis.rule,
        };
        let pts: Vec<_> = rule.nodes.iter().map(|&s| e.point_at(s)).collect();
        let (vx, vy) = vb.eval(&pts);
        let vn = vx * e.normal.x + vy * e.normal.y;
        match l.variant.boundary {
            super::BoundaryDofs::PointValues => d.rows_mut(ie * m, m).copy_from(&vn),
            super::BoundaryDofs::EdgeMoments => {
                for (q, (&s, &wq)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
                    let t = edge_ref.basis.eval(s);
                    for j in 0..m {
                        for a in 0..vb.dim() {
                            d[(ie * m + j, a)] += wq * e.length * t[j] * vn[(q, a)];
                        }
                    }
                }
            }
        }
    }
    let gram = vb.gram(&space.rule);
    for (slot, r) in space.internal_test_rows().into_iter().enumerate() {
        let row = gram.row(r) / space.geom.area;
        d.row_mut(l.num_boundary() + slot).copy_from(&row);
    }
    d
}

fn symmetrize(a: DMatrix<f64>) -> DMatrix<f64> {
    (&a + a.transpose()) * 0.5
}

/// `A_C = Πᵀ M_{D⁻¹} Π`, with `M_{D⁻¹}` the vector-basis mass matrix weighted
/// by `D⁻¹` at the quadrature nodes.
pub fn consistency_matrix(space: &ElementSpace, projector: &DMatrix<f64>, dinv: &TensorField) -> Result<DMatrix<f64>, VemError> {
    let pts = &space.rule.points;
    let (vx, vy) = space.vector.eval(pts);
    let n = space.vector.dim();
    let mut wx = vx.clone();
    let mut wy = vy.clone();
    for (q, (&p, &w)) in pts.iter().zip(&space.rule.weights).enumerate() {
        let d = dinv(p);
        let asym = (d[(0, 1)] - d[(1, 0)]).abs();
        let scale = d[(0, 0)].abs() + d[(1, 1)].abs();
        if !(d[(0, 0)] > 0.0 && d.determinant() > 0.0 && asym <= 1e-12 * scale) {
            return Err(VemError::NonSpdTensor { point: p });
        }
        for a in 0..n {
            let (x, y) = (vx[(q, a)], vy[(q, a)]);
            wx[(q, a)] = w * (d[(0, 0)] * x + d[(0, 1)] * y);
            wy[(q, a)] = w * (d[(1, 0)] * x + d[(1, 1)] * y);
        }
    }
    let m = symmetrize(vx.transpose() * wx + vy.transpose() * wy);
    Ok(symmetrize(projector.transpose() * m * projector))
}

/// `A_S = (I - DΠ)ᵀ S (I - DΠ)` with `S` diagonal and zero on internal DOFs.
///
/// The weights act on boundary DOFs normalized to unit scaling in `h`: edge
/// moments enter divided by `|e|`, and the consistency diagonal used by the
/// recipes is read in that normalized basis.
pub fn stabilization_matrix(
    space: &ElementSpace,
    stab: Stabilization,
    a_c: &DMatrix<f64>,
    dof_matrix: &DMatrix<f64>,
    projector: &DMatrix<f64>,
    dinv: &TensorField,
) -> Result<DMatrix<f64>, VemError> {
    let l = &space.layout;
    let n = l.num_dofs();
    let area = space.geom.area;
    let mut s = vec![0.0; n];
    for (ie, e) in space.geom.edges.iter().enumerate() {
        let normal_strength = match stab {
            Stabilization::EdgeNormalDRecipe => {
                let nn = e.normal;
                let v = nn.dot(&(dinv(e.midpoint()) * nn));
                if !(v > 0.0 && v.is_finite()) {
                    return Err(VemError::NonSpdTensor { point: e.midpoint() });
                }
                v
            }
            _ => 0.0,
        };
        let unit = match l.variant.boundary {
            super::BoundaryDofs::PointValues => 1.0,
            super::BoundaryDofs::EdgeMoments => e.length,
        };
        for i in l.edge_range(ie) {
            let acii = a_c[(i, i)] * unit * unit;
            let weight = match stab {
                Stabilization::DofiDofi { c } => c * area,
                Stabilization::DRecipe { c } => c * area * acii.max(1.0),
                Stabilization::EdgeNormalDRecipe => area * normal_strength.max(acii),
            };
            s[i] = weight / (unit * unit);
        }
    }
    let r = DMatrix::identity(n, n) - dof_matrix * projector;
    let mut sr = r.clone();
    for (i, mut row) in sr.row_iter_mut().enumerate() {
        row *= s[i];
    }
    Ok(symmetrize(r.transpose() * sr))
}

/// `K^E = [[A_C + A_S, -Wᵀ], [W, 0]]`.
pub fn local_saddle(a_c: &DMatrix<f64>, a_s: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>, VemError> {
    let n = a_c.nrows();
    if a_c.shape() != (n, n) || a_s.shape() != (n, n) || w.ncols() != n {
        return Err(VemError::DimensionMismatch(format!(
            "A_C {:?}, A_S {:?}, W {:?}",
            a_c.shape(),
            a_s.shape(),
            w.shape()
        )));
    }
    let m = w.nrows();
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(&(a_c + a_s));
    k.view_mut((0, n), (n, m)).copy_from(&(-w.transpose()));
    k.view_mut((n, 0), (m, n)).copy_from(w);
    Ok(k)
}

/// All element operators.
#[derive(Debug, Clone)]
pub struct LocalOperators {
    pub projector: DMatrix<f64>,
    pub dof_matrix: DMatrix<f64>,
    pub a_c: DMatrix<f64>,
    pub a_s: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub k_e: DMatrix<f64>,
}

impl LocalOperators {
    pub fn compute(
        space: &ElementSpace,
        edge_ref: &EdgeReference,
        dinv: &TensorField,
        stab: Stabilization,
    ) -> Result<Self, VemError> {
        let w = divergence_matrix(space, edge_ref);
        let projector = l2_projector(space, &w, edge_ref)?;
        let dof_matrix = vector_dof_matrix(space, edge_ref);
        let a_c = consistency_matrix(space, &projector, dinv)?;
        let a_s = stabilization_matrix(space, stab, &a_c, &dof_matrix, &projector, dinv)?;
        let k_e = local_saddle(&a_c, &a_s, &w)?;
        Ok(Self { projector, dof_matrix, a_c, a_s, w, k_e })
    }
}
