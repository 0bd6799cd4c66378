//! Element-level degrees of freedom and operators.
//!
//! Local DOFs are numbered edge by edge (`k + 1` per edge, in the order of the
//! element's edge loop) followed by the internal gradient moments and the
//! internal complement moments. Edge DOFs are taken with respect to the
//! element-outward normal; points and moments follow the global edge
//! parameterization `F(s) = start + s (end - start)` so neighbouring elements
//! index the same physical quantities. Global assembly multiplies by the edge
//! sign to move to the fixed global normal.

mod operators;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix2};
use thiserror::Error;

use crate::basis::{
    build_vector_basis, orthonormalize_element_basis, orthonormalize_unit_interval_basis, vandermonde,
    BasisError, BasisKind, ScalarBasis1D, ScalarBasis2D, VectorBasis,
};
use crate::mesh::{EdgeGeometry, ElementGeometry};
use crate::quadrature::{gauss_legendre_unit_interval, polygon_quadrature, IntervalRule, PlaneRule, QuadratureError};
use crate::{perp_dim, poly_dim, Point};

pub use operators::{
    consistency_matrix, divergence_matrix, l2_projector, local_saddle, stabilization_matrix, vector_dof_matrix,
    LocalOperators, Stabilization,
};

/// Tensor-valued coefficient field.
pub type TensorField = dyn Fn(Point) -> Matrix2<f64> + Send + Sync;
/// Vector-valued field.
pub type VectorField = dyn Fn(Point) -> Point + Send + Sync;

#[derive(Debug, Error)]
pub enum VemError {
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("singular {what} (reciprocal condition estimate {rcond:e})")]
    SingularMatrix { what: &'static str, rcond: f64 },
    #[error("inverse diffusion tensor is not SPD at ({}, {})", .point.x, .point.y)]
    NonSpdTensor { point: Point },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unknown {what} `{value}`")]
    Unknown { what: &'static str, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryDofs {
    /// Normal component at the `k + 1` Gauss points of each edge.
    PointValues,
    /// Moments of the normal component against the orthonormal edge basis.
    EdgeMoments,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InternalDofs {
    MonomialMoments,
    OrthoMoments,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DofVariant {
    pub boundary: BoundaryDofs,
    pub internal: InternalDofs,
}

impl DofVariant {
    pub const MON_A: Self = Self { boundary: BoundaryDofs::PointValues, internal: InternalDofs::MonomialMoments };
    pub const MON_B: Self = Self { boundary: BoundaryDofs::EdgeMoments, internal: InternalDofs::MonomialMoments };
    pub const ORTHO_A: Self = Self { boundary: BoundaryDofs::PointValues, internal: InternalDofs::OrthoMoments };
    pub const ORTHO_B: Self = Self { boundary: BoundaryDofs::EdgeMoments, internal: InternalDofs::OrthoMoments };
    pub const ALL: [Self; 4] = [Self::MON_A, Self::MON_B, Self::ORTHO_A, Self::ORTHO_B];

    /// Kind of the internal vector basis and of the pressure basis.
    pub fn basis_kind(&self) -> BasisKind {
        match self.internal {
            InternalDofs::MonomialMoments => BasisKind::Monomial,
            InternalDofs::OrthoMoments => BasisKind::Orthonormal,
        }
    }
}

impl fmt::Display for DofVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = match self.internal {
            InternalDofs::MonomialMoments => "Mon",
            InternalDofs::OrthoMoments => "Ortho",
        };
        let b = match self.boundary {
            BoundaryDofs::PointValues => "a",
            BoundaryDofs::EdgeMoments => "b",
        };
        write!(f, "{a}({b})")
    }
}

impl FromStr for DofVariant {
    type Err = VemError;

    /// Accepts `Mon(a)`, `mon_a`, `ortho-b`, … (case and punctuation insensitive).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        match key.as_str() {
            "mona" => Ok(Self::MON_A),
            "monb" => Ok(Self::MON_B),
            "orthoa" => Ok(Self::ORTHO_A),
            "orthob" => Ok(Self::ORTHO_B),
            _ => Err(VemError::Unknown { what: "DOF variant", value: s.to_string() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DofLayout {
    pub k: usize,
    pub variant: DofVariant,
    /// Sign of each local edge relative to the global edge normal.
    pub edge_signs: Vec<f64>,
    pub n_internal_grad: usize,
    pub n_internal_perp: usize,
}

impl DofLayout {
    pub fn num_edges(&self) -> usize {
        self.edge_signs.len()
    }

    pub fn per_edge(&self) -> usize {
        self.k + 1
    }

    pub fn edge_range(&self, edge: usize) -> Range<usize> {
        edge * (self.k + 1)..(edge + 1) * (self.k + 1)
    }

    pub fn num_boundary(&self) -> usize {
        self.num_edges() * (self.k + 1)
    }

    pub fn internal_grad_range(&self) -> Range<usize> {
        let s = self.num_boundary();
        s..s + self.n_internal_grad
    }

    pub fn internal_perp_range(&self) -> Range<usize> {
        let s = self.num_boundary() + self.n_internal_grad;
        s..s + self.n_internal_perp
    }

    pub fn num_internal(&self) -> usize {
        self.n_internal_grad + self.n_internal_perp
    }

    pub fn num_dofs(&self) -> usize {
        self.num_boundary() + self.num_internal()
    }

    pub fn is_internal(&self, dof: usize) -> bool {
        dof >= self.num_boundary()
    }
}

pub fn build_dof_layout(geom: &ElementGeometry, k: usize, variant: DofVariant) -> DofLayout {
    DofLayout {
        k,
        variant,
        edge_signs: geom.edges.iter().map(|e| e.sign).collect(),
        n_internal_grad: poly_dim(k) - 1,
        n_internal_perp: perp_dim(k),
    }
}

/// Per-degree edge data shared by all elements: the orthonormal basis of
/// `P_{k+1}([0, 1])`, the `(k+1)`-point Gauss rule of the point-value DOFs and
/// a rule for moments of non-polynomial data.
#[derive(Debug, Clone)]
pub struct EdgeReference {
    pub k: usize,
    pub basis: ScalarBasis1D,
    pub gauss: IntervalRule,
    pub data_rule: IntervalRule,
}

impl EdgeReference {
    pub fn new(k: usize) -> Result<Self, VemError> {
        Ok(Self {
            k,
            basis: orthonormalize_unit_interval_basis(k)?,
            gauss: gauss_legendre_unit_interval(k + 1)?,
            data_rule: gauss_legendre_unit_interval(k + 3)?,
        })
    }

    /// Lagrange polynomials on the Gauss nodes, evaluated at `s`.
    pub fn lagrange(&self, s: f64) -> DVector<f64> {
        let x = &self.gauss.nodes;
        DVector::from_fn(x.len(), |i, _| {
            x.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &xj)| (s - xj) / (x[i] - xj)).product()
        })
    }

    /// Edge DOFs of a field with normal component `g(s) = v(F(s))·n`, given
    /// as a function of the edge parameter.
    pub fn edge_dofs(&self, variant: DofVariant, length: f64, g: impl Fn(f64) -> f64) -> DVector<f64> {
        match variant.boundary {
            BoundaryDofs::PointValues => DVector::from_iterator(self.k + 1, self.gauss.nodes.iter().map(|&s| g(s))),
            BoundaryDofs::EdgeMoments => {
                let mut out = DVector::zeros(self.k + 1);
                for (&s, &w) in self.data_rule.nodes.iter().zip(&self.data_rule.weights) {
                    let t = self.basis.eval(s);
                    out.axpy(w * g(s) * length, &t.rows(0, self.k + 1), 1.0);
                }
                out
            }
        }
    }

    /// `∫_e g φ_i·n` for the edge basis functions `φ_i` of one edge, with
    /// `g` given as a function of the edge parameter.
    pub fn edge_load(&self, variant: DofVariant, length: f64, g: impl Fn(f64) -> f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.k + 1);
        for (&s, &w) in self.data_rule.nodes.iter().zip(&self.data_rule.weights) {
            let gs = g(s);
            match variant.boundary {
                // φ_i·n = ℓ_i
                BoundaryDofs::PointValues => out.axpy(w * gs * length, &self.lagrange(s), 1.0),
                // φ_i·n = t_i / |e|
                BoundaryDofs::EdgeMoments => out.axpy(w * gs, &self.basis.eval(s).rows(0, self.k + 1), 1.0),
            }
        }
        out
    }
}

/// `C^e_{βj} = ∫₀¹ m_β(F(s)) t_j(s) ds` for the scaled monomials of degree
/// `≤ k + 1` of `geom` on its local edge `edge`.
pub fn edge_trace_coefficients(geom: &ElementGeometry, edge: usize, edge_ref: &EdgeReference) -> DMatrix<f64> {
    let e = &geom.edges[edge];
    let rule = &edge_ref.basis.rule;
    let pts: Vec<Point> = rule.nodes.iter().map(|&s| e.point_at(s)).collect();
    let v = vandermonde(geom.centroid, geom.diameter, &pts, edge_ref.k + 1, false).values;
    let mut tw = DMatrix::zeros(rule.len(), edge_ref.basis.dim());
    for (r, (&s, &w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
        tw.row_mut(r).copy_from(&(edge_ref.basis.eval(s) * w).transpose());
    }
    v.transpose() * tw
}

/// Everything needed to build the operators of one element.
#[derive(Debug, Clone)]
pub struct ElementSpace {
    pub geom: ElementGeometry,
    pub k: usize,
    pub layout: DofLayout,
    pub rule: PlaneRule,
    /// Pressure basis of `P_k(E)`.
    pub pressure: ScalarBasis2D,
    pub vector: VectorBasis,
    /// Trace coefficients `C^e`, one matrix per local edge.
    pub traces: Vec<DMatrix<f64>>,
}

impl ElementSpace {
    /// `extra_order` raises the element quadrature above `2k + 2`, e.g. for
    /// variable coefficients.
    pub fn new(
        geom: ElementGeometry,
        k: usize,
        variant: DofVariant,
        edge_ref: &EdgeReference,
        extra_order: usize,
    ) -> Result<Self, VemError> {
        if edge_ref.k != k {
            return Err(VemError::DimensionMismatch(format!("edge data of degree {} used with k = {k}", edge_ref.k)));
        }
        let rule = polygon_quadrature(&geom.vertices, geom.star_center, 2 * k + 2 + extra_order)?;
        let kind = variant.basis_kind();
        let (pressure, vector) = match kind {
            BasisKind::Monomial => (
                ScalarBasis2D::monomial(&geom, k),
                build_vector_basis(&geom, &rule, k, kind, None)?,
            ),
            BasisKind::Orthonormal => {
                let q = orthonormalize_element_basis(&geom, &rule, k + 1)?;
                let v = build_vector_basis(&geom, &rule, k, kind, Some(&q))?;
                (q.truncate(k), v)
            }
        };
        let traces = (0..geom.edges.len()).map(|e| edge_trace_coefficients(&geom, e, edge_ref)).collect();
        let layout = build_dof_layout(&geom, k, variant);
        Ok(Self { geom, k, layout, rule, pressure, vector, traces })
    }

    pub fn variant(&self) -> DofVariant {
        self.layout.variant
    }

    /// Rows of the vector basis used as internal DOF test functions.
    pub fn internal_test_rows(&self) -> Vec<usize> {
        let l = &self.layout;
        (0..l.n_internal_grad).chain(self.vector.n_grad..self.vector.n_grad + l.n_internal_perp).collect()
    }

    /// Local DOFs of `field` (edge DOFs w.r.t. the element-outward normal).
    pub fn interpolate(&self, field: &dyn Fn(Point) -> Point, edge_ref: &EdgeReference) -> DVector<f64> {
        let l = &self.layout;
        let mut dofs = DVector::zeros(l.num_dofs());
        for (ie, e) in self.geom.edges.iter().enumerate() {
            let vals = edge_ref.edge_dofs(l.variant, e.length, |s| field(e.point_at(s)).dot(&e.normal));
            dofs.rows_mut(ie * l.per_edge(), l.per_edge()).copy_from(&vals);
        }
        let (vx, vy) = self.vector.eval(&self.rule.points);
        let rows = self.internal_test_rows();
        for (q, (&p, &w)) in self.rule.points.iter().zip(&self.rule.weights).enumerate() {
            let f = field(p);
            for (slot, &r) in rows.iter().enumerate() {
                dofs[l.num_boundary() + slot] += w * (f.x * vx[(q, r)] + f.y * vy[(q, r)]);
            }
        }
        for slot in 0..rows.len() {
            dofs[l.num_boundary() + slot] /= self.geom.area;
        }
        dofs
    }

    /// `∫_e q φ_i·n_e` for polynomials `q` (rows of monomial coefficients of
    /// degree `≤ k + 1`) and every local DOF `i`; internal columns are zero.
    pub(crate) fn boundary_pairing(&self, polys: &DMatrix<f64>, edge_ref: &EdgeReference) -> DMatrix<f64> {
        let k = self.k;
        let n1 = poly_dim(k + 1);
        let mut pad = DMatrix::zeros(polys.nrows(), n1);
        pad.columns_mut(0, polys.ncols()).copy_from(polys);
        let mut out = DMatrix::zeros(polys.nrows(), self.layout.num_dofs());
        for (ie, e) in self.geom.edges.iter().enumerate() {
            let block = match self.layout.variant.boundary {
                BoundaryDofs::PointValues => {
                    let pts: Vec<Point> = edge_ref.gauss.nodes.iter().map(|&s| e.point_at(s)).collect();
                    let v = vandermonde(self.geom.centroid, self.geom.diameter, &pts, k + 1, false).values;
                    let mut vals = &pad * v.transpose();
                    for (j, &w) in edge_ref.gauss.weights.iter().enumerate() {
                        vals.column_mut(j).scale_mut(w * e.length);
                    }
                    vals
                }
                BoundaryDofs::EdgeMoments => (&pad * &self.traces[ie]).columns(0, k + 1).into_owned(),
            };
            out.columns_mut(ie * (k + 1), k + 1).copy_from(&block);
        }
        out
    }
}

/// Edge DOFs of `field` on a global edge, w.r.t. the normal `normal`.
pub fn edge_interpolate(
    field: &dyn Fn(Point) -> Point,
    edge: &EdgeGeometry,
    normal: Point,
    variant: DofVariant,
    edge_ref: &EdgeReference,
) -> DVector<f64> {
    edge_ref.edge_dofs(variant, edge.length, |s| field(edge.point_at(s)).dot(&normal))
}

/// Local DOFs of `field`: edge values or moments of `field·n_e` and internal
/// moments `(1/|E|) ∫_E field·g`.
pub fn interpolate_dofs(field: &dyn Fn(Point) -> Point, space: &ElementSpace, edge_ref: &EdgeReference) -> DVector<f64> {
    space.interpolate(field, edge_ref)
}
