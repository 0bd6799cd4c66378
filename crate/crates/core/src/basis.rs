//! Scalar and vector polynomial bases on elements and on the unit interval.
//!
//! Every basis is stored as a coefficient matrix over scaled monomials
//! `m_α = ((x - x_E) / h_E)^α`, enumerated by total degree and, within one
//! degree, by decreasing power of `ξ`: `1, ξ, η, ξ², ξη, η², …`.
//!
//! Vector polynomials in `[P_k]²` are rows over the `2 n_k` vector monomials
//! `(m_1, 0), …, (m_{n_k}, 0), (0, m_1), …, (0, m_{n_k})`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::mesh::ElementGeometry;
use crate::quadrature::{gauss_legendre_unit_interval, IntervalRule, PlaneRule};
use crate::{grad_dim, perp_dim, poly_dim, Point};

#[derive(Debug, Error)]
pub enum BasisError {
    #[error("rank deficiency in column {column} of {what} (residual ratio {ratio:e})")]
    RankDeficient { what: &'static str, column: usize, ratio: f64 },
    #[error("orthonormal vector basis of degree {degree} needs an orthonormal scalar basis of degree {needed}")]
    MissingScalarBasis { degree: usize, needed: usize },
    #[error("quadrature of order {order} is too weak for degree {degree}")]
    WeakQuadrature { order: usize, degree: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisKind {
    Monomial,
    Orthonormal,
}

/// Exponents `(a, b)` of `ξ^a η^b` in basis order, up to total degree `k`.
pub fn monomial_exponents(k: usize) -> Vec<(usize, usize)> {
    (0..=k).flat_map(|d| (0..=d).map(move |j| (d - j, j))).collect()
}

/// Position of `ξ^a η^b` in the basis order.
pub fn monomial_index(a: usize, b: usize) -> usize {
    let d = a + b;
    poly_dim(d) - (d + 1) + b
}

/// Values of the scaled monomials (and optionally their physical gradients)
/// at a set of points. Rows are points, columns follow the basis order.
#[derive(Debug, Clone)]
pub struct Vandermonde {
    pub values: DMatrix<f64>,
    pub dx: Option<DMatrix<f64>>,
    pub dy: Option<DMatrix<f64>>,
}

pub(crate) fn vandermonde(center: Point, h: f64, points: &[Point], k: usize, with_gradients: bool) -> Vandermonde {
    let n = poly_dim(k);
    let exps = monomial_exponents(k);
    let mut values = DMatrix::zeros(points.len(), n);
    let (mut dx, mut dy) = if with_gradients {
        (Some(DMatrix::zeros(points.len(), n)), Some(DMatrix::zeros(points.len(), n)))
    } else {
        (None, None)
    };
    let mut px = vec![1.0; k + 1];
    let mut py = vec![1.0; k + 1];
    for (r, p) in points.iter().enumerate() {
        let (xi, eta) = ((p.x - center.x) / h, (p.y - center.y) / h);
        for d in 1..=k {
            px[d] = px[d - 1] * xi;
            py[d] = py[d - 1] * eta;
        }
        for (c, &(a, b)) in exps.iter().enumerate() {
            values[(r, c)] = px[a] * py[b];
            if let (Some(dx), Some(dy)) = (dx.as_mut(), dy.as_mut()) {
                dx[(r, c)] = if a > 0 { a as f64 * px[a - 1] * py[b] / h } else { 0.0 };
                dy[(r, c)] = if b > 0 { b as f64 * px[a] * py[b - 1] / h } else { 0.0 };
            }
        }
    }
    Vandermonde { values, dx, dy }
}

/// Scaled-monomial Vandermonde matrix of `geom` at `points`.
pub fn scaled_monomial_vandermonde(
    geom: &ElementGeometry,
    points: &[Point],
    k: usize,
    with_gradients: bool,
) -> Vandermonde {
    vandermonde(geom.centroid, geom.diameter, points, k, with_gradients)
}

/// Modified Gram–Schmidt with one reorthogonalization sweep per column.
/// Returns `(Q, R)` with `A = Q R`, `R` upper triangular with positive diagonal.
pub(crate) fn mgs(a: &DMatrix<f64>, what: &'static str) -> Result<(DMatrix<f64>, DMatrix<f64>), BasisError> {
    let (m, n) = a.shape();
    let mut q = a.clone();
    let mut r = DMatrix::zeros(n, n);
    for j in 0..n {
        let original = q.column(j).norm();
        for _ in 0..2 {
            for i in 0..j {
                let rij = q.column(i).dot(&q.column(j));
                r[(i, j)] += rij;
                let qi = q.column(i).clone_owned();
                q.column_mut(j).axpy(-rij, &qi, 1.0);
            }
        }
        let norm = q.column(j).norm();
        let ratio = if original > 0.0 { norm / original } else { 0.0 };
        if !(ratio > 1e3 * f64::EPSILON) || m == 0 {
            return Err(BasisError::RankDeficient { what, column: j, ratio });
        }
        q.column_mut(j).scale_mut(1.0 / norm);
        r[(j, j)] = norm;
    }
    Ok((q, r))
}

/// `(R)^{-T}` for an upper-triangular `R` with nonzero diagonal.
fn inverse_transpose_upper(r: &DMatrix<f64>) -> DMatrix<f64> {
    let n = r.nrows();
    let inv = r
        .solve_upper_triangular(&DMatrix::identity(n, n))
        .expect("triangular factor with positive diagonal");
    inv.transpose()
}

/// Scalar polynomial basis on an element; row `β` holds the monomial
/// coefficients of the `β`-th basis function.
#[derive(Debug, Clone)]
pub struct ScalarBasis2D {
    pub degree: usize,
    pub kind: BasisKind,
    pub center: Point,
    pub h: f64,
    pub coeffs: DMatrix<f64>,
}

impl ScalarBasis2D {
    pub fn monomial(geom: &ElementGeometry, k: usize) -> Self {
        let n = poly_dim(k);
        Self {
            degree: k,
            kind: BasisKind::Monomial,
            center: geom.centroid,
            h: geom.diameter,
            coeffs: DMatrix::identity(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.nrows()
    }

    /// Values at `points`: rows are points, columns basis functions.
    pub fn eval(&self, points: &[Point]) -> DMatrix<f64> {
        let v = vandermonde(self.center, self.h, points, self.degree, false);
        v.values * self.coeffs.transpose()
    }

    /// Physical gradients at `points`.
    pub fn eval_gradients(&self, points: &[Point]) -> (DMatrix<f64>, DMatrix<f64>) {
        let v = vandermonde(self.center, self.h, points, self.degree, true);
        let lt = self.coeffs.transpose();
        (v.dx.unwrap() * &lt, v.dy.unwrap() * lt)
    }

    /// Evaluates `Σ_β c_β φ_β` at one point.
    pub fn eval_combination(&self, coefficients: &DVector<f64>, p: Point) -> f64 {
        let v = vandermonde(self.center, self.h, &[p], self.degree, false);
        (v.values * self.coeffs.transpose() * coefficients)[0]
    }

    /// The basis restricted to degree `k`; exact for hierarchical bases.
    pub fn truncate(&self, k: usize) -> Self {
        let n = poly_dim(k);
        Self {
            degree: k,
            kind: self.kind,
            center: self.center,
            h: self.h,
            coeffs: self.coeffs.view((0, 0), (n, n)).into_owned(),
        }
    }

    /// Mass matrix `(φ_α, φ_β)_E` under `rule`.
    pub fn mass(&self, rule: &PlaneRule) -> DMatrix<f64> {
        let v = self.eval(&rule.points);
        weighted_gram(&v, &rule.weights)
    }
}

pub(crate) fn weighted_gram(v: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut wv = v.clone();
    for (mut row, &wi) in wv.row_iter_mut().zip(w) {
        row *= wi;
    }
    v.transpose() * wv
}

fn scale_rows_sqrt(v: &mut DMatrix<f64>, w: &[f64]) {
    for (mut row, &wi) in v.row_iter_mut().zip(w) {
        row *= wi.sqrt();
    }
}

/// `L²(E)`-orthonormal basis of `P_k(E)`: the `√w`-weighted Vandermonde is
/// factored by modified Gram–Schmidt, the orthonormal factor is factored
/// again, and the coefficients are `(R₂ R₁)^{-T}`.
pub fn orthonormalize_element_basis(
    geom: &ElementGeometry,
    rule: &PlaneRule,
    k: usize,
) -> Result<ScalarBasis2D, BasisError> {
    if rule.order < 2 * k {
        return Err(BasisError::WeakQuadrature { order: rule.order, degree: k });
    }
    let mut a = vandermonde(geom.centroid, geom.diameter, &rule.points, k, false).values;
    scale_rows_sqrt(&mut a, &rule.weights);
    let (q1, r1) = mgs(&a, "element Vandermonde")?;
    let (_, r2) = mgs(&q1, "element Vandermonde (second pass)")?;
    Ok(ScalarBasis2D {
        degree: k,
        kind: BasisKind::Orthonormal,
        center: geom.centroid,
        h: geom.diameter,
        coeffs: inverse_transpose_upper(&(r2 * r1)),
    })
}

/// `L²([0, 1])`-orthonormal basis `t_1, …, t_{k+2}` of `P_{k+1}`; row `j`
/// holds the coefficients of `t_j` over `1, s, …, s^{k+1}`.
#[derive(Debug, Clone)]
pub struct ScalarBasis1D {
    pub degree: usize,
    pub coeffs: DMatrix<f64>,
    /// The rule the basis was orthonormalized with.
    pub rule: IntervalRule,
}

impl ScalarBasis1D {
    pub fn dim(&self) -> usize {
        self.coeffs.nrows()
    }

    /// `t_j(s)` for every `j`.
    pub fn eval(&self, s: f64) -> DVector<f64> {
        let n = self.dim();
        let mut pw = DVector::from_element(n, 1.0);
        for i in 1..n {
            pw[i] = pw[i - 1] * s;
        }
        &self.coeffs * pw
    }
}

/// Orthonormal basis of `P_{k+1}([0, 1])` built from the `(k+2)`-point Gauss
/// rule: `V = Q₁R₁`, `√W Q₁ = Q₂R₂`, `L = (R₂R₁)^{-T}`.
pub fn orthonormalize_unit_interval_basis(k: usize) -> Result<ScalarBasis1D, BasisError> {
    let n = k + 2;
    let rule = gauss_legendre_unit_interval(n).expect("n >= 2");
    let mut v = DMatrix::zeros(n, n);
    for (r, &s) in rule.nodes.iter().enumerate() {
        let mut p = 1.0;
        for c in 0..n {
            v[(r, c)] = p;
            p *= s;
        }
    }
    let (mut q1, r1) = mgs(&v, "interval Vandermonde")?;
    scale_rows_sqrt(&mut q1, &rule.weights);
    let (_, r2) = mgs(&q1, "interval Vandermonde (second pass)")?;
    Ok(ScalarBasis1D { degree: k + 1, coeffs: inverse_transpose_upper(&(r2 * r1)), rule })
}

/// Basis of `[P_k(E)]²` split into a gradient block spanning `∇P_{k+1}` and a
/// complement block.
#[derive(Debug, Clone)]
pub struct VectorBasis {
    pub degree: usize,
    pub kind: BasisKind,
    pub center: Point,
    pub h: f64,
    /// `(n_grad + n_perp) × 2 n_k` coefficients over vector monomials.
    pub coeffs: DMatrix<f64>,
    /// Row `a` holds the monomial coefficients (degree `k + 1`) of a
    /// potential `P_a` with `∇P_a` equal to gradient basis vector `a`.
    pub potentials: DMatrix<f64>,
    pub n_grad: usize,
    pub n_perp: usize,
}

impl VectorBasis {
    pub fn dim(&self) -> usize {
        self.n_grad + self.n_perp
    }

    /// Components at `points`: `(vx, vy)`, each `points × dim`.
    pub fn eval(&self, points: &[Point]) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = poly_dim(self.degree);
        let v = vandermonde(self.center, self.h, points, self.degree, false).values;
        let cx = self.coeffs.columns(0, n).transpose();
        let cy = self.coeffs.columns(n, n).transpose();
        (&v * cx, v * cy)
    }

    /// Gram matrix `(g_a, g_b)_E` under `rule`.
    pub fn gram(&self, rule: &PlaneRule) -> DMatrix<f64> {
        let (vx, vy) = self.eval(&rule.points);
        weighted_gram(&vx, &rule.weights) + weighted_gram(&vy, &rule.weights)
    }
}

/// Vector-monomial coefficients of `∇m_β` for every `m_β` of degree `≤ k+1`.
fn monomial_gradient_coeffs(k: usize, h: f64) -> DMatrix<f64> {
    let n = poly_dim(k);
    let exps = monomial_exponents(k + 1);
    let mut c = DMatrix::zeros(exps.len(), 2 * n);
    for (beta, &(a, b)) in exps.iter().enumerate() {
        if a > 0 {
            c[(beta, monomial_index(a - 1, b))] = a as f64 / h;
        }
        if b > 0 {
            c[(beta, n + monomial_index(a, b - 1))] = b as f64 / h;
        }
    }
    c
}

/// Vector-monomial coefficients of `m_α (η, -ξ)` for `m_α` of degree `≤ k-1`.
fn monomial_perp_coeffs(k: usize) -> DMatrix<f64> {
    let n = poly_dim(k);
    let np = perp_dim(k);
    let mut c = DMatrix::zeros(np, 2 * n);
    if k == 0 {
        return c;
    }
    for (alpha, &(a, b)) in monomial_exponents(k - 1).iter().enumerate() {
        c[(alpha, monomial_index(a, b + 1))] = 1.0;
        c[(alpha, n + monomial_index(a + 1, b))] = -1.0;
    }
    c
}

/// Builds the gradient/complement basis of `[P_k(E)]²`.
///
/// The monomial kind uses `∇m_{α+1}` (`α = 1..n^∇_k`) and `m_α (η, -ξ)`
/// (`m_α ∈ M_{k-1}`). The orthonormal kind orthonormalizes the gradients of
/// the degree-`k+1` orthonormal scalar basis and then the monomial complement
/// generators against them, with two modified Gram–Schmidt passes over
/// `√w`-weighted values. `scalar` must be the orthonormal basis of degree
/// `k + 1` for the orthonormal kind and is ignored otherwise.
pub fn build_vector_basis(
    geom: &ElementGeometry,
    rule: &PlaneRule,
    k: usize,
    kind: BasisKind,
    scalar: Option<&ScalarBasis2D>,
) -> Result<VectorBasis, BasisError> {
    let n = poly_dim(k);
    let (n_grad, n_perp) = (grad_dim(k), perp_dim(k));
    let h = geom.diameter;
    let grads = monomial_gradient_coeffs(k, h);
    let perp = monomial_perp_coeffs(k);
    match kind {
        BasisKind::Monomial => {
            let mut coeffs = DMatrix::zeros(n_grad + n_perp, 2 * n);
            coeffs.rows_mut(0, n_grad).copy_from(&grads.rows(1, n_grad));
            coeffs.rows_mut(n_grad, n_perp).copy_from(&perp);
            let mut potentials = DMatrix::zeros(n_grad, poly_dim(k + 1));
            for a in 0..n_grad {
                potentials[(a, a + 1)] = 1.0;
            }
            Ok(VectorBasis { degree: k, kind, center: geom.centroid, h, coeffs, potentials, n_grad, n_perp })
        }
        BasisKind::Orthonormal => {
            let q = scalar
                .filter(|q| q.kind == BasisKind::Orthonormal && q.degree == k + 1)
                .ok_or(BasisError::MissingScalarBasis { degree: k, needed: k + 1 })?;
            if rule.order < 2 * k {
                return Err(BasisError::WeakQuadrature { order: rule.order, degree: k });
            }
            // generators: ∇q_2, …, ∇q_{n_{k+1}}, then the monomial complement
            let q_tail = q.coeffs.rows(1, n_grad).into_owned();
            let mut gen = DMatrix::zeros(n_grad + n_perp, 2 * n);
            gen.rows_mut(0, n_grad).copy_from(&(&q_tail * &grads));
            gen.rows_mut(n_grad, n_perp).copy_from(&perp);

            let v = vandermonde(geom.centroid, h, &rule.points, k, false).values;
            let npts = rule.len();
            let mut a = DMatrix::zeros(2 * npts, n_grad + n_perp);
            a.rows_mut(0, npts).copy_from(&(&v * gen.columns(0, n).transpose()));
            a.rows_mut(npts, npts).copy_from(&(&v * gen.columns(n, n).transpose()));
            let w2: Vec<f64> = rule.weights.iter().chain(&rule.weights).copied().collect();
            scale_rows_sqrt(&mut a, &w2);
            let (q1, r1) = mgs(&a, "vector basis")?;
            let (_, r2) = mgs(&q1, "vector basis (second pass)")?;
            let t = inverse_transpose_upper(&(r2 * r1));
            let coeffs = &t * gen;
            let potentials = t.view((0, 0), (n_grad, n_grad)) * q_tail;
            Ok(VectorBasis { degree: k, kind, center: geom.centroid, h, coeffs, potentials, n_grad, n_perp })
        }
    }
}
