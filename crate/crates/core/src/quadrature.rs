//! Gauss–Legendre rules on `[0, 1]` and polygon rules built by fan
//! triangulation from a star center.

use std::f64::consts::PI;

use thiserror::Error;

use crate::Point;

#[derive(Debug, Error)]
pub enum QuadratureError {
    #[error("quadrature needs at least one node")]
    NoNodes,
    #[error("triangle {triangle} of the fan has non-positive area {area:e}: invalid star center")]
    InvalidStarCenter { triangle: usize, area: f64 },
}

/// Rule on the unit interval. Nodes are increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Highest polynomial degree integrated exactly.
    pub order: usize,
}

impl IntervalRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&s, &w)| w * f(s)).sum()
    }
}

/// Rule on a planar region.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub order: usize,
}

impl PlaneRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate<F: Fn(Point) -> f64>(&self, f: F) -> f64 {
        self.points.iter().zip(&self.weights).map(|(&p, &w)| w * f(p)).sum()
    }
}

/// Legendre polynomial `P_n(x)` and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let j = j as f64;
        let p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// `n`-point Gauss–Legendre rule on `[0, 1]`, exact up to degree `2n - 1`.
pub fn gauss_legendre_unit_interval(n: usize) -> Result<IntervalRule, QuadratureError> {
    if n == 0 {
        return Err(QuadratureError::NoNodes);
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // x is the i-th largest root; store symmetric pairs on [0, 1]
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        nodes[i] = 0.5 * (1.0 - x);
        weights[n - 1 - i] = 0.5 * w;
        weights[i] = 0.5 * w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.5;
    }
    Ok(IntervalRule { nodes, weights, order: 2 * n - 1 })
}

/// Collapsed (Duffy) Gauss rule on the triangle `(a, b, c)` exact for degree `order`.
fn triangle_rule(a: Point, b: Point, c: Point, order: usize, out: &mut PlaneRule) {
    let nu = (order + 2).div_ceil(2);
    let nv = (order + 1).div_ceil(2).max(1);
    let gu = gauss_legendre_unit_interval(nu).expect("nu > 0");
    let gv = gauss_legendre_unit_interval(nv).expect("nv > 0");
    let e1 = b - a;
    let e2 = c - a;
    let jac = e1.x * e2.y - e1.y * e2.x;
    for (&u, &wu) in gu.nodes.iter().zip(&gu.weights) {
        for (&v, &wv) in gv.nodes.iter().zip(&gv.weights) {
            let (xi, eta) = (u, (1.0 - u) * v);
            out.points.push(a + xi * e1 + eta * e2);
            out.weights.push(jac * wu * wv * (1.0 - u));
        }
    }
}

/// Quadrature over a polygon by fan triangulation from `star_center`.
pub fn polygon_quadrature(
    vertices: &[Point],
    star_center: Point,
    order: usize,
) -> Result<PlaneRule, QuadratureError> {
    let n = vertices.len();
    let mut rule = PlaneRule { points: Vec::new(), weights: Vec::new(), order };
    for i in 0..n {
        let (p, q) = (vertices[i], vertices[(i + 1) % n]);
        let (d1, d2) = (p - star_center, q - star_center);
        let area = 0.5 * (d1.x * d2.y - d1.y * d2.x);
        let scale = d1.norm() * d2.norm();
        if !(area > 1e-14 * scale) {
            return Err(QuadratureError::InvalidStarCenter { triangle: i, area });
        }
        triangle_rule(star_center, p, q, order, &mut rule);
    }
    Ok(rule)
}
