use super::{BoundaryLabel, MeshError, PolygonalMesh};
use crate::Point;

/// Geometry of one side of an element.
///
/// `start` and `end` follow the global edge orientation, so the affine map
/// `F(s) = start + s (end - start)` is shared by both neighbours of an
/// interior edge. `normal` is the element's outward unit normal and `sign`
/// relates it to the global normal.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGeometry {
    pub global: usize,
    pub start: Point,
    pub end: Point,
    pub length: f64,
    pub normal: Point,
    pub sign: f64,
    pub label: BoundaryLabel,
}

impl EdgeGeometry {
    pub fn point_at(&self, s: f64) -> Point {
        self.start + s * (self.end - self.start)
    }

    pub fn midpoint(&self) -> Point {
        self.point_at(0.5)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElementGeometry {
    pub vertices: Vec<Point>,
    pub centroid: Point,
    pub diameter: f64,
    pub area: f64,
    pub star_center: Point,
    pub edges: Vec<EdgeGeometry>,
}

impl ElementGeometry {
    /// Geometry of a standalone counter-clockwise polygon whose edges are
    /// oriented along the loop (all signs `+1`).
    pub fn from_polygon(vertices: &[Point]) -> Result<Self, MeshError> {
        let center = star_center(vertices).ok_or(MeshError::Degenerate(0))?;
        Self::build(vertices.to_vec(), center, |j| (j, 1.0, BoundaryLabel::Dirichlet), 0)
    }

    fn build<F>(vertices: Vec<Point>, star_center: Point, side: F, cell: usize) -> Result<Self, MeshError>
    where
        F: Fn(usize) -> (usize, f64, BoundaryLabel),
    {
        let area = polygon_area(&vertices);
        if !(area > 0.0) {
            return Err(MeshError::Degenerate(cell));
        }
        let centroid = polygon_centroid(&vertices);
        let diameter = diameter(&vertices);
        let n = vertices.len();
        let edges = (0..n)
            .map(|j| {
                let a = vertices[j];
                let b = vertices[(j + 1) % n];
                let t = b - a;
                let length = t.norm();
                let normal = Point::new(t.y, -t.x) / length;
                let (global, sign, label) = side(j);
                let (start, end) = if sign > 0.0 { (a, b) } else { (b, a) };
                EdgeGeometry { global, start, end, length, normal, sign, label }
            })
            .collect();
        Ok(Self { vertices, centroid, diameter, area, star_center, edges })
    }
}

pub fn compute_geometry(mesh: &PolygonalMesh, cell: usize) -> Result<ElementGeometry, MeshError> {
    if cell >= mesh.num_cells() {
        return Err(MeshError::InvalidParameter(format!("cell index {cell} out of range")));
    }
    let sides = mesh.cell_sides(cell);
    ElementGeometry::build(
        mesh.cell_vertices(cell),
        mesh.star_center(cell),
        |j| {
            let s = sides[j];
            (s.edge, s.sign, mesh.edges()[s.edge].label)
        },
        cell,
    )
}

/// Signed shoelace area (positive for counter-clockwise loops).
pub fn polygon_area(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
}

pub fn polygon_centroid(vertices: &[Point]) -> Point {
    let n = vertices.len();
    // shift to the first vertex for accuracy on small cells far from the origin
    let o = vertices[0];
    let mut a2 = 0.0;
    let mut c = Point::zeros();
    for i in 0..n {
        let p = vertices[i] - o;
        let q = vertices[(i + 1) % n] - o;
        let cross = p.x * q.y - q.x * p.y;
        a2 += cross;
        c += cross * (p + q);
    }
    o + c / (3.0 * a2)
}

pub(crate) fn diameter(vertices: &[Point]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, a) in vertices.iter().enumerate() {
        for b in &vertices[i + 1..] {
            d = d.max((a - b).norm());
        }
    }
    d
}

fn cross(a: Point, b: Point) -> f64 {
    a.x * b.y - a.y * b.x
}

/// A point in the interior of the kernel of a counter-clockwise polygon:
/// the centroid if it sees every edge strictly from the inside, otherwise the
/// centroid of the kernel obtained by half-plane clipping. `None` if the
/// polygon is not star-shaped.
pub fn star_center(vertices: &[Point]) -> Option<Point> {
    let n = vertices.len();
    if n < 3 || !(polygon_area(vertices) > 0.0) {
        return None;
    }
    let sees_all = |p: Point| {
        (0..n).all(|i| {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            let len = (b - a).norm();
            cross(b - a, p - a) > 1e-10 * len * len
        })
    };
    let c = polygon_centroid(vertices);
    if sees_all(c) {
        return Some(c);
    }
    // clip a bounding box against every edge's inner half-plane
    let (mut lo, mut hi) = (vertices[0], vertices[0]);
    for v in vertices {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    let mut kernel = vec![lo, Point::new(hi.x, lo.y), hi, Point::new(lo.x, hi.y)];
    for i in 0..n {
        let (a, b) = (vertices[i], vertices[(i + 1) % n]);
        let side = |p: Point| cross(b - a, p - a);
        let mut next = Vec::with_capacity(kernel.len() + 1);
        for j in 0..kernel.len() {
            let (p, q) = (kernel[j], kernel[(j + 1) % kernel.len()]);
            let (sp, sq) = (side(p), side(q));
            if sp >= 0.0 {
                next.push(p);
            }
            if (sp >= 0.0) != (sq >= 0.0) {
                next.push(p + (q - p) * (sp / (sp - sq)));
            }
        }
        kernel = next;
        if kernel.len() < 3 {
            return None;
        }
    }
    if !(polygon_area(&kernel) > 0.0) {
        return None;
    }
    let k = polygon_centroid(&kernel);
    sees_all(k).then_some(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pts(v: &[(f64, f64)]) -> Vec<Point> {
        v.iter().map(|&(x, y)| Point::new(x, y)).collect()
    }

    #[test]
    fn unit_square() {
        let g = ElementGeometry::from_polygon(&pts(&[(0., 0.), (1., 0.), (1., 1.), (0., 1.)])).unwrap();
        assert_abs_diff_eq!(g.area, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.centroid, Point::new(0.5, 0.5), epsilon = 1e-15);
        assert_abs_diff_eq!(g.diameter, 2f64.sqrt(), epsilon = 1e-15);
        let normals: Vec<Point> = g.edges.iter().map(|e| e.normal).collect();
        assert_eq!(normals, pts(&[(0., -1.), (1., 0.), (0., 1.), (-1., 0.)]));
        for e in &g.edges {
            assert_abs_diff_eq!(e.normal.norm(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn right_triangle() {
        let g = ElementGeometry::from_polygon(&pts(&[(0., 0.), (1., 0.), (0., 1.)])).unwrap();
        assert_abs_diff_eq!(g.area, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(g.centroid, Point::new(1. / 3., 1. / 3.), epsilon = 1e-15);
    }

    #[test]
    fn l_shaped_hexagon() {
        let v = pts(&[(0., 0.), (2., 0.), (2., 1.), (1., 1.), (1., 2.), (0., 2.)]);
        let g = ElementGeometry::from_polygon(&v).unwrap();
        assert_abs_diff_eq!(g.area, 3.0, epsilon = 1e-14);
        // reflex vertex: the turn at (1, 1) is clockwise
        let reflex: Vec<usize> = (0..6)
            .filter(|&i| cross(v[i] - v[(i + 5) % 6], v[(i + 1) % 6] - v[i]) < 0.0)
            .collect();
        assert_eq!(reflex, vec![3]);
        // centroid (5/6, 5/6) is in the kernel [0,1]²
        assert_abs_diff_eq!(g.star_center, Point::new(5. / 6., 5. / 6.), epsilon = 1e-14);
    }

    #[test]
    fn kernel_fallback_for_off_kernel_centroid() {
        // a thin-armed L whose centroid lies outside the kernel [0, 0.2]²
        let v = pts(&[(0., 0.), (3., 0.), (3., 0.2), (0.2, 0.2), (0.2, 3.), (0., 3.)]);
        let c = polygon_centroid(&v);
        assert!(c.x > 0.2);
        let k = star_center(&v).unwrap();
        assert!(k.x < 0.2 && k.y < 0.2 && k.x > 0.0 && k.y > 0.0);
    }

    #[test]
    fn degenerate_polygon_rejected() {
        let v = pts(&[(0., 0.), (1., 0.), (2., 0.)]);
        assert!(ElementGeometry::from_polygon(&v).is_err());
    }
}
