use std::fmt;

use super::{polygon_area, BoundaryLabel, PolygonalMesh};
use crate::Point;

#[derive(Debug, Clone, PartialEq)]
pub enum MeshIssue {
    /// Clockwise or degenerate loop.
    NonPositiveArea { cell: usize, area: f64 },
    SelfIntersecting { cell: usize },
    /// Fan triangulation from the stored star center has a non-positive triangle.
    NotStarShaped { cell: usize },
    /// Edge borders the wrong number of cells for its label.
    Incidence { edge: usize, cells: usize, label: BoundaryLabel },
    /// Both neighbours of an interior edge traverse it in the same direction.
    SignConflict { edge: usize },
    /// Sum of cell areas differs from the area enclosed by the boundary.
    Tiling { cells_area: f64, enclosed_area: f64 },
}

impl fmt::Display for MeshIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshIssue::NonPositiveArea { cell, area } => {
                write!(f, "orientation: cell {cell} has signed area {area:e}")
            }
            MeshIssue::SelfIntersecting { cell } => write!(f, "cell {cell} is self-intersecting"),
            MeshIssue::NotStarShaped { cell } => {
                write!(f, "cell {cell} is not star-shaped w.r.t. its star center")
            }
            MeshIssue::Incidence { edge, cells, label } => {
                write!(f, "incidence: {} edge {edge} borders {cells} cells", label.as_str())
            }
            MeshIssue::SignConflict { edge } => {
                write!(f, "orientation: neighbours of edge {edge} carry equal signs")
            }
            MeshIssue::Tiling { cells_area, enclosed_area } => {
                write!(f, "tiling: cell areas sum to {cells_area} but boundary encloses {enclosed_area}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeshDiagnostics {
    pub issues: Vec<MeshIssue>,
}

impl MeshDiagnostics {
    pub fn passed(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has_orientation_failure(&self) -> bool {
        self.issues.iter().any(|i| {
            matches!(i, MeshIssue::NonPositiveArea { .. } | MeshIssue::SignConflict { .. })
        })
    }

    pub fn has_incidence_failure(&self) -> bool {
        self.issues.iter().any(|i| matches!(i, MeshIssue::Incidence { .. }))
    }
}

fn cross(a: Point, b: Point) -> f64 {
    a.x * b.y - a.y * b.x
}

fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = cross(p2 - p1, q1 - p1);
    let d2 = cross(p2 - p1, q2 - p1);
    let d3 = cross(q2 - q1, p1 - q1);
    let d4 = cross(q2 - q1, p2 - q1);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |a: Point, b: Point, p: Point, d: f64| {
        d == 0.0 && p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
    };
    on(p1, p2, q1, d1) || on(p1, p2, q2, d2) || on(q1, q2, p1, d3) || on(q1, q2, p2, d4)
}

fn is_simple(v: &[Point]) -> bool {
    let n = v.len();
    for i in 0..n {
        for j in i + 1..n {
            // skip sides sharing a vertex
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

/// Checks orientation, simplicity, star-shapedness, edge incidence and tiling.
pub fn validate_mesh(mesh: &PolygonalMesh) -> MeshDiagnostics {
    let mut issues = Vec::new();
    let mut cells_area = 0.0;
    for c in 0..mesh.num_cells() {
        let v = mesh.cell_vertices(c);
        let area = polygon_area(&v);
        cells_area += area;
        if !(area > 0.0) {
            issues.push(MeshIssue::NonPositiveArea { cell: c, area });
            continue;
        }
        if !is_simple(&v) {
            issues.push(MeshIssue::SelfIntersecting { cell: c });
            continue;
        }
        let s = mesh.star_center(c);
        let n = v.len();
        let star_ok = (0..n).all(|i| cross(v[i] - s, v[(i + 1) % n] - s) > 0.0);
        if !star_ok {
            issues.push(MeshIssue::NotStarShaped { cell: c });
        }
    }

    let mut signs: Vec<Vec<f64>> = vec![Vec::new(); mesh.num_edges()];
    for c in 0..mesh.num_cells() {
        for side in mesh.cell_sides(c) {
            signs[side.edge].push(side.sign);
        }
    }
    let mut enclosed = 0.0;
    for (e, s) in signs.iter().enumerate() {
        let label = mesh.edges()[e].label;
        let expected = if label == BoundaryLabel::Interior { 2 } else { 1 };
        if s.len() != expected {
            issues.push(MeshIssue::Incidence { edge: e, cells: s.len(), label });
        }
        if s.len() == 2 && s[0] == s[1] {
            issues.push(MeshIssue::SignConflict { edge: e });
        }
        if s.len() == 1 {
            // traverse the boundary edge as its cell does
            let [a, b] = mesh.edges()[e].vertices;
            let (p, q) = (mesh.vertices()[a], mesh.vertices()[b]);
            enclosed += 0.5 * s[0] * cross(p, q);
        }
    }
    let scale = cells_area.abs().max(enclosed.abs()).max(f64::MIN_POSITIVE);
    if (cells_area - enclosed).abs() > 1e-12 * scale {
        issues.push(MeshIssue::Tiling { cells_area, enclosed_area: enclosed });
    }
    MeshDiagnostics { issues }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_cartesian, Edge, Rect};

    #[test]
    fn cartesian_passes() {
        let mesh = build_cartesian(2, 2, Rect::unit_square()).unwrap();
        let d = validate_mesh(&mesh);
        assert!(d.passed(), "{:?}", d.issues);
    }

    #[test]
    fn reversed_loop_reports_orientation() {
        let mesh = build_cartesian(2, 2, Rect::unit_square()).unwrap();
        let mut cells = mesh.cells().to_vec();
        cells[0].reverse();
        let broken =
            PolygonalMesh::from_parts(mesh.vertices().to_vec(), cells, mesh.edges().to_vec(), None).unwrap();
        let d = validate_mesh(&broken);
        assert!(d.has_orientation_failure(), "{:?}", d.issues);
    }

    #[test]
    fn dangling_edge_reports_incidence() {
        let mesh = build_cartesian(2, 2, Rect::unit_square()).unwrap();
        let mut edges = mesh.edges().to_vec();
        // diagonal of the first cell, used by nobody
        let c = &mesh.cells()[0];
        edges.push(Edge { vertices: [c[0], c[2]], label: BoundaryLabel::Interior });
        let broken =
            PolygonalMesh::from_parts(mesh.vertices().to_vec(), mesh.cells().to_vec(), edges, None).unwrap();
        let d = validate_mesh(&broken);
        assert!(d.has_incidence_failure(), "{:?}", d.issues);
    }

    #[test]
    fn bowtie_is_not_simple() {
        let v = [Point::new(0., 0.), Point::new(1., 1.), Point::new(1., 0.), Point::new(0., 1.)];
        assert!(!is_simple(&v));
    }
}
