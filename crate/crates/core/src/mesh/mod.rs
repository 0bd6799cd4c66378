//! Polygonal meshes with globally oriented edges.
//!
//! Cells are counter-clockwise vertex loops. Every edge carries a global
//! orientation `v0 → v1` whose unit normal is the tangent rotated clockwise;
//! a cell stores, per side, the sign relating its outward normal to that
//! global normal. Boundary edges are oriented so that the global normal points
//! out of the domain.

mod generators;
mod geometry;
mod text;
mod validate;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Point;

pub use generators::{build_agglomerated_concave, build_cartesian, build_sine_distorted};
pub use geometry::{compute_geometry, polygon_area, polygon_centroid, star_center, EdgeGeometry, ElementGeometry};
pub use text::{read_mesh, write_mesh};
pub use validate::{validate_mesh, MeshDiagnostics, MeshIssue};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid mesh parameter: {0}")]
    InvalidParameter(String),
    #[error("vertex index {index} out of range in cell {cell}")]
    VertexOutOfRange { cell: usize, index: usize },
    #[error("cell {cell} side ({a}, {b}) has no matching edge")]
    MissingEdge { cell: usize, a: usize, b: usize },
    #[error("cell {0} is degenerate (non-positive area)")]
    Degenerate(usize),
    #[error("invalid mesh: {0}")]
    Invalid(String),
    #[error("mesh text format, line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Axis-aligned rectangle `(x0, x1) × (y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub const fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub const fn unit_square() -> Self {
        Self::new(0.0, 1.0, 0.0, 1.0)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryLabel {
    Interior,
    Dirichlet,
    Neumann,
}

impl BoundaryLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundaryLabel::Interior => "interior",
            BoundaryLabel::Dirichlet => "dirichlet",
            BoundaryLabel::Neumann => "neumann",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// Endpoints in global orientation.
    pub vertices: [usize; 2],
    pub label: BoundaryLabel,
}

/// One side of a cell: the global edge and the orientation sign
/// (`+1` when the cell's outward normal equals the global edge normal).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSide {
    pub edge: usize,
    pub sign: f64,
}

#[derive(Debug, Clone)]
pub struct PolygonalMesh {
    vertices: Vec<Point>,
    cells: Vec<Vec<usize>>,
    edges: Vec<Edge>,
    sides: Vec<Vec<CellSide>>,
    star_centers: Vec<Point>,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl PolygonalMesh {
    /// Builds a mesh from vertices and counter-clockwise cell loops, deriving
    /// the edge list. Edges seen by one cell are labeled Dirichlet, the rest
    /// interior. `star_centers` defaults to a computed kernel point per cell.
    pub fn from_cells(
        vertices: Vec<Point>,
        cells: Vec<Vec<usize>>,
        star_centers: Option<Vec<Point>>,
    ) -> Result<Self, MeshError> {
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for (c, cell) in cells.iter().enumerate() {
            check_cell_indices(c, cell, vertices.len())?;
            for j in 0..cell.len() {
                let (a, b) = (cell[j], cell[(j + 1) % cell.len()]);
                let id = *lookup.entry(edge_key(a, b)).or_insert_with(|| {
                    edges.push(Edge { vertices: [a, b], label: BoundaryLabel::Interior });
                    counts.push(0);
                    edges.len() - 1
                });
                counts[id] += 1;
            }
        }
        for (edge, &count) in edges.iter_mut().zip(&counts) {
            if count == 1 {
                edge.label = BoundaryLabel::Dirichlet;
            }
        }
        Self::from_parts(vertices, cells, edges, star_centers)
    }

    /// Builds a mesh from explicit parts. Cell sides are matched against the
    /// edge list; every side must have an edge, but the edge list may contain
    /// entries that no cell uses (reported by [`validate_mesh`]).
    pub fn from_parts(
        vertices: Vec<Point>,
        cells: Vec<Vec<usize>>,
        edges: Vec<Edge>,
        star_centers: Option<Vec<Point>>,
    ) -> Result<Self, MeshError> {
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::new();
        for (i, e) in edges.iter().enumerate() {
            let [a, b] = e.vertices;
            if a >= vertices.len() || b >= vertices.len() {
                return Err(MeshError::Invalid(format!("edge {i} references a missing vertex")));
            }
            lookup.insert(edge_key(a, b), i);
        }
        let mut sides = Vec::with_capacity(cells.len());
        for (c, cell) in cells.iter().enumerate() {
            check_cell_indices(c, cell, vertices.len())?;
            let mut row = Vec::with_capacity(cell.len());
            for j in 0..cell.len() {
                let (a, b) = (cell[j], cell[(j + 1) % cell.len()]);
                let &id = lookup
                    .get(&edge_key(a, b))
                    .ok_or(MeshError::MissingEdge { cell: c, a, b })?;
                let sign = if edges[id].vertices == [a, b] { 1.0 } else { -1.0 };
                row.push(CellSide { edge: id, sign });
            }
            sides.push(row);
        }
        let star_centers = match star_centers {
            Some(s) => {
                if s.len() != cells.len() {
                    return Err(MeshError::Invalid("one star center per cell is required".into()));
                }
                s
            }
            None => cells
                .iter()
                .map(|cell| {
                    let pts: Vec<Point> = cell.iter().map(|&v| vertices[v]).collect();
                    star_center(&pts).unwrap_or_else(|| polygon_centroid(&pts))
                })
                .collect(),
        };
        Ok(Self { vertices, cells, edges, sides, star_centers })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Sides of `cell`; side `j` joins loop vertices `j` and `j + 1`.
    pub fn cell_sides(&self, cell: usize) -> &[CellSide] {
        &self.sides[cell]
    }

    pub fn star_center(&self, cell: usize) -> Point {
        self.star_centers[cell]
    }

    pub fn cell_vertices(&self, cell: usize) -> Vec<Point> {
        self.cells[cell].iter().map(|&v| self.vertices[v]).collect()
    }

    pub fn edge_midpoint(&self, edge: usize) -> Point {
        let [a, b] = self.edges[edge].vertices;
        0.5 * (self.vertices[a] + self.vertices[b])
    }

    /// Global unit normal of an edge: the tangent `v1 - v0` rotated clockwise.
    pub fn edge_normal(&self, edge: usize) -> Point {
        let [a, b] = self.edges[edge].vertices;
        let t = self.vertices[b] - self.vertices[a];
        Point::new(t.y, -t.x) / t.norm()
    }

    /// Number of cells adjacent to each edge.
    pub fn edge_cell_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.edges.len()];
        for row in &self.sides {
            for s in row {
                counts[s.edge] += 1;
            }
        }
        counts
    }

    pub fn is_boundary_edge(&self, edge: usize) -> bool {
        self.edges[edge].label != BoundaryLabel::Interior
    }

    /// Labels every boundary edge by evaluating `label` at its midpoint.
    /// Interior edges are left untouched; returning `Interior` for a boundary
    /// edge is an error.
    pub fn label_boundary<F>(&mut self, label: F) -> Result<(), MeshError>
    where
        F: Fn(Point) -> BoundaryLabel,
    {
        let counts = self.edge_cell_counts();
        for e in 0..self.edges.len() {
            if counts[e] != 1 {
                continue;
            }
            let mid = self.edge_midpoint(e);
            let l = label(mid);
            if l == BoundaryLabel::Interior {
                return Err(MeshError::Invalid(format!(
                    "boundary edge {e} at ({}, {}) labeled interior",
                    mid.x, mid.y
                )));
            }
            self.edges[e].label = l;
        }
        Ok(())
    }

    /// Maximum cell diameter.
    pub fn mesh_size(&self) -> f64 {
        (0..self.num_cells())
            .map(|c| geometry::diameter(&self.cell_vertices(c)))
            .fold(0.0, f64::max)
    }

    /// Sum of the shoelace areas of all cells.
    pub fn total_area(&self) -> f64 {
        (0..self.num_cells()).map(|c| polygon_area(&self.cell_vertices(c))).sum()
    }

    /// Applies an affine map `x ↦ origin + scale ⊙ (x - from.lower_left)`
    /// taking `from` onto `to`. Topology is preserved.
    pub(crate) fn map_rect(&mut self, from: Rect, to: Rect) {
        let sx = to.width() / from.width();
        let sy = to.height() / from.height();
        let map = |p: Point| Point::new(to.x0 + sx * (p.x - from.x0), to.y0 + sy * (p.y - from.y0));
        for v in &mut self.vertices {
            *v = map(*v);
        }
        for c in &mut self.star_centers {
            *c = map(*c);
        }
    }
}

fn check_cell_indices(c: usize, cell: &[usize], nv: usize) -> Result<(), MeshError> {
    if cell.len() < 3 {
        return Err(MeshError::Invalid(format!("cell {c} has fewer than 3 vertices")));
    }
    if let Some(&index) = cell.iter().find(|&&v| v >= nv) {
        return Err(MeshError::VertexOutOfRange { cell: c, index });
    }
    Ok(())
}
