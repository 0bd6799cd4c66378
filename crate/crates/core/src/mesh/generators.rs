use std::f64::consts::PI;

use super::{validate_mesh, MeshError, MeshIssue, PolygonalMesh, Rect};
use crate::Point;

fn cartesian_vertices(nx: usize, ny: usize, domain: Rect) -> Vec<Point> {
    let mut v = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            v.push(Point::new(
                domain.x0 + domain.width() * i as f64 / nx as f64,
                domain.y0 + domain.height() * j as f64 / ny as f64,
            ));
        }
    }
    v
}

fn cartesian_cells(nx: usize, ny: usize) -> Vec<Vec<usize>> {
    let id = |i: usize, j: usize| i + j * (nx + 1);
    let mut cells = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            cells.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    cells
}

fn check_counts(nx: usize, ny: usize) -> Result<(), MeshError> {
    if nx == 0 || ny == 0 {
        return Err(MeshError::InvalidParameter(format!("cell counts must be positive, got {nx}×{ny}")));
    }
    Ok(())
}

/// Uniform `nx × ny` grid of rectangles. All boundary edges start as Dirichlet.
pub fn build_cartesian(nx: usize, ny: usize, domain: Rect) -> Result<PolygonalMesh, MeshError> {
    check_counts(nx, ny)?;
    let vertices = cartesian_vertices(nx, ny, domain);
    let cells = cartesian_cells(nx, ny);
    let centers = cells
        .iter()
        .map(|c| c.iter().map(|&v| vertices[v]).sum::<Point>() / 4.0)
        .collect();
    PolygonalMesh::from_cells(vertices, cells, Some(centers))
}

/// Cartesian grid whose interior vertices are moved by
/// `(a / n) · sin(2π x̂) sin(2π ŷ)` in each coordinate, with `(x̂, ŷ)` the
/// position normalized to `[0, 1]²` and the shift scaled by the domain extent.
/// Boundary vertices stay in place.
pub fn build_sine_distorted(
    nx: usize,
    ny: usize,
    domain: Rect,
    amplitude: f64,
) -> Result<PolygonalMesh, MeshError> {
    check_counts(nx, ny)?;
    if !amplitude.is_finite() {
        return Err(MeshError::InvalidParameter("distortion amplitude must be finite".into()));
    }
    let mut vertices = cartesian_vertices(nx, ny, domain);
    for j in 1..ny {
        for i in 1..nx {
            let (xh, yh) = (i as f64 / nx as f64, j as f64 / ny as f64);
            let s = (2.0 * PI * xh).sin() * (2.0 * PI * yh).sin();
            let v = &mut vertices[i + j * (nx + 1)];
            v.x += domain.width() * amplitude / nx as f64 * s;
            v.y += domain.height() * amplitude / ny as f64 * s;
        }
    }
    let cells = cartesian_cells(nx, ny);
    let mesh = PolygonalMesh::from_cells(vertices, cells, None)?;
    let diagnostics = validate_mesh(&mesh);
    let bad = diagnostics.issues.iter().find(|i| {
        matches!(
            i,
            MeshIssue::NonPositiveArea { .. } | MeshIssue::SelfIntersecting { .. } | MeshIssue::NotStarShaped { .. }
        )
    });
    if let Some(issue) = bad {
        return Err(MeshError::Invalid(format!("distortion amplitude {amplitude} too large: {issue}")));
    }
    Ok(mesh)
}

/// Concave mesh of `(0, 2)²`.
///
/// The domain is split into `n = 2^(level+2)` sub-squares per side and grouped
/// into 2×2 blocks. Each block becomes one L-shaped octagon (three
/// sub-squares, keeping the mid-side vertices so neighbours stay conforming)
/// plus the remaining square. The position of the square rotates from block to
/// block. The star center of an L is the center of the sub-square opposite the
/// removed one, which lies inside the kernel.
pub fn build_agglomerated_concave(level: usize) -> Result<PolygonalMesh, MeshError> {
    if level == 0 {
        return Err(MeshError::InvalidParameter("agglomeration level must be at least 1".into()));
    }
    let n = 1usize << (level + 2);
    let s = 2.0 / n as f64;
    let vertices: Vec<Point> = (0..=n)
        .flat_map(|j| (0..=n).map(move |i| Point::new(i as f64 * s, j as f64 * s)))
        .collect();
    let id = |i: usize, j: usize| i + j * (n + 1);
    // boundary lattice points of a 2×2 block, counter-clockwise
    const RING: [(usize, usize); 8] = [(0, 0), (1, 0), (2, 0), (2, 1), (2, 2), (1, 2), (0, 2), (0, 1)];
    // lower-left corner of sub-square r within the block
    const SUB: [(usize, usize); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];

    let blocks = n / 2;
    let mut cells = Vec::with_capacity(2 * blocks * blocks);
    let mut centers = Vec::with_capacity(2 * blocks * blocks);
    for bj in 0..blocks {
        for bi in 0..blocks {
            let (oi, oj) = (2 * bi, 2 * bj);
            let removed = (bi + 3 * bj) % 4;
            let l_cell: Vec<usize> = RING
                .iter()
                .enumerate()
                .map(|(p, &(a, b))| if p == 2 * removed { id(oi + 1, oj + 1) } else { id(oi + a, oj + b) })
                .collect();
            let (ki, kj) = SUB[(removed + 2) % 4];
            cells.push(l_cell);
            centers.push(Point::new((oi + ki) as f64 * s + 0.5 * s, (oj + kj) as f64 * s + 0.5 * s));

            let (si, sj) = SUB[removed];
            let (x, y) = (oi + si, oj + sj);
            cells.push(vec![id(x, y), id(x + 1, y), id(x + 1, y + 1), id(x, y + 1)]);
            centers.push(Point::new(x as f64 * s + 0.5 * s, y as f64 * s + 0.5 * s));
        }
    }
    PolygonalMesh::from_cells(vertices, cells, Some(centers))
}
