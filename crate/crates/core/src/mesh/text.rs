//! Plain-text mesh format.
//!
//! ```text
//! nv nc ne
//! x y                 (nv lines)
//! m i1 ... im         (nc lines, 0-based, counter-clockwise)
//! v1 v2 label         (ne lines, label: interior | dirichlet | neumann)
//! ```

use std::io::{BufRead, Write};

use super::{BoundaryLabel, Edge, MeshError, PolygonalMesh};
use crate::Point;

fn parse_err(line: usize, message: impl Into<String>) -> MeshError {
    MeshError::Parse { line, message: message.into() }
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T, MeshError> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    tok.parse().map_err(|_| parse_err(line, format!("malformed {what} `{tok}`")))
}

pub fn read_mesh<R: BufRead>(reader: R) -> Result<PolygonalMesh, MeshError> {
    let mut lines = reader
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)))
        .filter(|r| r.as_ref().map(|(_, l)| !l.trim().is_empty()).unwrap_or(true));
    let mut next = |what: &str| -> Result<(usize, String), MeshError> {
        match lines.next() {
            Some(r) => Ok(r?),
            None => Err(parse_err(0, format!("unexpected end of file, expected {what}"))),
        }
    };

    let (ln, header) = next("header")?;
    let mut it = header.split_whitespace();
    let nv: usize = parse_num(it.next(), ln, "vertex count")?;
    let nc: usize = parse_num(it.next(), ln, "cell count")?;
    let ne: usize = parse_num(it.next(), ln, "edge count")?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = next("vertex")?;
        let mut it = l.split_whitespace();
        vertices.push(Point::new(parse_num(it.next(), ln, "x")?, parse_num(it.next(), ln, "y")?));
    }
    let mut cells = Vec::with_capacity(nc);
    for _ in 0..nc {
        let (ln, l) = next("cell")?;
        let mut it = l.split_whitespace();
        let m: usize = parse_num(it.next(), ln, "cell size")?;
        let cell = (0..m)
            .map(|_| parse_num(it.next(), ln, "vertex index"))
            .collect::<Result<Vec<usize>, _>>()?;
        if it.next().is_some() {
            return Err(parse_err(ln, "trailing tokens after cell"));
        }
        cells.push(cell);
    }
    let mut edges = Vec::with_capacity(ne);
    for _ in 0..ne {
        let (ln, l) = next("edge")?;
        let mut it = l.split_whitespace();
        let a = parse_num(it.next(), ln, "edge vertex")?;
        let b = parse_num(it.next(), ln, "edge vertex")?;
        let label = match it.next() {
            Some("interior") => BoundaryLabel::Interior,
            Some("dirichlet") => BoundaryLabel::Dirichlet,
            Some("neumann") => BoundaryLabel::Neumann,
            Some(other) => return Err(parse_err(ln, format!("unknown edge label `{other}`"))),
            None => return Err(parse_err(ln, "missing edge label")),
        };
        edges.push(Edge { vertices: [a, b], label });
    }
    if let Some(extra) = lines.next() {
        let (ln, _) = extra?;
        return Err(parse_err(ln, "unexpected trailing record"));
    }
    PolygonalMesh::from_parts(vertices, cells, edges, None)
}

pub fn write_mesh<W: Write>(mesh: &PolygonalMesh, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{} {} {}", mesh.num_vertices(), mesh.num_cells(), mesh.num_edges())?;
    for v in mesh.vertices() {
        // {:?} prints the shortest representation that round-trips
        writeln!(w, "{:?} {:?}", v.x, v.y)?;
    }
    for c in mesh.cells() {
        write!(w, "{}", c.len())?;
        for i in c {
            write!(w, " {i}")?;
        }
        writeln!(w)?;
    }
    for e in mesh.edges() {
        writeln!(w, "{} {} {}", e.vertices[0], e.vertices[1], e.label.as_str())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_agglomerated_concave, validate_mesh};

    #[test]
    fn round_trip() {
        let mesh = build_agglomerated_concave(1).unwrap();
        let mut buf = Vec::new();
        write_mesh(&mesh, &mut buf).unwrap();
        let back = read_mesh(buf.as_slice()).unwrap();
        assert_eq!(back.vertices(), mesh.vertices());
        assert_eq!(back.cells(), mesh.cells());
        assert_eq!(back.edges(), mesh.edges());
        assert!(validate_mesh(&back).passed());
    }

    #[test]
    fn single_triangle() {
        let text = "3 1 3\n0 0\n1 0\n0 1\n3 0 1 2\n0 1 dirichlet\n1 2 neumann\n2 0 dirichlet\n";
        let mesh = read_mesh(text.as_bytes()).unwrap();
        assert_eq!(mesh.num_cells(), 1);
        assert_eq!(mesh.edges()[1].label, BoundaryLabel::Neumann);
        assert!(validate_mesh(&mesh).passed());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "3 1 3\n0 0\n1 zero\n0 1\n3 0 1 2\n0 1 dirichlet\n1 2 dirichlet\n2 0 dirichlet\n";
        match read_mesh(text.as_bytes()) {
            Err(MeshError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let text = "3 1 3\n0 0\n1 0\n0 1\n3 0 1 2\n0 1 dirichlet\n1 2 dirichlet\n2 0 wall\n";
        assert!(matches!(read_mesh(text.as_bytes()), Err(MeshError::Parse { line: 8, .. })));
    }
}
