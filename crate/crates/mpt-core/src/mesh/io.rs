//! Neutral ASCII mesh import/export.
//!
//! Format: the first meaningful line holds the vertex count V, followed by V
//! lines "x y z"; then a line with the tet count T, followed by T lines
//! "v1 v2 v3 v4 tag" using 1-based vertex indices. Blank lines are ignored
//! and "#" starts a comment running to the end of the line.

use super::{Mesh, MeshError, EXTERIOR_NAME};
use crate::geom::Point;
use std::fmt::Write as _;
use std::path::Path;

pub fn read_mesh_file(path: impl AsRef<Path>) -> Result<Mesh, MeshError> {
    let text = std::fs::read_to_string(path)?;
    read_mesh_str(&text)
}

/// Parses a mesh from text in the neutral ASCII format.
pub fn read_mesh_str(text: &str) -> Result<Mesh, MeshError> {
    // Meaningful lines with their 1-based line numbers.
    let total_lines = text.lines().count();
    let mut lines = text.lines().enumerate().filter_map(|(i, raw)| {
        let body = raw.split('#').next().unwrap_or("").trim();
        (!body.is_empty()).then_some((i + 1, body))
    });
    let parse_err = |line: usize, message: String| MeshError::Parse { line, message };
    let mut next_line = |what: &str| {
        lines.next().ok_or_else(|| {
            parse_err(total_lines, format!("unexpected end of file, expected {what}"))
        })
    };

    let (line, body) = next_line("vertex count")?;
    let nv: usize = body
        .parse()
        .map_err(|_| parse_err(line, format!("expected vertex count, got '{body}'")))?;

    let mut vertices: Vec<Point> = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, body) = next_line("a vertex line")?;
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(line, format!("expected 'x y z', got '{body}'")));
        }
        let mut p = [0.0; 3];
        for (k, f) in fields.iter().enumerate() {
            p[k] = f
                .parse()
                .map_err(|_| parse_err(line, format!("bad coordinate '{f}'")))?;
        }
        vertices.push(p);
    }

    let (line, body) = next_line("tet count")?;
    let nt: usize = body
        .parse()
        .map_err(|_| parse_err(line, format!("expected tet count, got '{body}'")))?;

    let mut tets: Vec<[u32; 4]> = Vec::with_capacity(nt);
    let mut regions: Vec<u32> = Vec::with_capacity(nt);
    let mut region_names = vec![EXTERIOR_NAME.to_string()];
    for _ in 0..nt {
        let (line, body) = next_line("a tet line")?;
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(parse_err(line, format!("expected 'v1 v2 v3 v4 tag', got '{body}'")));
        }
        let mut tet = [0u32; 4];
        for (k, f) in fields[..4].iter().enumerate() {
            let one_based: usize = f
                .parse()
                .map_err(|_| parse_err(line, format!("bad vertex index '{f}'")))?;
            if one_based == 0 || one_based > vertices.len() {
                return Err(parse_err(
                    line,
                    format!("vertex index {one_based} out of range 1..={}", vertices.len()),
                ));
            }
            tet[k] = (one_based - 1) as u32;
        }
        let tag = fields[4];
        let region = match region_names.iter().position(|n| n == tag) {
            Some(i) => i as u32,
            None => {
                region_names.push(tag.to_string());
                (region_names.len() - 1) as u32
            }
        };
        tets.push(tet);
        regions.push(region);
    }

    if let Some((line, body)) = lines.next() {
        return Err(parse_err(line, format!("trailing content '{body}'")));
    }

    Mesh::new(vertices, tets, regions, region_names)
}

pub fn write_mesh_file(mesh: &Mesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    std::fs::write(path, write_mesh_string(mesh))?;
    Ok(())
}

/// Serialises a mesh to the neutral ASCII format. Reading the result back
/// reproduces connectivity and tags exactly; coordinates are written with
/// shortest round-trip formatting.
pub fn write_mesh_string(mesh: &Mesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", mesh.vertex_count());
    for v in mesh.vertices() {
        let _ = writeln!(out, "{} {} {}", v[0], v[1], v[2]);
    }
    let _ = writeln!(out, "{}", mesh.tet_count());
    for (tet, &region) in mesh.tets().iter().zip(mesh.regions()) {
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            tet[0] + 1,
            tet[1] + 1,
            tet[2] + 1,
            tet[3] + 1,
            mesh.region_names()[region as usize]
        );
    }
    out
}
