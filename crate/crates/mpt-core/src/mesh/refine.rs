//! Local red-green refinement.
//!
//! Marked tets are subdivided red (all six edges split, eight children); the
//! surrounding mesh is made conforming by a closure pass that restricts every
//! unmarked tet to one of the stable split patterns {none, one edge, two
//! opposite edges, one full face, all six}, realised by matching green
//! templates. Faces are then triangulated identically from both sides: a face
//! with one split edge gets a median, a fully split face gets the four-triangle
//! pattern, and faces with exactly two split edges never survive closure.

use super::{oriented, Aabb, Mesh, MeshError, FACE_EDGES, LOCAL_EDGES, LOCAL_FACES};
use crate::geom::{self, Point};

/// Local edge index for a pair of local vertices (order-insensitive).
const fn edge_index(a: usize, b: usize) -> usize {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let mut k = 0;
    while k < 6 {
        if LOCAL_EDGES[k][0] == lo && LOCAL_EDGES[k][1] == hi {
            return k;
        }
        k += 1;
    }
    panic!("not a local edge");
}

/// Subdivides every tet whose bounding box, expanded by that tet's own longest
/// edge, intersects `target`; repeats for `levels` rounds. Region tags are
/// inherited by children.
pub fn refine_near_box(mesh: &Mesh, target: &Aabb, levels: u32) -> Result<Mesh, MeshError> {
    let mut current = mesh.clone();
    for _ in 0..levels {
        let marked: Vec<bool> = (0..current.tet_count())
            .map(|t| {
                let bb = Aabb::of_points(current.tet_vertices(t)).expect("tet has vertices");
                bb.expanded(current.tet_longest_edge(t)).intersects(target)
            })
            .collect();
        current = refine_marked(&current, &marked)?;
    }
    Ok(current)
}

/// Subdivides every tet near the tagged object region `levels` times.
///
/// The target box is recomputed from the region tags after each round, so the
/// refined zone tracks the object. A mesh with nothing tagged is returned
/// unchanged.
pub fn refine_toward_object(mesh: &Mesh, levels: u32) -> Result<Mesh, MeshError> {
    let mut current = mesh.clone();
    for _ in 0..levels {
        let Some(bbox) = current.tagged_bounding_box() else {
            return Ok(current);
        };
        current = refine_near_box(&current, &bbox, 1)?;
    }
    Ok(current)
}

/// One round of red-green refinement with an explicit marked set
/// (`marked.len()` must equal the tet count). Marked tets become eight
/// children; unmarked tets are split as closure demands. Volume is conserved
/// and the result is conforming.
pub fn refine_marked(mesh: &Mesh, marked: &[bool]) -> Result<Mesh, MeshError> {
    assert_eq!(marked.len(), mesh.tet_count(), "one mark per tet");

    let tet_edges = mesh.tet_edges();
    let mut split = vec![false; mesh.edge_count()];
    for (t, &m) in marked.iter().enumerate() {
        if m {
            for e in tet_edges[t] {
                split[e as usize] = true;
            }
        }
    }

    // Closure: a face with exactly two split edges gets its third edge split;
    // a tet with four or more split edges becomes fully split. Repeat until
    // stable (the split set only grows, so this terminates).
    loop {
        let mut changed = false;
        for te in tet_edges {
            let s = te.map(|e| split[e as usize]);
            let count = s.iter().filter(|&&b| b).count();
            if count == 0 || count == 6 {
                continue;
            }
            let mut s2 = s;
            for face in &FACE_EDGES {
                if face.iter().filter(|&&k| s2[k]).count() == 2 {
                    for &k in face {
                        s2[k] = true;
                    }
                }
            }
            if s2.iter().filter(|&&b| b).count() >= 4 {
                s2 = [true; 6];
            }
            for k in 0..6 {
                if s2[k] && !s[k] {
                    split[te[k] as usize] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    // Midpoint vertices, one per split edge.
    let mut vertices = mesh.vertices().to_vec();
    let mut midpoint = vec![u32::MAX; mesh.edge_count()];
    for (e, &[a, b]) in mesh.edges().iter().enumerate() {
        if split[e] {
            midpoint[e] = vertices.len() as u32;
            vertices.push(geom::midpoint(
                mesh.vertices()[a as usize],
                mesh.vertices()[b as usize],
            ));
        }
    }

    let mut tets: Vec<[u32; 4]> = Vec::new();
    let mut regions: Vec<u32> = Vec::new();
    let mut emit = |verts: &[Point], tet: [u32; 4], region: u32, out: &mut Vec<[u32; 4]>| {
        out.push(oriented(verts, tet));
        regions.push(region);
    };

    for t in 0..mesh.tet_count() {
        let tet = mesh.tets()[t];
        let region = mesh.regions()[t];
        let s = tet_edges[t].map(|e| split[e as usize]);
        let count = s.iter().filter(|&&b| b).count();
        // Midpoint of the local edge (a, b), valid only where split.
        let mid = |a: usize, b: usize| -> u32 {
            let e = tet_edges[t][edge_index(a, b)];
            midpoint[e as usize]
        };

        match count {
            0 => emit(&vertices, tet, region, &mut tets),
            1 => {
                // One split edge: bisect along it.
                let k = s.iter().position(|&b| b).unwrap();
                let [a, b] = LOCAL_EDGES[k];
                let [c, d] = others(a, b);
                let m = mid(a, b);
                emit(&vertices, [tet[a], m, tet[c], tet[d]], region, &mut tets);
                emit(&vertices, [m, tet[b], tet[c], tet[d]], region, &mut tets);
            }
            2 => {
                // Two opposite split edges (closure forbids adjacent pairs).
                let k1 = s.iter().position(|&b| b).unwrap();
                let [a, b] = LOCAL_EDGES[k1];
                let [c, d] = others(a, b);
                debug_assert!(s[edge_index(c, d)], "split pair must be opposite");
                let m1 = mid(a, b);
                let m2 = mid(c, d);
                emit(&vertices, [tet[a], m1, tet[c], m2], region, &mut tets);
                emit(&vertices, [tet[a], m1, m2, tet[d]], region, &mut tets);
                emit(&vertices, [m1, tet[b], tet[c], m2], region, &mut tets);
                emit(&vertices, [m1, tet[b], m2, tet[d]], region, &mut tets);
            }
            3 => {
                // One fully split face (closure guarantees the three edges are
                // co-facial): the face gets the four-triangle pattern, joined
                // to the opposite vertex.
                let f = FACE_EDGES
                    .iter()
                    .position(|face| face.iter().all(|&k| s[k]))
                    .expect("three split edges lie on one face");
                let [a, b, c] = LOCAL_FACES[f];
                let d = (0..4).find(|v| *v != a && *v != b && *v != c).unwrap();
                let mab = mid(a, b);
                let mac = mid(a, c);
                let mbc = mid(b, c);
                emit(&vertices, [tet[a], mab, mac, tet[d]], region, &mut tets);
                emit(&vertices, [mab, tet[b], mbc, tet[d]], region, &mut tets);
                emit(&vertices, [mac, mbc, tet[c], tet[d]], region, &mut tets);
                emit(&vertices, [mab, mbc, mac, tet[d]], region, &mut tets);
            }
            6 => {
                // Red: four corner children plus four around the shortest
                // diagonal of the interior octahedron.
                let m01 = mid(0, 1);
                let m02 = mid(0, 2);
                let m03 = mid(0, 3);
                let m12 = mid(1, 2);
                let m13 = mid(1, 3);
                let m23 = mid(2, 3);
                emit(&vertices, [tet[0], m01, m02, m03], region, &mut tets);
                emit(&vertices, [m01, tet[1], m12, m13], region, &mut tets);
                emit(&vertices, [m02, m12, tet[2], m23], region, &mut tets);
                emit(&vertices, [m03, m13, m23, tet[3]], region, &mut tets);

                let p = |v: u32| vertices[v as usize];
                // Candidate diagonals with their equatorial cycles.
                let candidates: [([u32; 2], [u32; 4]); 3] = [
                    ([m01, m23], [m02, m03, m13, m12]),
                    ([m02, m13], [m01, m03, m23, m12]),
                    ([m03, m12], [m01, m02, m23, m13]),
                ];
                let (diag, cycle) = candidates
                    .iter()
                    .min_by(|x, y| {
                        geom::dist(p(x.0[0]), p(x.0[1]))
                            .total_cmp(&geom::dist(p(y.0[0]), p(y.0[1])))
                    })
                    .copied()
                    .unwrap();
                for i in 0..4 {
                    let x = cycle[i];
                    let y = cycle[(i + 1) % 4];
                    emit(&vertices, [diag[0], diag[1], x, y], region, &mut tets);
                }
            }
            other => unreachable!("closure left {other} split edges"),
        }
    }

    Mesh::new(vertices, tets, regions, mesh.region_names().to_vec())
}

/// The two local vertices not in {a, b}.
fn others(a: usize, b: usize) -> [usize; 2] {
    let mut out = [usize::MAX; 2];
    let mut j = 0;
    for v in 0..4 {
        if v != a && v != b {
            out[j] = v;
            j += 1;
        }
    }
    out
}
