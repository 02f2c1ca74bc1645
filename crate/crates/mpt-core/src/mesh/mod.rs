//! Tagged tetrahedral meshes of a truncated computational domain.
//!
//! The domain Ω is a box large enough to emulate free space around a
//! unit-scale object B; per-tet region tags carry material identity. Meshes
//! are generated as structured six-tets-per-cell grids, refined locally toward
//! the object, or imported from a neutral ASCII format.

mod io;
mod refine;

pub use io::{read_mesh_file, read_mesh_str, write_mesh_file, write_mesh_string};
pub use refine::{refine_marked, refine_near_box, refine_toward_object};

use crate::geom::{self, Point};
use thiserror::Error;

/// Region id of the exterior (free-space) region. Always present, always 0.
pub const EXTERIOR_REGION: u32 = 0;

/// Reserved region name for the exterior.
pub const EXTERIOR_NAME: &str = "exterior";

/// Vertex pairs of the six local edges of a tetrahedron, in the fixed local
/// numbering used throughout assembly: (0,1), (0,2), (0,3), (1,2), (1,3), (2,3).
pub const LOCAL_EDGES: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];

/// Vertex triples of the four local faces of a tetrahedron.
pub const LOCAL_FACES: [[usize; 3]; 4] = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];

/// For each local face, the indices into [`LOCAL_EDGES`] of its three edges.
pub const FACE_EDGES: [[usize; 3]; 4] = [[0, 1, 3], [0, 2, 4], [1, 2, 5], [3, 4, 5]];

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("divisionsPerAxis must be at least 1")]
    ZeroDivisions,
    #[error("box half-width must be positive, got {0}")]
    BadHalfWidth(f64),
    #[error("tet {index} has non-positive volume {volume:e}")]
    InvertedTet { index: usize, volume: f64 },
    #[error("tet {tet} references vertex {vertex} but the mesh has {count} vertices")]
    VertexOutOfRange { tet: usize, vertex: usize, count: usize },
    #[error("tet {tet} repeats vertex {vertex}")]
    RepeatedVertex { tet: usize, vertex: usize },
    #[error("region table must start with '{EXTERIOR_NAME}' and contain no duplicates")]
    BadRegionTable,
    #[error("tet {tet} uses region id {region} but only {count} regions are declared")]
    RegionOutOfRange { tet: usize, region: u32, count: usize },
    #[error("face ({0}, {1}, {2}) is shared by more than two tets")]
    NonManifoldFace(u32, u32, u32),
    #[error("tet {tet} centroid lies in overlapping shapes tagged '{first}' and '{second}'")]
    AmbiguousRegion { tet: usize, first: String, second: String },
    #[error("region tag '{0}' has no declared material")]
    UnknownRegionTag(String),
    #[error("material '{region}' is invalid: {reason}")]
    BadMaterial { region: String, reason: String },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn new(min: Point, max: Point) -> Self {
        Aabb { min, max }
    }

    /// Smallest box containing all given points; `None` for an empty iterator.
    pub fn of_points<I: IntoIterator<Item = Point>>(points: I) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut bb = Aabb { min: first, max: first };
        for p in it {
            for a in 0..3 {
                bb.min[a] = bb.min[a].min(p[a]);
                bb.max[a] = bb.max[a].max(p[a]);
            }
        }
        Some(bb)
    }

    pub fn contains(&self, p: Point) -> bool {
        (0..3).all(|a| self.min[a] <= p[a] && p[a] <= self.max[a])
    }

    /// Box grown by `margin` on every side.
    pub fn expanded(&self, margin: f64) -> Self {
        Aabb {
            min: [self.min[0] - margin, self.min[1] - margin, self.min[2] - margin],
            max: [self.max[0] + margin, self.max[1] + margin, self.max[2] + margin],
        }
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] <= other.max[a] && other.min[a] <= self.max[a])
    }

    pub fn union(&self, other: &Aabb) -> Self {
        let mut bb = *self;
        for a in 0..3 {
            bb.min[a] = bb.min[a].min(other.min[a]);
            bb.max[a] = bb.max[a].max(other.max[a]);
        }
        bb
    }
}

/// Geometric primitives used to tag mesh regions by centroid inclusion.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Sphere { center: Point, radius: f64 },
    Cuboid { min: Point, max: Point },
    Tetrahedron { vertices: [Point; 4] },
}

impl Shape {
    pub fn contains(&self, p: Point) -> bool {
        match self {
            Shape::Sphere { center, radius } => geom::dist(p, *center) <= *radius,
            Shape::Cuboid { min, max } => Aabb::new(*min, *max).contains(p),
            Shape::Tetrahedron { vertices: v } => {
                let vol = geom::tet_signed_volume(v);
                if vol == 0.0 {
                    return false;
                }
                // p is inside iff all four barycentric coordinates share the
                // sign of the reference volume.
                for k in 0..4 {
                    let mut w = *v;
                    w[k] = p;
                    if geom::tet_signed_volume(&w) / vol < 0.0 {
                        return false;
                    }
                }
                true
            }
        }
    }

    pub fn bounding_box(&self) -> Aabb {
        match self {
            Shape::Sphere { center, radius } => Aabb::new(
                [center[0] - radius, center[1] - radius, center[2] - radius],
                [center[0] + radius, center[1] + radius, center[2] + radius],
            ),
            Shape::Cuboid { min, max } => Aabb::new(*min, *max),
            Shape::Tetrahedron { vertices } => {
                Aabb::of_points(vertices.iter().copied()).expect("four vertices")
            }
        }
    }
}

/// A shape together with the region tag its interior receives.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedShape {
    pub shape: Shape,
    pub tag: String,
}

impl TaggedShape {
    pub fn new(shape: Shape, tag: impl Into<String>) -> Self {
        TaggedShape { shape, tag: tag.into() }
    }
}

/// Material attached to one mesh region.
#[derive(Debug, Clone, PartialEq)]
pub struct Material {
    pub region: String,
    /// Relative permeability μ_r (dimensionless, > 0).
    pub mu_r: f64,
    /// Conductivity σ_* in S/m (≥ 0).
    pub sigma_star: f64,
    /// True when the region is part of the object B rather than free space.
    pub is_object: bool,
}

impl Material {
    pub fn new(region: impl Into<String>, mu_r: f64, sigma_star: f64, is_object: bool) -> Self {
        Material { region: region.into(), mu_r, sigma_star, is_object }
    }

    /// The free-space material bound to the exterior region.
    pub fn exterior() -> Self {
        Material::new(EXTERIOR_NAME, 1.0, 0.0, false)
    }

    fn validate(&self) -> Result<(), MeshError> {
        let fail = |reason: &str| {
            Err(MeshError::BadMaterial { region: self.region.clone(), reason: reason.into() })
        };
        if !(self.mu_r > 0.0) || !self.mu_r.is_finite() {
            return fail("mu_r must be positive and finite");
        }
        if !(self.sigma_star >= 0.0) || !self.sigma_star.is_finite() {
            return fail("sigma_star must be non-negative and finite");
        }
        if self.region == EXTERIOR_NAME && (self.mu_r != 1.0 || self.sigma_star != 0.0 || self.is_object)
        {
            return fail("exterior must have mu_r = 1, sigma_star = 0 and is_object = false");
        }
        Ok(())
    }
}

/// Validated collection of materials, one per region tag.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialSet {
    materials: Vec<Material>,
}

impl MaterialSet {
    /// Builds a material set; the exterior material is appended automatically
    /// when absent. Rejects duplicates and invalid coefficient ranges.
    pub fn new(mut materials: Vec<Material>) -> Result<Self, MeshError> {
        if !materials.iter().any(|m| m.region == EXTERIOR_NAME) {
            materials.push(Material::exterior());
        }
        for (i, m) in materials.iter().enumerate() {
            m.validate()?;
            if materials[..i].iter().any(|o| o.region == m.region) {
                return Err(MeshError::BadMaterial {
                    region: m.region.clone(),
                    reason: "duplicate region tag".into(),
                });
            }
        }
        Ok(MaterialSet { materials })
    }

    pub fn get(&self, region: &str) -> Option<&Material> {
        self.materials.iter().find(|m| m.region == region)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Material> {
        self.materials.iter()
    }

    /// Resolves materials per mesh region id; errors if the mesh uses a tag
    /// with no declared material.
    pub fn resolve(&self, mesh: &Mesh) -> Result<Vec<Material>, MeshError> {
        mesh.region_names()
            .iter()
            .map(|name| {
                self.get(name)
                    .cloned()
                    .ok_or_else(|| MeshError::UnknownRegionTag(name.clone()))
            })
            .collect()
    }
}

/// Conforming tetrahedral mesh with region tags and derived topology.
///
/// Construction validates positive tet volumes and derives the global edge
/// enumeration (vertex pairs sorted ascending), per-tet edge maps, boundary
/// faces (faces incident to exactly one tet) and boundary-edge flags. A
/// finished mesh is immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    tets: Vec<[u32; 4]>,
    regions: Vec<u32>,
    region_names: Vec<String>,
    edges: Vec<[u32; 2]>,
    tet_edges: Vec<[u32; 6]>,
    boundary_faces: Vec<[u32; 3]>,
    boundary_edge: Vec<bool>,
}

impl Mesh {
    /// Builds a mesh from raw arrays, validating all structural invariants.
    pub fn new(
        vertices: Vec<Point>,
        tets: Vec<[u32; 4]>,
        regions: Vec<u32>,
        region_names: Vec<String>,
    ) -> Result<Self, MeshError> {
        if region_names.is_empty() || region_names[0] != EXTERIOR_NAME {
            return Err(MeshError::BadRegionTable);
        }
        for (i, name) in region_names.iter().enumerate() {
            if region_names[..i].contains(name) {
                return Err(MeshError::BadRegionTable);
            }
        }
        assert_eq!(tets.len(), regions.len(), "one region tag per tet");
        for (t, tet) in tets.iter().enumerate() {
            for &v in tet {
                if v as usize >= vertices.len() {
                    return Err(MeshError::VertexOutOfRange {
                        tet: t,
                        vertex: v as usize,
                        count: vertices.len(),
                    });
                }
            }
            for a in 0..4 {
                for b in (a + 1)..4 {
                    if tet[a] == tet[b] {
                        return Err(MeshError::RepeatedVertex { tet: t, vertex: tet[a] as usize });
                    }
                }
            }
            let vol = geom::tet_signed_volume(&tet.map(|v| vertices[v as usize]));
            if !(vol > 0.0) {
                return Err(MeshError::InvertedTet { index: t, volume: vol });
            }
        }
        for (t, &r) in regions.iter().enumerate() {
            if r as usize >= region_names.len() {
                return Err(MeshError::RegionOutOfRange {
                    tet: t,
                    region: r,
                    count: region_names.len(),
                });
            }
        }
        let (edges, tet_edges, boundary_faces, boundary_edge) =
            derive_topology(&tets, vertices.len())?;
        Ok(Mesh {
            vertices,
            tets,
            regions,
            region_names,
            edges,
            tet_edges,
            boundary_faces,
            boundary_edge,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn tet_count(&self) -> usize {
        self.tets.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn tets(&self) -> &[[u32; 4]] {
        &self.tets
    }

    /// Region id per tet.
    pub fn regions(&self) -> &[u32] {
        &self.regions
    }

    /// Region id → tag name table; index 0 is always the exterior.
    pub fn region_names(&self) -> &[String] {
        &self.region_names
    }

    pub fn region_id(&self, name: &str) -> Option<u32> {
        self.region_names.iter().position(|n| n == name).map(|i| i as u32)
    }

    /// Unique edges as ascending vertex pairs, sorted lexicographically.
    pub fn edges(&self) -> &[[u32; 2]] {
        &self.edges
    }

    /// Global edge ids of each tet's six local edges (order of [`LOCAL_EDGES`]).
    pub fn tet_edges(&self) -> &[[u32; 6]] {
        &self.tet_edges
    }

    /// Faces lying on ∂Ω, as ascending vertex triples.
    pub fn boundary_faces(&self) -> &[[u32; 3]] {
        &self.boundary_faces
    }

    /// Per-edge flag: true when the edge belongs to a boundary face.
    pub fn boundary_edge_flags(&self) -> &[bool] {
        &self.boundary_edge
    }

    pub fn tet_vertices(&self, t: usize) -> [Point; 4] {
        self.tets[t].map(|v| self.vertices[v as usize])
    }

    /// Volume of tet `t`; positive for any constructed mesh.
    pub fn tet_volume(&self, t: usize) -> f64 {
        geom::tet_signed_volume(&self.tet_vertices(t))
    }

    pub fn tet_centroid(&self, t: usize) -> Point {
        let v = self.tet_vertices(t);
        [
            0.25 * (v[0][0] + v[1][0] + v[2][0] + v[3][0]),
            0.25 * (v[0][1] + v[1][1] + v[2][1] + v[3][1]),
            0.25 * (v[0][2] + v[1][2] + v[2][2] + v[3][2]),
        ]
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.tet_count()).map(|t| self.tet_volume(t)).sum()
    }

    /// Summed volume of all tets tagged with `region`.
    pub fn region_volume(&self, region: u32) -> f64 {
        (0..self.tet_count())
            .filter(|&t| self.regions[t] == region)
            .map(|t| self.tet_volume(t))
            .sum()
    }

    /// Summed volume of all object (non-exterior) tets.
    pub fn object_volume(&self) -> f64 {
        (0..self.tet_count())
            .filter(|&t| self.regions[t] != EXTERIOR_REGION)
            .map(|t| self.tet_volume(t))
            .sum()
    }

    /// Bounding box of all tets tagged non-exterior; `None` when nothing is
    /// tagged.
    pub fn tagged_bounding_box(&self) -> Option<Aabb> {
        Aabb::of_points(
            self.tets
                .iter()
                .zip(&self.regions)
                .filter(|(_, &r)| r != EXTERIOR_REGION)
                .flat_map(|(tet, _)| tet.iter().map(|&v| self.vertices[v as usize])),
        )
    }

    /// Longest edge length of tet `t`.
    pub fn tet_longest_edge(&self, t: usize) -> f64 {
        let v = self.tet_vertices(t);
        LOCAL_EDGES
            .iter()
            .map(|&[a, b]| geom::dist(v[a], v[b]))
            .fold(0.0, f64::max)
    }
}

/// Derives edges, per-tet edge maps, boundary faces and boundary-edge flags.
fn derive_topology(
    tets: &[[u32; 4]],
    _vertex_count: usize,
) -> Result<(Vec<[u32; 2]>, Vec<[u32; 6]>, Vec<[u32; 3]>, Vec<bool>), MeshError> {
    let mut edges: Vec<[u32; 2]> = Vec::with_capacity(6 * tets.len());
    for tet in tets {
        for &[a, b] in &LOCAL_EDGES {
            let (x, y) = (tet[a], tet[b]);
            edges.push(if x < y { [x, y] } else { [y, x] });
        }
    }
    edges.sort_unstable();
    edges.dedup();

    let mut tet_edges = Vec::with_capacity(tets.len());
    for tet in tets {
        let mut te = [0u32; 6];
        for (k, &[a, b]) in LOCAL_EDGES.iter().enumerate() {
            let (x, y) = (tet[a], tet[b]);
            let key = if x < y { [x, y] } else { [y, x] };
            te[k] = edges.binary_search(&key).expect("edge present by construction") as u32;
        }
        tet_edges.push(te);
    }

    let mut faces: Vec<[u32; 3]> = Vec::with_capacity(4 * tets.len());
    for tet in tets {
        for &[a, b, c] in &LOCAL_FACES {
            let mut f = [tet[a], tet[b], tet[c]];
            f.sort_unstable();
            faces.push(f);
        }
    }
    faces.sort_unstable();
    let mut boundary_faces = Vec::new();
    let mut i = 0;
    while i < faces.len() {
        let mut j = i + 1;
        while j < faces.len() && faces[j] == faces[i] {
            j += 1;
        }
        match j - i {
            1 => boundary_faces.push(faces[i]),
            2 => {}
            _ => {
                let f = faces[i];
                return Err(MeshError::NonManifoldFace(f[0], f[1], f[2]));
            }
        }
        i = j;
    }

    let mut boundary_edge = vec![false; edges.len()];
    for f in &boundary_faces {
        for &[a, b] in &[[0usize, 1], [0, 2], [1, 2]] {
            let key = [f[a], f[b]];
            let id = edges.binary_search(&key).expect("face edge present");
            boundary_edge[id] = true;
        }
    }

    Ok((edges, tet_edges, boundary_faces, boundary_edge))
}

/// Reorders a tet's vertices (swapping the last two if needed) so its signed
/// volume is positive.
pub(crate) fn oriented(vertices: &[Point], mut tet: [u32; 4]) -> [u32; 4] {
    let v = tet.map(|i| vertices[i as usize]);
    if geom::tet_signed_volume(&v) < 0.0 {
        tet.swap(2, 3);
    }
    tet
}

/// Generates a structured tetrahedral mesh of the cube [-halfWidth, halfWidth]³.
///
/// Each of the `divisions`³ hexahedral cells is split into six positive-volume
/// tets sharing the cell's main diagonal; the split is invariant under
/// permutations of the coordinate axes and conforming across cell faces. All
/// tets start tagged exterior.
pub fn generate_box_mesh(half_width: f64, divisions: usize) -> Result<Mesh, MeshError> {
    if divisions == 0 {
        return Err(MeshError::ZeroDivisions);
    }
    if !(half_width > 0.0) || !half_width.is_finite() {
        return Err(MeshError::BadHalfWidth(half_width));
    }
    let n = divisions;
    let np = n + 1;
    let coord = |i: usize| -> f64 { -half_width + 2.0 * half_width * (i as f64) / (n as f64) };
    let mut vertices = Vec::with_capacity(np * np * np);
    for k in 0..np {
        for j in 0..np {
            for i in 0..np {
                vertices.push([coord(i), coord(j), coord(k)]);
            }
        }
    }
    let vid = |i: usize, j: usize, k: usize| -> u32 { (i + np * (j + np * k)) as u32 };

    // Six tets per cell: one per permutation of the axes, each tracing a
    // monotone path from the cell's low corner to its high corner.
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut tets = Vec::with_capacity(6 * n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                for perm in &PERMS {
                    let mut d = [0usize; 3];
                    let mut path = [[0usize; 3]; 4];
                    for (step, &axis) in perm.iter().enumerate() {
                        d[axis] += 1;
                        path[step + 1] = d;
                    }
                    let tet = path.map(|p| vid(i + p[0], j + p[1], k + p[2]));
                    tets.push(oriented(&vertices, tet));
                }
            }
        }
    }
    let regions = vec![EXTERIOR_REGION; tets.len()];
    Mesh::new(vertices, tets, regions, vec![EXTERIOR_NAME.to_string()])
}

/// Retags every tet by centroid inclusion against the given shapes.
///
/// Tags are reset first, so repeated application with the same shapes is
/// idempotent. A tet whose centroid lies in two shapes carrying different tags
/// is an error; with identical tags the later shape wins (harmlessly).
pub fn tag_regions(mesh: &Mesh, shapes: &[TaggedShape]) -> Result<Mesh, MeshError> {
    let mut region_names = vec![EXTERIOR_NAME.to_string()];
    let shape_region: Vec<u32> = shapes
        .iter()
        .map(|s| {
            if let Some(i) = region_names.iter().position(|n| *n == s.tag) {
                i as u32
            } else {
                region_names.push(s.tag.clone());
                (region_names.len() - 1) as u32
            }
        })
        .collect();

    // Bounding boxes let the common all-exterior case skip the exact tests.
    let boxes: Vec<Aabb> = shapes.iter().map(|s| s.shape.bounding_box()).collect();

    let mut regions = vec![EXTERIOR_REGION; mesh.tet_count()];
    for t in 0..mesh.tet_count() {
        let c = mesh.tet_centroid(t);
        let mut chosen: Option<(usize, u32)> = None;
        for (s, shape) in shapes.iter().enumerate() {
            if !boxes[s].contains(c) || !shape.shape.contains(c) {
                continue;
            }
            if let Some((first, region)) = chosen {
                if region != shape_region[s] {
                    return Err(MeshError::AmbiguousRegion {
                        tet: t,
                        first: shapes[first].tag.clone(),
                        second: shape.tag.clone(),
                    });
                }
            }
            chosen = Some((s, shape_region[s]));
        }
        if let Some((_, region)) = chosen {
            regions[t] = region;
        }
    }

    let mut out = mesh.clone();
    out.regions = regions;
    out.region_names = region_names;
    Ok(out)
}
