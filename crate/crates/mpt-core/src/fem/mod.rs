//! Lowest-order H(curl)-conforming edge elements: basis evaluation, sparse
//! assembly of weighted curl-curl and mass forms, essential boundary
//! conditions and sparse linear solves.
//!
//! All matrices assembled on one mesh share a single sparsity pattern (the
//! edge adjacency), so affine combinations and repeated factorisations reuse
//! symbolic work. Matrices are kept value-symmetric throughout.

mod solve;

pub use solve::{
    solve_sparse, solve_sparse_real, CholeskyFactor, ComplexLuFactor, FrequencySolver,
    DEFAULT_SOLVE_TOL,
};

use crate::geom::{self, Point};
use crate::mesh::{Material, Mesh, LOCAL_EDGES};
use num_complex::Complex64;
use num_traits::Zero;
use std::ops::{AddAssign, Mul};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("region tag '{0}' has no assembly weight")]
    UnmappedRegion(String),
    #[error("weights must be non-negative and finite, got {0} for region '{1}'")]
    BadWeight(f64, String),
    #[error("linear solve reached relative residual {residual:e}, above the tolerance {tol:e}")]
    SolveFailure { residual: f64, tol: f64 },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("sparse factorisation failed: {0}")]
    Factorisation(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Shared sparsity pattern in compressed form. The matrices built on it are
/// structurally and value symmetric, so the same arrays serve as both
/// row-compressed and column-compressed storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    n: usize,
    ptr: Vec<usize>,
    idx: Vec<usize>,
}

impl Pattern {
    /// Builds a pattern from undirected adjacency pairs (duplicates fine).
    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut entries: Vec<(u32, u32)> = Vec::new();
        for (r, c) in pairs {
            entries.push((c, r));
            entries.push((r, c));
        }
        entries.sort_unstable();
        entries.dedup();
        let mut ptr = vec![0usize; n + 1];
        for &(c, _) in &entries {
            ptr[c as usize + 1] += 1;
        }
        for j in 0..n {
            ptr[j + 1] += ptr[j];
        }
        let idx = entries.iter().map(|&(_, r)| r as usize).collect();
        Pattern { n, ptr, idx }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.idx.len()
    }

    /// Compressed offsets, one slot per column plus the trailing total.
    pub fn ptr(&self) -> &[usize] {
        &self.ptr
    }

    /// Row index of every stored entry, sorted within each column.
    pub fn idx(&self) -> &[usize] {
        &self.idx
    }

    /// Position of entry (row, col) in the value array, if present.
    pub fn entry(&self, row: u32, col: u32) -> Option<usize> {
        let lo = self.ptr[col as usize];
        let hi = self.ptr[col as usize + 1];
        self.idx[lo..hi]
            .binary_search(&(row as usize))
            .ok()
            .map(|k| lo + k)
    }
}

/// Sparse matrix with values on a shared [`Pattern`].
#[derive(Debug, Clone)]
pub struct Sparse<T> {
    pattern: Arc<Pattern>,
    values: Vec<T>,
}

pub type SparseMatrix = Sparse<f64>;
pub type SparseComplexMatrix = Sparse<Complex64>;

impl<T: Copy + Zero + AddAssign + Mul<Output = T>> Sparse<T> {
    pub fn zeros(pattern: Arc<Pattern>) -> Self {
        let values = vec![T::zero(); pattern.nnz()];
        Sparse { pattern, values }
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn value_at(&self, row: u32, col: u32) -> T {
        self.pattern
            .entry(row, col)
            .map_or(T::zero(), |k| self.values[k])
    }

    /// y = M x.
    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.pattern.n, "vector length must match");
        let mut y = vec![T::zero(); self.pattern.n];
        for j in 0..self.pattern.n {
            let xj = x[j];
            for k in self.pattern.ptr[j]..self.pattern.ptr[j + 1] {
                y[self.pattern.idx[k]] += self.values[k] * xj;
            }
        }
        y
    }

    /// xᵀ M y without conjugation (the natural product for the
    /// complex-symmetric systems in this crate).
    pub fn bilinear(&self, x: &[T], y: &[T]) -> T {
        let my = self.mul_vec(y);
        let mut acc = T::zero();
        for (a, b) in x.iter().zip(&my) {
            acc += *a * *b;
        }
        acc
    }

    /// self + s * other on the shared pattern.
    pub fn add_scaled(&self, other: &Self, s: T) -> Self {
        assert!(
            Arc::ptr_eq(&self.pattern, &other.pattern) || self.pattern == other.pattern,
            "matrices must share a pattern"
        );
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| {
                let mut v = a;
                v += b * s;
                v
            })
            .collect();
        Sparse { pattern: self.pattern.clone(), values }
    }

    pub fn scaled(&self, s: T) -> Self {
        Sparse {
            pattern: self.pattern.clone(),
            values: self.values.iter().map(|&v| v * s).collect(),
        }
    }

    /// Mean of the diagonal entries.
    pub fn diagonal_mean(&self) -> T
    where
        T: Mul<f64, Output = T>,
    {
        let mut acc = T::zero();
        for j in 0..self.pattern.n {
            acc += self.value_at(j as u32, j as u32);
        }
        acc * (1.0 / self.pattern.n as f64)
    }

    /// Dense copy, for small oracles and reports.
    pub fn to_dense(&self) -> nalgebra::DMatrix<T>
    where
        T: nalgebra::Scalar + Zero,
    {
        let mut out = nalgebra::DMatrix::from_element(self.pattern.n, self.pattern.n, T::zero());
        for j in 0..self.pattern.n {
            for k in self.pattern.ptr[j]..self.pattern.ptr[j + 1] {
                out[(self.pattern.idx[k], j)] = self.values[k];
            }
        }
        out
    }
}

impl SparseMatrix {
    /// Real-matrix times complex vector.
    pub fn mul_complex(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.pattern.n, "vector length must match");
        let mut y = vec![Complex64::zero(); self.pattern.n];
        for j in 0..self.pattern.n {
            let xj = x[j];
            for k in self.pattern.ptr[j]..self.pattern.ptr[j + 1] {
                y[self.pattern.idx[k]] += xj * self.values[k];
            }
        }
        y
    }

    /// xᵀ M y for complex vectors over a real matrix, no conjugation.
    pub fn bilinear_complex(&self, x: &[Complex64], y: &[Complex64]) -> Complex64 {
        let my = self.mul_complex(y);
        x.iter().zip(&my).map(|(a, b)| a * b).sum()
    }
}

/// Builds the complex matrix re + i·im from two real matrices on the same
/// pattern.
pub fn complex_from_parts(re: &SparseMatrix, im: &SparseMatrix) -> SparseComplexMatrix {
    assert!(
        Arc::ptr_eq(&re.pattern, &im.pattern) || re.pattern == im.pattern,
        "matrices must share a pattern"
    );
    Sparse {
        pattern: re.pattern.clone(),
        values: re
            .values
            .iter()
            .zip(&im.values)
            .map(|(&a, &b)| Complex64::new(a, b))
            .collect(),
    }
}

/// Per-region assembly weights, indexed by mesh region id.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionWeights(Vec<f64>);

impl RegionWeights {
    pub fn uniform(mesh: &Mesh, w: f64) -> Self {
        RegionWeights(vec![w; mesh.region_names().len()])
    }

    /// One weight per mesh region, looked up by tag; every region present in
    /// the mesh must be mapped.
    pub fn from_pairs(mesh: &Mesh, pairs: &[(&str, f64)]) -> Result<Self, FemError> {
        Self::from_fn(mesh, |name| {
            pairs.iter().find(|(tag, _)| *tag == name).map(|&(_, w)| w)
        })
    }

    pub fn from_fn(
        mesh: &Mesh,
        f: impl Fn(&str) -> Option<f64>,
    ) -> Result<Self, FemError> {
        let mut weights = Vec::with_capacity(mesh.region_names().len());
        for name in mesh.region_names() {
            let w = f(name).ok_or_else(|| FemError::UnmappedRegion(name.clone()))?;
            if !w.is_finite() || w < 0.0 {
                return Err(FemError::BadWeight(w, name.clone()));
            }
            weights.push(w);
        }
        Ok(RegionWeights(weights))
    }

    /// Weights derived from resolved materials (one per region id).
    pub fn from_materials(
        materials: &[Material],
        f: impl Fn(&Material) -> f64,
    ) -> Result<Self, FemError> {
        let mut weights = Vec::with_capacity(materials.len());
        for m in materials {
            let w = f(m);
            if !w.is_finite() || w < 0.0 {
                return Err(FemError::BadWeight(w, m.region.clone()));
            }
            weights.push(w);
        }
        Ok(RegionWeights(weights))
    }

    pub fn get(&self, region: u32) -> f64 {
        self.0[region as usize]
    }
}

/// Lowest-order edge-element space on a mesh: global edge dofs with the
/// essential condition n × u = 0 on ∂Ω imposed by dropping boundary-edge
/// dofs.
#[derive(Debug, Clone)]
pub struct EdgeSpace {
    mesh: Arc<Mesh>,
    dof_of_edge: Vec<u32>,
    edge_of_dof: Vec<u32>,
    pattern_full: Arc<Pattern>,
    pattern_free: Arc<Pattern>,
    /// Gather map: position in the free pattern → position in the full pattern.
    reduce_map: Vec<usize>,
}

const CONSTRAINED: u32 = u32::MAX;

impl EdgeSpace {
    pub fn new(mesh: Arc<Mesh>) -> Self {
        let flags = mesh.boundary_edge_flags();
        let mut dof_of_edge = vec![CONSTRAINED; mesh.edge_count()];
        let mut edge_of_dof = Vec::new();
        for (e, &constrained) in flags.iter().enumerate() {
            if !constrained {
                dof_of_edge[e] = edge_of_dof.len() as u32;
                edge_of_dof.push(e as u32);
            }
        }

        let pattern_full = Arc::new(Pattern::from_pairs(
            mesh.edge_count(),
            mesh.tet_edges().iter().flat_map(|te| {
                te.iter()
                    .flat_map(move |&a| te.iter().map(move |&b| (a, b)))
                    .collect::<Vec<_>>()
            }),
        ));
        let pattern_free = Arc::new(Pattern::from_pairs(
            edge_of_dof.len(),
            mesh.tet_edges().iter().flat_map(|te| {
                let mut pairs = Vec::new();
                for &a in te {
                    for &b in te {
                        let (da, db) = (dof_of_edge[a as usize], dof_of_edge[b as usize]);
                        if da != CONSTRAINED && db != CONSTRAINED {
                            pairs.push((da, db));
                        }
                    }
                }
                pairs
            }),
        ));

        let mut reduce_map = vec![0usize; pattern_free.nnz()];
        for col in 0..pattern_free.n {
            for k in pattern_free.ptr[col]..pattern_free.ptr[col + 1] {
                let row = pattern_free.idx[k];
                let full = pattern_full
                    .entry(edge_of_dof[row as usize], edge_of_dof[col])
                    .expect("free entry exists in full pattern");
                reduce_map[k] = full;
            }
        }

        EdgeSpace { mesh, dof_of_edge, edge_of_dof, pattern_full, pattern_free, reduce_map }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    /// Number of free (unconstrained) dofs N_d.
    pub fn n_dof(&self) -> usize {
        self.edge_of_dof.len()
    }

    pub fn total_edges(&self) -> usize {
        self.mesh.edge_count()
    }

    /// Free dof of an edge, `None` when the edge is constrained on ∂Ω.
    pub fn dof_of_edge(&self, edge: usize) -> Option<usize> {
        let d = self.dof_of_edge[edge];
        (d != CONSTRAINED).then_some(d as usize)
    }

    pub fn edge_of_dof(&self, dof: usize) -> usize {
        self.edge_of_dof[dof] as usize
    }

    /// Per-edge flags; true marks an edge constrained by the essential
    /// boundary condition.
    pub fn dirichlet_flags(&self) -> &[bool] {
        self.mesh.boundary_edge_flags()
    }

    /// Pattern of full (all-edge) matrices.
    pub fn pattern_full(&self) -> &Arc<Pattern> {
        &self.pattern_full
    }

    /// Pattern of reduced (free-dof) matrices.
    pub fn pattern_free(&self) -> &Arc<Pattern> {
        &self.pattern_free
    }

    /// Drops constrained rows and columns of a full matrix.
    pub fn apply_dirichlet_matrix(&self, full: &SparseMatrix) -> SparseMatrix {
        assert!(
            Arc::ptr_eq(&full.pattern, &self.pattern_full)
                || *full.pattern == *self.pattern_full,
            "matrix must live on the full edge pattern"
        );
        let values = self.reduce_map.iter().map(|&k| full.values[k]).collect();
        Sparse { pattern: self.pattern_free.clone(), values }
    }

    /// Drops constrained entries of a full (all-edge) vector.
    pub fn restrict_to_free<T: Copy>(&self, full: &[T]) -> Vec<T> {
        assert_eq!(full.len(), self.total_edges());
        self.edge_of_dof.iter().map(|&e| full[e as usize]).collect()
    }

    /// Extends a free-dof vector by zeros on constrained edges.
    pub fn expand_solution<T: Copy + Zero>(&self, free: &[T]) -> Vec<T> {
        assert_eq!(free.len(), self.n_dof());
        let mut full = vec![T::zero(); self.total_edges()];
        for (d, &e) in self.edge_of_dof.iter().enumerate() {
            full[e as usize] = free[d];
        }
        full
    }
}

/// Geometry of one affine tet: barycentric gradients and volume.
struct ElementGeometry {
    grads: [Point; 4],
    volume: f64,
}

fn element_geometry(v: &[Point; 4]) -> ElementGeometry {
    let j = nalgebra::Matrix3::from_columns(&[
        nalgebra::Vector3::from(geom::sub(v[1], v[0])),
        nalgebra::Vector3::from(geom::sub(v[2], v[0])),
        nalgebra::Vector3::from(geom::sub(v[3], v[0])),
    ]);
    let volume = j.determinant() / 6.0;
    let inv = j.try_inverse().expect("positive-volume tet is invertible");
    let mut grads = [[0.0; 3]; 4];
    for k in 0..3 {
        grads[k + 1] = [inv[(k, 0)], inv[(k, 1)], inv[(k, 2)]];
    }
    grads[0] = [
        -grads[1][0] - grads[2][0] - grads[3][0],
        -grads[1][1] - grads[2][1] - grads[3][1],
        -grads[1][2] - grads[2][2] - grads[3][2],
    ];
    ElementGeometry { grads, volume }
}

/// Orientation sign of local edge (a, b) relative to the global ascending
/// convention.
#[inline]
fn edge_sign(tet: &[u32; 4], a: usize, b: usize) -> f64 {
    if tet[a] < tet[b] {
        1.0
    } else {
        -1.0
    }
}

/// Constant curl of each signed Whitney function on one tet:
/// ∇×N_k = 2 ∇λ_a × ∇λ_b.
fn element_curls(tet: &[u32; 4], g: &ElementGeometry) -> [Point; 6] {
    let mut curls = [[0.0; 3]; 6];
    for (k, &[a, b]) in LOCAL_EDGES.iter().enumerate() {
        let c = geom::cross(g.grads[a], g.grads[b]);
        curls[k] = geom::scale(c, 2.0 * edge_sign(tet, a, b));
    }
    curls
}

/// Degree-2 symmetric quadrature on the reference tet: four points, equal
/// weights V/4, exact for quadratic integrands.
fn quadrature_points() -> [[f64; 4]; 4] {
    let s5 = 5.0f64.sqrt();
    let a = (5.0 + 3.0 * s5) / 20.0;
    let b = (5.0 - s5) / 20.0;
    [
        [a, b, b, b],
        [b, a, b, b],
        [b, b, a, b],
        [b, b, b, a],
    ]
}

/// Assembles the weighted curl-curl form on all edges:
/// entry (k, l) = Σ_tets w(region) ∫ (∇×N_k)·(∇×N_l).
///
/// Exact for lowest order because the curls are elementwise constant. The
/// result is symmetric positive-semidefinite for non-negative weights.
pub fn assemble_curlcurl(space: &EdgeSpace, weights: &RegionWeights) -> SparseMatrix {
    let mesh = space.mesh();
    let mut out = SparseMatrix::zeros(space.pattern_full.clone());
    for t in 0..mesh.tet_count() {
        let w = weights.get(mesh.regions()[t]);
        if w == 0.0 {
            continue;
        }
        let tet = &mesh.tets()[t];
        let g = element_geometry(&mesh.tet_vertices(t));
        let curls = element_curls(tet, &g);
        let te = mesh.tet_edges()[t];
        for k in 0..6 {
            for l in 0..6 {
                let val = w * g.volume * geom::dot(curls[k], curls[l]);
                let pos = out
                    .pattern
                    .entry(te[k], te[l])
                    .expect("pattern covers element pairs");
                out.values[pos] += val;
            }
        }
    }
    out
}

/// Assembles the weighted vector mass form on all edges:
/// entry (k, l) = Σ_tets w(region) ∫ N_k·N_l, exact at lowest order via the
/// closed form ∫ λ_p λ_q = V(1+δ_pq)/20.
pub fn assemble_mass(space: &EdgeSpace, weights: &RegionWeights) -> SparseMatrix {
    let mesh = space.mesh();
    let mut out = SparseMatrix::zeros(space.pattern_full.clone());
    for t in 0..mesh.tet_count() {
        let w = weights.get(mesh.regions()[t]);
        if w == 0.0 {
            continue;
        }
        let tet = &mesh.tets()[t];
        let g = element_geometry(&mesh.tet_vertices(t));
        let te = mesh.tet_edges()[t];
        let lam = |p: usize, q: usize| -> f64 {
            let c = if p == q { 2.0 } else { 1.0 };
            g.volume * c / 20.0
        };
        for k in 0..6 {
            let [ak, bk] = LOCAL_EDGES[k];
            let sk = edge_sign(tet, ak, bk);
            for l in 0..6 {
                let [al, bl] = LOCAL_EDGES[l];
                let sl = edge_sign(tet, al, bl);
                let val = w
                    * sk
                    * sl
                    * (geom::dot(g.grads[bk], g.grads[bl]) * lam(ak, al)
                        - geom::dot(g.grads[bk], g.grads[al]) * lam(ak, bl)
                        - geom::dot(g.grads[ak], g.grads[bl]) * lam(bk, al)
                        + geom::dot(g.grads[ak], g.grads[al]) * lam(bk, bl));
                let pos = out
                    .pattern
                    .entry(te[k], te[l])
                    .expect("pattern covers element pairs");
                out.values[pos] += val;
            }
        }
    }
    out
}

/// Assembles the free-dof source vector with entries
/// 2 Σ_object tets (1 − μ_r⁻¹) ∫ e_i·(∇×N_k); zero when μ_r = 1 everywhere.
///
/// `direction` selects e_i with i in {0, 1, 2}; `materials` must be resolved
/// per region id (see [`crate::mesh::MaterialSet::resolve`]).
pub fn assemble_theta0_rhs(
    space: &EdgeSpace,
    direction: usize,
    materials: &[Material],
) -> Vec<f64> {
    space.restrict_to_free(&assemble_theta0_rhs_full(space, direction, materials))
}

/// All-edge variant of [`assemble_theta0_rhs`] before boundary reduction.
pub(crate) fn assemble_theta0_rhs_full(
    space: &EdgeSpace,
    direction: usize,
    materials: &[Material],
) -> Vec<f64> {
    assert!(direction < 3, "direction must be 0, 1 or 2");
    let mesh = space.mesh();
    assert_eq!(materials.len(), mesh.region_names().len(), "one material per region");
    let mut full = vec![0.0; space.total_edges()];
    for t in 0..mesh.tet_count() {
        let m = &materials[mesh.regions()[t] as usize];
        if !m.is_object {
            continue;
        }
        let coeff = 2.0 * (1.0 - 1.0 / m.mu_r);
        if coeff == 0.0 {
            continue;
        }
        let tet = &mesh.tets()[t];
        let g = element_geometry(&mesh.tet_vertices(t));
        let curls = element_curls(tet, &g);
        let te = mesh.tet_edges()[t];
        for k in 0..6 {
            full[te[k] as usize] += coeff * g.volume * curls[k][direction];
        }
    }
    full
}

/// Assembles the free-dof load vector ∫ w(region) N_k·f(ξ) by degree-2
/// quadrature (exact for affine f).
pub fn assemble_field_load(
    space: &EdgeSpace,
    weights: &RegionWeights,
    f: impl Fn(Point) -> Point,
) -> Vec<f64> {
    let mesh = space.mesh();
    let quad = quadrature_points();
    let mut full = vec![0.0; space.total_edges()];
    for t in 0..mesh.tet_count() {
        let w = weights.get(mesh.regions()[t]);
        if w == 0.0 {
            continue;
        }
        let tet = &mesh.tets()[t];
        let v = mesh.tet_vertices(t);
        let g = element_geometry(&v);
        let te = mesh.tet_edges()[t];
        for lam in &quad {
            let mut x = [0.0; 3];
            for p in 0..4 {
                x = geom::add(x, geom::scale(v[p], lam[p]));
            }
            let fx = f(x);
            let wq = w * g.volume / 4.0;
            for (k, &[a, b]) in LOCAL_EDGES.iter().enumerate() {
                let nk = geom::sub(
                    geom::scale(g.grads[b], lam[a]),
                    geom::scale(g.grads[a], lam[b]),
                );
                full[te[k] as usize] += wq * edge_sign(tet, a, b) * geom::dot(nk, fx);
            }
        }
    }
    space.restrict_to_free(&full)
}

/// ∫ w(region) f(ξ)·g(ξ) over the mesh by degree-2 quadrature (exact when
/// f·g is quadratic).
pub fn integrate_weighted_dot(
    mesh: &Mesh,
    weights: &RegionWeights,
    f: impl Fn(Point) -> Point,
    g: impl Fn(Point) -> Point,
) -> f64 {
    let quad = quadrature_points();
    let mut acc = 0.0;
    for t in 0..mesh.tet_count() {
        let w = weights.get(mesh.regions()[t]);
        if w == 0.0 {
            continue;
        }
        let v = mesh.tet_vertices(t);
        let volume = geom::tet_signed_volume(&v);
        for lam in &quad {
            let mut x = [0.0; 3];
            for p in 0..4 {
                x = geom::add(x, geom::scale(v[p], lam[p]));
            }
            acc += w * volume / 4.0 * geom::dot(f(x), g(x));
        }
    }
    acc
}

/// ∫ w(region) dV over the mesh (the weighted volume).
pub fn integrate_weight(mesh: &Mesh, weights: &RegionWeights) -> f64 {
    (0..mesh.tet_count())
        .map(|t| weights.get(mesh.regions()[t]) * mesh.tet_volume(t))
        .sum()
}

/// Discrete-gradient coefficient vector of the vertex hat function at
/// `vertex`, on all edges: +1 on edges ending at the vertex, −1 on edges
/// starting there (global ascending orientation), 0 elsewhere.
pub fn hat_gradient_coefficients(mesh: &Mesh, vertex: u32) -> Vec<f64> {
    let mut g = vec![0.0; mesh.edge_count()];
    for (e, &[a, b]) in mesh.edges().iter().enumerate() {
        if b == vertex {
            g[e] = 1.0;
        } else if a == vertex {
            g[e] = -1.0;
        }
    }
    g
}
