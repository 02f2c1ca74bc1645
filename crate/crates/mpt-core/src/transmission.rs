//! The two discrete eddy-current transmission problems on an edge-element
//! space: the frequency-independent real background problem and the
//! frequency-parametrised complex conduction problem, the latter exposed
//! through its affine decomposition A(ω) = A₀ + ω·A₁ with right side
//! r(ω) = ω·r¹.
//!
//! The driving field e_i × ξ (unit axis crossed with position) is never
//! interpolated into the edge space; it enters the right sides and source
//! moments through exact element integrals.

use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use crate::fem::{
    assemble_curlcurl, assemble_field_load, assemble_mass, assemble_theta0_rhs,
    complex_from_parts, integrate_weighted_dot, CholeskyFactor, ComplexLuFactor, EdgeSpace,
    FemError, FrequencySolver, RegionWeights, SparseComplexMatrix, SparseMatrix,
};
use crate::geom::{self, Point};
use crate::mesh::{Material, MaterialSet, MeshError};
use crate::MU_0;

/// Relative scale of the regularising mass term: ε is this factor times the
/// mean diagonal of the permeability-weighted curl-curl operator.
pub const DEFAULT_EPSILON_SCALE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum TransmissionError {
    #[error("angular frequency must be positive and finite, got {0}")]
    BadFrequency(f64),
    #[error("regularisation parameter must be positive and finite, got {0}")]
    BadEpsilon(f64),
    #[error("object size alpha must be positive and finite, got {0} m")]
    BadAlpha(f64),
    #[error("background solution has {got} dofs but the space has {expected}")]
    SpaceMismatch { expected: usize, got: usize },
    #[error("need one material per mesh region ({expected}), got {got}")]
    MaterialCount { expected: usize, got: usize },
    #[error("direction {direction} solve at omega = {omega:e} rad/s failed: {source}")]
    Solve {
        omega: f64,
        direction: usize,
        source: FemError,
    },
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// The three coordinate axes, indexable by direction.
pub const AXES: [Point; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// The driving field of direction `i`: ξ ↦ e_i × ξ.
pub fn source_field(direction: usize) -> impl Fn(Point) -> Point {
    let axis = AXES[direction];
    move |x| geom::cross(axis, x)
}

/// Inverse-permeability weight: 1/μ_r on object regions, 1 elsewhere.
fn permeability_weights(materials: &[Material]) -> Result<RegionWeights, FemError> {
    RegionWeights::from_materials(materials, |m| if m.is_object { 1.0 / m.mu_r } else { 1.0 })
}

/// Unit weight on the non-conducting complement of the object, zero on it.
fn complement_weights(materials: &[Material]) -> Result<RegionWeights, FemError> {
    RegionWeights::from_materials(materials, |m| if m.is_object { 0.0 } else { 1.0 })
}

/// Conduction weight α²μ₀σ_* on object regions, zero elsewhere.
fn conduction_weights(materials: &[Material], alpha: f64) -> Result<RegionWeights, FemError> {
    RegionWeights::from_materials(materials, |m| {
        if m.is_object {
            alpha * alpha * MU_0 * m.sigma_star
        } else {
            0.0
        }
    })
}

fn check_materials(space: &EdgeSpace, materials: &[Material]) -> Result<(), TransmissionError> {
    let expected = space.mesh().region_names().len();
    if materials.len() != expected {
        return Err(TransmissionError::MaterialCount { expected, got: materials.len() });
    }
    Ok(())
}

fn check_epsilon(epsilon: f64) -> Result<(), TransmissionError> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(TransmissionError::BadEpsilon(epsilon));
    }
    Ok(())
}

/// A regularisation scale matched to the operator: `DEFAULT_EPSILON_SCALE`
/// times the mean diagonal of the permeability-weighted curl-curl matrix on
/// the free dofs.
pub fn suggest_epsilon(
    space: &EdgeSpace,
    materials: &[Material],
) -> Result<f64, TransmissionError> {
    check_materials(space, materials)?;
    let curl = space.apply_dirichlet_matrix(&assemble_curlcurl(
        space,
        &permeability_weights(materials)?,
    ));
    if curl.n() == 0 {
        return Err(FemError::Dimension("space has no free dofs".into()).into());
    }
    Ok(DEFAULT_EPSILON_SCALE * curl.diagonal_mean())
}

/// Real background solutions: one free-dof coefficient vector per driving
/// direction, each the edge-space part of the full background potential after
/// the analytic e_i × ξ part is split off. Frequency independent.
#[derive(Debug, Clone, PartialEq)]
pub struct Theta0Solution {
    solutions: [Vec<f64>; 3],
}

impl Theta0Solution {
    /// Coefficients for driving direction `i` ∈ {0, 1, 2}.
    pub fn direction(&self, i: usize) -> &[f64] {
        &self.solutions[i]
    }

    pub fn n_dof(&self) -> usize {
        self.solutions[0].len()
    }
}

/// Solves the background problem (curl-curl with inverse permeability plus
/// ε·mass over the whole domain) for the three driving directions.
///
/// The right side vanishes when μ_r = 1 on every object region, in which case
/// the exact zero solutions are returned without factorising.
pub fn solve_theta0(
    space: &EdgeSpace,
    materials: &[Material],
    epsilon: f64,
    tol: f64,
) -> Result<Theta0Solution, TransmissionError> {
    check_materials(space, materials)?;
    check_epsilon(epsilon)?;
    let rhs: [Vec<f64>; 3] =
        std::array::from_fn(|i| assemble_theta0_rhs(space, i, materials));
    if rhs.iter().all(|r| r.iter().all(|&v| v == 0.0)) {
        let n = space.n_dof();
        return Ok(Theta0Solution { solutions: std::array::from_fn(|_| vec![0.0; n]) });
    }
    let curl = space.apply_dirichlet_matrix(&assemble_curlcurl(
        space,
        &permeability_weights(materials)?,
    ));
    let mass = space.apply_dirichlet_matrix(&assemble_mass(
        space,
        &RegionWeights::uniform(space.mesh(), 1.0),
    ));
    let system = curl.add_scaled(&mass, epsilon);
    let factor = CholeskyFactor::new(&system)?;
    let mut solutions: [Vec<f64>; 3] = Default::default();
    for i in 0..3 {
        solutions[i] = factor.solve_checked(&system, &rhs[i], tol).map_err(|source| {
            TransmissionError::Solve { omega: 0.0, direction: i, source }
        })?;
    }
    Ok(Theta0Solution { solutions })
}

/// The conduction problem in affine form, A(ω) = A₀ + ω·A₁ and r(ω) = ω·r¹,
/// on the free dofs of one edge space.
///
/// A₀ is the real curl-curl operator with inverse-permeability weight plus
/// the ε·mass regularisation over the non-conducting complement. A₁ is −i
/// times a real conduction mass matrix weighted by α²μ₀σ_* per region. Each
/// r¹ vector is i times a real source vector combining the mass action on the
/// background solution with the exact moments of the analytic e_i × ξ part.
#[derive(Debug, Clone)]
pub struct AffineSystem {
    curl: SparseMatrix,
    a0: SparseMatrix,
    mass_sigma: SparseMatrix,
    source: [Vec<f64>; 3],
    field_moments: [Vec<f64>; 3],
    source_gram: [[f64; 3]; 3],
    epsilon: f64,
    alpha: f64,
}

impl AffineSystem {
    pub fn n(&self) -> usize {
        self.a0.n()
    }

    /// The curl-curl part of A₀ alone, without the ε regularisation.
    pub fn curl(&self) -> &SparseMatrix {
        &self.curl
    }

    /// The frequency-independent real part A₀.
    pub fn a0(&self) -> &SparseMatrix {
        &self.a0
    }

    /// The real conduction mass matrix; A₁ = −i times this.
    pub fn mass_sigma(&self) -> &SparseMatrix {
        &self.mass_sigma
    }

    /// A₁ as an explicit complex matrix (purely imaginary entries).
    pub fn a1_complex(&self) -> SparseComplexMatrix {
        complex_from_parts(&self.a0.scaled(0.0), &self.mass_sigma.scaled(-1.0))
    }

    /// The real vector b⁽ⁱ⁾ with r¹⁽ⁱ⁾ = i·b⁽ⁱ⁾: the conduction mass acting
    /// on the background solution plus the analytic-field moments.
    pub fn source(&self, i: usize) -> &[f64] {
        &self.source[i]
    }

    /// Moments of the analytic driving field against the edge basis,
    /// ∫ α²μ₀σ_* N_k·(e_i × ξ), on the free dofs.
    pub fn field_moments(&self, i: usize) -> &[f64] {
        &self.field_moments[i]
    }

    /// r¹⁽ⁱ⁾, the frequency-linear coefficient of the right side.
    pub fn r1(&self, i: usize) -> Vec<Complex64> {
        self.source[i].iter().map(|&v| Complex64::new(0.0, v)).collect()
    }

    /// Pairwise exact integrals ∫ α²μ₀σ_* (e_i × ξ)·(e_j × ξ) over the
    /// conducting regions.
    pub fn source_gram(&self) -> &[[f64; 3]; 3] {
        &self.source_gram
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Object size α in metres.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// True when every source vector is identically zero (for instance with
    /// zero conductivity), so all conduction solutions vanish.
    pub fn source_free(&self) -> bool {
        self.source.iter().all(|b| b.iter().all(|&v| v == 0.0))
    }

    /// The assembled complex system A(ω) = A₀ − iω·(conduction mass).
    pub fn system_at(&self, omega: f64) -> SparseComplexMatrix {
        complex_from_parts(&self.a0, &self.mass_sigma.scaled(-omega))
    }

    /// The right side ω·r¹⁽ⁱ⁾ for direction `i`.
    pub fn rhs_at(&self, i: usize, omega: f64) -> Vec<Complex64> {
        self.source[i].iter().map(|&v| Complex64::new(0.0, omega * v)).collect()
    }
}

/// Builds the affine conduction system from a computed background solution.
pub fn build_affine_system(
    space: &EdgeSpace,
    materials: &[Material],
    theta0: &Theta0Solution,
    alpha: f64,
    epsilon: f64,
) -> Result<AffineSystem, TransmissionError> {
    check_materials(space, materials)?;
    check_epsilon(epsilon)?;
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(TransmissionError::BadAlpha(alpha));
    }
    if theta0.n_dof() != space.n_dof() {
        return Err(TransmissionError::SpaceMismatch {
            expected: space.n_dof(),
            got: theta0.n_dof(),
        });
    }
    let curl = space.apply_dirichlet_matrix(&assemble_curlcurl(
        space,
        &permeability_weights(materials)?,
    ));
    let mass_complement = space.apply_dirichlet_matrix(&assemble_mass(
        space,
        &complement_weights(materials)?,
    ));
    let a0 = curl.add_scaled(&mass_complement, epsilon);
    let sigma_weights = conduction_weights(materials, alpha)?;
    let mass_sigma =
        space.apply_dirichlet_matrix(&assemble_mass(space, &sigma_weights));
    let field_moments: [Vec<f64>; 3] =
        std::array::from_fn(|i| assemble_field_load(space, &sigma_weights, source_field(i)));
    let source: [Vec<f64>; 3] = std::array::from_fn(|i| {
        let mut b = mass_sigma.mul_vec(theta0.direction(i));
        for (bk, ck) in b.iter_mut().zip(&field_moments[i]) {
            *bk += ck;
        }
        b
    });
    let mut source_gram = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let s = integrate_weighted_dot(
                space.mesh(),
                &sigma_weights,
                source_field(i),
                source_field(j),
            );
            source_gram[i][j] = s;
            source_gram[j][i] = s;
        }
    }
    Ok(AffineSystem {
        curl,
        a0,
        mass_sigma,
        source,
        field_moments,
        source_gram,
        epsilon,
        alpha,
    })
}

/// Solves the conduction problem at one frequency for all three directions,
/// enforcing the relative-residual contract per direction.
///
/// A source-free system short-circuits to exact zero solutions without
/// factorising.
pub fn solve_theta1_full(
    affine: &AffineSystem,
    omega: f64,
    tol: f64,
) -> Result<[Vec<Complex64>; 3], TransmissionError> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(TransmissionError::BadFrequency(omega));
    }
    if affine.source_free() {
        let zero = vec![Complex64::new(0.0, 0.0); affine.n()];
        return Ok([zero.clone(), zero.clone(), zero]);
    }
    let system = affine.system_at(omega);
    let solver = FrequencySolver::new(system.pattern().clone())?;
    let factor = solver.factor(&system)?;
    solve_directions(affine, &system, &factor, omega, tol)
}

fn solve_directions(
    affine: &AffineSystem,
    system: &SparseComplexMatrix,
    factor: &ComplexLuFactor,
    omega: f64,
    tol: f64,
) -> Result<[Vec<Complex64>; 3], TransmissionError> {
    let mut out: [Vec<Complex64>; 3] = Default::default();
    for i in 0..3 {
        out[i] = factor
            .solve_checked(system, &affine.rhs_at(i, omega), tol)
            .map_err(|source| TransmissionError::Solve { omega, direction: i, source })?;
    }
    Ok(out)
}

/// A fully assembled full-order model: space, resolved materials, background
/// solutions, affine conduction system, the unit-weight mass matrix used as
/// the error metric, and a reusable symbolic factorisation for the frequency
/// solves.
pub struct FomModel {
    space: Arc<EdgeSpace>,
    materials: Vec<Material>,
    theta0: Theta0Solution,
    affine: AffineSystem,
    mass_unit: SparseMatrix,
    solver: FrequencySolver,
    tol: f64,
}

impl FomModel {
    /// Assembles the model with the regularisation from [`suggest_epsilon`].
    pub fn build(
        space: Arc<EdgeSpace>,
        materials: &MaterialSet,
        alpha: f64,
        tol: f64,
    ) -> Result<Self, TransmissionError> {
        let resolved = materials.resolve(space.mesh())?;
        let epsilon = suggest_epsilon(&space, &resolved)?;
        Self::build_with_epsilon(space, resolved, alpha, epsilon, tol)
    }

    /// Assembles the model with an explicit ε (shared by the background and
    /// conduction problems).
    pub fn build_with_epsilon(
        space: Arc<EdgeSpace>,
        materials: Vec<Material>,
        alpha: f64,
        epsilon: f64,
        tol: f64,
    ) -> Result<Self, TransmissionError> {
        let theta0 = solve_theta0(&space, &materials, epsilon, tol)?;
        let affine = build_affine_system(&space, &materials, &theta0, alpha, epsilon)?;
        let mass_unit = space.apply_dirichlet_matrix(&assemble_mass(
            &space,
            &RegionWeights::uniform(space.mesh(), 1.0),
        ));
        let solver = FrequencySolver::new(space.pattern_free().clone())?;
        Ok(FomModel { space, materials, theta0, affine, mass_unit, solver, tol })
    }

    pub fn space(&self) -> &Arc<EdgeSpace> {
        &self.space
    }

    /// Materials resolved per mesh region id.
    pub fn materials(&self) -> &[Material] {
        &self.materials
    }

    pub fn alpha(&self) -> f64 {
        self.affine.alpha
    }

    pub fn epsilon(&self) -> f64 {
        self.affine.epsilon
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn n_dof(&self) -> usize {
        self.space.n_dof()
    }

    pub fn theta0(&self) -> &Theta0Solution {
        &self.theta0
    }

    pub fn affine(&self) -> &AffineSystem {
        &self.affine
    }

    /// Unit-weight mass matrix on the free dofs (the error metric).
    pub fn mass_unit(&self) -> &SparseMatrix {
        &self.mass_unit
    }

    /// Assembles and numerically factorises A(ω), reusing the symbolic
    /// analysis across frequencies.
    pub fn factor_at(
        &self,
        omega: f64,
    ) -> Result<(SparseComplexMatrix, ComplexLuFactor), TransmissionError> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(TransmissionError::BadFrequency(omega));
        }
        let system = self.affine.system_at(omega);
        let factor = self.solver.factor(&system)?;
        Ok((system, factor))
    }

    /// Full-order solutions for the three directions at one frequency.
    pub fn solve_at(&self, omega: f64) -> Result<[Vec<Complex64>; 3], TransmissionError> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(TransmissionError::BadFrequency(omega));
        }
        if self.affine.source_free() {
            let zero = vec![Complex64::new(0.0, 0.0); self.affine.n()];
            return Ok([zero.clone(), zero.clone(), zero]);
        }
        let (system, factor) = self.factor_at(omega)?;
        solve_directions(&self.affine, &system, &factor, omega, self.tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::DEFAULT_SOLVE_TOL;
    use crate::mesh::{generate_box_mesh, tag_regions, Shape, TaggedShape};
    use rand::{Rng, SeedableRng};

    fn sphere_fixture(mu_r: f64, sigma: f64) -> (Arc<EdgeSpace>, Vec<Material>) {
        let base = generate_box_mesh(2.0, 3).unwrap();
        let shapes = [TaggedShape::new(
            Shape::Sphere { center: [0.0; 3], radius: 1.0 },
            "object",
        )];
        let tagged = tag_regions(&base, &shapes).unwrap();
        assert!(tagged.object_volume() > 0.0);
        let set = MaterialSet::new(vec![Material::new("object", mu_r, sigma, true)]).unwrap();
        let materials = set.resolve(&tagged).unwrap();
        (Arc::new(EdgeSpace::new(Arc::new(tagged))), materials)
    }

    /// Box mesh entirely inside the object: no exterior tets at all.
    fn solid_cube_fixture(mu_r: f64, sigma: f64) -> (Arc<EdgeSpace>, Vec<Material>) {
        let base = generate_box_mesh(2.0, 2).unwrap();
        let shapes = [TaggedShape::new(
            Shape::Cuboid { min: [-3.0; 3], max: [3.0; 3] },
            "object",
        )];
        let tagged = tag_regions(&base, &shapes).unwrap();
        assert_eq!(tagged.object_volume(), tagged.total_volume());
        let set = MaterialSet::new(vec![Material::new("object", mu_r, sigma, true)]).unwrap();
        let materials = set.resolve(&tagged).unwrap();
        (Arc::new(EdgeSpace::new(Arc::new(tagged))), materials)
    }

    #[test]
    fn theta0_vanishes_for_unit_permeability() {
        let (space, materials) = sphere_fixture(1.0, 5.96e6);
        let theta0 = solve_theta0(&space, &materials, 1e-8, DEFAULT_SOLVE_TOL).unwrap();
        for i in 0..3 {
            assert!(theta0.direction(i).iter().all(|&v| v == 0.0));
            assert_eq!(theta0.direction(i).len(), space.n_dof());
        }
    }

    #[test]
    fn theta0_satisfies_its_system_and_is_deterministic() {
        let (space, materials) = sphere_fixture(1.5, 5.96e6);
        let epsilon = suggest_epsilon(&space, &materials).unwrap();
        let theta0 = solve_theta0(&space, &materials, epsilon, DEFAULT_SOLVE_TOL).unwrap();

        let curl = space.apply_dirichlet_matrix(&assemble_curlcurl(
            &space,
            &permeability_weights(&materials).unwrap(),
        ));
        let mass = space.apply_dirichlet_matrix(&assemble_mass(
            &space,
            &RegionWeights::uniform(space.mesh(), 1.0),
        ));
        let system = curl.add_scaled(&mass, epsilon);
        for i in 0..3 {
            let rhs = assemble_theta0_rhs(&space, i, &materials);
            let rhs_norm: f64 = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(rhs_norm > 0.0);
            let ax = system.mul_vec(theta0.direction(i));
            let res: f64 = ax
                .iter()
                .zip(&rhs)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(res / rhs_norm <= DEFAULT_SOLVE_TOL);

            // Boundary edges stay zero after expansion to all edges.
            let full = space.expand_solution(theta0.direction(i));
            for (e, &flagged) in space.dirichlet_flags().iter().enumerate() {
                if flagged {
                    assert_eq!(full[e], 0.0);
                }
            }
        }

        let again = solve_theta0(&space, &materials, epsilon, DEFAULT_SOLVE_TOL).unwrap();
        assert_eq!(theta0, again);
    }

    #[test]
    fn zero_conductivity_gives_source_free_system_and_zero_solutions() {
        let (space, materials) = sphere_fixture(1.5, 0.0);
        let epsilon = suggest_epsilon(&space, &materials).unwrap();
        let theta0 = solve_theta0(&space, &materials, epsilon, DEFAULT_SOLVE_TOL).unwrap();
        let affine =
            build_affine_system(&space, &materials, &theta0, 0.01, epsilon).unwrap();
        assert!(affine.mass_sigma().values().iter().all(|&v| v == 0.0));
        assert!(affine.source_free());
        for i in 0..3 {
            assert!(affine.r1(i).iter().all(|z| z.re == 0.0 && z.im == 0.0));
        }
        let q = solve_theta1_full(&affine, 1e4, DEFAULT_SOLVE_TOL).unwrap();
        for qi in &q {
            assert!(qi.iter().all(|z| z.re == 0.0 && z.im == 0.0));
        }
    }

    #[test]
    fn affine_decomposition_matches_monolithic_assembly() {
        let (space, materials) = sphere_fixture(1.5, 5.96e6);
        let epsilon = suggest_epsilon(&space, &materials).unwrap();
        let theta0 = solve_theta0(&space, &materials, epsilon, DEFAULT_SOLVE_TOL).unwrap();
        let affine =
            build_affine_system(&space, &materials, &theta0, 0.01, epsilon).unwrap();

        // Independent monolithic route: dense assembly of the same operator,
        // entry by entry, at each frequency.
        let curl = space
            .apply_dirichlet_matrix(&assemble_curlcurl(
                &space,
                &permeability_weights(&materials).unwrap(),
            ))
            .to_dense();
        let mass_c = space
            .apply_dirichlet_matrix(&assemble_mass(
                &space,
                &complement_weights(&materials).unwrap(),
            ))
            .to_dense();
        let mass_s = space
            .apply_dirichlet_matrix(&assemble_mass(
                &space,
                &conduction_weights(&materials, 0.01).unwrap(),
            ))
            .to_dense();

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(20260823);
        for _ in 0..5 {
            let omega = 10f64.powf(rng.random_range(2.0..8.0));
            let system = affine.system_at(omega);
            let n = system.n();
            let mut max_abs = 0.0f64;
            let mut max_diff = 0.0f64;
            for r in 0..n {
                for c in 0..n {
                    let mono = Complex64::new(
                        curl[(r, c)] + epsilon * mass_c[(r, c)],
                        -omega * mass_s[(r, c)],
                    );
                    let got = system.value_at(r as u32, c as u32);
                    max_abs = max_abs.max(mono.norm());
                    max_diff = max_diff.max((got - mono).norm());
                }
            }
            assert!(max_diff <= 1e-12 * max_abs, "omega {omega:e}: {max_diff:e}");
        }
    }

    #[test]
    fn assembled_system_is_complex_symmetric() {
        let (space, materials) = sphere_fixture(2.0, 5.96e6);
        let epsilon = suggest_epsilon(&space, &materials).unwrap();
        let theta0 = solve_theta0(&space, &materials, epsilon, DEFAULT_SOLVE_TOL).unwrap();
        let affine =
            build_affine_system(&space, &materials, &theta0, 0.01, epsilon).unwrap();
        let system = affine.system_at(1e4);
        let pattern = system.pattern().clone();
        let mut scale = 0.0f64;
        for v in system.values() {
            scale = scale.max(v.norm());
        }
        for col in 0..pattern.n() {
            for k in pattern.ptr()[col]..pattern.ptr()[col + 1] {
                let row = pattern.idx()[k];
                let a = system.values()[k];
                let b = system.value_at(col as u32, row as u32);
                assert!((a - b).norm() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn doubling_conductivity_doubles_conduction_terms_exactly() {
        let (space, materials) = sphere_fixture(1.5, 5.96e6);
        let epsilon = suggest_epsilon(&space, &materials).unwrap();
        let theta0 = solve_theta0(&space, &materials, epsilon, DEFAULT_SOLVE_TOL).unwrap();
        let single =
            build_affine_system(&space, &materials, &theta0, 0.01, epsilon).unwrap();

        let doubled_set = MaterialSet::new(vec![Material::new(
            "object",
            1.5,
            2.0 * 5.96e6,
            true,
        )])
        .unwrap();
        let doubled_materials = doubled_set.resolve(space.mesh()).unwrap();
        // The background problem does not involve σ, so theta0 carries over.
        let double =
            build_affine_system(&space, &doubled_materials, &theta0, 0.01, epsilon).unwrap();

        for (a, b) in single.mass_sigma().values().iter().zip(double.mass_sigma().values()) {
            assert_eq!(2.0 * a, *b);
        }
        for i in 0..3 {
            for (a, b) in single.source(i).iter().zip(double.source(i)) {
                assert_eq!(2.0 * a, *b);
            }
            for (a, b) in single.r1(i).iter().zip(double.r1(i)) {
                assert_eq!(2.0 * a.im, b.im);
                assert_eq!(b.re, 0.0);
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(2.0 * single.source_gram()[i][j], double.source_gram()[i][j]);
            }
        }
        // A₀ is untouched by conductivity.
        assert_eq!(single.a0().values(), double.a0().values());
    }

    #[test]
    fn source_gram_matches_cube_moments() {
        let alpha = 0.01;
        let sigma = 2.5e6;
        let (space, materials) = solid_cube_fixture(1.5, sigma);
        let epsilon = 1e-9;
        let theta0 = solve_theta0(&space, &materials, epsilon, DEFAULT_SOLVE_TOL).unwrap();
        let affine =
            build_affine_system(&space, &materials, &theta0, alpha, epsilon).unwrap();

        // ∫_cube (e_1×ξ)·(e_1×ξ) = ∫ y² + z² over [-2,2]³ = 2·256/3.
        let factor = alpha * alpha * MU_0 * sigma;
        let expected = factor * 512.0 / 3.0;
        let g = affine.source_gram();
        for i in 0..3 {
            let rel = (g[i][i] - expected).abs() / expected;
            assert!(rel <= 1e-12, "diagonal {i}: {rel:e}");
            for j in 0..3 {
                if i != j {
                    assert!(g[i][j].abs() <= 1e-12 * expected);
                }
            }
        }

        // With no non-conducting complement the ε mass has nothing to act on.
        assert_eq!(affine.a0().values(), affine.curl().values());
    }

    #[test]
    fn conduction_solve_meets_residual_contract() {
        let (space, materials) = sphere_fixture(1.5, 5.96e6);
        let epsilon = suggest_epsilon(&space, &materials).unwrap();
        let theta0 = solve_theta0(&space, &materials, epsilon, DEFAULT_SOLVE_TOL).unwrap();
        let affine =
            build_affine_system(&space, &materials, &theta0, 0.01, epsilon).unwrap();
        let omega = 1e2;
        let q = solve_theta1_full(&affine, omega, DEFAULT_SOLVE_TOL).unwrap();
        let system = affine.system_at(omega);
        for i in 0..3 {
            let rhs = affine.rhs_at(i, omega);
            let rhs_norm: f64 = rhs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            assert!(rhs_norm > 0.0);
            let ax = system.mul_vec(&q[i]);
            let res: f64 = ax
                .iter()
                .zip(&rhs)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(res / rhs_norm <= DEFAULT_SOLVE_TOL);
            assert!(q[i].iter().any(|z| z.norm() > 0.0));

            let full = space.expand_solution(&q[i]);
            for (e, &flagged) in space.dirichlet_flags().iter().enumerate() {
                if flagged {
                    assert_eq!(full[e], Complex64::new(0.0, 0.0));
                }
            }
        }

        let again = solve_theta1_full(&affine, omega, DEFAULT_SOLVE_TOL).unwrap();
        assert_eq!(q, again);
    }

    #[test]
    fn rejects_bad_frequency_and_mismatched_background() {
        let (space, materials) = sphere_fixture(1.5, 5.96e6);
        let epsilon = suggest_epsilon(&space, &materials).unwrap();
        let theta0 = solve_theta0(&space, &materials, epsilon, DEFAULT_SOLVE_TOL).unwrap();
        let affine =
            build_affine_system(&space, &materials, &theta0, 0.01, epsilon).unwrap();
        assert!(matches!(
            solve_theta1_full(&affine, 0.0, DEFAULT_SOLVE_TOL),
            Err(TransmissionError::BadFrequency(_))
        ));
        assert!(matches!(
            solve_theta1_full(&affine, f64::NAN, DEFAULT_SOLVE_TOL),
            Err(TransmissionError::BadFrequency(_))
        ));

        let small = generate_box_mesh(2.0, 2).unwrap();
        let shapes = [TaggedShape::new(
            Shape::Sphere { center: [0.0; 3], radius: 1.5 },
            "object",
        )];
        let small_tagged = tag_regions(&small, &shapes).unwrap();
        let small_space = Arc::new(EdgeSpace::new(Arc::new(small_tagged)));
        let small_materials = MaterialSet::new(vec![Material::new("object", 1.5, 1e6, true)])
            .unwrap()
            .resolve(small_space.mesh())
            .unwrap();
        let small_theta0 =
            solve_theta0(&small_space, &small_materials, epsilon, DEFAULT_SOLVE_TOL).unwrap();
        assert!(matches!(
            build_affine_system(&space, &materials, &small_theta0, 0.01, epsilon),
            Err(TransmissionError::SpaceMismatch { .. })
        ));

        assert!(matches!(
            build_affine_system(&space, &materials, &theta0, -1.0, epsilon),
            Err(TransmissionError::BadAlpha(_))
        ));
        assert!(matches!(
            solve_theta0(&space, &materials, 0.0, DEFAULT_SOLVE_TOL),
            Err(TransmissionError::BadEpsilon(_))
        ));
    }

    #[test]
    fn model_bundle_matches_free_function_solves() {
        let (space, materials) = sphere_fixture(1.5, 5.96e6);
        let set = MaterialSet::new(vec![Material::new("object", 1.5, 5.96e6, true)]).unwrap();
        let model = FomModel::build(space.clone(), &set, 0.01, DEFAULT_SOLVE_TOL).unwrap();
        assert_eq!(model.n_dof(), space.n_dof());
        assert_eq!(model.materials().len(), materials.len());
        assert!(model.epsilon() > 0.0);

        let omega = 1e3;
        let from_model = model.solve_at(omega).unwrap();
        let direct =
            solve_theta1_full(model.affine(), omega, DEFAULT_SOLVE_TOL).unwrap();
        assert_eq!(from_model, direct);

        // The unit mass metric is symmetric positive definite in practice:
        // x^T M x > 0 for a few deterministic non-zero vectors.
        let n = model.n_dof();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..3 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert!(model.mass_unit().bilinear(&x, &x) > 0.0);
        }
    }
}
