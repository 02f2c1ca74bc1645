//! Snapshot-based model reduction for the frequency sweep: offline full-order
//! solves at sampled frequencies, a truncated singular value decomposition of
//! the snapshot matrices (via the small Gram matrix), Galerkin projection of
//! the affine system onto the retained modes, and fast online solves that
//! evaluate the output tensors from precomputed contractions only.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix3};
use num_complex::Complex64;
use thiserror::Error;

use crate::fem::SparseMatrix;
use crate::mpt::{max_asymmetry, symmetrized, tensor_eigenvalues, MptSample};
use crate::transmission::{FomModel, TransmissionError};

#[derive(Debug, Error)]
pub enum PodError {
    #[error("frequency range must satisfy 0 < min < max with finite values, got [{min:e}, {max:e}]")]
    BadRange { min: f64, max: f64 },
    #[error("need at least one sample frequency")]
    EmptySamples,
    #[error("sample frequencies must be strictly increasing and positive")]
    UnsortedFrequencies,
    #[error("snapshot matrix is zero; nothing to compress")]
    ZeroMatrix,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("reduced system is singular at omega = {omega:e} rad/s (condition estimate {kappa:e})")]
    Singular { omega: f64, kappa: f64 },
    #[error(transparent)]
    Transmission(#[from] TransmissionError),
}

/// Sample-point layout of a frequency grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Lin,
    Log,
}

impl std::fmt::Display for Spacing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Spacing::Lin => "lin",
            Spacing::Log => "log",
        })
    }
}

impl std::str::FromStr for Spacing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lin" => Ok(Spacing::Lin),
            "log" => Ok(Spacing::Log),
            other => Err(format!("unknown spacing '{other}' (expected 'lin' or 'log')")),
        }
    }
}

/// Inclusive frequency grid with `n` points, uniform in ω or in log₁₀ ω.
/// `n = 1` returns the lower endpoint alone.
pub fn frequency_samples(
    omega_min: f64,
    omega_max: f64,
    n: usize,
    spacing: Spacing,
) -> Result<Vec<f64>, PodError> {
    if !(omega_min > 0.0) || !(omega_max > omega_min) || !omega_max.is_finite() {
        return Err(PodError::BadRange { min: omega_min, max: omega_max });
    }
    if n == 0 {
        return Err(PodError::EmptySamples);
    }
    if n == 1 {
        return Ok(vec![omega_min]);
    }
    let last = (n - 1) as f64;
    let out = (0..n)
        .map(|k| {
            if k == 0 {
                omega_min
            } else if k == n - 1 {
                omega_max
            } else {
                match spacing {
                    Spacing::Lin => {
                        omega_min + (omega_max - omega_min) * k as f64 / last
                    }
                    Spacing::Log => {
                        let l0 = omega_min.log10();
                        let l1 = omega_max.log10();
                        10f64.powf(l0 + (l1 - l0) * k as f64 / last)
                    }
                }
            }
        })
        .collect();
    Ok(out)
}

/// Full-order solutions collected at increasing frequencies: one column per
/// frequency and direction, plus the wall time the offline solves took.
pub struct SnapshotSet {
    frequencies: Vec<f64>,
    columns: [DMatrix<Complex64>; 3],
    spacing: Spacing,
    build_seconds: f64,
}

impl SnapshotSet {
    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Snapshot matrix of direction `i`: one column per frequency.
    pub fn direction(&self, i: usize) -> &DMatrix<Complex64> {
        &self.columns[i]
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    /// Wall time of the offline full-order solves, in seconds.
    pub fn build_seconds(&self) -> f64 {
        self.build_seconds
    }
}

/// Solves the full-order problem at each sample frequency in order and
/// collects the per-direction snapshot matrices. Frequencies must be strictly
/// increasing; solver failures carry the offending frequency.
pub fn build_snapshots(
    model: &FomModel,
    samples: &[f64],
    spacing: Spacing,
) -> Result<SnapshotSet, PodError> {
    if samples.is_empty() {
        return Err(PodError::EmptySamples);
    }
    if samples[0] <= 0.0 || samples.windows(2).any(|w| w[0] >= w[1]) {
        return Err(PodError::UnsortedFrequencies);
    }
    let start = Instant::now();
    let n_dof = model.n_dof();
    let mut per_direction: [Vec<DVector<Complex64>>; 3] = Default::default();
    for &omega in samples {
        let q = model.solve_at(omega)?;
        for (i, qi) in q.into_iter().enumerate() {
            per_direction[i].push(DVector::from_vec(qi));
        }
    }
    let columns = per_direction.map(|cols| {
        DMatrix::from_fn(n_dof, samples.len(), |r, c| cols[c][r])
    });
    Ok(SnapshotSet {
        frequencies: samples.to_vec(),
        columns,
        spacing,
        build_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Truncated left singular basis of one snapshot matrix.
///
/// `sigma` keeps the full singular spectrum (descending); the first `m`
/// values belong to the retained modes. The basis columns are
/// re-orthonormalised, so their Gram matrix is the identity to roundoff.
#[derive(Debug, Clone)]
pub struct DirectionBasis {
    u: DMatrix<Complex64>,
    v: DMatrix<Complex64>,
    sigma: Vec<f64>,
    m: usize,
    tol: f64,
}

impl DirectionBasis {
    /// Orthonormal basis, one column per retained mode (N_d × M).
    pub fn u(&self) -> &DMatrix<Complex64> {
        &self.u
    }

    /// Right singular vectors of the retained modes (N × M).
    pub fn v(&self) -> &DMatrix<Complex64> {
        &self.v
    }

    /// All singular values, descending.
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Number of retained modes M.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Truncation tolerance the basis was built with.
    pub fn tol(&self) -> f64 {
        self.tol
    }
}

/// Rank-truncated singular value decomposition via the N×N Gram matrix.
///
/// Keeps M = #{i : σ_i/σ₁ > tol} modes (never fewer than one); the basis is
/// recovered as D·V·Σ⁻¹ and re-orthonormalised by two Gram–Schmidt passes.
/// With tol = 0 every numerically non-zero mode is kept, so the truncation
/// residual stays at roundoff.
pub fn truncated_svd(d: &DMatrix<Complex64>, tol: f64) -> Result<DirectionBasis, PodError> {
    let n = d.ncols();
    let gram = d.ad_mul(d);
    let eig = nalgebra::SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let sigma: Vec<f64> = order
        .iter()
        .map(|&k| eig.eigenvalues[k].max(0.0).sqrt())
        .collect();
    if !(sigma[0] > 0.0) {
        return Err(PodError::ZeroMatrix);
    }
    let m = sigma
        .iter()
        .filter(|&&s| s / sigma[0] > tol && s > 0.0)
        .count()
        .max(1);
    let v = DMatrix::from_fn(n, m, |r, c| eig.eigenvectors[(r, order[c])]);
    let mut u = d * &v;
    for c in 0..m {
        let inv = Complex64::new(1.0 / sigma[c], 0.0);
        for x in u.column_mut(c).iter_mut() {
            *x *= inv;
        }
    }
    // Two modified Gram–Schmidt passes restore orthonormality lost to the
    // Gram route's squared conditioning.
    for _ in 0..2 {
        for c in 0..m {
            for p in 0..c {
                let coeff = u.column(p).dotc(&u.column(c));
                let prev = u.column(p).clone_owned();
                u.column_mut(c).axpy(-coeff, &prev, Complex64::new(1.0, 0.0));
            }
            let norm = u.column(c).norm();
            if norm > 0.0 {
                let inv = Complex64::new(1.0 / norm, 0.0);
                for x in u.column_mut(c).iter_mut() {
                    *x *= inv;
                }
            }
        }
    }
    Ok(DirectionBasis { u, v, sigma, m, tol })
}

/// Per-direction truncated bases for all three snapshot matrices.
pub struct TsvdBasis {
    directions: [DirectionBasis; 3],
}

impl TsvdBasis {
    pub fn direction(&self, i: usize) -> &DirectionBasis {
        &self.directions[i]
    }
}

/// Truncates all three snapshot matrices with one tolerance.
pub fn truncate_snapshots(set: &SnapshotSet, tol: f64) -> Result<TsvdBasis, PodError> {
    let d0 = truncated_svd(set.direction(0), tol)?;
    let d1 = truncated_svd(set.direction(1), tol)?;
    let d2 = truncated_svd(set.direction(2), tol)?;
    Ok(TsvdBasis { directions: [d0, d1, d2] })
}

fn sparse_mul_dense(m: &SparseMatrix, x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for c in 0..x.ncols() {
        let col: Vec<Complex64> = x.column(c).iter().copied().collect();
        let y = m.mul_complex(&col);
        for (r, v) in y.into_iter().enumerate() {
            out[(r, c)] = v;
        }
    }
    out
}

/// The Galerkin-projected affine system together with every contraction the
/// online tensor evaluation needs; nothing here scales with the full dof
/// count.
pub struct ReducedSystem {
    a0: [DMatrix<Complex64>; 3],
    a1: [DMatrix<Complex64>; 3],
    r1: [DVector<Complex64>; 3],
    curl_red: [[DMatrix<Complex64>; 3]; 3],
    mass_red: [[DMatrix<Complex64>; 3]; 3],
    source_red: [[DVector<Complex64>; 3]; 3],
    background: Matrix3<f64>,
    n0: Matrix3<f64>,
    alpha: f64,
}

impl ReducedSystem {
    /// Retained mode count of direction `i`.
    pub fn m(&self, i: usize) -> usize {
        self.a0[i].nrows()
    }

    pub fn a0(&self, i: usize) -> &DMatrix<Complex64> {
        &self.a0[i]
    }

    pub fn a1(&self, i: usize) -> &DMatrix<Complex64> {
        &self.a1[i]
    }

    pub fn r1(&self, i: usize) -> &DVector<Complex64> {
        &self.r1[i]
    }

    pub fn n0(&self) -> &Matrix3<f64> {
        &self.n0
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// The reduced system matrix A₀ + ω·A₁ of direction `i`.
    pub fn system_at(&self, i: usize, omega: f64) -> DMatrix<Complex64> {
        &self.a0[i] + &self.a1[i] * Complex64::new(omega, 0.0)
    }

    /// The reduced right side ω·r¹ of direction `i`.
    pub fn rhs_at(&self, i: usize, omega: f64) -> DVector<Complex64> {
        &self.r1[i] * Complex64::new(omega, 0.0)
    }
}

/// Projects the affine system and the output contractions onto the retained
/// bases (conjugate-transpose Galerkin projection, separate basis per
/// direction).
pub fn project_affine(model: &FomModel, basis: &TsvdBasis) -> Result<ReducedSystem, PodError> {
    let n_dof = model.n_dof();
    for i in 0..3 {
        if basis.direction(i).u().nrows() != n_dof {
            return Err(PodError::Dimension(format!(
                "basis {i} has {} rows but the model has {} dofs",
                basis.direction(i).u().nrows(),
                n_dof
            )));
        }
    }
    let affine = model.affine();
    let u = |i: usize| basis.direction(i).u();

    let a0 = std::array::from_fn(|i| {
        let au = sparse_mul_dense(affine.a0(), u(i));
        u(i).ad_mul(&au)
    });
    let curl_u: [DMatrix<Complex64>; 3] =
        std::array::from_fn(|j| sparse_mul_dense(affine.curl(), u(j)));
    let mass_u: [DMatrix<Complex64>; 3] =
        std::array::from_fn(|j| sparse_mul_dense(affine.mass_sigma(), u(j)));
    let curl_red = std::array::from_fn(|i| {
        std::array::from_fn(|j| u(i).ad_mul(&curl_u[j]))
    });
    let mass_red: [[DMatrix<Complex64>; 3]; 3] = std::array::from_fn(|i| {
        std::array::from_fn(|j| u(i).ad_mul(&mass_u[j]))
    });
    let a1 = std::array::from_fn(|i| &mass_red[i][i] * Complex64::new(0.0, -1.0));
    let source_red: [[DVector<Complex64>; 3]; 3] = std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            let b = affine.source(j);
            DVector::from_fn(basis.direction(i).m(), |r, _| {
                (0..n_dof)
                    .map(|k| u(i)[(k, r)].conj() * b[k])
                    .sum::<Complex64>()
            })
        })
    });
    let r1 = std::array::from_fn(|i| &source_red[i][i] * Complex64::new(0.0, 1.0));
    let background = crate::mpt::background_gram(affine, model.theta0());
    let n0 = crate::mpt::compute_n0(
        model.space(),
        model.materials(),
        model.theta0(),
        affine.curl(),
        model.alpha(),
    );
    Ok(ReducedSystem {
        a0,
        a1,
        r1,
        curl_red,
        mass_red,
        source_red,
        background,
        n0,
        alpha: model.alpha(),
    })
}

/// One online evaluation: reduced coefficients per direction, the per-
/// direction condition estimates of the reduced matrices, and the assembled
/// output sample.
pub struct RomSolution {
    pub p: [DVector<Complex64>; 3],
    pub kappa: [f64; 3],
    pub sample: MptSample,
}

/// Condition estimate from the LU factor's diagonal magnitude spread.
fn diag_ratio(lu: &nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>) -> f64 {
    let upper = lu.u();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for k in 0..upper.nrows().min(upper.ncols()) {
        let v = upper[(k, k)].norm();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

fn solve_reduced(
    a: &DMatrix<Complex64>,
    b: &DVector<Complex64>,
    omega: f64,
) -> Result<(DVector<Complex64>, f64), PodError> {
    // Row equilibration keeps the LU pivots comparable across the frequency
    // range, where A₀ and ω·A₁ can differ by many orders of magnitude.
    let m = a.nrows();
    let mut scale = vec![1.0f64; m];
    for r in 0..m {
        let mx = (0..m).map(|c| a[(r, c)].norm()).fold(0.0f64, f64::max);
        if mx > 0.0 {
            scale[r] = 1.0 / mx;
        }
    }
    let scaled = DMatrix::from_fn(m, m, |r, c| a[(r, c)] * scale[r]);
    let lu = scaled.lu();
    let kappa = diag_ratio(&lu);
    let scaled_rhs = DVector::from_fn(m, |r, _| b[r] * scale[r]);
    let Some(mut x) = lu.solve(&scaled_rhs) else {
        return Err(PodError::Singular { omega, kappa });
    };
    // Two refinement steps against the unscaled system.
    for _ in 0..2 {
        let res = b - a * &x;
        let scaled_res = DVector::from_fn(m, |r, _| res[r] * scale[r]);
        match lu.solve(&scaled_res) {
            Some(dx) => x += dx,
            None => break,
        }
    }
    Ok((x, kappa))
}

/// Solves the reduced M×M systems at one frequency; returns the reduced
/// coefficients and the per-direction condition estimates without touching
/// the output contractions (so solve and output costs can be timed apart).
pub fn online_coordinates(
    reduced: &ReducedSystem,
    omega: f64,
) -> Result<([DVector<Complex64>; 3], [f64; 3]), PodError> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(PodError::Transmission(TransmissionError::BadFrequency(omega)));
    }
    let mut p: [DVector<Complex64>; 3] = Default::default();
    let mut kappa = [0.0f64; 3];
    for i in 0..3 {
        let a = reduced.system_at(i, omega);
        let rhs = reduced.rhs_at(i, omega);
        let (x, k) = solve_reduced(&a, &rhs, omega)?;
        p[i] = x;
        kappa[i] = k;
    }
    Ok((p, kappa))
}

/// Evaluates the output tensors from already-solved reduced coefficients.
pub fn online_outputs(
    reduced: &ReducedSystem,
    omega: f64,
    p: &[DVector<Complex64>; 3],
    kappa: [f64; 3],
) -> MptSample {
    evaluate_sample(reduced, omega, p, kappa)
}

/// Solves the reduced M×M systems at one frequency and evaluates the output
/// tensors from the stored contractions.
pub fn online_solve(reduced: &ReducedSystem, omega: f64) -> Result<RomSolution, PodError> {
    let (p, kappa) = online_coordinates(reduced, omega)?;
    let sample = evaluate_sample(reduced, omega, &p, kappa);
    Ok(RomSolution { p, kappa, sample })
}

fn evaluate_sample(
    reduced: &ReducedSystem,
    omega: f64,
    p: &[DVector<Complex64>; 3],
    kappa: [f64; 3],
) -> MptSample {
    let quarter = 0.25 * reduced.alpha.powi(3);
    let mut raw_r = Matrix3::zeros();
    let mut raw_i = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let ki = &reduced.curl_red[i][j];
            let mi = &reduced.mass_red[i][j];
            let form_k: Complex64 = p[i].dotc(&(ki * &p[j]));
            let form_m: Complex64 = p[i].dotc(&(mi * &p[j]));
            raw_r[(i, j)] = -quarter * form_k.re;
            // (U_j p_j)ᵀ b_i = p_jᵀ conj(U_jᴴ b_i); the stored contraction is
            // U_jᴴ b_i.
            let t2: Complex64 = p[j]
                .iter()
                .zip(reduced.source_red[j][i].iter())
                .map(|(pk, sk)| pk * sk.conj())
                .sum();
            let t3: Complex64 = p[i]
                .iter()
                .zip(reduced.source_red[i][j].iter())
                .map(|(pk, sk)| pk * sk.conj())
                .sum();
            let pairing = form_m + t2 + t3.conj()
                + Complex64::new(reduced.background[(i, j)], 0.0);
            raw_i[(i, j)] = quarter * omega * pairing.re;
        }
    }
    let r = symmetrized(&raw_r);
    let i_mat = symmetrized(&raw_i);
    let eigs_real =
        tensor_eigenvalues(&(reduced.n0 + r)).expect("symmetrised tensor is symmetric");
    let eigs_imag = tensor_eigenvalues(&i_mat).expect("symmetrised tensor is symmetric");
    MptSample {
        omega,
        n0: reduced.n0,
        r,
        i: i_mat,
        eigs_real,
        eigs_imag,
        asymmetry: max_asymmetry(&raw_r).max(max_asymmetry(&raw_i)),
        delta: None,
        kappa: Some(kappa.iter().fold(0.0f64, |m, &k| m.max(k))),
    }
}
