//! Certified accuracy bounds for reduced-order tensor outputs.
//!
//! The offline stage condenses everything needed to measure the full-order
//! residual of a reduced solution into six small Gram matrices — one per
//! unordered direction pair — together with a single generalised eigenvalue
//! that bounds the stability of the frequency-domain system from below. The
//! online stage then turns the reduced coordinates at any frequency into a
//! guaranteed interval around every output tensor entry, for the cost of a
//! few matrix-vector products whose size is the retained mode count.
//!
//! The residual of an expanded reduced solution is a combination of a fixed
//! set of full-order vectors: the right-side slope and the two system blocks
//! applied to the basis columns. Its Riesz representation against the
//! unit-weight mass matrix therefore has a norm expressible through the Gram
//! matrices of those vectors, which is what makes the online bound cheap.

use std::array;
use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector, Matrix3};
use num_complex::Complex64;
use thiserror::Error;

use crate::fem::{CholeskyFactor, FemError, SparseMatrix};
use crate::mpt::MptSample;
use crate::pod::TsvdBasis;
use crate::transmission::AffineSystem;

/// Iteration cap for the stability eigenvalue solve.
const MAX_STABILITY_ITERATIONS: usize = 200;

/// Relative stagnation threshold that declares the eigenvalue converged.
const STABILITY_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum CertificateError {
    #[error(
        "stability eigenvalue {lambda:e} at reference frequency {omega_prime:e} \
         is not positive; certified bounds are unavailable"
    )]
    UnstableBase { lambda: f64, omega_prime: f64 },
    #[error(
        "system matrix at the reference frequency is not positive definite; \
         certified bounds are unavailable"
    )]
    IndefiniteSystem(#[source] FemError),
    #[error("stability eigenvalue iteration did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("frequency must be finite and positive, got {0:e}")]
    BadFrequency(f64),
    #[error("object scale must be finite and positive, got {0:e}")]
    BadAlpha(f64),
    #[error("operand has dimension {got}, the affine system has {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error(
        "reduced coordinates for direction {direction} have length {got}, \
         the certificate expects {expected}"
    )]
    DimensionMismatch { direction: usize, expected: usize, got: usize },
    #[error(transparent)]
    Fem(#[from] FemError),
}

impl CertificateError {
    /// True when the error means bounds cannot exist for this system, as
    /// opposed to a caller mistake or a numerical failure.
    pub fn bounds_unavailable(&self) -> bool {
        matches!(
            self,
            CertificateError::UnstableBase { .. } | CertificateError::IndefiniteSystem(_)
        )
    }
}

/// Direction pairs in storage order: the three diagonal blocks first, then
/// the strictly upper ones.
const PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

fn pair_index(i: usize, j: usize) -> usize {
    assert!(i <= j && j < 3, "pair ({i},{j}) must satisfy i <= j < 3");
    if i == j {
        i
    } else {
        2 + i + j
    }
}

/// Everything the online bound evaluation needs: the six residual Gram
/// matrices with their entrywise moduli, the stability eigenvalue base, its
/// reference frequency, and the retained mode count per direction.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateData {
    g: [DMatrix<Complex64>; 6],
    g_abs: [DMatrix<f64>; 6],
    lambda_min: f64,
    omega_prime: f64,
    m: [usize; 3],
}

impl CertificateData {
    /// Gram matrix of the residual generators for directions (i, j), i ≤ j.
    /// The block for (j, i) is its conjugate transpose and is not stored.
    pub fn gram(&self, i: usize, j: usize) -> &DMatrix<Complex64> {
        &self.g[pair_index(i, j)]
    }

    /// Entrywise moduli of the Gram block for (i, j), i ≤ j. Precomputed
    /// because the roundoff guards contract them at every online frequency.
    pub fn gram_abs(&self, i: usize, j: usize) -> &DMatrix<f64> {
        &self.g_abs[pair_index(i, j)]
    }

    /// Stability eigenvalue at the reference frequency.
    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    /// Reference frequency of the stability solve.
    pub fn omega_prime(&self) -> f64 {
        self.omega_prime
    }

    /// Retained mode count of direction `i`.
    pub fn m(&self, i: usize) -> usize {
        self.m[i]
    }

    /// Frequency-dependent stability lower bound λ_min·min(1, ω/ω'). The
    /// system matrix grows with frequency above the reference point, so the
    /// eigenvalue carries over unchanged there; below it the conduction part
    /// shrinks at worst linearly in ω.
    pub fn alpha_lb(&self, omega: f64) -> f64 {
        self.lambda_min * (omega / self.omega_prime).min(1.0)
    }
}

/// M-weighted norm √(xᵀMx) of a real vector.
fn mass_norm(mass: &SparseMatrix, x: &[f64]) -> f64 {
    mass.bilinear(x, x).max(0.0).sqrt()
}

/// Roundoff scale of the quadratic form xᵀHx: the same contraction over
/// entrywise absolute values. When the eigenvalue sits many orders below
/// ‖H‖ — as it does when the regularisation weight controls the bottom of
/// the spectrum — the Rayleigh quotient cannot be resolved below this
/// times machine precision, so the convergence test must not demand it.
fn quadratic_noise_scale(h: &SparseMatrix, x: &[f64]) -> f64 {
    let mut habs = h.clone();
    for v in habs.values_mut() {
        *v = v.abs();
    }
    let xabs: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    habs.bilinear(&xabs, &xabs)
}

/// Smallest eigenvalue of the pencil H(ω')x = λ M₀ x, where
/// H(ω') = A₀ + ω'·Mσ collects the curl-stiffness, regularisation and
/// conduction parts of the system — all positive semi-definite, so the
/// pencil is Hermitian and its eigenvalues are real.
///
/// Computed by inverse iteration against M₀: ten plain steps from a fixed
/// jittered start vector, then refinement with a single shift placed at 90%
/// of the current Rayleigh quotient (falling back to smaller shifts, and to
/// the unshifted operator, whenever the shifted matrix loses positive
/// definiteness). Iteration stops once the Rayleigh quotient stagnates to
/// within `1e-10` relative.
///
/// A system without conduction is refused outright: its stability base
/// vanishes on the gradient fields inside the object, and there is nothing
/// to certify because the frequency-dependent response is identically zero.
pub fn stability_constant(
    affine: &AffineSystem,
    mass: &SparseMatrix,
    omega_prime: f64,
) -> Result<f64, CertificateError> {
    if !(omega_prime.is_finite() && omega_prime > 0.0) {
        return Err(CertificateError::BadFrequency(omega_prime));
    }
    if mass.n() != affine.n() {
        return Err(CertificateError::SizeMismatch { expected: affine.n(), got: mass.n() });
    }
    if affine.source_free() {
        return Err(CertificateError::UnstableBase { lambda: 0.0, omega_prime });
    }
    let h = affine.a0().add_scaled(affine.mass_sigma(), omega_prime);
    let factor = CholeskyFactor::new(&h).map_err(CertificateError::IndefiniteSystem)?;
    let n = mass.n();

    // Fixed multiplicative-hash jitter keeps the start vector generic (a
    // structured start such as all-ones can be orthogonal to the target
    // eigenvector) while staying bitwise reproducible across runs.
    let mut x: Vec<f64> = (0..n)
        .map(|k| 1.0 + (k.wrapping_mul(2654435761) % 1024) as f64 / 1024.0)
        .collect();
    let nrm = mass_norm(mass, &x);
    for v in &mut x {
        *v /= nrm;
    }
    for _ in 0..10 {
        x = factor.solve(&mass.mul_vec(&x));
        let nrm = mass_norm(mass, &x);
        if !(nrm > 0.0) {
            return Err(CertificateError::UnstableBase { lambda: 0.0, omega_prime });
        }
        for v in &mut x {
            *v /= nrm;
        }
    }
    let mut lambda = h.bilinear(&x, &x);

    let mut shift = 0.9 * lambda;
    let mut shifted: Option<CholeskyFactor> = None;
    for _ in 0..8 {
        if !(shift > 0.0 && shift.is_finite()) {
            break;
        }
        match CholeskyFactor::new(&h.add_scaled(mass, -shift)) {
            Ok(f) => {
                shifted = Some(f);
                break;
            }
            Err(_) => shift *= 0.5,
        }
    }
    let refine = shifted.as_ref().unwrap_or(&factor);

    let mut converged = false;
    for _ in 0..MAX_STABILITY_ITERATIONS {
        x = refine.solve(&mass.mul_vec(&x));
        let nrm = mass_norm(mass, &x);
        if !(nrm > 0.0) {
            return Err(CertificateError::UnstableBase { lambda: 0.0, omega_prime });
        }
        for v in &mut x {
            *v /= nrm;
        }
        let next = h.bilinear(&x, &x);
        let floor = 16.0 * f64::EPSILON * quadratic_noise_scale(&h, &x);
        let stalled = (next - lambda).abs() <= STABILITY_TOL * next.abs() + floor;
        lambda = next;
        if stalled {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(CertificateError::NoConvergence { iterations: MAX_STABILITY_ITERATIONS });
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(CertificateError::UnstableBase { lambda, omega_prime });
    }
    Ok(lambda)
}

/// The full-order generators of the reduced residual for one direction: the
/// right-side slope in the first column, then the frequency-independent
/// system block applied to each basis column, then the conduction block
/// (times −i) applied to each basis column. A residual at frequency ω is
/// this matrix times the weight vector (ω, −p, −ω·p).
fn residual_basis(
    affine: &AffineSystem,
    u: &DMatrix<Complex64>,
    direction: usize,
) -> DMatrix<Complex64> {
    let n = affine.n();
    let m = u.ncols();
    let mut w = DMatrix::zeros(n, 2 * m + 1);
    let r1 = affine.r1(direction);
    for r in 0..n {
        w[(r, 0)] = r1[r];
    }
    for c in 0..m {
        let col: Vec<Complex64> = u.column(c).iter().copied().collect();
        let a0u = affine.a0().mul_complex(&col);
        let mu = affine.mass_sigma().mul_complex(&col);
        for r in 0..n {
            w[(r, 1 + c)] = a0u[r];
            w[(r, 1 + m + c)] = mu[r] * Complex64::new(0.0, -1.0);
        }
    }
    w
}

/// Applies M₀⁻¹ column-by-column through the real Cholesky factor, solving
/// the real and imaginary parts separately. The columns are independent, so
/// this loop could run in parallel without changing the result.
fn apply_mass_inverse(factor: &CholeskyFactor, w: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = w.nrows();
    let mut z = DMatrix::zeros(n, w.ncols());
    for c in 0..w.ncols() {
        let re: Vec<f64> = w.column(c).iter().map(|v| v.re).collect();
        let im: Vec<f64> = w.column(c).iter().map(|v| v.im).collect();
        let zre = factor.solve(&re);
        let zim = factor.solve(&im);
        for r in 0..n {
            z[(r, c)] = Complex64::new(zre[r], zim[r]);
        }
    }
    z
}

/// Builds the offline certificate data: the six Gram matrices
/// G⁽ⁱʲ⁾ = W⁽ⁱ⁾ᴴ M₀⁻¹ W⁽ʲ⁾ of the residual generators against the
/// unit-weight mass matrix, plus the stability eigenvalue at the reference
/// frequency. The basis is already lowest order, so no inter-order
/// projection of the generators is needed. The diagonal blocks are
/// symmetrised to remove solver roundoff; the lower off-diagonal blocks are
/// the conjugate transposes of the stored upper ones and are not kept.
pub fn build_certificate_offline(
    affine: &AffineSystem,
    basis: &TsvdBasis,
    mass: &SparseMatrix,
    omega_prime: f64,
) -> Result<CertificateData, CertificateError> {
    if mass.n() != affine.n() {
        return Err(CertificateError::SizeMismatch { expected: affine.n(), got: mass.n() });
    }
    for i in 0..3 {
        let rows = basis.direction(i).u().nrows();
        if rows != affine.n() {
            return Err(CertificateError::SizeMismatch { expected: affine.n(), got: rows });
        }
    }
    let lambda_min = stability_constant(affine, mass, omega_prime)?;
    let chol = CholeskyFactor::new(mass)?;
    let w: [DMatrix<Complex64>; 3] =
        array::from_fn(|i| residual_basis(affine, basis.direction(i).u(), i));
    let z: [DMatrix<Complex64>; 3] = array::from_fn(|i| apply_mass_inverse(&chol, &w[i]));
    let mut g: [DMatrix<Complex64>; 6] = array::from_fn(|k| {
        let (i, j) = PAIRS[k];
        w[i].ad_mul(&z[j])
    });
    for block in g.iter_mut().take(3) {
        let sym = (&*block + block.adjoint()) * Complex64::new(0.5, 0.0);
        *block = sym;
    }
    let g_abs = array::from_fn(|k| g[k].map(|z| z.norm()));
    Ok(CertificateData {
        g,
        g_abs,
        lambda_min,
        omega_prime,
        m: array::from_fn(|i| basis.direction(i).m()),
    })
}

/// Roundoff guard factor for a contracted quadratic form over `n` weights.
/// Sized to dominate the accumulated rounding of the form's evaluation and
/// of the offline Gram entries it contracts.
fn contraction_guard(n: usize) -> f64 {
    (8.0 + (n as f64).sqrt()) * f64::EPSILON
}

/// One column-major pass over a stored Gram block computing both the real
/// part of the sesquilinear form w₁ᴴGw₂ and its entrywise-absolute
/// companion |w₁|ᵀ|G||w₂|. The companion is the magnitude scale whose
/// units-in-the-last-place bound the rounding error of the form: the forms
/// cancel heavily (the residual is a small combination of large
/// generators), so it can exceed the form value by many orders.
fn contract_pair(
    g: &DMatrix<Complex64>,
    g_abs: &DMatrix<f64>,
    w1: &[Complex64],
    w1_abs: &[f64],
    w2: &[Complex64],
    w2_abs: &[f64],
) -> (f64, f64) {
    let n = g.nrows();
    let gs = g.as_slice();
    let gas = g_abs.as_slice();
    let mut form = Complex64::new(0.0, 0.0);
    let mut magnitude = 0.0;
    for c in 0..g.ncols() {
        let s = w2[c];
        let sa = w2_abs[c];
        let col = &gs[c * n..(c + 1) * n];
        let col_abs = &gas[c * n..(c + 1) * n];
        let mut part = Complex64::new(0.0, 0.0);
        let mut part_abs = 0.0;
        for r in 0..n {
            part += w1[r].conj() * col[r];
            part_abs += w1_abs[r] * col_abs[r];
        }
        form += part * s;
        magnitude += part_abs * sa;
    }
    (form.re, magnitude)
}

/// [`contract_pair`] specialised to a diagonal block contracted with its own
/// weights. The block is Hermitian by construction, so only the upper
/// triangle is touched: wᴴGw = Σ_c |w_c|²·G_cc + 2·Re Σ_{r<c} w̄_r·G_rc·w_c,
/// and the modulus matrix is symmetric, halving both passes.
fn contract_diag(
    g: &DMatrix<Complex64>,
    g_abs: &DMatrix<f64>,
    w: &[Complex64],
    w_abs: &[f64],
) -> (f64, f64) {
    let n = g.nrows();
    let gs = g.as_slice();
    let gas = g_abs.as_slice();
    let mut form = 0.0;
    let mut magnitude = 0.0;
    for c in 0..n {
        let col = &gs[c * n..c * n + c];
        let col_abs = &gas[c * n..c * n + c];
        let mut part = Complex64::new(0.0, 0.0);
        let mut part_abs = 0.0;
        for r in 0..c {
            part += w[r].conj() * col[r];
            part_abs += w_abs[r] * col_abs[r];
        }
        form += 2.0 * (part * w[c]).re + w[c].norm_sqr() * gs[c * n + c].re;
        magnitude += (2.0 * part_abs + w_abs[c] * gas[c * n + c]) * w_abs[c];
    }
    (form, magnitude)
}

/// Index of the strictly-upper pair (i, j), i < j, into a three-slot array
/// ordered (0,1), (0,2), (1,2).
fn cross_index(i: usize, j: usize) -> usize {
    i + j - 1
}

/// The six contracted forms a bound evaluation needs, together with their
/// roundoff guards: diagonal squared residual norms per direction and the
/// three cross terms of the difference expansion.
struct ContractionSet {
    raw: [f64; 3],
    guard: [f64; 3],
    cross: [f64; 3],
    cross_guard: [f64; 3],
}

/// Reusable buffers for the per-frequency bound evaluation, so a sweep over
/// many frequencies does not allocate inside its online loop.
#[derive(Debug, Default, Clone)]
pub struct DeltaScratch {
    w: [Vec<Complex64>; 3],
    w_abs: [Vec<f64>; 3],
}

/// Fills one direction's residual weight vector (ω, −p, −ω·p) and its
/// entrywise moduli into the scratch buffers.
fn fill_weights(omega: f64, p: &DVector<Complex64>, w: &mut Vec<Complex64>, w_abs: &mut Vec<f64>) {
    let m = p.len();
    w.clear();
    w_abs.clear();
    w.reserve(2 * m + 1);
    w_abs.reserve(2 * m + 1);
    w.push(Complex64::new(omega, 0.0));
    w_abs.push(omega);
    for k in 0..m {
        w.push(-p[k]);
    }
    for k in 0..m {
        w.push(-p[k] * omega);
    }
    for k in 0..m {
        w_abs.push(p[k].norm());
    }
    for k in 0..m {
        w_abs.push(w_abs[1 + k] * omega);
    }
}

/// Validates (ω, coordinates) against the certificate and contracts all six
/// Gram blocks with the residual weights at that frequency.
fn contract_all(
    cert: &CertificateData,
    coords: &[DVector<Complex64>; 3],
    omega: f64,
    scratch: &mut DeltaScratch,
) -> Result<ContractionSet, CertificateError> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(CertificateError::BadFrequency(omega));
    }
    for (direction, p) in coords.iter().enumerate() {
        if p.len() != cert.m[direction] {
            return Err(CertificateError::DimensionMismatch {
                direction,
                expected: cert.m[direction],
                got: p.len(),
            });
        }
    }
    for i in 0..3 {
        fill_weights(omega, &coords[i], &mut scratch.w[i], &mut scratch.w_abs[i]);
    }
    let w = &scratch.w;
    let w_abs = &scratch.w_abs;
    let mut raw = [0.0; 3];
    let mut guard = [0.0; 3];
    for i in 0..3 {
        let (form, magnitude) = contract_diag(cert.gram(i, i), cert.gram_abs(i, i), &w[i], &w_abs[i]);
        raw[i] = form;
        guard[i] = contraction_guard(w[i].len()) * magnitude;
    }
    let mut cross = [0.0; 3];
    let mut cross_guard = [0.0; 3];
    for i in 0..3 {
        for j in (i + 1)..3 {
            let (form, magnitude) = contract_pair(
                cert.gram(i, j),
                cert.gram_abs(i, j),
                &w[i],
                &w_abs[i],
                &w[j],
                &w_abs[j],
            );
            cross[cross_index(i, j)] = form;
            cross_guard[cross_index(i, j)] =
                contraction_guard(w[i].len() + w[j].len()) * magnitude;
        }
    }
    Ok(ContractionSet { raw, guard, cross, cross_guard })
}

/// Evaluates the output bound matrix Δ(ω) from the reduced coordinates of
/// the three directional solves at that frequency:
///
/// Δ_ij = √2·α³/(8·α_LB(ω))·(‖r̂_i‖² + ‖r̂_j‖² + ‖r̂_i − r̂_j‖²),
///
/// where ‖r̂_i‖² = w⁽ⁱ⁾ᴴG⁽ⁱⁱ⁾w⁽ⁱ⁾ is the squared Riesz norm of the i-th
/// residual and the difference term uses the expansion
/// ‖r̂_i‖² + ‖r̂_j‖² − 2·Re(w⁽ⁱ⁾ᴴG⁽ⁱʲ⁾w⁽ʲ⁾). The same Δ bounds the error
/// of both the in-phase and the out-of-phase tensor. The √2 factor accounts
/// for bounding the modulus of the complex energy form from below by its
/// real and conduction parts, which is how the stability eigenvalue enters.
///
/// Each contracted form is clamped at zero and carries an additive guard of
/// a few units in the last place of its own evaluation magnitude. The forms
/// cancel heavily once the reduced solution is accurate, so their rounded
/// values can come out negative or spuriously zero; without the guard a
/// rounded-away residual would under-report the bound. The guard is the
/// resolution limit of the certificate: bounds at or below it mean "no
/// residual distinguishable from roundoff".
pub fn online_delta(
    cert: &CertificateData,
    coords: &[DVector<Complex64>; 3],
    omega: f64,
    alpha: f64,
) -> Result<Matrix3<f64>, CertificateError> {
    online_delta_with(cert, coords, omega, alpha, &mut DeltaScratch::default())
}

/// [`online_delta`] with caller-held scratch buffers; sweeps call this so
/// the per-frequency evaluation stays allocation free.
pub fn online_delta_with(
    cert: &CertificateData,
    coords: &[DVector<Complex64>; 3],
    omega: f64,
    alpha: f64,
    scratch: &mut DeltaScratch,
) -> Result<Matrix3<f64>, CertificateError> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(CertificateError::BadAlpha(alpha));
    }
    let set = contract_all(cert, coords, omega, scratch)?;
    let norm_sq: [f64; 3] = array::from_fn(|i| set.raw[i].max(0.0) + set.guard[i]);
    let scale = SQRT_2 * alpha.powi(3) / (8.0 * cert.alpha_lb(omega));
    let mut delta = Matrix3::zeros();
    for i in 0..3 {
        for j in i..3 {
            let diff_sq = if i == j {
                0.0
            } else {
                let k = cross_index(i, j);
                (set.raw[i].max(0.0) + set.raw[j].max(0.0) - 2.0 * set.cross[k]).max(0.0)
                    + set.guard[i]
                    + set.guard[j]
                    + 2.0 * set.cross_guard[k]
            };
            let value = scale * (norm_sq[i] + norm_sq[j] + diff_sq);
            delta[(i, j)] = value;
            delta[(j, i)] = value;
        }
    }
    Ok(delta)
}

/// The resolution floor of the bound at (ω, coordinates): the value
/// [`online_delta`] would report if every contracted form were exactly
/// zero, leaving only the roundoff guards. Bounds close to this floor mean
/// the reduced solution reproduces the full one to working precision — the
/// certificate cannot certify anything smaller at this frequency.
pub fn delta_resolution(
    cert: &CertificateData,
    coords: &[DVector<Complex64>; 3],
    omega: f64,
    alpha: f64,
) -> Result<Matrix3<f64>, CertificateError> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(CertificateError::BadAlpha(alpha));
    }
    let set = contract_all(cert, coords, omega, &mut DeltaScratch::default())?;
    let scale = SQRT_2 * alpha.powi(3) / (8.0 * cert.alpha_lb(omega));
    let mut floor = Matrix3::zeros();
    for i in 0..3 {
        for j in i..3 {
            let extra = if i == j {
                0.0
            } else {
                set.guard[i] + set.guard[j] + 2.0 * set.cross_guard[cross_index(i, j)]
            };
            let value = scale * (set.guard[i] + set.guard[j] + extra);
            floor[(i, j)] = value;
            floor[(j, i)] = value;
        }
    }
    Ok(floor)
}

/// Per-entry intervals around the reported tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateBand {
    /// Lower bounds on the in-phase tensor (static part plus real
    /// perturbation).
    pub real_low: Matrix3<f64>,
    /// Upper bounds on the in-phase tensor.
    pub real_high: Matrix3<f64>,
    /// Lower bounds on the out-of-phase tensor.
    pub imag_low: Matrix3<f64>,
    /// Upper bounds on the out-of-phase tensor.
    pub imag_high: Matrix3<f64>,
}

/// Expands a sample's bound matrix into reporting intervals
/// [(N⁰+R)_ij ± Δ_ij] and [I_ij ± Δ_ij]. Returns `None` when the sample
/// carries no bound.
pub fn certificate_band(sample: &MptSample) -> Option<CertificateBand> {
    let delta = sample.delta?;
    let point = sample.n0 + sample.r;
    Some(CertificateBand {
        real_low: point - delta,
        real_high: point + delta,
        imag_low: sample.i - delta,
        imag_high: sample.i + delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{EdgeSpace, DEFAULT_SOLVE_TOL};
    use crate::mesh::{generate_box_mesh, tag_regions, Material, MaterialSet, Shape, TaggedShape};
    use crate::mpt::full_order_sample;
    use crate::pod::{
        build_snapshots, online_solve, project_affine, truncate_snapshots, Spacing,
    };
    use crate::transmission::FomModel;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn sphere_model() -> FomModel {
        let base = generate_box_mesh(2.0, 3).unwrap();
        let shapes = [TaggedShape::new(
            Shape::Sphere { center: [0.0; 3], radius: 1.0 },
            "object",
        )];
        let tagged = tag_regions(&base, &shapes).unwrap();
        let set = MaterialSet::new(vec![Material::new("object", 1.5, 5.96e6, true)]).unwrap();
        let space = Arc::new(EdgeSpace::new(Arc::new(tagged)));
        FomModel::build(space, &set, 0.01, DEFAULT_SOLVE_TOL).unwrap()
    }

    /// Small all-object model with few dofs for dense oracles.
    fn cube_model(sigma: f64) -> FomModel {
        let base = generate_box_mesh(2.0, 2).unwrap();
        let shapes = [TaggedShape::new(
            Shape::Cuboid { min: [-3.0; 3], max: [3.0; 3] },
            "object",
        )];
        let tagged = tag_regions(&base, &shapes).unwrap();
        let set = MaterialSet::new(vec![Material::new("object", 1.5, sigma, true)]).unwrap();
        let space = Arc::new(EdgeSpace::new(Arc::new(tagged)));
        FomModel::build(space, &set, 0.01, DEFAULT_SOLVE_TOL).unwrap()
    }

    fn certificate_for(
        model: &FomModel,
        n_snapshots: usize,
        tol: f64,
        omega_prime: f64,
    ) -> (crate::pod::ReducedSystem, CertificateData) {
        let grid =
            crate::pod::frequency_samples(1e2, 1e8, n_snapshots, Spacing::Log).unwrap();
        let set = build_snapshots(model, &grid, Spacing::Log).unwrap();
        let basis = truncate_snapshots(&set, tol).unwrap();
        let reduced = project_affine(model, &basis).unwrap();
        let cert =
            build_certificate_offline(model.affine(), &basis, model.mass_unit(), omega_prime)
                .unwrap();
        (reduced, cert)
    }

    fn complex_dense(m: &SparseMatrix) -> DMatrix<Complex64> {
        m.to_dense().map(|v| Complex64::new(v, 0.0))
    }

    #[test]
    fn offline_blocks_have_certificate_structure() {
        let model = sphere_model();
        let grid = crate::pod::frequency_samples(1e2, 1e8, 5, Spacing::Log).unwrap();
        let set = build_snapshots(&model, &grid, Spacing::Log).unwrap();

        // A tolerance just under one keeps a single mode per direction.
        let basis = truncate_snapshots(&set, 0.999).unwrap();
        let cert =
            build_certificate_offline(model.affine(), &basis, model.mass_unit(), 1e2).unwrap();
        for i in 0..3 {
            assert_eq!(cert.m(i), 1);
            assert_eq!(cert.gram(i, i).nrows(), 3);
            assert_eq!(cert.gram(i, i).ncols(), 3);
        }

        let basis = truncate_snapshots(&set, 0.0).unwrap();
        let cert =
            build_certificate_offline(model.affine(), &basis, model.mass_unit(), 1e2).unwrap();
        for i in 0..3 {
            let g = cert.gram(i, i);
            assert_eq!(g.nrows(), 2 * cert.m(i) + 1);
            let herm = (g - g.adjoint()).norm();
            assert!(herm <= 1e-10 * g.norm(), "Hermitian deviation {herm:e}");
            // Positive semi-definiteness through deterministic probe vectors.
            for probe in 0..8u32 {
                let v = DVector::from_fn(g.nrows(), |r, _| {
                    let t = (r as f64 + 1.3) * (probe as f64 + 0.7);
                    Complex64::new(t.sin(), t.cos())
                });
                let q = v.dotc(&(g * &v)).re;
                assert!(q >= -1e-10 * g.norm() * v.norm_squared(), "Rayleigh {q:e}");
            }
        }

        // Stability base scaling rule around the reference frequency.
        assert_eq!(cert.alpha_lb(1e2), cert.lambda_min());
        assert_relative_eq!(cert.alpha_lb(1e1), cert.lambda_min() / 10.0, max_relative = 1e-14);
        assert_eq!(cert.alpha_lb(1e5), cert.lambda_min());

        // The whole offline build is deterministic.
        let again =
            build_certificate_offline(model.affine(), &basis, model.mass_unit(), 1e2).unwrap();
        assert_eq!(again, cert);
    }

    #[test]
    fn gram_matrices_match_dense_oracle() {
        let model = cube_model(1e6);
        let grid = crate::pod::frequency_samples(1e2, 1e8, 4, Spacing::Log).unwrap();
        let set = build_snapshots(&model, &grid, Spacing::Log).unwrap();
        let basis = truncate_snapshots(&set, 0.0).unwrap();
        let cert =
            build_certificate_offline(model.affine(), &basis, model.mass_unit(), 1e2).unwrap();

        let affine = model.affine();
        let a0d = complex_dense(affine.a0());
        let msd = complex_dense(affine.mass_sigma());
        let m0_inv = complex_dense(model.mass_unit()).try_inverse().unwrap();
        let dense_w = |i: usize| {
            let u = basis.direction(i).u();
            let m = u.ncols();
            let mut w = DMatrix::<Complex64>::zeros(u.nrows(), 2 * m + 1);
            let r1 = affine.r1(i);
            for r in 0..u.nrows() {
                w[(r, 0)] = r1[r];
            }
            w.view_mut((0, 1), (u.nrows(), m)).copy_from(&(&a0d * u));
            w.view_mut((0, 1 + m), (u.nrows(), m))
                .copy_from(&(&msd * u * Complex64::new(0.0, -1.0)));
            w
        };
        for (i, j) in PAIRS {
            let mut oracle = dense_w(i).adjoint() * &m0_inv * dense_w(j);
            if i == j {
                oracle = (&oracle + oracle.adjoint()) * Complex64::new(0.5, 0.0);
            }
            let diff = (cert.gram(i, j) - &oracle).norm();
            assert!(
                diff <= 1e-10 * oracle.norm(),
                "block ({i},{j}) deviates by {diff:e}"
            );
        }
    }

    #[test]
    fn stability_constant_matches_dense_eigensolver() {
        let model = cube_model(1e6);
        let omega_prime = 1e2;
        let lambda =
            stability_constant(model.affine(), model.mass_unit(), omega_prime).unwrap();

        let h = model
            .affine()
            .a0()
            .add_scaled(model.affine().mass_sigma(), omega_prime)
            .to_dense();
        let m0 = model.mass_unit().to_dense();
        // Congruence transform through the mass Cholesky factor turns the
        // pencil into an ordinary symmetric eigenproblem.
        let chol = nalgebra::Cholesky::new(m0).unwrap();
        let l = chol.l();
        let y = l.solve_lower_triangular(&h).unwrap();
        let b = l.solve_lower_triangular(&y.transpose()).unwrap();
        let sym = (&b + b.transpose()) * 0.5;
        let dense_min = nalgebra::SymmetricEigen::new(sym)
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, &v| a.min(v));
        assert!(dense_min > 0.0);
        assert_relative_eq!(lambda, dense_min, max_relative = 1e-6);
    }

    #[test]
    fn stability_base_respects_regularisation_floor() {
        // On a model with a nonempty exterior, gradient fields supported
        // away from the object make the smallest pencil eigenvalue collapse
        // onto the regularisation weight, which is also a structural lower
        // bound for it.
        let model = sphere_model();
        let lambda = stability_constant(model.affine(), model.mass_unit(), 1e2).unwrap();
        let eps = model.affine().epsilon();
        assert!(lambda >= eps * (1.0 - 1e-4), "lambda {lambda:e} below floor {eps:e}");
        assert!(lambda <= 10.0 * eps, "lambda {lambda:e} far above floor {eps:e}");
    }

    #[test]
    fn online_bound_matches_direct_dense_residuals() {
        let model = cube_model(1e6);
        let omega = 10f64.powf(3.7);
        let alpha = model.alpha();

        // Dense reference: residuals assembled in the full space and
        // Riesz-represented through a dense mass Cholesky.
        let affine = model.affine();
        let a0d = complex_dense(affine.a0());
        let msd = complex_dense(affine.mass_sigma());
        let system = &a0d + &msd * Complex64::new(0.0, -omega);
        let m0c = complex_dense(model.mass_unit());
        let m0_chol = m0c.clone().cholesky().unwrap();

        for tol in [0.5, 0.0] {
            let grid = crate::pod::frequency_samples(1e2, 1e8, 4, Spacing::Log).unwrap();
            let set = build_snapshots(&model, &grid, Spacing::Log).unwrap();
            let basis = truncate_snapshots(&set, tol).unwrap();
            let reduced = project_affine(&model, &basis).unwrap();
            let cert =
                build_certificate_offline(affine, &basis, model.mass_unit(), 1e2).unwrap();
            let rom = online_solve(&reduced, omega).unwrap();
            let delta = online_delta(&cert, &rom.p, omega, alpha).unwrap();
            let resolution = delta_resolution(&cert, &rom.p, omega, alpha).unwrap();
            let truncated = (0..3).any(|i| basis.direction(i).m() < grid.len());
            if tol > 0.0 {
                assert!(truncated, "lossy tolerance {tol} should drop at least one mode");
            }

            let rho: Vec<DVector<Complex64>> = (0..3)
                .map(|i| {
                    let full = basis.direction(i).u() * &rom.p[i];
                    DVector::from_vec(affine.r1(i)) * Complex64::new(omega, 0.0)
                        - &system * full
                })
                .collect();
            let rhat: Vec<DVector<Complex64>> =
                rho.iter().map(|r| m0_chol.solve(r)).collect();
            let norm_sq: Vec<f64> = (0..3).map(|i| rho[i].dotc(&rhat[i]).re).collect();
            let scale = SQRT_2 * alpha.powi(3) / (8.0 * cert.alpha_lb(omega));

            for i in 0..3 {
                for j in i..3 {
                    let diff_sq = if i == j {
                        0.0
                    } else {
                        let d = &rhat[i] - &rhat[j];
                        (&m0c * &d).dotc(&d).re.max(0.0)
                    };
                    let direct = scale * (norm_sq[i] + norm_sq[j] + diff_sq);
                    let got = delta[(i, j)];
                    if truncated {
                        // Genuine truncation residuals dominate all rounding,
                        // so the expansion through the Gram matrices must
                        // match the dense evaluation tightly.
                        assert!(
                            (got - direct).abs() <= 1e-10 * direct,
                            "entry ({i},{j}) at tol {tol}: online {got:e} vs direct {direct:e}"
                        );
                    } else {
                        // With an exact basis the residuals sit at or below
                        // the certificate's resolution: the bound still
                        // covers the dense value, and exceeds it by no more
                        // than the roundoff guards.
                        assert!(
                            got >= 0.99 * direct,
                            "entry ({i},{j}): bound {got:e} below direct {direct:e}"
                        );
                        assert!(
                            got <= direct + 3.0 * resolution[(i, j)] + 1e-9 * direct,
                            "entry ({i},{j}): bound {got:e} beyond direct {direct:e} \
                             plus resolution {:e}",
                            resolution[(i, j)]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn certified_bounds_cover_independent_full_solves() {
        let model = sphere_model();
        let (reduced, cert) = certificate_for(&model, 5, 1e-4, 1e2);
        // Verification frequencies halfway between the snapshot exponents.
        for exponent in [2.75, 4.25, 5.75, 7.25] {
            let omega = 10f64.powf(exponent);
            let rom = online_solve(&reduced, omega).unwrap();
            let delta = online_delta(&cert, &rom.p, omega, model.alpha()).unwrap();
            let fom = full_order_sample(&model, omega).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let d = delta[(i, j)];
                    assert!(d >= 0.0, "negative bound at {omega:e}");
                    assert_eq!(delta[(j, i)], d, "bound matrix must be symmetric");
                    let err_r = (fom.r[(i, j)] - rom.sample.r[(i, j)]).abs();
                    let err_i = (fom.i[(i, j)] - rom.sample.i[(i, j)]).abs();
                    assert!(
                        err_r <= d,
                        "in-phase error {err_r:e} exceeds bound {d:e} at {omega:e}"
                    );
                    assert!(
                        err_i <= d,
                        "out-of-phase error {err_i:e} exceeds bound {d:e} at {omega:e}"
                    );
                }
            }
        }
    }

    #[test]
    fn bound_nearly_vanishes_at_snapshots_with_exact_basis() {
        let model = sphere_model();
        let (reduced, cert) = certificate_for(&model, 5, 0.0, 1e2);
        let grid = crate::pod::frequency_samples(1e2, 1e8, 5, Spacing::Log).unwrap();
        let band_scale = grid
            .iter()
            .map(|&w| full_order_sample(&model, w).unwrap().r.norm())
            .fold(0.0f64, f64::max);
        for &omega in &grid {
            let rom = online_solve(&reduced, omega).unwrap();
            let delta = online_delta(&cert, &rom.p, omega, model.alpha()).unwrap();
            let resolution = delta_resolution(&cert, &rom.p, omega, model.alpha()).unwrap();
            let bound_max = delta.iter().fold(0.0f64, |a, &v| a.max(v));
            let res_max = resolution.iter().fold(0.0f64, |a, &v| a.max(v));
            // At snapshot frequencies the residual of an untruncated basis is
            // zero up to roundoff, so the bound must collapse to either a
            // negligible fraction of the sweep's response scale or the
            // certificate's own resolution, whichever is coarser.  A
            // systematic residual defect would exceed both by many orders.
            let negligible = (1e-6 * band_scale).max(4.0 * res_max);
            assert!(
                bound_max <= negligible,
                "residual bound {bound_max:e} above snapshot floor {negligible:e} at {omega:e}"
            );
        }
    }

    #[test]
    fn band_assembly_round_trips_the_sample() {
        let model = sphere_model();
        let (reduced, cert) = certificate_for(&model, 5, 1e-4, 1e2);
        let omega = 10f64.powf(4.25);
        let mut rom = online_solve(&reduced, omega).unwrap();
        assert!(certificate_band(&rom.sample).is_none());

        let delta = online_delta(&cert, &rom.p, omega, model.alpha()).unwrap();
        rom.sample.delta = Some(delta);
        let band = certificate_band(&rom.sample).unwrap();
        let point = rom.sample.n0 + rom.sample.r;
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(band.real_low[(i, j)], point[(i, j)] - delta[(i, j)]);
                assert_eq!(band.real_high[(i, j)], point[(i, j)] + delta[(i, j)]);
                assert_eq!(band.imag_low[(i, j)], rom.sample.i[(i, j)] - delta[(i, j)]);
                assert_eq!(band.imag_high[(i, j)], rom.sample.i[(i, j)] + delta[(i, j)]);
                assert!(band.real_low[(i, j)] <= band.real_high[(i, j)]);
                assert!(band.imag_low[(i, j)] <= band.imag_high[(i, j)]);
            }
        }

        // A zero bound collapses the band onto the point values.
        rom.sample.delta = Some(Matrix3::zeros());
        let tight = certificate_band(&rom.sample).unwrap();
        assert_eq!(tight.real_low, point);
        assert_eq!(tight.real_high, point);
        assert_eq!(tight.imag_low, rom.sample.i);
        assert_eq!(tight.imag_high, rom.sample.i);
    }

    #[test]
    fn rejects_invalid_inputs() {
        let model = sphere_model();
        let (_, cert) = certificate_for(&model, 5, 1e-4, 1e2);
        let coords: [DVector<Complex64>; 3] =
            std::array::from_fn(|i| DVector::zeros(cert.m(i)));

        let bad_len: [DVector<Complex64>; 3] =
            std::array::from_fn(|i| DVector::zeros(cert.m(i) + 1));
        assert!(matches!(
            online_delta(&cert, &bad_len, 1e4, 0.01),
            Err(CertificateError::DimensionMismatch { direction: 0, .. })
        ));
        assert!(matches!(
            online_delta(&cert, &coords, -1.0, 0.01),
            Err(CertificateError::BadFrequency(_))
        ));
        assert!(matches!(
            online_delta(&cert, &coords, 1e4, 0.0),
            Err(CertificateError::BadAlpha(_))
        ));
        assert!(matches!(
            stability_constant(model.affine(), model.mass_unit(), 0.0),
            Err(CertificateError::BadFrequency(_))
        ));

        // A mass matrix from a different discretisation is rejected.
        let other = cube_model(1e6);
        let err = stability_constant(model.affine(), other.mass_unit(), 1e2);
        assert!(matches!(err, Err(CertificateError::SizeMismatch { .. })));
    }

    #[test]
    fn refuses_systems_without_conduction() {
        let model = cube_model(0.0);
        let err = stability_constant(model.affine(), model.mass_unit(), 1e2).unwrap_err();
        assert!(err.bounds_unavailable(), "unexpected error {err}");
    }
}
