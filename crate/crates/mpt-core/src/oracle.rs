//! Analytic reference solution: the exact polarizability of a conducting
//! permeable sphere in a uniform time-harmonic field.
//!
//! For a sphere the tensor is isotropic, `m(ω)·I`, and `m` has a classical
//! closed form in spherical Bessel functions of the complex argument
//! v = α·k with k² = iωμ₀μ_rσ_*. Writing Q = 2μ_r·j₁(v)/(v·j₀(v) − j₁(v)),
//!
//!   m(ω) = 4πα³·(Q − 1)/(Q + 2),
//!
//! which interpolates between the magnetostatic value 4πα³(μ_r−1)/(μ_r+2)
//! at ω = 0 and the perfectly conducting limit −2πα³ as ω → ∞.
//!
//! The Bessel ratio is evaluated through two mutually checking branches: a
//! power series for small |v| and a cotangent form, stable because the
//! argument's positive imaginary part keeps e^{2iv} inside the unit disc.
//! The tests corroborate both against independent radial finite-difference
//! solves of the underlying boundary-value problems.

use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

/// Largest argument magnitude |v| accepted before the evaluator refuses
/// rather than extrapolate outside its validated range.
pub const MAX_ARGUMENT: f64 = 1e4;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{name} must be {requirement}, got {value:e}")]
    BadParameter { name: &'static str, requirement: &'static str, value: f64 },
    #[error("frequency must be finite and non-negative, got {0:e}")]
    BadFrequency(f64),
    #[error("skin-depth argument magnitude {0:e} exceeds the validated range {MAX_ARGUMENT:e}")]
    ArgumentOutOfRange(f64),
}

/// Parameters of the analytic sphere: radius α in metres, relative
/// permeability and conductivity in S/m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereAnalytic {
    alpha: f64,
    mu_r: f64,
    sigma_star: f64,
}

/// The two closed-form endpoints of the sphere's spectral signature; both
/// are purely real.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereLimits {
    /// Low-frequency (magnetostatic) value 4πα³(μ_r−1)/(μ_r+2).
    pub static_limit: f64,
    /// High-frequency (perfect-conductor) value −2πα³.
    pub conductor_limit: f64,
}

impl SphereAnalytic {
    pub fn new(alpha: f64, mu_r: f64, sigma_star: f64) -> Result<Self, OracleError> {
        let check = |name: &'static str, requirement: &'static str, value: f64, ok: bool| {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(OracleError::BadParameter { name, requirement, value })
            }
        };
        check("alpha", "positive and finite", alpha, alpha > 0.0)?;
        check("mu_r", "positive and finite", mu_r, mu_r > 0.0)?;
        check("sigma_star", "non-negative and finite", sigma_star, sigma_star >= 0.0)?;
        Ok(SphereAnalytic { alpha, mu_r, sigma_star })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mu_r(&self) -> f64 {
        self.mu_r
    }

    pub fn sigma_star(&self) -> f64 {
        self.sigma_star
    }
}

/// j₁(v)/(v·j₀(v) − j₁(v)) by its power series; accurate to roundoff for
/// |v| ≤ 1/2 with the retained terms.
pub(crate) fn bessel_ratio_series(v: Complex64) -> Complex64 {
    let z2 = v * v;
    let z4 = z2 * z2;
    let z6 = z4 * z2;
    let z8 = z4 * z4;
    let z10 = z8 * z2;
    let num = Complex64::new(1.0 / 3.0, 0.0) - z2 / 30.0 + z4 / 840.0 - z6 / 45360.0
        + z8 / 3991680.0
        - z10 / 518918400.0;
    let den = Complex64::new(2.0 / 3.0, 0.0) - z2 * (2.0 / 15.0) + z4 / 140.0 - z6 / 5670.0
        + z8 / 399168.0
        - z10 / 43243200.0;
    num / den
}

/// The same ratio as (1 − v·cot v)/(v² − 1 + v·cot v), with
/// cot v = i(e^{2iv} + 1)/(e^{2iv} − 1). Requires Im v > 0 so that
/// |e^{2iv}| < 1; then the form neither overflows nor cancels for any
/// magnitude.
pub(crate) fn bessel_ratio_cot(v: Complex64) -> Complex64 {
    debug_assert!(v.im > 0.0, "cotangent branch needs Im v > 0");
    let t = (Complex64::i() * v * 2.0).exp();
    let vcot = v * Complex64::i() * (t + 1.0) / (t - 1.0);
    (1.0 - vcot) / (v * v - 1.0 + vcot)
}

/// The exact sphere polarizability m(ω); the tensor is m(ω) times the
/// identity. Accepts ω = 0, where the value is the magnetostatic limit.
pub fn sphere_mpt_exact(cfg: &SphereAnalytic, omega: f64) -> Result<Complex64, OracleError> {
    if !omega.is_finite() || omega < 0.0 {
        return Err(OracleError::BadFrequency(omega));
    }
    let nu = cfg.alpha * cfg.alpha * omega * crate::MU_0 * cfg.sigma_star;
    // v = √(iνμ_r): the principal root has arg π/4, so Im v ≥ 0.
    let v = (Complex64::i() * nu * cfg.mu_r).sqrt();
    let magnitude = v.norm();
    if magnitude > MAX_ARGUMENT {
        return Err(OracleError::ArgumentOutOfRange(magnitude));
    }
    let ratio =
        if magnitude < 0.5 { bessel_ratio_series(v) } else { bessel_ratio_cot(v) };
    let q = 2.0 * cfg.mu_r * ratio;
    let dipole = (q - 1.0) / (q + 2.0);
    Ok(dipole * 4.0 * PI * cfg.alpha.powi(3))
}

/// The closed-form end points of the sweep for a given sphere.
pub fn sphere_limits(cfg: &SphereAnalytic) -> SphereLimits {
    let volume_scale = 4.0 * PI * cfg.alpha.powi(3);
    SphereLimits {
        static_limit: volume_scale * (cfg.mu_r - 1.0) / (cfg.mu_r + 2.0),
        conductor_limit: -0.5 * volume_scale,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sphere(alpha: f64, mu_r: f64, sigma: f64) -> SphereAnalytic {
        SphereAnalytic::new(alpha, mu_r, sigma).unwrap()
    }

    /// Solves the complex tridiagonal system (lower, diag, upper) · x = rhs
    /// in place by the Thomas recurrence.
    fn tridiagonal_solve(
        lower: &[Complex64],
        diag: &[Complex64],
        upper: &[Complex64],
        rhs: &mut Vec<Complex64>,
    ) {
        let n = diag.len();
        let mut scratch = vec![Complex64::default(); n];
        scratch[0] = upper[0] / diag[0];
        rhs[0] /= diag[0];
        for i in 1..n {
            let denom = diag[i] - lower[i] * scratch[i - 1];
            if i + 1 < n {
                scratch[i] = upper[i] / denom;
            }
            rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / denom;
        }
        for i in (0..n - 1).rev() {
            let next = rhs[i + 1];
            rhs[i] -= scratch[i] * next;
        }
    }

    /// Independent magnetostatic check: solves the l = 1 radial potential
    /// equation (μ r² f′)′ = 2 μ f across the sphere boundary with an exact
    /// dipole Robin closure, and returns the induced dipole coefficient
    /// normalised by the sphere volume factor — analytically
    /// (μ_r − 1)/(μ_r + 2).
    fn static_dipole_fd(mu_r: f64, cells: usize) -> f64 {
        let outer = 2.0;
        let h = outer / cells as f64;
        let interface = cells / 2; // grid node exactly on r = 1
        assert_eq!(interface * 2, cells);
        let mu_at = |r: f64| if r < 1.0 { mu_r } else { 1.0 };

        let n = cells; // unknowns f_1..f_N (f_0 = 0)
        let mut lower = vec![Complex64::default(); n];
        let mut diag = vec![Complex64::default(); n];
        let mut upper = vec![Complex64::default(); n];
        let mut rhs = vec![Complex64::default(); n];
        for idx in 0..n {
            let i = idx + 1;
            let r = i as f64 * h;
            let rp = r + 0.5 * h;
            let rm = r - 0.5 * h;
            let cp = mu_at(rp) * rp * rp / h;
            let cm = mu_at(rm) * rm * rm / h;
            let mu_i = if i == interface { 0.5 * (mu_r + 1.0) } else { mu_at(r) };
            let react = 2.0 * mu_i * h;
            if i < cells {
                if idx > 0 {
                    lower[idx] = Complex64::new(cm, 0.0);
                }
                diag[idx] = Complex64::new(-(cp + cm) - react, 0.0);
                upper[idx] = Complex64::new(cp, 0.0);
            } else {
                // Robin closure at the outer radius R: the exterior field is
                // exactly uniform-plus-dipole, so f′(R) = −3 − 2 f(R)/R;
                // fold the ghost value f_{N+1} = f_{N−1} + 2h·f′(R) into the
                // conservation stencil.
                lower[idx] = Complex64::new(cm + cp, 0.0);
                diag[idx] = Complex64::new(-(cp + cm) - react - cp * 4.0 * h / outer, 0.0);
                rhs[idx] = Complex64::new(cp * 6.0 * h, 0.0);
            }
        }
        tridiagonal_solve(&lower, &diag, &upper, &mut rhs);
        let f_outer = rhs[n - 1].re;
        (f_outer + outer) * outer * outer
    }

    /// Independent eddy-current check: solves the interior l = 1 radial
    /// profile w″ = (2/r² − v²) w with w(0) = 0, w(1) = 1 on a unit sphere —
    /// the equation whose regular solution is r·j₁(v r) — and returns
    /// Q = 2 μ_r w(1)/w′(1), the quantity the closed form expresses through
    /// j₀ and j₁.
    fn interior_profile_fd(mu_r: f64, v: Complex64, cells: usize) -> Complex64 {
        let h = 1.0 / cells as f64;
        let k2 = -(v * v);
        let n = cells - 1; // unknowns w_1..w_{N−1}
        let mut lower = vec![Complex64::default(); n];
        let mut diag = vec![Complex64::default(); n];
        let mut upper = vec![Complex64::default(); n];
        let mut rhs = vec![Complex64::default(); n];
        for idx in 0..n {
            let r = (idx + 1) as f64 * h;
            lower[idx] = Complex64::new(1.0, 0.0);
            upper[idx] = Complex64::new(1.0, 0.0);
            diag[idx] = -Complex64::new(2.0 + h * h * 2.0 / (r * r), 0.0) - h * h * k2;
            if idx == n - 1 {
                rhs[idx] = Complex64::new(-1.0, 0.0); // w_N = 1 moved right
            }
        }
        tridiagonal_solve(&lower, &diag, &upper, &mut rhs);
        // One-sided derivative at r = 1, upgraded to second order with the
        // differential equation: w′(1) ≈ (w_N − w_{N−1})/h + (h/2)·w″(1).
        let w_prev = rhs[n - 1];
        let w_boundary = Complex64::new(1.0, 0.0);
        let curvature = (Complex64::new(2.0, 0.0) + k2) * w_boundary;
        let slope = (w_boundary - w_prev) / h + curvature * (0.5 * h);
        2.0 * mu_r * w_boundary / slope
    }

    #[test]
    fn static_limit_matches_the_magnetostatic_closed_form() {
        let cfg = sphere(0.01, 1.5, 5.96e6);
        let limits = sphere_limits(&cfg);
        let closed = 4.0 * PI * 0.01f64.powi(3) * 0.5 / 3.5;
        assert_eq!(limits.static_limit, closed);
        assert_relative_eq!(limits.static_limit, 1.7952e-6, max_relative = 1e-4);

        let at_zero = sphere_mpt_exact(&cfg, 0.0).unwrap();
        assert_relative_eq!(at_zero.re, closed, max_relative = 1e-14);
        assert_eq!(at_zero.im, 0.0);
    }

    #[test]
    fn high_frequencies_approach_the_conducting_limit() {
        let cfg = sphere(0.01, 1.5, 5.96e6);
        let limits = sphere_limits(&cfg);
        assert_relative_eq!(limits.conductor_limit, -6.2832e-6, max_relative = 1e-4);

        // |v| ≈ 3000 here, so the deviation from the limit is O(1/|v|).
        let omega = 1e8 * 80.0;
        let m = sphere_mpt_exact(&cfg, omega).unwrap();
        assert_relative_eq!(m.re, limits.conductor_limit, max_relative = 2e-3);
        assert!(m.im.abs() <= 2e-3 * limits.conductor_limit.abs());
    }

    #[test]
    fn no_material_contrast_means_no_response() {
        let cfg = sphere(0.01, 1.0, 0.0);
        for omega in [0.0, 1e4, 1e8] {
            assert_eq!(sphere_mpt_exact(&cfg, omega).unwrap(), Complex64::default());
        }
    }

    #[test]
    fn series_and_cotangent_branches_agree_around_the_switch() {
        for magnitude in [0.3, 0.45, 0.5, 0.55, 0.7] {
            let v = Complex64::from_polar(magnitude, PI / 4.0);
            let series = bessel_ratio_series(v);
            let cot = bessel_ratio_cot(v);
            assert!(
                (series - cot).norm() <= 1e-11 * cot.norm(),
                "branches disagree at |v| = {magnitude}: {series} vs {cot}"
            );
        }
    }

    #[test]
    fn losses_stay_positive_and_the_real_part_decays_monotonically() {
        let cfg = sphere(0.01, 1.5, 5.96e6);
        let limits = sphere_limits(&cfg);
        let mut previous = f64::INFINITY;
        for k in 0..100 {
            let omega = 10f64.powf(2.0 + 6.0 * k as f64 / 99.0);
            let m = sphere_mpt_exact(&cfg, omega).unwrap();
            assert!(m.im > 0.0, "loss part not positive at {omega:e}");
            assert!(m.re < previous, "real part not decreasing at {omega:e}");
            assert!(m.re < limits.static_limit && m.re > limits.conductor_limit);
            previous = m.re;
        }
    }

    #[test]
    fn closed_form_obeys_both_scaling_identities() {
        let base = sphere(0.01, 1.5, 1e7);
        let omega = 3.7e5;

        let s = 1.7;
        let grown = sphere(0.01 * s, 1.5, 1e7);
        let lhs = sphere_mpt_exact(&grown, omega).unwrap();
        let rhs = sphere_mpt_exact(&base, s * s * omega).unwrap() * s.powi(3);
        assert!((lhs - rhs).norm() <= 1e-12 * rhs.norm());

        let conductive = sphere(0.01, 1.5, 1e7 * s);
        let lhs = sphere_mpt_exact(&conductive, omega).unwrap();
        let rhs = sphere_mpt_exact(&base, s * omega).unwrap();
        assert!((lhs - rhs).norm() <= 1e-12 * rhs.norm());
    }

    #[test]
    fn radial_statics_solver_corroborates_the_permeable_limit() {
        for mu_r in [1.5, 3.0, 10.0] {
            let expected = (mu_r - 1.0) / (mu_r + 2.0);
            let coarse = static_dipole_fd(mu_r, 1000);
            let fine = static_dipole_fd(mu_r, 2000);
            assert_relative_eq!(fine, expected, max_relative = 1e-5);
            // Second-order convergence: quartering the error when halving h.
            let gain = (coarse - expected).abs() / (fine - expected).abs();
            assert!(gain > 3.0, "convergence order lost: gain {gain}");
        }
    }

    #[test]
    fn radial_eddy_solver_corroborates_the_bessel_form() {
        let mu_r = 1.5;
        for magnitude in [0.8, 5.0, 30.0] {
            let v = Complex64::from_polar(magnitude, PI / 4.0);
            let exact = 2.0
                * mu_r
                * if magnitude < 0.5 { bessel_ratio_series(v) } else { bessel_ratio_cot(v) };
            let fd = interior_profile_fd(mu_r, v, 12000);
            assert!(
                (fd - exact).norm() <= 2e-5 * exact.norm(),
                "profile mismatch at |v| = {magnitude}: {fd} vs {exact}"
            );
        }
    }

    #[test]
    fn rejects_invalid_parameters_and_extreme_arguments() {
        assert!(matches!(
            SphereAnalytic::new(0.0, 1.5, 1e6),
            Err(OracleError::BadParameter { name: "alpha", .. })
        ));
        assert!(matches!(
            SphereAnalytic::new(0.01, -1.0, 1e6),
            Err(OracleError::BadParameter { name: "mu_r", .. })
        ));
        assert!(matches!(
            SphereAnalytic::new(0.01, 1.5, f64::NAN),
            Err(OracleError::BadParameter { name: "sigma_star", .. })
        ));

        let cfg = sphere(0.01, 1.5, 5.96e6);
        assert!(matches!(
            sphere_mpt_exact(&cfg, -1.0),
            Err(OracleError::BadFrequency(_))
        ));
        assert!(matches!(
            sphere_mpt_exact(&cfg, f64::NAN),
            Err(OracleError::BadFrequency(_))
        ));

        let extreme = sphere(1.0, 1.5, 1e8);
        assert!(matches!(
            sphere_mpt_exact(&extreme, 1e8),
            Err(OracleError::ArgumentOutOfRange(_))
        ));
    }
}
