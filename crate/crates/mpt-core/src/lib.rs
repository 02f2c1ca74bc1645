//! Magnetic polarizability tensor (MPT) spectral signatures of conducting,
//! permeable objects at desk scale.
//!
//! The crate computes the frequency-dependent rank-2 tensor characterising how
//! a small conducting object perturbs a low-frequency magnetic field. A
//! lowest-order edge-element discretisation of the underlying eddy-current
//! transmission problems provides the full-order model; a proper orthogonal
//! decomposition surrogate accelerates frequency sweeps and attaches a
//! certified error bound to every reduced output; exact scaling identities map
//! computed signatures to objects with rescaled conductivity or size.

pub mod certificates;
pub mod config;
pub mod fem;
pub(crate) mod geom;
pub mod mesh;
pub mod mpt;
pub mod oracle;
pub mod pipeline;
pub mod pod;
pub mod report;
pub mod scaling;
pub mod transmission;

/// Permeability of free space μ₀ in H/m.
pub const MU_0: f64 = 4.0e-7 * std::f64::consts::PI;
