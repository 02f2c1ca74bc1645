//! Exact parameter-scaling transforms for computed tensor sweeps.
//!
//! The discrete eddy-current systems depend on frequency, object scale and
//! conductivity only through the product α²ωμ₀σ_* together with an α³ output
//! prefactor. Two consequences, both exact identities of the discrete model
//! on a fixed mesh:
//!
//! * scaling every conductivity by `s` reproduces the original sweep with the
//!   frequency axis divided by `s` and all tensor values unchanged;
//! * scaling the object size by `s` reproduces the sweep with the frequency
//!   axis divided by `s²` and every tensor multiplied by `s³`.
//!
//! Both transforms therefore convert an already-computed sweep into the sweep
//! of the scaled configuration without any new solves, and certified error
//! radii transport along with the values they bound. Scaled sweeps keep a
//! provenance trail recording what they were derived from.

use nalgebra::Matrix3;
use thiserror::Error;

use crate::mesh::Material;
use crate::mpt::MptSample;
use crate::transmission::FomModel;

#[derive(Debug, Error)]
pub enum ScalingError {
    #[error("scale factor must be positive and finite, got {0:e}")]
    BadScaleFactor(f64),
    #[error("object scale must be positive and finite, got {0:e}")]
    BadAlpha(f64),
    #[error("sweep samples must be strictly increasing in frequency (violated at index {0})")]
    UnorderedSamples(usize),
}

/// The physical configuration a sweep was computed for: the object scale in
/// metres and the material coefficients per mesh region.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub alpha: f64,
    pub materials: Vec<Material>,
}

impl SweepConfig {
    pub fn new(alpha: f64, materials: Vec<Material>) -> Self {
        SweepConfig { alpha, materials }
    }

    /// The configuration of an assembled full-order model.
    pub fn from_model(model: &FomModel) -> Self {
        SweepConfig { alpha: model.alpha(), materials: model.materials().to_vec() }
    }
}

/// Which scaling identity produced a derived sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleTransform {
    Conductivity,
    Size,
}

/// One step of a sweep's provenance trail: the configuration it was derived
/// from, the transform applied and its factor.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleRecord {
    pub transform: ScaleTransform,
    pub factor: f64,
    pub original: SweepConfig,
}

/// A frequency-ordered tensor sweep bound to one physical configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    config: SweepConfig,
    samples: Vec<MptSample>,
    provenance: Vec<ScaleRecord>,
}

impl Sweep {
    /// Binds samples to a configuration. The samples must be strictly
    /// increasing in frequency and the object scale positive.
    pub fn new(config: SweepConfig, samples: Vec<MptSample>) -> Result<Self, ScalingError> {
        if !(config.alpha > 0.0) || !config.alpha.is_finite() {
            return Err(ScalingError::BadAlpha(config.alpha));
        }
        for k in 1..samples.len() {
            if !(samples[k].omega > samples[k - 1].omega) {
                return Err(ScalingError::UnorderedSamples(k));
            }
        }
        Ok(Sweep { config, samples, provenance: Vec::new() })
    }

    /// Like [`Sweep::new`], but restores an already-recorded derivation
    /// trail (for sweeps reloaded from a saved report).
    pub fn with_provenance(
        config: SweepConfig,
        samples: Vec<MptSample>,
        provenance: Vec<ScaleRecord>,
    ) -> Result<Self, ScalingError> {
        let mut sweep = Self::new(config, samples)?;
        sweep.provenance = provenance;
        Ok(sweep)
    }

    pub fn config(&self) -> &SweepConfig {
        &self.config
    }

    pub fn samples(&self) -> &[MptSample] {
        &self.samples
    }

    /// Transform steps this sweep was derived through, oldest first; empty
    /// for a sweep computed directly.
    pub fn provenance(&self) -> &[ScaleRecord] {
        &self.provenance
    }
}

fn check_factor(s: f64) -> Result<(), ScalingError> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(ScalingError::BadScaleFactor(s));
    }
    Ok(())
}

fn derive(
    base: &Sweep,
    config: SweepConfig,
    samples: Vec<MptSample>,
    transform: ScaleTransform,
    factor: f64,
) -> Result<Sweep, ScalingError> {
    let mut out = Sweep::new(config, samples)?;
    out.provenance = base.provenance.clone();
    out.provenance.push(ScaleRecord { transform, factor, original: base.config.clone() });
    Ok(out)
}

/// The sweep of the same object with every conductivity multiplied by `s`:
/// the frequency axis shrinks by `s` and all tensor values, eigenvalues and
/// certified radii carry over unchanged, because the discrete systems at
/// (ω/s, s·σ) and (ω, σ) coincide.
pub fn scale_conductivity(sweep: &Sweep, s: f64) -> Result<Sweep, ScalingError> {
    check_factor(s)?;
    let config = SweepConfig {
        alpha: sweep.config.alpha,
        materials: sweep
            .config
            .materials
            .iter()
            .map(|m| Material { sigma_star: m.sigma_star * s, ..m.clone() })
            .collect(),
    };
    let samples = sweep
        .samples
        .iter()
        .map(|sample| MptSample { omega: sample.omega / s, ..sample.clone() })
        .collect();
    derive(sweep, config, samples, ScaleTransform::Conductivity, s)
}

/// The sweep of the object scaled in size by `s`: the frequency axis shrinks
/// by `s²` and every tensor output — static part, both eddy parts, their
/// eigenvalues, the asymmetry diagnostic and any certified radii — gains the
/// volume factor `s³`. Reduced-solve condition estimates are dimensionless
/// and carry over unchanged.
pub fn scale_size(sweep: &Sweep, s: f64) -> Result<Sweep, ScalingError> {
    check_factor(s)?;
    let cubed = s * s * s;
    let grow = |t: &Matrix3<f64>| t * cubed;
    let config = SweepConfig {
        alpha: sweep.config.alpha * s,
        materials: sweep.config.materials.clone(),
    };
    let samples = sweep
        .samples
        .iter()
        .map(|sample| MptSample {
            omega: sample.omega / (s * s),
            n0: grow(&sample.n0),
            r: grow(&sample.r),
            i: grow(&sample.i),
            eigs_real: sample.eigs_real.map(|v| v * cubed),
            eigs_imag: sample.eigs_imag.map(|v| v * cubed),
            asymmetry: sample.asymmetry * cubed,
            delta: sample.delta.as_ref().map(grow),
            kappa: sample.kappa,
        })
        .collect();
    derive(sweep, config, samples, ScaleTransform::Size, s)
}
