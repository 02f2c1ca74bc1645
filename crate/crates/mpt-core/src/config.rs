//! Run configuration: one TOML document describing the mesh source, the
//! object geometry and materials, the frequency sweep, the reduction
//! tolerance and the solver knobs.
//!
//! A configuration is parsed, then validated as a whole; command-line
//! overrides mutate the public fields and re-run [`RunConfig::validate`].

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::fem::DEFAULT_SOLVE_TOL;
use crate::mesh::{Material, MaterialSet, MeshError, Shape, TaggedShape};
use crate::pod::Spacing;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read configuration {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("configuration syntax: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("configuration field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error(transparent)]
    Material(#[from] MeshError),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, reason: reason.into() }
}

/// Where the computational mesh comes from: either the structured box
/// generator or a neutral-format mesh file that already carries region tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    /// Half-width of the generated truncation box, in object-scale units.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    /// Structured divisions per axis of the generated box.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divisions: Option<usize>,
    /// Local refinement rounds around the tagged shapes (generator only).
    #[serde(default)]
    pub refine_levels: u32,
    /// Path to a neutral-format mesh file, alternative to the generator.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

/// Geometry of one tagged region, in object-scale units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum GeometryConfig {
    Sphere { center: [f64; 3], radius: f64 },
    Cuboid { min: [f64; 3], max: [f64; 3] },
    Tetrahedron { vertices: [[f64; 3]; 4] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeConfig {
    pub region: String,
    #[serde(flatten)]
    pub geometry: GeometryConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub region: String,
    pub mu_r: f64,
    pub sigma: f64,
    /// True when the region belongs to the object rather than free space.
    #[serde(default = "default_true")]
    pub object: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SpacingConfig {
    #[default]
    Log,
    Lin,
}

impl From<SpacingConfig> for Spacing {
    fn from(s: SpacingConfig) -> Spacing {
        match s {
            SpacingConfig::Log => Spacing::Log,
            SpacingConfig::Lin => Spacing::Lin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfigSection {
    pub omega_min: f64,
    pub omega_max: f64,
    /// Snapshot count N used to train the reduced basis.
    pub snapshots: usize,
    /// Output count N₀ (defaults to the snapshot count; must be ≥ it).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outputs: Option<usize>,
    #[serde(default)]
    pub spacing: SpacingConfig,
    /// Count of off-grid frequencies used to verify certified bounds.
    #[serde(default = "default_verification_points")]
    pub verification_points: usize,
}

fn default_verification_points() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReductionConfig {
    /// Relative singular-value cut-off TOL for basis truncation.
    pub tol: f64,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        ReductionConfig { tol: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Override for the gauge regularisation ε (auto-scaled when absent).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Relative residual target of the linear solves.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out") }
    }
}

/// A complete, not-yet-validated run description; the public fields allow
/// command-line overrides before [`RunConfig::validate`] runs again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Object scale α in metres.
    pub alpha: f64,
    pub mesh: MeshConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shapes: Vec<ShapeConfig>,
    pub materials: Vec<MaterialConfig>,
    pub sweep: SweepConfigSection,
    #[serde(default)]
    pub reduction: ReductionConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(field, format!("must be positive and finite, got {v:e}")))
            }
        };
        positive("alpha", self.alpha)?;

        match (&self.mesh.file, self.mesh.half_width, self.mesh.divisions) {
            (Some(_), None, None) => {
                if !self.shapes.is_empty() {
                    return Err(invalid(
                        "shapes",
                        "a mesh file carries its own region tags; shapes only apply to \
                         the generator",
                    ));
                }
                if self.mesh.refine_levels != 0 {
                    return Err(invalid(
                        "mesh.refine_levels",
                        "refinement only applies to the generator",
                    ));
                }
            }
            (None, Some(w), Some(d)) => {
                positive("mesh.half_width", w)?;
                if d == 0 {
                    return Err(invalid("mesh.divisions", "must be at least 1"));
                }
            }
            _ => {
                return Err(invalid(
                    "mesh",
                    "provide either `file` or both `half_width` and `divisions`",
                ));
            }
        }

        for shape in &self.shapes {
            if !self.materials.iter().any(|m| m.region == shape.region) {
                return Err(invalid(
                    "shapes",
                    format!("region `{}` has no material entry", shape.region),
                ));
            }
            let degenerate = |what: &str| {
                invalid("shapes", format!("region `{}`: {what}", shape.region))
            };
            match &shape.geometry {
                GeometryConfig::Sphere { radius, .. } => {
                    if !(*radius > 0.0) || !radius.is_finite() {
                        return Err(degenerate("sphere radius must be positive and finite"));
                    }
                }
                GeometryConfig::Cuboid { min, max } => {
                    if (0..3).any(|k| !(max[k] > min[k]) || !min[k].is_finite()) {
                        return Err(degenerate("cuboid needs min < max on every axis"));
                    }
                }
                GeometryConfig::Tetrahedron { vertices } => {
                    let vol = crate::geom::tet_signed_volume(vertices);
                    if !(vol.abs() > 0.0) || !vol.is_finite() {
                        return Err(degenerate("tetrahedron vertices are degenerate"));
                    }
                }
            }
        }
        if self.materials.is_empty() {
            return Err(invalid("materials", "at least one material is required"));
        }
        for m in &self.materials {
            positive("materials.mu_r", m.mu_r)?;
            if !(m.sigma >= 0.0) || !m.sigma.is_finite() {
                return Err(invalid(
                    "materials.sigma",
                    format!("must be non-negative and finite, got {:e}", m.sigma),
                ));
            }
        }

        positive("sweep.omega_min", self.sweep.omega_min)?;
        positive("sweep.omega_max", self.sweep.omega_max)?;
        if !(self.sweep.omega_max > self.sweep.omega_min) {
            return Err(invalid("sweep.omega_max", "must exceed sweep.omega_min"));
        }
        if self.sweep.snapshots == 0 {
            return Err(invalid("sweep.snapshots", "must be at least 1"));
        }
        if let Some(n0) = self.sweep.outputs {
            if n0 < self.sweep.snapshots {
                return Err(invalid(
                    "sweep.outputs",
                    format!(
                        "output count {n0} must be at least the snapshot count {}",
                        self.sweep.snapshots
                    ),
                ));
            }
        }
        if self.sweep.verification_points == 0 {
            return Err(invalid("sweep.verification_points", "must be at least 1"));
        }

        if !(self.reduction.tol >= 0.0) || !self.reduction.tol.is_finite() {
            return Err(invalid(
                "reduction.tol",
                format!("must be non-negative and finite, got {:e}", self.reduction.tol),
            ));
        }
        if let Some(eps) = self.solver.epsilon {
            positive("solver.epsilon", eps)?;
        }
        if let Some(tol) = self.solver.tolerance {
            positive("solver.tolerance", tol)?;
        }
        Ok(())
    }

    /// Output count N₀; defaults to the snapshot count.
    pub fn outputs(&self) -> usize {
        self.sweep.outputs.unwrap_or(self.sweep.snapshots)
    }

    pub fn spacing(&self) -> Spacing {
        self.sweep.spacing.into()
    }

    pub fn solve_tolerance(&self) -> f64 {
        self.solver.tolerance.unwrap_or(DEFAULT_SOLVE_TOL)
    }

    /// Declared materials as a validated set (exterior auto-appended).
    pub fn material_set(&self) -> Result<MaterialSet, ConfigError> {
        let materials = self
            .materials
            .iter()
            .map(|m| Material::new(m.region.clone(), m.mu_r, m.sigma, m.object))
            .collect();
        Ok(MaterialSet::new(materials)?)
    }

    /// Tagging shapes for the mesh generator.
    pub fn tagged_shapes(&self) -> Vec<TaggedShape> {
        self.shapes
            .iter()
            .map(|s| {
                let shape = match &s.geometry {
                    GeometryConfig::Sphere { center, radius } => {
                        Shape::Sphere { center: *center, radius: *radius }
                    }
                    GeometryConfig::Cuboid { min, max } => {
                        Shape::Cuboid { min: *min, max: *max }
                    }
                    GeometryConfig::Tetrahedron { vertices } => {
                        Shape::Tetrahedron { vertices: *vertices }
                    }
                };
                TaggedShape::new(shape, s.region.clone())
            })
            .collect()
    }
}
