//! Sweep reports: the structured results of a frequency sweep together with
//! mode tables, certificate metadata, provenance and timing, emitted as a
//! JSON document plus a fixed-schema CSV table.
//!
//! The CSV column order is frozen so golden-file comparisons stay valid:
//! omega, the six independent tensor coefficients as re/im pairs (in-phase
//! part and loss part), the six static coefficients, three eigenvalues of
//! the real part and three of the loss part, six certified radii (blank when
//! no certificate was computed) and the asymmetry diagnostic. Timing and
//! condition estimates live only in the JSON document, so CSV output is
//! byte-identical across repeated runs.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::config::MaterialConfig;
use crate::mesh::Material;
use crate::mpt::MptSample;
use crate::scaling::{ScaleRecord, ScaleTransform, Sweep, SweepConfig};

/// Independent entries of a symmetric 3×3 tensor, in report order.
pub const SYMMETRIC_ENTRIES: [(usize, usize); 6] =
    [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

/// The frozen CSV header.
pub const CSV_HEADER: &str = "omega,\
    r_11,i_11,r_22,i_22,r_33,i_33,r_12,i_12,r_13,i_13,r_23,i_23,\
    n0_11,n0_22,n0_33,n0_12,n0_13,n0_23,\
    eig_re_1,eig_re_2,eig_re_3,eig_im_1,eig_im_2,eig_im_3,\
    delta_11,delta_22,delta_33,delta_12,delta_13,delta_23,\
    asymmetry";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot access report {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("report encoding: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed report: {0}")]
    Malformed(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.to_path_buf(), source }
}

/// One output frequency of a sweep, with symmetric tensors stored as their
/// six independent coefficients in [`SYMMETRIC_ENTRIES`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub omega: f64,
    /// In-phase eddy part R.
    pub r: [f64; 6],
    /// Loss part I.
    pub i: [f64; 6],
    /// Static permeability part N⁰.
    pub n0: [f64; 6],
    /// Eigenvalues of N⁰ + R, ascending.
    pub eigs_real: [f64; 3],
    /// Eigenvalues of I, ascending.
    pub eigs_imag: [f64; 3],
    /// Certified error radii, present for certified reduced sweeps.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delta: Option<[f64; 6]>,
    /// Reduced-solve condition estimate (JSON only, never in the CSV).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kappa: Option<f64>,
    /// Worst pre-symmetrisation entry defect across the three tensors.
    pub asymmetry: f64,
}

fn pack(t: &Matrix3<f64>) -> [f64; 6] {
    SYMMETRIC_ENTRIES.map(|(a, b)| t[(a, b)])
}

fn unpack(v: &[f64; 6]) -> Matrix3<f64> {
    let mut t = Matrix3::zeros();
    for (k, (a, b)) in SYMMETRIC_ENTRIES.iter().enumerate() {
        t[(*a, *b)] = v[k];
        t[(*b, *a)] = v[k];
    }
    t
}

impl From<&MptSample> for ReportRow {
    fn from(s: &MptSample) -> Self {
        ReportRow {
            omega: s.omega,
            r: pack(&s.r),
            i: pack(&s.i),
            n0: pack(&s.n0),
            eigs_real: s.eigs_real,
            eigs_imag: s.eigs_imag,
            delta: s.delta.as_ref().map(pack),
            kappa: s.kappa,
            asymmetry: s.asymmetry,
        }
    }
}

impl ReportRow {
    pub fn to_sample(&self) -> MptSample {
        MptSample {
            omega: self.omega,
            n0: unpack(&self.n0),
            r: unpack(&self.r),
            i: unpack(&self.i),
            eigs_real: self.eigs_real,
            eigs_imag: self.eigs_imag,
            asymmetry: self.asymmetry,
            delta: self.delta.as_ref().map(unpack),
            kappa: self.kappa,
        }
    }
}

/// Singular-value table of one direction's snapshot matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeTable {
    pub direction: usize,
    /// Retained mode count M.
    pub kept: usize,
    /// Full spectrum, descending.
    pub singular_values: Vec<f64>,
}

/// Offline/online wall-clock split, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ReportTiming {
    pub offline_snapshots: f64,
    pub offline_svd: f64,
    pub offline_projection: f64,
    pub offline_certificate: f64,
    pub online_solves: f64,
    pub online_outputs: f64,
    pub online_certificates: f64,
    /// Full-order solve time (baseline sweeps).
    pub full_order: f64,
    pub total: f64,
}

/// Echo of the physical configuration the sweep was computed for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfiguration {
    pub alpha: f64,
    pub materials: Vec<MaterialConfig>,
}

impl ReportConfiguration {
    pub fn from_materials(alpha: f64, materials: &[Material]) -> Self {
        ReportConfiguration {
            alpha,
            materials: materials
                .iter()
                .map(|m| MaterialConfig {
                    region: m.region.clone(),
                    mu_r: m.mu_r,
                    sigma: m.sigma_star,
                    object: m.is_object,
                })
                .collect(),
        }
    }

    pub fn to_materials(&self) -> Vec<Material> {
        self.materials
            .iter()
            .map(|m| Material::new(m.region.clone(), m.mu_r, m.sigma, m.object))
            .collect()
    }
}

/// One provenance step of a scaled sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportProvenance {
    pub transform: String,
    pub factor: f64,
    pub original: ReportConfiguration,
}

/// Certificate metadata of a certified reduced sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    /// Stability eigenvalue λ_min computed at the base frequency.
    pub lambda_min: f64,
    /// Base frequency ω′ of the stability constant.
    pub omega_prime: f64,
}

/// Mesh size indicators of the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshSummary {
    pub vertices: usize,
    pub tets: usize,
    pub dofs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportKind {
    /// Full-order sweep.
    Full,
    /// Reduced-order sweep with certified bounds.
    Reduced,
    /// Derived from another report by a scaling transform.
    Scaled,
}

/// The complete result document of one sweep command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub kind: ReportKind,
    pub configuration: ReportConfiguration,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mesh: Option<MeshSummary>,
    pub rows: Vec<ReportRow>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub modes: Option<Vec<ModeTable>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub certificate: Option<CertificateSummary>,
    #[serde(default)]
    pub timing: ReportTiming,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub provenance: Vec<ReportProvenance>,
}

fn transform_name(t: ScaleTransform) -> &'static str {
    match t {
        ScaleTransform::Conductivity => "conductivity",
        ScaleTransform::Size => "size",
    }
}

impl SweepReport {
    /// Report of a sweep derived through scaling transforms.
    pub fn from_scaled_sweep(sweep: &Sweep) -> Self {
        SweepReport {
            kind: ReportKind::Scaled,
            configuration: ReportConfiguration::from_materials(
                sweep.config().alpha,
                &sweep.config().materials,
            ),
            mesh: None,
            rows: sweep.samples().iter().map(ReportRow::from).collect(),
            modes: None,
            certificate: None,
            timing: ReportTiming::default(),
            provenance: sweep
                .provenance()
                .iter()
                .map(|r: &ScaleRecord| ReportProvenance {
                    transform: transform_name(r.transform).to_string(),
                    factor: r.factor,
                    original: ReportConfiguration::from_materials(
                        r.original.alpha,
                        &r.original.materials,
                    ),
                })
                .collect(),
        }
    }

    /// Reassembles the report rows into a sweep ready for scaling, including
    /// any derivation trail the report carries.
    pub fn to_sweep(&self) -> Result<Sweep, ReportError> {
        let config = SweepConfig::new(
            self.configuration.alpha,
            self.configuration.to_materials(),
        );
        let samples = self.rows.iter().map(ReportRow::to_sample).collect();
        let provenance = self
            .provenance
            .iter()
            .map(|p| {
                let transform = match p.transform.as_str() {
                    "conductivity" => ScaleTransform::Conductivity,
                    "size" => ScaleTransform::Size,
                    other => {
                        return Err(ReportError::Malformed(format!(
                            "unknown transform `{other}` in provenance"
                        )))
                    }
                };
                Ok(ScaleRecord {
                    transform,
                    factor: p.factor,
                    original: SweepConfig::new(p.original.alpha, p.original.to_materials()),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Sweep::with_provenance(config, samples, provenance)
            .map_err(|e| ReportError::Malformed(e.to_string()))
    }

    /// The fixed-schema CSV document.
    pub fn csv_string(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            push_csv_row(&mut out, row);
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), ReportError> {
        let path = path.as_ref();
        std::fs::write(path, self.csv_string()).map_err(io_err(path))
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<(), ReportError> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(io_err(path))?;
        let mut buf = std::io::BufWriter::new(file);
        serde_json::to_writer_pretty(&mut buf, self)?;
        buf.write_all(b"\n").map_err(io_err(path))?;
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self, ReportError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Writes `<stem>.csv` and `<stem>.json` under `dir`, creating the
    /// directory when needed; returns the JSON path.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<PathBuf, ReportError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        self.write_csv(dir.join(format!("{stem}.csv")))?;
        let json = dir.join(format!("{stem}.json"));
        self.write_json(&json)?;
        Ok(json)
    }
}

fn push_csv_row(out: &mut String, row: &ReportRow) {
    use std::fmt::Write as _;
    let mut cells: Vec<Option<f64>> = Vec::with_capacity(32);
    cells.push(Some(row.omega));
    for k in 0..6 {
        cells.push(Some(row.r[k]));
        cells.push(Some(row.i[k]));
    }
    cells.extend(row.n0.iter().map(|&v| Some(v)));
    cells.extend(row.eigs_real.iter().map(|&v| Some(v)));
    cells.extend(row.eigs_imag.iter().map(|&v| Some(v)));
    match &row.delta {
        Some(d) => cells.extend(d.iter().map(|&v| Some(v))),
        None => cells.extend(std::iter::repeat_n(None, 6)),
    }
    cells.push(Some(row.asymmetry));
    for (k, cell) in cells.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        if let Some(v) = cell {
            let _ = write!(out, "{v}");
        }
    }
    out.push('\n');
}
