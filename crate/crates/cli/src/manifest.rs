//! JSON run manifests: what ran, on which bytes, and what came out.

use std::path::Path;

use cassi_core::forward_model::NoisyMeasurement;
use cassi_core::scene::MaskKind;
use cassi_core::{MetricReport, RunReport, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::digest;
use crate::error::{CliError, Result};

pub const FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub role: String,
    pub path: String,
    pub fnv1a64: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn new(role: &str, path: &Path, bytes: &[u8]) -> Self {
        Self {
            role: role.to_string(),
            path: path.display().to_string(),
            fnv1a64: digest::hex(bytes),
            bytes: bytes.len() as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRecord {
    pub bands: usize,
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    pub mask_kind: MaskKind,
    pub first_nm: f64,
    pub last_nm: f64,
    pub out_cube: String,
    pub out_mask: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRecord {
    pub cube: String,
    pub mask: String,
    pub shift: usize,
    pub snr_db: Option<f64>,
    pub seed: u64,
    pub out: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructRecord {
    pub meas: String,
    pub mask: String,
    pub shift: usize,
    pub bands: usize,
    pub truth: Option<String>,
    pub out: String,
    /// Fully resolved solver configuration, seeds included.
    pub config: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum CommandRecord {
    Synth(SynthRecord),
    Simulate(SimulateRecord),
    Reconstruct(Box<ReconstructRecord>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRecord {
    pub target_snr_db: f64,
    pub achieved_snr_db: f64,
    pub photon_scale: f64,
}

impl From<(&NoisyMeasurement, f64)> for NoiseRecord {
    fn from((n, target): (&NoisyMeasurement, f64)) -> Self {
        Self {
            target_snr_db: target,
            achieved_snr_db: n.achieved_snr_db,
            photon_scale: n.photon_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: u32,
    pub tool: String,
    pub run: CommandRecord,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    #[serde(default)]
    pub noise: Option<NoiseRecord>,
    #[serde(default)]
    pub report: Option<RunReport>,
    #[serde(default)]
    pub metrics: Option<MetricReport>,
    #[serde(default)]
    pub error: Option<String>,
}

impl RunManifest {
    pub fn new(run: CommandRecord) -> Self {
        Self {
            format: FORMAT,
            tool: format!("cassi {}", env!("CARGO_PKG_VERSION")),
            run,
            inputs: Vec::new(),
            outputs: Vec::new(),
            noise: None,
            report: None,
            metrics: None,
            error: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let m: Self = serde_json::from_str(&text).map_err(|e| CliError::parse(path, e))?;
        if m.format != FORMAT {
            return Err(CliError::parse(
                path,
                format!("unsupported manifest format {}", m.format),
            ));
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path, force: bool) -> Result<()> {
        crate::write_output(path, self.to_json().as_bytes(), force)
    }
}
