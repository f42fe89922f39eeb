//! Data bundles: a TOML manifest naming the machine and every measurement
//! file of a characterization campaign. Paths are relative to the manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{run_characterization, CharacterizationInputs, CharacterizationReport, InputFile};
use crate::model::{validate_datasheet, ModelError, RawDatasheet, Sector};
use crate::protocol::{build_standard_protocol, ProtocolError, ProtocolOverrides, ProtocolSpec};
use crate::sha256_hex;
use crate::timing::VerdictThresholds;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    /// Datasheet holding the axis limits the protocol is built from.
    pub machine: String,
    /// Published datasheet for the gap analysis, when it differs from `machine`.
    pub datasheet: Option<String>,
    pub sector: Option<Sector>,
    #[serde(default)]
    pub simulate: bool,
    /// Simulation sample period, s.
    pub dt: Option<f64>,
    #[serde(default)]
    pub overrides: ProtocolOverrides,
    pub thresholds: Option<VerdictThresholds>,
    #[serde(default)]
    pub traces: BTreeMap<String, String>,
    #[serde(default)]
    pub commanded_traces: BTreeMap<String, String>,
    pub positioning: Option<String>,
    pub circles: Option<String>,
    pub planes: Option<String>,
    pub perpendicular_pair: Option<[String; 2]>,
    /// mm
    pub perpendicular_length: Option<f64>,
    pub holes: Option<String>,
    pub profiles: Option<String>,
    pub timing: Option<String>,
    pub references: Option<String>,
}

/// A loaded manifest with its protocol ready to run.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub root: PathBuf,
    pub manifest: BundleManifest,
    pub spec: ProtocolSpec,
    pub inputs: CharacterizationInputs,
    machine_digest: (String, String),
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> BundleError {
    BundleError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Reads the manifest and the machine datasheet and builds the protocol.
/// Measurement files are only read when the bundle runs.
pub fn load_bundle(manifest_path: &Path) -> Result<Bundle, BundleError> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| io_error(manifest_path, e))?;
    let manifest: BundleManifest = toml::from_str(&text).map_err(|e| BundleError::Parse {
        path: manifest_path.display().to_string(),
        message: e.to_string(),
    })?;
    let root = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let file = |rel: &str| InputFile::new(rel, root.join(rel));

    let machine_path = root.join(&manifest.machine);
    let machine_bytes = std::fs::read(&machine_path).map_err(|e| io_error(&machine_path, e))?;
    let machine_text = String::from_utf8(machine_bytes.clone()).map_err(|e| io_error(&machine_path, e))?;
    let json = machine_path.extension().is_some_and(|e| e == "json");
    let raw = RawDatasheet::parse(&machine_text, json).map_err(|message| BundleError::Parse {
        path: machine_path.display().to_string(),
        message,
    })?;
    let machine = validate_datasheet(&raw)?;
    let spec = build_standard_protocol(&machine, &manifest.overrides)?;

    let inputs = CharacterizationInputs {
        simulate: manifest.simulate,
        dt: manifest.dt.unwrap_or(crate::motion::DEFAULT_DT),
        traces: manifest.traces.iter().map(|(id, p)| (id.clone(), file(p))).collect(),
        commanded_traces: manifest.commanded_traces.iter().map(|(id, p)| (id.clone(), file(p))).collect(),
        positioning: manifest.positioning.as_deref().map(file),
        circles: manifest.circles.as_deref().map(file),
        planes: manifest.planes.as_deref().map(file),
        perpendicular_pair: manifest.perpendicular_pair.clone(),
        perpendicular_length: manifest.perpendicular_length,
        holes: manifest.holes.as_deref().map(file),
        profiles: manifest.profiles.as_deref().map(file),
        timing: manifest.timing.as_deref().map(file),
        references: manifest.references.as_deref().map(file),
        datasheet: manifest.datasheet.as_deref().map(file),
        sector: manifest.sector,
        verdict_thresholds: manifest.thresholds.unwrap_or_default(),
    };
    Ok(Bundle {
        machine_digest: (manifest.machine.clone(), sha256_hex(&machine_bytes)),
        root,
        manifest,
        spec,
        inputs,
    })
}

impl Bundle {
    pub fn run(&self) -> CharacterizationReport {
        let mut report = run_characterization(&self.spec, &self.inputs);
        let (label, digest) = &self.machine_digest;
        report.provenance.inputs.insert(label.clone(), digest.clone());
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_rejects_unknown_keys() {
        assert!(toml::from_str::<BundleManifest>("machine = \"m.toml\"\nbogus = 1\n").is_err());
    }

    #[test]
    fn manifest_minimal() {
        let m: BundleManifest = toml::from_str("machine = \"m.toml\"\nsector = \"automotive\"\n[traces]\nA1-O = \"a.csv\"\n").unwrap();
        assert_eq!(m.sector, Some(Sector::Automotive));
        assert_eq!(m.traces["A1-O"], "a.csv");
        assert!(!m.simulate);
    }
}
