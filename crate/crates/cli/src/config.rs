use std::path::Path;

use hsm_core::report::ReportFormat;
use hsm_core::timing::VerdictThresholds;
use serde::Deserialize;

use crate::commands::CliError;

/// Defaults read from `--config`; command-line flags win.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    /// Simulation sample period, s.
    pub dt: Option<f64>,
    /// Savitzky-Golay window; 1 disables smoothing.
    pub smoothing_window: Option<usize>,
    pub thresholds: Option<VerdictThresholds>,
    pub format: Option<ReportFormat>,
}

/// Reads a TOML document, or JSON when the extension is `.json`.
pub fn read_document<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), read_document)
    }
}
