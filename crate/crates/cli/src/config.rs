//! The configuration document: one JSON object with an optional section per
//! module. Unknown keys anywhere are rejected.

use std::path::Path;

use pulsemu::device::{DeviceParams, QubitParams};
use pulsemu::experiments::characterize::CharacterizeConfig;
use pulsemu::experiments::cw::CwConfig;
use pulsemu::experiments::iswap::IswapConfig;
use pulsemu::experiments::rb::RbConfig;
use pulsemu::experiments::reset::{QutritStudyConfig, ResetStudyConfig};
use pulsemu::sequencer::Program;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Desk,
    Paper,
}

/// Readout calibration parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutConfig {
    pub qubit: usize,
    pub preliminary_shots: u64,
    pub refine_shots: u64,
    /// Readout noise per quadrature and sample; the device value if absent.
    #[serde(default)]
    pub noise_sigma: Option<f64>,
    /// Shots per state in the exported store image.
    pub store_shots: u64,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        Self { qubit: 0, preliminary_shots: 2000, refine_shots: 2000, noise_sigma: None, store_shots: 1000 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDoc {
    pub device: Option<DeviceParams>,
    pub characterize: Option<CharacterizeConfig>,
    pub readout: Option<ReadoutConfig>,
    pub reset: Option<ResetStudyConfig>,
    pub rb: Option<RbConfig>,
    pub iswap: Option<IswapConfig>,
    pub qutrit: Option<QutritStudyConfig>,
    pub cw: Option<CwConfig>,
    pub program: Option<Program>,
}

impl ConfigDoc {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }

    /// The configured device, or `default` when the document has none.
    pub fn device_or(&self, default: DeviceParams) -> Result<DeviceParams, CliError> {
        let d = self.device.clone().unwrap_or(default);
        let v = d.check();
        if v.is_empty() {
            Ok(d)
        } else {
            Err(CliError::Validation(format!("device: {}", v.join("; "))))
        }
    }
}

/// Qubit 2 alone, the default for single-qubit experiments.
pub fn single_qubit() -> DeviceParams {
    DeviceParams::single(QubitParams::qubit2())
}

/// Qubit 2 with its second excited level.
pub fn single_qutrit() -> DeviceParams {
    let mut q = QubitParams::qubit2();
    q.levels = 3;
    DeviceParams::single(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<ConfigDoc>(r#"{"rb": {"lengths": [1], "realizations": 1, "shots": 1}}"#).is_ok());
        assert!(serde_json::from_str::<ConfigDoc>(r#"{"bogus": 1}"#).is_err());
        assert!(serde_json::from_str::<ConfigDoc>(r#"{"rb": {"lengths": [1], "realizations": 1, "shots": 1, "x": 0}}"#).is_err());
    }

    #[test]
    fn document_round_trips() {
        let doc = ConfigDoc { device: Some(single_qubit()), readout: Some(ReadoutConfig::default()), ..Default::default() };
        let back: ConfigDoc = serde_json::from_str(&serde_json::to_string(&doc).unwrap()).unwrap();
        assert_eq!(back, doc);
    }
}
