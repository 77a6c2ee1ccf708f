//! TOML run configuration. Every table rejects unknown keys.
//!
//! ```toml
//! system = "CP*"            # or a full [numerology] table
//!
//! [pilot]
//! kind = "embedded"         # dirac | uw | embedded | none
//! sigma_u_sq = 0.5
//!
//! [bem]
//! rate = 3.0
//!
//! [simulation]
//! ebn0_db = [20.0, 28.0]
//! velocity = 400.0
//! realizations = 400
//! seed = 1
//! csi = "estimated"         # perfect | estimated
//! cancel_pilot = false
//! paths = 16
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::numerology::{Numerology, RawNumerology, SystemId};
use crate::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub system: Option<String>,
    pub numerology: Option<RawNumerology>,
    pub pilot: Option<PilotSection>,
    pub bem: Option<BemSection>,
    pub simulation: Option<SimulationSection>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PilotSection {
    pub kind: Option<String>,
    pub sigma_u_sq: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BemSection {
    pub rate: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub ebn0_db: Option<Vec<f64>>,
    pub velocity: Option<f64>,
    pub realizations: Option<usize>,
    pub seed: Option<u64>,
    pub csi: Option<String>,
    pub cancel_pilot: Option<bool>,
    pub paths: Option<usize>,
}

pub fn parse_config(text: &str) -> Result<FileConfig> {
    let cfg: FileConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    if cfg.system.is_some() && cfg.numerology.is_some() {
        return Err(Error::Config("give either `system` or a [numerology] table, not both".into()));
    }
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

impl FileConfig {
    /// Label and numerology named by the file, if any.
    pub fn numerology(&self) -> Result<Option<(String, Numerology)>> {
        if let Some(name) = &self.system {
            let id: SystemId = name.parse()?;
            return Ok(Some((id.label().to_string(), id.numerology())));
        }
        match &self.numerology {
            Some(raw) => {
                let label = match raw.variant {
                    crate::numerology::Variant::Uw => "UW-custom",
                    crate::numerology::Variant::Cp => "CP-custom",
                };
                Ok(Some((label.to_string(), Numerology::derive(raw)?)))
            }
            None => Ok(None),
        }
    }
}
