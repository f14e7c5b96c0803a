use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::DspConfig;
use crate::feedback::FeedbackConfig;
use crate::haptics::ActuatorLayout;
use crate::scoring::ScoringConfig;

/// Engine settings; every section is optional in the TOML file.
///
/// ```toml
/// [dsp]
/// cpp_threshold = 5.5
///
/// [layout]
/// n_actuators = 32
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub dsp: DspConfig,
    pub layout: ActuatorLayout,
    pub feedback: FeedbackConfig,
    pub scoring: ScoringConfig,
}

impl EngineConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn validate(&self) -> Result<(), String> {
        self.dsp.validate().map_err(|e| e.to_string())?;
        self.layout.validate().map_err(|e| e.to_string())
    }
}
