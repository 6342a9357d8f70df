//! Experiment configuration: TOML key/value file with defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::auth::ScenarioKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Hmm,
    Sphmm,
}

impl std::fmt::Display for EngineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EngineKind::Hmm => write!(f, "hmm"),
            EngineKind::Sphmm => write!(f, "sphmm"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub engine: EngineKind,
    pub scenario: ScenarioKind,
    pub alpha: f64,
    pub n_states: usize,
    pub n_mix: usize,
    /// Mixture components per suprasegmental state.
    pub supra_mix: usize,
    pub seed: u64,
    pub multi_speaker: bool,
    pub adapt_threshold: bool,
    /// Threshold adaptation window W.
    pub window_w: usize,
    pub margin: f64,
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            engine: EngineKind::Sphmm,
            scenario: ScenarioKind::ScoreOnly,
            alpha: 0.5,
            n_states: 5,
            n_mix: 5,
            supra_mix: 1,
            seed: 7,
            multi_speaker: false,
            adapt_threshold: false,
            window_w: 16,
            margin: 0.0,
            jobs: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} out of [0,1]", self.alpha)));
        }
        if self.n_states == 0 || self.n_mix == 0 || self.supra_mix == 0 {
            return Err(Error::Config("n_states, n_mix, supra_mix must be positive".into()));
        }
        if self.window_w == 0 {
            return Err(Error::Config("window_w must be positive".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be positive".into()));
        }
        Ok(())
    }
}

/// Loads a TOML config; missing keys fall back to defaults, an empty file is
/// all defaults. Parse errors carry toml's line/column rendering.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let config: ExperimentConfig =
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c.n_states, 5);
        assert_eq!(c.n_mix, 5);
        assert_eq!(c.alpha, 0.5);
        assert_eq!(c.scenario, ScenarioKind::ScoreOnly);
        assert_eq!(c.engine, EngineKind::Sphmm);
    }

    #[test]
    fn overrides_apply() {
        let c = parse_config("alpha = 0.0\nengine = \"hmm\"\nn_states = 3\n").unwrap();
        assert_eq!(c.alpha, 0.0);
        assert_eq!(c.engine, EngineKind::Hmm);
        assert_eq!(c.n_states, 3);
    }

    #[test]
    fn alpha_out_of_range_rejected() {
        assert!(matches!(parse_config("alpha = 1.5\n"), Err(Error::Config(_))));
    }

    #[test]
    fn parse_error_reports_location() {
        let err = parse_config("alpha = = 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 1"), "message was: {msg}");
    }
}
