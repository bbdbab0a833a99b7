//! Experiment configuration, read from TOML or JSON.
//!
//! ```toml
//! M_list = [3, 10]
//! alpha = 0.05
//! replications = 200
//! N_b = 1000
//! modes = ["sign", "classical"]
//! output_dir = "out/null"
//!
//! [design]
//! model = "null"
//! n1 = 100
//! n2 = 100
//! m = 100
//! seed = 2024
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sscov::{SimDesign, StatisticScope, TestMode};

use crate::error::{CliError, Result};

/// Where the two samples of a replication come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fixture {
    /// Draw both samples from the design.
    #[default]
    Simulated,
    /// Use the design's first sample twice. Every statistic is then zero.
    Identical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub design: SimDesign,
    #[serde(rename = "M_list")]
    pub m_list: Vec<usize>,
    pub alpha: f64,
    pub replications: usize,
    #[serde(rename = "N_b")]
    pub n_b: usize,
    pub modes: Vec<TestMode>,
    pub output_dir: PathBuf,
    /// Δ values to sweep; defaults to the design's own Δ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    /// Clean/contaminated settings to sweep; defaults to the design's flag.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contamination: Option<Vec<bool>>,
    #[serde(default)]
    pub scope: StatisticScope,
    #[serde(default)]
    pub fixture: Fixture,
    /// Replications run between two checkpoint flushes.
    #[serde(default = "default_chunk")]
    pub chunk_size: usize,
}

fn default_chunk() -> usize {
    32
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::InvalidConfig(format!("{}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let cfg: ExperimentConfig = if is_json {
            serde_json::from_str(&text).map_err(|e| CliError::InvalidConfig(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| CliError::InvalidConfig(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CliError::InvalidConfig(msg));
        self.design.validate().map_err(|e| CliError::InvalidConfig(e.to_string()))?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.replications == 0 {
            return bad("replications must be >= 1".into());
        }
        if self.n_b == 0 {
            return bad("N_b must be >= 1".into());
        }
        if self.m_list.is_empty() {
            return bad("M_list must not be empty".into());
        }
        if let Some(&m) = self.m_list.iter().find(|&&m| m == 0 || m > self.design.m) {
            return bad(format!("M = {m} outside 1..={}", self.design.m));
        }
        if self.modes.is_empty() {
            return bad("modes must not be empty".into());
        }
        if self.chunk_size == 0 {
            return bad("chunk_size must be >= 1".into());
        }
        for d in self.deltas() {
            let probe = SimDesign { delta: d, ..self.design.clone() };
            probe.validate().map_err(|e| CliError::InvalidConfig(e.to_string()))?;
        }
        if self.contamination.as_ref().is_some_and(Vec::is_empty) || self.deltas.as_ref().is_some_and(Vec::is_empty) {
            return bad("sweep lists must not be empty".into());
        }
        Ok(())
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.deltas.clone().unwrap_or_else(|| vec![self.design.delta])
    }

    pub fn contamination_levels(&self) -> Vec<bool> {
        self.contamination.clone().unwrap_or_else(|| vec![self.design.contaminated])
    }

    /// Modes in first-seen order without repeats.
    pub fn unique_modes(&self) -> Vec<TestMode> {
        let mut out: Vec<TestMode> = Vec::new();
        for m in &self.modes {
            if !out.contains(m) {
                out.push(*m);
            }
        }
        out
    }
}
