//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use regime_core::episode::EpisodeConfig;
use regime_core::planners::PlannerSpec;
use regime_core::synthetic::GridSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Run,
    Grid,
    Analyze,
    Validate,
    Mixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkersKeyword {
    Auto,
}

/// Thread count, or `"auto"` for one per available core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Workers {
    Count(usize),
    Keyword(WorkersKeyword),
}

impl Default for Workers {
    fn default() -> Self {
        Workers::Keyword(WorkersKeyword::Auto)
    }
}

impl Workers {
    pub fn resolve(self) -> usize {
        match self {
            Workers::Count(n) => n.max(1),
            Workers::Keyword(WorkersKeyword::Auto) => std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleConfig {
    /// Long-format CSV `context_id,action_id,score`.
    Replay {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        features: Option<PathBuf>,
        #[serde(default)]
        obs_noise_sd: f64,
        /// Z-score each context before running.
        #[serde(default)]
        standardize: bool,
    },
    Synthetic {
        #[serde(default)]
        grid: GridSpec,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureConfig {
    pub cate_low: f64,
    pub cate_high: f64,
    #[serde(default)]
    pub target: f64,
}

fn d_c() -> f64 {
    2.0
}
fn d_theta() -> f64 {
    regime_core::prs::DEFAULT_THETA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeConfig {
    /// Condition summaries to read; defaults to `<output_dir>/conditions.jsonl`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default = "d_theta")]
    pub theta: f64,
    /// Constant of the `C·σ²/(τ²+σ²)` budget-ratio rule.
    #[serde(default = "d_c")]
    pub c: f64,
    #[serde(default = "d_tie")]
    pub tie_epsilon: f64,
    /// Exploratory side of the advantage contrast.
    #[serde(default = "d_explore")]
    pub explore_planner: String,
    #[serde(default = "d_greedy")]
    pub greedy_planner: String,
}

fn d_explore() -> String {
    "ucb".into()
}
fn d_greedy() -> String {
    "greedy".into()
}

fn d_tie() -> f64 {
    regime_core::analysis::DEFAULT_TIE_EPSILON
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            input: None,
            theta: d_theta(),
            c: d_c(),
            tie_epsilon: d_tie(),
            explore_planner: d_explore(),
            greedy_planner: d_greedy(),
        }
    }
}

fn d_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub workers: Workers,
    #[serde(default = "d_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode: Option<EpisodeConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub planners: Vec<PlannerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture: Option<MixtureConfig>,
    #[serde(default)]
    pub analyze: AnalyzeConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: None,
            master_seed: 0,
            workers: Workers::default(),
            output_dir: d_output_dir(),
            episode: None,
            planners: Vec::new(),
            oracle: None,
            mixture: None,
            analyze: AnalyzeConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // relative data paths are resolved against the config file
        if let Some(dir) = path.parent() {
            if let Some(OracleConfig::Replay { path, features, .. }) = &mut cfg.oracle {
                *path = anchor(dir, path);
                if let Some(f) = features {
                    *f = anchor(dir, f);
                }
            }
        }
        Ok(cfg)
    }
}

fn anchor(dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
master_seed = 7
workers = 4
output_dir = "results"

[episode]
budget = 5
prior_family = "ema"

[[planners]]
kind = "greedy"

[[planners]]
kind = "regime"
theta = 0.12

[oracle]
kind = "replay"
path = "scores.csv"
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.workers, Workers::Count(4));
        assert_eq!(cfg.planners.len(), 2);
        assert_eq!(cfg.planners[1].theta, 0.12);
        let once = cfg.to_toml().unwrap();
        let again = ExperimentConfig::from_toml(&once).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_toml().unwrap(), once);
    }

    #[test]
    fn synthetic_round_trip_and_auto_workers() {
        let cfg = ExperimentConfig::from_toml("workers = \"auto\"\n[oracle]\nkind = \"synthetic\"\n[oracle.grid]\nseeds_per_condition = 3\n").unwrap();
        assert_eq!(cfg.workers, Workers::Keyword(WorkersKeyword::Auto));
        assert!(cfg.workers.resolve() >= 1);
        let once = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&once).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_planner() {
        let err = ExperimentConfig::from_toml("[[planners]]\nkind = \"softmax\"\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
