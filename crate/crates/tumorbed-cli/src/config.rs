//! Run configuration: a TOML file merged with command-line flags.
//!
//! Flags win over the config file, which wins over the built-in defaults
//! (side 512, stride 256, tau 0.5, foreground 0.25, k 3000, m 7). Every
//! command writes the fully resolved configuration into its output directory;
//! re-running with that file reproduces the outputs bit for bit.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tumorbed::imaging::HsvBounds;
use tumorbed::inference::PipelineParams;
use tumorbed::synth::{CohortSpec, OracleConfig};

use crate::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub command: Option<String>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    /// `oracle`, `scores:PATH`, or `proto:ADDR`.
    pub classifier: Option<String>,
    pub mpp_override: Option<f64>,
    pub timeout_secs: Option<u64>,
    pub pipeline: PipelineSection,
    pub oracle: OracleSection,
    pub mining: MiningSection,
    pub synth: Option<CohortSpec>,
    pub inputs: InputsSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineSection {
    pub side: Option<u32>,
    pub stride: Option<u32>,
    pub tau: Option<f64>,
    pub foreground_threshold: Option<f64>,
    pub cell_size: Option<u32>,
    pub workers: Option<usize>,
    pub hsv: Option<HsvBounds>,
}

impl PipelineSection {
    pub fn from_params(p: &PipelineParams) -> Self {
        PipelineSection {
            side: Some(p.side),
            stride: Some(p.stride),
            tau: Some(p.tau),
            foreground_threshold: Some(p.foreground_threshold),
            cell_size: p.cell_size,
            workers: Some(p.workers),
            hsv: Some(p.hsv),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleSection {
    pub p_fp: Option<f64>,
    pub p_fn: Option<f64>,
    pub overlap_rule: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct MiningSection {
    pub strategy: Option<String>,
    pub k: Option<usize>,
    pub m: Option<usize>,
    pub batch_size: Option<usize>,
    pub max_iters: Option<usize>,
    pub m_total: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct InputsSection {
    pub slides: Vec<PathBuf>,
    pub features: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub polygon: Option<PathBuf>,
    pub spec: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn load_opt(path: Option<&Path>) -> Result<RunConfig, CliError> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(RunConfig::default()),
        }
    }

    /// Effective pipeline parameters with flag overrides applied on top.
    pub fn pipeline_params(&self, flags: &PipelineFlags) -> PipelineParams {
        let defaults = PipelineParams::default();
        PipelineParams {
            side: flags.side.or(self.pipeline.side).unwrap_or(defaults.side),
            stride: flags
                .stride
                .or(self.pipeline.stride)
                .unwrap_or(defaults.stride),
            tau: flags.tau.or(self.pipeline.tau).unwrap_or(defaults.tau),
            foreground_threshold: flags
                .foreground_threshold
                .or(self.pipeline.foreground_threshold)
                .unwrap_or(defaults.foreground_threshold),
            hsv: self.pipeline.hsv.unwrap_or(defaults.hsv),
            cell_size: flags.cell_size.or(self.pipeline.cell_size),
            workers: flags
                .workers
                .or(self.pipeline.workers)
                .unwrap_or(defaults.workers),
        }
    }

    pub fn oracle_config(&self, seed_flag: Option<u64>) -> OracleConfig {
        let defaults = OracleConfig::default();
        OracleConfig {
            p_fp: self.oracle.p_fp.unwrap_or(defaults.p_fp),
            p_fn: self.oracle.p_fn.unwrap_or(defaults.p_fn),
            overlap_rule: self.oracle.overlap_rule.unwrap_or(defaults.overlap_rule),
            seed: seed_flag
                .or(self.oracle.seed)
                .or(self.seed)
                .unwrap_or(defaults.seed),
        }
    }
}

/// Pipeline-related flags shared by commands that run the pipeline.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct PipelineFlags {
    /// Tile side in pixels.
    #[arg(long)]
    pub side: Option<u32>,
    /// Sliding-window stride in pixels.
    #[arg(long)]
    pub stride: Option<u32>,
    /// Heatmap binarization threshold.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Minimum tile foreground ratio to score.
    #[arg(long = "fg-threshold")]
    pub foreground_threshold: Option<f64>,
    /// Heatmap cell size in pixels (defaults to the stride).
    #[arg(long)]
    pub cell_size: Option<u32>,
    /// Scoring worker threads (0 = auto).
    #[arg(long)]
    pub workers: Option<usize>,
}

/// Writes the resolved configuration into the output directory.
pub fn write_resolved(out_dir: &Path, resolved: &RunConfig) -> Result<PathBuf, CliError> {
    let path = out_dir.join("resolved-config.toml");
    let text = toml::to_string_pretty(resolved)
        .map_err(|e| CliError::config(format!("serialize resolved config: {e}")))?;
    tumorbed::formats::atomic_write(&path, text.as_bytes())?;
    Ok(path)
}
