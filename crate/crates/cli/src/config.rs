use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use psv_core::eval::{default_shift_grid, PipelineConfig, HV_AMPLITUDES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    #[default]
    Hv,
    Reading,
    /// Ground truth read from `scenario.csv_path`.
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    /// Jump amplitudes, degrees.
    pub amplitudes: Vec<f64>,
    /// s
    pub dwell: f64,
    /// Minimum-jerk saccade duration, s; 0 keeps jumps instantaneous.
    pub saccade: f64,
    /// Lines per page of the reading stimulus.
    pub lines: usize,
    /// Reading duration, s.
    pub duration: f64,
    /// Same-direction shift magnitude of the scenario's events, mm; 0 disables.
    pub shift_mm: f64,
    /// s
    pub hv_event_duration: f64,
    /// s
    pub reading_event_duration: f64,
    pub csv_path: String,
    /// Magnitudes for `run --shift-grid`, mm.
    pub shift_grid: Vec<f64>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::Hv,
            amplitudes: HV_AMPLITUDES.to_vec(),
            dwell: 1.0,
            saccade: 0.0,
            lines: 5,
            duration: 10.0,
            shift_mm: 0.0,
            hv_event_duration: 4.0,
            reading_event_duration: 2.5,
            csv_path: String::new(),
            shift_grid: default_shift_grid(),
        }
    }
}

/// Pass/fail limits checked by `run`; they apply to corrected-mode output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Mean fixation accuracy per axis, degrees.
    pub accuracy_max_deg: f64,
    /// Mean crosstalk per direction, percent.
    pub crosstalk_max_pct: f64,
    /// Mean accuracy on the shifted axis during shifts, degrees.
    pub shifted_accuracy_max_deg: f64,
    /// Shift-grid magnitude at which traditional mode must have degraded, mm.
    pub grid_check_mm: f64,
    /// Traditional accuracy at `grid_check_mm` must be at least this, degrees.
    pub grid_traditional_min_deg: f64,
    /// Corrected must beat traditional for grid shifts at least this large, mm.
    pub grid_dominance_min_mm: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            accuracy_max_deg: 1.0,
            crosstalk_max_pct: 15.0,
            shifted_accuracy_max_deg: 1.5,
            grid_check_mm: 1.0,
            grid_traditional_min_deg: 2.0,
            grid_dominance_min_mm: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Output directory.
    pub out: PathBuf,
    pub scenario: ScenarioSpec,
    pub thresholds: Thresholds,
    pub pipeline: PipelineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("psv-out"),
            scenario: ScenarioSpec::default(),
            thresholds: Thresholds::default(),
            pipeline: PipelineConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// SHA-256 of the serialized configuration, ignoring the output
    /// directory so a moved run keeps its identity.
    pub fn hash(&self) -> Result<String> {
        let canonical = Self { out: PathBuf::new(), ..self.clone() };
        let digest = Sha256::digest(canonical.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_output_directory_only() {
        let base = RunConfig::default();
        let moved = RunConfig { out: PathBuf::from("elsewhere"), ..base.clone() };
        let reseeded = RunConfig { seed: 7, ..base.clone() };
        let h = base.hash().unwrap();
        assert_eq!(h.len(), 64);
        assert_eq!(h, moved.hash().unwrap());
        assert_ne!(h, reseeded.hash().unwrap());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: RunConfig = toml::from_str("seed = 3\n[pipeline.stream]\nma_window = 5\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.pipeline.stream.ma_window, 5);
        assert_eq!(cfg.pipeline.stream.f_psog, 1000);
        assert_eq!(cfg.scenario, ScenarioSpec::default());
    }
}
