//! One JSON file with a section per stage. Missing sections and keys take
//! their defaults; unknown keys are rejected by name.

use std::path::Path;

use anyhow::{bail, Context};
use jellymon::benchkit::{DEFAULT_LENGTHS, MIN_REPETITIONS};
use jellymon::eventfuse::FusionTrainConfig;
use jellymon::framecls::FrameTrainConfig;
use jellymon::ganaug::GanConfig;
use jellymon::gate::GateConfig;
use jellymon::pipeline::{EnhanceConfig, RunConfig};
use jellymon::sonargen::GenConfig;
use jellymon::SplitSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunsSection {
    pub runs: usize,
    pub first_seed: u64,
}

impl Default for RunsSection {
    fn default() -> Self {
        Self { runs: 5, first_seed: 0 }
    }
}

impl RunsSection {
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.runs as u64).map(|i| self.first_seed + i).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub runs: usize,
    pub first_seed: u64,
    /// Train the frame classifier on GAN-enhanced data.
    pub generated: bool,
    /// Average frame confidences instead of the fusion network.
    pub average: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { runs: 5, first_seed: 0, generated: false, average: false }
    }
}

impl EvalSection {
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.runs as u64).map(|i| self.first_seed + i).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { min: 0.0, max: 0.95, step: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub lengths: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self { lengths: DEFAULT_LENGTHS.to_vec(), repetitions: MIN_REPETITIONS, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub gen: GenConfig,
    pub split: SplitSpec,
    pub frame: FrameTrainConfig,
    pub gan: GanConfig,
    pub enhance: EnhanceConfig,
    pub fusion: FusionTrainConfig,
    pub gate: GateConfig,
    pub eval: EvalSection,
    pub sweep: SweepSection,
    pub bench: BenchSection,
    pub pipeline: RunsSection,
}

pub const ECHO_FILE: &str = "config.json";

impl Config {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("config {}", path.display()))
    }

    /// Range checks that serde cannot express.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.gen.validate().context("gen")?;
        self.split.validate().context("split")?;
        GateConfig::new(self.gate.tau).context("gate.tau")?;
        if !(self.enhance.fraction > 0.0 && self.enhance.fraction <= 1.0) {
            bail!("enhance.fraction must lie in (0, 1], got {}", self.enhance.fraction);
        }
        Ok(())
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            split: self.split,
            frame: self.frame,
            gan: self.gan.clone(),
            enhance: self.enhance,
            fusion: self.fusion,
            gate: self.gate,
        }
    }

    /// Writes the effective config into `dir`.
    pub fn echo(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(dir.join(ECHO_FILE), json)?;
        Ok(())
    }
}
