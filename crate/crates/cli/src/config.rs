//! Experiment configuration: a TOML file with every default spelled out in
//! the resolved copy written next to each command's outputs.

use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use shapebridge::nn::{DenoiserConfig, ProcessKind, TrainerConfig};
use shapebridge::phantom::PhantomSpec;

use crate::UsageError;

pub const RESOLVED_CONFIG: &str = "resolved-config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub items: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig { items: 90 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionConfig {
    pub process: ProcessKind,
    pub steps: usize,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig {
            process: ProcessKind::Bridge,
            steps: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub steps: usize,
    pub eta: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            steps: 10,
            eta: 1.0,
            samples: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub points: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            points: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Dataset seed.
    pub seed: u64,
    pub phantom: PhantomSpec,
    pub dataset: DatasetConfig,
    pub diffusion: DiffusionConfig,
    pub sampling: SamplingConfig,
    pub model: DenoiserConfig,
    pub trainer: TrainerConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 2024,
            phantom: PhantomSpec::default(),
            dataset: DatasetConfig::default(),
            diffusion: DiffusionConfig::default(),
            sampling: SamplingConfig::default(),
            model: DenoiserConfig::default(),
            trainer: TrainerConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| UsageError(format!("invalid config: {e}")))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let usage = |m: String| -> anyhow::Result<()> { Err(UsageError(m).into()) };
        self.phantom.validate()?;
        self.model.validate()?;
        if self.dataset.items < 3 {
            return usage(format!(
                "dataset.items must be >= 3, got {}",
                self.dataset.items
            ));
        }
        if self.diffusion.steps < 2 {
            return usage("diffusion.steps must be >= 2".into());
        }
        let s = &self.sampling;
        if s.steps == 0 || s.steps > self.diffusion.steps {
            return usage(format!(
                "sampling.steps must lie in [1, {}]",
                self.diffusion.steps
            ));
        }
        if !(0.0..=1.0).contains(&s.eta) {
            return usage("sampling.eta must lie in [0, 1]".into());
        }
        if s.samples == 0 {
            return usage("sampling.samples must be >= 1".into());
        }
        let t = &self.trainer;
        if !(t.lr > 0.0) || t.batch_size == 0 || !(0.0..1.0).contains(&t.ema_rate) {
            return usage("trainer needs lr > 0, batch_size >= 1 and ema_rate in [0, 1)".into());
        }
        if !(0.0..1.0).contains(&t.beta1) || !(0.0..1.0).contains(&t.beta2) || !(t.adam_eps > 0.0) {
            return usage("trainer Adam parameters out of range".into());
        }
        if !(t.plateau_factor > 0.0 && t.plateau_factor <= 1.0) {
            return usage("trainer.plateau_factor must lie in (0, 1]".into());
        }
        if self.eval.points == 0 {
            return usage("eval.points must be >= 1".into());
        }
        // TOML integers are signed 64-bit
        for (name, seed) in [
            ("seed", self.seed),
            ("sampling.seed", self.sampling.seed),
            ("trainer.seed", self.trainer.seed),
            ("eval.seed", self.eval.seed),
        ] {
            if seed > i64::MAX as u64 {
                return usage(format!("{name} must be <= {}", i64::MAX));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn write_resolved(&self, dir: &Path) -> anyhow::Result<()> {
        let path = dir.join(RESOLVED_CONFIG);
        std::fs::write(&path, self.to_toml()).with_context(|| format!("writing {}", path.display()))
    }
}

/// Fail unless `dir` is absent or empty; with `force`, clear it first.
pub fn prepare_output(dir: &Path, force: bool) -> anyhow::Result<()> {
    if dir.exists() {
        let empty = std::fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .next()
            .is_none();
        if !empty {
            if !force {
                bail!(OutputExists(dir.display().to_string()));
            }
            std::fs::remove_dir_all(dir).with_context(|| format!("clearing {}", dir.display()))?;
        }
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

#[derive(Debug)]
pub struct OutputExists(pub String);

impl std::fmt::Display for OutputExists {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "output directory {} is not empty (use --force to overwrite)",
            self.0
        )
    }
}

impl std::error::Error for OutputExists {}
