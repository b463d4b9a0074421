//! Top-level run configuration and the training variants compared in evaluation.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapt::AdaptConfig;
use crate::attributes::AttributeVocabulary;
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::model::{Model, ModelConfig};
use crate::sim::SimConfig;
use crate::train::{collect_and_train, LabelMode, Progress, ReplayBuffer, TrainConfig, Trainer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub seed: u64,
    pub sim: SimConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub adapt: AdaptConfig,
    pub eval: EvalConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 7,
            sim: SimConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            adapt: AdaptConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Config = serde_json::from_slice(&fs::read(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.adapt.validate()?;
        if self.model.image_size != self.sim.image_size() {
            return Err(Error::Config(format!(
                "model image_size {} differs from simulator image size {}",
                self.model.image_size,
                self.sim.image_size()
            )));
        }
        if self.model.orientations != self.sim.orientations {
            return Err(Error::Config("model and simulator orientation counts differ".into()));
        }
        if self.model.bg_threshold != self.sim.bg_threshold {
            return Err(Error::Config("model and simulator background thresholds differ".into()));
        }
        Ok(())
    }

    /// FNV-1a digest of the serialized configuration.
    pub fn digest(&self) -> u64 {
        fnv1a(&serde_json::to_vec(self).expect("config serializes"))
    }

    /// Digest of the parts that determine a trained checkpoint.
    pub fn training_digest(&self) -> u64 {
        let parts = (self.seed, &self.sim, &self.model, &self.train);
        fnv1a(&serde_json::to_vec(&parts).expect("config serializes"))
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// The full method and its two controlled comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Ours,
    /// Metric loss removed.
    NoMetric,
    /// Constant text pathway and binary grasp-success labels.
    Indiscriminate,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Ours, Variant::NoMetric, Variant::Indiscriminate];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Ours => "ours",
            Variant::NoMetric => "no-metric",
            Variant::Indiscriminate => "indiscriminate",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }

    /// Copy of `cfg` with the variant's overrides; seeds are left untouched.
    pub fn apply(self, cfg: &Config) -> Config {
        let mut out = cfg.clone();
        match self {
            Variant::Ours => {}
            Variant::NoMetric => out.train.weights.lambda_r = 0.0,
            Variant::Indiscriminate => {
                out.train.weights.lambda_r = 0.0;
                out.train.label_mode = LabelMode::Binary;
                out.model.text_conditioning = false;
            }
        }
        out
    }
}

/// Online collection with interleaved training followed by full replay.
pub fn run_baseline(
    variant: Variant,
    cfg: &Config,
    on_step: impl FnMut(Progress),
) -> Result<(Trainer<f32>, ReplayBuffer)> {
    let cfg = variant.apply(cfg);
    cfg.validate()?;
    let model: Model<f32> = Model::new(cfg.model.clone(), AttributeVocabulary::default())?;
    let mut trainer = Trainer::new(model, cfg.train.clone(), cfg.seed);
    let mut buffer = ReplayBuffer::new(cfg.train.capacity);
    collect_and_train(&mut trainer, &mut buffer, &cfg.sim, cfg.seed, on_step)?;
    trainer.replay_dataset(&buffer, cfg.train.replay_epochs)?;
    Ok((trainer, buffer))
}
