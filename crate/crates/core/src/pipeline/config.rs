use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::posenc::EncodingConfig;
use crate::summarizer::SummarizerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub total_steps: usize,
    pub warmup_steps: usize,
    #[serde(default = "default_lr_factor")]
    pub peak_lr_factor: f64,
    /// Documents per micro-batch.
    pub batch_size: usize,
    /// Micro-batches per optimizer update.
    #[serde(default = "one")]
    pub accumulation_count: usize,
    pub eval_every: usize,
    #[serde(default = "three")]
    pub keep_top_k: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub fine_tune_encoder: bool,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_eps")]
    pub adam_eps: f64,
}

fn default_lr_factor() -> f64 {
    2e-3
}

fn one() -> usize {
    1
}

fn three() -> usize {
    3
}

fn default_true() -> bool {
    true
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_eps() -> f64 {
    1e-8
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_steps: 1000,
            warmup_steps: 100,
            peak_lr_factor: 2e-3,
            batch_size: 8,
            accumulation_count: 1,
            eval_every: 100,
            keep_top_k: 3,
            seed: 0,
            fine_tune_encoder: true,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.total_steps == 0 {
            return bad("total_steps must be positive");
        }
        if self.warmup_steps == 0 || self.warmup_steps > self.total_steps {
            return bad("warmup_steps must be in 1..=total_steps");
        }
        if self.batch_size == 0 || self.accumulation_count == 0 {
            return bad("batch_size and accumulation_count must be positive");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be positive");
        }
        if self.keep_top_k == 0 {
            return bad("keep_top_k must be at least 1");
        }
        if !(self.peak_lr_factor.is_finite() && self.peak_lr_factor > 0.0) {
            return bad("peak_lr_factor must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || self.adam_eps <= 0.0 {
            return bad("Adam betas must be in [0, 1) and eps positive");
        }
        Ok(())
    }

    pub fn lr_at(&self, step: usize) -> Result<f64> {
        super::lr_at(step, self.warmup_steps, self.peak_lr_factor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    /// Sentences per summary.
    pub n: usize,
    pub trigram_blocking: bool,
    /// Positions at or beyond this index share the last distribution bucket.
    pub max_index: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            n: 7,
            trigram_blocking: false,
            max_index: 50,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Title class dictionary (JSON); the built-in scientific one otherwise.
    pub titles: Option<PathBuf>,
    #[serde(default = "one")]
    pub min_freq: usize,
}

/// Experiment file: corpus paths, model shape, training and selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub corpus: CorpusConfig,
    pub encoding: EncodingConfig,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub summarizer: SummarizerConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub selection: SelectionConfig,
}

impl ExperimentConfig {
    /// Parses TOML; relative corpus paths are resolved against the file's
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.corpus.train,
            &mut cfg.corpus.valid,
            &mut cfg.corpus.test,
            &mut cfg.corpus.titles,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        self.train.validate()?;
        if self.selection.n == 0 {
            return Err(Error::Config("selection n must be at least 1".into()));
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            encoding: self.encoding.clone(),
            encoder: self.encoder.clone(),
            summarizer: self.summarizer.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[corpus]
train = "train.jsonl"
valid = "valid.jsonl"

[encoding]
setting = "la-sum"
d_model = 16
max_positions = 64
inject_ste = true
classified_ste = true

[encoder]
n_heads = 2
n_layers = 1
d_ff = 32
max_len = 128

[summarizer]
n_heads = 2
d_ff = 32

[train]
total_steps = 20
warmup_steps = 5
batch_size = 2
eval_every = 5
seed = 3

[selection]
n = 3
trigram_blocking = true
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.encoding.setting.to_string(), "la-sum");
        assert!(cfg.encoding.inject_she);
        assert_eq!(cfg.summarizer.n_layers, 2);
        assert_eq!(cfg.train.keep_top_k, 3);
        assert_eq!(cfg.train.accumulation_count, 1);
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_values() {
        let unknown = SAMPLE.replace("seed = 3", "seed = 3\nfoo = 1");
        assert!(ExperimentConfig::from_toml(&unknown).is_err());
        let warm = SAMPLE.replace("warmup_steps = 5", "warmup_steps = 50");
        assert!(ExperimentConfig::from_toml(&warm).is_err());
        let setting = SAMPLE.replace("la-sum", "la-max");
        assert!(ExperimentConfig::from_toml(&setting).is_err());
    }

    #[test]
    fn relative_paths_follow_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(&path, SAMPLE).unwrap();
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg.corpus.train.unwrap(), dir.path().join("train.jsonl"));
    }
}
