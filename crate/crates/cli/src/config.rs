//! Experiment configuration, read from JSON and echoed into every output
//! directory as `config.json`.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use spattn_core::adversarial::AdversarialMode;
use spattn_core::analysis::{EntropyMeasure, FiMeasure};
use spattn_core::data::{Corpus, SyntheticSpec};
use spattn_core::model::{AlignmentKind, EncoderKind, ModelConfig, TrainConfig};
use spattn_core::{ProjectionKind, ScoreTransform};

use crate::ingest::{self, JsonlOptions};

pub const SMOKE_CONFIG: &str = include_str!("../configs/smoke.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetSpec,
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub train: TrainSpec,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub adversarial: Option<AdversarialSpec>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DatasetSpec {
    Synthetic {
        #[serde(default, flatten)]
        spec: SyntheticSpec,
    },
    Jsonl {
        train: PathBuf,
        #[serde(default)]
        test: Option<PathBuf>,
        #[serde(default = "default_min_freq")]
        min_freq: usize,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_min_freq() -> usize {
    2
}
fn default_test_fraction() -> f64 {
    0.2
}

impl DatasetSpec {
    /// Relative dataset paths resolve against `base` (the config's directory).
    pub fn load(&self, base: &std::path::Path) -> Result<Corpus> {
        let corpus = match self {
            DatasetSpec::Synthetic { spec } => spattn_core::data::generate_synthetic(spec)?,
            DatasetSpec::Jsonl { train, test, min_freq, test_fraction, seed } => {
                let opts = JsonlOptions { min_freq: *min_freq, test_fraction: *test_fraction, seed: *seed };
                let test = test.as_ref().map(|t| base.join(t));
                ingest::ingest(&base.join(train), test.as_deref(), &opts)?
            }
        };
        if corpus.test.is_empty() {
            bail!("dataset has no test examples");
        }
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn label(&self) -> String {
        match self {
            DatasetSpec::Synthetic { .. } => "synthetic".into(),
            DatasetSpec::Jsonl { train, .. } => {
                train.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "jsonl".into())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub encoder: EncoderKind,
    #[serde(default = "default_alignment")]
    pub alignment: AlignmentKind,
    #[serde(default = "default_projection")]
    pub projection: ProjectionKind,
    #[serde(default = "default_dim")]
    pub embed_dim: usize,
    #[serde(default = "default_dim")]
    pub hidden_dim: usize,
    #[serde(default = "default_dim")]
    pub align_dim: usize,
    #[serde(default = "default_layers")]
    pub transformer_layers: usize,
    #[serde(default = "default_heads")]
    pub transformer_heads: usize,
    /// Overrides the experiment-wide learning rate for this model.
    #[serde(default)]
    pub learning_rate: Option<f64>,
}

fn default_alignment() -> AlignmentKind {
    AlignmentKind::Additive
}
fn default_projection() -> ProjectionKind {
    ProjectionKind::Softmax
}
fn default_dim() -> usize {
    64
}
fn default_layers() -> usize {
    2
}
fn default_heads() -> usize {
    1
}

impl ModelSpec {
    pub fn new(encoder: EncoderKind, alignment: AlignmentKind, projection: ProjectionKind) -> Self {
        ModelSpec {
            encoder,
            alignment,
            projection,
            embed_dim: 64,
            hidden_dim: 64,
            align_dim: 64,
            transformer_layers: 2,
            transformer_heads: 1,
            learning_rate: None,
        }
    }

    pub fn model_config(&self, vocab_size: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            encoder: self.encoder,
            alignment: self.alignment,
            projection: self.projection,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            align_dim: self.align_dim,
            vocab_size,
            transformer_layers: self.transformer_layers,
            transformer_heads: self.transformer_heads,
            seed,
        }
    }

    /// File-name-safe identifier, e.g. `bilstm-additive-sparsegen0.5`.
    pub fn label(&self) -> String {
        format!("{}-{}-{}", self.encoder.name(), self.alignment.name(), projection_label(&self.projection))
    }
}

pub fn projection_label(p: &ProjectionKind) -> String {
    match p {
        ProjectionKind::Sparsegen { lambda, transform } => {
            let t = if *transform == ScoreTransform::Tanh { "tanh" } else { "" };
            format!("sparsegen{t}{lambda}")
        }
        other => other.name().to_string(),
    }
}

/// Unset fields fall back to the desk profile for the model's encoder.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub attention_lr_multiplier: Option<f64>,
    pub weight_decay: Option<f64>,
    pub epochs: Option<usize>,
}

impl TrainSpec {
    pub fn resolve(&self, model: &ModelSpec, seed: u64) -> TrainConfig {
        let base = TrainConfig::desk(model.encoder);
        TrainConfig {
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            learning_rate: model.learning_rate.or(self.learning_rate).unwrap_or(base.learning_rate),
            attention_lr_multiplier: self.attention_lr_multiplier.unwrap_or(base.attention_lr_multiplier),
            weight_decay: self.weight_decay.unwrap_or(base.weight_decay),
            epochs: self.epochs.unwrap_or(base.epochs),
            seed,
            ..base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default = "default_correlations")]
    pub correlations: Vec<String>,
    #[serde(default = "default_entropies")]
    pub entropies: Vec<String>,
    /// Analyse only the first `max_examples` test examples.
    #[serde(default)]
    pub max_examples: Option<usize>,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        AnalysisSpec { correlations: default_correlations(), entropies: default_entropies(), max_examples: None }
    }
}

fn default_correlations() -> Vec<String> {
    ["grad_inputs", "grad_intermediate", "loo_inputs", "loo_intermediate"].map(String::from).to_vec()
}
fn default_entropies() -> Vec<String> {
    ["grad_inputs", "loo_inputs", "hidden_inputs"].map(String::from).to_vec()
}

pub fn fi_measure(name: &str) -> Result<FiMeasure> {
    Ok(match name {
        "grad_inputs" => FiMeasure::GradInputs,
        "grad_intermediate" => FiMeasure::GradIntermediate,
        "loo_inputs" => FiMeasure::LooInputs,
        "loo_intermediate" => FiMeasure::LooIntermediate,
        other => bail!("unknown correlation measure {other:?}"),
    })
}

pub fn entropy_measure(name: &str) -> Result<EntropyMeasure> {
    Ok(match name {
        "grad_inputs" => EntropyMeasure::GradInputs,
        "loo_inputs" => EntropyMeasure::LooInputs,
        "hidden_inputs" => EntropyMeasure::HiddenInputs,
        other => bail!("unknown entropy measure {other:?}"),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Base architecture; its projection is replaced by sparsegen(lambda).
    #[serde(default = "default_sweep_model")]
    pub model: ModelSpec,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    /// Defaults to the experiment seeds.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub max_examples: Option<usize>,
}

fn default_sweep_model() -> ModelSpec {
    ModelSpec::new(EncoderKind::BiLstm, AlignmentKind::Additive, ProjectionKind::Softmax)
}
pub fn default_lambdas() -> Vec<f64> {
    vec![-10.0, -2.0, -0.5, 0.0, 0.5, 0.9]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarialSpec {
    /// Index into `models` of the base model.
    #[serde(default)]
    pub model: usize,
    #[serde(default = "default_modes")]
    pub modes: Vec<AdversarialMode>,
    #[serde(default = "default_lambda_adv")]
    pub lambda_adv: Vec<f64>,
    #[serde(default)]
    pub train: TrainSpec,
}

fn default_modes() -> Vec<AdversarialMode> {
    vec![AdversarialMode::Frozen, AdversarialMode::Unfrozen]
}
fn default_lambda_adv() -> Vec<f64> {
    vec![0.0, 1.0]
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).context("parsing experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn smoke() -> Self {
        Self::from_json(SMOKE_CONFIG).expect("bundled smoke config is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            bail!("config lists no models");
        }
        if self.seeds.is_empty() {
            bail!("config lists no seeds");
        }
        for m in &self.models {
            m.model_config(1, 0).validate().with_context(|| format!("model {}", m.label()))?;
        }
        for n in &self.analysis.correlations {
            fi_measure(n)?;
        }
        for n in &self.analysis.entropies {
            entropy_measure(n)?;
        }
        if let Some(s) = &self.sweep {
            for &l in &s.lambdas {
                ProjectionKind::sparsegen(l).with_context(|| format!("sweep lambda {l}"))?;
            }
        }
        if let Some(a) = &self.adversarial {
            if a.model >= self.models.len() {
                bail!("adversarial.model {} out of range", a.model);
            }
            if a.lambda_adv.iter().any(|&l| !(l >= 0.0)) {
                bail!("lambda_adv values must be nonnegative");
            }
        }
        Ok(())
    }

    pub fn sweep_seeds(&self) -> Vec<u64> {
        self.sweep.as_ref().and_then(|s| s.seeds.clone()).unwrap_or_else(|| self.seeds.clone())
    }
}
