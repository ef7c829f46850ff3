use crate::error::{Error, Result};
use crate::projections::ProjectionKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum EncoderKind {
    BiLstm,
    Transformer,
    /// `h_i = X_e[:, i]`: an ablation with no contextualisation.
    Identity,
}

impl EncoderKind {
    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::BiLstm => "bilstm",
            EncoderKind::Transformer => "transformer",
            EncoderKind::Identity => "identity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AlignmentKind {
    /// `a_i = v . tanh(W1 h_i + W2 q)`
    Additive,
    /// `a = I^T q / sqrt(m)`
    ScaledDot,
    /// Constant scores `[0, ..., 0, 1]`; with a sparse projection only the
    /// last representation reaches the decoder.
    LastPosition,
}

impl AlignmentKind {
    pub fn name(self) -> &'static str {
        match self {
            AlignmentKind::Additive => "additive",
            AlignmentKind::ScaledDot => "scaled_dot",
            AlignmentKind::LastPosition => "last_position",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelConfig {
    pub encoder: EncoderKind,
    pub alignment: AlignmentKind,
    pub projection: ProjectionKind,
    /// Embedding dimension `d`.
    pub embed_dim: usize,
    /// Intermediate representation dimension `m`.
    pub hidden_dim: usize,
    /// Additive alignment hidden dimension `l`.
    pub align_dim: usize,
    pub vocab_size: usize,
    pub transformer_layers: usize,
    pub transformer_heads: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Desk-scale profile: `d = m = l = 64`.
    pub fn desk(encoder: EncoderKind, alignment: AlignmentKind, projection: ProjectionKind, vocab_size: usize) -> Self {
        ModelConfig {
            encoder,
            alignment,
            projection,
            embed_dim: 64,
            hidden_dim: 64,
            align_dim: 64,
            vocab_size,
            transformer_layers: 2,
            transformer_heads: 1,
            seed: 0,
        }
    }

    /// All hidden dimensions at 128.
    pub fn full_scale(encoder: EncoderKind, alignment: AlignmentKind, projection: ProjectionKind, vocab_size: usize) -> Self {
        ModelConfig { embed_dim: 128, hidden_dim: 128, align_dim: 128, ..Self::desk(encoder, alignment, projection, vocab_size) }
    }

    pub fn with_dims(mut self, embed: usize, hidden: usize, align: usize) -> Self {
        self.embed_dim = embed;
        self.hidden_dim = hidden;
        self.align_dim = align;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.projection.validate()?;
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.vocab_size == 0 {
            return Err(Error::Config("dimensions must be positive".into()));
        }
        match self.encoder {
            EncoderKind::BiLstm if self.hidden_dim % 2 != 0 => {
                Err(Error::Config("BiLSTM needs an even hidden_dim".into()))
            }
            EncoderKind::Identity if self.hidden_dim != self.embed_dim => {
                Err(Error::Config("identity encoder needs hidden_dim == embed_dim".into()))
            }
            EncoderKind::Transformer if self.transformer_heads != 1 => {
                Err(Error::Config("only single-head self-attention is supported".into()))
            }
            EncoderKind::Transformer if self.transformer_layers == 0 => {
                Err(Error::Config("transformer needs at least one layer".into()))
            }
            _ if self.alignment == AlignmentKind::Additive && self.align_dim == 0 => {
                Err(Error::Config("additive alignment needs align_dim > 0".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning-rate factor for attention parameters (1 or 10).
    pub attention_lr_multiplier: f64,
    /// L2 penalty on every parameter except the attention parameters.
    pub weight_decay: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Batch 32, weight decay 1e-5, and lr 1e-4 (BiLSTM) or 1e-5 (transformer).
    pub fn standard(encoder: EncoderKind) -> Self {
        TrainConfig {
            batch_size: 32,
            learning_rate: match encoder {
                EncoderKind::Transformer => 1e-5,
                _ => 1e-4,
            },
            attention_lr_multiplier: 1.0,
            weight_decay: 1e-5,
            epochs: 10,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }

    /// The standard profile with a 30x larger learning rate (3e-3 BiLSTM,
    /// 3e-4 otherwise), so desk-size models converge within 10 epochs.
    pub fn desk(encoder: EncoderKind) -> Self {
        let base = Self::standard(encoder);
        TrainConfig { learning_rate: base.learning_rate * 30.0, ..base }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.attention_lr_multiplier > 0.0) || self.weight_decay < 0.0 {
            return Err(Error::Config("learning rates must be positive, weight decay nonnegative".into()));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::standard(EncoderKind::BiLstm)
    }
}
