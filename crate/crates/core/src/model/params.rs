//! Learned parameters.
//!
//! Everything except the embedding matrix lives in [`NetParams`], which is
//! generic so the same layout can hold arrays, tape handles or optimiser
//! state. The embedding is kept apart: only the gathered columns `X_e` are
//! placed on a tape.

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::{AlignmentKind, EncoderKind, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::DenseArray;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Embedding,
    Encoder,
    /// Alignment-function parameters `W1, W2, v, q`.
    Attention,
    Decoder,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LstmParams<T> {
    /// `4h x d`, gate blocks ordered input, forget, cell, output.
    pub w_input: T,
    /// `4h x h`
    pub w_hidden: T,
    pub bias: T,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransformerLayerParams<T> {
    pub w_query: T,
    pub w_key: T,
    pub w_value: T,
    pub w_out: T,
    pub ff_in: T,
    pub ff_in_bias: T,
    pub ff_out: T,
    pub ff_out_bias: T,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EncoderParams<T> {
    BiLstm { forward: LstmParams<T>, backward: LstmParams<T> },
    Transformer { input: T, layers: Vec<TransformerLayerParams<T>> },
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AlignmentParams<T> {
    /// `l x m`, additive only.
    pub w1: Option<T>,
    /// `l x m`, additive only.
    pub w2: Option<T>,
    /// `l`, additive only.
    pub v: Option<T>,
    /// Learned query `q`, `m`.
    pub query: T,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetParams<T> {
    pub encoder: EncoderParams<T>,
    pub alignment: AlignmentParams<T>,
    pub decoder_weight: T,
    pub decoder_bias: T,
}

impl<T> LstmParams<T> {
    fn visit<'a>(&'a self, f: &mut impl FnMut(&'a T)) {
        f(&self.w_input);
        f(&self.w_hidden);
        f(&self.bias);
    }
    fn visit_mut<'a>(&'a mut self, f: &mut impl FnMut(&'a mut T)) {
        f(&mut self.w_input);
        f(&mut self.w_hidden);
        f(&mut self.bias);
    }
    fn try_map<U, E>(&self, f: &mut impl FnMut(&T) -> core::result::Result<U, E>) -> core::result::Result<LstmParams<U>, E> {
        Ok(LstmParams { w_input: f(&self.w_input)?, w_hidden: f(&self.w_hidden)?, bias: f(&self.bias)? })
    }
}

impl<T> TransformerLayerParams<T> {
    fn visit<'a>(&'a self, f: &mut impl FnMut(&'a T)) {
        for t in [&self.w_query, &self.w_key, &self.w_value, &self.w_out, &self.ff_in, &self.ff_in_bias, &self.ff_out, &self.ff_out_bias] {
            f(t);
        }
    }
    fn visit_mut<'a>(&'a mut self, f: &mut impl FnMut(&'a mut T)) {
        f(&mut self.w_query);
        f(&mut self.w_key);
        f(&mut self.w_value);
        f(&mut self.w_out);
        f(&mut self.ff_in);
        f(&mut self.ff_in_bias);
        f(&mut self.ff_out);
        f(&mut self.ff_out_bias);
    }
    fn try_map<U, E>(&self, f: &mut impl FnMut(&T) -> core::result::Result<U, E>) -> core::result::Result<TransformerLayerParams<U>, E> {
        Ok(TransformerLayerParams {
            w_query: f(&self.w_query)?,
            w_key: f(&self.w_key)?,
            w_value: f(&self.w_value)?,
            w_out: f(&self.w_out)?,
            ff_in: f(&self.ff_in)?,
            ff_in_bias: f(&self.ff_in_bias)?,
            ff_out: f(&self.ff_out)?,
            ff_out_bias: f(&self.ff_out_bias)?,
        })
    }
}

impl<T> NetParams<T> {
    /// Visits every tensor in a fixed order, tagged with its group.
    pub fn visit<'a>(&'a self, mut f: impl FnMut(&'a T, ParamGroup)) {
        match &self.encoder {
            EncoderParams::BiLstm { forward, backward } => {
                forward.visit(&mut |t| f(t, ParamGroup::Encoder));
                backward.visit(&mut |t| f(t, ParamGroup::Encoder));
            }
            EncoderParams::Transformer { input, layers } => {
                f(input, ParamGroup::Encoder);
                for layer in layers {
                    layer.visit(&mut |t| f(t, ParamGroup::Encoder));
                }
            }
            EncoderParams::Identity => {}
        }
        let a = &self.alignment;
        for t in [&a.w1, &a.w2, &a.v].into_iter().flatten() {
            f(t, ParamGroup::Attention);
        }
        f(&a.query, ParamGroup::Attention);
        f(&self.decoder_weight, ParamGroup::Decoder);
        f(&self.decoder_bias, ParamGroup::Decoder);
    }

    pub fn visit_mut<'a>(&'a mut self, mut f: impl FnMut(&'a mut T, ParamGroup)) {
        match &mut self.encoder {
            EncoderParams::BiLstm { forward, backward } => {
                forward.visit_mut(&mut |t| f(t, ParamGroup::Encoder));
                backward.visit_mut(&mut |t| f(t, ParamGroup::Encoder));
            }
            EncoderParams::Transformer { input, layers } => {
                f(input, ParamGroup::Encoder);
                for layer in layers {
                    layer.visit_mut(&mut |t| f(t, ParamGroup::Encoder));
                }
            }
            EncoderParams::Identity => {}
        }
        let a = &mut self.alignment;
        for t in [&mut a.w1, &mut a.w2, &mut a.v].into_iter().flatten() {
            f(t, ParamGroup::Attention);
        }
        f(&mut a.query, ParamGroup::Attention);
        f(&mut self.decoder_weight, ParamGroup::Decoder);
        f(&mut self.decoder_bias, ParamGroup::Decoder);
    }

    pub fn try_map<U, E>(&self, mut f: impl FnMut(&T) -> core::result::Result<U, E>) -> core::result::Result<NetParams<U>, E> {
        let encoder = match &self.encoder {
            EncoderParams::BiLstm { forward, backward } => {
                EncoderParams::BiLstm { forward: forward.try_map(&mut f)?, backward: backward.try_map(&mut f)? }
            }
            EncoderParams::Transformer { input, layers } => EncoderParams::Transformer {
                input: f(input)?,
                layers: layers.iter().map(|l| l.try_map(&mut f)).collect::<core::result::Result<_, E>>()?,
            },
            EncoderParams::Identity => EncoderParams::Identity,
        };
        let a = &self.alignment;
        let alignment = AlignmentParams {
            w1: a.w1.as_ref().map(&mut f).transpose()?,
            w2: a.w2.as_ref().map(&mut f).transpose()?,
            v: a.v.as_ref().map(&mut f).transpose()?,
            query: f(&a.query)?,
        };
        Ok(NetParams { encoder, alignment, decoder_weight: f(&self.decoder_weight)?, decoder_bias: f(&self.decoder_bias)? })
    }

    pub fn count(&self) -> usize {
        let mut n = 0;
        self.visit(|_, _| n += 1);
        n
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelParams {
    /// `d x |V|`
    pub embedding: DenseArray,
    pub net: NetParams<DenseArray>,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseArray {
    let limit = libm::sqrt(6.0 / (rows + cols) as f64);
    let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
    DenseArray::matrix(rows, cols, data).expect("sized")
}

fn glorot_vector(rng: &mut ChaCha8Rng, n: usize) -> DenseArray {
    let limit = libm::sqrt(6.0 / (n + 1) as f64);
    DenseArray::vector((0..n).map(|_| rng.gen_range(-limit..limit)).collect())
}

impl ModelParams {
    /// Glorot-uniform weights and zero biases, seeded from `config.seed`.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        use rand::SeedableRng;
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (d, m, l) = (config.embed_dim, config.hidden_dim, config.align_dim);
        let embedding = glorot(&mut rng, d, config.vocab_size);
        let encoder = match config.encoder {
            EncoderKind::BiLstm => {
                let h = m / 2;
                let lstm = |rng: &mut ChaCha8Rng| LstmParams {
                    w_input: glorot(rng, 4 * h, d),
                    w_hidden: glorot(rng, 4 * h, h),
                    bias: DenseArray::zeros(&[4 * h]),
                };
                let forward = lstm(&mut rng);
                let backward = lstm(&mut rng);
                EncoderParams::BiLstm { forward, backward }
            }
            EncoderKind::Transformer => EncoderParams::Transformer {
                input: glorot(&mut rng, m, d),
                layers: (0..config.transformer_layers)
                    .map(|_| TransformerLayerParams {
                        w_query: glorot(&mut rng, m, m),
                        w_key: glorot(&mut rng, m, m),
                        w_value: glorot(&mut rng, m, m),
                        w_out: glorot(&mut rng, m, m),
                        ff_in: glorot(&mut rng, m, m),
                        ff_in_bias: DenseArray::zeros(&[m]),
                        ff_out: glorot(&mut rng, m, m),
                        ff_out_bias: DenseArray::zeros(&[m]),
                    })
                    .collect(),
            },
            EncoderKind::Identity => EncoderParams::Identity,
        };
        let alignment = match config.alignment {
            AlignmentKind::Additive => AlignmentParams {
                w1: Some(glorot(&mut rng, l, m)),
                w2: Some(glorot(&mut rng, l, m)),
                v: Some(glorot_vector(&mut rng, l)),
                query: glorot_vector(&mut rng, m),
            },
            AlignmentKind::ScaledDot | AlignmentKind::LastPosition => {
                AlignmentParams { w1: None, w2: None, v: None, query: glorot_vector(&mut rng, m) }
            }
        };
        Ok(ModelParams {
            embedding,
            net: NetParams {
                encoder,
                alignment,
                decoder_weight: glorot_vector(&mut rng, m),
                decoder_bias: DenseArray::scalar(0.0),
            },
        })
    }

    pub fn zeros_like(&self) -> Self {
        let net: core::result::Result<_, ()> = self.net.try_map(|t| Ok(DenseArray::zeros_like(t)));
        ModelParams { embedding: DenseArray::zeros_like(&self.embedding), net: net.expect("infallible") }
    }

    /// All tensors, embedding first, in a fixed order.
    pub fn tensors(&self) -> Vec<(&DenseArray, ParamGroup)> {
        let mut out = Vec::with_capacity(self.net.count() + 1);
        out.push((&self.embedding, ParamGroup::Embedding));
        self.net.visit(|t, g| out.push((t, g)));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(&mut DenseArray, ParamGroup)> {
        let mut out = Vec::new();
        out.push((&mut self.embedding, ParamGroup::Embedding));
        self.net.visit_mut(|t, g| out.push((t, g)));
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(t, _)| t.is_finite())
    }

    /// Checks that `other` has the same layout and shapes.
    pub fn check_compatible(&self, other: &ModelParams) -> Result<()> {
        let a = self.tensors();
        let b = other.tensors();
        if a.len() != b.len() || a.iter().zip(&b).any(|((x, gx), (y, gy))| x.shape() != y.shape() || gx != gy) {
            return Err(Error::ArchitectureMismatch("parameter layouts differ".into()));
        }
        Ok(())
    }

    /// FNV-1a over the bit patterns of every tensor in `groups`.
    pub fn fingerprint(&self, groups: &[ParamGroup]) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for (t, g) in self.tensors() {
            if !groups.contains(&g) {
                continue;
            }
            for &dim in t.shape() {
                hash = (hash ^ dim as u64).wrapping_mul(0x0100_0000_01b3);
            }
            for v in t.data() {
                for byte in v.to_bits().to_le_bytes() {
                    hash = (hash ^ byte as u64).wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        hash
    }
}
