//! Attentional encoder-decoder classifier and its training loop.

mod config;
mod encoder;
mod network;
mod params;
mod train;

pub use config::{AlignmentKind, EncoderKind, ModelConfig, TrainConfig};
pub use encoder::{encode, positional_encoding};
pub use network::{align, embed, forward, forward_embedded, predict, predict_from_intermediate, AttentionTrace, TraceVars};
pub use params::{AlignmentParams, EncoderParams, LstmParams, ModelParams, NetParams, ParamGroup, TransformerLayerParams};
pub use train::{accuracy, bce_loss, fit, parameter_gradients, train, Adam, EpochRecord, TrainLog};

#[cfg(test)]
mod tests;
