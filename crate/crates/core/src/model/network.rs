//! Embed, encode, align, project, pool and decode.

use alloc::vec::Vec;

use super::config::{AlignmentKind, ModelConfig};
use super::encoder::encode;
use super::params::{ModelParams, NetParams};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::projections::SimplexPoint;
use crate::tensor::DenseArray;

/// Columns `tokens[i]` of `E`, as a `d x n` matrix.
pub fn embed(tokens: &[usize], embedding: &DenseArray) -> Result<DenseArray> {
    if tokens.is_empty() {
        return Err(Error::EmptyInput { op: "embed" });
    }
    let vocab = embedding.cols();
    let d = embedding.rows();
    let n = tokens.len();
    let mut out = DenseArray::zeros(&[d, n]);
    for (j, &tok) in tokens.iter().enumerate() {
        if tok >= vocab {
            return Err(Error::OutOfVocabulary { index: tok, vocab });
        }
        for i in 0..d {
            out.set(i, j, embedding.get(i, tok));
        }
    }
    Ok(out)
}

/// Alignment scores `a` over the columns of `I`.
pub fn align(tape: &mut Tape, intermediate: Var, net: &NetParams<Var>, kind: AlignmentKind) -> Result<Var> {
    let (m, n) = {
        let i = tape.value(intermediate);
        (i.rows(), i.cols())
    };
    let q = net.alignment.query;
    match kind {
        AlignmentKind::Additive => {
            let a = &net.alignment;
            let (Some(w1), Some(w2), Some(v)) = (a.w1, a.w2, a.v) else {
                return Err(Error::ArchitectureMismatch("additive alignment needs W1, W2, v".into()));
            };
            let keys = tape.matmul(w1, intermediate)?;
            let query = tape.matmul(w2, q)?;
            let hidden = tape.add_column(keys, query)?;
            let hidden = tape.tanh(hidden)?;
            let hidden_t = tape.transpose(hidden)?;
            tape.matmul(hidden_t, v)
        }
        AlignmentKind::ScaledDot => {
            let it = tape.transpose(intermediate)?;
            let raw = tape.matmul(it, q)?;
            tape.scale(raw, 1.0 / libm::sqrt(m as f64))
        }
        AlignmentKind::LastPosition => {
            let mut scores = alloc::vec![0.0; n];
            scores[n - 1] = 1.0;
            tape.leaf(DenseArray::vector(scores))
        }
    }
}

/// Tape handles for one forward pass.
#[derive(Debug, Clone)]
pub struct TraceVars {
    pub embedded: Var,
    pub intermediate: Var,
    pub scores: Var,
    pub alpha: Var,
    pub context: Var,
    pub logit: Var,
    pub y_hat: Var,
    pub net: NetParams<Var>,
}

/// Everything recorded while classifying one example.
#[derive(Debug, Clone)]
pub struct AttentionTrace {
    pub tokens: Vec<usize>,
    pub tape: Tape,
    pub vars: TraceVars,
}

impl AttentionTrace {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
    pub fn embedded(&self) -> &DenseArray {
        self.tape.value(self.vars.embedded)
    }
    pub fn intermediate(&self) -> &DenseArray {
        self.tape.value(self.vars.intermediate)
    }
    pub fn scores(&self) -> &DenseArray {
        self.tape.value(self.vars.scores)
    }
    pub fn alpha(&self) -> SimplexPoint {
        SimplexPoint::from_raw(self.tape.value(self.vars.alpha).data().to_vec())
    }
    pub fn context(&self) -> &DenseArray {
        self.tape.value(self.vars.context)
    }
    pub fn y_hat(&self) -> f64 {
        self.tape.value(self.vars.y_hat).item()
    }
    pub fn logit(&self) -> f64 {
        self.tape.value(self.vars.logit).item()
    }
}

struct Head {
    scores: Var,
    alpha: Var,
    context: Var,
    logit: Var,
    y_hat: Var,
}

fn head(tape: &mut Tape, intermediate: Var, net: &NetParams<Var>, config: &ModelConfig) -> Result<Head> {
    let scores = align(tape, intermediate, net, config.alignment)?;
    let alpha = tape.project(scores, config.projection)?;
    let context = tape.matmul(intermediate, alpha)?;
    let decoded = tape.dot(net.decoder_weight, context)?;
    let logit = tape.add(decoded, net.decoder_bias)?;
    let y_hat = tape.sigmoid(logit)?;
    Ok(Head { scores, alpha, context, logit, y_hat })
}

fn bind(tape: &mut Tape, params: &ModelParams) -> Result<NetParams<Var>> {
    params.net.try_map(|t| tape.leaf(t.clone()))
}

/// Runs the classifier on `X_e` directly (used by attribution).
pub fn forward_embedded(tokens: &[usize], embedded: DenseArray, params: &ModelParams, config: &ModelConfig) -> Result<AttentionTrace> {
    let mut tape = Tape::new();
    let net = bind(&mut tape, params)?;
    let x_e = tape.leaf(embedded)?;
    let intermediate = encode(&mut tape, x_e, &net, config)?;
    let h = head(&mut tape, intermediate, &net, config)?;
    Ok(AttentionTrace {
        tokens: tokens.to_vec(),
        tape,
        vars: TraceVars {
            embedded: x_e,
            intermediate,
            scores: h.scores,
            alpha: h.alpha,
            context: h.context,
            logit: h.logit,
            y_hat: h.y_hat,
            net,
        },
    })
}

pub fn forward(tokens: &[usize], params: &ModelParams, config: &ModelConfig) -> Result<AttentionTrace> {
    let embedded = embed(tokens, &params.embedding)?;
    forward_embedded(tokens, embedded, params, config)
}

pub fn predict(tokens: &[usize], params: &ModelParams, config: &ModelConfig) -> Result<f64> {
    Ok(forward(tokens, params, config)?.y_hat())
}

/// `y_hat` when the decoder head sees the given intermediate representations.
pub fn predict_from_intermediate(intermediate: DenseArray, params: &ModelParams, config: &ModelConfig) -> Result<f64> {
    let mut tape = Tape::new();
    let net = bind(&mut tape, params)?;
    let i = tape.leaf(intermediate)?;
    let h = head(&mut tape, i, &net, config)?;
    Ok(tape.value(h.y_hat).item())
}
