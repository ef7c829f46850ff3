use alloc::vec;
use alloc::vec::Vec;

use super::config::{EncoderKind, ModelConfig};
use super::params::{EncoderParams, LstmParams, NetParams, TransformerLayerParams};
use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::projections::ProjectionKind;
use crate::tensor::DenseArray;

/// Maps `X_e` (`d x n`) to `I = [h_1; ...; h_n]` (`m x n`).
pub fn encode(tape: &mut Tape, x_e: Var, net: &NetParams<Var>, config: &ModelConfig) -> Result<Var> {
    match (&net.encoder, config.encoder) {
        (EncoderParams::BiLstm { forward, backward }, EncoderKind::BiLstm) => {
            let fwd = lstm_direction(tape, x_e, forward, false)?;
            let bwd = lstm_direction(tape, x_e, backward, true)?;
            let cols = fwd
                .into_iter()
                .zip(bwd)
                .map(|(f, b)| tape.concat(vec![f, b]))
                .collect::<Result<Vec<_>>>()?;
            tape.stack_columns(cols)
        }
        (EncoderParams::Transformer { input, layers }, EncoderKind::Transformer) => {
            transformer(tape, x_e, *input, layers, config.hidden_dim)
        }
        (EncoderParams::Identity, EncoderKind::Identity) => Ok(x_e),
        _ => Err(crate::error::Error::ArchitectureMismatch("encoder parameters do not match config".into())),
    }
}

/// One LSTM direction; returns `h_t` in sequence order.
fn lstm_direction(tape: &mut Tape, x_e: Var, p: &LstmParams<Var>, reverse: bool) -> Result<Vec<Var>> {
    let n = tape.value(x_e).cols();
    let hidden = tape.value(p.w_hidden).cols();
    // input contributions for every step at once: 4h x n
    let projected = tape.matmul(p.w_input, x_e)?;
    let mut h = tape.leaf(DenseArray::zeros(&[hidden]))?;
    let mut c = h;
    let mut out = vec![h; n];
    let order: Vec<usize> = if reverse { (0..n).rev().collect() } else { (0..n).collect() };
    for t in order {
        let xt = tape.column(projected, t)?;
        let rec = tape.matmul(p.w_hidden, h)?;
        let pre = tape.add(xt, rec)?;
        let pre = tape.add(pre, p.bias)?;
        let i = tape.slice(pre, 0, hidden)?;
        let f = tape.slice(pre, hidden, 2 * hidden)?;
        let g = tape.slice(pre, 2 * hidden, 3 * hidden)?;
        let o = tape.slice(pre, 3 * hidden, 4 * hidden)?;
        let i = tape.sigmoid(i)?;
        let f = tape.sigmoid(f)?;
        let g = tape.tanh(g)?;
        let o = tape.sigmoid(o)?;
        let keep = tape.mul(f, c)?;
        let write = tape.mul(i, g)?;
        c = tape.add(keep, write)?;
        let squashed = tape.tanh(c)?;
        h = tape.mul(o, squashed)?;
        out[t] = h;
    }
    Ok(out)
}

/// Fixed sinusoidal position encodings, `m x n`.
pub fn positional_encoding(m: usize, n: usize) -> DenseArray {
    let mut pe = DenseArray::zeros(&[m, n]);
    for pos in 0..n {
        for i in 0..m {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / libm::pow(10000.0, 2.0 * pair / m as f64);
            pe.set(i, pos, if i % 2 == 0 { libm::sin(angle) } else { libm::cos(angle) });
        }
    }
    pe
}

// Pre-norm residual blocks: h += W_o Attn(LN(h)); h += FF(LN(h)).
fn transformer(tape: &mut Tape, x_e: Var, input: Var, layers: &[TransformerLayerParams<Var>], m: usize) -> Result<Var> {
    let n = tape.value(x_e).cols();
    let projected = tape.matmul(input, x_e)?;
    let pe = tape.leaf(positional_encoding(m, n))?;
    let mut h = tape.add(projected, pe)?;
    let inv_sqrt_m = 1.0 / libm::sqrt(m as f64);
    for layer in layers {
        let normed = tape.layer_norm(h)?;
        let q = tape.matmul(layer.w_query, normed)?;
        let k = tape.matmul(layer.w_key, normed)?;
        let v = tape.matmul(layer.w_value, normed)?;
        let kt = tape.transpose(k)?;
        let scores = tape.matmul(kt, q)?;
        let scores = tape.scale(scores, inv_sqrt_m)?;
        // column j: distribution over keys for query position j
        let weights = tape.project(scores, ProjectionKind::Softmax)?;
        let attended = tape.matmul(v, weights)?;
        let mixed = tape.matmul(layer.w_out, attended)?;
        h = tape.add(h, mixed)?;
        let normed = tape.layer_norm(h)?;
        let hidden = tape.matmul(layer.ff_in, normed)?;
        let hidden = tape.add_column(hidden, layer.ff_in_bias)?;
        let hidden = tape.relu(hidden)?;
        let ff = tape.matmul(layer.ff_out, hidden)?;
        let ff = tape.add_column(ff, layer.ff_out_bias)?;
        h = tape.add(h, ff)?;
    }
    Ok(h)
}
