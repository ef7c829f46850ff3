//! Feature-importance distributions and their normalized entropy.
//!
//! Gradient measures take the L2 norm of the gradient block belonging to
//! each position and normalise over positions. Leave-one-out measures delete
//! a token (or a column of `I`) and record the absolute change in `y_hat`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{forward, predict_from_intermediate, AttentionTrace, ModelConfig, ModelParams};
use crate::projections::SimplexPoint;
use crate::tensor::DenseArray;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FiKind {
    /// `g_yhat`: gradient of the prediction.
    GradOutput,
    /// `g_{h_p}`: gradient of `||h_p||_2`.
    GradIntermediate(usize),
    /// `D_yhat(x)`: token deletion.
    LooOutput,
    /// `D_yhat(h)`: deletion of a column of `I`.
    LooIntermediate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FiOver {
    Inputs,
    IntermediateReps,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiDistribution {
    weights: Vec<f64>,
    pub kind: FiKind,
    pub over: FiOver,
}

impl FiDistribution {
    /// Normalises nonnegative raw scores; an all-zero vector is an error.
    pub fn from_raw(raw: Vec<f64>, kind: FiKind, over: FiOver) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::EmptyInput { op: "FiDistribution" });
        }
        if raw.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonFinite { op: "FiDistribution" });
        }
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(Error::DegenerateImportance(match kind {
                FiKind::GradOutput => "gradient importance",
                FiKind::GradIntermediate(_) => "intermediate gradient importance",
                FiKind::LooOutput | FiKind::LooIntermediate => "leave-one-out importance",
            }));
        }
        Ok(FiDistribution { weights: raw.into_iter().map(|v| v / total).collect(), kind, over })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Anything that is a probability vector.
pub trait Distribution {
    fn probabilities(&self) -> &[f64];
}

impl Distribution for FiDistribution {
    fn probabilities(&self) -> &[f64] {
        &self.weights
    }
}

impl Distribution for SimplexPoint {
    fn probabilities(&self) -> &[f64] {
        self.values()
    }
}

impl Distribution for [f64] {
    fn probabilities(&self) -> &[f64] {
        self
    }
}

impl Distribution for Vec<f64> {
    fn probabilities(&self) -> &[f64] {
        self
    }
}

fn column_norms(g: &DenseArray) -> Vec<f64> {
    (0..g.cols()).map(|j| libm::sqrt(g.column(j).iter().map(|v| v * v).sum())).collect()
}

/// `g_yhat` over the inputs `X_e` or over the representations `I`.
pub fn grad_fi_output(trace: &AttentionTrace, over: FiOver) -> Result<FiDistribution> {
    let grads = trace.tape.backward(trace.vars.y_hat)?;
    let target = match over {
        FiOver::Inputs => trace.vars.embedded,
        FiOver::IntermediateReps => trace.vars.intermediate,
    };
    FiDistribution::from_raw(column_norms(&grads.wrt(target)), FiKind::GradOutput, over)
}

/// `g_{h_p}(x)`: influence of each input on the magnitude of `h_p`.
pub fn grad_fi_intermediate(trace: &mut AttentionTrace, p: usize) -> Result<FiDistribution> {
    let n = trace.len();
    if p >= n {
        return Err(Error::ShapeMismatch { op: "grad_fi_intermediate", detail: alloc::format!("p = {p}, n = {n}") });
    }
    let tape = &mut trace.tape;
    let h_p = tape.column(trace.vars.intermediate, p)?;
    let norm = tape.l2norm(h_p)?;
    if tape.value(norm).item() == 0.0 {
        return Err(Error::ZeroNorm { position: p });
    }
    let grads = tape.backward(norm)?;
    FiDistribution::from_raw(column_norms(&grads.wrt(trace.vars.embedded)), FiKind::GradIntermediate(p), FiOver::Inputs)
}

/// Row `p` is `g_{h_p}(x)`; one backward pass per row.
pub fn influence_matrix(trace: &mut AttentionTrace) -> Result<Vec<FiDistribution>> {
    (0..trace.len()).map(|p| grad_fi_intermediate(trace, p)).collect()
}

/// `|y_hat - y_hat_{-i}|` for every position, before normalisation.
pub fn loo_deltas(trace: &AttentionTrace, params: &ModelParams, config: &ModelConfig, over: FiOver) -> Result<Vec<f64>> {
    let n = trace.len();
    if n < 2 {
        return Err(Error::ShapeMismatch { op: "loo_fi", detail: "need at least two positions".into() });
    }
    let y = trace.y_hat();
    (0..n)
        .map(|i| {
            let y_minus = match over {
                FiOver::Inputs => {
                    let tokens: Vec<usize> =
                        trace.tokens.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, &t)| t).collect();
                    forward(&tokens, params, config)?.y_hat()
                }
                FiOver::IntermediateReps => {
                    let full = trace.intermediate();
                    let cols: Vec<Vec<f64>> = (0..n).filter(|&k| k != i).map(|k| full.column(k)).collect();
                    let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
                    predict_from_intermediate(DenseArray::from_columns(&refs)?, params, config)?
                }
            };
            Ok((y - y_minus).abs())
        })
        .collect()
}

/// `D_yhat`: normalised leave-one-out prediction changes.
pub fn loo_fi(trace: &AttentionTrace, params: &ModelParams, config: &ModelConfig, over: FiOver) -> Result<FiDistribution> {
    let kind = match over {
        FiOver::Inputs => FiKind::LooOutput,
        FiOver::IntermediateReps => FiKind::LooIntermediate,
    };
    FiDistribution::from_raw(loo_deltas(trace, params, config, over)?, kind, over)
}

/// Shannon entropy (natural log) divided by `ln n`, with `0 ln 0 = 0`.
pub fn normalized_entropy<D: Distribution + ?Sized>(dist: &D) -> Result<f64> {
    let p = dist.probabilities();
    let n = p.len();
    if n == 0 {
        return Err(Error::EmptyInput { op: "normalized_entropy" });
    }
    if n == 1 {
        return Err(Error::SingleOutcome);
    }
    let total: f64 = p.iter().sum();
    if p.iter().any(|&v| !(v >= 0.0)) || (total - 1.0).abs() > 1e-8 {
        return Err(Error::Config("normalized_entropy: not a probability vector".into()));
    }
    // 1 - KL(p || uniform) / ln n: exact at both ends, since n * (1/n) and
    // ln 1 round to 1 and 0.
    let nf = n as f64;
    let kl: f64 = p.iter().filter(|&&v| v > 0.0).map(|&v| v * libm::log(nf * v)).sum();
    Ok((1.0 - kl / libm::log(nf)).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AlignmentKind, EncoderKind};
    use crate::projections::ProjectionKind;
    use proptest::prelude::*;

    #[test]
    fn loo_arithmetic() {
        let d = FiDistribution::from_raw(alloc::vec![0.2, 0.1, 0.1], FiKind::LooOutput, FiOver::Inputs).unwrap();
        let expect = [0.5, 0.25, 0.25];
        assert!(d.weights().iter().zip(expect).all(|(a, b)| (a - b).abs() < 1e-15));
        let d = FiDistribution::from_raw(alloc::vec![0.3, 0.3], FiKind::LooOutput, FiOver::Inputs).unwrap();
        assert_eq!(d.weights(), &[0.5, 0.5]);
        assert!(matches!(
            FiDistribution::from_raw(alloc::vec![0.0, 0.0], FiKind::LooOutput, FiOver::Inputs),
            Err(Error::DegenerateImportance(_))
        ));
    }

    #[test]
    fn entropy_examples() {
        for n in [2usize, 3, 7, 40] {
            let u = alloc::vec![1.0 / n as f64; n];
            assert!((normalized_entropy(&u).unwrap() - 1.0).abs() < 1e-12);
        }
        assert_eq!(normalized_entropy(&[0.0, 1.0, 0.0][..]).unwrap(), 0.0);
        // -(0.5 ln 0.5 + 2 * 0.25 ln 0.25) = 1.5 ln 2
        let expect = 1.5 * core::f64::consts::LN_2 / libm::log(3.0);
        let got = normalized_entropy(&[0.5, 0.25, 0.25][..]).unwrap();
        assert!((got - expect).abs() < 1e-15);
        assert!((got - 0.946).abs() < 1e-3);
        assert_eq!(normalized_entropy(&[1.0][..]), Err(Error::SingleOutcome));
    }

    fn identity_model(n_vocab: usize, d: usize) -> (ModelConfig, ModelParams) {
        let cfg = ModelConfig::desk(EncoderKind::Identity, AlignmentKind::ScaledDot, ProjectionKind::Softmax, n_vocab)
            .with_dims(d, d, d)
            .with_seed(5);
        let params = ModelParams::init(&cfg).unwrap();
        (cfg, params)
    }

    #[test]
    fn identity_encoder_influence_is_diagonal() {
        let (cfg, params) = identity_model(12, 6);
        let mut trace = forward(&[3, 1, 4, 1, 5, 9, 2], &params, &cfg).unwrap();
        let rows = influence_matrix(&mut trace).unwrap();
        assert_eq!(rows.len(), 7);
        for (p, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), 7);
            for (i, &w) in row.weights().iter().enumerate() {
                assert_eq!(w, if i == p { 1.0 } else { 0.0 });
            }
            assert_eq!(normalized_entropy(row).unwrap(), 0.0);
        }
        assert!(grad_fi_intermediate(&mut trace, 7).is_err());
    }

    #[test]
    fn one_hot_attention_concentrates_output_gradient() {
        // identity encoder + last-position sparsemax: only h_n = x_n reaches the decoder
        let cfg = ModelConfig::desk(EncoderKind::Identity, AlignmentKind::LastPosition, ProjectionKind::Sparsemax, 10)
            .with_dims(4, 4, 4);
        let params = ModelParams::init(&cfg).unwrap();
        let trace = forward(&[1, 2, 3, 4], &params, &cfg).unwrap();
        let g = grad_fi_output(&trace, FiOver::Inputs).unwrap();
        assert_eq!(g.weights(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_decoder_is_degenerate() {
        let (cfg, mut params) = identity_model(10, 4);
        params.net.decoder_weight = DenseArray::zeros(&[4]);
        let trace = forward(&[1, 2, 3], &params, &cfg).unwrap();
        assert!((trace.y_hat() - 0.5).abs() < 1e-15);
        assert!(matches!(grad_fi_output(&trace, FiOver::Inputs), Err(Error::DegenerateImportance(_))));
        assert!(matches!(loo_fi(&trace, &params, &cfg, FiOver::Inputs), Err(Error::DegenerateImportance(_))));
    }

    #[test]
    fn loo_needs_two_positions_and_deletes_tokens() {
        let (cfg, params) = identity_model(10, 4);
        let trace = forward(&[1], &params, &cfg).unwrap();
        assert!(loo_fi(&trace, &params, &cfg, FiOver::Inputs).is_err());
        let trace = forward(&[1, 2, 3], &params, &cfg).unwrap();
        let deltas = loo_deltas(&trace, &params, &cfg, FiOver::Inputs).unwrap();
        let direct = (trace.y_hat() - forward(&[1, 3], &params, &cfg).unwrap().y_hat()).abs();
        assert_eq!(deltas[1], direct);
        // identity encoder: deleting a column of I is the same as deleting the token
        let via_i = loo_deltas(&trace, &params, &cfg, FiOver::IntermediateReps).unwrap();
        for (a, b) in deltas.iter().zip(&via_i) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn normalisation_ignores_positive_rescaling() {
        let raw = alloc::vec![0.3, 1.7, 0.01, 2.2];
        let a = FiDistribution::from_raw(raw.clone(), FiKind::GradOutput, FiOver::Inputs).unwrap();
        let b = FiDistribution::from_raw(raw.iter().map(|v| v * 37.5).collect(), FiKind::GradOutput, FiOver::Inputs).unwrap();
        assert!(a.weights().iter().zip(b.weights()).all(|(x, y)| (x - y).abs() < 1e-15));
    }

    proptest! {
        #[test]
        fn entropy_is_permutation_invariant_and_uniform_maximal(
            raw in prop::collection::vec(0.01f64..1.0, 2..12),
            rot in 0usize..12,
            eps in prop::collection::vec(-1.0f64..1.0, 12),
        ) {
            let total: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let mut q = p.clone();
            let k = rot % q.len();
            q.rotate_left(k);
            let hp = normalized_entropy(&p).unwrap();
            prop_assert!((hp - normalized_entropy(&q).unwrap()).abs() < 1e-12);
            // perturb the uniform distribution along a zero-sum direction
            let n = p.len();
            let mean: f64 = eps[..n].iter().sum::<f64>() / n as f64;
            let dir: Vec<f64> = eps[..n].iter().map(|e| e - mean).collect();
            if dir.iter().any(|d| d.abs() > 1e-6) {
                let scale = 0.5 / (n as f64 * dir.iter().fold(0.0f64, |m, d| m.max(d.abs())));
                let u: Vec<f64> = dir.iter().map(|d| 1.0 / n as f64 + scale * d).collect();
                prop_assert!(normalized_entropy(&u).unwrap() < 1.0);
            }
        }
    }
}
