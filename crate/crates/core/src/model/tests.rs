use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::autodiff::{grad_check, Tape};
use crate::data::{generate_synthetic, SyntheticSpec};
use crate::projections::{sparsemax_threshold, ProjectionKind};
use crate::tensor::DenseArray;

fn tiny(encoder: EncoderKind, alignment: AlignmentKind, projection: ProjectionKind) -> ModelConfig {
    ModelConfig::desk(encoder, alignment, projection, 9).with_dims(4, 4, 4)
}

fn zero_params(config: &ModelConfig) -> ModelParams {
    let mut p = ModelParams::init(config).unwrap();
    for (t, _) in p.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    p
}

#[test]
fn embed_examples() {
    let e = DenseArray::identity(3);
    let x = embed(&[2, 0], &e).unwrap();
    assert_eq!(x.column(0), vec![0.0, 0.0, 1.0]);
    assert_eq!(x.column(1), vec![1.0, 0.0, 0.0]);
    assert!(embed(&[], &e).is_err());
    assert!(matches!(embed(&[3], &e), Err(crate::Error::OutOfVocabulary { index: 3, vocab: 3 })));
    let x = embed(&[1, 1], &e).unwrap();
    assert_eq!(x.column(0), x.column(1));
}

#[test]
fn zero_bilstm_gives_zero_states() {
    let cfg = tiny(EncoderKind::BiLstm, AlignmentKind::Additive, ProjectionKind::Softmax);
    let mut p = zero_params(&cfg);
    p.embedding = ModelParams::init(&cfg).unwrap().embedding;
    let t = forward(&[1, 2, 3], &p, &cfg).unwrap();
    assert!(t.intermediate().data().iter().all(|&v| v == 0.0));
    assert_eq!(t.intermediate().shape(), &[4, 3]);
}

#[test]
fn single_token_transformer_attends_to_itself() {
    let cfg = tiny(EncoderKind::Transformer, AlignmentKind::ScaledDot, ProjectionKind::Softmax);
    let p = ModelParams::init(&cfg).unwrap();
    let t = forward(&[4], &p, &cfg).unwrap();
    let internal: Vec<_> = t
        .tape
        .nodes()
        .iter()
        .filter(|n| matches!(n.op, crate::autodiff::Op::Project(_, ProjectionKind::Softmax)) && n.value.is_matrix())
        .collect();
    assert_eq!(internal.len(), 2);
    for node in internal {
        assert_eq!(node.value.data(), &[1.0]);
    }
    assert_eq!(t.alpha().values(), &[1.0]);
}

#[test]
fn alignment_examples() {
    let cfg = tiny(EncoderKind::Identity, AlignmentKind::ScaledDot, ProjectionKind::Softmax);
    let mut p = ModelParams::init(&cfg).unwrap();
    p.net.alignment.query = DenseArray::zeros(&[4]);
    let t = forward(&[1, 2, 3], &p, &cfg).unwrap();
    assert!(t.scores().data().iter().all(|&a| a == 0.0));
    assert!(t.alpha().values().iter().all(|&a| (a - 1.0 / 3.0).abs() < 1e-15));

    let mut tape = Tape::new();
    let net = p.net.try_map(|t| tape.leaf(t.clone())).unwrap();
    let mut q = DenseArray::zeros(&[4]);
    q.data_mut()[0] = 1.0;
    let q = tape.leaf(q).unwrap();
    let net = NetParams { alignment: AlignmentParams { query: q, ..net.alignment }, ..net };
    let i = tape.leaf(DenseArray::identity(4)).unwrap();
    let a = align(&mut tape, i, &net, AlignmentKind::ScaledDot).unwrap();
    assert_eq!(tape.value(a).data(), &[0.5, 0.0, 0.0, 0.0]);

    let cfg = tiny(EncoderKind::BiLstm, AlignmentKind::Additive, ProjectionKind::Softmax);
    let mut p = ModelParams::init(&cfg).unwrap();
    p.net.alignment.v = Some(DenseArray::zeros(&[4]));
    let t = forward(&[1, 2, 3, 4], &p, &cfg).unwrap();
    assert!(t.scores().data().iter().all(|&a| a == 0.0));
}

#[test]
fn last_position_alignment_recovers_plain_encoder_decoder() {
    for enc in [EncoderKind::BiLstm, EncoderKind::Transformer] {
        let cfg = tiny(enc, AlignmentKind::LastPosition, ProjectionKind::Sparsemax);
        let p = ModelParams::init(&cfg).unwrap();
        let t = forward(&[1, 5, 2, 7], &p, &cfg).unwrap();
        assert_eq!(t.alpha().values(), &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(t.context().data(), t.intermediate().column(3).as_slice());
    }
}

#[test]
fn zero_decoder_predicts_half() {
    let cfg = tiny(EncoderKind::BiLstm, AlignmentKind::Additive, ProjectionKind::Softmax);
    let mut p = ModelParams::init(&cfg).unwrap();
    p.net.decoder_weight = DenseArray::zeros(&[4]);
    assert_eq!(predict(&[1, 2], &p, &cfg).unwrap(), 0.5);
}

fn all_configs() -> Vec<ModelConfig> {
    let mut out = Vec::new();
    for enc in [EncoderKind::BiLstm, EncoderKind::Transformer, EncoderKind::Identity] {
        for al in [AlignmentKind::Additive, AlignmentKind::ScaledDot] {
            for proj in [ProjectionKind::Softmax, ProjectionKind::Sparsemax, ProjectionKind::sparsegen(0.5).unwrap()] {
                out.push(tiny(enc, al, proj));
            }
        }
    }
    out
}

#[test]
fn traces_satisfy_context_identity_and_simplex() {
    for (k, cfg) in all_configs().into_iter().enumerate() {
        let p = ModelParams::init(&cfg.clone().with_seed(k as u64)).unwrap();
        let tokens = [3, 1, 4, 1, 5, 2];
        let t = forward(&tokens, &p, &cfg).unwrap();
        let alpha = t.alpha();
        assert_eq!(alpha.len(), tokens.len());
        assert!((alpha.values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(!alpha.support().is_empty() && alpha.support().len() <= tokens.len());
        let i = t.intermediate();
        for r in 0..i.rows() {
            let c: f64 = (0..i.cols()).map(|j| alpha.values()[j] * i.get(r, j)).sum();
            assert!((c - t.context().data()[r]).abs() < 1e-10);
        }
        let y = t.y_hat();
        assert!((0.0..=1.0).contains(&y));
    }
}

#[test]
fn encoder_gradient_matches_finite_differences() {
    for enc in [EncoderKind::BiLstm, EncoderKind::Transformer] {
        let cfg = tiny(enc, AlignmentKind::Additive, ProjectionKind::Softmax);
        let p = ModelParams::init(&cfg).unwrap();
        let x = embed(&[1, 2, 3, 4, 5], &p.embedding).unwrap();
        let r = grad_check(
            |tape, x| {
                let net = p.net.try_map(|t| tape.leaf(t.clone()))?;
                let i = encode(tape, x, &net, &cfg)?;
                tape.sum(i)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-4, "{enc:?}: {r:?}");
    }
}

// Distance of every score from the sparse projection's threshold.
fn boundary_gap(trace: &AttentionTrace, kind: &ProjectionKind) -> f64 {
    let Some(lambda) = kind.lambda() else { return f64::INFINITY };
    let z: Vec<f64> = trace.scores().data().iter().map(|v| v / (1.0 - lambda)).collect();
    let tau = sparsemax_threshold(&z).unwrap();
    z.iter().map(|v| (v - tau).abs()).fold(f64::INFINITY, f64::min)
}

fn loss_value(tokens: &[usize], label: u8, p: &ModelParams, cfg: &ModelConfig) -> f64 {
    let mut t = forward(tokens, p, cfg).unwrap();
    let root = bce_loss(&mut t.tape, &t.vars, label).unwrap();
    t.tape.value(root).item()
}

/// Tape gradients of the training loss against central differences over
/// every coordinate of every parameter, including the embedding.
fn end_to_end_error(cfg: &ModelConfig, seed: u64) -> Option<f64> {
    let p = ModelParams::init(&cfg.clone().with_seed(seed)).unwrap();
    let tokens = [1, 4, 2, 7, 3];
    let mut t = forward(&tokens, &p, cfg).unwrap();
    if boundary_gap(&t, &cfg.projection) < 1e-4 {
        return None;
    }
    let root = bce_loss(&mut t.tape, &t.vars, 1).unwrap();
    let analytic = parameter_gradients(&t, root, &p).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut probe = p.clone();
    let count = probe.tensors().len();
    for k in 0..count {
        let len = probe.tensors()[k].0.len();
        for i in 0..len {
            let orig = probe.tensors()[k].0.data()[i];
            probe.tensors_mut()[k].0.data_mut()[i] = orig + h;
            let plus = loss_value(&tokens, 1, &probe, cfg);
            probe.tensors_mut()[k].0.data_mut()[i] = orig - h;
            let minus = loss_value(&tokens, 1, &probe, cfg);
            probe.tensors_mut()[k].0.data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.tensors()[k].0.data()[i];
            worst = worst.max((a - numeric).abs() / (a.abs() + 1e-12));
        }
    }
    Some(worst)
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    for cfg in all_configs() {
        let err = (0..20).find_map(|seed| end_to_end_error(&cfg, seed)).expect("support-interior point");
        assert!(err < 1e-3, "{:?}/{:?}/{:?}: {err}", cfg.encoder, cfg.alignment, cfg.projection);
    }
}

#[test]
fn bilstm_is_order_sensitive_identity_is_not() {
    let cfg = tiny(EncoderKind::BiLstm, AlignmentKind::Additive, ProjectionKind::Softmax);
    let p = ModelParams::init(&cfg).unwrap();
    let a = predict(&[1, 2, 3, 4], &p, &cfg).unwrap();
    let b = predict(&[4, 2, 3, 1], &p, &cfg).unwrap();
    assert!((a - b).abs() > 1e-6);

    let cfg = tiny(EncoderKind::Identity, AlignmentKind::Additive, ProjectionKind::Softmax);
    let p = ModelParams::init(&cfg).unwrap();
    let ta = forward(&[1, 2, 3, 4], &p, &cfg).unwrap();
    let tb = forward(&[4, 2, 3, 1], &p, &cfg).unwrap();
    assert!((ta.y_hat() - tb.y_hat()).abs() < 1e-12);
    let (aa, ab) = (ta.alpha(), tb.alpha());
    for (i, j) in [(0, 3), (1, 1), (2, 2), (3, 0)] {
        assert!((aa.values()[i] - ab.values()[j]).abs() < 1e-12);
    }
}

#[test]
fn config_validation() {
    let mut cfg = tiny(EncoderKind::BiLstm, AlignmentKind::Additive, ProjectionKind::Softmax);
    cfg.hidden_dim = 5;
    assert!(ModelParams::init(&cfg).is_err());
    let cfg = tiny(EncoderKind::Identity, AlignmentKind::Additive, ProjectionKind::Softmax).with_dims(4, 6, 4);
    assert!(cfg.validate().is_err());
    let cfg = tiny(EncoderKind::BiLstm, AlignmentKind::Additive, ProjectionKind::Sparsegen { lambda: 1.0, transform: Default::default() });
    assert!(cfg.validate().is_err());
    let t = TrainConfig::standard(EncoderKind::Transformer);
    assert_eq!((t.batch_size, t.learning_rate, t.weight_decay), (32, 1e-5, 1e-5));
    assert_eq!(TrainConfig::default().learning_rate, 1e-4);
}

fn quick_setup() -> (crate::data::Corpus, ModelConfig, TrainConfig) {
    let corpus = generate_synthetic(&SyntheticSpec { n_train: 64, n_test: 16, vocab_size: 30, seq_len: 6, n_keywords: 2, seed: 1 }).unwrap();
    let cfg = ModelConfig::desk(EncoderKind::BiLstm, AlignmentKind::Additive, ProjectionKind::Softmax, 30).with_dims(8, 8, 8);
    let train_cfg = TrainConfig { learning_rate: 1e-2, epochs: 3, batch_size: 16, ..TrainConfig::default() };
    (corpus, cfg, train_cfg)
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let (corpus, cfg, tc) = quick_setup();
    let (a, log_a) = train(&corpus, &cfg, &tc).unwrap();
    let (b, log_b) = train(&corpus, &cfg, &tc).unwrap();
    assert_eq!(a, b);
    assert_eq!(log_a, log_b);
    assert_eq!(log_a.epochs.len(), 3);
    assert!(log_a.epochs[2].train_loss < log_a.epochs[0].train_loss);
}

#[test]
fn attention_parameters_skip_weight_decay() {
    let (_, cfg, _) = quick_setup();
    let mut p = ModelParams::init(&cfg).unwrap();
    let before = p.clone();
    let tc = TrainConfig { weight_decay: 0.1, ..TrainConfig::default() };
    let mut adam = Adam::new(&p, &tc);
    adam.step(&mut p, &before.zeros_like(), &|_| true);
    // zero loss gradient: only decayed groups move
    assert_eq!(p.net.alignment, before.net.alignment);
    assert_ne!(p.net.decoder_weight, before.net.decoder_weight);
    assert_ne!(p.embedding, before.embedding);
    let mut frozen = before.clone();
    adam.step(&mut frozen, &before.zeros_like(), &|g| g == ParamGroup::Attention);
    assert_eq!(frozen, before);
}

#[test]
fn train_rejects_vocab_mismatch() {
    let (corpus, mut cfg, tc) = quick_setup();
    cfg.vocab_size = 10;
    assert!(train(&corpus, &cfg, &tc).is_err());
}

#[test]
fn divergent_learning_rate_is_reported() {
    let (corpus, cfg, _) = quick_setup();
    let tc = TrainConfig { learning_rate: 1e300, epochs: 2, ..TrainConfig::default() };
    assert!(matches!(train(&corpus, &cfg, &tc), Err(crate::Error::Divergence { .. })));
}
