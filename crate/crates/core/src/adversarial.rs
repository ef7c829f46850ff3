//! Model-level adversarial attention.
//!
//! The adversary minimises `|y_adv - y_base| - lambda_adv * JSD(alpha_adv,
//! alpha_base)` over the training set, either starting from the base model
//! with only the alignment parameters trainable (frozen) or from a fresh
//! initialisation with everything trainable (unfrozen).

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::jsd;
use crate::data::{Corpus, Example};
use crate::error::{Error, Result};
use crate::model::{accuracy, fit, forward, ModelConfig, ModelParams, ParamGroup, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum AdversarialMode {
    Frozen,
    Unfrozen,
}

impl AdversarialMode {
    pub fn name(self) -> &'static str {
        match self {
            AdversarialMode::Frozen => "frozen",
            AdversarialMode::Unfrozen => "unfrozen",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdversarialConfig {
    pub mode: AdversarialMode,
    pub lambda_adv: f64,
    pub train: TrainConfig,
    /// Initialisation seed for the unfrozen adversary, and the jitter seed
    /// for the frozen one.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport {
    pub per_example_jsd: Vec<f64>,
    pub mean_jsd: f64,
    pub accuracy: f64,
    pub base_accuracy: f64,
    /// `accuracy - base_accuracy`; negative is a drop.
    pub accuracy_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialReport {
    pub mode: AdversarialMode,
    pub lambda_adv: f64,
    pub epoch_losses: Vec<f64>,
    pub test: DivergenceReport,
    /// Set when `lambda_adv > 0` but the attention barely moved.
    pub collapsed: bool,
}

/// JSD between the two models' attention on each example, plus accuracies.
pub fn divergence_report(base: &ModelParams, adv: &ModelParams, config: &ModelConfig, examples: &[Example]) -> Result<DivergenceReport> {
    base.check_compatible(adv)?;
    if examples.is_empty() {
        return Err(Error::EmptyInput { op: "divergence_report" });
    }
    let mut per_example_jsd = Vec::with_capacity(examples.len());
    for ex in examples {
        let a = forward(&ex.tokens, base, config)?.alpha();
        let b = forward(&ex.tokens, adv, config)?.alpha();
        per_example_jsd.push(jsd(a.values(), b.values())?);
    }
    let mean_jsd = per_example_jsd.iter().sum::<f64>() / examples.len() as f64;
    let base_accuracy = accuracy(base, config, examples)?;
    let acc = accuracy(adv, config, examples)?;
    Ok(DivergenceReport { per_example_jsd, mean_jsd, accuracy: acc, base_accuracy, accuracy_delta: acc - base_accuracy })
}

/// Half-width of the uniform noise added to the transferred attention
/// parameters. At `alpha_adv == alpha_base` the JSD gradient and the `|.|`
/// subgradient both vanish, so an exact copy of the base model never moves.
pub const FROZEN_JITTER: f64 = 0.05;

fn jitter_attention(base: &ModelParams, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = base.clone();
    for (t, g) in params.tensors_mut() {
        if g == ParamGroup::Attention {
            t.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-FROZEN_JITTER..FROZEN_JITTER));
        }
    }
    params
}

pub fn train_adversarial(
    base: &ModelParams,
    model: &ModelConfig,
    corpus: &Corpus,
    config: &AdversarialConfig,
) -> Result<(ModelParams, AdversarialReport)> {
    if !(config.lambda_adv >= 0.0) {
        return Err(Error::Config("lambda_adv must be nonnegative".into()));
    }
    let reference = ModelParams::init(model)?;
    reference.check_compatible(base)?;
    let targets = corpus
        .train
        .iter()
        .map(|ex| {
            let t = forward(&ex.tokens, base, model)?;
            Ok((t.y_hat(), t.alpha().into_values()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut params, trainable): (ModelParams, &dyn Fn(ParamGroup) -> bool) = match config.mode {
        AdversarialMode::Frozen => (jitter_attention(base, config.seed), &|g| g == ParamGroup::Attention),
        AdversarialMode::Unfrozen => {
            let mut fresh = model.clone();
            fresh.seed = config.seed;
            (ModelParams::init(&fresh)?, &|_| true)
        }
    };
    let lambda = config.lambda_adv;
    let epoch_losses = fit(
        &mut params,
        &corpus.train,
        model,
        &config.train,
        trainable,
        |tape, vars, idx| {
            let (y_base, alpha_base) = &targets[idx];
            let y_ref = tape.leaf(crate::tensor::DenseArray::scalar(*y_base))?;
            let diff = tape.sub(vars.y_hat, y_ref)?;
            let tvd = tape.abs(diff)?;
            let div = tape.jsd(vars.alpha, alpha_base.clone())?;
            let div = tape.scale(div, -lambda)?;
            tape.add(tvd, div)
        },
        |_, _, _| Ok(()),
    )?;
    let test = divergence_report(base, &params, model, &corpus.test)?;
    let collapsed = lambda > 0.0 && test.mean_jsd < 1e-3;
    Ok((params, AdversarialReport { mode: config.mode, lambda_adv: lambda, epoch_losses, test, collapsed }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AlignmentKind, EncoderKind};
    use crate::projections::{ProjectionKind, SimplexPoint};

    #[test]
    fn uniform_versus_one_hot_closed_form() {
        for n in [2usize, 3, 5, 20] {
            let u = SimplexPoint::uniform(n);
            let e = SimplexPoint::one_hot(n, 0);
            let nf = n as f64;
            // m = (u + e)/2: m_0 = (n+1)/(2n), m_i = 1/(2n)
            // KL(e||m) = ln(2n/(n+1)); KL(u||m) = (1/n) ln(2/(n+1)) + ((n-1)/n) ln 2
            let kl_e = libm::log(2.0 * nf / (nf + 1.0));
            let kl_u = libm::log(2.0 / (nf + 1.0)) / nf + (nf - 1.0) / nf * core::f64::consts::LN_2;
            let expect = 0.5 * (kl_e + kl_u);
            let got = jsd(u.values(), e.values()).unwrap();
            assert!((got - expect).abs() < 1e-14, "n={n}: {got} vs {expect}");
        }
    }

    #[test]
    fn identical_models_have_zero_divergence() {
        let cfg = ModelConfig::desk(EncoderKind::BiLstm, AlignmentKind::Additive, ProjectionKind::Softmax, 12).with_dims(4, 4, 4);
        let p = ModelParams::init(&cfg).unwrap();
        let ex = alloc::vec![Example { tokens: alloc::vec![1, 2, 3], label: 1, planted: None }];
        let r = divergence_report(&p, &p, &cfg, &ex).unwrap();
        assert_eq!((r.mean_jsd, r.accuracy_delta), (0.0, 0.0));
        let other = ModelConfig { hidden_dim: 6, ..cfg.clone() };
        let q = ModelParams::init(&other).unwrap();
        assert!(matches!(divergence_report(&p, &q, &cfg, &ex), Err(Error::ArchitectureMismatch(_))));
    }
}
