//! Minibatch training with Adam (amsgrad variant).

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, TrainConfig};
use super::network::{forward, AttentionTrace, TraceVars};
use super::params::{ModelParams, ParamGroup};
use crate::autodiff::{Tape, Var};
use crate::data::{Corpus, Example};
use crate::error::{Error, Result};

/// Adam with the amsgrad running maximum of the second moment.
#[derive(Debug, Clone)]
pub struct Adam {
    config: TrainConfig,
    step: i32,
    first: ModelParams,
    second: ModelParams,
    second_max: ModelParams,
}

impl Adam {
    pub fn new(params: &ModelParams, config: &TrainConfig) -> Self {
        Adam {
            config: config.clone(),
            step: 0,
            first: params.zeros_like(),
            second: params.zeros_like(),
            second_max: params.zeros_like(),
        }
    }

    /// Applies one update. Attention parameters get the learning-rate
    /// multiplier and no weight decay; groups rejected by `trainable` are
    /// left untouched.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, trainable: &dyn Fn(ParamGroup) -> bool) {
        self.step += 1;
        let c = &self.config;
        let bias1 = 1.0 - libm::pow(c.beta1, self.step as f64);
        let bias2 = 1.0 - libm::pow(c.beta2, self.step as f64);
        let grads = grads.tensors();
        let first = self.first.tensors_mut();
        let second = self.second.tensors_mut();
        let second_max = self.second_max.tensors_mut();
        let params = params.tensors_mut();
        for ((((p, group), (g, _)), (m, _)), ((v, _), (vmax, _))) in
            params.into_iter().zip(grads).zip(first).zip(second.into_iter().zip(second_max))
        {
            if !trainable(group) {
                continue;
            }
            let (lr, decay) = match group {
                ParamGroup::Attention => (c.learning_rate * c.attention_lr_multiplier, 0.0),
                _ => (c.learning_rate, c.weight_decay),
            };
            let step_size = lr / bias1;
            let sqrt_bias2 = libm::sqrt(bias2);
            let pd = p.data_mut();
            let (md, vd, vmd) = (m.data_mut(), v.data_mut(), vmax.data_mut());
            for (k, &gk) in g.data().iter().enumerate() {
                let gk = gk + decay * pd[k];
                md[k] = c.beta1 * md[k] + (1.0 - c.beta1) * gk;
                vd[k] = c.beta2 * vd[k] + (1.0 - c.beta2) * gk * gk;
                vmd[k] = vmd[k].max(vd[k]);
                let denom = libm::sqrt(vmd[k]) / sqrt_bias2 + c.eps;
                pd[k] -= step_size * md[k] / denom;
            }
        }
    }
}

/// Gradient of `root` w.r.t. all parameters, with `dX_e` scattered into
/// the embedding columns of the example's tokens.
pub fn parameter_gradients(trace: &AttentionTrace, root: Var, params: &ModelParams) -> Result<ModelParams> {
    let grads = trace.tape.backward(root)?;
    let net = trace.vars.net.try_map(|v| Ok::<_, Error>(grads.wrt(*v)))?;
    let mut embedding = crate::tensor::DenseArray::zeros_like(&params.embedding);
    if let Some(gx) = grads.get(trace.vars.embedded) {
        let d = gx.rows();
        for (j, &tok) in trace.tokens.iter().enumerate() {
            for i in 0..d {
                let cur = embedding.get(i, tok);
                embedding.set(i, tok, cur + gx.get(i, j));
            }
        }
    }
    Ok(ModelParams { embedding, net })
}

fn accumulate(acc: &mut ModelParams, g: &ModelParams, weight: f64) {
    for ((a, _), (b, _)) in acc.tensors_mut().into_iter().zip(g.tensors()) {
        for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
            *x += weight * y;
        }
    }
}

/// Binary cross-entropy from the logit: `softplus(s) - y s`.
pub fn bce_loss(tape: &mut Tape, vars: &TraceVars, label: u8) -> Result<Var> {
    let sp = tape.softplus(vars.logit)?;
    let ys = tape.scale(vars.logit, label as f64)?;
    tape.sub(sp, ys)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

/// Generic minibatch loop; `loss` builds the per-example objective on the
/// example's trace. Returns the mean loss of each epoch.
pub fn fit<L>(
    params: &mut ModelParams,
    examples: &[Example],
    model: &ModelConfig,
    train: &TrainConfig,
    trainable: &dyn Fn(ParamGroup) -> bool,
    loss: L,
    mut on_epoch: impl FnMut(usize, f64, &ModelParams) -> Result<()>,
) -> Result<Vec<f64>>
where
    L: Fn(&mut Tape, &TraceVars, usize) -> Result<Var>,
{
    model.validate()?;
    train.validate()?;
    if examples.is_empty() {
        return Err(Error::EmptyInput { op: "fit" });
    }
    let mut adam = Adam::new(params, train);
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut losses = Vec::with_capacity(train.epochs);
    for epoch in 0..train.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(train.batch_size) {
            let mut grads = params.zeros_like();
            let weight = 1.0 / batch.len() as f64;
            for &idx in batch {
                let ex = &examples[idx];
                let diverged = |e: Error| Error::Divergence { epoch, detail: format!("example {idx}: {e}") };
                let mut trace = forward(&ex.tokens, params, model).map_err(diverged)?;
                let root = loss(&mut trace.tape, &trace.vars, idx).map_err(diverged)?;
                let value = trace.tape.value(root).item();
                if !value.is_finite() {
                    return Err(Error::Divergence { epoch, detail: format!("non-finite loss on example {idx}") });
                }
                total += value;
                let g = parameter_gradients(&trace, root, params)?;
                accumulate(&mut grads, &g, weight);
            }
            adam.step(params, &grads, trainable);
            if !params.is_finite() {
                return Err(Error::Divergence { epoch, detail: "non-finite parameters".into() });
            }
        }
        let mean = total / examples.len() as f64;
        losses.push(mean);
        on_epoch(epoch, mean, params)?;
    }
    Ok(losses)
}

/// Fraction of examples with `(y_hat >= 0.5) == label`.
pub fn accuracy(params: &ModelParams, model: &ModelConfig, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for ex in examples {
        let y = forward(&ex.tokens, params, model)?.y_hat();
        if (y >= 0.5) == (ex.label == 1) {
            correct += 1;
        }
    }
    Ok(correct as f64 / examples.len() as f64)
}

/// Trains a fresh model on `corpus.train`, logging test accuracy per epoch.
pub fn train(corpus: &Corpus, model: &ModelConfig, config: &TrainConfig) -> Result<(ModelParams, TrainLog)> {
    corpus.validate()?;
    if corpus.vocab.len() != model.vocab_size {
        return Err(Error::Config(format!(
            "model vocab_size {} != corpus vocabulary {}",
            model.vocab_size,
            corpus.vocab.len()
        )));
    }
    let mut params = ModelParams::init(model)?;
    let mut log = TrainLog::default();
    let labels: Vec<u8> = corpus.train.iter().map(|e| e.label).collect();
    fit(
        &mut params,
        &corpus.train,
        model,
        config,
        &|_| true,
        |tape, vars, idx| bce_loss(tape, vars, labels[idx]),
        |epoch, loss, p| {
            let test_accuracy = accuracy(p, model, &corpus.test)?;
            log.epochs.push(EpochRecord { epoch, train_loss: loss, test_accuracy });
            Ok(())
        },
    )?;
    Ok((params, log))
}
