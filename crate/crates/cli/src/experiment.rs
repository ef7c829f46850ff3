//! Experiment stages. Each reads the config, does its work on a rayon pool
//! and merges results single-threaded, so outputs do not depend on `--jobs`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use spattn_core::adversarial::{train_adversarial, AdversarialConfig};
use spattn_core::analysis::{self, measure_example, summarize_correlations, summarize_entropies, sweep_cell};
use spattn_core::data::Corpus;
use spattn_core::model::{train, ModelConfig, ModelParams, TrainConfig};

use crate::checkpoint::{self, Body};
use crate::config::{self, projection_label, ExperimentConfig, ModelSpec};
use crate::manifest::Manifest;
use crate::tables::{self, *};

pub struct Run {
    pub config: ExperimentConfig,
    /// Directory that relative dataset paths resolve against.
    pub base: PathBuf,
    pub out: PathBuf,
    pub jobs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Train,
    Analyze,
    Sweep,
    Adversarial,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Train => "train",
            Stage::Analyze => "analyze",
            Stage::Sweep => "sweep",
            Stage::Adversarial => "adversarial",
            Stage::Report => "report",
        }
    }

    pub const ALL: [Stage; 5] = [Stage::Train, Stage::Analyze, Stage::Sweep, Stage::Adversarial, Stage::Report];
}

fn key(dataset: &str, model: &ModelConfig) -> ModelKey {
    ModelKey {
        dataset: dataset.to_string(),
        encoder: model.encoder.name().to_string(),
        alignment: model.alignment.name().to_string(),
        projection: projection_label(&model.projection),
        lambda: model.projection.lambda(),
        seed: model.seed,
    }
}

impl Run {
    pub fn new(config: ExperimentConfig, base: PathBuf, out: PathBuf, jobs: usize) -> Self {
        Run { config, base, out, jobs: jobs.max(1) }
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        Ok(rayon::ThreadPoolBuilder::new().num_threads(self.jobs).build()?)
    }

    pub fn corpus(&self) -> Result<Corpus> {
        self.config.dataset.load(&self.base)
    }

    fn checkpoint_path(&self, spec: &ModelSpec, seed: u64) -> PathBuf {
        self.out.join("checkpoints").join(format!("{}-s{seed}.json", spec.label()))
    }

    fn jobs_grid(&self) -> Vec<(usize, u64)> {
        (0..self.config.models.len()).flat_map(|m| self.config.seeds.iter().map(move |&s| (m, s))).collect()
    }

    fn prepare(&self) -> Result<()> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let echo = serde_json::to_string_pretty(&self.config)? + "\n";
        fs::write(self.out.join("config.json"), echo)?;
        Ok(())
    }

    /// Runs `stage`, recording its outcome in the MANIFEST either way.
    pub fn stage(&self, stage: Stage) -> Result<()> {
        self.prepare()?;
        let mut manifest = Manifest::load(&self.out)?;
        manifest.set(stage.name(), "running");
        manifest.write(&self.out)?;
        let result = match stage {
            Stage::Train => self.train(),
            Stage::Analyze => self.analyze(),
            Stage::Sweep => self.sweep(),
            Stage::Adversarial => self.adversarial(),
            Stage::Report => self.report(),
        };
        manifest.set(stage.name(), if result.is_ok() { "ok" } else { "failed" });
        manifest.write(&self.out)?;
        result
    }

    pub fn all(&self) -> Result<()> {
        for s in Stage::ALL {
            self.stage(s).with_context(|| format!("stage {}", s.name()))?;
        }
        Ok(())
    }

    fn train(&self) -> Result<()> {
        let corpus = self.corpus()?;
        let dataset = self.config.dataset.label();
        let vocab = corpus.vocab.tokens().to_vec();
        let results = self.pool()?.install(|| {
            self.jobs_grid()
                .into_par_iter()
                .map(|(m, seed)| {
                    let spec = &self.config.models[m];
                    let model = spec.model_config(corpus.vocab.len(), seed);
                    let tc = self.config.train.resolve(spec, seed);
                    let (params, log) = train(&corpus, &model, &tc).with_context(|| format!("training {} seed {seed}", spec.label()))?;
                    Ok((m, seed, model, params, log))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let mut rows = Vec::new();
        for (m, seed, model, params, log) in results {
            let k = key(&dataset, &model);
            for e in &log.epochs {
                rows.push(MetricsRow::keyed(&k, e.epoch, e.train_loss, e.test_accuracy));
            }
            let body = Body { model, vocab: vocab.clone(), params };
            checkpoint::save(&self.checkpoint_path(&self.config.models[m], seed), &body)?;
        }
        tables::write(&self.out, METRICS, &rows)
    }

    fn load_model(&self, spec: &ModelSpec, seed: u64, corpus: &Corpus) -> Result<(ModelConfig, ModelParams)> {
        let path = self.checkpoint_path(spec, seed);
        if !path.exists() {
            bail!("missing checkpoint {}; run `train` first", path.display());
        }
        let body = checkpoint::load(&path)?;
        if body.vocab != corpus.vocab.tokens() {
            bail!("{}: vocabulary differs from the configured dataset", path.display());
        }
        if body.model != spec.model_config(corpus.vocab.len(), seed) {
            bail!("{}: model config differs from the experiment config", path.display());
        }
        Ok((body.model, body.params))
    }

    fn analyze(&self) -> Result<()> {
        let corpus = self.corpus()?;
        let dataset = self.config.dataset.label();
        let a = &self.config.analysis;
        let taus = a.correlations.iter().map(|n| config::fi_measure(n)).collect::<Result<Vec<_>>>()?;
        let ents = a.entropies.iter().map(|n| config::entropy_measure(n)).collect::<Result<Vec<_>>>()?;
        let limit = a.max_examples.unwrap_or(usize::MAX).min(corpus.test.len());
        let test = &corpus.test[..limit];
        let models = self
            .jobs_grid()
            .into_iter()
            .map(|(m, seed)| self.load_model(&self.config.models[m], seed, &corpus))
            .collect::<Result<Vec<_>>>()?;
        let measured = self.pool()?.install(|| {
            models
                .par_iter()
                .map(|(model, params)| {
                    test.iter().map(|ex| measure_example(ex, params, model, &taus, &ents)).collect::<spattn_core::Result<Vec<_>>>()
                })
                .collect::<spattn_core::Result<Vec<_>>>()
        })?;
        let (mut corr, mut ent, mut per_example) = (Vec::new(), Vec::new(), Vec::new());
        for ((model, _), ms) in models.iter().zip(&measured) {
            let k = key(&dataset, model);
            for c in summarize_correlations(ms, &taus) {
                let s = c.summary;
                corr.push(CorrelationRow::keyed(&k, c.measure.kind().into(), c.measure.target().into(), s.mean, s.std, s.n_examples, s.n_skipped));
            }
            for (m, s) in summarize_entropies(ms, &ents) {
                ent.push(EntropyRow::keyed(&k, m.kind().into(), m.target().into(), s.mean, s.std));
            }
            for &m in &ents {
                for (i, ex) in ms.iter().enumerate() {
                    if let Some(h) = ex.entropy(m) {
                        per_example.push(EntropyExampleRow::keyed(&k, m.kind().into(), m.target().into(), i, h));
                    }
                }
            }
        }
        tables::write(&self.out, CORRELATIONS, &corr)?;
        tables::write(&self.out, ENTROPY, &ent)?;
        tables::write(&self.out, ENTROPY_EXAMPLES, &per_example)
    }

    fn sweep(&self) -> Result<()> {
        let Some(spec) = &self.config.sweep else {
            tables::write::<SweepRow>(&self.out, SWEEP, &[])?;
            return tables::write::<SweepSummaryRow>(&self.out, SWEEP_SUMMARY, &[]);
        };
        let corpus = self.corpus()?;
        let mut corpus_view = corpus.clone();
        if let Some(n) = spec.max_examples {
            corpus_view.test.truncate(n);
        }
        let seeds = self.config.sweep_seeds();
        let cells: Vec<(f64, u64)> = seeds.iter().flat_map(|&s| spec.lambdas.iter().map(move |&l| (l, s))).collect();
        let model = spec.model.model_config(corpus.vocab.len(), 0);
        let results = self.pool()?.install(|| {
            cells
                .par_iter()
                .map(|&(lambda, seed)| {
                    let tc: TrainConfig = self.config.train.resolve(&spec.model, seed);
                    sweep_cell(&corpus_view, &model, &tc, lambda, seed)
                })
                .collect::<Vec<_>>()
        });
        let mut records = Vec::new();
        for (r, &(lambda, seed)) in results.into_iter().zip(&cells) {
            match r {
                Ok(rec) => records.push(rec),
                Err(e @ spattn_core::Error::Divergence { .. }) => eprintln!("warning: sweep cell lambda={lambda} seed={seed} diverged: {e}"),
                Err(e) => return Err(e.into()),
            }
        }
        let rows: Vec<SweepRow> = records
            .iter()
            .map(|r| SweepRow {
                lambda: r.lambda,
                seed: r.seed,
                entropy_mean: r.entropy_mean(),
                tau_grad_mean: r.tau_grad_mean(),
                tau_loo_mean: r.tau_loo_mean(),
                accuracy: r.accuracy,
            })
            .collect();
        tables::write(&self.out, SWEEP, &rows)?;
        let summary: Vec<SweepSummaryRow> = analysis::summarize_sweep(&records)
            .into_iter()
            .map(|s| SweepSummaryRow { seed: s.seed, kendall: s.kendall, pearson: s.pearson })
            .collect();
        tables::write(&self.out, SWEEP_SUMMARY, &summary)
    }

    fn adversarial(&self) -> Result<()> {
        let Some(spec) = &self.config.adversarial else {
            return tables::write::<AdversarialRow>(&self.out, ADVERSARIAL, &[]);
        };
        let corpus = self.corpus()?;
        let base_spec = &self.config.models[spec.model];
        let bases = self
            .config
            .seeds
            .iter()
            .map(|&s| self.load_model(base_spec, s, &corpus))
            .collect::<Result<Vec<_>>>()?;
        let mut cells = Vec::new();
        for (b, &seed) in self.config.seeds.iter().enumerate() {
            for &mode in &spec.modes {
                for &lambda_adv in &spec.lambda_adv {
                    cells.push((b, seed, mode, lambda_adv));
                }
            }
        }
        let results = self.pool()?.install(|| {
            cells
                .par_iter()
                .map(|&(b, seed, mode, lambda_adv)| {
                    let (model, params) = &bases[b];
                    let cfg = AdversarialConfig {
                        mode,
                        lambda_adv,
                        train: spec.train.resolve(base_spec, seed),
                        seed: unfrozen_seed(seed),
                    };
                    train_adversarial(params, model, &corpus, &cfg).map(|(_, r)| r)
                })
                .collect::<spattn_core::Result<Vec<_>>>()
        })?;
        let rows: Vec<AdversarialRow> = results
            .iter()
            .zip(&cells)
            .map(|(r, &(_, seed, mode, lambda_adv))| AdversarialRow {
                mode: mode.name().into(),
                lambda_adv,
                seed,
                jsd_mean: r.test.mean_jsd,
                accuracy: r.test.accuracy,
                accuracy_delta: r.test.accuracy_delta,
            })
            .collect();
        tables::write(&self.out, ADVERSARIAL, &rows)
    }

    fn report(&self) -> Result<()> {
        for w in crate::plots::render(&self.out)? {
            eprintln!("warning: {w}");
        }
        Ok(())
    }
}

/// Initialisation seed of the unfrozen adversary trained against base `seed`.
pub fn unfrozen_seed(seed: u64) -> u64 {
    seed.wrapping_add(0x5eed)
}

/// Writes the configured corpus as JSONL with explicit splits.
pub fn synth(config: &ExperimentConfig, base: &Path, out: &Path) -> Result<PathBuf> {
    let corpus = config.dataset.load(base)?;
    fs::create_dir_all(out)?;
    let path = out.join("corpus.jsonl");
    crate::ingest::write_jsonl(&corpus, &path)?;
    Ok(path)
}
