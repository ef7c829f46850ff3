use std::path::Path;

use spattn::ingest::{ingest, JsonlOptions};
use spattn::tables::{self, SweepRow};
use spattn::{ExperimentConfig, Run, Stage};

fn run_smoke(cfg: ExperimentConfig, out: &Path, jobs: usize) {
    Run::new(cfg, ".".into(), out.to_path_buf(), jobs).all().unwrap();
}

#[test]
fn jsonl_files_become_a_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.jsonl");
    let test = dir.path().join("test.jsonl");
    std::fs::write(&train, "{\"text\":\"Great movie, great cast!\",\"label\":1}\n\n{\"text\":\"dull movie\",\"label\":0}\n{\"text\":\"great fun\",\"label\":1}\n").unwrap();
    std::fs::write(&test, "{\"text\":\"great but unseen\",\"label\":0}\n").unwrap();
    let corpus = ingest(&train, Some(&test), &JsonlOptions::default()).unwrap();
    assert_eq!(corpus.train.len(), 3);
    assert_eq!(corpus.test.len(), 1);
    // "great" x3 and "movie" x2 clear min_freq 2; everything else is <unk>
    assert_eq!(corpus.vocab.tokens(), ["<unk>", "great", "movie"]);
    assert_eq!(corpus.test[0].tokens, [1, 0, 0]);
}

#[test]
fn sweep_has_one_row_per_lambda_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::smoke();
    let expect = cfg.sweep.as_ref().unwrap().lambdas.len() * cfg.sweep_seeds().len();
    run_smoke(cfg, dir.path(), 1);
    let rows: Vec<SweepRow> = tables::read(dir.path(), tables::SWEEP).unwrap();
    assert_eq!(rows.len(), expect);
    let manifest = std::fs::read_to_string(dir.path().join("MANIFEST")).unwrap();
    assert!(manifest.contains("status complete"), "{manifest}");
}

#[test]
fn unconfigured_sweep_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::smoke();
    cfg.sweep = None;
    Run::new(cfg, ".".into(), dir.path().to_path_buf(), 1).stage(Stage::Sweep).unwrap();
    let text = std::fs::read_to_string(dir.path().join(tables::SWEEP)).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert_eq!(text.trim_end().split(',').collect::<Vec<_>>(), tables::headers(tables::SWEEP));
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_smoke(ExperimentConfig::smoke(), a.path(), 1);
    run_smoke(ExperimentConfig::smoke(), b.path(), 3);
    for file in [tables::METRICS, tables::CORRELATIONS, tables::ENTROPY, tables::SWEEP, tables::ADVERSARIAL] {
        assert_eq!(std::fs::read(a.path().join(file)).unwrap(), std::fs::read(b.path().join(file)).unwrap(), "{file}");
    }
    let ck = |d: &Path| std::fs::read(d.join("checkpoints/bilstm-additive-softmax-s0.json")).unwrap();
    assert_eq!(ck(a.path()), ck(b.path()));
}
