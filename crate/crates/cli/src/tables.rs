//! CSV schemas. Every file starts with its header row, even when empty.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

pub const METRICS: &str = "metrics.csv";
pub const CORRELATIONS: &str = "correlations.csv";
pub const ENTROPY: &str = "entropy.csv";
pub const ENTROPY_EXAMPLES: &str = "entropy_examples.csv";
pub const SWEEP: &str = "sweep.csv";
pub const SWEEP_SUMMARY: &str = "sweep_summary.csv";
pub const ADVERSARIAL: &str = "adversarial.csv";

// The csv crate cannot (de)serialise flattened structs, so each row spells
// out the columns naming its model. `lambda` is empty for projections
// without one.
macro_rules! keyed_row {
    ($(#[$m:meta])* $name:ident { $($field:ident: $ty:ty),* $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        pub struct $name {
            pub dataset: String,
            pub encoder: String,
            pub alignment: String,
            pub projection: String,
            pub lambda: Option<f64>,
            pub seed: u64,
            $(pub $field: $ty),*
        }

        impl $name {
            pub fn keyed(key: &ModelKey, $($field: $ty),*) -> Self {
                $name {
                    dataset: key.dataset.clone(),
                    encoder: key.encoder.clone(),
                    alignment: key.alignment.clone(),
                    projection: key.projection.clone(),
                    lambda: key.lambda,
                    seed: key.seed,
                    $($field),*
                }
            }
        }
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelKey {
    pub dataset: String,
    pub encoder: String,
    pub alignment: String,
    pub projection: String,
    pub lambda: Option<f64>,
    pub seed: u64,
}

keyed_row!(MetricsRow { epoch: usize, train_loss: f64, test_accuracy: f64 });

keyed_row!(CorrelationRow {
    fi_kind: String,
    fi_target: String,
    tau_mean: f64,
    tau_std: f64,
    n_examples: usize,
    n_skipped: usize,
});

keyed_row!(EntropyRow { fi_kind: String, fi_target: String, entropy_mean: f64, entropy_std: f64 });

keyed_row!(
    /// One example's entropy, kept for distribution plots.
    EntropyExampleRow { fi_kind: String, fi_target: String, example: usize, entropy: f64 }
);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub seed: u64,
    pub entropy_mean: f64,
    pub tau_grad_mean: f64,
    pub tau_loo_mean: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummaryRow {
    pub seed: u64,
    pub kendall: Option<f64>,
    pub pearson: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialRow {
    pub mode: String,
    pub lambda_adv: f64,
    pub seed: u64,
    pub jsd_mean: f64,
    pub accuracy: f64,
    pub accuracy_delta: f64,
}

pub fn headers(file: &str) -> &'static [&'static str] {
    match file {
        METRICS => &["dataset", "encoder", "alignment", "projection", "lambda", "seed", "epoch", "train_loss", "test_accuracy"],
        CORRELATIONS => &[
            "dataset", "encoder", "alignment", "projection", "lambda", "seed", "fi_kind", "fi_target", "tau_mean", "tau_std",
            "n_examples", "n_skipped",
        ],
        ENTROPY => &[
            "dataset", "encoder", "alignment", "projection", "lambda", "seed", "fi_kind", "fi_target", "entropy_mean",
            "entropy_std",
        ],
        ENTROPY_EXAMPLES => &[
            "dataset", "encoder", "alignment", "projection", "lambda", "seed", "fi_kind", "fi_target", "example", "entropy",
        ],
        SWEEP => &["lambda", "seed", "entropy_mean", "tau_grad_mean", "tau_loo_mean", "accuracy"],
        SWEEP_SUMMARY => &["seed", "kendall", "pearson"],
        ADVERSARIAL => &["mode", "lambda_adv", "seed", "jsd_mean", "accuracy", "accuracy_delta"],
        _ => &[],
    }
}

/// Writes `rows` under the file's fixed header.
pub fn write<T: Serialize>(dir: &Path, file: &str, rows: &[T]) -> Result<()> {
    let path = dir.join(file);
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(headers(file))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows back, failing with the file name when a column is missing.
pub fn read<T: for<'de> Deserialize<'de>>(dir: &Path, file: &str) -> Result<Vec<T>> {
    let path = dir.join(file);
    let mut r = csv::Reader::from_path(&path).with_context(|| format!("reading {}", path.display()))?;
    let have = r.headers()?.clone();
    for col in headers(file) {
        if !have.iter().any(|h| h == *col) {
            anyhow::bail!("{}: missing column {col:?}", path.display());
        }
    }
    r.deserialize().collect::<Result<Vec<T>, _>>().with_context(|| format!("parsing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_tables_have_headers_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        write::<SweepRow>(dir.path(), SWEEP, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(dir.path().join(SWEEP)).unwrap(), "lambda,seed,entropy_mean,tau_grad_mean,tau_loo_mean,accuracy\n");
        let rows = vec![CorrelationRow {
            dataset: "synthetic".into(),
            encoder: "bilstm".into(),
            alignment: "additive".into(),
            projection: "softmax".into(),
            lambda: None,
            seed: 1,
            fi_kind: "grad".into(),
            fi_target: "inputs".into(),
            tau_mean: 0.1 + 0.2,
            tau_std: 0.0,
            n_examples: 3,
            n_skipped: 0,
        }];
        write(dir.path(), CORRELATIONS, &rows).unwrap();
        let back: Vec<CorrelationRow> = read(dir.path(), CORRELATIONS).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn missing_column_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(SWEEP), "lambda,seed\n0,0\n").unwrap();
        let err = read::<SweepRow>(dir.path(), SWEEP).unwrap_err().to_string();
        assert!(err.contains("entropy_mean"), "{err}");
    }
}
