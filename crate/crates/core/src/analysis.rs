//! Rank correlation, divergences and per-dataset aggregates.

use alloc::vec::Vec;

use crate::attribution::{grad_fi_intermediate, grad_fi_output, loo_fi, normalized_entropy, FiOver};
use crate::data::{Corpus, Example};
use crate::error::{Error, Result};
use crate::model::{accuracy, forward, train, ModelConfig, ModelParams, TrainConfig};
use crate::projections::ProjectionKind;

/// Kendall's tau-b with tie correction, via Knight's `O(n log n)` merge sort.
pub fn kendall_tau_b(u: &[f64], v: &[f64]) -> Result<f64> {
    let n = u.len();
    if n != v.len() {
        return Err(Error::ShapeMismatch { op: "kendall_tau_b", detail: alloc::format!("{} vs {}", n, v.len()) });
    }
    if n < 2 {
        return Err(Error::EmptyInput { op: "kendall_tau_b" });
    }
    if u.iter().chain(v).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { op: "kendall_tau_b" });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| u[a].total_cmp(&u[b]).then(v[a].total_cmp(&v[b])));
    let pairs = |len: u64| len * len.saturating_sub(1) / 2;
    let n0 = pairs(n as u64);
    // ties in u, and joint ties in (u, v)
    let (mut n1, mut n3) = (0u64, 0u64);
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && u[idx[j]] == u[idx[i]] {
            j += 1;
        }
        n1 += pairs((j - i) as u64);
        let mut k = i;
        while k < j {
            let mut l = k + 1;
            while l < j && v[idx[l]] == v[idx[k]] {
                l += 1;
            }
            n3 += pairs((l - k) as u64);
            k = l;
        }
        i = j;
    }
    let mut vs: Vec<f64> = idx.iter().map(|&k| v[k]).collect();
    let swaps = merge_sort_swaps(&mut vs);
    let mut n2 = 0u64;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && vs[j] == vs[i] {
            j += 1;
        }
        n2 += pairs((j - i) as u64);
        i = j;
    }
    if n1 == n0 || n2 == n0 {
        return Err(Error::FullyTied);
    }
    let diff = n0 as i64 - n1 as i64 - n2 as i64 + n3 as i64 - 2 * swaps as i64;
    Ok(tau_from_counts(diff, n0 - n1, n0 - n2))
}

/// `(C - D) / sqrt(untied_u * untied_v)`, clamped to `[-1, 1]`.
pub fn tau_from_counts(concordant_minus_discordant: i64, untied_u: u64, untied_v: u64) -> f64 {
    let denom = libm::sqrt(untied_u as f64 * untied_v as f64);
    (concordant_minus_discordant as f64 / denom).clamp(-1.0, 1.0)
}

// Sorts ascending, returning the number of inversions (strictly greater
// element before a smaller one).
fn merge_sort_swaps(v: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mut buf = v.to_vec();
    let mut swaps = 0u64;
    let mut width = 1;
    while width < n {
        let mut start = 0;
        while start < n {
            let mid = (start + width).min(n);
            let end = (start + 2 * width).min(n);
            let (mut i, mut j, mut k) = (start, mid, start);
            while i < mid && j < end {
                if v[j] < v[i] {
                    swaps += (mid - i) as u64;
                    buf[k] = v[j];
                    j += 1;
                } else {
                    buf[k] = v[i];
                    i += 1;
                }
                k += 1;
            }
            buf[k..k + (mid - i)].copy_from_slice(&v[i..mid]);
            k += mid - i;
            buf[k..k + (end - j)].copy_from_slice(&v[j..end]);
            start = end;
        }
        v.copy_from_slice(&buf);
        width *= 2;
    }
    swaps
}

pub fn pearson(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() || u.len() < 2 {
        return Err(Error::ShapeMismatch { op: "pearson", detail: alloc::format!("{} vs {}", u.len(), v.len()) });
    }
    let n = u.len() as f64;
    let (mu, mv) = (u.iter().sum::<f64>() / n, v.iter().sum::<f64>() / n);
    let cov: f64 = u.iter().zip(v).map(|(a, b)| (a - mu) * (b - mv)).sum();
    let su: f64 = u.iter().map(|a| (a - mu) * (a - mu)).sum();
    let sv: f64 = v.iter().map(|b| (b - mv) * (b - mv)).sum();
    if su == 0.0 || sv == 0.0 {
        return Err(Error::FullyTied);
    }
    Ok((cov / libm::sqrt(su * sv)).clamp(-1.0, 1.0))
}

/// Jensen-Shannon divergence in nats; lies in `[0, ln 2]`.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch { op: "jsd", detail: alloc::format!("{} vs {}", p.len(), q.len()) });
    }
    Ok(crate::autodiff::jsd_value(p, q).min(core::f64::consts::LN_2))
}

/// Importance measures compared against the attention distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FiMeasure {
    /// `g_yhat(x)`
    GradInputs,
    /// `g_yhat(I)`
    GradIntermediate,
    /// `D_yhat(x)`
    LooInputs,
    /// `D_yhat(I)`
    LooIntermediate,
    /// `alpha` itself, as a harness self-check.
    Attention,
}

impl FiMeasure {
    pub const TABLE: [FiMeasure; 4] =
        [FiMeasure::GradInputs, FiMeasure::LooInputs, FiMeasure::GradIntermediate, FiMeasure::LooIntermediate];

    pub fn kind(self) -> &'static str {
        match self {
            FiMeasure::GradInputs | FiMeasure::GradIntermediate => "grad",
            FiMeasure::LooInputs | FiMeasure::LooIntermediate => "loo",
            FiMeasure::Attention => "attention",
        }
    }

    pub fn target(self) -> &'static str {
        match self {
            FiMeasure::GradInputs | FiMeasure::LooInputs => "inputs",
            FiMeasure::GradIntermediate | FiMeasure::LooIntermediate => "intermediate",
            FiMeasure::Attention => "attention",
        }
    }
}

/// Entropy targets: input FI on the output, and input FI on `||h_p||`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EntropyMeasure {
    /// `H(g_yhat(x))`
    GradInputs,
    /// `H(D_yhat(x))`
    LooInputs,
    /// mean over `p` of `H(g_{h_p}(x))`
    HiddenInputs,
}

impl EntropyMeasure {
    pub const ALL: [EntropyMeasure; 3] = [EntropyMeasure::GradInputs, EntropyMeasure::LooInputs, EntropyMeasure::HiddenInputs];

    pub fn kind(self) -> &'static str {
        match self {
            EntropyMeasure::LooInputs => "loo",
            _ => "grad",
        }
    }

    pub fn target(self) -> &'static str {
        match self {
            EntropyMeasure::HiddenInputs => "hidden_to_inputs",
            _ => "inputs",
        }
    }
}

/// Per-example values; `None` marks a degenerate (skipped) case.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExampleMeasures {
    pub y_hat: f64,
    pub correct: bool,
    pub taus: Vec<(FiMeasure, Option<f64>)>,
    pub entropies: Vec<(EntropyMeasure, Option<f64>)>,
}

impl ExampleMeasures {
    pub fn tau(&self, m: FiMeasure) -> Option<f64> {
        self.taus.iter().find(|(k, _)| *k == m).and_then(|(_, v)| *v)
    }
    pub fn entropy(&self, m: EntropyMeasure) -> Option<f64> {
        self.entropies.iter().find(|(k, _)| *k == m).and_then(|(_, v)| *v)
    }
}

fn skip_degenerate(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::FullyTied | Error::DegenerateImportance(_) | Error::ZeroNorm { .. } | Error::SingleOutcome) => Ok(None),
        Err(Error::EmptyInput { .. }) => Ok(None),
        Err(Error::ShapeMismatch { op: "loo_fi", .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Computes the requested correlations and entropies for one example.
pub fn measure_example(
    example: &Example,
    params: &ModelParams,
    config: &ModelConfig,
    taus: &[FiMeasure],
    entropies: &[EntropyMeasure],
) -> Result<ExampleMeasures> {
    let mut trace = forward(&example.tokens, params, config)?;
    let alpha = trace.alpha();
    let y_hat = trace.y_hat();
    let mut out = ExampleMeasures {
        y_hat,
        correct: (y_hat >= 0.5) == (example.label == 1),
        ..Default::default()
    };
    for &m in taus {
        let fi = match m {
            FiMeasure::GradInputs => grad_fi_output(&trace, FiOver::Inputs).map(|d| d.weights().to_vec()),
            FiMeasure::GradIntermediate => grad_fi_output(&trace, FiOver::IntermediateReps).map(|d| d.weights().to_vec()),
            FiMeasure::LooInputs => loo_fi(&trace, params, config, FiOver::Inputs).map(|d| d.weights().to_vec()),
            FiMeasure::LooIntermediate => loo_fi(&trace, params, config, FiOver::IntermediateReps).map(|d| d.weights().to_vec()),
            FiMeasure::Attention => Ok(alpha.values().to_vec()),
        };
        let tau = skip_degenerate(fi.and_then(|w| kendall_tau_b(alpha.values(), &w)))?;
        out.taus.push((m, tau));
    }
    for &m in entropies {
        let h = match m {
            EntropyMeasure::GradInputs => grad_fi_output(&trace, FiOver::Inputs).and_then(|d| normalized_entropy(&d)),
            EntropyMeasure::LooInputs => loo_fi(&trace, params, config, FiOver::Inputs).and_then(|d| normalized_entropy(&d)),
            EntropyMeasure::HiddenInputs => {
                let mut values = Vec::with_capacity(trace.len());
                for p in 0..trace.len() {
                    if let Some(h) = skip_degenerate(grad_fi_intermediate(&mut trace, p).and_then(|d| normalized_entropy(&d)))? {
                        values.push(h);
                    }
                }
                if values.is_empty() {
                    Err(Error::SingleOutcome)
                } else {
                    Ok(values.iter().sum::<f64>() / values.len() as f64)
                }
            }
        };
        out.entropies.push((m, skip_degenerate(h)?));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub n_examples: usize,
    pub n_skipped: usize,
}

impl Summary {
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> Summary {
        let mut kept = Vec::new();
        let mut skipped = 0;
        for v in values {
            match v {
                Some(x) => kept.push(x),
                None => skipped += 1,
            }
        }
        let n = kept.len();
        if n == 0 {
            return Summary { mean: f64::NAN, std: f64::NAN, n_examples: 0, n_skipped: skipped };
        }
        let mean = kept.iter().sum::<f64>() / n as f64;
        let var = kept.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        Summary { mean, std: libm::sqrt(var), n_examples: n, n_skipped: skipped }
    }
}

/// Mean and spread of `tau(alpha, FI)` for one measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationSummary {
    pub measure: FiMeasure,
    pub summary: Summary,
}

pub fn summarize_correlations(measures: &[ExampleMeasures], kinds: &[FiMeasure]) -> Vec<CorrelationSummary> {
    kinds
        .iter()
        .map(|&k| CorrelationSummary { measure: k, summary: Summary::of(measures.iter().map(|m| m.tau(k))) })
        .collect()
}

pub fn summarize_entropies(measures: &[ExampleMeasures], kinds: &[EntropyMeasure]) -> Vec<(EntropyMeasure, Summary)> {
    kinds.iter().map(|&k| (k, Summary::of(measures.iter().map(|m| m.entropy(k))))).collect()
}

/// Mean `tau(alpha, FI)` per measure over `examples`.
pub fn correlate_attention_fi(
    params: &ModelParams,
    config: &ModelConfig,
    examples: &[Example],
    kinds: &[FiMeasure],
) -> Result<Vec<CorrelationSummary>> {
    let measures = examples
        .iter()
        .map(|ex| measure_example(ex, params, config, kinds, &[]))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize_correlations(&measures, kinds))
}

/// One trained model of a sparsity sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub lambda: f64,
    pub seed: u64,
    /// `H(g_yhat(x))` per test example.
    pub entropies: Vec<Option<f64>>,
    /// `tau(alpha, g_yhat(x))` per test example.
    pub taus_grad: Vec<Option<f64>>,
    /// `tau(alpha, D_yhat(x))` per test example.
    pub taus_loo: Vec<Option<f64>>,
    pub accuracy: f64,
}

impl SweepRecord {
    pub fn entropy_mean(&self) -> f64 {
        Summary::of(self.entropies.iter().copied()).mean
    }
    pub fn tau_grad_mean(&self) -> f64 {
        Summary::of(self.taus_grad.iter().copied()).mean
    }
    pub fn tau_loo_mean(&self) -> f64 {
        Summary::of(self.taus_loo.iter().copied()).mean
    }
}

/// For each seed, rank correlation between lambda and mean entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub seed: u64,
    pub kendall: Option<f64>,
    pub pearson: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub records: Vec<SweepRecord>,
    pub per_seed: Vec<SweepSummary>,
    /// Cells that failed to train, with the error.
    pub failures: Vec<(f64, u64, Error)>,
}

/// Model and train configs for one sweep cell.
pub fn sweep_configs(model: &ModelConfig, train: &TrainConfig, lambda: f64, seed: u64) -> Result<(ModelConfig, TrainConfig)> {
    let mut m = model.clone();
    m.projection = ProjectionKind::sparsegen(lambda)?;
    m.seed = seed;
    let mut t = train.clone();
    t.seed = seed;
    Ok((m, t))
}

/// Trains and measures one `(lambda, seed)` cell.
pub fn sweep_cell(corpus: &Corpus, model: &ModelConfig, train_cfg: &TrainConfig, lambda: f64, seed: u64) -> Result<SweepRecord> {
    let (m, t) = sweep_configs(model, train_cfg, lambda, seed)?;
    let (params, _) = train(corpus, &m, &t)?;
    measure_sweep_cell(&params, &m, &corpus.test, lambda, seed)
}

pub fn measure_sweep_cell(params: &ModelParams, model: &ModelConfig, test: &[Example], lambda: f64, seed: u64) -> Result<SweepRecord> {
    let taus = [FiMeasure::GradInputs, FiMeasure::LooInputs];
    let mut record = SweepRecord {
        lambda,
        seed,
        entropies: Vec::new(),
        taus_grad: Vec::new(),
        taus_loo: Vec::new(),
        accuracy: accuracy(params, model, test)?,
    };
    for ex in test {
        let m = measure_example(ex, params, model, &taus, &[EntropyMeasure::GradInputs])?;
        record.entropies.push(m.entropy(EntropyMeasure::GradInputs));
        record.taus_grad.push(m.tau(FiMeasure::GradInputs));
        record.taus_loo.push(m.tau(FiMeasure::LooInputs));
    }
    Ok(record)
}

/// Per-seed correlation of lambda against mean entropy.
pub fn summarize_sweep(records: &[SweepRecord]) -> Vec<SweepSummary> {
    let mut seeds: Vec<u64> = records.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    seeds
        .into_iter()
        .map(|seed| {
            let mut cells: Vec<&SweepRecord> =
                records.iter().filter(|r| r.seed == seed && r.entropy_mean().is_finite()).collect();
            cells.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
            let lambdas: Vec<f64> = cells.iter().map(|r| r.lambda).collect();
            let ents: Vec<f64> = cells.iter().map(|r| r.entropy_mean()).collect();
            SweepSummary { seed, kendall: kendall_tau_b(&lambdas, &ents).ok(), pearson: pearson(&lambdas, &ents).ok() }
        })
        .collect()
}

/// Trains one model per `(lambda, seed)` and summarises the trend.
pub fn lambda_sweep(corpus: &Corpus, model: &ModelConfig, train_cfg: &TrainConfig, grid: &[f64], seeds: &[u64]) -> Result<SweepReport> {
    if grid.len() < 2 {
        return Err(Error::Config("lambda grid needs at least two points".into()));
    }
    for &l in grid {
        ProjectionKind::sparsegen(l)?;
    }
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for &seed in seeds {
        for &lambda in grid {
            match sweep_cell(corpus, model, train_cfg, lambda, seed) {
                Ok(r) => records.push(r),
                Err(e @ Error::Divergence { .. }) => failures.push((lambda, seed, e)),
                Err(e) => return Err(e),
            }
        }
    }
    let per_seed = summarize_sweep(&records);
    Ok(SweepReport { records, per_seed, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct pair counting.
    fn brute_tau_b(u: &[f64], v: &[f64]) -> Option<f64> {
        let (mut c, mut d, mut tu, mut tv) = (0i64, 0i64, 0u64, 0u64);
        for i in 0..u.len() {
            for j in i + 1..u.len() {
                let a = u[i].partial_cmp(&u[j]).unwrap();
                let b = v[i].partial_cmp(&v[j]).unwrap();
                use core::cmp::Ordering::Equal;
                match (a, b) {
                    (Equal, Equal) => {}
                    (Equal, _) => tu += 1,
                    (_, Equal) => tv += 1,
                    _ if a == b => c += 1,
                    _ => d += 1,
                }
            }
        }
        let cd = (c + d) as u64;
        if cd + tu == 0 || cd + tv == 0 {
            return None;
        }
        Some(tau_from_counts(c - d, cd + tv, cd + tu))
    }

    #[test]
    fn kendall_examples() {
        assert_eq!(kendall_tau_b(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(kendall_tau_b(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        // C = 1, D = 0, one tie on each side: 1 / sqrt(2 * 2)
        let t = kendall_tau_b(&[1.0, 1.0, 2.0], &[1.0, 2.0, 2.0]).unwrap();
        assert_eq!(t, brute_tau_b(&[1.0, 1.0, 2.0], &[1.0, 2.0, 2.0]).unwrap());
        assert!((t - 0.5).abs() < 1e-15);
        assert_eq!(kendall_tau_b(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::FullyTied));
        assert!(kendall_tau_b(&[1.0], &[1.0]).is_err());
        assert!(kendall_tau_b(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn jsd_examples() {
        let p = [0.2, 0.5, 0.3];
        assert_eq!(jsd(&p, &p).unwrap(), 0.0);
        assert!((jsd(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - core::f64::consts::LN_2).abs() < 1e-12);
        assert!(jsd(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn summary_skips_none() {
        let s = Summary::of([Some(1.0), None, Some(3.0)]);
        assert_eq!((s.mean, s.std, s.n_examples, s.n_skipped), (2.0, 1.0, 2, 1));
    }

    fn tied_vec() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0u8..4, 2..30).prop_map(|v| v.into_iter().map(f64::from).collect())
    }

    proptest! {
        #[test]
        fn tau_b_matches_pair_counting(u in tied_vec(), raw in prop::collection::vec(0u8..4, 30)) {
            let v: Vec<f64> = raw[..u.len()].iter().map(|&x| f64::from(x)).collect();
            match (kendall_tau_b(&u, &v), brute_tau_b(&u, &v)) {
                (Ok(a), Some(b)) => prop_assert_eq!(a, b),
                (Err(Error::FullyTied), None) => {}
                (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
            }
        }

        #[test]
        fn tau_b_rank_invariant(u in prop::collection::vec(-5.0f64..5.0, 2..20), v in prop::collection::vec(-5.0f64..5.0, 20), shift in -3.0f64..3.0) {
            let v = &v[..u.len()];
            let mapped: Vec<f64> = u.iter().map(|x| libm::exp(x * 0.7) + shift).collect();
            if let (Ok(a), Ok(b)) = (kendall_tau_b(&u, v), kendall_tau_b(&mapped, v)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn jsd_bounds_and_symmetry(a in prop::collection::vec(0.0f64..1.0, 2..10), b in prop::collection::vec(0.0f64..1.0, 10)) {
            let b = &b[..a.len()];
            let (sa, sb) = (a.iter().sum::<f64>(), b.iter().sum::<f64>());
            prop_assume!(sa > 1e-6 && sb > 1e-6);
            let p: Vec<f64> = a.iter().map(|x| x / sa).collect();
            let q: Vec<f64> = b.iter().map(|x| x / sb).collect();
            let d = jsd(&p, &q).unwrap();
            prop_assert!((0.0..=core::f64::consts::LN_2).contains(&d));
            prop_assert!((d - jsd(&q, &p).unwrap()).abs() < 1e-15);
        }
    }
}
