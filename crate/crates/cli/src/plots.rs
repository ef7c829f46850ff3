//! Minimal SVG charts drawn from the CSV outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Result;

use crate::tables::{self, CorrelationRow, EntropyExampleRow, SweepRow};

const W: f64 = 720.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 80.0;
const PALETTE: [&str; 6] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#b07aa1"];

/// Horizontal position for a sparsity value: negative lambdas are
/// log-compressed as `-log10(1 + |lambda|)`, `[0, 1)` stays linear.
pub fn lambda_axis(lambda: f64) -> f64 {
    if lambda < 0.0 {
        -(1.0 - lambda).log10()
    } else {
        lambda
    }
}

struct Frame {
    svg: String,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(title: &str, (x0, x1): (f64, f64), (y0, y1): (f64, f64), y_label: &str) -> Self {
        let mut svg = String::new();
        let _ = write!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#
        );
        let _ = write!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = write!(svg, r#"<text x="{}" y="22" font-size="14" text-anchor="middle">{}</text>"#, W / 2.0, esc(title));
        let _ = write!(
            svg,
            r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{b}" stroke="black"/><line x1="{LEFT}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#,
            b = H - BOTTOM,
            r = W - RIGHT
        );
        let _ = write!(
            svg,
            r#"<text transform="translate(18,{}) rotate(-90)" text-anchor="middle">{}</text>"#,
            (TOP + H - BOTTOM) / 2.0,
            esc(y_label)
        );
        let mut f = Frame { svg, x0, x1, y0, y1 };
        for k in 0..=4 {
            let v = y0 + (y1 - y0) * k as f64 / 4.0;
            let y = f.y(v);
            let _ = write!(
                f.svg,
                r##"<line x1="{a}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/><text x="{t}" y="{ty:.2}" text-anchor="end">{v:.2}</text>"##,
                a = LEFT - 4.0,
                t = LEFT - 6.0,
                ty = y + 4.0
            );
        }
        f
    }

    fn x(&self, v: f64) -> f64 {
        let span = if self.x1 > self.x0 { self.x1 - self.x0 } else { 1.0 };
        LEFT + 10.0 + (v - self.x0) / span * (W - LEFT - RIGHT - 20.0)
    }

    fn y(&self, v: f64) -> f64 {
        let span = if self.y1 > self.y0 { self.y1 - self.y0 } else { 1.0 };
        H - BOTTOM - (v - self.y0) / span * (H - TOP - BOTTOM)
    }

    fn legend(&mut self, entries: &[String]) {
        for (i, e) in entries.iter().enumerate() {
            let y = TOP + 16.0 * i as f64;
            let _ = write!(
                self.svg,
                r#"<rect x="{x}" y="{y}" width="10" height="10" fill="{c}"/><text x="{tx}" y="{ty}">{t}</text>"#,
                x = W - RIGHT + 12.0,
                c = PALETTE[i % PALETTE.len()],
                tx = W - RIGHT + 26.0,
                ty = y + 9.0,
                t = esc(e)
            );
        }
    }

    fn note(&mut self, text: &str) {
        let _ = write!(self.svg, r#"<text x="{LEFT}" y="{}" font-size="10">{}</text>"#, H - 12.0, esc(text));
    }

    fn x_tick(&mut self, at: f64, label: &str, rotate: bool) {
        let x = self.x(at);
        let y = H - BOTTOM + 14.0;
        if rotate {
            let _ = write!(
                self.svg,
                r#"<text transform="translate({x:.2},{y}) rotate(30)" text-anchor="start">{}</text>"#,
                esc(label)
            );
        } else {
            let _ = write!(self.svg, r#"<text x="{x:.2}" y="{y}" text-anchor="middle">{}</text>"#, esc(label));
        }
    }

    fn finish(mut self) -> String {
        self.svg.push_str("</svg>\n");
        self.svg
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Box plots (quartiles, min/max whiskers) of values in `[0, 1]`.
pub fn box_plot(title: &str, groups: &[(String, String, Vec<f64>)]) -> String {
    let mut f = Frame::new(title, (0.0, groups.len().max(1) as f64), (0.0, 1.0), "normalized entropy");
    let mut series: Vec<String> = groups.iter().map(|g| g.1.clone()).collect();
    series.sort();
    series.dedup();
    let width = (W - LEFT - RIGHT - 20.0) / groups.len().max(1) as f64 * 0.6;
    for (i, (label, s, values)) in groups.iter().enumerate() {
        if values.is_empty() {
            continue;
        }
        let mut v = values.clone();
        v.sort_by(f64::total_cmp);
        let (lo, q1, med, q3, hi) = (v[0], quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75), v[v.len() - 1]);
        let cx = f.x(i as f64 + 0.5);
        let color = PALETTE[series.iter().position(|x| x == s).unwrap_or(0) % PALETTE.len()];
        let _ = write!(
            f.svg,
            r#"<line x1="{cx:.2}" y1="{a:.2}" x2="{cx:.2}" y2="{b:.2}" stroke="black"/><rect x="{x:.2}" y="{top:.2}" width="{width:.2}" height="{h:.2}" fill="{color}" fill-opacity="0.7" stroke="black"/><line x1="{x:.2}" y1="{m:.2}" x2="{x2:.2}" y2="{m:.2}" stroke="black" stroke-width="2"/>"#,
            a = f.y(lo),
            b = f.y(hi),
            x = cx - width / 2.0,
            top = f.y(q3),
            h = f.y(q1) - f.y(q3),
            m = f.y(med),
            x2 = cx + width / 2.0
        );
        f.x_tick(i as f64 + 0.5, label, true);
    }
    f.legend(&series);
    f.finish()
}

/// Bars of `values[category][series]`.
pub fn grouped_bars(title: &str, categories: &[String], series: &[String], values: &[Vec<Option<f64>>], y_label: &str) -> String {
    let lo = values.iter().flatten().flatten().fold(0.0f64, |a, &b| a.min(b)).min(0.0);
    let mut f = Frame::new(title, (0.0, categories.len().max(1) as f64), (lo.min(-0.2).max(-1.0), 1.0), y_label);
    let slot = (W - LEFT - RIGHT - 20.0) / categories.len().max(1) as f64;
    let bar = slot * 0.8 / series.len().max(1) as f64;
    let zero = f.y(0.0);
    for (c, row) in values.iter().enumerate() {
        for (s, v) in row.iter().enumerate() {
            let Some(v) = v else { continue };
            let x = f.x(c as f64) + slot * 0.1 + bar * s as f64;
            let y = f.y(*v);
            let _ = write!(
                f.svg,
                r#"<rect x="{x:.2}" y="{top:.2}" width="{bar:.2}" height="{h:.2}" fill="{color}"/>"#,
                top = y.min(zero),
                h = (y - zero).abs(),
                color = PALETTE[s % PALETTE.len()]
            );
        }
        f.x_tick(c as f64 + 0.5, &categories[c], true);
    }
    let _ = write!(f.svg, r#"<line x1="{LEFT}" y1="{zero:.2}" x2="{}" y2="{zero:.2}" stroke="gray"/>"#, W - RIGHT);
    f.legend(series);
    f.finish()
}

/// Lines through `(x, y)` points per series; a single point is drawn as a dot.
pub fn line_plot(title: &str, series: &[(String, Vec<(f64, f64)>)], ticks: &[(f64, String)], y_label: &str, note: &str) -> String {
    let xs = series.iter().flat_map(|s| s.1.iter().map(|p| p.0));
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let lo = series.iter().flat_map(|s| s.1.iter().map(|p| p.1)).fold(0.0f64, f64::min);
    let mut f = Frame::new(title, (x0, x1), (lo.max(-1.0), 1.0), y_label);
    for (i, (_, points)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if points.len() > 1 {
            let path: Vec<String> = points.iter().map(|&(x, y)| format!("{:.2},{:.2}", f.x(x), f.y(y))).collect();
            let _ = write!(f.svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, path.join(" "));
        }
        for &(x, y) in points {
            let _ = write!(f.svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, f.x(x), f.y(y));
        }
    }
    for (at, label) in ticks {
        f.x_tick(*at, label, false);
    }
    let names: Vec<String> = series.iter().map(|s| s.0.clone()).collect();
    f.legend(&names);
    f.note(note);
    f.finish()
}

/// Renders every plot whose source CSV has rows; returns warnings for the
/// ones skipped.
pub fn render(dir: &Path) -> Result<Vec<String>> {
    let plots = dir.join("plots");
    fs::create_dir_all(&plots)?;
    let mut warnings = Vec::new();

    let entropies: Vec<EntropyExampleRow> = tables::read(dir, tables::ENTROPY_EXAMPLES)?;
    if entropies.is_empty() {
        warnings.push("no per-example entropies; skipping entropy plot".to_string());
    } else {
        let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
        for r in &entropies {
            let label = format!("{} {} {}", r.encoder, r.projection, r.fi_kind);
            groups.entry((label, format!("{}:{}", r.fi_kind, r.fi_target))).or_default().push(r.entropy);
        }
        let groups: Vec<_> = groups.into_iter().map(|((l, s), v)| (l, s, v)).collect();
        fs::write(plots.join("entropy.svg"), box_plot("Entropy of feature-importance distributions", &groups))?;
    }

    let correlations: Vec<CorrelationRow> = tables::read(dir, tables::CORRELATIONS)?;
    if correlations.is_empty() {
        warnings.push("no correlations; skipping correlation plot".to_string());
    } else {
        let mut categories: Vec<String> = Vec::new();
        let mut series: Vec<String> = Vec::new();
        let mut sums: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
        for r in &correlations {
            let c = format!("{}-{}-{}", r.encoder, r.alignment, r.projection);
            let s = format!("{}:{}", r.fi_kind, r.fi_target);
            if !categories.contains(&c) {
                categories.push(c.clone());
            }
            if !series.contains(&s) {
                series.push(s.clone());
            }
            if r.tau_mean.is_finite() {
                let e = sums.entry((c, s)).or_default();
                e.0 += r.tau_mean;
                e.1 += 1;
            }
        }
        let values: Vec<Vec<Option<f64>>> = categories
            .iter()
            .map(|c| series.iter().map(|s| sums.get(&(c.clone(), s.clone())).map(|&(t, n)| t / n as f64)).collect())
            .collect();
        let svg = grouped_bars("Mean Kendall tau-b between attention and feature importance", &categories, &series, &values, "tau-b");
        fs::write(plots.join("correlations.svg"), svg)?;
    }

    let sweep: Vec<SweepRow> = tables::read(dir, tables::SWEEP)?;
    if sweep.is_empty() {
        warnings.push("sweep.csv is empty; skipping sweep plot".to_string());
    } else {
        let mut by_lambda: BTreeMap<u64, (f64, [f64; 2], [usize; 2])> = BTreeMap::new();
        for r in &sweep {
            let e = by_lambda.entry(lambda_key(r.lambda)).or_insert((r.lambda, [0.0; 2], [0; 2]));
            for (k, v) in [r.entropy_mean, r.tau_grad_mean].into_iter().enumerate() {
                if v.is_finite() {
                    e.1[k] += v;
                    e.2[k] += 1;
                }
            }
        }
        let mut cells: Vec<_> = by_lambda.into_values().collect();
        cells.sort_by(|a, b| a.0.total_cmp(&b.0));
        let line = |k: usize| -> Vec<(f64, f64)> {
            cells.iter().filter(|c| c.2[k] > 0).map(|c| (lambda_axis(c.0), c.1[k] / c.2[k] as f64)).collect()
        };
        let series = vec![("entropy (grad, inputs)".to_string(), line(0)), ("tau-b (attention, grad)".to_string(), line(1))];
        let ticks: Vec<(f64, String)> = cells.iter().map(|c| (lambda_axis(c.0), format!("{}", c.0))).collect();
        let svg = line_plot(
            "Sparsity sweep",
            &series,
            &ticks,
            "mean over test examples and seeds",
            "x: lambda; lambda < 0 placed at -log10(1 + |lambda|), [0, 1) linear",
        );
        fs::write(plots.join("sweep.svg"), svg)?;
    }
    Ok(warnings)
}

fn lambda_key(l: f64) -> u64 {
    // order-preserving key for BTreeMap grouping of floats
    let b = l.to_bits();
    if l.is_sign_negative() {
        !b
    } else {
        b | (1 << 63)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_axis_transform() {
        assert!((lambda_axis(-10.0) + 11f64.log10()).abs() < 1e-15);
        assert_eq!(lambda_axis(0.0), 0.0);
        assert_eq!(lambda_axis(0.5), 0.5);
        let grid = [-10.0, -2.0, -0.5, 0.0, 0.5, 0.9];
        assert!(grid.windows(2).all(|w| lambda_axis(w[0]) < lambda_axis(w[1])));
    }

    #[test]
    fn single_point_is_a_scatter() {
        let svg = line_plot("t", &[("a".into(), vec![(0.0, 0.5)])], &[], "y", "");
        assert!(svg.contains("<circle") && !svg.contains("<polyline"));
        let svg = line_plot("t", &[("a".into(), vec![(0.0, 0.5), (1.0, 0.2)])], &[], "y", "");
        assert!(svg.contains("<polyline"));
    }

    #[test]
    fn lambda_key_orders_like_floats() {
        let v = [-10.0, -0.5, 0.0, 0.5, 0.9];
        assert!(v.windows(2).all(|w| lambda_key(w[0]) < lambda_key(w[1])));
    }
}
