//! Results table and CSV.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{Baseline, EvalError, EvalResults};

pub const RESULTS_TABLE: &str = "results_table.txt";
pub const RESULTS_CSV: &str = "results.csv";

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn format_mean_std(xs: &[f64]) -> String {
    let (m, s) = mean_std(xs);
    format!("{m:.3} ± {s:.3}")
}

fn columns(results: &EvalResults) -> Vec<String> {
    let mut cols = vec![format!("HR@{}", results.k), format!("nDCG@{}", results.k)];
    cols.extend(results.recall_ks.iter().map(|k| format!("Recall@{k}")));
    cols.push("Unique-Top-1".into());
    cols
}

/// Per-seed values for each column of one model.
fn column_values(results: &EvalResults, model: Baseline) -> Vec<Vec<f64>> {
    let Some(run) = results.model(model) else {
        return Vec::new();
    };
    let mut cols = vec![
        run.reports.iter().map(|r| r.hit_rate).collect::<Vec<_>>(),
        run.reports.iter().map(|r| r.ndcg).collect(),
    ];
    for i in 0..results.recall_ks.len() {
        cols.push(run.reports.iter().map(|r| r.recall[i]).collect());
    }
    cols.push(run.reports.iter().map(|r| r.unique_top1 as f64).collect());
    cols
}

pub fn render_table(results: &EvalResults) -> String {
    let headers = columns(results);
    let width = 17;
    let mut s = String::new();
    let seeds = results.splits.len();
    let _ = writeln!(s, "Cold-start evaluation, mean ± std over {seeds} seed(s)");
    let _ = writeln!(s);
    let _ = write!(s, "{:<18}", "model");
    for h in &headers {
        let _ = write!(s, "{h:<width$}");
    }
    let _ = writeln!(s);
    for run in &results.runs {
        let _ = write!(s, "{:<18}", run.model.as_str());
        for col in column_values(results, run.model) {
            let _ = write!(s, "{:<width$}", format_mean_std(&col));
        }
        let _ = writeln!(s);
    }
    let _ = writeln!(s);
    for sp in &results.splits {
        let _ = writeln!(
            s,
            "seed {}: {} training users, {} cold users, {} cold users excluded (no relevant items)",
            sp.seed, sp.train_users, sp.cold_users, sp.excluded_users
        );
    }
    if !results.comparisons.is_empty() {
        let _ = writeln!(s);
        let _ = writeln!(s, "Paired tests over cold users (all seeds pooled), alpha = 0.05");
        for c in &results.comparisons {
            let _ = write!(s, "{:<42} ", format!("{} vs {} [{}]", c.a, c.b, c.metric));
            match &c.result {
                Some(r) => {
                    let d = r
                        .cohens_d
                        .map(|d| format!("{d:.3}"))
                        .unwrap_or_else(|| "undefined".into());
                    let _ = writeln!(
                        s,
                        "n={} diff={:+.4} t={:.3} p_t={:.3e} p_w={:.3e} ({:?}) d={}",
                        r.n,
                        r.mean_diff,
                        r.t_test.statistic,
                        r.t_test.p_value,
                        r.wilcoxon.p_value,
                        r.wilcoxon.method,
                        d
                    );
                }
                None => {
                    let _ = writeln!(s, "identical per-user values; p = 1, d undefined");
                }
            }
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub model: String,
    pub seed: u64,
    pub users: usize,
    pub hit_rate: f64,
    pub ndcg: f64,
    pub recall: Vec<(usize, f64)>,
    pub unique_top1: usize,
}

pub fn csv_rows(results: &EvalResults) -> Vec<CsvRow> {
    let mut rows = Vec::new();
    for run in &results.runs {
        for (r, sp) in run.reports.iter().zip(&results.splits) {
            rows.push(CsvRow {
                model: run.model.to_string(),
                seed: sp.seed,
                users: r.users,
                hit_rate: r.hit_rate,
                ndcg: r.ndcg,
                recall: r.recall_ks.iter().copied().zip(r.recall.iter().copied()).collect(),
                unique_top1: r.unique_top1,
            });
        }
    }
    rows
}

/// One row per model and seed; floats in shortest round-trip form.
pub fn write_results_csv(rows: &[CsvRow], path: &Path) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    let ks: Vec<usize> = rows
        .first()
        .map(|r| r.recall.iter().map(|x| x.0).collect())
        .unwrap_or_default();
    let mut header = vec![
        "model".to_string(),
        "seed".into(),
        "users".into(),
        "hr".into(),
        "ndcg".into(),
    ];
    header.extend(ks.iter().map(|k| format!("recall@{k}")));
    header.push("unique_top1".into());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.model.clone(),
            r.seed.to_string(),
            r.users.to_string(),
            r.hit_rate.to_string(),
            r.ndcg.to_string(),
        ];
        rec.extend(r.recall.iter().map(|(_, v)| v.to_string()));
        rec.push(r.unique_top1.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv(path: &Path) -> Result<Vec<CsvRow>, EvalError> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let ks: Vec<usize> = header
        .iter()
        .filter_map(|h| h.strip_prefix("recall@").and_then(|k| k.parse().ok()))
        .collect();
    let bad = |m: String| EvalError::InvalidArgument(format!("results.csv: {m}"));
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 6 + ks.len() {
            return Err(bad(format!("expected {} fields, got {}", 6 + ks.len(), rec.len())));
        }
        let f = |i: usize| rec[i].parse::<f64>().map_err(|e| bad(e.to_string()));
        let u = |i: usize| rec[i].parse::<u64>().map_err(|e| bad(e.to_string()));
        out.push(CsvRow {
            model: rec[0].to_string(),
            seed: u(1)?,
            users: u(2)? as usize,
            hit_rate: f(3)?,
            ndcg: f(4)?,
            recall: ks
                .iter()
                .enumerate()
                .map(|(i, k)| f(5 + i).map(|v| (*k, v)))
                .collect::<Result<_, _>>()?,
            unique_top1: u(5 + ks.len())? as usize,
        });
    }
    Ok(out)
}

/// Writes `results_table.txt` and `results.csv` into `dir`.
pub fn emit_report(results: &EvalResults, dir: &Path) -> Result<(PathBuf, PathBuf), EvalError> {
    if results.splits.is_empty() {
        return Err(EvalError::InvalidArgument("no seed reports to emit".into()));
    }
    std::fs::create_dir_all(dir)?;
    let table = dir.join(RESULTS_TABLE);
    std::fs::write(&table, render_table(results))?;
    let csv = dir.join(RESULTS_CSV);
    write_results_csv(&csv_rows(results), &csv)?;
    Ok((table, csv))
}
