//! Paired significance tests: Student's t, Wilcoxon signed-rank and
//! Cohen's d on per-user metric differences.
//!
//! The Wilcoxon method selection follows the common reference behaviour:
//! exact null distribution for n ≤ 50 without ties or zero differences,
//! full sign-flip enumeration when ties or zeros occur and n ≤ 13, and the
//! tie-corrected normal approximation (no continuity correction) otherwise.
//! Zero differences are dropped before ranking.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

pub const ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 pairs, got {0}")]
    TooFewSamples(usize),
    #[error("all paired differences are zero; effect size undefined")]
    DegenerateSample,
    #[error("sample contains a non-finite value")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    Exact,
    Permutation,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wilcoxon {
    /// min(W+, W-).
    pub statistic: f64,
    pub p_value: f64,
    pub method: WilcoxonMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub n: usize,
    pub mean_diff: f64,
    pub t_test: TTest,
    pub wilcoxon: Wilcoxon,
    /// `None` when the differences have zero spread.
    pub cohens_d: Option<f64>,
    pub alpha: f64,
}

impl Significance {
    pub fn significant(&self) -> bool {
        self.t_test.p_value < self.alpha
    }
}

fn diffs(a: &[f64], b: &[f64]) -> Result<Vec<f64>, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(StatsError::TooFewSamples(a.len()));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

fn mean_sd(d: &[f64]) -> (f64, f64) {
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean difference over its sample standard deviation.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<Option<f64>, StatsError> {
    let d = diffs(a, b)?;
    if d.iter().all(|x| *x == 0.0) {
        return Err(StatsError::DegenerateSample);
    }
    let (mean, sd) = mean_sd(&d);
    Ok((sd > 0.0).then(|| mean / sd))
}

/// Two-sided paired t-test.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest, StatsError> {
    let d = diffs(a, b)?;
    if d.iter().all(|x| *x == 0.0) {
        return Err(StatsError::DegenerateSample);
    }
    let n = d.len() as f64;
    let (mean, sd) = mean_sd(&d);
    let df = n - 1.0;
    if sd == 0.0 {
        return Ok(TTest {
            statistic: mean.signum() * f64::INFINITY,
            df,
            p_value: 0.0,
        });
    }
    let t = mean / (sd / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTest {
        statistic: t,
        df,
        p_value: p,
    })
}

/// Average ranks of `values` (1-based) and the sizes of tie groups.
fn average_ranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        ties.push(end - start);
        start = end;
    }
    (ranks, ties)
}

/// Probability mass of W+ for n untied, nonzero differences.
fn exact_null(n: usize) -> Vec<f64> {
    let max = n * (n + 1) / 2;
    let mut counts = vec![0f64; max + 1];
    counts[0] = 1.0;
    for r in 1..=n {
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    let total = 2f64.powi(n as i32);
    counts.into_iter().map(|c| c / total).collect()
}

/// Two-sided Wilcoxon signed-rank test on paired samples.
pub fn wilcoxon(a: &[f64], b: &[f64]) -> Result<Wilcoxon, StatsError> {
    let d = diffs(a, b)?;
    let n_total = d.len();
    let zeros = d.iter().filter(|x| **x == 0.0).count();
    let nz: Vec<f64> = d.iter().copied().filter(|x| *x != 0.0).collect();
    if nz.is_empty() {
        return Err(StatsError::DegenerateSample);
    }
    let abs: Vec<f64> = nz.iter().map(|x| x.abs()).collect();
    let (ranks, ties) = average_ranks(&abs);
    let r_plus: f64 = nz.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let r_minus: f64 = nz.iter().zip(&ranks).filter(|(x, _)| **x < 0.0).map(|(_, r)| r).sum();
    let has_ties = ties.iter().any(|t| *t > 1);
    let statistic = r_plus.min(r_minus);

    let method = if n_total > 50 {
        WilcoxonMethod::Normal
    } else if !has_ties && zeros == 0 {
        WilcoxonMethod::Exact
    } else if n_total <= 13 {
        WilcoxonMethod::Permutation
    } else {
        WilcoxonMethod::Normal
    };

    let p = match method {
        WilcoxonMethod::Exact => {
            let pmf = exact_null(nz.len());
            let cdf = |k: usize| pmf[..=k.min(pmf.len() - 1)].iter().sum::<f64>();
            let sf = |k: usize| pmf[k.min(pmf.len())..].iter().sum::<f64>();
            let lo = sf(r_plus.floor() as usize);
            let hi = cdf(r_plus.ceil() as usize);
            (2.0 * lo.min(hi)).clamp(0.0, 1.0)
        }
        WilcoxonMethod::Permutation => {
            // Every sign assignment of the nonzero ranks is equally likely.
            let m = nz.len();
            let gamma = (f64::EPSILON * 100.0 * r_plus).abs();
            let (mut le, mut ge) = (0u64, 0u64);
            for mask in 0u64..(1u64 << m) {
                let s: f64 = (0..m).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
                le += (s <= r_plus + gamma) as u64;
                ge += (s >= r_plus - gamma) as u64;
            }
            let total = (1u64 << m) as f64;
            (2.0 * (le as f64 / total).min(ge as f64 / total)).clamp(0.0, 1.0)
        }
        WilcoxonMethod::Normal => {
            let n = nz.len() as f64;
            let mean = n * (n + 1.0) / 4.0;
            let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum();
            let se = ((n * (n + 1.0) * (2.0 * n + 1.0) - tie_term / 2.0) / 24.0).sqrt();
            let z = (r_plus - mean) / se;
            let norm = Normal::new(0.0, 1.0).expect("unit normal");
            (2.0 * norm.cdf(z).min(norm.sf(z))).clamp(0.0, 1.0)
        }
    };
    Ok(Wilcoxon {
        statistic,
        p_value: p,
        method,
    })
}

/// All three statistics for paired samples `a` and `b` (differences `a - b`).
pub fn significance(a: &[f64], b: &[f64]) -> Result<Significance, StatsError> {
    let t_test = paired_t_test(a, b)?;
    let wilcoxon = wilcoxon(a, b)?;
    let d = diffs(a, b)?;
    let (mean_diff, _) = mean_sd(&d);
    Ok(Significance {
        n: d.len(),
        mean_diff,
        t_test,
        wilcoxon,
        cohens_d: cohens_d(a, b)?,
        alpha: ALPHA,
    })
}
