//! Rank-based tests for within-subjects designs: Friedman omnibus,
//! Kendall's W, Wilcoxon signed-rank (normal approximation) and the
//! `r = |z| / sqrt(n)` effect size.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {min} complete rows, got {got}")]
    TooFewRows { got: usize, min: usize },
    #[error("need at least 2 columns, got {0}")]
    TooFewColumns(usize),
    #[error("row {row} has {got} cells, expected {expected}")]
    RaggedRow { row: usize, got: usize, expected: usize },
    #[error("samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("only {0} non-zero differences; use an exact test")]
    AdviseExact(usize),
    #[error("all paired differences are zero")]
    NoVariation,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("sample size must be at least 1")]
    InvalidN,
}

/// Direction of the alternative hypothesis for paired tests on `a - b`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// `a` tends to be smaller than `b`; p = Phi(z).
    #[default]
    Less,
    /// `a` tends to be larger than `b`; p = 1 - Phi(z).
    Greater,
    TwoSided,
}

/// Standard normal CDF, `Phi(z) = erfc(-z / sqrt 2) / 2`.
///
/// `erfc` is the fdlibm rational approximation (via `libm`), accurate to
/// about 1 ulp, so the tail probabilities stay well inside 1e-7 absolute.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// One-sided (lower tail) p-value for a standard normal statistic.
pub fn p_from_z(z: f64) -> f64 {
    normal_cdf(z)
}

pub fn p_value(z: f64, alternative: Alternative) -> f64 {
    match alternative {
        Alternative::Less => normal_cdf(z),
        Alternative::Greater => normal_cdf(-z),
        Alternative::TwoSided => (2.0 * normal_cdf(-z.abs())).min(1.0),
    }
}

pub fn effect_size_r(z: f64, n: usize) -> Result<f64, StatsError> {
    if n == 0 {
        return Err(StatsError::InvalidN);
    }
    Ok(z.abs() / (n as f64).sqrt())
}

/// Upper tail of the chi-square distribution with integer `df >= 1`.
///
/// Uses the closed forms of the regularized upper incomplete gamma
/// function at integer and half-integer shape.
pub fn chi_square_sf(x: f64, df: usize) -> f64 {
    assert!(df >= 1, "chi-square needs df >= 1");
    if x <= 0.0 {
        return 1.0;
    }
    let half = x / 2.0;
    if df.is_multiple_of(2) {
        // Q(m, h) = e^{-h} * sum_{i<m} h^i / i!
        let mut term = 1.0;
        let mut sum = 1.0;
        for i in 1..df / 2 {
            term *= half / i as f64;
            sum += term;
        }
        ((-half).exp() * sum).min(1.0)
    } else {
        // Q(m + 1/2, h) = erfc(sqrt h) + e^{-h} / Gamma(1/2) * sum_{i=1..m} h^{i-1/2} / ((1/2)(3/2)...(i-1/2))
        let mut sum = 0.0;
        let mut term = half.sqrt() / 0.5; // h^{1/2} / (1/2)
        for i in 1..=df / 2 {
            if i > 1 {
                term *= half / (i as f64 - 0.5);
            }
            sum += term;
        }
        (libm::erfc(half.sqrt()) + (-half).exp() * sum / PI.sqrt()).min(1.0)
    }
}

/// Mid-ranks (1-based) of `values` plus the sizes of tie groups larger
/// than one.
pub fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end share ranks start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        if end - start > 1 {
            ties.push(end - start);
        }
        start = end;
    }
    (ranks, ties)
}

fn tie_sum(groups: &[usize]) -> f64 {
    groups.iter().map(|&t| (t * t * t - t) as f64).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub chi2: f64,
    pub df: usize,
    pub p: f64,
    pub n: usize,
    pub k: usize,
}

fn check_table(rows: &[Vec<f64>]) -> Result<usize, StatsError> {
    if rows.len() < 2 {
        return Err(StatsError::TooFewRows { got: rows.len(), min: 2 });
    }
    let k = rows[0].len();
    if k < 2 {
        return Err(StatsError::TooFewColumns(k));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != k {
            return Err(StatsError::RaggedRow {
                row: i,
                got: row.len(),
                expected: k,
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
    }
    Ok(k)
}

/// Friedman test on complete rows (subjects) by columns (conditions),
/// with mid-ranks within each row and the tie correction applied.
/// A table whose rows are all constant yields `chi2 = 0, p = 1`.
pub fn friedman(rows: &[Vec<f64>]) -> Result<FriedmanResult, StatsError> {
    let k = check_table(rows)?;
    let n = rows.len();
    let mut rank_sums = vec![0.0; k];
    let mut ties = 0.0;
    for row in rows {
        let (ranks, groups) = midranks(row);
        for (sum, r) in rank_sums.iter_mut().zip(&ranks) {
            *sum += r;
        }
        ties += tie_sum(&groups);
    }
    let (nf, kf) = (n as f64, k as f64);
    let correction = 1.0 - ties / (nf * kf * (kf * kf - 1.0));
    let df = k - 1;
    if correction <= 0.0 {
        return Ok(FriedmanResult { chi2: 0.0, df, p: 1.0, n, k });
    }
    let ss: f64 = rank_sums.iter().map(|r| r * r).sum();
    let raw = 12.0 / (nf * kf * (kf + 1.0)) * ss - 3.0 * nf * (kf + 1.0);
    let chi2 = (raw / correction).max(0.0);
    Ok(FriedmanResult {
        chi2,
        df,
        p: chi_square_sf(chi2, df),
        n,
        k,
    })
}

/// Kendall's coefficient of concordance from the tie-corrected Friedman
/// statistic.
pub fn kendalls_w(rows: &[Vec<f64>]) -> Result<f64, StatsError> {
    let f = friedman(rows)?;
    Ok((f.chi2 / (f.n as f64 * (f.k as f64 - 1.0))).clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    pub z: f64,
    pub p: f64,
    /// Pairs left after dropping zero differences.
    pub n_effective: usize,
    pub w_plus: f64,
}

pub const WILCOXON_MIN_PAIRS: usize = 5;

/// Wilcoxon signed-rank test on `a - b`, normal approximation with tie
/// correction and no continuity correction.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64], alternative: Alternative) -> Result<WilcoxonResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let m = diffs.len();
    if m == 0 {
        return Err(StatsError::NoVariation);
    }
    if m < WILCOXON_MIN_PAIRS {
        return Err(StatsError::AdviseExact(m));
    }
    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, groups) = midranks(&magnitudes);
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let mf = m as f64;
    let mean = mf * (mf + 1.0) / 4.0;
    let var = mf * (mf + 1.0) * (2.0 * mf + 1.0) / 24.0 - tie_sum(&groups) / 48.0;
    let z = (w_plus - mean) / var.sqrt();
    Ok(WilcoxonResult {
        z,
        p: p_value(z, alternative),
        n_effective: m,
        w_plus,
    })
}
