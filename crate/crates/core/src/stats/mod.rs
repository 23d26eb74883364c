//! Statistical primitives: rank-sum and t-tests, Pearson correlation,
//! least-squares polynomial fits, covariance ellipses, Gaussian KDE, PCA and
//! a seeded permutation engine.

mod correlation;
mod ellipse;
mod kde;
mod pca;
pub mod permutation;
mod polyfit;
mod ranksum;
pub mod rng;
mod ttest;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

pub use correlation::{pearson, Correlation};
pub use ellipse::{cov_ellipse, CovEllipse};
pub use kde::{kde, kde_auto_grid, scott_bandwidth, KdeCurve};
pub use pca::{pca3, Pca3};
pub use polyfit::{polyfit, polyfit2, PolyFit, PolyFit2};
pub use ranksum::{wilcoxon_ranksum, EXACT_RANKSUM_MAX_N};
pub use ttest::{t_test_independent_one_sided, t_test_paired};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    #[default]
    TwoSided,
    /// The first sample tends to be smaller.
    Less,
    /// The first sample tends to be larger.
    Greater,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    WilcoxonRanksum,
    TPaired,
    TIndependentOneSided,
    Permutation,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    /// Never 0: tail probabilities below the smallest positive f64 are
    /// floored and flagged in `p_below_floor`.
    pub p_value: f64,
    pub p_below_floor: bool,
    pub n1: usize,
    pub n2: usize,
    pub method: TestMethod,
    pub alternative: Alternative,
    /// Exact null distribution (rank-sum enumeration or full permutation).
    pub exact: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub df: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
}

impl TestResult {
    /// `p` as printed in reports: `<2.2e-308` when floored.
    pub fn p_display(&self) -> String {
        format_p(self.p_value, self.p_below_floor)
    }
}

pub fn format_p(p: f64, floored: bool) -> String {
    if floored {
        format!("<{:e}", f64::MIN_POSITIVE)
    } else {
        format!("{p}")
    }
}

/// Clamp into [0, 1] and floor at the smallest positive normal f64.
pub(crate) fn floor_p(p: f64) -> (f64, bool) {
    let p = if p.is_nan() { 1.0 } else { p.clamp(0.0, 1.0) };
    if p < f64::MIN_POSITIVE {
        (f64::MIN_POSITIVE, true)
    } else {
        (p, false)
    }
}

/// Upper tail of the standard normal.
pub(crate) fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// P(T > t) for Student's t with `df` degrees of freedom.
pub(crate) fn t_sf(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return if t > 0.0 { 0.0 } else { 1.0 };
    }
    let tail = 0.5 * beta_reg(df / 2.0, 0.5, df / (df + t * t));
    if t >= 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

pub(crate) fn tail_p(t: f64, df: f64, alternative: Alternative) -> f64 {
    match alternative {
        Alternative::Greater => t_sf(t, df),
        Alternative::Less => t_sf(-t, df),
        Alternative::TwoSided => (2.0 * t_sf(t.abs(), df)).min(1.0),
    }
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Variance with `ddof` delta degrees of freedom (1 = sample variance).
pub fn variance(x: &[f64], ddof: usize) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - ddof) as f64
}

/// Linear-interpolation quantile of sorted data (the common "type 7" rule).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Box-plot summary with Tukey whiskers (furthest data within 1.5 IQR).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::EmptySample("summary"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let lo_fence = q1 - 1.5 * iqr;
    let hi_fence = q3 + 1.5 * iqr;
    Ok(Summary {
        n: sorted.len(),
        mean: mean(&sorted),
        median: quantile_sorted(&sorted, 0.5),
        q1,
        q3,
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        whisker_low: *sorted.iter().find(|&&v| v >= lo_fence).unwrap_or(&sorted[0]),
        whisker_high: *sorted.iter().rev().find(|&&v| v <= hi_fence).unwrap_or(&sorted[0]),
    })
}
