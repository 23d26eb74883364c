//! Two-group partition tests: exact enumeration of every equal-size split when
//! that is small enough, otherwise Monte Carlo over seeded streams.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rng::stream_rng;
use crate::error::{Error, Result};

/// Relative slack when comparing a permuted statistic to the observed one, so
/// that partitions whose statistic equals the observed value up to summation
/// rounding are not counted as more extreme.
pub const TIE_EPSILON: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermutationConfig {
    /// Enumerate exactly when the number of partitions is at most this.
    pub exact_limit: u64,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        PermutationConfig {
            exact_limit: 20_000,
            resamples: 10_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PermutationOutcome {
    pub observed: f64,
    /// Fraction of partitions whose statistic exceeds the observed one.
    pub p_value: f64,
    pub exact: bool,
    pub evaluated: u64,
    pub exceeding: u64,
}

pub fn binomial(n: usize, k: usize) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// One-sided partition test. `statistic` receives the sorted indices of the
/// items assigned to the first group; `observed` is the first group of the
/// actual split.
pub fn partition_test<F>(
    n: usize,
    observed: &[usize],
    statistic: F,
    config: &PermutationConfig,
) -> Result<PermutationOutcome>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    let k = observed.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!(
            "partition of {n} items needs a first group of size 1..{n}, got {k}"
        )));
    }
    let mut obs = observed.to_vec();
    obs.sort_unstable();
    let observed_stat = statistic(&obs);
    let threshold = observed_stat + TIE_EPSILON * (1.0 + observed_stat.abs());

    let total = binomial(n, k);
    if let Some(total) = total.filter(|&t| t <= config.exact_limit) {
        let mut idx: Vec<usize> = (0..k).collect();
        let mut exceeding = 0u64;
        loop {
            if statistic(&idx) > threshold {
                exceeding += 1;
            }
            if !next_combination(&mut idx, n) {
                break;
            }
        }
        return Ok(PermutationOutcome {
            observed: observed_stat,
            p_value: exceeding as f64 / total as f64,
            exact: true,
            evaluated: total,
            exceeding,
        });
    }

    if config.resamples == 0 {
        return Err(Error::InvalidArgument("Monte Carlo permutation needs resamples >= 1".into()));
    }
    let exceeding: u64 = (0..config.resamples as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(config.seed, r);
            let mut pool: Vec<usize> = (0..n).collect();
            for i in 0..k {
                let j = rng.random_range(i..n);
                pool.swap(i, j);
            }
            let mut pick = pool[..k].to_vec();
            pick.sort_unstable();
            u64::from(statistic(&pick) > threshold)
        })
        .sum();
    Ok(PermutationOutcome {
        observed: observed_stat,
        p_value: exceeding as f64 / config.resamples as f64,
        exact: false,
        evaluated: config.resamples as u64,
        exceeding,
    })
}

/// Advance to the next k-combination of 0..n in lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
