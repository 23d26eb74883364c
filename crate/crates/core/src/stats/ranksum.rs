use super::{floor_p, normal_sf, Alternative, TestMethod, TestResult};
use crate::error::{Error, Result};

/// Exact enumeration is used when the smaller sample has fewer than 8
/// observations and the pooled size does not exceed this bound.
pub const EXACT_RANKSUM_MAX_N: usize = 2000;

/// Wilcoxon rank-sum test. The statistic is the rank sum of `a` with midranks
/// for ties. Small samples use the exact null distribution of the (tied)
/// rank sum; otherwise the tie-corrected normal approximation with a
/// continuity correction.
pub fn wilcoxon_ranksum(a: &[f64], b: &[f64], alternative: Alternative) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample("rank-sum sample"));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(Error::InvalidArgument("NaN in rank-sum sample".into()));
    }
    let (n1, n2) = (a.len(), b.len());
    let n = n1 + n2;
    let ranks = midranks(a.iter().chain(b).copied());
    let w: f64 = ranks[..n1].iter().sum();

    let exact = n1.min(n2) < 8 && n <= EXACT_RANKSUM_MAX_N;
    let (p, z) = if exact {
        (exact_p(&ranks, n1, w, alternative), None)
    } else {
        let (p, z) = normal_p(&ranks, n1, n2, w, alternative);
        (p, Some(z))
    };
    let (p_value, p_below_floor) = floor_p(p);
    Ok(TestResult {
        statistic: w,
        p_value,
        p_below_floor,
        n1,
        n2,
        method: TestMethod::WilcoxonRanksum,
        alternative,
        exact,
        df: None,
        z,
    })
}

/// 1-based midranks in input order.
fn midranks(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let values: Vec<f64> = values.collect();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn normal_p(ranks: &[f64], n1: usize, n2: usize, w: f64, alternative: Alternative) -> (f64, f64) {
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let n = n1f + n2f;
    let u = w - n1f * (n1f + 1.0) / 2.0;
    let mu = n1f * n2f / 2.0;

    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let var = n1f * n2f / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return (1.0, 0.0);
    }
    let sd = var.sqrt();
    match alternative {
        Alternative::TwoSided => {
            let z = ((u - mu).abs() - 0.5).max(0.0) / sd;
            ((2.0 * normal_sf(z)).min(1.0), z * (u - mu).signum())
        }
        Alternative::Greater => {
            let z = (u - mu - 0.5) / sd;
            (normal_sf(z), z)
        }
        Alternative::Less => {
            let z = (u - mu + 0.5) / sd;
            (normal_sf(-z), z)
        }
    }
}

/// Exact null distribution of the rank sum by dynamic programming over doubled
/// midranks (integers even with ties).
fn exact_p(ranks: &[f64], n1: usize, w: f64, alternative: Alternative) -> f64 {
    let n = ranks.len();
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    // Count subsets of the smaller size; map back to the rank sum of `a`.
    let (pick, complement) = if n1 <= n - n1 { (n1, false) } else { (n - n1, true) };
    let max_sum: usize = {
        let mut d = doubled.clone();
        d.sort_unstable_by(|x, y| y.cmp(x));
        d[..pick].iter().sum()
    };
    let width = max_sum + 1;
    let mut ways = vec![0.0f64; (pick + 1) * width];
    ways[0] = 1.0;
    for (seen, &r) in doubled.iter().enumerate() {
        for j in (1..=pick.min(seen + 1)).rev() {
            let (lower, upper) = ways.split_at_mut(j * width);
            let from = &lower[(j - 1) * width..];
            let to = &mut upper[..width];
            for s in (r..width).rev() {
                to[s] += from[s - r];
            }
        }
    }
    let dist = &ways[pick * width..(pick + 1) * width];
    let all: f64 = dist.iter().sum();

    let w2 = (2.0 * w).round() as usize;
    // Distribution of the doubled rank sum of `a`.
    let mass = |pred: &dyn Fn(usize) -> bool| -> f64 {
        dist.iter()
            .enumerate()
            .filter(|(s, c)| **c > 0.0 && pred(if complement { total - s } else { *s }))
            .map(|(_, c)| c)
            .sum::<f64>()
            / all
    };
    let le = mass(&|s| s <= w2);
    let ge = mass(&|s| s >= w2);
    match alternative {
        Alternative::Less => le,
        Alternative::Greater => ge,
        Alternative::TwoSided => (2.0 * le.min(ge)).min(1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force oracle: enumerate every subset of size n1.
    fn enumerate_p(a: &[f64], b: &[f64], alternative: Alternative) -> f64 {
        let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
        let ranks = midranks(pooled.iter().copied());
        let w: f64 = ranks[..a.len()].iter().sum();
        let n = pooled.len();
        let (mut le, mut ge, mut total) = (0u64, 0u64, 0u64);
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != a.len() {
                continue;
            }
            let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            total += 1;
            if s <= w + 1e-9 {
                le += 1;
            }
            if s >= w - 1e-9 {
                ge += 1;
            }
        }
        let (le, ge) = (le as f64 / total as f64, ge as f64 / total as f64);
        match alternative {
            Alternative::Less => le,
            Alternative::Greater => ge,
            Alternative::TwoSided => (2.0 * le.min(ge)).min(1.0),
        }
    }

    #[test]
    fn separated_triples_one_sided() {
        let r = wilcoxon_ranksum(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], Alternative::Less).unwrap();
        assert!(r.exact);
        assert_eq!(r.statistic, 6.0);
        assert!((r.p_value - 0.05).abs() < 1e-15);
    }

    #[test]
    fn identical_samples_two_sided_is_one() {
        let a = [1.0, 2.0, 3.0];
        let r = wilcoxon_ranksum(&a, &a, Alternative::TwoSided).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn exact_matches_enumeration_with_ties() {
        let cases: [(&[f64], &[f64]); 4] = [
            (&[1.0, 2.0, 2.0, 5.0], &[2.0, 3.0, 3.0, 7.0, 8.0]),
            (&[0.5, 0.5, 0.5], &[0.5, 1.0, 1.5, 2.0]),
            (&[9.0, 1.0, 4.0, 4.0, 6.0, 2.0, 2.0], &[3.0, 4.0, 8.0]),
            (&[1.0], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]),
        ];
        for (a, b) in cases {
            for alt in [Alternative::Less, Alternative::Greater, Alternative::TwoSided] {
                let got = wilcoxon_ranksum(a, b, alt).unwrap().p_value;
                let want = enumerate_p(a, b, alt);
                assert!((got - want).abs() < 1e-12, "{a:?} {b:?} {alt:?}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn normal_approximation_for_large_samples() {
        // Values from a fixed permutation: symmetric around the same center.
        let a: Vec<f64> = (0..40).map(|i| ((i * 17) % 40) as f64).collect();
        let b: Vec<f64> = (0..40).map(|i| ((i * 23) % 40) as f64 + 0.5).collect();
        let r = wilcoxon_ranksum(&a, &b, Alternative::TwoSided).unwrap();
        assert!(!r.exact);
        assert!(r.p_value > 0.5);

        let shifted: Vec<f64> = b.iter().map(|x| x + 30.0).collect();
        let r = wilcoxon_ranksum(&a, &shifted, Alternative::Less).unwrap();
        assert!(r.p_value < 1e-6);
    }

    #[test]
    fn matches_scipy_asymptotic_value() {
        // scipy.stats.mannwhitneyu(arange(10), arange(5, 15), method="asymptotic")
        // -> U = 12.5, p = 0.005075392315273923
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = (5..15).map(f64::from).collect();
        let r = wilcoxon_ranksum(&x, &y, Alternative::TwoSided).unwrap();
        assert!(!r.exact);
        assert_eq!(r.statistic - 55.0, 12.5);
        assert!((r.p_value - 0.005075392315273923).abs() < 1e-12);
    }

    #[test]
    fn empty_sample_is_an_error() {
        assert!(matches!(
            wilcoxon_ranksum(&[], &[1.0], Alternative::TwoSided),
            Err(Error::EmptySample(_))
        ));
    }
}
