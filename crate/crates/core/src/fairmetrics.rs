//! Association and retrieval metrics: single-category WEAT, markedness, mean
//! cosine similarity, Skew@k, MaxSkew@k and NDKL.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datamodel::{Attribute, DatasetManifest, Dimension};
use crate::error::{Error, Result};
use crate::simcore::{cosine, dim_similarity, PromptSpace, SimilarityTable};
use crate::stats::permutation::{partition_test, PermutationConfig};
use crate::stats::{floor_p, mean, variance};

pub const DEFAULT_K: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeatConfig {
    /// Monte Carlo resamples when exact enumeration is too large.
    pub permutations: usize,
    pub exact_limit: u64,
    pub rng_seed: u64,
    /// Delta degrees of freedom of the pooled std in the effect size.
    pub std_ddof: usize,
}

impl Default for WeatConfig {
    fn default() -> Self {
        WeatConfig {
            permutations: 10_000,
            exact_limit: 20_000,
            rng_seed: 0,
            std_ddof: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeatResult {
    pub statistic: f64,
    pub effect_size: f64,
    pub p_value: f64,
    pub p_below_floor: bool,
    pub exact: bool,
    pub partitions: u64,
    pub n_a: usize,
    pub n_b: usize,
    pub attributes: usize,
}

/// SC-WEAT from a precomputed similarity matrix: `sims[d][j]` is the cosine of
/// attribute item `d` with target `j`, where targets `0..n_a` form group A and
/// the rest group B.
pub fn scweat_from_similarities(sims: &[Vec<f64>], n_a: usize, config: &WeatConfig) -> Result<WeatResult> {
    if sims.is_empty() {
        return Err(Error::EmptySample("scweat attribute set"));
    }
    let n = sims[0].len();
    if sims.iter().any(|row| row.len() != n) {
        return Err(Error::InvalidArgument("scweat similarity rows differ in length".into()));
    }
    let n_b = n.saturating_sub(n_a);
    if n_a != n_b {
        return Err(Error::UnequalGroups(n_a, n_b));
    }
    if n_a < 2 {
        return Err(Error::InsufficientData("scweat needs |A| = |B| >= 2".into()));
    }
    if n <= config.std_ddof {
        return Err(Error::InsufficientData("scweat std needs more targets than ddof".into()));
    }

    let mut s_sum = 0.0;
    let mut es_sum = 0.0;
    for (d, row) in sims.iter().enumerate() {
        let s_d = mean(&row[..n_a]) - mean(&row[n_a..]);
        let sd = variance(row, config.std_ddof).sqrt();
        if sd.is_nan() || sd <= 0.0 {
            return Err(Error::DegenerateSpread(d));
        }
        s_sum += s_d;
        es_sum += s_d / sd;
    }
    let m = sims.len() as f64;

    // The statistic is linear in the per-target means over attribute items.
    let v: Vec<f64> = (0..n).map(|j| sims.iter().map(|row| row[j]).sum::<f64>() / m).collect();
    let total: f64 = v.iter().sum();
    let k = n_a as f64;
    let stat = |a: &[usize]| {
        let sa: f64 = a.iter().map(|&j| v[j]).sum();
        sa / k - (total - sa) / k
    };
    let observed: Vec<usize> = (0..n_a).collect();
    let perm = partition_test(
        n,
        &observed,
        stat,
        &PermutationConfig {
            exact_limit: config.exact_limit,
            resamples: config.permutations,
            seed: config.rng_seed,
        },
    )?;
    let (p_value, p_below_floor) = floor_p(perm.p_value);
    Ok(WeatResult {
        statistic: s_sum / m,
        effect_size: es_sum / m,
        p_value,
        p_below_floor,
        exact: perm.exact,
        partitions: perm.evaluated,
        n_a,
        n_b,
        attributes: sims.len(),
    })
}

/// SC-WEAT with attribute vectors `d` and target groups `a`, `b`, all unit norm.
pub fn scweat(d: &[&[f64]], a: &[&[f64]], b: &[&[f64]], config: &WeatConfig) -> Result<WeatResult> {
    if a.len() != b.len() {
        return Err(Error::UnequalGroups(a.len(), b.len()));
    }
    let sims = d
        .iter()
        .map(|t| a.iter().chain(b).map(|z| cosine(t, z)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    scweat_from_similarities(&sims, a.len(), config)
}

/// SC-WEAT where each adjective of `dims` is an attribute item, its cosine to
/// an image taken as the template mean.
pub fn scweat_dimensions(
    dims: &[Dimension],
    a: &[&[f64]],
    b: &[&[f64]],
    space: &PromptSpace,
    config: &WeatConfig,
) -> Result<WeatResult> {
    if a.len() != b.len() {
        return Err(Error::UnequalGroups(a.len(), b.len()));
    }
    let mut sims = Vec::new();
    for dim in dims {
        for adj in &dim.adjectives {
            sims.push(
                a.iter()
                    .chain(b)
                    .map(|z| space.word_similarity(z, adj))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
    }
    scweat_from_similarities(&sims, a.len(), config)
}

/// Percentage of images whose cosine to the neutral prompt strictly exceeds
/// the cosine to the marked prompt. Inputs are per-image (template-averaged)
/// cosines.
pub fn markedness_from_cosines(neutral: &[f64], marked: &[f64]) -> Result<f64> {
    if neutral.len() != marked.len() {
        return Err(Error::InvalidArgument("markedness inputs differ in length".into()));
    }
    if neutral.is_empty() {
        return Err(Error::EmptySample("markedness images"));
    }
    let hits = neutral.iter().zip(marked).filter(|(n, m)| n > m).count();
    Ok(hits as f64 / neutral.len() as f64 * 100.0)
}

/// Markedness of `word` (e.g. "white") over the given unit-norm images.
pub fn markedness(images: &[&[f64]], word: &str, space: &PromptSpace) -> Result<f64> {
    let neutral = images
        .iter()
        .map(|i| space.neutral_similarity(i))
        .collect::<Result<Vec<_>>>()?;
    let marked = images
        .iter()
        .map(|i| space.word_similarity(i, word))
        .collect::<Result<Vec<_>>>()?;
    markedness_from_cosines(&neutral, &marked)
}

/// Mean cosine (x100) between images and every adjective prompt of `dims`,
/// pooled over all (image, adjective, template) triples.
pub fn mean_cossim(images: &[&[f64]], dims: &[Dimension], space: &PromptSpace) -> Result<f64> {
    if dims.is_empty() {
        return Err(Error::EmptySample("mean_cossim dimensions"));
    }
    let mut sum = 0.0;
    let mut weight = 0.0;
    for dim in dims {
        let w = dim.adjectives.len() as f64;
        sum += dim_similarity(images, dim, space)? * w;
        weight += w;
    }
    Ok(sum / weight * 100.0)
}

/// Items ordered by descending score, ties by ascending id.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankedList {
    pub query: String,
    pub k: usize,
    pub ids: Vec<String>,
    pub scores: Vec<f64>,
    /// Source row of each ranked item.
    pub rows: Vec<usize>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Attribute labels in rank order.
    pub fn labels(&self, manifest: &DatasetManifest, attribute: Attribute) -> Vec<String> {
        self.rows
            .iter()
            .map(|&r| manifest.records[r].value(attribute).to_string())
            .collect()
    }
}

pub fn build_ranked_list(ids: &[String], scores: &[f64], query: &str, k: usize) -> Result<RankedList> {
    if ids.len() != scores.len() {
        return Err(Error::InvalidArgument("ranked list ids and scores differ in length".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("ranked list scores must be finite".into()));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| ids[a].cmp(&ids[b])));
    Ok(RankedList {
        query: query.to_string(),
        k,
        ids: order.iter().map(|&i| ids[i].clone()).collect(),
        scores: order.iter().map(|&i| scores[i]).collect(),
        rows: order,
    })
}

/// Rank table images by raw cosine to one dimension.
pub fn rank_by_dimension(table: &SimilarityTable, dimension: &str, k: usize) -> Result<RankedList> {
    let d = table.dimension_index(dimension)?;
    build_ranked_list(&table.ids, &table.raw_column(d), dimension, k)
}

fn check_k(len: usize, k: usize) -> Result<()> {
    if k == 0 || k > len {
        return Err(Error::InvalidArgument(format!("k must be in 1..={len}, got {k}")));
    }
    Ok(())
}

/// ln(actual / desired) share of `value` among the first `k` labels.
/// Returns negative infinity when the value is absent from the top k.
pub fn skew_at_k(labels: &[String], value: &str, desired: f64, k: usize) -> Result<f64> {
    check_k(labels.len(), k)?;
    if !(desired > 0.0 && desired <= 1.0) {
        return Err(Error::InvalidDistribution(format!("desired proportion {desired} not in (0, 1]")));
    }
    let count = labels[..k].iter().filter(|l| *l == value).count();
    if count == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok((count as f64 / k as f64 / desired).ln())
}

pub fn max_skew_at_k(labels: &[String], desired: &BTreeMap<String, f64>, k: usize) -> Result<f64> {
    validate_distribution(desired)?;
    let mut best = f64::NEG_INFINITY;
    for (value, &p) in desired {
        best = best.max(skew_at_k(labels, value, p, k)?);
    }
    Ok(best)
}

pub fn uniform_distribution<S: AsRef<str>>(values: &[S]) -> BTreeMap<String, f64> {
    let p = 1.0 / values.len() as f64;
    values.iter().map(|v| (v.as_ref().to_string(), p)).collect()
}

fn validate_distribution(desired: &BTreeMap<String, f64>) -> Result<()> {
    if desired.is_empty() {
        return Err(Error::InvalidDistribution("desired distribution is empty".into()));
    }
    if let Some((v, p)) = desired.iter().find(|(_, p)| !(p.is_finite() && **p > 0.0)) {
        return Err(Error::InvalidDistribution(format!("desired mass of {v:?} must be positive, got {p}")));
    }
    let total: f64 = desired.values().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(format!("desired masses sum to {total}")));
    }
    Ok(())
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum::<f64>()
        .max(0.0)
}

/// NDKL of a ranked list of hard labels against `desired`.
pub fn ndkl(labels: &[String], desired: &BTreeMap<String, f64>) -> Result<f64> {
    validate_distribution(desired)?;
    let index: BTreeMap<&str, usize> = desired.keys().enumerate().map(|(i, k)| (k.as_str(), i)).collect();
    let memberships = labels
        .iter()
        .map(|l| {
            let slot = index.get(l.as_str()).ok_or_else(|| {
                Error::InvalidDistribution(format!("label {l:?} has no desired mass"))
            })?;
            let mut m = vec![0.0; index.len()];
            m[*slot] = 1.0;
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    ndkl_soft(&memberships, &desired.values().copied().collect::<Vec<_>>())
}

/// NDKL where each ranked item carries a membership distribution over the
/// attribute values (one-hot for hard labels). The prefix distribution is the
/// mean membership of the prefix.
pub fn ndkl_soft(memberships: &[Vec<f64>], desired: &[f64]) -> Result<f64> {
    if memberships.is_empty() {
        return Err(Error::EmptySample("ndkl ranked list"));
    }
    if desired.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(Error::InvalidDistribution("desired masses must be positive".into()));
    }
    let mut acc = vec![0.0; desired.len()];
    let mut prefix = vec![0.0; desired.len()];
    let (mut num, mut z) = (0.0, 0.0);
    for (i, m) in memberships.iter().enumerate() {
        if m.len() != desired.len() {
            return Err(Error::InvalidDistribution("membership length differs from desired".into()));
        }
        for (a, x) in acc.iter_mut().zip(m) {
            *a += x;
        }
        let n = (i + 1) as f64;
        for (p, a) in prefix.iter_mut().zip(&acc) {
            *p = a / n;
        }
        let w = 1.0 / (n + 1.0).log2();
        num += w * kl(&prefix, desired);
        z += w;
    }
    Ok(num / z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(s: &[&str]) -> Vec<String> {
        s.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn scweat_hand_example() {
        let sims = vec![vec![0.6, 0.6, 0.4, 0.4]];
        let r = scweat_from_similarities(&sims, 2, &WeatConfig::default()).unwrap();
        assert!((r.statistic - 0.2).abs() < 1e-12);
        assert!((r.effect_size - 0.2 / (0.04f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((r.effect_size - 1.732).abs() < 1e-3);
        assert!(r.exact);
        assert_eq!(r.partitions, 6);
    }

    #[test]
    fn scweat_symmetric_groups_give_zero() {
        let sims = vec![vec![0.1, 0.3, 0.3, 0.1], vec![0.5, 0.2, 0.2, 0.5]];
        let r = scweat_from_similarities(&sims, 2, &WeatConfig::default()).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.effect_size, 0.0);
    }

    #[test]
    fn scweat_swap_negates() {
        let sims = vec![vec![0.1, 0.35, 0.2, 0.3, 0.05, 0.4]];
        let swapped = vec![vec![0.3, 0.05, 0.4, 0.1, 0.35, 0.2]];
        let a = scweat_from_similarities(&sims, 3, &WeatConfig::default()).unwrap();
        let b = scweat_from_similarities(&swapped, 3, &WeatConfig::default()).unwrap();
        assert!((a.statistic + b.statistic).abs() < 1e-15);
        assert!((a.effect_size + b.effect_size).abs() < 1e-15);
    }

    #[test]
    fn scweat_errors() {
        let flat = vec![vec![0.3; 4]];
        assert!(matches!(
            scweat_from_similarities(&flat, 2, &WeatConfig::default()),
            Err(Error::DegenerateSpread(0))
        ));
        let odd = vec![vec![0.1, 0.2, 0.3, 0.4, 0.5]];
        assert!(matches!(
            scweat_from_similarities(&odd, 2, &WeatConfig::default()),
            Err(Error::UnequalGroups(2, 3))
        ));
    }

    #[test]
    fn markedness_counts() {
        assert_eq!(markedness_from_cosines(&[0.3, 0.3], &[0.1, 0.2]).unwrap(), 100.0);
        let m = markedness_from_cosines(&[0.3, 0.3, 0.3, 0.3], &[0.1, 0.2, 0.25, 0.3]).unwrap();
        assert_eq!(m, 75.0);
    }

    #[test]
    fn ranked_list_order_and_ties() {
        let ids = labels(&["c", "a", "b"]);
        let r = build_ranked_list(&ids, &[0.1, 0.3, 0.2], "q", 3).unwrap();
        assert_eq!(r.ids, labels(&["a", "b", "c"]));
        let r = build_ranked_list(&ids, &[0.2, 0.2, 0.2], "q", 3).unwrap();
        assert_eq!(r.ids, labels(&["a", "b", "c"]));
        assert_eq!(r.rows, vec![1, 2, 0]);
    }

    #[test]
    fn skew_values() {
        let l = labels(&["A", "B", "A", "B"]);
        assert_eq!(skew_at_k(&l, "A", 0.5, 4).unwrap(), 0.0);
        let l = labels(&["A", "A", "A", "B"]);
        assert!((skew_at_k(&l, "A", 0.5, 4).unwrap() - 1.5f64.ln()).abs() < 1e-15);
        assert_eq!(skew_at_k(&l, "C", 0.5, 4).unwrap(), f64::NEG_INFINITY);
        assert!(skew_at_k(&l, "A", 0.5, 5).is_err());
        let d = uniform_distribution(&["A", "B"]);
        assert!((max_skew_at_k(&l, &d, 4).unwrap() - 1.5f64.ln()).abs() < 1e-15);
        let balanced = labels(&["A", "B"]);
        assert_eq!(max_skew_at_k(&balanced, &d, 2).unwrap(), 0.0);
    }

    #[test]
    fn ndkl_worked_example() {
        let d = uniform_distribution(&["A", "B"]);
        let v = ndkl(&labels(&["A", "B"]), &d).unwrap();
        let expect = 2f64.ln() / (1.0 + 1.0 / 3f64.log2());
        assert!((v - expect).abs() < 1e-15);
        assert!((v - 0.425).abs() < 1e-3);
    }

    #[test]
    fn ndkl_errors_and_ideal() {
        let d = uniform_distribution(&["A", "B"]);
        assert!(ndkl(&labels(&["A", "C"]), &d).is_err());
        let bad = BTreeMap::from([("A".to_string(), 0.7), ("B".to_string(), 0.7)]);
        assert!(ndkl(&labels(&["A"]), &bad).is_err());
        let point = BTreeMap::from([("A".to_string(), 1.0)]);
        assert_eq!(ndkl(&labels(&["A", "A", "A"]), &point).unwrap(), 0.0);
        let q = [0.2, 0.5, 0.3];
        let soft = vec![q.to_vec(); 7];
        assert!(ndkl_soft(&soft, &q).unwrap() < 1e-15);
    }
}
