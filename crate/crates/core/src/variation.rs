//! Attribute-variation analysis: ceteris-paribus pair sampling, the AbsDiff
//! statistic and bootstrap distributions per varied attribute.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{AttrValue, Attribute, DatasetManifest};
use crate::error::{Error, Result};
use crate::simcore::{csv_field, SimilarityTable};
use crate::stats::rng::stream_rng;
use crate::stats::{summarize, wilcoxon_ranksum, Alternative, Summary, TestResult};

pub const DEFAULT_RESAMPLES: usize = 1000;
pub const DEFAULT_ORDINAL_GAP: f64 = 1.1;

/// The eight dimensions shown in the attribute-variation boxes.
pub const DEFAULT_DIMENSIONS: [&str; 8] = ["Warmth", "Competence", "A+", "A-", "Bp", "Bc", "C+", "C-"];

/// Attributes that can be varied.
pub const VARIABLE_ATTRIBUTES: [Attribute; 7] = [
    Attribute::Race,
    Attribute::Gender,
    Attribute::Age,
    Attribute::Smiling,
    Attribute::Lighting,
    Attribute::Pose,
    Attribute::Seed,
];

pub fn default_gaps() -> BTreeMap<Attribute, f64> {
    BTreeMap::from([
        (Attribute::Age, DEFAULT_ORDINAL_GAP),
        (Attribute::Smiling, DEFAULT_ORDINAL_GAP),
    ])
}

fn default_dimensions() -> Vec<String> {
    DEFAULT_DIMENSIONS.iter().map(|s| s.to_string()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariationConfig {
    pub attribute: Attribute,
    #[serde(default = "default_resamples")]
    pub resamples_per_dimension: usize,
    /// Minimum level distance for ordinal attributes; absent means any
    /// difference counts.
    #[serde(default = "default_gaps")]
    pub ordinal_min_gap: BTreeMap<Attribute, f64>,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_dimensions")]
    pub dimensions: Vec<String>,
}

fn default_resamples() -> usize {
    DEFAULT_RESAMPLES
}

impl VariationConfig {
    pub fn new(attribute: Attribute) -> Self {
        VariationConfig {
            attribute,
            resamples_per_dimension: DEFAULT_RESAMPLES,
            ordinal_min_gap: default_gaps(),
            rng_seed: 0,
            dimensions: default_dimensions(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !VARIABLE_ATTRIBUTES.contains(&self.attribute) {
            return Err(Error::InvalidArgument(format!(
                "attribute {} cannot be varied",
                self.attribute
            )));
        }
        if self.resamples_per_dimension == 0 {
            return Err(Error::InvalidArgument("resamples_per_dimension must be >= 1".into()));
        }
        if self.dimensions.is_empty() {
            return Err(Error::InvalidArgument("no dimensions configured".into()));
        }
        for (attr, gap) in &self.ordinal_min_gap {
            if !(gap.is_finite() && *gap >= 0.0) {
                return Err(Error::InvalidArgument(format!("gap for {attr} must be >= 0, got {gap}")));
            }
        }
        Ok(())
    }

    pub fn gap(&self, attribute: Attribute) -> f64 {
        if attribute.is_ordinal() {
            self.ordinal_min_gap.get(&attribute).copied().unwrap_or(0.0)
        } else {
            0.0
        }
    }
}

/// Whether rows `a` and `b` differ in `attribute` (by at least `gap` for
/// ordinal levels) and agree on every other attribute.
pub fn is_valid_pair(manifest: &DatasetManifest, a: usize, b: usize, attribute: Attribute, gap: f64) -> bool {
    let (ra, rb) = (&manifest.records[a], &manifest.records[b]);
    for other in Attribute::ALL {
        if other != attribute && ra.value(other) != rb.value(other) {
            return false;
        }
    }
    let (va, vb) = (ra.value(attribute), rb.value(attribute));
    if va == AttrValue::Missing || vb == AttrValue::Missing || va == vb {
        return false;
    }
    match (attribute.is_ordinal(), va.as_f64(), vb.as_f64()) {
        (true, Some(x), Some(y)) => (x - y).abs() >= gap,
        _ => true,
    }
}

/// All valid unordered pairs for one varied attribute.
#[derive(Clone, Debug)]
pub struct PairIndex {
    attribute: Attribute,
    gap: f64,
    pairs: Vec<(usize, usize)>,
}

impl PairIndex {
    pub fn build(manifest: &DatasetManifest, attribute: Attribute, gap: f64) -> Result<Self> {
        let mut buckets: BTreeMap<Vec<AttrValue>, Vec<usize>> = BTreeMap::new();
        for (row, rec) in manifest.records.iter().enumerate() {
            if rec.value(attribute) == AttrValue::Missing {
                continue;
            }
            let key: Vec<AttrValue> = Attribute::ALL
                .into_iter()
                .filter(|&a| a != attribute)
                .map(|a| rec.value(a))
                .collect();
            buckets.entry(key).or_default().push(row);
        }
        let mut pairs = Vec::new();
        for rows in buckets.values() {
            for (i, &a) in rows.iter().enumerate() {
                for &b in &rows[i + 1..] {
                    if is_valid_pair(manifest, a, b, attribute, gap) {
                        pairs.push((a, b));
                    }
                }
            }
        }
        pairs.sort_unstable();
        if pairs.is_empty() {
            let constraint = if attribute.is_ordinal() {
                format!("others held constant, |difference| >= {gap}")
            } else {
                "others held constant".to_string()
            };
            return Err(Error::NoValidPair {
                attribute: attribute.to_string(),
                constraint,
            });
        }
        Ok(PairIndex { attribute, gap, pairs })
    }

    pub fn attribute(&self) -> Attribute {
        self.attribute
    }

    pub fn gap(&self) -> f64 {
        self.gap
    }

    /// Sorted `(row, row)` pairs with the first row smaller.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Uniform draw over valid unordered pairs.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        self.pairs[rng.random_range(0..self.pairs.len())]
    }
}

pub fn sample_pair<R: Rng + ?Sized>(
    manifest: &DatasetManifest,
    attribute: Attribute,
    gap: f64,
    rng: &mut R,
) -> Result<(usize, usize)> {
    Ok(PairIndex::build(manifest, attribute, gap)?.sample(rng))
}

pub fn absdiff(table: &SimilarityTable, i1: usize, i2: usize, dim: usize) -> f64 {
    (table.delta(i1, dim) - table.delta(i2, dim)).abs()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DimensionBreakdown {
    pub dimension: String,
    pub values: Vec<f64>,
    pub summary: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AbsDiffDistribution {
    pub attribute: Attribute,
    pub resamples_per_dimension: usize,
    pub valid_pairs: usize,
    /// Dimension-major: all resamples of the first dimension, then the next.
    pub values: Vec<f64>,
    pub summary: Summary,
    pub per_dimension: Vec<DimensionBreakdown>,
}

impl AbsDiffDistribution {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("attribute,dimension,resample,absdiff\n");
        for dim in &self.per_dimension {
            for (r, v) in dim.values.iter().enumerate() {
                let _ = writeln!(out, "{},{},{r},{v}", self.attribute, csv_field(&dim.dimension));
            }
        }
        out
    }
}

fn attribute_stream(attribute: Attribute) -> u64 {
    Attribute::ALL.iter().position(|&a| a == attribute).unwrap_or(0) as u64
}

/// Bootstrap AbsDiff values: for every configured dimension, draw
/// `resamples_per_dimension` pairs with replacement.
pub fn bootstrap_distribution(
    manifest: &DatasetManifest,
    table: &SimilarityTable,
    config: &VariationConfig,
) -> Result<AbsDiffDistribution> {
    config.validate()?;
    if table.ids.len() != manifest.len() || table.ids.iter().zip(manifest.ids()).any(|(a, b)| a != b) {
        return Err(Error::Misaligned("similarity table ids differ from manifest ids".into()));
    }
    let dims = config
        .dimensions
        .iter()
        .map(|d| table.dimension_index(d))
        .collect::<Result<Vec<_>>>()?;
    let index = PairIndex::build(manifest, config.attribute, config.gap(config.attribute))?;
    let r = config.resamples_per_dimension;
    let attr_bits = attribute_stream(config.attribute) << 56;

    let values: Vec<f64> = (0..dims.len() * r)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(config.rng_seed, attr_bits | k as u64);
            let (a, b) = index.sample(&mut rng);
            absdiff(table, a, b, dims[k / r])
        })
        .collect();

    let per_dimension = config
        .dimensions
        .iter()
        .enumerate()
        .map(|(d, name)| {
            let vals = values[d * r..(d + 1) * r].to_vec();
            Ok(DimensionBreakdown {
                dimension: name.clone(),
                summary: summarize(&vals)?,
                values: vals,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AbsDiffDistribution {
        attribute: config.attribute,
        resamples_per_dimension: r,
        valid_pairs: index.len(),
        summary: summarize(&values)?,
        values,
        per_dimension,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairwiseComparison {
    pub first: Attribute,
    pub second: Attribute,
    pub test: TestResult,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttributeComparison {
    /// Attributes by descending median AbsDiff.
    pub ordering: Vec<(Attribute, f64)>,
    pub tests: Vec<PairwiseComparison>,
}

/// Rank-sum test for every pair of distributions (in input order) plus the
/// median ordering.
pub fn compare_attributes(
    distributions: &[AbsDiffDistribution],
    alternative: Alternative,
) -> Result<AttributeComparison> {
    if distributions.len() < 2 {
        return Err(Error::InsufficientData("comparison needs at least 2 distributions".into()));
    }
    let mut ordering: Vec<(Attribute, f64)> = distributions
        .iter()
        .map(|d| (d.attribute, d.summary.median))
        .collect();
    ordering.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut tests = Vec::new();
    for (i, a) in distributions.iter().enumerate() {
        for b in &distributions[i + 1..] {
            tests.push(PairwiseComparison {
                first: a.attribute,
                second: b.attribute,
                test: wilcoxon_ranksum(&a.values, &b.values, alternative)?,
            });
        }
    }
    Ok(AttributeComparison { ordering, tests })
}
