//! Figure-style analyses over a similarity table: confound curves and their
//! correlations, per-group trend fits, covariance ellipses, neutral-prompt
//! densities and tests, and the geometry of valenced adjectives.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use crate::datamodel::{
    age_decade, group_by_selection, AttrValue, Attribute, DatasetKind, DatasetManifest, GroupKey, Lexicon,
};
use crate::embedio::EmbeddingSet;
use crate::error::{Error, Result};
use crate::simcore::{cosine, SimilarityTable};
use crate::stats::rng::stream_rng;
use crate::stats::{
    cov_ellipse, kde, pca3, pearson, polyfit2, scott_bandwidth, summarize, t_test_independent_one_sided,
    t_test_paired, Alternative, Correlation, CovEllipse, KdeCurve, PolyFit2, Summary, TestResult,
};

/// Opposite-valence dimension pairs with their category names.
pub const OPPOSITE_PAIRS: [(&str, &str, &str); 3] =
    [("Agency", "A+", "A-"), ("Belief", "Bp", "Bc"), ("Communion", "C+", "C-")];

pub const MIN_WILD_AGE: f64 = 20.0;

fn check_aligned(manifest: &DatasetManifest, table: &SimilarityTable) -> Result<()> {
    if table.ids.len() != manifest.len() || table.ids.iter().zip(manifest.ids()).any(|(a, b)| a != b) {
        return Err(Error::Misaligned("similarity table ids differ from manifest ids".into()));
    }
    Ok(())
}

fn is_wild(manifest: &DatasetManifest) -> bool {
    manifest.records.iter().all(|r| r.dataset.is_wild())
}

/// Most frequent level of each manipulation among CausalFace records, ties
/// broken toward the smaller level.
pub fn modal_levels(manifest: &DatasetManifest) -> BTreeMap<Attribute, f64> {
    let mut out = BTreeMap::new();
    for attr in Attribute::MANIPULATIONS {
        let mut counts: BTreeMap<AttrValue, usize> = BTreeMap::new();
        for r in manifest.records.iter().filter(|r| r.dataset == DatasetKind::CausalFace) {
            if let Some(v) = r.level(attr) {
                *counts.entry(AttrValue::Number(v)).or_default() += 1;
            }
        }
        let best = counts.iter().fold(None::<(&AttrValue, usize)>, |acc, (v, &c)| match acc {
            Some((_, bc)) if bc >= c => acc,
            _ => Some((v, c)),
        });
        if let Some((v, _)) = best {
            out.insert(attr, v.as_f64().unwrap_or(0.0));
        }
    }
    out
}

/// CausalFace rows whose manipulations other than `free` sit at their modal
/// level. With `free = None` these are the prototypes.
pub fn family_rows(manifest: &DatasetManifest, free: Option<Attribute>) -> Vec<usize> {
    let modes = modal_levels(manifest);
    manifest
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.dataset == DatasetKind::CausalFace)
        .filter(|(_, r)| {
            Attribute::MANIPULATIONS
                .iter()
                .filter(|&&a| Some(a) != free)
                .all(|&a| r.level(a) == modes.get(&a).copied())
        })
        .map(|(i, _)| i)
        .collect()
}

/// Prototype rows for CausalFace; every age-filtered row for wild datasets.
pub fn base_rows(manifest: &DatasetManifest) -> Vec<usize> {
    if is_wild(manifest) {
        manifest.rows_with_min_age(MIN_WILD_AGE)
    } else {
        family_rows(manifest, None)
    }
}

/// Mean delta per level of an attribute.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelCurve {
    pub attribute: String,
    pub dimension: String,
    pub levels: Vec<f64>,
    pub means: Vec<f64>,
    pub counts: Vec<usize>,
}

fn level_means(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let mut acc: BTreeMap<AttrValue, (f64, usize)> = BTreeMap::new();
    for (&xi, &yi) in x.iter().zip(y) {
        let e = acc.entry(AttrValue::Number(xi)).or_default();
        e.0 += yi;
        e.1 += 1;
    }
    let mut levels = Vec::new();
    let mut means = Vec::new();
    let mut counts = Vec::new();
    for (k, (s, n)) in acc {
        levels.push(k.as_f64().unwrap_or(0.0));
        means.push(s / n as f64);
        counts.push(n);
    }
    (levels, means, counts)
}

fn curve(
    manifest: &DatasetManifest,
    table: &SimilarityTable,
    rows: &[usize],
    attribute: Attribute,
    dim: usize,
) -> LevelCurve {
    let x: Vec<f64> = rows.iter().filter_map(|&r| manifest.records[r].level(attribute)).collect();
    let y: Vec<f64> = rows
        .iter()
        .filter(|&&r| manifest.records[r].level(attribute).is_some())
        .map(|&r| table.delta(r, dim))
        .collect();
    let (levels, means, counts) = level_means(&x, &y);
    LevelCurve {
        attribute: attribute.to_string(),
        dimension: table.dimensions[dim].name.clone(),
        levels,
        means,
        counts,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfoundRow {
    pub attribute: Attribute,
    pub positive: String,
    pub negative: String,
    pub correlation: Option<Correlation>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfoundTable {
    pub rows: Vec<ConfoundRow>,
    /// Mean r over the pairs of each attribute.
    pub average_r: BTreeMap<Attribute, f64>,
    /// Level curves of every table dimension, averaged over races and genders.
    pub curves: Vec<LevelCurve>,
}

/// Pearson r between the level curves of opposite-valence dimensions, one
/// family of CausalFace variants per attribute.
pub fn confound_correlations(
    manifest: &DatasetManifest,
    table: &SimilarityTable,
    attributes: &[Attribute],
) -> Result<ConfoundTable> {
    check_aligned(manifest, table)?;
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    let mut average_r = BTreeMap::new();
    for &attr in attributes {
        let fam = family_rows(manifest, Some(attr));
        if fam.is_empty() {
            return Err(Error::InsufficientData(format!("no CausalFace {attr} variants")));
        }
        for d in 0..table.dimension_count() {
            curves.push(curve(manifest, table, &fam, attr, d));
        }
        let mut rs = Vec::new();
        for (_, pos, neg) in OPPOSITE_PAIRS {
            let (Ok(p), Ok(n)) = (table.dimension_index(pos), table.dimension_index(neg)) else {
                continue;
            };
            let cp = curve(manifest, table, &fam, attr, p);
            let cn = curve(manifest, table, &fam, attr, n);
            let correlation = pearson(&cp.means, &cn.means).ok();
            if let Some(c) = &correlation {
                rs.push(c.r);
            }
            rows.push(ConfoundRow {
                attribute: attr,
                positive: pos.into(),
                negative: neg.into(),
                correlation,
            });
        }
        if !rs.is_empty() {
            average_r.insert(attr, rs.iter().sum::<f64>() / rs.len() as f64);
        }
    }
    Ok(ConfoundTable { rows, average_r, curves })
}

/// Keep an equal number of rows per age-decade bin within each race-gender
/// group, drawn with seeded streams.
pub fn equalize_age_bins(manifest: &DatasetManifest, rows: &[usize], rng_seed: u64) -> Result<Vec<usize>> {
    let groups = group_by_selection(
        manifest,
        rows,
        &[GroupKey::Attr(Attribute::Race), GroupKey::Attr(Attribute::Gender)],
    )?;
    let mut out = Vec::new();
    let mut stream = 0u64;
    for g in groups.iter().filter(|g| !g.is_empty()) {
        let bins = group_by_selection(manifest, &g.rows, &[GroupKey::AgeDecade])?;
        let m = bins.iter().map(|b| b.rows.len()).filter(|&n| n > 0).min().unwrap_or(0);
        for b in bins {
            let mut pool = b.rows.clone();
            let mut rng = stream_rng(rng_seed, stream);
            stream += 1;
            for i in 0..m.min(pool.len()) {
                let j = rng.random_range(i..pool.len());
                pool.swap(i, j);
            }
            pool.truncate(m);
            out.extend(pool);
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Rows and x values for an attribute trend: the CausalFace variant family,
/// or decade-binned ages for wild datasets.
fn trend_rows(
    manifest: &DatasetManifest,
    attribute: Attribute,
    rng_seed: u64,
) -> Result<(Vec<usize>, Vec<f64>)> {
    if is_wild(manifest) {
        if attribute != Attribute::Age {
            return Err(Error::InvalidArgument(format!(
                "wild datasets only support age trends, not {attribute}"
            )));
        }
        let rows = equalize_age_bins(manifest, &manifest.rows_with_min_age(MIN_WILD_AGE), rng_seed)?;
        let rows: Vec<usize> = rows.into_iter().filter(|&r| manifest.records[r].age.is_some()).collect();
        let x = rows.iter().map(|&r| age_decade(manifest.records[r].age.unwrap_or(0.0))).collect();
        Ok((rows, x))
    } else {
        let rows = family_rows(manifest, Some(attribute));
        let x = rows.iter().map(|&r| manifest.records[r].level(attribute).unwrap_or(0.0)).collect();
        Ok((rows, x))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrendFit {
    pub group: String,
    pub attribute: Attribute,
    pub dimension: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub counts: Vec<usize>,
    /// Absent when fewer than three distinct x values exist.
    pub fit: Option<PolyFit2>,
}

fn race_gender_groups(manifest: &DatasetManifest, rows: &[usize]) -> Result<Vec<crate::datamodel::DemographicGroup>> {
    group_by_selection(
        manifest,
        rows,
        &[GroupKey::Attr(Attribute::Race), GroupKey::Attr(Attribute::Gender)],
    )
}

/// Degree-2 fits of per-level mean delta against `attribute`, one per
/// race-gender group and dimension.
pub fn trend_fits(
    manifest: &DatasetManifest,
    table: &SimilarityTable,
    attribute: Attribute,
    dimensions: &[String],
    rng_seed: u64,
) -> Result<Vec<TrendFit>> {
    check_aligned(manifest, table)?;
    let (rows, xs) = trend_rows(manifest, attribute, rng_seed)?;
    let x_of: BTreeMap<usize, f64> = rows.iter().copied().zip(xs).collect();
    let dims = dimensions
        .iter()
        .map(|d| table.dimension_index(d))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for g in race_gender_groups(manifest, &rows)? {
        let x: Vec<f64> = g.rows.iter().map(|r| x_of[r]).collect();
        for (&d, name) in dims.iter().zip(dimensions) {
            let y: Vec<f64> = g.rows.iter().map(|&r| table.delta(r, d)).collect();
            let (lx, ly, counts) = level_means(&x, &y);
            let fit = if lx.len() >= 3 { polyfit2(&lx, &ly).ok() } else { None };
            out.push(TrendFit {
                group: g.label(),
                attribute,
                dimension: name.clone(),
                x: lx,
                y: ly,
                counts,
                fit,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EllipseFit {
    pub group: String,
    pub positive: String,
    pub negative: String,
    /// Per-age-level mean (positive delta, negative delta).
    pub points: Vec<(f64, f64)>,
    pub ellipse: Option<CovEllipse>,
}

/// Covariance ellipses of per-age-level (positive, negative) delta means for
/// each race-gender group.
pub fn valence_ellipses(
    manifest: &DatasetManifest,
    table: &SimilarityTable,
    k_sigma: f64,
    rng_seed: u64,
) -> Result<Vec<EllipseFit>> {
    check_aligned(manifest, table)?;
    let (rows, xs) = trend_rows(manifest, Attribute::Age, rng_seed)?;
    let x_of: BTreeMap<usize, f64> = rows.iter().copied().zip(xs).collect();
    let mut out = Vec::new();
    for g in race_gender_groups(manifest, &rows)? {
        let x: Vec<f64> = g.rows.iter().map(|r| x_of[r]).collect();
        for (_, pos, neg) in OPPOSITE_PAIRS {
            let (Ok(p), Ok(n)) = (table.dimension_index(pos), table.dimension_index(neg)) else {
                continue;
            };
            let yp: Vec<f64> = g.rows.iter().map(|&r| table.delta(r, p)).collect();
            let yn: Vec<f64> = g.rows.iter().map(|&r| table.delta(r, n)).collect();
            let (_, mp, _) = level_means(&x, &yp);
            let (_, mn, _) = level_means(&x, &yn);
            let points: Vec<(f64, f64)> = mp.into_iter().zip(mn).collect();
            let ellipse = cov_ellipse(&points, k_sigma).ok();
            out.push(EllipseFit {
                group: g.label(),
                positive: pos.into(),
                negative: neg.into(),
                points,
                ellipse,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CosineKind {
    Neutral,
    Raw,
    Delta,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KdeSeries {
    pub group: String,
    pub kind: CosineKind,
    pub dimension: Option<String>,
    pub n: usize,
    pub curve: KdeCurve,
}

/// Densities of neutral, raw and delta cosines per race-gender group over the
/// base rows, evaluated on a grid shared by all groups of a panel. Groups
/// with fewer than two distinct values are omitted.
pub fn cosine_densities(
    manifest: &DatasetManifest,
    table: &SimilarityTable,
    dimensions: &[String],
    grid_points: usize,
) -> Result<Vec<KdeSeries>> {
    check_aligned(manifest, table)?;
    if grid_points < 2 {
        return Err(Error::InvalidArgument("density grid needs at least 2 points".into()));
    }
    let groups: Vec<_> = race_gender_groups(manifest, &base_rows(manifest))?
        .into_iter()
        .filter(|g| !g.is_empty())
        .collect();
    type Panel<'a> = (CosineKind, Option<String>, Box<dyn Fn(usize) -> f64 + 'a>);
    let mut panels: Vec<Panel> =
        vec![(CosineKind::Neutral, None, Box::new(|r| table.neutral_cos[r]))];
    for name in dimensions {
        let d = table.dimension_index(name)?;
        panels.push((CosineKind::Raw, Some(name.clone()), Box::new(move |r| table.raw(r, d))));
        panels.push((CosineKind::Delta, Some(name.clone()), Box::new(move |r| table.delta(r, d))));
    }
    let mut out = Vec::new();
    for (kind, dimension, value) in panels {
        let samples: Vec<(String, Vec<f64>, f64)> = groups
            .iter()
            .filter_map(|g| {
                let s: Vec<f64> = g.rows.iter().map(|&r| value(r)).collect();
                scott_bandwidth(&s).ok().map(|bw| (g.label(), s, bw))
            })
            .collect();
        if samples.is_empty() {
            continue;
        }
        let pad = 3.0 * samples.iter().map(|s| s.2).fold(0.0, f64::max);
        let lo = samples.iter().flat_map(|s| &s.1).copied().fold(f64::INFINITY, f64::min) - pad;
        let hi = samples.iter().flat_map(|s| &s.1).copied().fold(f64::NEG_INFINITY, f64::max) + pad;
        let step = (hi - lo) / (grid_points - 1) as f64;
        let grid: Vec<f64> = (0..grid_points).map(|i| lo + step * i as f64).collect();
        for (group, s, bw) in samples {
            out.push(KdeSeries {
                group,
                kind,
                dimension: dimension.clone(),
                n: s.len(),
                curve: kde(&s, &grid, Some(bw))?,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NeutralGroupSummary {
    pub group: String,
    pub summary: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NeutralPairTest {
    pub first: String,
    pub second: String,
    /// Seeds present in both groups.
    pub n: usize,
    pub test: TestResult,
    pub correlation: Option<Correlation>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NeutralPromptReport {
    pub groups: Vec<NeutralGroupSummary>,
    pub pairs: Vec<NeutralPairTest>,
}

/// Neutral-prompt cosine of prototypes: per-group summaries, and for every
/// pair of race-gender groups a seed-paired t-test and seed scatter
/// correlation.
pub fn neutral_prompt_tests(manifest: &DatasetManifest, table: &SimilarityTable) -> Result<NeutralPromptReport> {
    check_aligned(manifest, table)?;
    let rows = family_rows(manifest, None);
    let groups: Vec<_> = race_gender_groups(manifest, &rows)?
        .into_iter()
        .filter(|g| !g.is_empty())
        .collect();
    let by_seed: Vec<BTreeMap<u64, f64>> = groups
        .iter()
        .map(|g| {
            g.rows
                .iter()
                .filter_map(|&r| manifest.records[r].seed.map(|s| (s, table.neutral_cos[r])))
                .collect()
        })
        .collect();
    let summaries = groups
        .iter()
        .map(|g| {
            let v: Vec<f64> = g.rows.iter().map(|&r| table.neutral_cos[r]).collect();
            Ok(NeutralGroupSummary {
                group: g.label(),
                summary: summarize(&v)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut pairs = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let (a, b): (Vec<f64>, Vec<f64>) = by_seed[i]
                .iter()
                .filter_map(|(s, &x)| by_seed[j].get(s).map(|&y| (x, y)))
                .unzip();
            let Ok(test) = t_test_paired(&a, &b, Alternative::TwoSided) else {
                continue;
            };
            pairs.push(NeutralPairTest {
                first: groups[i].label(),
                second: groups[j].label(),
                n: a.len(),
                correlation: pearson(&a, &b).ok(),
                test,
            });
        }
    }
    Ok(NeutralPromptReport {
        groups: summaries,
        pairs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValenceTest {
    pub category: String,
    pub positive: String,
    pub negative: String,
    pub within_positive: Vec<f64>,
    pub within_negative: Vec<f64>,
    pub cross: Vec<f64>,
    /// One-sided: within-positive exceeds cross.
    pub positive_vs_cross: TestResult,
    pub negative_vs_cross: TestResult,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PcaPoint {
    pub word: String,
    pub dimensions: Vec<String>,
    pub coords: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PcaCenter {
    pub dimension: String,
    pub coords: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValenceGeometry {
    pub tests: Vec<ValenceTest>,
    pub explained_ratio: [f64; 3],
    pub points: Vec<PcaPoint>,
    pub centers: Vec<PcaCenter>,
}

fn word_rows(words: &EmbeddingSet) -> BTreeMap<&str, usize> {
    words.ids().iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect()
}

/// Within- and cross-valence cosines of bare adjective embeddings, one-sided
/// Welch tests, and a 3-component PCA of every adjective in `lexicons`.
pub fn valence_geometry(lexicons: &[&Lexicon], words: &EmbeddingSet) -> Result<ValenceGeometry> {
    let words = words.normalize()?;
    let index = word_rows(&words);
    let vec_of = |w: &str| -> Result<&[f64]> {
        index
            .get(w)
            .map(|&r| words.row(r))
            .ok_or_else(|| Error::MissingPrompt(w.to_string()))
    };

    let mut tests = Vec::new();
    for lex in lexicons {
        for (category, pos, neg) in OPPOSITE_PAIRS {
            let (Some(p), Some(n)) = (lex.dimension(pos), lex.dimension(neg)) else {
                continue;
            };
            let pv = p.adjectives.iter().map(|w| vec_of(w)).collect::<Result<Vec<_>>>()?;
            let nv = n.adjectives.iter().map(|w| vec_of(w)).collect::<Result<Vec<_>>>()?;
            let within = |v: &[&[f64]]| -> Result<Vec<f64>> {
                let mut out = Vec::new();
                for i in 0..v.len() {
                    for j in i + 1..v.len() {
                        out.push(cosine(v[i], v[j])?);
                    }
                }
                Ok(out)
            };
            let mut cross = Vec::new();
            for a in &pv {
                for b in &nv {
                    cross.push(cosine(a, b)?);
                }
            }
            let within_positive = within(&pv)?;
            let within_negative = within(&nv)?;
            tests.push(ValenceTest {
                category: category.into(),
                positive: pos.into(),
                negative: neg.into(),
                positive_vs_cross: t_test_independent_one_sided(&within_positive, &cross)?,
                negative_vs_cross: t_test_independent_one_sided(&within_negative, &cross)?,
                within_positive,
                within_negative,
                cross,
            });
        }
    }

    let mut order: Vec<String> = Vec::new();
    let mut dims_of: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for lex in lexicons {
        for d in &lex.dimensions {
            for w in &d.adjectives {
                if !dims_of.contains_key(w) {
                    order.push(w.clone());
                }
                dims_of.entry(w.clone()).or_default().push(d.name.clone());
            }
        }
    }
    let vectors = order.iter().map(|w| vec_of(w)).collect::<Result<Vec<_>>>()?;
    let pca = pca3(&vectors)?;
    let coords_of: BTreeMap<&str, [f64; 3]> =
        order.iter().map(String::as_str).zip(pca.projected.iter().copied()).collect();
    let points = order
        .iter()
        .map(|w| PcaPoint {
            word: w.clone(),
            dimensions: dims_of[w].clone(),
            coords: coords_of[w.as_str()],
        })
        .collect();
    let mut centers = Vec::new();
    for lex in lexicons {
        for d in &lex.dimensions {
            let mut c = [0.0; 3];
            for w in &d.adjectives {
                for (k, v) in coords_of[w.as_str()].iter().enumerate() {
                    c[k] += v / d.adjectives.len() as f64;
                }
            }
            centers.push(PcaCenter {
                dimension: d.name.clone(),
                coords: c,
            });
        }
    }
    Ok(ValenceGeometry {
        tests,
        explained_ratio: pca.explained_ratio,
        points,
        centers,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValenceCorrelation {
    pub category: String,
    pub group: String,
    pub correlation: Option<Correlation>,
}

/// Pearson r between positive and negative delta across the images of each
/// race-gender group, for every opposite pair.
pub fn valence_correlations(manifest: &DatasetManifest, table: &SimilarityTable) -> Result<Vec<ValenceCorrelation>> {
    check_aligned(manifest, table)?;
    let rows: Vec<usize> = if is_wild(manifest) {
        manifest.rows_with_min_age(MIN_WILD_AGE)
    } else {
        (0..manifest.len()).collect()
    };
    let groups = race_gender_groups(manifest, &rows)?;
    let mut out = Vec::new();
    for (category, pos, neg) in OPPOSITE_PAIRS {
        let (Ok(p), Ok(n)) = (table.dimension_index(pos), table.dimension_index(neg)) else {
            continue;
        };
        for g in &groups {
            let x: Vec<f64> = g.rows.iter().map(|&r| table.delta(r, p)).collect();
            let y: Vec<f64> = g.rows.iter().map(|&r| table.delta(r, n)).collect();
            out.push(ValenceCorrelation {
                category: category.into(),
                group: g.label(),
                correlation: pearson(&x, &y).ok(),
            });
        }
    }
    Ok(out)
}
