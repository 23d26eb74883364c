//! End-to-end audit: load and hash inputs, build similarity tables, run the
//! enabled analyses and write every output in one atomic directory swap.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;

use crate::analysis::{
    confound_correlations, cosine_densities, neutral_prompt_tests, trend_fits, valence_correlations,
    valence_ellipses, valence_geometry,
};
use crate::config::{sha256_hex, AuditConfig, LexiconChoice};
use crate::datamodel::{
    group_by, parse_manifest, Attribute, DatasetKind, DatasetManifest, Dimension, Gender, GroupKey, Lexicon,
    DEFAULT_ABC_JSON, DEFAULT_SCM_JSON, DEFAULT_TEMPLATES_JSON,
    PromptOptions, PromptTemplateSet, Race, Valence,
};
use crate::embedio::{validate_alignment, EmbeddingSet};
use crate::error::{Error, Result};
use crate::fairmetrics::{
    markedness, max_skew_at_k, mean_cossim, ndkl, rank_by_dimension, scweat_dimensions, skew_at_k,
    uniform_distribution, WeatConfig, WeatResult,
};
use crate::simcore::{build_similarity_table, PromptSpace, SimilarityTable};
use crate::stats::rng::stream_rng;
use crate::variation::{bootstrap_distribution, compare_attributes, VariationConfig};

/// Output files keyed by path relative to the output directory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OutputSet {
    files: BTreeMap<PathBuf, Vec<u8>>,
}

impl OutputSet {
    pub fn add(&mut self, rel: impl Into<PathBuf>, bytes: impl Into<Vec<u8>>) {
        self.files.insert(rel.into(), bytes.into());
    }

    pub fn add_json<T: Serialize>(&mut self, rel: impl Into<PathBuf>, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
        s.push('\n');
        self.add(rel, s);
        Ok(())
    }

    pub fn files(&self) -> &BTreeMap<PathBuf, Vec<u8>> {
        &self.files
    }

    /// Write into a sibling staging directory, then swap it into place. An
    /// existing output directory is replaced only if it holds a previous report.
    pub fn commit(&self, out_dir: &Path) -> Result<()> {
        if out_dir.exists() && !out_dir.join(REPORT_FILE).exists() && !is_empty_dir(out_dir) {
            return Err(Error::Config(format!(
                "{} exists and is not an audit output directory",
                out_dir.display()
            )));
        }
        let parent = out_dir.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        let name = out_dir.file_name().and_then(|n| n.to_str()).unwrap_or("audit-out");
        let staging = parent.join(format!(".{name}.staging-{}", std::process::id()));
        let result = self.write_into(&staging).and_then(|_| {
            if out_dir.exists() {
                fs::remove_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
            }
            fs::rename(&staging, out_dir).map_err(|e| Error::io(out_dir, e))
        });
        if result.is_err() {
            let _ = fs::remove_dir_all(&staging);
        }
        result
    }

    fn write_into(&self, dir: &Path) -> Result<()> {
        if dir.exists() {
            fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        for (rel, bytes) in &self.files {
            let path = dir.join(rel);
            if let Some(p) = path.parent() {
                fs::create_dir_all(p).map_err(|e| Error::io(p, e))?;
            }
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

fn is_empty_dir(p: &Path) -> bool {
    fs::read_dir(p).map(|mut d| d.next().is_none()).unwrap_or(false)
}

pub const REPORT_FILE: &str = "report.json";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub tool: String,
    pub version: String,
    pub config: AuditConfig,
    pub config_sha256: String,
    /// SHA-256 of every input, keyed by the path as configured.
    pub inputs: BTreeMap<String, String>,
    pub files: Vec<OutputFile>,
    /// Analyses that were enabled but do not apply to a dataset.
    pub skipped: Vec<String>,
}

struct LoadedDataset {
    name: String,
    manifest: DatasetManifest,
    embeddings: EmbeddingSet,
}

struct Inputs {
    hashes: BTreeMap<String, String>,
    lexicons: Vec<Lexicon>,
    dimensions: Vec<Dimension>,
    lexicon_sha256: String,
    templates_sha256: String,
    texts_sha256: Option<String>,
    space: Option<PromptSpace>,
    datasets: Vec<LoadedDataset>,
    words: Option<EmbeddingSet>,
}

fn read_hashed(path: &Path, label: &Path, hashes: &mut BTreeMap<String, String>) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    hashes.insert(label.display().to_string(), sha256_hex(&bytes));
    Ok(bytes)
}

fn utf8(bytes: Vec<u8>, path: &Path) -> Result<String> {
    String::from_utf8(bytes).map_err(|_| Error::Config(format!("{} is not UTF-8", path.display())))
}

fn load_inputs(config: &AuditConfig, resolved: &AuditConfig, need_datasets: bool) -> Result<Inputs> {
    let mut hashes = BTreeMap::new();

    let mut lexicons = Vec::new();
    let mut lexicon_text = String::new();
    if resolved.lexicon_files.is_empty() {
        let embedded: &[&str] = match config.lexicon {
            LexiconChoice::Scm => &[DEFAULT_SCM_JSON],
            LexiconChoice::Abc => &[DEFAULT_ABC_JSON],
            LexiconChoice::Both => &[DEFAULT_SCM_JSON, DEFAULT_ABC_JSON],
        };
        for text in embedded {
            lexicons.push(Lexicon::from_json(text)?);
            lexicon_text.push_str(text);
        }
    } else {
        for (p, label) in resolved.lexicon_files.iter().zip(&config.lexicon_files) {
            let text = utf8(read_hashed(p, label, &mut hashes)?, p)?;
            lexicons.push(Lexicon::from_json(&text)?);
            lexicon_text.push_str(&text);
        }
    }
    let mut dimensions = Vec::new();
    let mut names = BTreeSet::new();
    for lex in &lexicons {
        for d in &lex.dimensions {
            if !names.insert(d.name.clone()) {
                return Err(Error::InvalidLexicon(format!("dimension {:?} defined twice", d.name)));
            }
            dimensions.push(d.clone());
        }
    }

    let (templates, templates_text) = match (&resolved.templates, &config.templates) {
        (Some(p), Some(label)) => {
            let text = utf8(read_hashed(p, label, &mut hashes)?, p)?;
            (PromptTemplateSet::from_json(&text)?, text)
        }
        _ => (PromptTemplateSet::default(), DEFAULT_TEMPLATES_JSON.to_string()),
    };
    let options = PromptOptions {
        fix_articles: config.fix_articles,
    };

    let mut space = None;
    let mut texts_sha256 = None;
    if need_datasets && !resolved.datasets.is_empty() {
        let (Some(p), Some(label)) = (&resolved.text_embeddings, &config.text_embeddings) else {
            return Err(Error::Config("text_embeddings is required to score datasets".into()));
        };
        let bytes = read_hashed(p, label, &mut hashes)?;
        texts_sha256 = Some(sha256_hex(&bytes));
        space = Some(PromptSpace::new(&EmbeddingSet::from_bytes(&bytes)?, templates, options)?);
    }

    let mut datasets = Vec::new();
    for (d, label) in resolved.datasets.iter().zip(&config.datasets) {
        let mtext = utf8(read_hashed(&d.manifest, &label.manifest, &mut hashes)?, &d.manifest)?;
        let manifest = parse_manifest(&mtext)?;
        let embeddings = EmbeddingSet::from_bytes(&read_hashed(&d.embeddings, &label.embeddings, &mut hashes)?)?;
        validate_alignment(&embeddings, &manifest).into_result()?;
        let keep = manifest.rows_with_min_age(config.min_age);
        let (manifest, embeddings) = if keep.len() == manifest.len() {
            (manifest, embeddings)
        } else {
            (manifest.select(&keep)?, embeddings.select(&keep))
        };
        datasets.push(LoadedDataset {
            name: d.name.clone(),
            manifest,
            embeddings,
        });
    }

    let words = match (&resolved.word_embeddings, &config.word_embeddings) {
        (Some(p), Some(label)) if config.valence.enabled => {
            Some(EmbeddingSet::from_bytes(&read_hashed(p, label, &mut hashes)?)?)
        }
        _ => None,
    };

    Ok(Inputs {
        hashes,
        lexicons,
        dimensions,
        lexicon_sha256: sha256_hex(lexicon_text.as_bytes()),
        templates_sha256: sha256_hex(templates_text.as_bytes()),
        texts_sha256,
        space,
        datasets,
        words,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimilarityProvenance {
    pub dataset: String,
    pub lexicon_sha256: String,
    pub templates_sha256: String,
    pub embeddings_sha256: String,
    pub text_embeddings_sha256: String,
    pub fix_articles: bool,
}

#[derive(Serialize)]
struct SimilarityJson<'a> {
    provenance: SimilarityProvenance,
    table: &'a SimilarityTable,
}

/// Rows x datasets grid of one metric; `None` marks cells that do not apply
/// or are undefined (e.g. a Skew of minus infinity).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsTable {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl MetricsTable {
    fn new(rows: Vec<String>) -> Self {
        MetricsTable {
            rows,
            columns: Vec::new(),
            values: Vec::new(),
        }
    }

    fn push_column(&mut self, name: &str, column: Vec<Option<f64>>) {
        if self.values.is_empty() {
            self.values = vec![Vec::new(); self.rows.len()];
        }
        self.columns.push(name.to_string());
        for (row, v) in self.values.iter_mut().zip(column) {
            row.push(v);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeatEntry {
    pub first: String,
    pub second: String,
    pub result: Option<WeatResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SkewEntry {
    pub label: String,
    pub attribute: Attribute,
    /// One value per ranking query; `None` where the label is absent from the
    /// top k (skew of minus infinity).
    pub per_query: Vec<Option<f64>>,
    pub mean: Option<f64>,
    pub absent_from_top_k: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankingEntry {
    pub attribute: Attribute,
    pub per_query: Vec<f64>,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetMetrics {
    pub dataset: String,
    pub images: usize,
    pub k: usize,
    pub queries: Vec<String>,
    pub desired: BTreeMap<String, BTreeMap<String, f64>>,
    pub markedness: Vec<(String, Option<f64>)>,
    pub mean_cossim: Vec<(String, Option<f64>)>,
    pub weat: Vec<WeatEntry>,
    pub skew: Vec<SkewEntry>,
    pub max_skew: Vec<RankingEntry>,
    pub ndkl: Vec<RankingEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub markedness: Option<MetricsTable>,
    pub mean_cossim: Option<MetricsTable>,
    /// SC-WEAT effect sizes.
    pub weat: Option<MetricsTable>,
    pub skew: Option<MetricsTable>,
    pub max_skew: Option<MetricsTable>,
    pub ndkl: Option<MetricsTable>,
    pub details: Vec<DatasetMetrics>,
}

fn category(label: &str) -> Result<(Attribute, String)> {
    if let Ok(r) = Race::from_str(label) {
        return Ok((Attribute::Race, r.as_str().to_string()));
    }
    if let Ok(g) = Gender::from_str(label) {
        return Ok((Attribute::Gender, g.as_str().to_string()));
    }
    Err(Error::Config(format!("category {label:?} is neither a race nor a gender")))
}

fn rows_with(manifest: &DatasetManifest, attribute: Attribute, value: &str) -> Vec<usize> {
    (0..manifest.len())
        .filter(|&i| manifest.records[i].value(attribute).to_string() == value)
        .collect()
}

fn subsample(rows: &[usize], n: usize, rng_seed: u64, stream: u64) -> Vec<usize> {
    let mut pool = rows.to_vec();
    let mut rng = stream_rng(rng_seed, stream);
    for i in 0..n.min(pool.len()) {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(n);
    pool.sort_unstable();
    pool
}

/// Stream offset for group subsampling, clear of the variation streams.
const WEAT_STREAM_BASE: u64 = 1 << 40;

fn dataset_metrics(
    config: &AuditConfig,
    ds: &LoadedDataset,
    images: &EmbeddingSet,
    table: &SimilarityTable,
    inputs: &Inputs,
) -> Result<DatasetMetrics> {
    let m = &config.metrics;
    let space = inputs.space.as_ref().expect("prompt space loaded with datasets");
    let rows_of = |idx: &[usize]| -> Vec<&[f64]> { idx.iter().map(|&i| images.row(i)).collect() };
    let positive: Vec<Dimension> = inputs
        .dimensions
        .iter()
        .filter(|d| d.valence == Valence::Positive)
        .cloned()
        .collect();

    let mut desired = BTreeMap::new();
    for attr in [Attribute::Race, Attribute::Gender] {
        let d = match m.desired.get(attr.as_str()) {
            Some(d) => d.clone(),
            None => {
                let observed: BTreeSet<String> =
                    ds.manifest.records.iter().map(|r| r.value(attr).to_string()).collect();
                uniform_distribution(&observed.into_iter().collect::<Vec<_>>())
            }
        };
        desired.insert(attr.as_str().to_string(), d);
    }

    let mut mark = Vec::new();
    let mut mcs = Vec::new();
    for label in &m.categories {
        let (attr, value) = category(label)?;
        let rows = rows_with(&ds.manifest, attr, &value);
        let imgs = rows_of(&rows);
        let has = !imgs.is_empty();
        mark.push((label.clone(), if m.markedness && has { Some(markedness(&imgs, label, space)?) } else { None }));
        mcs.push((
            label.clone(),
            if m.mean_cossim && has && !positive.is_empty() {
                Some(mean_cossim(&imgs, &positive, space)?)
            } else {
                None
            },
        ));
    }

    let mut weat = Vec::new();
    if m.weat {
        let wcfg = WeatConfig {
            permutations: m.permutations,
            exact_limit: m.exact_limit,
            rng_seed: config.rng_seed,
            std_ddof: m.std_ddof,
        };
        for (i, (a, b)) in m.weat_pairs.iter().enumerate() {
            let (aa, av) = category(a)?;
            let (ba, bv) = category(b)?;
            let ra = rows_with(&ds.manifest, aa, &av);
            let rb = rows_with(&ds.manifest, ba, &bv);
            let n = ra.len().min(rb.len());
            let result = if n >= 2 {
                let stream = WEAT_STREAM_BASE + 2 * i as u64;
                let ra = subsample(&ra, n, config.rng_seed, stream);
                let rb = subsample(&rb, n, config.rng_seed, stream + 1);
                Some(scweat_dimensions(&inputs.dimensions, &rows_of(&ra), &rows_of(&rb), space, &wcfg)?)
            } else {
                None
            };
            weat.push(WeatEntry {
                first: a.clone(),
                second: b.clone(),
                result,
            });
        }
    }

    let k = m.k.min(ds.manifest.len());
    let queries: Vec<String> = positive.iter().map(|d| d.name.clone()).collect();
    let mut skew = Vec::new();
    let mut max_skew = Vec::new();
    let mut ndkls = Vec::new();
    if (m.skew || m.ndkl) && k > 0 && !queries.is_empty() {
        let lists = queries
            .iter()
            .map(|q| rank_by_dimension(table, q, k))
            .collect::<Result<Vec<_>>>()?;
        if m.skew {
            for label in &m.categories {
                let (attr, value) = category(label)?;
                let Some(&p) = desired[attr.as_str()].get(&value) else {
                    continue;
                };
                let per_query = lists
                    .iter()
                    .map(|l| skew_at_k(&l.labels(&ds.manifest, attr), &value, p, k))
                    .collect::<Result<Vec<_>>>()?;
                let absent = per_query.iter().any(|v| v.is_infinite());
                skew.push(SkewEntry {
                    label: label.clone(),
                    attribute: attr,
                    mean: (!absent).then(|| per_query.iter().sum::<f64>() / per_query.len() as f64),
                    per_query: per_query.iter().map(|v| v.is_finite().then_some(*v)).collect(),
                    absent_from_top_k: absent,
                });
            }
        }
        for attr in [Attribute::Gender, Attribute::Race] {
            let d = &desired[attr.as_str()];
            if m.skew {
                let per_query = lists
                    .iter()
                    .map(|l| max_skew_at_k(&l.labels(&ds.manifest, attr), d, k))
                    .collect::<Result<Vec<_>>>()?;
                max_skew.push(RankingEntry {
                    attribute: attr,
                    mean: per_query.iter().sum::<f64>() / per_query.len() as f64,
                    per_query,
                });
            }
            if m.ndkl {
                let per_query = lists
                    .iter()
                    .map(|l| ndkl(&l.labels(&ds.manifest, attr)[..k], d))
                    .collect::<Result<Vec<_>>>()?;
                ndkls.push(RankingEntry {
                    attribute: attr,
                    mean: per_query.iter().sum::<f64>() / per_query.len() as f64,
                    per_query,
                });
            }
        }
    }

    Ok(DatasetMetrics {
        dataset: ds.name.clone(),
        images: ds.manifest.len(),
        k,
        queries,
        desired,
        markedness: mark,
        mean_cossim: mcs,
        weat,
        skew,
        max_skew,
        ndkl: ndkls,
    })
}

fn metrics_report(config: &AuditConfig, details: Vec<DatasetMetrics>) -> MetricsReport {
    let m = &config.metrics;
    let cats = m.categories.clone();
    let mut markedness = m.markedness.then(|| MetricsTable::new(cats.clone()));
    let mut mean_cs = m.mean_cossim.then(|| MetricsTable::new(cats.clone()));
    let mut weat = m
        .weat
        .then(|| MetricsTable::new(m.weat_pairs.iter().map(|(a, b)| format!("{a}-{b}")).collect()));
    let mut skew = m.skew.then(|| MetricsTable::new(cats.clone()));
    let ranking_rows = vec!["gender".to_string(), "race".to_string()];
    let mut max_skew = m.skew.then(|| MetricsTable::new(ranking_rows.clone()));
    let mut ndkl_t = m.ndkl.then(|| MetricsTable::new(ranking_rows.clone()));
    for d in &details {
        if let Some(t) = &mut markedness {
            t.push_column(&d.dataset, d.markedness.iter().map(|x| x.1).collect());
        }
        if let Some(t) = &mut mean_cs {
            t.push_column(&d.dataset, d.mean_cossim.iter().map(|x| x.1).collect());
        }
        if let Some(t) = &mut weat {
            t.push_column(&d.dataset, d.weat.iter().map(|w| w.result.as_ref().map(|r| r.effect_size)).collect());
        }
        if let Some(t) = &mut skew {
            let col = cats
                .iter()
                .map(|c| d.skew.iter().find(|s| &s.label == c).and_then(|s| s.mean))
                .collect();
            t.push_column(&d.dataset, col);
        }
        let pick = |entries: &[RankingEntry]| -> Vec<Option<f64>> {
            ranking_rows
                .iter()
                .map(|r| entries.iter().find(|e| e.attribute.as_str() == r).map(|e| e.mean))
                .collect()
        };
        if let Some(t) = &mut max_skew {
            t.push_column(&d.dataset, pick(&d.max_skew));
        }
        if let Some(t) = &mut ndkl_t {
            t.push_column(&d.dataset, pick(&d.ndkl));
        }
    }
    MetricsReport {
        markedness,
        mean_cossim: mean_cs,
        weat,
        skew,
        max_skew,
        ndkl: ndkl_t,
        details,
    }
}

fn is_causalface(manifest: &DatasetManifest) -> bool {
    manifest.records.iter().all(|r| r.dataset == DatasetKind::CausalFace)
}

/// Build every enabled output in memory. `base` anchors relative paths.
pub fn build_outputs(config: &AuditConfig, base: &Path) -> Result<(AuditReport, OutputSet)> {
    config.validate()?;
    let resolved = config.resolved(base);
    let inputs = load_inputs(config, &resolved, true)?;
    let mut out = OutputSet::default();
    let mut skipped = Vec::new();
    let mut metric_details = Vec::new();

    for ds in &inputs.datasets {
        let space = inputs.space.as_ref().expect("prompt space loaded with datasets");
        let table = build_similarity_table(&ds.embeddings, &ds.manifest, &inputs.dimensions, space)?;
        let dir = PathBuf::from(&ds.name);
        out.add(dir.join("similarity.csv"), table.to_csv());
        out.add_json(
            dir.join("similarity.json"),
            &SimilarityJson {
                provenance: SimilarityProvenance {
                    dataset: ds.name.clone(),
                    lexicon_sha256: inputs.lexicon_sha256.clone(),
                    templates_sha256: inputs.templates_sha256.clone(),
                    embeddings_sha256: sha256_hex(&ds.embeddings.to_bytes()?),
                    text_embeddings_sha256: inputs.texts_sha256.clone().unwrap_or_default(),
                    fix_articles: config.fix_articles,
                },
                table: &table,
            },
        )?;
        let cf = is_causalface(&ds.manifest);

        if config.variation.enabled {
            if cf {
                let v = &config.variation;
                let mut dists = Vec::new();
                let mut csv = String::new();
                for &attr in &v.attributes {
                    let mut vc = VariationConfig::new(attr);
                    vc.resamples_per_dimension = v.resamples;
                    vc.ordinal_min_gap =
                        BTreeMap::from([(Attribute::Age, v.gap_age), (Attribute::Smiling, v.gap_smiling)]);
                    vc.rng_seed = config.rng_seed;
                    vc.dimensions = v.dimensions.clone();
                    let d = bootstrap_distribution(&ds.manifest, &table, &vc)?;
                    let body = d.to_csv();
                    if csv.is_empty() {
                        csv.push_str(&body);
                    } else {
                        csv.push_str(body.split_once('\n').map_or("", |x| x.1));
                    }
                    dists.push(d);
                }
                let comparison = if dists.len() >= 2 {
                    Some(compare_attributes(&dists, v.alternative)?)
                } else {
                    None
                };
                #[derive(Serialize)]
                struct VariationJson<'a> {
                    summaries: Vec<VariationSummary<'a>>,
                    comparison: Option<crate::variation::AttributeComparison>,
                }
                #[derive(Serialize)]
                struct VariationSummary<'a> {
                    attribute: Attribute,
                    valid_pairs: usize,
                    resamples_per_dimension: usize,
                    summary: &'a crate::stats::Summary,
                    per_dimension: Vec<(&'a str, &'a crate::stats::Summary)>,
                }
                let summaries = dists
                    .iter()
                    .map(|d| VariationSummary {
                        attribute: d.attribute,
                        valid_pairs: d.valid_pairs,
                        resamples_per_dimension: d.resamples_per_dimension,
                        summary: &d.summary,
                        per_dimension: d.per_dimension.iter().map(|p| (p.dimension.as_str(), &p.summary)).collect(),
                    })
                    .collect();
                out.add(dir.join("variation.csv"), csv);
                out.add_json(dir.join("variation.json"), &VariationJson { summaries, comparison })?;
            } else {
                skipped.push(format!("{}: variation needs CausalFace records", ds.name));
            }
        }

        if config.trends.enabled {
            let t = &config.trends;
            let dims: Vec<String> = if t.dimensions.is_empty() {
                table.dimensions.iter().map(|d| d.name.clone()).collect()
            } else {
                t.dimensions.clone()
            };
            let mut fits = Vec::new();
            for &attr in &t.attributes {
                if !cf && attr != Attribute::Age {
                    skipped.push(format!("{}: {attr} trend needs CausalFace records", ds.name));
                    continue;
                }
                fits.extend(trend_fits(&ds.manifest, &table, attr, &dims, config.rng_seed)?);
            }
            out.add_json(dir.join("trends.json"), &fits)?;
            if t.ellipses {
                out.add_json(
                    dir.join("ellipses.json"),
                    &valence_ellipses(&ds.manifest, &table, t.k_sigma, config.rng_seed)?,
                )?;
            }
            if t.confounds {
                if cf {
                    out.add_json(
                        dir.join("confounds.json"),
                        &confound_correlations(&ds.manifest, &table, &t.confound_attributes)?,
                    )?;
                } else {
                    skipped.push(format!("{}: confounds need CausalFace records", ds.name));
                }
            }
        }

        if config.valence.enabled {
            out.add_json(
                dir.join("valence_correlations.json"),
                &valence_correlations(&ds.manifest, &table)?,
            )?;
            if config.valence.neutral {
                let dims: Vec<String> = table.dimensions.iter().map(|d| d.name.clone()).collect();
                out.add_json(
                    dir.join("densities.json"),
                    &cosine_densities(&ds.manifest, &table, &dims, config.valence.kde_grid_points)?,
                )?;
                if cf {
                    out.add_json(dir.join("neutral_tests.json"), &neutral_prompt_tests(&ds.manifest, &table)?)?;
                } else {
                    skipped.push(format!("{}: neutral-prompt paired tests need seeds", ds.name));
                }
            }
        }

        if config.metrics.any() {
            let images = ds.embeddings.normalize()?;
            metric_details.push(dataset_metrics(config, ds, &images, &table, &inputs)?);
        }
    }

    if config.metrics.any() {
        out.add_json("metrics.json", &metrics_report(config, metric_details))?;
    }
    if config.valence.enabled {
        match &inputs.words {
            Some(words) => {
                let lex: Vec<&Lexicon> = inputs.lexicons.iter().collect();
                out.add_json("valence_geometry.json", &valence_geometry(&lex, words)?)?;
            }
            None => skipped.push("valence geometry needs word_embeddings".into()),
        }
    }

    let files = out
        .files()
        .iter()
        .map(|(p, b)| OutputFile {
            path: p.to_string_lossy().replace('\\', "/"),
            sha256: sha256_hex(b),
        })
        .collect();
    let report = AuditReport {
        tool: "vlbias".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        config_sha256: config.hash(),
        inputs: inputs.hashes,
        files,
        skipped,
    };
    out.add_json(REPORT_FILE, &report)?;
    Ok((report, out))
}

/// Build outputs and write them under the configured output directory.
pub fn run_pipeline(config: &AuditConfig, base: &Path) -> Result<AuditReport> {
    let (report, out) = build_outputs(config, base)?;
    out.commit(&config.resolved(base).output_dir)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupCount {
    pub group: String,
    pub images: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub name: String,
    pub images: usize,
    pub dim: usize,
    pub kept_after_age_filter: usize,
    pub groups: Vec<GroupCount>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IngestSummary {
    pub inputs: BTreeMap<String, String>,
    pub datasets: Vec<DatasetSummary>,
    pub dimensions: Vec<String>,
}

/// Load and validate every configured input without scoring anything.
pub fn ingest(config: &AuditConfig, base: &Path) -> Result<IngestSummary> {
    config.validate()?;
    let resolved = config.resolved(base);
    let inputs = load_inputs(config, &resolved, false)?;
    let mut datasets = Vec::new();
    for (ds, input) in inputs.datasets.iter().zip(&resolved.datasets) {
        let raw = parse_manifest(&fs::read_to_string(&input.manifest).map_err(|e| Error::io(&input.manifest, e))?)?;
        let groups = group_by(&ds.manifest, &[GroupKey::Attr(Attribute::Race), GroupKey::Attr(Attribute::Gender)])?
            .into_iter()
            .map(|g| GroupCount {
                group: g.label(),
                images: g.rows.len(),
            })
            .collect();
        datasets.push(DatasetSummary {
            name: ds.name.clone(),
            images: raw.len(),
            dim: ds.embeddings.dim(),
            kept_after_age_filter: ds.manifest.len(),
            groups,
        });
    }
    Ok(IngestSummary {
        inputs: inputs.hashes,
        datasets,
        dimensions: inputs.dimensions.iter().map(|d| d.name.clone()).collect(),
    })
}
