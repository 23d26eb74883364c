//! Audit configuration, read from TOML or JSON. Every section is off unless
//! enabled, so an empty config only produces similarity tables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datamodel::Attribute;
use crate::error::{Error, Result};
use crate::stats::Alternative;
use crate::variation::{DEFAULT_DIMENSIONS, DEFAULT_ORDINAL_GAP, DEFAULT_RESAMPLES, VARIABLE_ATTRIBUTES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetInput {
    pub name: String,
    pub manifest: PathBuf,
    pub embeddings: PathBuf,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LexiconChoice {
    Scm,
    Abc,
    #[default]
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub weat: bool,
    pub markedness: bool,
    pub mean_cossim: bool,
    pub skew: bool,
    pub ndkl: bool,
    pub k: usize,
    pub permutations: usize,
    pub exact_limit: u64,
    /// Delta degrees of freedom of the effect-size std.
    pub std_ddof: usize,
    /// Image categories (race or gender labels) reported as table rows.
    pub categories: Vec<String>,
    pub weat_pairs: Vec<(String, String)>,
    /// Desired distribution per attribute ("race", "gender"); uniform over
    /// observed values when absent.
    pub desired: BTreeMap<String, BTreeMap<String, f64>>,
}

impl Default for MetricsSection {
    fn default() -> Self {
        let s = |v: &str| v.to_string();
        MetricsSection {
            weat: false,
            markedness: false,
            mean_cossim: false,
            skew: false,
            ndkl: false,
            k: crate::fairmetrics::DEFAULT_K,
            permutations: 10_000,
            exact_limit: 20_000,
            std_ddof: 1,
            categories: ["white", "black", "asian", "male", "female"].map(s).to_vec(),
            weat_pairs: vec![
                (s("white"), s("black")),
                (s("asian"), s("black")),
                (s("asian"), s("white")),
                (s("male"), s("female")),
            ],
            desired: BTreeMap::new(),
        }
    }
}

impl MetricsSection {
    pub fn any(&self) -> bool {
        self.weat || self.markedness || self.mean_cossim || self.skew || self.ndkl
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VariationSection {
    pub enabled: bool,
    pub attributes: Vec<Attribute>,
    pub resamples: usize,
    pub gap_age: f64,
    pub gap_smiling: f64,
    pub dimensions: Vec<String>,
    pub alternative: Alternative,
}

impl Default for VariationSection {
    fn default() -> Self {
        VariationSection {
            enabled: false,
            attributes: VARIABLE_ATTRIBUTES.to_vec(),
            resamples: DEFAULT_RESAMPLES,
            gap_age: DEFAULT_ORDINAL_GAP,
            gap_smiling: DEFAULT_ORDINAL_GAP,
            dimensions: DEFAULT_DIMENSIONS.iter().map(|s| s.to_string()).collect(),
            alternative: Alternative::TwoSided,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrendsSection {
    pub enabled: bool,
    pub attributes: Vec<Attribute>,
    /// Dimensions to fit; every table dimension when empty.
    pub dimensions: Vec<String>,
    pub ellipses: bool,
    pub k_sigma: f64,
    pub confounds: bool,
    pub confound_attributes: Vec<Attribute>,
}

impl Default for TrendsSection {
    fn default() -> Self {
        TrendsSection {
            enabled: false,
            attributes: vec![Attribute::Age, Attribute::Smiling],
            dimensions: Vec::new(),
            ellipses: true,
            k_sigma: 2.0,
            confounds: true,
            confound_attributes: vec![Attribute::Smiling, Attribute::Lighting, Attribute::Pose],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValenceSection {
    pub enabled: bool,
    /// Neutral-prompt densities and seed-paired tests.
    pub neutral: bool,
    pub kde_grid_points: usize,
}

impl Default for ValenceSection {
    fn default() -> Self {
        ValenceSection {
            enabled: false,
            neutral: true,
            kde_grid_points: 256,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    #[serde(default)]
    pub datasets: Vec<DatasetInput>,
    /// Prompt embeddings (ids are prompt strings).
    #[serde(default)]
    pub text_embeddings: Option<PathBuf>,
    /// Bare adjective embeddings for the valence geometry.
    #[serde(default)]
    pub word_embeddings: Option<PathBuf>,
    #[serde(default)]
    pub lexicon: LexiconChoice,
    /// Lexicon JSON files replacing the embedded ones.
    #[serde(default)]
    pub lexicon_files: Vec<PathBuf>,
    #[serde(default)]
    pub templates: Option<PathBuf>,
    #[serde(default)]
    pub fix_articles: bool,
    #[serde(default = "default_min_age")]
    pub min_age: f64,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub variation: VariationSection,
    #[serde(default)]
    pub trends: TrendsSection,
    #[serde(default)]
    pub valence: ValenceSection,
}

fn default_min_age() -> f64 {
    20.0
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("audit-out")
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            datasets: Vec::new(),
            text_embeddings: None,
            word_embeddings: None,
            lexicon: LexiconChoice::Both,
            lexicon_files: Vec::new(),
            templates: None,
            fix_articles: false,
            min_age: default_min_age(),
            rng_seed: 0,
            output_dir: default_output_dir(),
            metrics: MetricsSection::default(),
            variation: VariationSection::default(),
            trends: TrendsSection::default(),
            valence: ValenceSection::default(),
        }
    }
}

impl AuditConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// JSON if the text starts with `{`, TOML otherwise.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            Self::from_json(text)
        } else {
            Self::from_toml(text)
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json(&text),
            Some("toml") => Self::from_toml(&text),
            _ => Self::parse(&text),
        }
    }

    /// Copy with relative input and output paths taken relative to `base`.
    pub fn resolved(&self, base: &Path) -> Self {
        let fix = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
        let mut c = self.clone();
        for d in &mut c.datasets {
            d.manifest = fix(&d.manifest);
            d.embeddings = fix(&d.embeddings);
        }
        c.text_embeddings = c.text_embeddings.as_ref().map(fix);
        c.word_embeddings = c.word_embeddings.as_ref().map(fix);
        c.lexicon_files = c.lexicon_files.iter().map(fix).collect();
        c.templates = c.templates.as_ref().map(fix);
        c.output_dir = fix(&c.output_dir);
        c
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = std::collections::BTreeSet::new();
        for d in &self.datasets {
            if d.name.is_empty() || d.name.contains(['/', '\\']) || d.name.starts_with('.') {
                return Err(Error::Config(format!("invalid dataset name {:?}", d.name)));
            }
            if !names.insert(d.name.as_str()) {
                return Err(Error::Config(format!("dataset {:?} listed twice", d.name)));
            }
        }
        if self.metrics.k == 0 {
            return Err(Error::Config("metrics.k must be >= 1".into()));
        }
        if self.metrics.permutations == 0 {
            return Err(Error::Config("metrics.permutations must be >= 1".into()));
        }
        if self.variation.resamples == 0 {
            return Err(Error::Config("variation.resamples must be >= 1".into()));
        }
        for g in [self.variation.gap_age, self.variation.gap_smiling] {
            if !(g.is_finite() && g >= 0.0) {
                return Err(Error::Config(format!("variation gaps must be >= 0, got {g}")));
            }
        }
        if self.trends.k_sigma.is_nan() || self.trends.k_sigma <= 0.0 {
            return Err(Error::Config("trends.k_sigma must be positive".into()));
        }
        if self.valence.kde_grid_points < 2 {
            return Err(Error::Config("valence.kde_grid_points must be >= 2".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// Hex SHA-256 of the compact JSON serialization.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
