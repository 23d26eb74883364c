//! Brute-force reference implementations and random fixtures shared by the
//! integration tests. Everything here is written from the metric definitions
//! with plain loops, independent of the library's code paths.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use vlbias::datamodel::{Dimension, PromptOptions, PromptTemplateSet, Valence};
use vlbias::embedio::EmbeddingSet;
use vlbias::simcore::PromptSpace;
use vlbias::stats::rng::stream_rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    stream_rng(seed, 0)
}

pub fn random_vec(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        if norm(&v) > 1e-3 {
            return v;
        }
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn unit(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    v.iter().map(|x| x / n).collect()
}

/// Cosine from scratch: normalizes both sides every call.
pub fn cos(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    dot / (norm(u) * norm(v))
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    a == b || (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-6)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }
}

const TEMPLATE_POOL: [&str; 5] = [
    "A photo of a <adjective> person.",
    "A <adjective> person.",
    "This is a  <adjective> person .",
    "<adjective> face",
    "a cropped photo of the <adjective> one",
];

/// Random lexicon, templates and raw (unnormalized) prompt embeddings.
pub struct PromptFixture {
    pub dims: Vec<Dimension>,
    pub templates: PromptTemplateSet,
    pub words: Vec<String>,
    /// Raw prompt vectors keyed by prompt text.
    pub texts: BTreeMap<String, Vec<f64>>,
    pub dim: usize,
}

impl PromptFixture {
    pub fn random(rng: &mut impl Rng, n_dims: usize, max_adj: usize, n_templates: usize, dim: usize) -> Self {
        let mut pool = TEMPLATE_POOL.to_vec();
        pool.shuffle(rng);
        let templates =
            PromptTemplateSet::new(pool[..n_templates].iter().map(|s| s.to_string()).collect()).unwrap();
        let mut dims = Vec::new();
        let mut counter = 0;
        for d in 0..n_dims {
            let n = rng.random_range(1..=max_adj);
            let adjectives = (0..n)
                .map(|_| {
                    counter += 1;
                    format!("adj{counter}")
                })
                .collect();
            let valence = if d % 2 == 0 { Valence::Positive } else { Valence::Negative };
            dims.push(Dimension {
                name: format!("D{d}"),
                valence,
                adjectives,
            });
        }
        let words = vec!["white".to_string(), "black".to_string()];
        let mut texts = BTreeMap::new();
        let opts = PromptOptions::default();
        for t in 0..templates.len() {
            texts.insert(templates.neutral(t), random_vec(rng, dim));
            for w in dims.iter().flat_map(|d| d.adjectives.iter()).chain(&words) {
                texts.insert(templates.fill(t, w, opts), random_vec(rng, dim));
            }
        }
        PromptFixture {
            dims,
            templates,
            words,
            texts,
            dim,
        }
    }

    pub fn embedding_set(&self) -> EmbeddingSet {
        let (ids, rows): (Vec<String>, Vec<Vec<f64>>) = self.texts.clone().into_iter().unzip();
        EmbeddingSet::from_rows(ids, &rows).unwrap()
    }

    pub fn space(&self) -> PromptSpace {
        PromptSpace::new(&self.embedding_set(), self.templates.clone(), PromptOptions::default()).unwrap()
    }

    fn prompt(&self, t: usize, word: &str) -> &[f64] {
        &self.texts[&self.templates.fill(t, word, PromptOptions::default())]
    }

    fn neutral(&self, t: usize) -> &[f64] {
        &self.texts[&self.templates.neutral(t)]
    }

    /// Mean cosine over every (image, adjective, template) triple.
    pub fn dim_similarity(&self, images: &[Vec<f64>], d: &Dimension) -> f64 {
        let mut sum = 0.0;
        let mut n = 0.0;
        for i in images {
            for a in &d.adjectives {
                for t in 0..self.templates.len() {
                    sum += cos(i, self.prompt(t, a));
                    n += 1.0;
                }
            }
        }
        sum / n
    }

    /// Mean over adjectives of the template-mean (adjective - neutral) cosine.
    pub fn delta(&self, image: &[f64], d: &Dimension) -> f64 {
        let nt = self.templates.len() as f64;
        let mut outer = 0.0;
        for a in &d.adjectives {
            let mut inner = 0.0;
            for t in 0..self.templates.len() {
                inner += cos(image, self.prompt(t, a)) - cos(image, self.neutral(t));
            }
            outer += inner / nt;
        }
        outer / d.adjectives.len() as f64
    }

    pub fn neutral_mean(&self, image: &[f64]) -> f64 {
        (0..self.templates.len()).map(|t| cos(image, self.neutral(t))).sum::<f64>() / self.templates.len() as f64
    }

    pub fn word_mean(&self, image: &[f64], word: &str) -> f64 {
        (0..self.templates.len()).map(|t| cos(image, self.prompt(t, word))).sum::<f64>()
            / self.templates.len() as f64
    }

    pub fn markedness(&self, images: &[Vec<f64>], word: &str) -> f64 {
        let hits = images
            .iter()
            .filter(|i| self.neutral_mean(i) > self.word_mean(i, word))
            .count();
        100.0 * hits as f64 / images.len() as f64
    }

    /// Pooled mean over every (image, adjective, template) triple of `dims`.
    pub fn mean_cossim(&self, images: &[Vec<f64>], dims: &[&Dimension]) -> f64 {
        let mut sum = 0.0;
        let mut n = 0.0;
        for d in dims {
            for i in images {
                for a in &d.adjectives {
                    for t in 0..self.templates.len() {
                        sum += cos(i, self.prompt(t, a));
                        n += 1.0;
                    }
                }
            }
        }
        100.0 * sum / n
    }
}

pub fn skew(labels: &[String], value: &str, desired: f64, k: usize) -> f64 {
    let hits = labels[..k].iter().filter(|l| *l == value).count();
    ((hits as f64 / k as f64) / desired).ln()
}

pub fn max_skew(labels: &[String], desired: &BTreeMap<String, f64>, k: usize) -> f64 {
    desired
        .iter()
        .map(|(v, p)| skew(labels, v, *p, k))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn ndkl(labels: &[String], desired: &BTreeMap<String, f64>) -> f64 {
    let mut num = 0.0;
    let mut z = 0.0;
    for i in 1..=labels.len() {
        let mut kl = 0.0;
        for (v, q) in desired {
            let p = labels[..i].iter().filter(|l| *l == v).count() as f64 / i as f64;
            if p > 0.0 {
                kl += p * (p / q).ln();
            }
        }
        let w = 1.0 / ((i + 1) as f64).log2();
        num += w * kl;
        z += w;
    }
    num / z
}

pub struct WeatOracle {
    pub statistic: f64,
    pub effect_size: f64,
    pub p_exact: f64,
}

/// SC-WEAT over raw vectors with exhaustive enumeration of equal partitions.
pub fn scweat(d: &[Vec<f64>], a: &[Vec<f64>], b: &[Vec<f64>]) -> WeatOracle {
    let all: Vec<&Vec<f64>> = a.iter().chain(b).collect();
    let n = all.len();
    let k = a.len();
    let s_of = |mask: u32| -> f64 {
        let mut total = 0.0;
        for t in d {
            let (mut sa, mut sb) = (0.0, 0.0);
            for (j, x) in all.iter().enumerate() {
                if mask & (1 << j) != 0 {
                    sa += cos(t, x);
                } else {
                    sb += cos(t, x);
                }
            }
            total += sa / k as f64 - sb / (n - k) as f64;
        }
        total / d.len() as f64
    };
    let mut es = 0.0;
    for t in d {
        let c: Vec<f64> = all.iter().map(|x| cos(t, x)).collect();
        let mean = c.iter().sum::<f64>() / n as f64;
        let sd = (c.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let s_d = c[..k].iter().sum::<f64>() / k as f64 - c[k..].iter().sum::<f64>() / (n - k) as f64;
        es += s_d / sd;
    }
    let observed_mask = (1u32 << k) - 1;
    let observed = s_of(observed_mask);
    let threshold = observed + 1e-12 * (1.0 + observed.abs());
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize == k {
            total += 1;
            if s_of(mask) > threshold {
                hits += 1;
            }
        }
    }
    WeatOracle {
        statistic: observed,
        effect_size: es / d.len() as f64,
        p_exact: (hits as f64 / total as f64).max(f64::MIN_POSITIVE),
    }
}

/// Random labels over `values`, each value present at least once if `n` allows.
pub fn random_labels(rng: &mut impl Rng, values: &[String], n: usize) -> Vec<String> {
    let mut out: Vec<String> = values.iter().take(n).cloned().collect();
    while out.len() < n {
        out.push(values[rng.random_range(0..values.len())].clone());
    }
    out.shuffle(rng);
    out
}

pub fn random_distribution(rng: &mut impl Rng, values: &[String]) -> BTreeMap<String, f64> {
    let w: Vec<f64> = values.iter().map(|_| 0.05 + rng.random::<f64>()).collect();
    let total: f64 = w.iter().sum();
    let mut d: BTreeMap<String, f64> = values.iter().cloned().zip(w.iter().map(|x| x / total)).collect();
    // Absorb rounding so the masses sum to 1 within 1e-15.
    let s: f64 = d.values().sum();
    if let Some(first) = d.values_mut().next() {
        *first += 1.0 - s;
    }
    d
}

/// Largest relative error per metric between library and oracle on one
/// random fixture (at most 50 ranked items and 5 attribute values).
#[derive(Debug, Default, Clone, Copy)]
pub struct MetricErrors {
    pub skew: f64,
    pub max_skew: f64,
    pub ndkl: f64,
    pub weat_statistic: f64,
    pub weat_effect_size: f64,
    pub weat_p: f64,
    pub markedness: f64,
    pub mean_cossim: f64,
}

impl MetricErrors {
    pub fn max(&self) -> f64 {
        [
            self.skew,
            self.max_skew,
            self.ndkl,
            self.weat_statistic,
            self.weat_effect_size,
            self.weat_p,
            self.markedness,
            self.mean_cossim,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn inf_aware_err(a: f64, b: f64) -> f64 {
    if a.is_infinite() || b.is_infinite() {
        if a == b {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        rel_err(a, b)
    }
}

pub fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
    v.iter().map(|x| x.as_slice()).collect()
}

pub fn metric_fixture(seed: u64) -> MetricErrors {
    use vlbias::fairmetrics as fm;
    let mut r = stream_rng(seed, 1);
    let mut e = MetricErrors::default();

    // Ranked labels.
    let n_values = r.random_range(2..=5);
    let values: Vec<String> = (0..n_values).map(|i| format!("v{i}")).collect();
    let n = r.random_range(n_values..=50);
    let labels = random_labels(&mut r, &values, n);
    let desired = random_distribution(&mut r, &values);
    let k = r.random_range(1..=n);
    for v in &values {
        let got = fm::skew_at_k(&labels, v, desired[v], k).unwrap();
        e.skew = e.skew.max(inf_aware_err(got, skew(&labels, v, desired[v], k)));
    }
    e.max_skew = inf_aware_err(
        fm::max_skew_at_k(&labels, &desired, k).unwrap(),
        max_skew(&labels, &desired, k),
    );
    e.ndkl = rel_err(fm::ndkl(&labels, &desired).unwrap(), ndkl(&labels, &desired));

    // SC-WEAT with exhaustive partitions.
    let dim = 8;
    let half = r.random_range(2..=5);
    let n_d = r.random_range(1..=4);
    let d: Vec<Vec<f64>> = (0..n_d).map(|_| random_vec(&mut r, dim)).collect();
    let a: Vec<Vec<f64>> = (0..half).map(|_| random_vec(&mut r, dim)).collect();
    let b: Vec<Vec<f64>> = (0..half).map(|_| random_vec(&mut r, dim)).collect();
    let oracle = scweat(&d, &a, &b);
    let units = |x: &[Vec<f64>]| x.iter().map(|v| unit(v)).collect::<Vec<_>>();
    let (du, au, bu) = (units(&d), units(&a), units(&b));
    let got = fm::scweat(&refs(&du), &refs(&au), &refs(&bu), &fm::WeatConfig::default()).unwrap();
    assert!(got.exact);
    e.weat_statistic = rel_err(got.statistic, oracle.statistic);
    e.weat_effect_size = rel_err(got.effect_size, oracle.effect_size);
    e.weat_p = rel_err(got.p_value, oracle.p_exact);

    // Prompt-based metrics.
    let (n_dims, n_templates) = (r.random_range(1..=3), r.random_range(1..=4));
    let fx = PromptFixture::random(&mut r, n_dims, 3, n_templates, dim);
    let space = fx.space();
    let n_img = r.random_range(1..=20);
    let images: Vec<Vec<f64>> = (0..n_img).map(|_| random_vec(&mut r, dim)).collect();
    let imgs_u = units(&images);
    let img_refs = refs(&imgs_u);
    for w in &fx.words {
        e.markedness = e
            .markedness
            .max(rel_err(fm::markedness(&img_refs, w, &space).unwrap(), fx.markedness(&images, w)));
    }
    let positive: Vec<&Dimension> = fx.dims.iter().filter(|d| d.valence == Valence::Positive).collect();
    let owned: Vec<Dimension> = positive.iter().map(|d| (*d).clone()).collect();
    e.mean_cossim = rel_err(
        fm::mean_cossim(&img_refs, &owned, &space).unwrap(),
        fx.mean_cossim(&images, &positive),
    );
    e
}

/// Random image rows aligned with `manifest`, scored against `fx`.
pub fn random_table(
    manifest: &vlbias::datamodel::DatasetManifest,
    fx: &PromptFixture,
    seed: u64,
) -> (Vec<Vec<f64>>, vlbias::simcore::SimilarityTable) {
    let mut r = stream_rng(seed, 2);
    let rows: Vec<Vec<f64>> = (0..manifest.len()).map(|_| random_vec(&mut r, fx.dim)).collect();
    let set = EmbeddingSet::from_rows(manifest.ids().map(str::to_string).collect(), &rows).unwrap();
    let table = vlbias::simcore::build_similarity_table(&set, manifest, &fx.dims, &fx.space()).unwrap();
    (rows, table)
}
