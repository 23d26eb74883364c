//! Deterministic synthetic fixtures shaped like the CausalFace layout: per
//! seed, six race x gender prototypes, each with 9 age, 9 smiling, 7 lighting
//! and 4 pose variants (30 images per prototype, 180 per seed).

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::datamodel::{
    expand_prompts, AttributeSchema, DatasetKind, DatasetManifest, Gender, ImageRecord, Lexicon, PromptOptions,
    PromptTemplateSet, Race, Valence,
};
use crate::embedio::EmbeddingSet;
use crate::error::{Error, Result};
use crate::stats::rng::stream_rng;

pub const AGE_LEVELS: [f64; 10] = [-1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5];
pub const SMILING_LEVELS: [f64; 10] = [-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0, 2.5];
pub const LIGHTING_LEVELS: [f64; 8] = [-1.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
pub const POSE_LEVELS: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];

/// Prototype levels: base age, neutral expression, even lighting, frontal pose.
pub const BASE_AGE: f64 = 0.0;
pub const BASE_SMILING: f64 = 0.0;
pub const BASE_LIGHTING: f64 = -1.0;
pub const BASE_POSE: f64 = 0.0;

pub const RACES: [Race; 3] = [Race::Asian, Race::Black, Race::White];
pub const GENDERS: [Gender; 2] = [Gender::Female, Gender::Male];

pub fn causalface_schema() -> AttributeSchema {
    AttributeSchema {
        dataset: Some(vec![DatasetKind::CausalFace]),
        race: RACES.to_vec(),
        gender: GENDERS.to_vec(),
        age: Some(AGE_LEVELS.to_vec()),
        smiling: Some(SMILING_LEVELS.to_vec()),
        lighting: Some(LIGHTING_LEVELS.to_vec()),
        pose: Some(POSE_LEVELS.to_vec()),
    }
}

/// The 30 (age, smiling, lighting, pose) level tuples of one prototype family,
/// prototype first.
pub fn variant_levels() -> Vec<(&'static str, [f64; 4])> {
    let base = [BASE_AGE, BASE_SMILING, BASE_LIGHTING, BASE_POSE];
    let mut out = vec![("proto", base)];
    let families: [(&'static str, usize, &[f64]); 4] = [
        ("age", 0, &AGE_LEVELS),
        ("smiling", 1, &SMILING_LEVELS),
        ("lighting", 2, &LIGHTING_LEVELS),
        ("pose", 3, &POSE_LEVELS),
    ];
    for (name, slot, levels) in families {
        for &level in levels {
            if level == base[slot] {
                continue;
            }
            let mut v = base;
            v[slot] = level;
            out.push((name, v));
        }
    }
    out
}

pub fn causalface_records(seeds: &[u64]) -> Vec<ImageRecord> {
    let variants = variant_levels();
    let mut records = Vec::with_capacity(seeds.len() * 180);
    for &seed in seeds {
        for race in RACES {
            for gender in GENDERS {
                for (family, [age, smiling, lighting, pose]) in &variants {
                    let level = match *family {
                        "age" => *age,
                        "smiling" => *smiling,
                        "lighting" => *lighting,
                        "pose" => *pose,
                        _ => 0.0,
                    };
                    let id = if *family == "proto" {
                        format!("s{seed:03}_{}_{}_proto", race.as_str(), gender.as_str())
                    } else {
                        format!(
                            "s{seed:03}_{}_{}_{family}{level:+}",
                            race.as_str(),
                            gender.as_str()
                        )
                    };
                    records.push(ImageRecord {
                        id,
                        dataset: DatasetKind::CausalFace,
                        seed: Some(seed),
                        race,
                        gender,
                        age: Some(*age),
                        smiling: Some(*smiling),
                        lighting: Some(*lighting),
                        pose: Some(*pose),
                    });
                }
            }
        }
    }
    records
}

pub fn causalface_manifest(seeds: &[u64]) -> DatasetManifest {
    DatasetManifest::new(causalface_schema(), causalface_records(seeds))
        .expect("synthetic manifest is valid")
}

fn random_vec(dim: usize, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, stream);
    (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

fn axpy(acc: &mut [f64], a: f64, x: &[f64]) {
    acc.iter_mut().zip(x).for_each(|(y, x)| *y += a * x);
}

/// Words embedded as prompts besides lexicon adjectives.
pub const DEMO_CATEGORY_WORDS: [&str; 5] = ["white", "black", "asian", "male", "female"];

/// A small CausalFace-shaped dataset with planted structure: image vectors mix
/// a shared component, race and gender offsets, per-prototype identity and
/// linear age and smiling directions; positive adjectives lean toward smiling.
pub struct DemoFixture {
    pub manifest: DatasetManifest,
    pub images: EmbeddingSet,
    pub texts: EmbeddingSet,
    pub words: EmbeddingSet,
}

pub fn demo_fixture(seeds: &[u64], dim: usize, rng_seed: u64) -> Result<DemoFixture> {
    if dim < 4 {
        return Err(Error::Config("demo embeddings need dim >= 4".into()));
    }
    let manifest = causalface_manifest(seeds);
    let mut stream = 0u64;
    let mut next = || {
        stream += 1;
        random_vec(dim, rng_seed, stream)
    };
    let shared = unit(next());
    let age_dir = unit(next());
    let smile_dir = unit(next());
    let races: Vec<Vec<f64>> = RACES.iter().map(|_| unit(next())).collect();
    let genders: Vec<Vec<f64>> = GENDERS.iter().map(|_| unit(next())).collect();

    const IDENTITY_STREAM: u64 = 1 << 32;
    const NOISE_STREAM: u64 = 2 << 32;
    let mut rows = Vec::with_capacity(manifest.len());
    for (i, r) in manifest.records.iter().enumerate() {
        let ri = RACES.iter().position(|x| *x == r.race).unwrap_or(0);
        let gi = GENDERS.iter().position(|x| *x == r.gender).unwrap_or(0);
        let proto = r.seed.unwrap_or(0) * 6 + (ri * 2 + gi) as u64;
        let mut v = vec![0.0; dim];
        axpy(&mut v, 1.0, &shared);
        axpy(&mut v, 0.35, &races[ri]);
        axpy(&mut v, 0.25, &genders[gi]);
        axpy(&mut v, 0.3, &unit(random_vec(dim, rng_seed, IDENTITY_STREAM + proto)));
        axpy(&mut v, 0.08 * r.age.unwrap_or(0.0), &age_dir);
        axpy(&mut v, 0.06 * r.smiling.unwrap_or(0.0), &smile_dir);
        axpy(&mut v, 0.05, &unit(random_vec(dim, rng_seed, NOISE_STREAM + i as u64)));
        rows.push(unit(v));
    }
    let images = EmbeddingSet::from_rows(manifest.ids().map(str::to_string).collect(), &rows)?;

    const WORD_STREAM: u64 = 3 << 32;
    let lexicons = [Lexicon::scm(), Lexicon::abc()];
    let mut word_vec = std::collections::BTreeMap::new();
    for lex in &lexicons {
        for d in &lex.dimensions {
            for a in &d.adjectives {
                let k = word_vec.len() as u64;
                word_vec.entry(a.clone()).or_insert_with(|| {
                    let mut v = unit(random_vec(dim, rng_seed, WORD_STREAM + k));
                    let lean = match d.valence {
                        Valence::Positive => 0.4,
                        Valence::Negative => -0.4,
                        _ => 0.0,
                    };
                    axpy(&mut v, lean, &smile_dir);
                    unit(v)
                });
            }
        }
    }
    for w in DEMO_CATEGORY_WORDS {
        let k = word_vec.len() as u64;
        word_vec
            .entry(w.to_string())
            .or_insert_with(|| unit(random_vec(dim, rng_seed, WORD_STREAM + k)));
    }
    let (word_ids, word_rows): (Vec<String>, Vec<Vec<f64>>) = word_vec.clone().into_iter().unzip();
    let words = EmbeddingSet::from_rows(word_ids, &word_rows)?;

    // Prompt = shared photo component + word vector + template jitter.
    const TEMPLATE_STREAM: u64 = 4 << 32;
    let templates = PromptTemplateSet::default();
    let options = PromptOptions::default();
    let jitter: Vec<Vec<f64>> = (0..templates.len())
        .map(|t| unit(random_vec(dim, rng_seed, TEMPLATE_STREAM + t as u64)))
        .collect();
    let mut texts = std::collections::BTreeMap::new();
    for (t, jit) in jitter.iter().enumerate() {
        let mut v = vec![0.0; dim];
        axpy(&mut v, 1.0, &shared);
        axpy(&mut v, 0.3, jit);
        texts.insert(templates.neutral(t), unit(v));
        for (w, wv) in &word_vec {
            let mut v = vec![0.0; dim];
            axpy(&mut v, 1.0, &shared);
            axpy(&mut v, 0.3, jit);
            axpy(&mut v, 0.8, wv);
            texts.insert(templates.fill(t, w, options), unit(v));
        }
    }
    for lex in &lexicons {
        for p in expand_prompts(lex, &templates, options)?.unique_texts() {
            if !texts.contains_key(&p) {
                return Err(Error::MissingPrompt(p));
            }
        }
    }
    let (text_ids, text_rows): (Vec<String>, Vec<Vec<f64>>) = texts.into_iter().unzip();
    let texts = EmbeddingSet::from_rows(text_ids, &text_rows)?;
    Ok(DemoFixture {
        manifest,
        images,
        texts,
        words,
    })
}

/// Config for a demo directory with every analysis enabled at small sizes.
pub const DEMO_CONFIG_TOML: &str = r#"output_dir = "audit-out"
text_embeddings = "texts.emb"
word_embeddings = "words.emb"
rng_seed = 7

[[datasets]]
name = "causalface"
manifest = "manifest.json"
embeddings = "images.emb"

[metrics]
weat = true
markedness = true
mean_cossim = true
skew = true
ndkl = true
k = 100
permutations = 2000

[variation]
enabled = true
resamples = 200

[trends]
enabled = true

[valence]
enabled = true
"#;

/// Write a demo fixture and `audit.toml` into `dir`; returns the config path.
pub fn write_demo(dir: &Path, seeds: &[u64], dim: usize, rng_seed: u64) -> Result<PathBuf> {
    let fx = demo_fixture(seeds, dim, rng_seed)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let put = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
    };
    put("manifest.json", fx.manifest.to_json().into_bytes())?;
    put("images.emb", fx.images.to_bytes()?)?;
    put("texts.emb", fx.texts.to_bytes()?)?;
    put("words.emb", fx.words.to_bytes()?)?;
    put("audit.toml", DEMO_CONFIG_TOML.as_bytes().to_vec())?;
    Ok(dir.join("audit.toml"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirty_variants_per_prototype() {
        let v = variant_levels();
        assert_eq!(v.len(), 30);
        let count = |f: &str| v.iter().filter(|(n, _)| *n == f).count();
        assert_eq!(
            (count("age"), count("smiling"), count("lighting"), count("pose")),
            (9, 9, 7, 4)
        );
    }

    #[test]
    fn hundred_seeds_make_18000_images() {
        let seeds: Vec<u64> = (0..100).collect();
        assert_eq!(causalface_records(&seeds).len(), 18_000);
    }
}
