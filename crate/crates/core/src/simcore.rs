//! Image-text cosine similarity over social-perception lexicons.
//!
//! A dimension's raw similarity for an image is the mean cosine over every
//! (adjective, template) prompt. The delta similarity subtracts, template by
//! template, the cosine to the neutral prompt (the template with the
//! adjective removed) before averaging, first over templates and then over
//! adjectives.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::datamodel::{DatasetManifest, Dimension, PromptOptions, PromptTemplateSet};
use crate::embedio::{validate_alignment, EmbeddingSet};
use crate::error::{Error, Result};

/// Cosine of two unit vectors, i.e. their dot product clamped to [-1, 1].
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    Ok(dot(u, v).clamp(-1.0, 1.0))
}

#[inline]
pub(crate) fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Normalized text embeddings addressed by prompt string, together with the
/// templates used to build prompts.
#[derive(Clone, Debug)]
pub struct PromptSpace {
    texts: EmbeddingSet,
    index: HashMap<String, usize>,
    templates: PromptTemplateSet,
    options: PromptOptions,
}

impl PromptSpace {
    pub fn new(
        texts: &EmbeddingSet,
        templates: PromptTemplateSet,
        options: PromptOptions,
    ) -> Result<Self> {
        templates.validate()?;
        let texts = texts.normalize()?;
        let mut index = HashMap::with_capacity(texts.count());
        for (i, id) in texts.ids().iter().enumerate() {
            index.entry(id.clone()).or_insert(i);
        }
        Ok(PromptSpace {
            texts,
            index,
            templates,
            options,
        })
    }

    pub fn dim(&self) -> usize {
        self.texts.dim()
    }

    pub fn templates(&self) -> &PromptTemplateSet {
        &self.templates
    }

    pub fn options(&self) -> PromptOptions {
        self.options
    }

    pub fn contains(&self, prompt: &str) -> bool {
        self.index.contains_key(prompt)
    }

    fn row_of(&self, prompt: &str) -> Result<usize> {
        self.index
            .get(prompt)
            .copied()
            .ok_or_else(|| Error::MissingPrompt(prompt.to_string()))
    }

    /// Unit embedding of a literal prompt string.
    pub fn embedding(&self, prompt: &str) -> Result<&[f64]> {
        Ok(self.texts.row(self.row_of(prompt)?))
    }

    /// Rows of `word` spliced into each template, in template order.
    pub fn word_rows(&self, word: &str) -> Result<Vec<usize>> {
        (0..self.templates.len())
            .map(|t| self.row_of(&self.templates.fill(t, word, self.options)))
            .collect()
    }

    pub fn neutral_rows(&self) -> Result<Vec<usize>> {
        (0..self.templates.len())
            .map(|t| self.row_of(&self.templates.neutral(t)))
            .collect()
    }

    pub fn row(&self, row: usize) -> &[f64] {
        self.texts.row(row)
    }

    /// Prompt rows for every adjective of `dim`, `[adjective][template]`.
    pub fn resolve(&self, dim: &Dimension) -> Result<ResolvedDimension> {
        let rows = dim
            .adjectives
            .iter()
            .map(|a| self.word_rows(a))
            .collect::<Result<Vec<_>>>()?;
        Ok(ResolvedDimension {
            name: dim.name.clone(),
            rows,
        })
    }

    /// Template-mean cosine between an image and `word` spliced into every
    /// template (e.g. "A photo of a white person.").
    pub fn word_similarity(&self, image: &[f64], word: &str) -> Result<f64> {
        let rows = self.word_rows(word)?;
        self.mean_cos(image, &rows)
    }

    /// Template-mean cosine between an image and the neutral prompts.
    pub fn neutral_similarity(&self, image: &[f64]) -> Result<f64> {
        let rows = self.neutral_rows()?;
        self.mean_cos(image, &rows)
    }

    fn mean_cos(&self, image: &[f64], rows: &[usize]) -> Result<f64> {
        let mut sum = 0.0;
        for &r in rows {
            sum += cosine(image, self.texts.row(r))?;
        }
        Ok(sum / rows.len() as f64)
    }
}

#[derive(Clone, Debug)]
pub struct ResolvedDimension {
    pub name: String,
    /// `[adjective][template]` text rows.
    pub rows: Vec<Vec<usize>>,
}

/// Mean cosine over all (image, adjective, template) triples, summed in
/// image, adjective, template order. `images` must be unit vectors.
pub fn dim_similarity(images: &[&[f64]], dim: &Dimension, space: &PromptSpace) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::EmptySample("image selection"));
    }
    let resolved = space.resolve(dim)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for image in images {
        for adjective in &resolved.rows {
            for &row in adjective {
                sum += cosine(image, space.row(row))?;
                n += 1;
            }
        }
    }
    Ok(sum / n as f64)
}

/// Delta similarity of one unit image embedding to a dimension.
pub fn delta_similarity(image: &[f64], dim: &Dimension, space: &PromptSpace) -> Result<f64> {
    let resolved = space.resolve(dim)?;
    let neutral = space.neutral_rows()?;
    let neutral_cos = neutral
        .iter()
        .map(|&r| cosine(image, space.row(r)))
        .collect::<Result<Vec<_>>>()?;
    let mut per_adjective = 0.0;
    for adjective in &resolved.rows {
        let mut diff = 0.0;
        for (t, &row) in adjective.iter().enumerate() {
            diff += cosine(image, space.row(row))? - neutral_cos[t];
        }
        per_adjective += diff / adjective.len() as f64;
    }
    Ok(per_adjective / resolved.rows.len() as f64)
}

/// Delta similarity of an image set: the mean of per-image deltas.
pub fn delta_similarity_set(
    images: &[&[f64]],
    dim: &Dimension,
    space: &PromptSpace,
) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::EmptySample("image selection"));
    }
    let mut sum = 0.0;
    for image in images {
        sum += delta_similarity(image, dim, space)?;
    }
    Ok(sum / images.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SimilarityCell {
    pub raw_cos: f64,
    pub delta_cos: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DimensionProvenance {
    pub name: String,
    pub adjectives: usize,
    pub templates: usize,
}

/// Per image x dimension raw and delta cosine.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimilarityTable {
    pub ids: Vec<String>,
    pub dimensions: Vec<DimensionProvenance>,
    /// Row-major `[image][dimension]`.
    pub cells: Vec<SimilarityCell>,
    /// Template-mean cosine of each image to the neutral prompts.
    pub neutral_cos: Vec<f64>,
}

impl SimilarityTable {
    pub fn image_count(&self) -> usize {
        self.ids.len()
    }

    pub fn dimension_count(&self) -> usize {
        self.dimensions.len()
    }

    pub fn dimension_index(&self, name: &str) -> Result<usize> {
        self.dimensions
            .iter()
            .position(|d| d.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("dimension {name:?} not in table")))
    }

    pub fn cell(&self, image: usize, dim: usize) -> SimilarityCell {
        self.cells[image * self.dimensions.len() + dim]
    }

    pub fn delta(&self, image: usize, dim: usize) -> f64 {
        self.cell(image, dim).delta_cos
    }

    pub fn raw(&self, image: usize, dim: usize) -> f64 {
        self.cell(image, dim).raw_cos
    }

    /// Delta column of one dimension, in image order.
    pub fn delta_column(&self, dim: usize) -> Vec<f64> {
        (0..self.image_count()).map(|i| self.delta(i, dim)).collect()
    }

    pub fn raw_column(&self, dim: usize) -> Vec<f64> {
        (0..self.image_count()).map(|i| self.raw(i, dim)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,dimension,raw_cos,delta_cos\n");
        for (i, id) in self.ids.iter().enumerate() {
            for (d, dim) in self.dimensions.iter().enumerate() {
                let c = self.cell(i, d);
                let _ = writeln!(out, "{},{},{},{}", csv_field(id), csv_field(&dim.name), c.raw_cos, c.delta_cos);
            }
        }
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Build the full similarity table. Image rows are normalized here, so raw
/// (unnormalized) embeddings are accepted. Rows must align with the manifest.
pub fn build_similarity_table(
    images: &EmbeddingSet,
    manifest: &DatasetManifest,
    dimensions: &[Dimension],
    space: &PromptSpace,
) -> Result<SimilarityTable> {
    validate_alignment(images, manifest).into_result()?;
    if images.dim() != space.dim() {
        return Err(Error::DimensionMismatch {
            left: images.dim(),
            right: space.dim(),
        });
    }
    let images = images.normalize()?;
    let resolved = dimensions
        .iter()
        .map(|d| space.resolve(d))
        .collect::<Result<Vec<_>>>()?;
    let neutral = space.neutral_rows()?;

    let rows: Vec<(Vec<SimilarityCell>, f64)> = (0..images.count())
        .into_par_iter()
        .map(|i| image_row(images.row(i), &resolved, &neutral, space))
        .collect();

    let mut cells = Vec::with_capacity(images.count() * dimensions.len());
    let mut neutral_cos = Vec::with_capacity(images.count());
    for (row, n) in rows {
        cells.extend(row);
        neutral_cos.push(n);
    }
    Ok(SimilarityTable {
        ids: images.ids().to_vec(),
        dimensions: dimensions
            .iter()
            .map(|d| DimensionProvenance {
                name: d.name.clone(),
                adjectives: d.adjectives.len(),
                templates: space.templates().len(),
            })
            .collect(),
        cells,
        neutral_cos,
    })
}

fn image_row(
    image: &[f64],
    dims: &[ResolvedDimension],
    neutral: &[usize],
    space: &PromptSpace,
) -> (Vec<SimilarityCell>, f64) {
    let neutral_cos: Vec<f64> = neutral
        .iter()
        .map(|&r| dot(image, space.row(r)).clamp(-1.0, 1.0))
        .collect();
    let neutral_mean = neutral_cos.iter().sum::<f64>() / neutral_cos.len() as f64;
    let cells = dims
        .iter()
        .map(|dim| {
            let mut raw = 0.0;
            let mut n = 0usize;
            let mut delta = 0.0;
            for adjective in &dim.rows {
                let mut diff = 0.0;
                for (t, &row) in adjective.iter().enumerate() {
                    let c = dot(image, space.row(row)).clamp(-1.0, 1.0);
                    raw += c;
                    n += 1;
                    diff += c - neutral_cos[t];
                }
                delta += diff / adjective.len() as f64;
            }
            SimilarityCell {
                raw_cos: raw / n as f64,
                delta_cos: delta / dim.rows.len() as f64,
            }
        })
        .collect();
    (cells, neutral_mean)
}
