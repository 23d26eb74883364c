use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PLACEHOLDER: &str = "<adjective>";

pub const DEFAULT_SCM_JSON: &str = include_str!("../../assets/scm.json");
pub const DEFAULT_ABC_JSON: &str = include_str!("../../assets/abc.json");
pub const DEFAULT_TEMPLATES_JSON: &str = include_str!("../../assets/templates.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LexiconModel {
    #[serde(rename = "SCM")]
    Scm,
    #[serde(rename = "ABC")]
    Abc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Valence {
    Positive,
    Negative,
    Progressive,
    Conservative,
    Unsigned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dimension {
    pub name: String,
    pub valence: Valence,
    pub adjectives: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lexicon {
    pub model: LexiconModel,
    pub dimensions: Vec<Dimension>,
}

impl Lexicon {
    /// Stereotype Content Model: Warmth and Competence.
    pub fn scm() -> Self {
        Lexicon::from_json(DEFAULT_SCM_JSON).expect("embedded SCM lexicon is valid")
    }

    /// ABC model: Agency, Beliefs and Communion, split by valence.
    pub fn abc() -> Self {
        Lexicon::from_json(DEFAULT_ABC_JSON).expect("embedded ABC lexicon is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let lexicon: Lexicon = serde_json::from_str(text).map_err(|e| Error::from_json(&e))?;
        lexicon.validate()?;
        Ok(lexicon)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Lexicon::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for dim in &self.dimensions {
            if !names.insert(dim.name.as_str()) {
                return Err(Error::InvalidLexicon(format!(
                    "duplicate dimension {:?}",
                    dim.name
                )));
            }
            if dim.adjectives.is_empty() {
                return Err(Error::InvalidLexicon(format!(
                    "dimension {:?} has no adjectives",
                    dim.name
                )));
            }
            let mut seen = HashSet::new();
            for adj in &dim.adjectives {
                if adj.trim().is_empty() || *adj != adj.to_lowercase() || adj.trim() != adj {
                    return Err(Error::InvalidLexicon(format!(
                        "adjective {adj:?} must be non-empty, trimmed and lowercase"
                    )));
                }
                if !seen.insert(adj.as_str()) {
                    return Err(Error::InvalidLexicon(format!(
                        "adjective {adj:?} repeated in {:?}",
                        dim.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dimension(&self, name: &str) -> Option<&Dimension> {
        self.dimensions.iter().find(|d| d.name == name)
    }

    pub fn adjective_count(&self) -> usize {
        self.dimensions.iter().map(|d| d.adjectives.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplateSet {
    pub templates: Vec<String>,
}

impl Default for PromptTemplateSet {
    fn default() -> Self {
        PromptTemplateSet::from_json(DEFAULT_TEMPLATES_JSON).expect("embedded templates are valid")
    }
}

impl PromptTemplateSet {
    pub fn new(templates: Vec<String>) -> Result<Self> {
        let set = PromptTemplateSet { templates };
        set.validate()?;
        Ok(set)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: PromptTemplateSet = serde_json::from_str(text).map_err(|e| Error::from_json(&e))?;
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PromptTemplateSet::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.templates.is_empty() {
            return Err(Error::InvalidArgument("template set is empty".into()));
        }
        for t in &self.templates {
            if t.matches(PLACEHOLDER).count() != 1 {
                return Err(Error::BadTemplate(t.clone()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Splice a word into template `index`.
    pub fn fill(&self, index: usize, word: &str, options: PromptOptions) -> String {
        fill(&self.templates[index], word, options)
    }

    pub fn neutral(&self, index: usize) -> String {
        neutral(&self.templates[index])
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptOptions {
    /// Rewrite "a" to "an" before vowel-initial words. Off by default so that
    /// prompts match the published templates verbatim.
    #[serde(default)]
    pub fix_articles: bool,
}

fn fill(template: &str, word: &str, options: PromptOptions) -> String {
    let (head, tail) = template
        .split_once(PLACEHOLDER)
        .expect("validated template has a placeholder");
    let mut head = head.to_string();
    if options.fix_articles && word.starts_with(['a', 'e', 'i', 'o', 'u']) {
        for article in ["a ", "A "] {
            let at_word_start = head.len() == article.len()
                || head[..head.len() - article.len()].ends_with(' ');
            if head.ends_with(article) && at_word_start {
                let cut = head.len() - 1;
                head.insert(cut, 'n');
                break;
            }
        }
    }
    format!("{head}{word}{tail}")
}

fn neutral(template: &str) -> String {
    template
        .replacen(PLACEHOLDER, "", 1)
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdjectivePrompt {
    pub dimension: String,
    pub adjective: String,
    pub template: usize,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PromptSet {
    pub adjective_prompts: Vec<AdjectivePrompt>,
    /// One neutral prompt per template, in template order.
    pub neutral: Vec<String>,
}

impl PromptSet {
    /// Distinct prompt strings in first-appearance order, neutral prompts last.
    /// This is the list a text encoder needs to embed.
    pub fn unique_texts(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.adjective_prompts
            .iter()
            .map(|p| p.text.as_str())
            .chain(self.neutral.iter().map(String::as_str))
            .filter(|t| seen.insert(*t))
            .map(str::to_string)
            .collect()
    }
}

pub fn expand_prompts(
    lexicon: &Lexicon,
    templates: &PromptTemplateSet,
    options: PromptOptions,
) -> Result<PromptSet> {
    templates.validate()?;
    let mut adjective_prompts = Vec::with_capacity(lexicon.adjective_count() * templates.len());
    for dim in &lexicon.dimensions {
        for adj in &dim.adjectives {
            for (t, template) in templates.templates.iter().enumerate() {
                adjective_prompts.push(AdjectivePrompt {
                    dimension: dim.name.clone(),
                    adjective: adj.clone(),
                    template: t,
                    text: fill(template, adj, options),
                });
            }
        }
    }
    let neutral = templates.templates.iter().map(|t| neutral(t)).collect();
    Ok(PromptSet {
        adjective_prompts,
        neutral,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_lexicons_match_published_counts() {
        let scm = Lexicon::scm();
        assert_eq!(scm.dimensions.len(), 2);
        assert_eq!(scm.adjective_count(), 12);
        let abc = Lexicon::abc();
        let counts: Vec<usize> = abc.dimensions.iter().map(|d| d.adjectives.len()).collect();
        assert_eq!(counts, vec![6, 6, 4, 4, 6, 6]);
        assert_eq!(abc.adjective_count(), 32);
        assert_eq!(PromptTemplateSet::default().len(), 4);
    }

    #[test]
    fn scm_expands_to_48_plus_4() {
        let set = expand_prompts(
            &Lexicon::scm(),
            &PromptTemplateSet::default(),
            PromptOptions::default(),
        )
        .unwrap();
        assert_eq!(set.adjective_prompts.len(), 48);
        assert_eq!(set.neutral.len(), 4);
        assert_eq!(set.neutral[0], "A photo of a person.");
        assert_eq!(set.unique_texts().len(), 52);
    }

    #[test]
    fn fills_and_neutralizes_templates() {
        let t = PromptTemplateSet::new(vec!["A <adjective> person.".into()]).unwrap();
        assert_eq!(t.fill(0, "warm", PromptOptions::default()), "A warm person.");
        assert_eq!(t.neutral(0), "A person.");
    }

    #[test]
    fn articles_are_verbatim_unless_flagged() {
        let t = PromptTemplateSet::default();
        assert_eq!(
            t.fill(0, "altruistic", PromptOptions::default()),
            "A photo of a altruistic person."
        );
        let fixed = PromptOptions { fix_articles: true };
        assert_eq!(t.fill(0, "altruistic", fixed), "A photo of an altruistic person.");
        assert_eq!(t.fill(1, "honest", fixed), "A honest person.");
        assert_eq!(t.fill(1, "egoistic", fixed), "An egoistic person.");
        assert_eq!(t.fill(1, "warm", fixed), "A warm person.");
    }

    #[test]
    fn template_without_placeholder_is_rejected() {
        assert!(matches!(
            PromptTemplateSet::new(vec!["A person.".into()]),
            Err(Error::BadTemplate(_))
        ));
        assert!(matches!(
            PromptTemplateSet::new(vec!["<adjective> <adjective>".into()]),
            Err(Error::BadTemplate(_))
        ));
    }

    #[test]
    fn lexicon_validation() {
        let bad = r#"{"model": "SCM", "dimensions": [{"name": "W", "valence": "positive", "adjectives": ["Warm"]}]}"#;
        assert!(matches!(Lexicon::from_json(bad), Err(Error::InvalidLexicon(_))));
        let dup = r#"{"model": "SCM", "dimensions": [
            {"name": "W", "valence": "positive", "adjectives": ["warm"]},
            {"name": "W", "valence": "positive", "adjectives": ["cold"]}]}"#;
        assert!(matches!(Lexicon::from_json(dup), Err(Error::InvalidLexicon(_))));
    }

    #[test]
    fn expansion_is_injective() {
        let set = expand_prompts(
            &Lexicon::abc(),
            &PromptTemplateSet::default(),
            PromptOptions::default(),
        )
        .unwrap();
        let texts: HashSet<&str> = set.adjective_prompts.iter().map(|p| p.text.as_str()).collect();
        assert_eq!(texts.len(), set.adjective_prompts.len());
    }
}
