//! Domain types for image manifests, social-perception lexicons, prompt
//! templates and demographic grouping.

mod grouping;
mod lexicon;
mod manifest;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use grouping::{age_decade, group_by, group_by_selection, DemographicGroup, GroupKey};
pub use lexicon::{
    expand_prompts, AdjectivePrompt, Dimension, Lexicon, LexiconModel, PromptOptions, PromptSet,
    PromptTemplateSet, Valence, DEFAULT_ABC_JSON, DEFAULT_SCM_JSON, DEFAULT_TEMPLATES_JSON,
    PLACEHOLDER,
};
pub use manifest::{load_manifest, parse_manifest, AttributeSchema, DatasetManifest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    CausalFace,
    FairFace,
    UtkFace,
    Custom,
}

impl DatasetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::CausalFace => "causalface",
            DatasetKind::FairFace => "fairface",
            DatasetKind::UtkFace => "utkface",
            DatasetKind::Custom => "custom",
        }
    }

    /// Wild-collected datasets carry an annotated age and no manipulation levels.
    pub fn is_wild(self) -> bool {
        matches!(self, DatasetKind::FairFace | DatasetKind::UtkFace)
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match canonical(s).as_str() {
            "causalface" => Ok(DatasetKind::CausalFace),
            "fairface" => Ok(DatasetKind::FairFace),
            "utkface" => Ok(DatasetKind::UtkFace),
            "custom" => Ok(DatasetKind::Custom),
            _ => Err(unknown("dataset", s)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Race {
    Asian,
    Black,
    White,
    Other,
}

impl Race {
    pub const ALL: [Race; 4] = [Race::Asian, Race::Black, Race::White, Race::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Race::Asian => "asian",
            Race::Black => "black",
            Race::White => "white",
            Race::Other => "other",
        }
    }
}

impl FromStr for Race {
    type Err = Error;

    /// FairFace splits Asian into East and Southeast Asian; both map to `asian`.
    fn from_str(s: &str) -> Result<Self> {
        match canonical(s).as_str() {
            "asian" | "east asian" | "southeast asian" | "east_asian" | "southeast_asian" => {
                Ok(Race::Asian)
            }
            "black" => Ok(Race::Black),
            "white" => Ok(Race::White),
            "other" => Ok(Race::Other),
            _ => Err(unknown("race", s)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
    Other,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
            Gender::Other => "other",
        }
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match canonical(s).as_str() {
            "female" | "woman" | "women" => Ok(Gender::Female),
            "male" | "man" | "men" => Ok(Gender::Male),
            "other" => Ok(Gender::Other),
            _ => Err(unknown("gender", s)),
        }
    }
}

/// The image attributes that can be grouped on or varied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    Dataset,
    Seed,
    Race,
    Gender,
    Age,
    Smiling,
    Lighting,
    Pose,
}

impl Attribute {
    pub const ALL: [Attribute; 8] = [
        Attribute::Dataset,
        Attribute::Seed,
        Attribute::Race,
        Attribute::Gender,
        Attribute::Age,
        Attribute::Smiling,
        Attribute::Lighting,
        Attribute::Pose,
    ];

    /// CausalFace manipulation levels, stored uninterpreted.
    pub const MANIPULATIONS: [Attribute; 4] = [
        Attribute::Age,
        Attribute::Smiling,
        Attribute::Lighting,
        Attribute::Pose,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Attribute::Dataset => "dataset",
            Attribute::Seed => "seed",
            Attribute::Race => "race",
            Attribute::Gender => "gender",
            Attribute::Age => "age",
            Attribute::Smiling => "smiling",
            Attribute::Lighting => "lighting",
            Attribute::Pose => "pose",
        }
    }

    pub fn is_ordinal(self) -> bool {
        matches!(
            self,
            Attribute::Age | Attribute::Smiling | Attribute::Lighting | Attribute::Pose
        )
    }

    pub fn is_categorical(self) -> bool {
        matches!(self, Attribute::Dataset | Attribute::Race | Attribute::Gender)
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = canonical(s);
        Attribute::ALL
            .into_iter()
            .find(|a| a.as_str() == key)
            .ok_or_else(|| Error::UnknownKey(s.to_string()))
    }
}

/// A single attribute value, totally ordered so groupings sort deterministically.
#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum AttrValue {
    Missing,
    Label(String),
    Seed(u64),
    Number(f64),
}

impl AttrValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            AttrValue::Number(x) => Some(*x),
            AttrValue::Seed(s) => Some(*s as f64),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            AttrValue::Missing => 0,
            AttrValue::Label(_) => 1,
            AttrValue::Seed(_) => 2,
            AttrValue::Number(_) => 3,
        }
    }
}

impl Ord for AttrValue {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (AttrValue::Label(a), AttrValue::Label(b)) => a.cmp(b),
            (AttrValue::Seed(a), AttrValue::Seed(b)) => a.cmp(b),
            (AttrValue::Number(a), AttrValue::Number(b)) => a.total_cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl PartialOrd for AttrValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for AttrValue {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for AttrValue {}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Missing => f.write_str("-"),
            AttrValue::Label(s) => f.write_str(s),
            AttrValue::Seed(s) => write!(f, "{s}"),
            AttrValue::Number(x) => write!(f, "{x}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub dataset: DatasetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub race: Race,
    pub gender: Gender,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smiling: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lighting: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<f64>,
}

impl ImageRecord {
    pub fn value(&self, attribute: Attribute) -> AttrValue {
        let num = |v: Option<f64>| v.map_or(AttrValue::Missing, AttrValue::Number);
        match attribute {
            Attribute::Dataset => AttrValue::Label(self.dataset.as_str().to_string()),
            Attribute::Seed => self.seed.map_or(AttrValue::Missing, AttrValue::Seed),
            Attribute::Race => AttrValue::Label(self.race.as_str().to_string()),
            Attribute::Gender => AttrValue::Label(self.gender.as_str().to_string()),
            Attribute::Age => num(self.age),
            Attribute::Smiling => num(self.smiling),
            Attribute::Lighting => num(self.lighting),
            Attribute::Pose => num(self.pose),
        }
    }

    pub fn level(&self, attribute: Attribute) -> Option<f64> {
        match attribute {
            Attribute::Age => self.age,
            Attribute::Smiling => self.smiling,
            Attribute::Lighting => self.lighting,
            Attribute::Pose => self.pose,
            Attribute::Seed => self.seed.map(|s| s as f64),
            _ => None,
        }
    }
}

pub(crate) fn canonical(s: &str) -> String {
    s.trim().to_lowercase()
}

fn unknown(attribute: &str, value: &str) -> Error {
    Error::UnknownAttributeValue {
        attribute: attribute.to_string(),
        value: value.to_string(),
    }
}
