use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetKind, Gender, ImageRecord, Race};
use crate::error::{Error, Result};

/// Declared value sets per attribute. Ordinal level lists are optional;
/// when absent any finite level is accepted.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSchema {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<Vec<DatasetKind>>,
    pub race: Vec<Race>,
    pub gender: Vec<Gender>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smiling: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lighting: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<Vec<f64>>,
}

impl AttributeSchema {
    /// Smallest schema that admits every record.
    pub fn infer(records: &[ImageRecord]) -> Self {
        let races: BTreeSet<Race> = records.iter().map(|r| r.race).collect();
        let genders: BTreeSet<Gender> = records.iter().map(|r| r.gender).collect();
        let datasets: BTreeSet<DatasetKind> = records.iter().map(|r| r.dataset).collect();
        AttributeSchema {
            dataset: Some(datasets.into_iter().collect()),
            race: races.into_iter().collect(),
            gender: genders.into_iter().collect(),
            ..Default::default()
        }
    }

    fn check(&self, record: &ImageRecord) -> Result<()> {
        if let Some(datasets) = &self.dataset {
            if !datasets.contains(&record.dataset) {
                return Err(undeclared("dataset", record.dataset.as_str()));
            }
        }
        if !self.race.contains(&record.race) {
            return Err(undeclared("race", record.race.as_str()));
        }
        if !self.gender.contains(&record.gender) {
            return Err(undeclared("gender", record.gender.as_str()));
        }
        let levels = [
            ("age", &self.age, record.age),
            ("smiling", &self.smiling, record.smiling),
            ("lighting", &self.lighting, record.lighting),
            ("pose", &self.pose, record.pose),
        ];
        for (name, declared, value) in levels {
            let Some(v) = value else { continue };
            if !v.is_finite() {
                return Err(undeclared(name, &v.to_string()));
            }
            if let Some(declared) = declared {
                if !declared.iter().any(|d| d.to_bits() == v.to_bits() || *d == v) {
                    return Err(undeclared(name, &v.to_string()));
                }
            }
        }
        Ok(())
    }
}

fn undeclared(attribute: &str, value: &str) -> Error {
    Error::UnknownAttributeValue {
        attribute: attribute.to_string(),
        value: value.to_string(),
    }
}

/// Ordered image records; record order defines embedding-row order.
#[derive(Clone, Debug, Serialize)]
pub struct DatasetManifest {
    pub schema: AttributeSchema,
    pub records: Vec<ImageRecord>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl PartialEq for DatasetManifest {
    fn eq(&self, other: &Self) -> bool {
        self.schema == other.schema && self.records == other.records
    }
}

impl DatasetManifest {
    pub fn new(schema: AttributeSchema, records: Vec<ImageRecord>) -> Result<Self> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, record) in records.iter().enumerate() {
            if index.insert(record.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(record.id.clone()));
            }
            schema.check(record).map_err(|e| wrap(i, e))?;
            check_layout(record).map_err(|e| wrap(i, e))?;
        }
        Ok(DatasetManifest {
            schema,
            records,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.id.as_str())
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Sub-manifest of the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let records = rows.iter().map(|&i| self.records[i].clone()).collect();
        DatasetManifest::new(self.schema.clone(), records)
    }

    /// Rows kept by the wild-dataset age filter. Records without an age, or
    /// from non-wild datasets, are always kept.
    pub fn rows_with_min_age(&self, min_age: f64) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| !r.dataset.is_wild() || r.age.is_none_or(|a| a >= min_age))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

fn wrap(index: usize, err: Error) -> Error {
    match err {
        Error::DuplicateId(_) => err,
        other => Error::Record {
            index,
            message: other.to_string(),
        },
    }
}

fn check_layout(record: &ImageRecord) -> Result<()> {
    let levels = [record.age, record.smiling, record.lighting, record.pose];
    match record.dataset {
        DatasetKind::CausalFace => {
            if record.seed.is_none() || levels.iter().any(Option::is_none) {
                return Err(Error::InvalidArgument(
                    "causalface records need a seed and age/smiling/lighting/pose levels".into(),
                ));
            }
        }
        DatasetKind::FairFace | DatasetKind::UtkFace => {
            if record.age.is_none() {
                return Err(Error::InvalidArgument(
                    "wild-dataset records need an age".into(),
                ));
            }
            if levels[1..].iter().any(Option::is_some) {
                return Err(Error::InvalidArgument(
                    "wild-dataset records carry no manipulation levels".into(),
                ));
            }
        }
        DatasetKind::Custom => {}
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    schema: serde_json::Value,
    records: Vec<serde_json::Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    dataset: String,
    #[serde(default)]
    seed: Option<u64>,
    race: String,
    gender: String,
    #[serde(default)]
    age: Option<f64>,
    #[serde(default)]
    smiling: Option<f64>,
    #[serde(default)]
    lighting: Option<f64>,
    #[serde(default)]
    pose: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchema {
    #[serde(default)]
    dataset: Option<Vec<String>>,
    race: Vec<String>,
    gender: Vec<String>,
    #[serde(default)]
    age: Option<Vec<f64>>,
    #[serde(default)]
    smiling: Option<Vec<f64>>,
    #[serde(default)]
    lighting: Option<Vec<f64>>,
    #[serde(default)]
    pose: Option<Vec<f64>>,
}

fn dedup_parse<T: std::str::FromStr<Err = Error> + Ord>(values: &[String]) -> Result<Vec<T>> {
    let set: BTreeSet<T> = values.iter().map(|v| v.parse()).collect::<Result<_>>()?;
    Ok(set.into_iter().collect())
}

pub fn parse_manifest(text: &str) -> Result<DatasetManifest> {
    let raw: RawManifest = serde_json::from_str(text).map_err(|e| Error::from_json(&e))?;
    let schema: RawSchema = serde_json::from_value(raw.schema).map_err(|e| Error::Config(
        format!("manifest schema: {e}"),
    ))?;
    let schema = AttributeSchema {
        dataset: schema.dataset.as_deref().map(dedup_parse).transpose()?,
        race: dedup_parse(&schema.race)?,
        gender: dedup_parse(&schema.gender)?,
        age: schema.age,
        smiling: schema.smiling,
        lighting: schema.lighting,
        pose: schema.pose,
    };
    let mut records = Vec::with_capacity(raw.records.len());
    for (index, value) in raw.records.into_iter().enumerate() {
        let rec: RawRecord = serde_json::from_value(value).map_err(|e| Error::Record {
            index,
            message: e.to_string(),
        })?;
        let convert = || -> Result<ImageRecord> {
            Ok(ImageRecord {
                id: rec.id.clone(),
                dataset: rec.dataset.parse()?,
                seed: rec.seed,
                race: rec.race.parse()?,
                gender: rec.gender.parse()?,
                age: rec.age,
                smiling: rec.smiling,
                lighting: rec.lighting,
                pose: rec.pose,
            })
        };
        records.push(convert().map_err(|e| Error::Record {
            index,
            message: e.to_string(),
        })?);
    }
    DatasetManifest::new(schema, records)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}
