use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::{AttrValue, Attribute, DatasetManifest, ImageRecord};
use crate::error::{Error, Result};

/// A grouping key: a raw attribute, or the decade bin of age (20-29, 30-39, ...)
/// used for wild-collected datasets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GroupKey {
    Attr(Attribute),
    AgeDecade,
}

impl GroupKey {
    pub fn name(self) -> &'static str {
        match self {
            GroupKey::Attr(a) => a.as_str(),
            GroupKey::AgeDecade => "age_decade",
        }
    }

    pub fn value(self, record: &ImageRecord) -> AttrValue {
        match self {
            GroupKey::Attr(a) => record.value(a),
            GroupKey::AgeDecade => match record.age {
                Some(age) => AttrValue::Number(age_decade(age)),
                None => AttrValue::Missing,
            },
        }
    }
}

/// Lower bound of the decade bin starting at 20; ages below 20 fall in bin 10.
pub fn age_decade(age: f64) -> f64 {
    if age < 20.0 {
        10.0
    } else {
        20.0 + ((age - 20.0) / 10.0).floor() * 10.0
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GroupKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "age_decade" | "age_bin" => Ok(GroupKey::AgeDecade),
            other => other.parse().map(GroupKey::Attr).map_err(|_| Error::UnknownKey(s.into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DemographicGroup {
    pub keys: Vec<(String, AttrValue)>,
    /// Manifest row indices, ascending.
    pub rows: Vec<usize>,
}

impl DemographicGroup {
    pub fn label(&self) -> String {
        if self.keys.is_empty() {
            return "all".to_string();
        }
        self.keys
            .iter()
            .map(|(_, v)| v.to_string())
            .collect::<Vec<_>>()
            .join("/")
    }

    pub fn value(&self, key: &str) -> Option<&AttrValue> {
        self.keys.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub fn group_by(manifest: &DatasetManifest, keys: &[GroupKey]) -> Result<Vec<DemographicGroup>> {
    let all: Vec<usize> = (0..manifest.len()).collect();
    group_by_selection(manifest, &all, keys)
}

/// Partition the selected rows by `keys`.
///
/// Categorical keys (dataset, race, gender) range over the schema's declared
/// values, so a declared combination with no records yields an empty group.
/// Other keys range over observed values only. Groups are ordered
/// lexicographically on key values.
pub fn group_by_selection(
    manifest: &DatasetManifest,
    rows: &[usize],
    keys: &[GroupKey],
) -> Result<Vec<DemographicGroup>> {
    let mut seen_keys = BTreeSet::new();
    for k in keys {
        if !seen_keys.insert(k.name()) {
            return Err(Error::InvalidArgument(format!("grouping key {k} repeated")));
        }
    }

    let mut buckets: BTreeMap<Vec<AttrValue>, Vec<usize>> = BTreeMap::new();
    for &row in rows {
        let record = manifest
            .records
            .get(row)
            .ok_or_else(|| Error::InvalidArgument(format!("row {row} out of range")))?;
        let key: Vec<AttrValue> = keys.iter().map(|k| k.value(record)).collect();
        buckets.entry(key).or_default().push(row);
    }

    let declared: Vec<Option<Vec<AttrValue>>> = keys
        .iter()
        .map(|k| declared_domain(manifest, *k))
        .collect();
    if declared.iter().any(Option::is_some) {
        // Observed values of the non-categorical keys, crossed with every
        // declared categorical value.
        let observed: BTreeSet<Vec<AttrValue>> = buckets
            .keys()
            .map(|key| {
                key.iter()
                    .zip(&declared)
                    .map(|(v, d)| if d.is_some() { AttrValue::Missing } else { v.clone() })
                    .collect()
            })
            .collect();
        if rows.is_empty() {
            // Nothing observed: expand categorical keys alone.
            let template: Vec<AttrValue> = keys.iter().map(|_| AttrValue::Missing).collect();
            expand(&template, &declared, 0, &mut buckets);
        }
        for template in observed {
            expand(&template, &declared, 0, &mut buckets);
        }
    }

    Ok(buckets
        .into_iter()
        .map(|(values, mut rows)| {
            rows.sort_unstable();
            DemographicGroup {
                keys: keys
                    .iter()
                    .map(|k| k.name().to_string())
                    .zip(values)
                    .collect(),
                rows,
            }
        })
        .collect())
}

fn expand(
    template: &[AttrValue],
    declared: &[Option<Vec<AttrValue>>],
    at: usize,
    out: &mut BTreeMap<Vec<AttrValue>, Vec<usize>>,
) {
    if at == template.len() {
        out.entry(template.to_vec()).or_default();
        return;
    }
    match &declared[at] {
        None => expand(template, declared, at + 1, out),
        Some(domain) => {
            for value in domain {
                let mut next = template.to_vec();
                next[at] = value.clone();
                expand(&next, declared, at + 1, out);
            }
        }
    }
}

fn declared_domain(manifest: &DatasetManifest, key: GroupKey) -> Option<Vec<AttrValue>> {
    let label = |s: &str| AttrValue::Label(s.to_string());
    let schema = &manifest.schema;
    match key {
        GroupKey::Attr(Attribute::Race) => Some(schema.race.iter().map(|r| label(r.as_str())).collect()),
        GroupKey::Attr(Attribute::Gender) => {
            Some(schema.gender.iter().map(|g| label(g.as_str())).collect())
        }
        GroupKey::Attr(Attribute::Dataset) => schema
            .dataset
            .as_ref()
            .map(|ds| ds.iter().map(|d| label(d.as_str())).collect()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{parse_manifest, Race};

    fn three_race_manifest() -> DatasetManifest {
        parse_manifest(
            r#"{
            "schema": {"race": ["asian", "black", "white"], "gender": ["female", "male"]},
            "records": [
                {"id": "1", "dataset": "custom", "race": "white", "gender": "female"},
                {"id": "2", "dataset": "custom", "race": "asian", "gender": "male"},
                {"id": "3", "dataset": "custom", "race": "black", "gender": "male"},
                {"id": "4", "dataset": "custom", "race": "white", "gender": "male"}
            ]}"#,
        )
        .unwrap()
    }

    #[test]
    fn empty_key_list_is_one_group() {
        let m = three_race_manifest();
        let groups = group_by(&m, &[]).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].rows, vec![0, 1, 2, 3]);
        assert_eq!(groups[0].label(), "all");
    }

    #[test]
    fn race_groups_partition_records() {
        let m = three_race_manifest();
        let groups = group_by(&m, &[GroupKey::Attr(Attribute::Race)]).unwrap();
        assert_eq!(groups.len(), 3);
        assert_eq!(groups.iter().map(|g| g.rows.len()).sum::<usize>(), m.len());
        let labels: Vec<String> = groups.iter().map(|g| g.label()).collect();
        assert_eq!(labels, vec!["asian", "black", "white"]);
    }

    #[test]
    fn empty_declared_combinations_are_reported() {
        let m = three_race_manifest();
        let groups = group_by(
            &m,
            &[GroupKey::Attr(Attribute::Race), GroupKey::Attr(Attribute::Gender)],
        )
        .unwrap();
        assert_eq!(groups.len(), 6);
        let empty: Vec<String> = groups.iter().filter(|g| g.is_empty()).map(|g| g.label()).collect();
        assert_eq!(empty, vec!["asian/female", "black/female"]);
    }

    #[test]
    fn causalface_race_gender_is_six_groups() {
        let m = crate::synthetic::causalface_manifest(&[1, 2, 3]);
        let groups = group_by(
            &m,
            &[GroupKey::Attr(Attribute::Race), GroupKey::Attr(Attribute::Gender)],
        )
        .unwrap();
        assert_eq!(groups.len(), 6);
        assert!(groups.iter().all(|g| g.rows.len() == 90));
        assert_eq!(groups[0].value("race"), Some(&AttrValue::Label(Race::Asian.as_str().into())));
    }

    #[test]
    fn unknown_key_string_is_rejected() {
        assert!(matches!("eyes".parse::<GroupKey>(), Err(Error::UnknownKey(_))));
        assert_eq!("age_decade".parse::<GroupKey>().unwrap(), GroupKey::AgeDecade);
    }

    #[test]
    fn decade_bins() {
        assert_eq!(age_decade(20.0), 20.0);
        assert_eq!(age_decade(29.9), 20.0);
        assert_eq!(age_decade(30.0), 30.0);
        assert_eq!(age_decade(71.0), 70.0);
        assert_eq!(age_decade(5.0), 10.0);
    }
}
