//! Comment corpora: record model, schema sidecars, JSONL/CSV interchange,
//! validation and author anonymization.

mod io;
mod schema;

use std::collections::{BTreeMap, HashSet};

use chrono::{DateTime, FixedOffset};
use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use crate::enrichment::{taxonomy, EthnicityPath, Gender};
use crate::error::{Error, Result};
use crate::text::normalize_name;

pub use io::{load_corpus, load_corpus_with, schema_sidecar_path, write_corpus, Format, WriteOptions};
pub use schema::{canonical_source, AttributeKind, AttributeSchema, SchemaSet, SOURCE_ATTRIBUTE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedLabel {
    pub value: String,
    pub prob: f64,
}

/// Name-derived author demographics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Enriched {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender_pred: Option<Gender>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ethnicity_path: Option<EthnicityPath>,
}

impl Enriched {
    pub fn is_empty(&self) -> bool {
        self.gender_pred.is_none() && self.ethnicity_path.is_none()
    }
}

/// One comment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<DateTime<FixedOffset>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author_pseudonym: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub likes: Option<u64>,
    #[serde(default)]
    pub gold_labels: BTreeMap<String, String>,
    #[serde(default)]
    pub predicted_labels: BTreeMap<String, PredictedLabel>,
    #[serde(default, skip_serializing_if = "Enriched::is_empty")]
    pub enriched: Enriched,
}

impl CorpusRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        CorpusRecord {
            id: id.into(),
            text: text.into(),
            source: None,
            created_at: None,
            author_name: None,
            author_pseudonym: None,
            likes: None,
            gold_labels: BTreeMap::new(),
            predicted_labels: BTreeMap::new(),
            enriched: Enriched::default(),
        }
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    pub fn with_likes(mut self, likes: u64) -> Self {
        self.likes = Some(likes);
        self
    }

    pub fn with_author(mut self, name: impl Into<String>) -> Self {
        self.author_name = Some(name.into());
        self
    }

    pub fn with_gold(mut self, attribute: impl Into<String>, value: impl Into<String>) -> Self {
        self.gold_labels.insert(attribute.into(), value.into());
        self
    }

    pub fn with_predicted(mut self, attribute: impl Into<String>, value: impl Into<String>, prob: f64) -> Self {
        self.predicted_labels.insert(
            attribute.into(),
            PredictedLabel {
                value: value.into(),
                prob,
            },
        );
        self
    }
}

/// Which label slot of a record to read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Gold,
    Predicted,
}

impl std::str::FromStr for LabelSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gold" => Ok(LabelSource::Gold),
            "predicted" => Ok(LabelSource::Predicted),
            other => Err(Error::Config(format!("unknown label source {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub records: Vec<CorpusRecord>,
    pub schemas: SchemaSet,
    #[serde(default)]
    pub provenance: String,
}

impl Corpus {
    pub fn new(records: Vec<CorpusRecord>, schemas: SchemaSet) -> Self {
        Corpus {
            records,
            schemas,
            provenance: String::new(),
        }
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// A new corpus with the same schemas and provenance holding `records`.
    pub fn derive(&self, records: Vec<CorpusRecord>) -> Corpus {
        Corpus {
            records,
            schemas: self.schemas.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// Label value of `record` for `attribute`. For the source attribute the gold
    /// slot falls back to the record's `source` field.
    pub fn label<'a>(&self, record: &'a CorpusRecord, attribute: &str, from: LabelSource) -> Option<&'a str> {
        match from {
            LabelSource::Gold => record.gold_labels.get(attribute).map(String::as_str).or_else(|| {
                match self.schemas.get(attribute) {
                    Some(s) if s.kind == AttributeKind::Source => record.source.as_deref(),
                    _ => None,
                }
            }),
            LabelSource::Predicted => record
                .predicted_labels
                .get(attribute)
                .map(|p| p.value.as_str()),
        }
    }

    pub fn get(&self, id: &str) -> Option<&CorpusRecord> {
        self.records.iter().find(|r| r.id == id)
    }
}

/// Keyed pseudonym for an author name: HMAC-SHA256 over the normalized name,
/// first 16 hex characters.
pub fn pseudonym(name: &str, key: &[u8]) -> Result<String> {
    if key.is_empty() {
        return Err(Error::Config("anonymization key must be non-empty".into()));
    }
    let mut mac = Hmac::<Sha256>::new_from_slice(key).expect("HMAC accepts keys of any length");
    mac.update(normalize_name(name).as_bytes());
    let digest = mac.finalize().into_bytes();
    let mut hex = hex::encode(digest);
    hex.truncate(16);
    Ok(hex)
}

/// Replaces every author name with its keyed pseudonym.
pub fn anonymize(corpus: &Corpus, key: &[u8]) -> Result<Corpus> {
    if key.is_empty() {
        return Err(Error::Config("anonymization key must be non-empty".into()));
    }
    let records = corpus
        .records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            if let Some(name) = r.author_name.take() {
                r.author_pseudonym = Some(pseudonym(&name, key)?);
            }
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(corpus.derive(records))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub record_id: String,
    pub field: String,
    pub reason: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}: {}", self.record_id, self.field, self.reason)
    }
}

/// Checks every record invariant. An empty result means the corpus is valid.
pub fn validate(corpus: &Corpus) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |id: &str, field: String, reason: String| {
        out.push(Violation {
            record_id: id.to_string(),
            field,
            reason,
        })
    };
    let mut seen = HashSet::new();
    let source_schema = corpus
        .schemas
        .of_kind(AttributeKind::Source)
        .next();

    for r in &corpus.records {
        if r.id.is_empty() {
            push(&r.id, "id".into(), "empty id".into());
        }
        if !seen.insert(r.id.as_str()) {
            push(&r.id, "id".into(), "duplicate id".into());
        }
        if let (Some(src), Some(schema)) = (&r.source, source_schema) {
            if !schema.contains(src) {
                push(&r.id, "source".into(), format!("{src:?} not in {}", schema.name));
            }
        }
        for (attr, value) in &r.gold_labels {
            match corpus.schemas.get(attr) {
                None => push(&r.id, format!("gold_labels.{attr}"), "unknown attribute".into()),
                Some(s) if !s.contains(value) => push(
                    &r.id,
                    format!("gold_labels.{attr}"),
                    format!("{value:?} not in schema values"),
                ),
                _ => {}
            }
        }
        for (attr, pred) in &r.predicted_labels {
            let field = format!("predicted_labels.{attr}");
            match corpus.schemas.get(attr) {
                None => push(&r.id, field.clone(), "unknown attribute".into()),
                Some(s) if !s.contains(&pred.value) => push(
                    &r.id,
                    field.clone(),
                    format!("{:?} not in schema values", pred.value),
                ),
                _ => {}
            }
            if !(0.0..=1.0).contains(&pred.prob) {
                push(&r.id, field, format!("probability {} outside [0,1]", pred.prob));
            }
        }
        if let Some(path) = &r.enriched.ethnicity_path {
            if !taxonomy::is_valid_path(&path.levels) {
                push(
                    &r.id,
                    "enriched.ethnicity_path".into(),
                    format!("{:?} is not a taxonomy path", path.levels),
                );
            }
            if !(0.0..=1.0).contains(&path.confidence) {
                push(
                    &r.id,
                    "enriched.ethnicity_path".into(),
                    format!("confidence {} outside [0,1]", path.confidence),
                );
            }
        }
    }
    out
}
