use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the attribute that mirrors a record's `source` field.
pub const SOURCE_ATTRIBUTE: &str = "Source";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Conversational,
    Demographic,
    Source,
}

/// A named categorical attribute and its ordered value set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub name: String,
    pub values: Vec<String>,
    pub kind: AttributeKind,
}

impl AttributeSchema {
    pub fn new<S: Into<String>>(
        name: impl Into<String>,
        values: impl IntoIterator<Item = S>,
        kind: AttributeKind,
    ) -> Result<Self> {
        let schema = AttributeSchema {
            name: name.into(),
            values: values.into_iter().map(Into::into).collect(),
            kind,
        };
        schema.check()?;
        Ok(schema)
    }

    fn check(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Schema("attribute with empty name".into()));
        }
        if self.values.is_empty() {
            return Err(Error::Schema(format!("{}: no values", self.name)));
        }
        let mut seen = HashSet::new();
        for v in &self.values {
            if !seen.insert(v.as_str()) {
                return Err(Error::Schema(format!("{}: duplicate value {v:?}", self.name)));
            }
        }
        Ok(())
    }

    pub fn contains(&self, value: &str) -> bool {
        self.values.iter().any(|v| v == value)
    }

    pub fn position(&self, value: &str) -> Option<usize> {
        self.values.iter().position(|v| v == value)
    }
}

/// Ordered collection of attribute schemas. Serializes as the schema sidecar
/// document `{"attributes": [...]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaSet {
    pub attributes: Vec<AttributeSchema>,
}

impl SchemaSet {
    pub fn new(attributes: Vec<AttributeSchema>) -> Result<Self> {
        let mut seen = HashSet::new();
        for a in &attributes {
            a.check()?;
            if !seen.insert(a.name.as_str()) {
                return Err(Error::Schema(format!("duplicate attribute {:?}", a.name)));
            }
        }
        Ok(SchemaSet { attributes })
    }

    pub fn get(&self, name: &str) -> Option<&AttributeSchema> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&AttributeSchema> {
        self.get(name)
            .ok_or_else(|| Error::UnknownAttribute(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.attributes.iter().map(|a| a.name.as_str())
    }

    /// Attributes a human annotator is asked to label (everything except the source).
    pub fn annotatable(&self) -> impl Iterator<Item = &AttributeSchema> {
        self.attributes
            .iter()
            .filter(|a| a.kind != AttributeKind::Source)
    }

    pub fn of_kind(&self, kind: AttributeKind) -> impl Iterator<Item = &AttributeSchema> {
        self.attributes.iter().filter(move |a| a.kind == kind)
    }

    /// The ten attributes of the tuition-free-college corpus, value sets as
    /// published with the human-annotated data.
    pub fn tuition_defaults() -> Self {
        use AttributeKind::*;
        let table: [(&str, &[&str], AttributeKind); 10] = [
            (SOURCE_ATTRIBUTE, &["CNN", "FOX", "MSN", "White House"], Source),
            ("Gender", &["Female", "Male", "Unknown"], Demographic),
            (
                "Age Category",
                &["29 and Under", "30-49", "50 and Over", "Unknown"],
                Demographic,
            ),
            (
                "Race",
                &[
                    "Asian",
                    "Black",
                    "International",
                    "Latino (a)",
                    "Middle Eastern",
                    "Unknown",
                    "White",
                ],
                Demographic,
            ),
            (
                "Military Family",
                &["Military Family", "Not Military Family", "Undetermined"],
                Demographic,
            ),
            (
                "Political Leaning",
                &["Conservative Leaning", "Liberal Leaning", "Undetermined"],
                Demographic,
            ),
            ("Against/For", &["Against", "For", "Uncommitted"], Conversational),
            (
                "Neoliberalism/Social Good",
                &["Neoliberalism", "Social Good", "Unknown"],
                Conversational,
            ),
            (
                "OnTopic/Not-OnTopic",
                &["Not On-Topic", "On-Topic"],
                Conversational,
            ),
            ("Civil/Uncivil", &["Civil", "Uncivil"], Conversational),
        ];
        let attributes = table
            .iter()
            .map(|(name, values, kind)| AttributeSchema {
                name: name.to_string(),
                values: values.iter().map(|v| v.to_string()).collect(),
                kind: *kind,
            })
            .collect();
        SchemaSet { attributes }
    }
}

impl Default for SchemaSet {
    fn default() -> Self {
        SchemaSet::tuition_defaults()
    }
}

/// Maps alternate spellings of a source page onto the canonical token.
pub fn canonical_source(source: &str) -> &str {
    match source.trim() {
        s if s.eq_ignore_ascii_case("NBC News") || s.eq_ignore_ascii_case("NBC") => "MSN",
        s => s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let s = SchemaSet::tuition_defaults();
        assert!(SchemaSet::new(s.attributes.clone()).is_ok());
        assert_eq!(s.attributes.len(), 10);
        assert_eq!(
            s.get("Against/For").unwrap().values,
            vec!["Against", "For", "Uncommitted"]
        );
        assert_eq!(s.get("Race").unwrap().values.len(), 7);
        assert_eq!(s.annotatable().count(), 9);
    }

    #[test]
    fn rejects_empty_and_duplicate_values() {
        assert!(AttributeSchema::new("X", Vec::<String>::new(), AttributeKind::Demographic).is_err());
        assert!(AttributeSchema::new("X", ["a", "a"], AttributeKind::Demographic).is_err());
    }

    #[test]
    fn nbc_news_aliases_to_msn() {
        assert_eq!(canonical_source("NBC News"), "MSN");
        assert_eq!(canonical_source("MSN"), "MSN");
        assert_eq!(canonical_source("CNN"), "CNN");
    }
}
