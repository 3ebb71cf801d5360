use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjudicationPolicy {
    /// Modal value; a tie for the top count leaves the item unresolved.
    #[default]
    Majority,
    /// Gold only where every annotator of the item agrees.
    StrictUnanimous,
}

impl std::str::FromStr for AdjudicationPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "majority" => Ok(AdjudicationPolicy::Majority),
            "strict_unanimous" | "strict-unanimous" | "unanimous" => Ok(AdjudicationPolicy::StrictUnanimous),
            other => Err(Error::Config(format!("unknown adjudication policy {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Adjudication {
    pub attribute: String,
    pub gold: BTreeMap<String, String>,
    pub unresolved: Vec<String>,
}

/// Single gold value from one item's votes, or `None` if the policy declines.
pub fn resolve<S: AsRef<str>>(votes: &[S], policy: AdjudicationPolicy) -> Option<String> {
    let first = votes.first()?.as_ref();
    match policy {
        AdjudicationPolicy::StrictUnanimous => votes
            .iter()
            .all(|v| v.as_ref() == first)
            .then(|| first.to_string()),
        AdjudicationPolicy::Majority => {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for v in votes {
                *counts.entry(v.as_ref()).or_default() += 1;
            }
            let top = *counts.values().max()?;
            let mut leaders = counts.iter().filter(|(_, &n)| n == top);
            let (value, _) = leaders.next()?;
            leaders.next().is_none().then(|| value.to_string())
        }
    }
}

/// Writes adjudicated gold values into the matching records.
pub fn apply_gold(corpus: &Corpus, adjudication: &Adjudication) -> Corpus {
    let mut out = corpus.clone();
    for r in &mut out.records {
        if let Some(v) = adjudication.gold.get(&r.id) {
            r.gold_labels.insert(adjudication.attribute.clone(), v.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use AdjudicationPolicy::*;

    #[test]
    fn majority_picks_mode() {
        assert_eq!(resolve(&["For", "For", "Against"], Majority).as_deref(), Some("For"));
    }

    #[test]
    fn majority_tie_is_unresolved() {
        assert_eq!(resolve(&["For", "Against"], Majority), None);
    }

    #[test]
    fn unanimity() {
        assert_eq!(resolve(&["For", "For"], StrictUnanimous).as_deref(), Some("For"));
        assert_eq!(resolve(&["For", "For", "Against"], StrictUnanimous), None);
        assert_eq!(resolve::<&str>(&[], StrictUnanimous), None);
    }
}
