//! Author demographics from full names: gender from a name-frequency table,
//! ethnicity from a pluggable provider.

mod ethnicity;
mod gender;
pub mod taxonomy;

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

pub use ethnicity::{
    infer_ethnicity, load_ethnicity_examples, name_hash, parse_distribution, CachedProvider, EthnicityPath,
    EthnicityProvider, LocalProvider, RecordedTransport, RemoteProvider, Transport, UreqTransport,
    LOCAL_MODEL_ATTRIBUTE, MIN_ETHNICITY_CONFIDENCE,
};
pub use gender::{
    check_threshold, gender_from_counts, infer_gender, load_name_db, Gender, NameCounts, NameGenderDb,
    DEFAULT_GENDER_THRESHOLD,
};

use crate::corpus::Corpus;
use crate::error::Result;
use crate::text::normalize_name;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnrichOptions {
    pub gender_threshold: f64,
    /// Upper bound on concurrent provider lookups.
    pub max_in_flight: usize,
}

impl Default for EnrichOptions {
    fn default() -> Self {
        EnrichOptions {
            gender_threshold: DEFAULT_GENDER_THRESHOLD,
            max_in_flight: 8,
        }
    }
}

/// Counts per ethnicity label (Unknown first, then taxonomy leaves) and per gender.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichmentSummary {
    pub ethnicity: Vec<(String, usize)>,
    pub gender: Vec<(Gender, usize)>,
}

impl EnrichmentSummary {
    /// Tabulates the enriched fields already on the corpus. Records without
    /// them count as Unknown.
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let mut eth: HashMap<String, usize> = HashMap::new();
        let mut gen: HashMap<Gender, usize> = HashMap::new();
        for r in &corpus.records {
            let g = r.enriched.gender_pred.unwrap_or(Gender::Unknown);
            *gen.entry(g).or_default() += 1;
            let label = r
                .enriched
                .ethnicity_path
                .as_ref()
                .map(EthnicityPath::label)
                .unwrap_or_else(|| taxonomy::UNKNOWN.to_string());
            *eth.entry(label).or_default() += 1;
        }
        let ethnicity = std::iter::once(taxonomy::UNKNOWN)
            .chain(taxonomy::LEAVES)
            .map(|l| (l.to_string(), eth.get(l).copied().unwrap_or(0)))
            .collect();
        let gender = Gender::ALL
            .iter()
            .map(|g| (*g, gen.get(g).copied().unwrap_or(0)))
            .collect();
        EnrichmentSummary { ethnicity, gender }
    }

    pub fn total(&self) -> usize {
        self.gender.iter().map(|(_, n)| n).sum()
    }

    /// `(row label, count)` pairs: `Ethnicity=Unknown`, the leaves, then `Gender=...`.
    pub fn rows(&self) -> Vec<(String, usize)> {
        let eth = self.ethnicity.iter().map(|(l, n)| {
            let label = if l == taxonomy::UNKNOWN {
                format!("Ethnicity={l}")
            } else {
                l.clone()
            };
            (label, *n)
        });
        let gen = self.gender.iter().map(|(g, n)| (format!("Gender={g}"), *n));
        eth.chain(gen).collect()
    }
}

/// Fills `enriched` on every record. Each distinct normalized name is sent
/// to the provider once, with at most `max_in_flight` lookups running.
pub fn enrich(
    corpus: &Corpus,
    db: &NameGenderDb,
    provider: &dyn EthnicityProvider,
    opts: &EnrichOptions,
) -> Result<(Corpus, EnrichmentSummary)> {
    check_threshold(opts.gender_threshold)?;
    let mut unique: BTreeMap<String, Option<EthnicityPath>> = BTreeMap::new();
    for r in &corpus.records {
        if let Some(name) = r.author_name.as_deref().map(normalize_name).filter(|n| !n.is_empty()) {
            unique.insert(name, None);
        }
    }
    let names: Vec<String> = unique.keys().cloned().collect();
    let resolved = lookup_all(&names, provider, opts.max_in_flight.max(1));
    for (name, path) in names.into_iter().zip(resolved) {
        unique.insert(name, Some(path));
    }

    let mut records = corpus.records.clone();
    for r in &mut records {
        let name = r.author_name.as_deref().map(normalize_name).filter(|n| !n.is_empty());
        match name {
            Some(n) => {
                r.enriched.gender_pred = Some(infer_gender(&n, db, opts.gender_threshold));
                r.enriched.ethnicity_path = unique.get(&n).cloned().flatten();
            }
            None => {
                r.enriched.gender_pred = Some(Gender::Unknown);
                r.enriched.ethnicity_path = Some(EthnicityPath::unknown());
            }
        }
    }
    let out = corpus.derive(records);
    let summary = EnrichmentSummary::from_corpus(&out);
    Ok((out, summary))
}

fn lookup_all(names: &[String], provider: &dyn EthnicityProvider, workers: usize) -> Vec<EthnicityPath> {
    let results: Mutex<Vec<Option<EthnicityPath>>> = Mutex::new(vec![None; names.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..workers.min(names.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(name) = names.get(i) else { break };
                let path = infer_ethnicity(name, provider);
                results.lock().unwrap()[i] = Some(path);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|p| p.unwrap_or_else(EthnicityPath::unknown))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CorpusRecord, SchemaSet};
    use crate::error::Error;
    use std::path::Path;

    struct Counting {
        calls: AtomicUsize,
    }

    impl EthnicityProvider for Counting {
        fn predict(&self, name: &str) -> Result<EthnicityPath> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if name.starts_with("mary") {
                Ok(EthnicityPath::from_leaf("GreaterEuropean-British", 0.9))
            } else {
                Err(Error::Provider("down".into()))
            }
        }
    }

    fn toy_db() -> NameGenderDb {
        NameGenderDb::parse(Path::new("db"), "Mary,F,7065\nMary,M,30\nTaylor,F,4800\nTaylor,M,5200\n").unwrap()
    }

    #[test]
    fn three_record_example() {
        let corpus = Corpus::new(
            vec![
                CorpusRecord::new("1", "a").with_author("Mary Smith"),
                CorpusRecord::new("2", "b").with_author("Taylor Jones"),
                CorpusRecord::new("3", "c").with_author("Zed Q"),
            ],
            SchemaSet::default(),
        );
        let p = Counting { calls: AtomicUsize::new(0) };
        let (out, summary) = enrich(&corpus, &toy_db(), &p, &EnrichOptions::default()).unwrap();
        let gender: BTreeMap<_, _> = summary.gender.iter().cloned().collect();
        assert_eq!(gender[&Gender::Female], 1);
        assert_eq!(gender[&Gender::Male], 0);
        assert_eq!(gender[&Gender::Unknown], 2);
        assert_eq!(
            out.records[0].enriched.ethnicity_path.as_ref().unwrap().label(),
            "GreaterEuropean-British"
        );
        assert!(out.records[1].enriched.ethnicity_path.as_ref().unwrap().is_unknown());
    }

    #[test]
    fn names_are_deduplicated() {
        let records = (0..50)
            .map(|i| CorpusRecord::new(format!("r{i}"), "t").with_author(if i % 2 == 0 { "Mary A" } else { " MARY  a" }))
            .collect();
        let corpus = Corpus::new(records, SchemaSet::default());
        let p = Counting { calls: AtomicUsize::new(0) };
        enrich(&corpus, &toy_db(), &p, &EnrichOptions::default()).unwrap();
        assert_eq!(p.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn nameless_corpus_is_all_unknown() {
        let corpus = Corpus::new(
            (0..4).map(|i| CorpusRecord::new(format!("{i}"), "x")).collect(),
            SchemaSet::default(),
        );
        let p = Counting { calls: AtomicUsize::new(0) };
        let (_, s) = enrich(&corpus, &NameGenderDb::new(), &p, &EnrichOptions::default()).unwrap();
        assert_eq!(s.total(), 4);
        assert_eq!(s.ethnicity[0], ("Unknown".to_string(), 4));
        assert_eq!(s.ethnicity.iter().map(|(_, n)| n).sum::<usize>(), 4);
        assert_eq!(s.rows()[0].0, "Ethnicity=Unknown");
        assert_eq!(s.rows()[14].0, "Gender=Male");
        assert_eq!(p.calls.load(Ordering::SeqCst), 0);
    }
}
