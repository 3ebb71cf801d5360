//! Tokenization, word and character n-grams, vocabulary construction and
//! sparse count vectors.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::text::nfc;

pub const URL_TOKEN: &str = "<url>";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Count,
    Binary,
}

/// What an n-gram is made of.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Analyzer {
    #[default]
    Word,
    /// Character n-grams within each word, words padded with `^` and `$`.
    Char,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub min_df: usize,
    pub lowercase: bool,
    pub weighting: Weighting,
    pub analyzer: Analyzer,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            n_min: 1,
            n_max: 3,
            min_df: 2,
            lowercase: true,
            weighting: Weighting::Count,
            analyzer: Analyzer::Word,
        }
    }
}

impl FeatureConfig {
    pub fn check(&self) -> Result<()> {
        if self.n_min < 1 || self.n_min > self.n_max {
            return Err(Error::Config(format!(
                "n-gram range must satisfy 1 <= n_min <= n_max, got {}..{}",
                self.n_min, self.n_max
            )));
        }
        if self.min_df < 1 {
            return Err(Error::Config("min_df must be >= 1".into()));
        }
        Ok(())
    }

    /// Character 2..4-grams, used for name classification.
    pub fn char_names() -> Self {
        FeatureConfig {
            n_min: 2,
            n_max: 4,
            min_df: 1,
            lowercase: true,
            weighting: Weighting::Count,
            analyzer: Analyzer::Char,
        }
    }

    /// The n-grams of `text` under this configuration.
    pub fn analyze(&self, text: &str) -> Vec<String> {
        match self.analyzer {
            Analyzer::Word => extract_ngrams(&tokenize_with(text, self.lowercase), self.n_min, self.n_max),
            Analyzer::Char => char_ngrams(text, self.n_min, self.n_max, self.lowercase),
        }
    }
}

fn url_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)(?:https?://|www\.)\S+").unwrap())
}

fn is_token_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '\u{2019}'
}

fn push_words(segment: &str, out: &mut Vec<String>) {
    out.extend(
        segment
            .split(|c: char| !is_token_char(c))
            .filter(|t| !t.is_empty())
            .map(str::to_string),
    );
}

/// Lowercasing tokenizer; see [`tokenize_with`].
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_with(text, true)
}

/// NFC-normalizes, optionally lowercases, replaces URLs with `<url>` and splits
/// on runs of characters that are not letters, digits or apostrophes.
pub fn tokenize_with(text: &str, lowercase: bool) -> Vec<String> {
    let mut text = nfc(text);
    if lowercase {
        text = text.to_lowercase();
    }
    let mut out = Vec::new();
    let mut last = 0;
    for m in url_regex().find_iter(&text) {
        push_words(&text[last..m.start()], &mut out);
        out.push(URL_TOKEN.to_string());
        last = m.end();
    }
    push_words(&text[last..], &mut out);
    out
}

/// All contiguous n-grams for n in `n_min..=n_max`, shorter n first, each in
/// document order, joined with a single space.
pub fn extract_ngrams(tokens: &[String], n_min: usize, n_max: usize) -> Vec<String> {
    let mut out = Vec::new();
    for n in n_min.max(1)..=n_max {
        if n > tokens.len() {
            break;
        }
        out.extend(tokens.windows(n).map(|w| w.join(" ")));
    }
    out
}

/// Character n-grams of each whitespace-separated word, the word wrapped as
/// `^word$` so prefixes and suffixes are distinguishable.
pub fn char_ngrams(text: &str, n_min: usize, n_max: usize, lowercase: bool) -> Vec<String> {
    let mut text = nfc(text);
    if lowercase {
        text = text.to_lowercase();
    }
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let padded: Vec<char> = std::iter::once('^')
            .chain(word.chars())
            .chain(std::iter::once('$'))
            .collect();
        for n in n_min.max(1)..=n_max {
            if n > padded.len() {
                break;
            }
            out.extend(padded.windows(n).map(|w| w.iter().collect::<String>()));
        }
    }
    out
}

/// Sparse vector with strictly increasing indices and positive weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    dim: usize,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn new(dim: usize, entries: Vec<(u32, f64)>) -> Result<Self> {
        let mut indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        for (i, v) in entries {
            if (i as usize) >= dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: i as usize + 1,
                });
            }
            if indices.last().is_some_and(|&prev| prev >= i) {
                return Err(Error::Config("sparse indices must be strictly increasing".into()));
            }
            if v.is_nan() || v <= 0.0 {
                return Err(Error::Config(format!("sparse weight must be positive, got {v}")));
            }
            indices.push(i);
            values.push(v);
        }
        Ok(SparseVector { dim, indices, values })
    }

    pub fn empty(dim: usize) -> Self {
        SparseVector {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn to_pairs(&self) -> Vec<(u32, f64)> {
        self.indices.iter().copied().zip(self.values.iter().copied()).collect()
    }

    /// Dot product with a dense row.
    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| dense[i] * v).sum()
    }
}

/// Lexicographically ordered n-gram vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    df: Vec<u32>,
    lookup: HashMap<String, u32>,
    config: FeatureConfig,
}

impl Vocabulary {
    /// Builds a vocabulary keeping n-grams with document frequency >= `min_df`.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, config: &FeatureConfig) -> Result<Self> {
        config.check()?;
        let mut df: BTreeMap<String, u32> = BTreeMap::new();
        for text in texts {
            let unique: HashSet<String> = config.analyze(text).into_iter().collect();
            for g in unique {
                *df.entry(g).or_insert(0) += 1;
            }
        }
        let (terms, df): (Vec<String>, Vec<u32>) = df
            .into_iter()
            .filter(|(_, n)| *n as usize >= config.min_df)
            .unzip();
        if terms.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        Ok(Self::assemble(terms, df, config.clone()))
    }

    /// Rebuilds a vocabulary from stored terms (as read from a model file).
    /// Terms must be sorted and distinct.
    pub fn from_terms(terms: Vec<String>, df: Vec<u32>, config: FeatureConfig) -> Result<Self> {
        config.check()?;
        if terms.len() != df.len() {
            return Err(Error::ModelFormat("vocabulary and df lengths differ".into()));
        }
        if terms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::ModelFormat("vocabulary terms not strictly sorted".into()));
        }
        Ok(Self::assemble(terms, df, config))
    }

    fn assemble(terms: Vec<String>, df: Vec<u32>, config: FeatureConfig) -> Self {
        let lookup = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            terms,
            df,
            lookup,
            config,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, ngram: &str) -> Option<usize> {
        self.lookup.get(ngram).map(|&i| i as usize)
    }

    pub fn term(&self, index: usize) -> Option<&str> {
        self.terms.get(index).map(String::as_str)
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn document_frequency(&self, index: usize) -> Option<u32> {
        self.df.get(index).copied()
    }

    pub fn document_frequencies(&self) -> &[u32] {
        &self.df
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    /// Count (or binary) vector over known n-grams; unknown n-grams are ignored.
    pub fn vectorize(&self, text: &str) -> SparseVector {
        let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
        for g in self.config.analyze(text) {
            if let Some(&i) = self.lookup.get(&g) {
                *counts.entry(i).or_insert(0.0) += 1.0;
            }
        }
        let binary = self.config.weighting == Weighting::Binary;
        SparseVector {
            dim: self.len(),
            indices: counts.keys().copied().collect(),
            values: counts
                .values()
                .map(|&c| if binary { 1.0 } else { c })
                .collect(),
        }
    }
}

/// Vocabulary over the texts of every record in `corpus`.
pub fn build_vocab(corpus: &Corpus, config: &FeatureConfig) -> Result<Vocabulary> {
    Vocabulary::build(corpus.records.iter().map(|r| r.text.as_str()), config)
}

pub fn vectorize(text: &str, vocab: &Vocabulary) -> SparseVector {
    vocab.vectorize(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Free college NOW!!"), toks(&["free", "college", "now"]));
        assert_eq!(tokenize("don't stop"), toks(&["don't", "stop"]));
        assert_eq!(tokenize("see http://a.b/c now"), toks(&["see", "<url>", "now"]));
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize_with("Free", false), toks(&["Free"]));
    }

    #[test]
    fn tokenize_keeps_unicode_letters() {
        assert_eq!(tokenize("Educación gratis"), toks(&["educación", "gratis"]));
    }

    #[test]
    fn ngram_examples() {
        assert_eq!(
            extract_ngrams(&toks(&["a", "b", "c"]), 1, 2),
            toks(&["a", "b", "c", "a b", "b c"])
        );
        assert_eq!(extract_ngrams(&toks(&["a"]), 1, 3), toks(&["a"]));
        assert!(extract_ngrams(&[], 1, 3).is_empty());
    }

    #[test]
    fn char_ngrams_pad_words() {
        let g = char_ngrams("Ez", 2, 3, true);
        assert_eq!(g, toks(&["^e", "ez", "z$", "^ez", "ez$"]));
    }

    #[test]
    fn vocab_respects_min_df() {
        let cfg = FeatureConfig {
            n_max: 1,
            ..FeatureConfig::default()
        };
        let v = Vocabulary::build(["free stuff", "free rare"], &cfg).unwrap();
        assert!(v.index_of("free").is_some());
        assert!(v.index_of("rare").is_none());
    }

    #[test]
    fn vocab_is_lexicographic() {
        let cfg = FeatureConfig {
            n_max: 2,
            min_df: 1,
            ..FeatureConfig::default()
        };
        let v = Vocabulary::build(["a b", "b c"], &cfg).unwrap();
        assert_eq!(v.terms(), &toks(&["a", "a b", "b", "b c", "c"])[..]);
        assert_eq!(v.index_of("b c"), Some(3));
        assert_eq!(v.document_frequency(2), Some(2));
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        let cfg = FeatureConfig::default();
        assert!(matches!(Vocabulary::build(["once"], &cfg), Err(Error::EmptyVocabulary)));
        assert!(matches!(Vocabulary::build([], &cfg), Err(Error::EmptyVocabulary)));
    }

    #[test]
    fn vectorize_counts_and_binary() {
        let cfg = FeatureConfig {
            n_max: 1,
            min_df: 1,
            ..FeatureConfig::default()
        };
        // lexicographic: college=0, free=1
        let v = Vocabulary::build(["free college"], &cfg).unwrap();
        assert_eq!(v.vectorize("free free college").to_pairs(), vec![(0, 1.0), (1, 2.0)]);
        assert!(v.vectorize("nothing known").is_empty());

        let bin = Vocabulary::build(
            ["free college"],
            &FeatureConfig {
                weighting: Weighting::Binary,
                ..cfg
            },
        )
        .unwrap();
        assert_eq!(bin.vectorize("free free college").to_pairs(), vec![(0, 1.0), (1, 1.0)]);
    }

    #[test]
    fn vectorize_with_explicit_vocab_order() {
        // vocab {free:0, college:1} as in a hand-built model file
        let cfg = FeatureConfig {
            n_max: 1,
            min_df: 1,
            ..FeatureConfig::default()
        };
        let v = Vocabulary::build(["free college"], &cfg).unwrap();
        let free = v.index_of("free").unwrap();
        let college = v.index_of("college").unwrap();
        let x = v.vectorize("free free college");
        let got: BTreeMap<usize, f64> = x.iter().collect();
        assert_eq!(got[&free], 2.0);
        assert_eq!(got[&college], 1.0);
    }

    #[test]
    fn sparse_vector_invariants() {
        assert!(SparseVector::new(3, vec![(0, 1.0), (2, 2.0)]).is_ok());
        assert!(SparseVector::new(3, vec![(2, 1.0), (1, 2.0)]).is_err());
        assert!(SparseVector::new(3, vec![(3, 1.0)]).is_err());
        assert!(SparseVector::new(3, vec![(0, 0.0)]).is_err());
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = FeatureConfig {
            n_min: 3,
            n_max: 1,
            ..FeatureConfig::default()
        };
        assert!(cfg.check().is_err());
    }
}
