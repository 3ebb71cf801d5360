//! Selection of the human-annotation subsample: top-k by likes per group,
//! stratified fractions, and heuristic spam removal.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, CorpusRecord, LabelSource};
use crate::error::{Error, Result};
use crate::features::{tokenize, URL_TOKEN};

/// Group key used for records lacking a value for the grouping attribute.
pub const MISSING_GROUP: &str = "(missing)";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    RandomFraction,
    Stratified,
    TopKPerGroup,
}

impl std::str::FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" | "random-fraction" | "random_fraction" => Ok(SamplingMode::RandomFraction),
            "stratified" => Ok(SamplingMode::Stratified),
            "top-k" | "top_k" | "top_k_per_group" => Ok(SamplingMode::TopKPerGroup),
            other => Err(Error::Config(format!("unknown sampling mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingPlan {
    pub mode: SamplingMode,
    pub fraction: f64,
    pub k: usize,
    pub group_attr: Option<String>,
    pub seed: u64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        SamplingPlan {
            mode: SamplingMode::RandomFraction,
            fraction: 0.1,
            k: 1000,
            group_attr: None,
            seed: 42,
        }
    }
}

impl SamplingPlan {
    pub fn check(&self, corpus: &Corpus) -> Result<()> {
        match self.mode {
            SamplingMode::RandomFraction | SamplingMode::Stratified => {
                if !(self.fraction > 0.0 && self.fraction <= 1.0) {
                    return Err(Error::Config(format!(
                        "fraction must be in (0, 1], got {}",
                        self.fraction
                    )));
                }
            }
            SamplingMode::TopKPerGroup => {
                if self.k == 0 {
                    return Err(Error::Config("k must be positive".into()));
                }
            }
        }
        if self.mode != SamplingMode::RandomFraction {
            let attr = self
                .group_attr
                .as_deref()
                .ok_or_else(|| Error::Config("sampling mode needs a group attribute".into()))?;
            check_group_attr(corpus, attr)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplingReport {
    /// Selected count per stratum (or group), in stratum order.
    pub allocation: Vec<(String, usize)>,
    /// Strata known to the schema that had no records.
    pub skipped_strata: Vec<String>,
}

fn check_group_attr(corpus: &Corpus, attr: &str) -> Result<()> {
    if attr == "source" || corpus.schemas.get(attr).is_some() {
        Ok(())
    } else {
        Err(Error::UnknownAttribute(attr.to_string()))
    }
}

fn group_of<'a>(corpus: &Corpus, record: &'a CorpusRecord, attr: &str) -> Option<&'a str> {
    if attr == "source" {
        return record.source.as_deref();
    }
    corpus
        .label(record, attr, LabelSource::Gold)
        .or_else(|| corpus.label(record, attr, LabelSource::Predicted))
}

/// Runs whichever selection `plan.mode` names.
pub fn sample(corpus: &Corpus, plan: &SamplingPlan) -> Result<(Corpus, SamplingReport)> {
    plan.check(corpus)?;
    match plan.mode {
        SamplingMode::TopKPerGroup => {
            let attr = plan.group_attr.as_deref().unwrap_or("source");
            let out = top_k_by_engagement(corpus, plan.k, attr)?;
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for r in &out.records {
                *counts
                    .entry(group_of(corpus, r, attr).unwrap_or(MISSING_GROUP).to_string())
                    .or_default() += 1;
            }
            Ok((
                out,
                SamplingReport {
                    allocation: counts.into_iter().collect(),
                    skipped_strata: Vec::new(),
                },
            ))
        }
        SamplingMode::RandomFraction | SamplingMode::Stratified => stratified_sample(corpus, plan),
    }
}

/// The `k` most-liked records of each group. Ties go to the smaller id.
/// Output is ordered by group, then likes descending, then id ascending.
pub fn top_k_by_engagement(corpus: &Corpus, k: usize, group_attr: &str) -> Result<Corpus> {
    check_group_attr(corpus, group_attr)?;
    let missing: Vec<String> = corpus
        .records
        .iter()
        .filter(|r| r.likes.is_none())
        .map(|r| r.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingLikes(missing));
    }

    let mut groups: BTreeMap<&str, Vec<&CorpusRecord>> = BTreeMap::new();
    for r in &corpus.records {
        groups
            .entry(group_of(corpus, r, group_attr).unwrap_or(MISSING_GROUP))
            .or_default()
            .push(r);
    }
    let mut out = Vec::new();
    for (_, mut members) in groups {
        members.sort_by(|a, b| b.likes.cmp(&a.likes).then_with(|| a.id.cmp(&b.id)));
        out.extend(members.into_iter().take(k).cloned());
    }
    Ok(corpus.derive(out))
}

/// Largest-remainder allocation of `round(fraction * total)` across strata.
pub fn allocate(sizes: &[usize], fraction: f64) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let target = (fraction * total as f64).round() as usize;
    let quotas: Vec<f64> = sizes.iter().map(|&n| fraction * n as f64).collect();
    let mut alloc: Vec<usize> = quotas
        .iter()
        .zip(sizes)
        .map(|(q, &n)| (q.floor() as usize).min(n))
        .collect();
    let assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut remaining = target.saturating_sub(assigned);
    for &s in order.iter().cycle().take(order.len() * 2) {
        if remaining == 0 {
            break;
        }
        if alloc[s] < sizes[s] {
            alloc[s] += 1;
            remaining -= 1;
        }
    }
    alloc
}

/// Seeded sample of `fraction` of the corpus, allocated proportionally over the
/// strata of `plan.group_attr` (a single stratum when no attribute is given).
/// Selected records keep their corpus order.
pub fn stratified_sample(corpus: &Corpus, plan: &SamplingPlan) -> Result<(Corpus, SamplingReport)> {
    plan.check(corpus)?;
    let attr = match plan.mode {
        SamplingMode::RandomFraction => None,
        _ => plan.group_attr.as_deref(),
    };

    let mut strata: Vec<(String, Vec<usize>)> = Vec::new();
    let mut skipped = Vec::new();
    match attr {
        None => strata.push(("(all)".to_string(), (0..corpus.len()).collect())),
        Some(attr) => {
            let mut by_value: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, r) in corpus.records.iter().enumerate() {
                by_value
                    .entry(group_of(corpus, r, attr).unwrap_or(MISSING_GROUP))
                    .or_default()
                    .push(i);
            }
            let declared: Vec<String> = if attr == "source" {
                corpus
                    .schemas
                    .of_kind(crate::corpus::AttributeKind::Source)
                    .flat_map(|s| s.values.clone())
                    .collect()
            } else {
                corpus.schemas.get(attr).map(|s| s.values.clone()).unwrap_or_default()
            };
            for value in &declared {
                match by_value.remove(value.as_str()) {
                    Some(idx) => strata.push((value.clone(), idx)),
                    None => skipped.push(value.clone()),
                }
            }
            strata.extend(by_value.into_iter().map(|(v, idx)| (v.to_string(), idx)));
        }
    }

    let sizes: Vec<usize> = strata.iter().map(|(_, idx)| idx.len()).collect();
    let alloc = allocate(&sizes, plan.fraction);
    let mut chosen = Vec::new();
    for (stream, ((_, idx), &n)) in strata.iter().zip(&alloc).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
        rng.set_stream(stream as u64);
        let mut idx = idx.clone();
        idx.shuffle(&mut rng);
        chosen.extend_from_slice(&idx[..n]);
    }
    chosen.sort_unstable();
    let records = chosen.into_iter().map(|i| corpus.records[i].clone()).collect();
    let report = SamplingReport {
        allocation: strata
            .iter()
            .map(|(name, _)| name.clone())
            .zip(alloc)
            .collect(),
        skipped_strata: skipped,
    };
    Ok((corpus.derive(records), report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpamRuleSet {
    pub min_tokens: usize,
    pub max_url_fraction: f64,
    pub drop_exact_duplicates: bool,
}

impl Default for SpamRuleSet {
    fn default() -> Self {
        SpamRuleSet {
            min_tokens: 2,
            max_url_fraction: 0.5,
            drop_exact_duplicates: true,
        }
    }
}

impl SpamRuleSet {
    /// Rules that remove nothing.
    pub fn permissive() -> Self {
        SpamRuleSet {
            min_tokens: 0,
            max_url_fraction: 1.0,
            drop_exact_duplicates: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SpamReason {
    TooFewTokens { tokens: usize, min: usize },
    TooManyUrls { fraction: f64, max: f64 },
    Duplicate { first_id: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpamFilterOutcome {
    pub kept: Corpus,
    pub removed: Corpus,
    /// Why each removed record was removed, in `removed` order.
    pub reasons: Vec<(String, Vec<SpamReason>)>,
}

/// Splits the corpus into kept and removed records. Every removal carries at
/// least one reason; a record is kept only if no rule fires.
pub fn spam_filter(corpus: &Corpus, rules: &SpamRuleSet) -> SpamFilterOutcome {
    let mut first_seen: BTreeMap<&str, &str> = BTreeMap::new();
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    let mut reasons = Vec::new();

    for r in &corpus.records {
        let tokens = tokenize(&r.text);
        let mut why = Vec::new();
        if tokens.len() < rules.min_tokens {
            why.push(SpamReason::TooFewTokens {
                tokens: tokens.len(),
                min: rules.min_tokens,
            });
        }
        let urls = tokens.iter().filter(|t| *t == URL_TOKEN).count();
        let fraction = if tokens.is_empty() {
            0.0
        } else {
            urls as f64 / tokens.len() as f64
        };
        if fraction > rules.max_url_fraction {
            why.push(SpamReason::TooManyUrls {
                fraction,
                max: rules.max_url_fraction,
            });
        }
        if rules.drop_exact_duplicates {
            match first_seen.get(r.text.as_str()) {
                Some(first) => why.push(SpamReason::Duplicate {
                    first_id: first.to_string(),
                }),
                None => {
                    first_seen.insert(&r.text, &r.id);
                }
            }
        }
        if why.is_empty() {
            kept.push(r.clone());
        } else {
            reasons.push((r.id.clone(), why));
            removed.push(r.clone());
        }
    }
    SpamFilterOutcome {
        kept: corpus.derive(kept),
        removed: corpus.derive(removed),
        reasons,
    }
}
