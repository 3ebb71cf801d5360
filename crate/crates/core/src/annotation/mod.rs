//! Multi-annotator label store with an append-only event log, agreement
//! metrics, adjudication and task assignment.

mod adjudication;
mod agreement;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, CorpusRecord};
use crate::error::{Error, Result};
use crate::util::read_to_string;

pub use adjudication::{apply_gold, resolve, Adjudication, AdjudicationPolicy};
pub use agreement::{cohens_kappa, percent_agreement, AgreementReport};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationEvent {
    pub item_id: String,
    pub annotator_id: String,
    pub attribute: String,
    pub value: String,
    pub timestamp: DateTime<Utc>,
}

/// Body of `POST /api/labels`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSubmission {
    pub item_id: String,
    pub annotator: String,
    pub attribute: String,
    pub value: String,
}

impl LabelSubmission {
    pub fn into_event(self, timestamp: DateTime<Utc>) -> AnnotationEvent {
        AnnotationEvent {
            item_id: self.item_id,
            annotator_id: self.annotator,
            attribute: self.attribute,
            value: self.value,
            timestamp,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub labeled: usize,
    pub total: usize,
}

#[derive(Clone, Debug)]
struct Cell {
    value: String,
    timestamp: DateTime<Utc>,
}

type CellKey = (String, String, String);

/// Label store over a fixed set of items. The event log is the source of
/// truth; the current-value view is derived from it with last-write-wins by
/// timestamp (log order breaks ties).
#[derive(Debug)]
pub struct AnnotationStore {
    items: Corpus,
    by_id: BTreeMap<String, usize>,
    log: Vec<AnnotationEvent>,
    current: BTreeMap<CellKey, Cell>,
    log_file: Option<(PathBuf, File)>,
}

impl AnnotationStore {
    pub fn new(items: Corpus) -> Self {
        let by_id = items
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.clone(), i))
            .collect();
        AnnotationStore {
            items,
            by_id,
            log: Vec::new(),
            current: BTreeMap::new(),
            log_file: None,
        }
    }

    /// Rebuilds the store from an existing log without writing to it.
    pub fn replay(items: Corpus, log_path: &Path) -> Result<Self> {
        let mut store = AnnotationStore::new(items);
        if log_path.exists() {
            let content = read_to_string(log_path)?;
            for (i, line) in content.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let event: AnnotationEvent = serde_json::from_str(line)
                    .map_err(|e| Error::parse(log_path, i + 1, e.to_string()))?;
                store
                    .check(&event)
                    .map_err(|e| Error::parse(log_path, i + 1, e.to_string()))?;
                store.apply(event);
            }
        }
        Ok(store)
    }

    /// Opens a store backed by a JSONL event log, replaying any existing events.
    /// New events are appended to the file before they take effect.
    pub fn open(items: Corpus, log_path: &Path) -> Result<Self> {
        let mut store = Self::replay(items, log_path)?;
        if let Some(dir) = log_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(log_path)
            .map_err(|e| Error::io(log_path, e))?;
        store.log_file = Some((log_path.to_path_buf(), file));
        Ok(store)
    }

    pub fn items(&self) -> &Corpus {
        &self.items
    }

    pub fn events(&self) -> &[AnnotationEvent] {
        &self.log
    }

    fn check(&self, event: &AnnotationEvent) -> Result<()> {
        if !self.by_id.contains_key(&event.item_id) {
            return Err(Error::Rejected(format!("unknown item {:?}", event.item_id)));
        }
        if event.annotator_id.trim().is_empty() {
            return Err(Error::Rejected("empty annotator id".into()));
        }
        let schema = self
            .items
            .schemas
            .get(&event.attribute)
            .ok_or_else(|| Error::Rejected(format!("unknown attribute {:?}", event.attribute)))?;
        if !schema.contains(&event.value) {
            return Err(Error::Rejected(format!(
                "value {:?} not allowed for {}",
                event.value, event.attribute
            )));
        }
        Ok(())
    }

    fn apply(&mut self, event: AnnotationEvent) {
        let key = (
            event.item_id.clone(),
            event.annotator_id.clone(),
            event.attribute.clone(),
        );
        let newer = self
            .current
            .get(&key)
            .is_none_or(|c| event.timestamp >= c.timestamp);
        if newer {
            self.current.insert(
                key,
                Cell {
                    value: event.value.clone(),
                    timestamp: event.timestamp,
                },
            );
        }
        self.log.push(event);
    }

    /// Validates and records one label. Rejected events leave the store unchanged.
    pub fn record_label(&mut self, event: AnnotationEvent) -> Result<()> {
        self.check(&event)?;
        if let Some((path, file)) = &mut self.log_file {
            let mut line = serde_json::to_string(&event)?;
            line.push('\n');
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|e| Error::io(path.clone(), e))?;
        }
        self.apply(event);
        Ok(())
    }

    /// Records a submission stamped with the current time.
    pub fn submit(&mut self, submission: LabelSubmission) -> Result<AnnotationEvent> {
        let event = submission.into_event(Utc::now());
        self.record_label(event.clone())?;
        Ok(event)
    }

    pub fn current_label(&self, item_id: &str, annotator_id: &str, attribute: &str) -> Option<&str> {
        self.current
            .get(&(item_id.to_string(), annotator_id.to_string(), attribute.to_string()))
            .map(|c| c.value.as_str())
    }

    pub fn annotators(&self) -> BTreeSet<&str> {
        self.current.keys().map(|(_, a, _)| a.as_str()).collect()
    }

    /// Current values for `attribute`: item -> annotator -> value.
    pub fn labels_for(&self, attribute: &str) -> BTreeMap<&str, BTreeMap<&str, &str>> {
        let mut out: BTreeMap<&str, BTreeMap<&str, &str>> = BTreeMap::new();
        for ((item, annotator, attr), cell) in &self.current {
            if attr == attribute {
                out.entry(item.as_str())
                    .or_default()
                    .insert(annotator.as_str(), cell.value.as_str());
            }
        }
        out
    }

    /// Value pairs for items labeled by both annotators.
    pub fn co_labeled(&self, attribute: &str, first: &str, second: &str) -> Vec<(&str, &str)> {
        self.labels_for(attribute)
            .values()
            .filter_map(|m| Some((*m.get(first)?, *m.get(second)?)))
            .collect()
    }

    pub fn percent_agreement(&self, attribute: &str, pair: (&str, &str)) -> Result<f64> {
        percent_agreement(&self.co_labeled(attribute, pair.0, pair.1))
            .ok_or_else(|| Error::NoOverlap(pair.0.into(), pair.1.into()))
    }

    pub fn cohens_kappa(&self, attribute: &str, pair: (&str, &str)) -> Result<f64> {
        cohens_kappa(&self.co_labeled(attribute, pair.0, pair.1))
            .ok_or_else(|| Error::NoOverlap(pair.0.into(), pair.1.into()))
    }

    pub fn pair_report(&self, attribute: &str, pair: (&str, &str)) -> Result<AgreementReport> {
        self.items.schemas.require(attribute)?;
        let pairs = self.co_labeled(attribute, pair.0, pair.1);
        let no_overlap = || Error::NoOverlap(pair.0.into(), pair.1.into());
        Ok(AgreementReport {
            attribute: attribute.to_string(),
            annotators: vec![pair.0.to_string(), pair.1.to_string()],
            n_items: pairs.len(),
            percent_agreement: percent_agreement(&pairs).ok_or_else(no_overlap)?,
            kappa: cohens_kappa(&pairs).ok_or_else(no_overlap)?,
            pairs: Vec::new(),
        })
    }

    /// Agreement over every annotator pair with overlap. With exactly two
    /// annotators this is their pair report; otherwise scores are pairwise means.
    pub fn agreement(&self, attribute: &str) -> Result<AgreementReport> {
        self.items.schemas.require(attribute)?;
        let annotators: Vec<&str> = self
            .labels_for(attribute)
            .values()
            .flat_map(|m| m.keys().copied())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut reports = Vec::new();
        for (i, a) in annotators.iter().enumerate() {
            for b in &annotators[i + 1..] {
                if let Ok(r) = self.pair_report(attribute, (a, b)) {
                    reports.push(r);
                }
            }
        }
        match reports.len() {
            0 => Err(Error::NoOverlap(
                annotators.first().unwrap_or(&"").to_string(),
                annotators.get(1).unwrap_or(&"").to_string(),
            )),
            1 => Ok(reports.pop().unwrap()),
            n => {
                let mean = |f: fn(&AgreementReport) -> f64| reports.iter().map(f).sum::<f64>() / n as f64;
                Ok(AgreementReport {
                    attribute: attribute.to_string(),
                    annotators: annotators.iter().map(|s| s.to_string()).collect(),
                    n_items: reports.iter().map(|r| r.n_items).sum(),
                    percent_agreement: mean(|r| r.percent_agreement),
                    kappa: mean(|r| r.kappa),
                    pairs: reports,
                })
            }
        }
    }

    pub fn adjudicate(&self, attribute: &str, policy: AdjudicationPolicy) -> Result<Adjudication> {
        self.items.schemas.require(attribute)?;
        let mut out = Adjudication {
            attribute: attribute.to_string(),
            ..Adjudication::default()
        };
        for (item, votes) in self.labels_for(attribute) {
            let votes: Vec<&str> = votes.values().copied().collect();
            match resolve(&votes, policy) {
                Some(v) => {
                    out.gold.insert(item.to_string(), v);
                }
                None => out.unresolved.push(item.to_string()),
            }
        }
        Ok(out)
    }

    fn is_complete(&self, item_id: &str, annotator_id: &str) -> bool {
        self.items.schemas.annotatable().all(|a| {
            self.current_label(item_id, annotator_id, &a.name).is_some()
        })
    }

    /// Lowest-id item this annotator has not labeled on every annotatable attribute.
    pub fn next_task(&self, annotator_id: &str) -> Option<&CorpusRecord> {
        self.by_id
            .iter()
            .find(|(id, _)| !self.is_complete(id, annotator_id))
            .map(|(_, &i)| &self.items.records[i])
    }

    pub fn progress(&self, annotator_id: &str) -> Progress {
        Progress {
            labeled: self
                .by_id
                .keys()
                .filter(|id| self.is_complete(id, annotator_id))
                .count(),
            total: self.by_id.len(),
        }
    }
}
