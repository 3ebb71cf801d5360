use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{anonymize, canonical_source, AttributeSchema, Corpus, CorpusRecord, SchemaSet};
use crate::error::{Error, Result};
use crate::util::{read_to_string, write_atomic};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    /// Guesses the format from a file extension; anything but `.csv` is JSONL.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(Error::Config(format!("unknown corpus format {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct WriteOptions {
    /// Strip `author_name` from every written record.
    pub anonymize_on_write: bool,
    /// When set together with `anonymize_on_write`, names are replaced by keyed
    /// pseudonyms instead of simply being dropped.
    pub key: Option<Vec<u8>>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    attributes: Vec<AttributeSchema>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    provenance: String,
}

/// `data/full.jsonl` -> `data/full.schema.json`.
pub fn schema_sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("schema.json")
}

pub fn load_corpus(path: &Path, format: Format) -> Result<Corpus> {
    load_corpus_with(path, format, None)
}

/// Loads a corpus. Schemas come from `schemas` if given, else from the sidecar
/// next to `path`, else the built-in defaults.
pub fn load_corpus_with(path: &Path, format: Format, schemas: Option<SchemaSet>) -> Result<Corpus> {
    let content = read_to_string(path)?;
    let (schemas, provenance) = match schemas {
        Some(s) => (s, String::new()),
        None => {
            let sidecar = schema_sidecar_path(path);
            if sidecar.exists() {
                let doc: Sidecar = serde_json::from_str(&read_to_string(&sidecar)?)
                    .map_err(|e| Error::parse(&sidecar, e.line(), e.to_string()))?;
                (SchemaSet::new(doc.attributes)?, doc.provenance)
            } else {
                (SchemaSet::default(), String::new())
            }
        }
    };

    let rows = match format {
        Format::Jsonl => parse_jsonl(path, &content)?,
        Format::Csv => parse_csv(path, &content)?,
    };

    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(rows.len());
    for (line, mut rec) in rows {
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId { id: rec.id, line });
        }
        if let Some(src) = &rec.source {
            rec.source = Some(canonical_source(src).to_string());
        }
        records.push(rec);
    }
    Ok(Corpus {
        records,
        schemas,
        provenance,
    })
}

fn parse_jsonl(path: &Path, content: &str) -> Result<Vec<(usize, CorpusRecord)>> {
    content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<CorpusRecord>(l)
                .map(|r| (i + 1, r))
                .map_err(|e| Error::parse(path, i + 1, e.to_string()))
        })
        .collect()
}

const CSV_FIELDS: [&str; 7] = [
    "id",
    "text",
    "source",
    "created_at",
    "likes",
    "author_name",
    "author_pseudonym",
];

fn parse_csv(path: &Path, content: &str) -> Result<Vec<(usize, CorpusRecord)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(content.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    for required in ["id", "text"] {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::parse(path, 1, format!("missing required column {required:?}")));
        }
    }

    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::parse(path, line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let mut rec = CorpusRecord::new("", "");
        for (header, cell) in headers.iter().zip(row.iter()) {
            let opt = || (!cell.is_empty()).then(|| cell.to_string());
            match header {
                "id" => rec.id = cell.to_string(),
                "text" => rec.text = cell.to_string(),
                "source" => rec.source = opt(),
                "author_name" => rec.author_name = opt(),
                "author_pseudonym" => rec.author_pseudonym = opt(),
                "created_at" if !cell.is_empty() => {
                    let ts = chrono::DateTime::parse_from_rfc3339(cell)
                        .map_err(|e| Error::parse(path, line, format!("created_at: {e}")))?;
                    rec.created_at = Some(ts);
                }
                "likes" if !cell.is_empty() => {
                    let likes = cell
                        .parse()
                        .map_err(|e| Error::parse(path, line, format!("likes: {e}")))?;
                    rec.likes = Some(likes);
                }
                "created_at" | "likes" => {}
                attr if !cell.is_empty() => {
                    rec.gold_labels.insert(attr.to_string(), cell.to_string());
                }
                _ => {}
            }
        }
        if rec.id.is_empty() {
            return Err(Error::parse(path, line, "empty id"));
        }
        out.push((line, rec));
    }
    Ok(out)
}

/// Writes records plus the schema sidecar. Both files are replaced atomically.
pub fn write_corpus(corpus: &Corpus, path: &Path, format: Format, opts: &WriteOptions) -> Result<()> {
    let prepared;
    let corpus = if opts.anonymize_on_write {
        let mut c = match &opts.key {
            Some(key) => anonymize(corpus, key)?,
            None => corpus.clone(),
        };
        for r in &mut c.records {
            r.author_name = None;
        }
        prepared = c;
        &prepared
    } else {
        corpus
    };

    let body = match format {
        Format::Jsonl => {
            let mut s = String::new();
            for r in &corpus.records {
                s.push_str(&serde_json::to_string(r)?);
                s.push('\n');
            }
            s.into_bytes()
        }
        Format::Csv => render_csv(corpus).map_err(|e| Error::io(path, e))?,
    };
    write_atomic(path, &body)?;

    let sidecar = Sidecar {
        attributes: corpus.schemas.attributes.clone(),
        provenance: corpus.provenance.clone(),
    };
    let mut doc = serde_json::to_string_pretty(&sidecar)?;
    doc.push('\n');
    write_atomic(&schema_sidecar_path(path), doc.as_bytes())
}

fn render_csv(corpus: &Corpus) -> std::io::Result<Vec<u8>> {
    let with_names = corpus.records.iter().any(|r| r.author_name.is_some());
    let label_columns: Vec<&str> = corpus
        .schemas
        .names()
        .filter(|a| corpus.records.iter().any(|r| r.gold_labels.contains_key(*a)))
        .collect();

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = CSV_FIELDS
        .iter()
        .copied()
        .filter(|f| with_names || *f != "author_name")
        .collect();
    header.extend(&label_columns);
    w.write_record(&header)?;

    for r in &corpus.records {
        let mut row = vec![
            r.id.clone(),
            r.text.clone(),
            r.source.clone().unwrap_or_default(),
            r.created_at.map(|t| t.to_rfc3339()).unwrap_or_default(),
            r.likes.map(|l| l.to_string()).unwrap_or_default(),
        ];
        if with_names {
            row.push(r.author_name.clone().unwrap_or_default());
        }
        row.push(r.author_pseudonym.clone().unwrap_or_default());
        for attr in &label_columns {
            row.push(r.gold_labels.get(*attr).cloned().unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| e.into_error())
}
