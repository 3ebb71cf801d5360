//! Label counts, cross-tabulations and the report tables built from them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{AttributeKind, Corpus, CorpusRecord, LabelSource};
use crate::enrichment::{taxonomy, EnrichmentSummary, EthnicityPath, Gender};
use crate::error::{Error, Result};
use crate::evaluation::EvalReport;

pub const MISSING: &str = "(missing)";

/// Catch-all values left out of distribution-table columns.
pub const RESIDUAL_VALUES: [&str; 3] = ["Uncommitted", "Undetermined", "Unknown"];

/// An attribute read from a record: a label slot or one of the enriched fields.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum AttributeRef {
    Label(String),
    EnrichedGender,
    EnrichedEthnicity,
}

impl FromStr for AttributeRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "" => Err(Error::Config("empty attribute name".into())),
            "enriched.gender" => Ok(AttributeRef::EnrichedGender),
            "enriched.ethnicity" | "enriched.ethnicity_path" => Ok(AttributeRef::EnrichedEthnicity),
            other => Ok(AttributeRef::Label(other.to_string())),
        }
    }
}

impl fmt::Display for AttributeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttributeRef::Label(a) => f.write_str(a),
            AttributeRef::EnrichedGender => f.write_str("enriched.gender"),
            AttributeRef::EnrichedEthnicity => f.write_str("enriched.ethnicity"),
        }
    }
}

impl AttributeRef {
    /// Value order used for table rows and columns.
    pub fn values(&self, corpus: &Corpus) -> Result<Vec<String>> {
        Ok(match self {
            AttributeRef::Label(a) => corpus.schemas.require(a)?.values.clone(),
            AttributeRef::EnrichedGender => [Gender::Female, Gender::Male, Gender::Unknown]
                .iter()
                .map(|g| g.to_string())
                .collect(),
            AttributeRef::EnrichedEthnicity => std::iter::once(taxonomy::UNKNOWN)
                .chain(taxonomy::LEAVES)
                .map(str::to_string)
                .collect(),
        })
    }

    /// The source attribute always reads the record's observed source.
    pub fn value(&self, corpus: &Corpus, record: &CorpusRecord, which: LabelSource) -> Option<String> {
        match self {
            AttributeRef::Label(a) => {
                let is_source = corpus
                    .schemas
                    .get(a)
                    .is_some_and(|s| s.kind == AttributeKind::Source);
                if is_source && record.source.is_some() {
                    return record.source.clone();
                }
                corpus.label(record, a, which).map(str::to_string)
            }
            AttributeRef::EnrichedGender => record.enriched.gender_pred.map(|g| g.to_string()),
            AttributeRef::EnrichedEthnicity => record.enriched.ethnicity_path.as_ref().map(EthnicityPath::label),
        }
    }

    /// Row label as printed in distribution tables, e.g. `Gender=Male`.
    pub fn display_label(&self, value: &str) -> String {
        match self {
            AttributeRef::Label(_) => value.to_string(),
            AttributeRef::EnrichedGender => format!("Gender={value}"),
            AttributeRef::EnrichedEthnicity if value == taxonomy::UNKNOWN => format!("Ethnicity={value}"),
            AttributeRef::EnrichedEthnicity => value.to_string(),
        }
    }
}

/// Appends values seen in the data but absent from `order`, sorted.
fn with_extras(mut order: Vec<String>, seen: &BTreeSet<String>) -> Vec<String> {
    for v in seen {
        if !order.contains(v) {
            order.push(v.clone());
        }
    }
    order
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub attribute: String,
    pub counts: Vec<(String, u64)>,
    pub missing: u64,
}

impl LabelCounts {
    pub fn get(&self, value: &str) -> u64 {
        self.counts
            .iter()
            .find(|(v, _)| v == value)
            .map_or(0, |(_, n)| *n)
    }

    /// Labeled records plus the missing bucket.
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|(_, n)| n).sum::<u64>() + self.missing
    }

    pub fn fraction(&self, value: &str) -> Option<f64> {
        let labeled: u64 = self.counts.iter().map(|(_, n)| n).sum();
        (labeled > 0).then(|| self.get(value) as f64 / labeled as f64)
    }
}

pub fn label_counts(corpus: &Corpus, attributes: &[AttributeRef], which: LabelSource) -> Result<Vec<LabelCounts>> {
    attributes
        .iter()
        .map(|attr| {
            let order = attr.values(corpus)?;
            let mut tally: BTreeMap<String, u64> = BTreeMap::new();
            let mut missing = 0;
            for r in &corpus.records {
                match attr.value(corpus, r, which) {
                    Some(v) => *tally.entry(v).or_default() += 1,
                    None => missing += 1,
                }
            }
            let seen: BTreeSet<String> = tally.keys().cloned().collect();
            let counts = with_extras(order, &seen)
                .into_iter()
                .map(|v| {
                    let n = tally.get(&v).copied().unwrap_or(0);
                    (v, n)
                })
                .collect();
            Ok(LabelCounts {
                attribute: attr.to_string(),
                counts,
                missing,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossTab {
    pub row_attr: String,
    pub col_attr: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    /// Row-normalized counts; all-zero rows stay all zero.
    pub proportions: Vec<Vec<f64>>,
}

impl CrossTab {
    pub fn from_counts(
        row_attr: impl Into<String>,
        col_attr: impl Into<String>,
        row_labels: Vec<String>,
        col_labels: Vec<String>,
        counts: Vec<Vec<u64>>,
    ) -> Result<Self> {
        if counts.len() != row_labels.len() {
            return Err(Error::LengthMismatch(counts.len(), row_labels.len()));
        }
        if let Some(bad) = counts.iter().find(|r| r.len() != col_labels.len()) {
            return Err(Error::LengthMismatch(bad.len(), col_labels.len()));
        }
        let proportions = counts
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
                    .collect()
            })
            .collect();
        Ok(CrossTab {
            row_attr: row_attr.into(),
            col_attr: col_attr.into(),
            row_labels,
            col_labels,
            counts,
            proportions,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_totals(&self) -> Vec<u64> {
        (0..self.col_labels.len())
            .map(|c| self.counts.iter().map(|r| r[c]).sum())
            .collect()
    }

    /// Labels of rows with no records.
    pub fn empty_rows(&self) -> Vec<&str> {
        self.row_labels
            .iter()
            .zip(self.row_totals())
            .filter(|(_, t)| *t == 0)
            .map(|(l, _)| l.as_str())
            .collect()
    }

    pub fn row(&self, label: &str) -> Option<&[f64]> {
        let i = self.row_labels.iter().position(|l| l == label)?;
        Some(&self.proportions[i])
    }

    pub fn transpose(&self) -> CrossTab {
        let counts = (0..self.col_labels.len())
            .map(|c| self.counts.iter().map(|r| r[c]).collect())
            .collect();
        CrossTab::from_counts(
            self.col_attr.clone(),
            self.row_attr.clone(),
            self.col_labels.clone(),
            self.row_labels.clone(),
            counts,
        )
        .expect("transpose preserves shape")
    }

    /// Keeps only the listed columns, in the given order, and renormalizes.
    pub fn restrict_cols(&self, keep: &[String]) -> CrossTab {
        let idx: Vec<usize> = keep
            .iter()
            .filter_map(|k| self.col_labels.iter().position(|l| l == k))
            .collect();
        let counts = self
            .counts
            .iter()
            .map(|r| idx.iter().map(|&i| r[i]).collect())
            .collect();
        let labels = idx.iter().map(|&i| self.col_labels[i].clone()).collect();
        CrossTab::from_counts(self.row_attr.clone(), self.col_attr.clone(), self.row_labels.clone(), labels, counts)
            .expect("restriction preserves shape")
    }

    pub fn to_table(&self, proportions: bool) -> ReportTable {
        let row_ref: AttributeRef = self
            .row_attr
            .parse()
            .unwrap_or_else(|_| AttributeRef::Label(self.row_attr.clone()));
        let mut header = vec![format!("{} / {}", self.row_attr, self.col_attr)];
        header.extend(self.col_labels.iter().cloned());
        let rows = self
            .row_labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let mut row = vec![Cell::Text(row_ref.display_label(l))];
                if proportions {
                    row.extend(self.proportions[i].iter().map(|&p| Cell::Proportion(p)));
                } else {
                    row.extend(self.counts[i].iter().map(|&c| Cell::Count(c)));
                }
                row
            })
            .collect();
        ReportTable {
            title: format!("{} by {}", self.row_attr, self.col_attr),
            header,
            rows,
        }
    }
}

/// Counts of records having both attributes, rows and columns in schema or
/// taxonomy order.
pub fn cross_tab(corpus: &Corpus, row: &AttributeRef, col: &AttributeRef, which: LabelSource) -> Result<CrossTab> {
    let row_order = row.values(corpus)?;
    let col_order = col.values(corpus)?;
    let mut pairs: BTreeMap<(String, String), u64> = BTreeMap::new();
    let mut seen_rows = BTreeSet::new();
    let mut seen_cols = BTreeSet::new();
    for r in &corpus.records {
        if let (Some(a), Some(b)) = (row.value(corpus, r, which), col.value(corpus, r, which)) {
            seen_rows.insert(a.clone());
            seen_cols.insert(b.clone());
            *pairs.entry((a, b)).or_default() += 1;
        }
    }
    let row_labels = with_extras(row_order, &seen_rows);
    let col_labels = with_extras(col_order, &seen_cols);
    let counts = row_labels
        .iter()
        .map(|a| {
            col_labels
                .iter()
                .map(|b| pairs.get(&(a.clone(), b.clone())).copied().unwrap_or(0))
                .collect()
        })
        .collect();
    CrossTab::from_counts(row.to_string(), col.to_string(), row_labels, col_labels, counts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Count(u64),
    Proportion(f64),
    Text(String),
    Empty,
}

impl Cell {
    fn is_numeric(&self) -> bool {
        matches!(self, Cell::Count(_) | Cell::Proportion(_))
    }

    pub fn render(&self) -> String {
        match self {
            Cell::Count(n) => n.to_string(),
            Cell::Proportion(p) => format!("{p:.2}"),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    Markdown,
    Json,
}

impl TableFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TableFormat::Csv => "csv",
            TableFormat::Markdown => "md",
            TableFormat::Json => "json",
        }
    }
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(TableFormat::Csv),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            "json" => Ok(TableFormat::Json),
            other => Err(Error::Config(format!("unknown table format {other:?}"))),
        }
    }
}

/// Proportions print with two decimals in csv and markdown; json keeps full
/// precision so it parses back to an equal table.
pub fn export_table(table: &ReportTable, format: TableFormat) -> String {
    match format {
        TableFormat::Csv => to_csv(table),
        TableFormat::Markdown => to_markdown(table),
        TableFormat::Json => {
            let mut s = serde_json::to_string_pretty(table).expect("tables serialize");
            s.push('\n');
            s
        }
    }
}

pub fn table_from_json(json: &str) -> Result<ReportTable> {
    Ok(serde_json::from_str(json)?)
}

fn to_csv(table: &ReportTable) -> String {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    w.write_record(&table.header).expect("in-memory write");
    for row in &table.rows {
        w.write_record(row.iter().map(Cell::render)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
}

fn to_markdown(table: &ReportTable) -> String {
    let esc = |s: &str| s.replace('|', "\\|");
    let numeric: Vec<bool> = (0..table.header.len())
        .map(|c| table.rows.iter().any(|r| r.get(c).is_some_and(Cell::is_numeric)))
        .collect();
    let mut out = String::new();
    out.push_str("| ");
    out.push_str(&table.header.iter().map(|h| esc(h)).collect::<Vec<_>>().join(" | "));
    out.push_str(" |\n|");
    for &n in &numeric {
        out.push_str(if n { " ---: |" } else { " --- |" });
    }
    out.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = (0..table.header.len())
            .map(|c| row.get(c).map(|x| esc(&x.render())).unwrap_or_default())
            .collect();
        out.push_str("| ");
        out.push_str(&cells.join(" | "));
        out.push_str(" |\n");
    }
    out
}

/// Attribute / value / one count column per corpus. Attributes are sorted by
/// name; the missing bucket appears only when some column has one.
pub fn label_count_table(columns: &[(&str, &[LabelCounts])]) -> ReportTable {
    let mut header = vec!["Attribute".to_string(), "Value".to_string()];
    header.extend(columns.iter().map(|(n, _)| n.to_string()));
    let mut attrs: BTreeSet<&str> = BTreeSet::new();
    for (_, counts) in columns {
        attrs.extend(counts.iter().map(|c| c.attribute.as_str()));
    }
    let find = |counts: &[LabelCounts], a: &str| counts.iter().find(|c| c.attribute == a).cloned();
    let mut rows = Vec::new();
    for attr in attrs {
        let per_col: Vec<Option<LabelCounts>> = columns.iter().map(|(_, c)| find(c, attr)).collect();
        let mut values: Vec<String> = Vec::new();
        for lc in per_col.iter().flatten() {
            for (v, _) in &lc.counts {
                if !values.contains(v) {
                    values.push(v.clone());
                }
            }
        }
        if per_col.iter().flatten().any(|lc| lc.missing > 0) {
            values.push(MISSING.to_string());
        }
        for (i, v) in values.iter().enumerate() {
            let mut row = vec![
                if i == 0 { Cell::Text(attr.to_string()) } else { Cell::Empty },
                Cell::Text(v.clone()),
            ];
            for lc in &per_col {
                row.push(match lc {
                    Some(lc) if v == MISSING => Cell::Count(lc.missing),
                    Some(lc) => Cell::Count(lc.get(v)),
                    None => Cell::Empty,
                });
            }
            rows.push(row);
        }
    }
    ReportTable {
        title: "Label counts".into(),
        header,
        rows,
    }
}

/// Attribute / overall / `mean (std. dev.)` per evaluation report.
pub fn eval_table(reports: &[EvalReport]) -> ReportTable {
    let rows = reports
        .iter()
        .map(|r| {
            vec![
                Cell::Text(r.attribute.clone()),
                r.overall.map_or(Cell::Empty, Cell::Proportion),
                Cell::Text(r.mean_std()),
            ]
        })
        .collect();
    ReportTable {
        title: "Micro-F1 by attribute".into(),
        header: vec!["".into(), "overall".into(), "mean (std. dev.)".into()],
        rows,
    }
}

/// Ethnicity and gender counts, one column per summary.
pub fn enrichment_table(columns: &[(&str, &EnrichmentSummary)]) -> ReportTable {
    let mut header = vec!["Ethnicity/Gender".to_string()];
    header.extend(columns.iter().map(|(n, _)| n.to_string()));
    let labels: Vec<String> = columns
        .first()
        .map(|(_, s)| s.rows().into_iter().map(|(l, _)| l).collect())
        .unwrap_or_default();
    let per_col: Vec<BTreeMap<String, usize>> = columns.iter().map(|(_, s)| s.rows().into_iter().collect()).collect();
    let rows = labels
        .iter()
        .map(|l| {
            let mut row = vec![Cell::Text(l.clone())];
            row.extend(per_col.iter().map(|m| Cell::Count(m.get(l).copied().unwrap_or(0) as u64)));
            row
        })
        .collect();
    ReportTable {
        title: "Predicted gender and ethnicity".into(),
        header,
        rows,
    }
}

/// Column values of `attr` kept in distribution tables.
pub fn distribution_columns(corpus: &Corpus, attr: &AttributeRef) -> Result<Vec<String>> {
    Ok(attr
        .values(corpus)?
        .into_iter()
        .filter(|v| !RESIDUAL_VALUES.contains(&v.as_str()))
        .collect())
}

/// One row per value of each row attribute and, for each column attribute, the
/// row-normalized share of each non-residual value.
pub fn distribution_table(
    corpus: &Corpus,
    rows: &[AttributeRef],
    cols: &[AttributeRef],
    which: LabelSource,
) -> Result<(ReportTable, Vec<CrossTab>)> {
    let mut tabs: Vec<Vec<CrossTab>> = Vec::new();
    for r in rows {
        let mut per_row = Vec::new();
        for c in cols {
            let keep = distribution_columns(corpus, c)?;
            per_row.push(cross_tab(corpus, r, c, which)?.restrict_cols(&keep));
        }
        tabs.push(per_row);
    }
    let mut header = vec![String::new()];
    if let Some(first) = tabs.first() {
        for t in first {
            header.extend(t.col_labels.iter().cloned());
        }
    } else {
        for c in cols {
            header.extend(distribution_columns(corpus, c)?);
        }
    }
    let mut out_rows = Vec::new();
    for (r, per_row) in rows.iter().zip(&tabs) {
        let labels = per_row
            .first()
            .map(|t| t.row_labels.clone())
            .unwrap_or_else(|| r.values(corpus).unwrap_or_default());
        for (i, l) in labels.iter().enumerate() {
            let mut row = vec![Cell::Text(r.display_label(l))];
            for t in per_row {
                row.extend(t.proportions[i].iter().map(|&p| Cell::Proportion(p)));
            }
            out_rows.push(row);
        }
    }
    Ok((
        ReportTable {
            title: "Distribution of conversational attributes across demographic attributes".into(),
            header,
            rows: out_rows,
        },
        tabs.into_iter().flatten().collect(),
    ))
}
