//! Batch stages over files: sample, spam-filter, train, predict, enrich, analyze.
//! Every output is written atomically, and reruns on the same inputs produce
//! the same bytes.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    distribution_table, enrichment_table, eval_table, export_table, label_count_table, label_counts, AttributeRef,
    ReportTable, TableFormat,
};
use crate::classifier::{load_model, save_model, Hyperparams, TrainedModel};
use crate::config::{require_path, EnrichmentConfig, PipelineConfig, ProviderKind};
use crate::corpus::{load_corpus, write_corpus, Corpus, Format, LabelSource, WriteOptions};
use crate::enrichment::{
    enrich, load_ethnicity_examples, load_name_db, CachedProvider, EnrichOptions, EnrichmentSummary,
    EthnicityPath, EthnicityProvider, LocalProvider, NameGenderDb, RemoteProvider, UreqTransport,
};
use crate::error::{Error, Result};
use crate::evaluation::{annotate_corpus, train_attribute, CvConfig, EvalReport};
use crate::features::FeatureConfig;
use crate::sampling::{sample, spam_filter, SamplingPlan, SamplingReport, SpamFilterOutcome, SpamRuleSet};
use crate::util::write_atomic;

pub const MODEL_SUFFIX: &str = ".model.json";
pub const EVAL_REPORTS_FILE: &str = "eval_reports.json";

pub fn load(path: &Path) -> Result<Corpus> {
    load_corpus(path, Format::from_path(path))
}

pub fn save(corpus: &Corpus, path: &Path) -> Result<()> {
    write_corpus(corpus, path, Format::from_path(path), &WriteOptions::default())
}

/// `Against/For` → `against_for`.
pub fn slug(attribute: &str) -> String {
    let mut out = String::new();
    for c in attribute.chars() {
        if c.is_alphanumeric() {
            out.extend(c.to_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

pub fn model_path(models_dir: &Path, attribute: &str) -> PathBuf {
    models_dir.join(format!("{}{MODEL_SUFFIX}", slug(attribute)))
}

/// Writes `table` once per format as `<dir>/<stem>.<ext>`.
pub fn write_table(dir: &Path, stem: &str, table: &ReportTable, formats: &[TableFormat]) -> Result<Vec<PathBuf>> {
    formats
        .iter()
        .map(|&f| {
            let path = dir.join(format!("{stem}.{}", f.extension()));
            write_atomic(&path, export_table(table, f).as_bytes())?;
            Ok(path)
        })
        .collect()
}

pub fn run_sample(input: &Path, output: &Path, plan: &SamplingPlan) -> Result<SamplingReport> {
    let corpus = load(input)?;
    let (sampled, report) = sample(&corpus, plan)?;
    save(&sampled, output)?;
    Ok(report)
}

pub fn run_spamfilter(input: &Path, output: &Path, rules: &SpamRuleSet) -> Result<SpamFilterOutcome> {
    let corpus = load(input)?;
    let outcome = spam_filter(&corpus, rules);
    save(&outcome.kept, output)?;
    Ok(outcome)
}

/// Attributes to train: the requested ones, or every schema attribute.
pub fn training_attributes(corpus: &Corpus, requested: &[String]) -> Result<Vec<String>> {
    if requested.is_empty() {
        return Ok(corpus.schemas.names().map(str::to_string).collect());
    }
    for a in requested {
        corpus.schemas.require(a)?;
    }
    Ok(requested.to_vec())
}

/// Cross-validates and fits one model per attribute, saves each model under
/// `models_dir`, and writes the reports and the evaluation table to `out_dir`.
pub fn run_train(
    sampled: &Path,
    attributes: &[String],
    cv: &CvConfig,
    features: &FeatureConfig,
    models_dir: &Path,
    out_dir: &Path,
    formats: &[TableFormat],
) -> Result<Vec<EvalReport>> {
    let corpus = load(sampled)?;
    let attributes = training_attributes(&corpus, attributes)?;
    let mut reports = Vec::new();
    for attr in &attributes {
        let (model, report) = train_attribute(&corpus, attr, cv, features)?;
        log::info!(
            "{attr}: mean {} overall {:.4} lambda {}",
            report.mean_std(),
            report.overall.unwrap_or(f64::NAN),
            report.chosen.lambda
        );
        save_model(&model, &model_path(models_dir, attr))?;
        reports.push(report);
    }
    let json = serde_json::to_string_pretty(&reports)? + "\n";
    write_atomic(&out_dir.join(EVAL_REPORTS_FILE), json.as_bytes())?;
    write_table(out_dir, "eval", &eval_table(&reports), formats)?;
    Ok(reports)
}

/// Every `*.model.json` under `dir`, in file-name order.
pub fn load_models(dir: &Path) -> Result<Vec<TrainedModel>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Config(format!("models dir {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(MODEL_SUFFIX)))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("no models in {}", dir.display())));
    }
    paths.iter().map(|p| load_model(p)).collect()
}

pub fn run_predict(models_dir: &Path, input: &Path, output: &Path) -> Result<Corpus> {
    let models = load_models(models_dir)?;
    let corpus = load(input)?;
    let labeled = annotate_corpus(&models, &corpus);
    save(&labeled, output)?;
    Ok(labeled)
}

struct NoProvider;

impl EthnicityProvider for NoProvider {
    fn predict(&self, _: &str) -> Result<EthnicityPath> {
        Ok(EthnicityPath::unknown())
    }
}

pub fn build_provider(cfg: &EnrichmentConfig) -> Result<Box<dyn EthnicityProvider>> {
    let base: Box<dyn EthnicityProvider> = match cfg.provider {
        ProviderKind::None => return Ok(Box::new(NoProvider)),
        ProviderKind::Remote => {
            let template = cfg
                .endpoint_template
                .clone()
                .ok_or_else(|| Error::Config("remote provider needs endpoint_template".into()))?;
            let transport = Arc::new(UreqTransport::new(Duration::from_secs(cfg.timeout_secs)));
            Box::new(RemoteProvider::new(template, transport))
        }
        ProviderKind::Local => match (&cfg.local_model, &cfg.local_training) {
            (Some(m), _) if m.exists() => Box::new(LocalProvider::load(m)?),
            (model_out, Some(train)) => {
                let train = require_path(Some(train), "ethnicity training file")?;
                let examples = load_ethnicity_examples(train)?;
                let provider = LocalProvider::train(&examples, &Hyperparams::with_lambda(cfg.local_lambda))?;
                if let Some(m) = model_out {
                    provider.save(m)?;
                }
                Box::new(provider)
            }
            _ => {
                return Err(Error::Config(
                    "local provider needs local_model or local_training".into(),
                ))
            }
        },
    };
    match &cfg.cache_path {
        Some(p) => Ok(Box::new(CachedProvider::open(base, p)?)),
        None => Ok(base),
    }
}

/// Loads the name database, or an empty one when none is configured.
pub fn name_db(path: Option<&PathBuf>) -> Result<NameGenderDb> {
    match path {
        Some(_) => load_name_db(require_path(path, "name database")?),
        None => {
            log::warn!("no name database configured; every gender will be Unknown");
            Ok(NameGenderDb::new())
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn run_enrich(
    input: &Path,
    output: &Path,
    db: &NameGenderDb,
    provider: &dyn EthnicityProvider,
    opts: &EnrichOptions,
    out_dir: &Path,
    formats: &[TableFormat],
) -> Result<EnrichmentSummary> {
    let corpus = load(input)?;
    let (enriched, summary) = enrich(&corpus, db, provider, opts)?;
    save(&enriched, output)?;
    write_table(out_dir, "enrichment", &enrichment_table(&[("corpus", &summary)]), formats)?;
    Ok(summary)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeOutputs {
    pub files: Vec<PathBuf>,
}

/// Label counts (with a gold column from `sampled` when given) and the
/// demographic distribution table.
pub fn run_analyze(
    input: &Path,
    sampled: Option<&Path>,
    rows: &[AttributeRef],
    cols: &[AttributeRef],
    which: LabelSource,
    out_dir: &Path,
    formats: &[TableFormat],
) -> Result<AnalyzeOutputs> {
    let corpus = load(input)?;
    let attrs: Vec<AttributeRef> = corpus
        .schemas
        .names()
        .map(|n| AttributeRef::Label(n.to_string()))
        .collect();
    let main_counts = label_counts(&corpus, &attrs, which)?;
    let sampled_counts = match sampled {
        Some(p) => Some(label_counts(&load(p)?, &attrs, LabelSource::Gold)?),
        None => None,
    };
    let mut columns: Vec<(&str, &[_])> = Vec::new();
    if let Some(s) = &sampled_counts {
        columns.push(("sampled", s));
    }
    columns.push(("corpus", &main_counts));
    let mut files = write_table(out_dir, "label_counts", &label_count_table(&columns), formats)?;
    let (dist, _) = distribution_table(&corpus, rows, cols, which)?;
    files.extend(write_table(out_dir, "distribution", &dist, formats)?);
    Ok(AnalyzeOutputs { files })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineOutputs {
    pub reports: Vec<EvalReport>,
    pub labeled: PathBuf,
    pub enriched: PathBuf,
    pub summary: EnrichmentSummary,
    pub tables: Vec<PathBuf>,
}

pub fn parse_refs(names: &[String]) -> Result<Vec<AttributeRef>> {
    names.iter().map(|n| n.parse()).collect()
}

/// train → predict → enrich → analyze, stopping at the first failing stage.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutputs> {
    cfg.check()?;
    let sampled = require_path(cfg.paths.sampled_corpus.as_ref(), "sampled corpus")?;
    let raw = require_path(cfg.paths.raw_corpus.as_ref(), "raw corpus")?;
    let out = &cfg.paths.output_dir;
    let formats = &cfg.analysis.formats;

    log::info!("train");
    let reports = run_train(
        sampled,
        &cfg.attributes,
        &cfg.cv,
        &cfg.features,
        &cfg.paths.models_dir,
        out,
        formats,
    )?;

    log::info!("predict");
    let labeled = out.join("corpus.labeled.jsonl");
    run_predict(&cfg.paths.models_dir, raw, &labeled)?;

    log::info!("enrich");
    let enriched = out.join("corpus.enriched.jsonl");
    let db = name_db(cfg.paths.name_db.as_ref())?;
    let provider = build_provider(&cfg.enrichment)?;
    let opts = EnrichOptions {
        gender_threshold: cfg.enrichment.gender_threshold,
        max_in_flight: cfg.enrichment.max_in_flight,
    };
    let summary = run_enrich(&labeled, &enriched, &db, provider.as_ref(), &opts, out, formats)?;

    log::info!("analyze");
    let rows = parse_refs(&cfg.analysis.rows)?;
    let cols = parse_refs(&cfg.analysis.cols)?;
    let analyzed = run_analyze(&enriched, Some(sampled), &rows, &cols, cfg.analysis.which, out, formats)?;

    let mut tables = Vec::new();
    for stem in ["eval", "enrichment"] {
        tables.extend(formats.iter().map(|f| out.join(format!("{stem}.{}", f.extension()))));
    }
    tables.extend(analyzed.files);
    Ok(PipelineOutputs {
        reports,
        labeled,
        enriched,
        summary,
        tables,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs() {
        assert_eq!(slug("Against/For"), "against_for");
        assert_eq!(slug("Neoliberalism/Social Good"), "neoliberalism_social_good");
        assert_eq!(slug("Source"), "source");
    }

    #[test]
    fn missing_inputs_are_named() {
        let cfg = PipelineConfig::default();
        let err = run_pipeline(&cfg).unwrap_err().to_string();
        assert!(err.contains("sampled corpus"), "{err}");
    }

    #[test]
    fn none_provider_gives_unknown() {
        let p = build_provider(&EnrichmentConfig::default()).unwrap();
        assert!(p.predict("ann smith").unwrap().is_unknown());
        let remote = EnrichmentConfig {
            provider: ProviderKind::Remote,
            ..Default::default()
        };
        assert!(build_provider(&remote).is_err());
    }
}
