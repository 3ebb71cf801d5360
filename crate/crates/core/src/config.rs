//! JSON pipeline configuration. Every field has a default, so `{}` is a valid file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::TableFormat;
use crate::corpus::LabelSource;
use crate::enrichment::{check_threshold, DEFAULT_GENDER_THRESHOLD};
use crate::error::{Error, Result};
use crate::evaluation::CvConfig;
use crate::features::FeatureConfig;
use crate::sampling::{SamplingPlan, SpamRuleSet};
use crate::util::read_to_string;

pub const ETHNICITY_URL_ENV: &str = "ENRICH_ETHNICITY_URL";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Unlabeled corpus the sample is drawn from and predictions are applied to.
    pub raw_corpus: Option<PathBuf>,
    /// Gold-labeled training corpus.
    pub sampled_corpus: Option<PathBuf>,
    pub name_db: Option<PathBuf>,
    pub models_dir: PathBuf,
    pub output_dir: PathBuf,
    pub annotation_log: Option<PathBuf>,
    pub ui_dir: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            raw_corpus: None,
            sampled_corpus: None,
            name_db: None,
            models_dir: PathBuf::from("models"),
            output_dir: PathBuf::from("out"),
            annotation_log: None,
            ui_dir: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// No provider: every ethnicity is Unknown.
    None,
    Remote,
    Local,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnrichmentConfig {
    pub provider: ProviderKind,
    /// URL template for the remote provider; `{name}` marks the encoded name.
    pub endpoint_template: Option<String>,
    pub cache_path: Option<PathBuf>,
    /// `name,category` file for training the local provider.
    pub local_training: Option<PathBuf>,
    /// Saved local provider model, used instead of `local_training` when present.
    pub local_model: Option<PathBuf>,
    /// L2 strength for the local provider's classifier.
    pub local_lambda: f64,
    pub gender_threshold: f64,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
}

impl Default for EnrichmentConfig {
    fn default() -> Self {
        EnrichmentConfig {
            provider: ProviderKind::None,
            endpoint_template: None,
            cache_path: None,
            local_training: None,
            local_model: None,
            local_lambda: 0.01,
            gender_threshold: DEFAULT_GENDER_THRESHOLD,
            max_in_flight: 8,
            timeout_secs: 10,
        }
    }
}

impl EnrichmentConfig {
    /// A set environment variable switches the provider to remote with that template.
    pub fn apply_env(&mut self) {
        if let Ok(url) = std::env::var(ETHNICITY_URL_ENV) {
            if !url.trim().is_empty() {
                self.provider = ProviderKind::Remote;
                self.endpoint_template = Some(url);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: String,
    pub port: u16,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind: "127.0.0.1".into(),
            port: 8080,
        }
    }
}

impl ServerConfig {
    pub fn addr(&self) -> String {
        format!("{}:{}", self.bind, self.port)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub which: LabelSource,
    pub formats: Vec<TableFormat>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            rows: vec!["enriched.ethnicity".into(), "enriched.gender".into()],
            cols: vec![
                "Against/For".into(),
                "Neoliberalism/Social Good".into(),
                "OnTopic/Not-OnTopic".into(),
                "Civil/Uncivil".into(),
            ],
            which: LabelSource::Predicted,
            formats: vec![TableFormat::Csv, TableFormat::Markdown, TableFormat::Json],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub sampling: SamplingPlan,
    pub spam: SpamRuleSet,
    pub features: FeatureConfig,
    pub cv: CvConfig,
    /// Attributes to train; empty means every schema attribute.
    pub attributes: Vec<String>,
    pub enrichment: EnrichmentConfig,
    pub server: ServerConfig,
    pub analysis: AnalysisConfig,
}

impl PipelineConfig {
    /// Relative paths in the file are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            cfg.resolve_relative_to(base);
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let p = &mut self.paths;
        for x in [
            &mut p.raw_corpus,
            &mut p.sampled_corpus,
            &mut p.name_db,
            &mut p.annotation_log,
            &mut p.ui_dir,
        ]
        .into_iter()
        .flatten()
        {
            fix(x);
        }
        fix(&mut p.models_dir);
        fix(&mut p.output_dir);
        let e = &mut self.enrichment;
        for x in [&mut e.cache_path, &mut e.local_training, &mut e.local_model]
            .into_iter()
            .flatten()
        {
            fix(x);
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.sampling.seed = seed;
        self.cv.seed = seed;
        for h in &mut self.cv.grid {
            h.seed = seed;
        }
    }

    pub fn check(&self) -> Result<()> {
        self.features.check()?;
        if self.cv.k < 2 {
            return Err(Error::Config(format!("cv.k must be >= 2, got {}", self.cv.k)));
        }
        if self.cv.grid.is_empty() {
            return Err(Error::Config("cv.grid is empty".into()));
        }
        for h in &self.cv.grid {
            h.check()?;
        }
        check_threshold(self.enrichment.gender_threshold)?;
        if self.enrichment.max_in_flight == 0 {
            return Err(Error::Config("enrichment.max_in_flight must be >= 1".into()));
        }
        Ok(())
    }
}

/// Fails with a message naming `what` when a stage input is not configured or absent.
pub fn require_path<'a>(path: Option<&'a PathBuf>, what: &str) -> Result<&'a Path> {
    let p = path.ok_or_else(|| Error::Config(format!("{what} is not configured")))?;
    if !p.exists() {
        return Err(Error::Config(format!("{what} not found: {}", p.display())));
    }
    Ok(p)
}
