use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use percent_encoding::{utf8_percent_encode, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::taxonomy::{self, LEAVES, UNKNOWN};
use crate::classifier::{load_model, save_model, Hyperparams, TrainedModel};
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::text::normalize_name;
use crate::util::read_to_string;

/// Predictions below this confidence are reported as Unknown.
pub const MIN_ETHNICITY_CONFIDENCE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EthnicityPath {
    pub levels: Vec<String>,
    pub confidence: f64,
}

impl EthnicityPath {
    pub fn unknown() -> Self {
        EthnicityPath {
            levels: vec![UNKNOWN.to_string()],
            confidence: 0.0,
        }
    }

    pub fn from_leaf(leaf: &str, confidence: f64) -> Self {
        EthnicityPath {
            levels: taxonomy::split_levels(leaf),
            confidence,
        }
    }

    pub fn is_unknown(&self) -> bool {
        self.levels.len() == 1 && self.levels[0] == UNKNOWN
    }

    /// Levels joined with `-`, e.g. `GreaterEuropean-WestEuropean-Hispanic`.
    pub fn label(&self) -> String {
        taxonomy::join_levels(&self.levels)
    }
}

/// Maps a normalized full name to a taxonomy leaf.
pub trait EthnicityProvider: Send + Sync {
    fn predict(&self, normalized_name: &str) -> Result<EthnicityPath>;
}

impl<P: EthnicityProvider + ?Sized> EthnicityProvider for Arc<P> {
    fn predict(&self, normalized_name: &str) -> Result<EthnicityPath> {
        (**self).predict(normalized_name)
    }
}

impl<P: EthnicityProvider + ?Sized> EthnicityProvider for Box<P> {
    fn predict(&self, normalized_name: &str) -> Result<EthnicityPath> {
        (**self).predict(normalized_name)
    }
}

/// Provider output, or Unknown on failure, an invalid path, or confidence
/// below [`MIN_ETHNICITY_CONFIDENCE`].
pub fn infer_ethnicity(full_name: &str, provider: &dyn EthnicityProvider) -> EthnicityPath {
    let name = normalize_name(full_name);
    if name.is_empty() {
        return EthnicityPath::unknown();
    }
    match provider.predict(&name) {
        Ok(p) if taxonomy::is_valid_path(&p.levels) && p.confidence >= MIN_ETHNICITY_CONFIDENCE => p,
        Ok(p) => {
            log::debug!("ethnicity for {name:?} below cutoff or off-taxonomy: {p:?}");
            EthnicityPath::unknown()
        }
        Err(e) => {
            log::warn!("ethnicity lookup failed for a name: {e}");
            EthnicityPath::unknown()
        }
    }
}

pub trait Transport: Send + Sync {
    fn get(&self, url: &str) -> std::result::Result<String, String>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        UreqTransport { agent }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(10))
    }
}

impl Transport for UreqTransport {
    fn get(&self, url: &str) -> std::result::Result<String, String> {
        let mut resp = self.agent.get(url).call().map_err(|e| e.to_string())?;
        resp.body_mut().read_to_string().map_err(|e| e.to_string())
    }
}

/// Canned responses keyed by URL. Unrecorded URLs fail.
#[derive(Default)]
pub struct RecordedTransport {
    responses: BTreeMap<String, std::result::Result<String, String>>,
    calls: AtomicUsize,
}

impl RecordedTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn respond(mut self, url: impl Into<String>, body: impl Into<String>) -> Self {
        self.responses.insert(url.into(), Ok(body.into()));
        self
    }

    pub fn fail(mut self, url: impl Into<String>, reason: impl Into<String>) -> Self {
        self.responses.insert(url.into(), Err(reason.into()));
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for RecordedTransport {
    fn get(&self, url: &str) -> std::result::Result<String, String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.responses
            .get(url)
            .cloned()
            .unwrap_or_else(|| Err(format!("no recorded response for {url}")))
    }
}

/// HTTP classifier returning a JSON object of category → probability.
/// `{name}` in the template is replaced by the percent-encoded name.
pub struct RemoteProvider {
    template: String,
    transport: Arc<dyn Transport>,
}

impl RemoteProvider {
    pub fn new(template: impl Into<String>, transport: Arc<dyn Transport>) -> Self {
        RemoteProvider {
            template: template.into(),
            transport,
        }
    }

    pub fn url_for(&self, normalized_name: &str) -> String {
        let encoded = utf8_percent_encode(normalized_name, NON_ALPHANUMERIC).to_string();
        if self.template.contains("{name}") {
            self.template.replace("{name}", &encoded)
        } else {
            format!("{}{}", self.template, encoded)
        }
    }
}

pub fn parse_distribution(body: &str) -> Result<EthnicityPath> {
    let dist: BTreeMap<String, f64> =
        serde_json::from_str(body).map_err(|e| Error::Provider(format!("bad response: {e}")))?;
    let mut best: Option<(&str, f64)> = None;
    for (k, &p) in &dist {
        if best.is_none_or(|(_, bp)| p > bp) {
            best = Some((k, p));
        }
    }
    let (category, p) = best.ok_or_else(|| Error::Provider("empty distribution".into()))?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Provider(format!("probability {p} outside [0,1]")));
    }
    let leaf = taxonomy::resolve_leaf(category)
        .ok_or_else(|| Error::Provider(format!("unrecognized category {category:?}")))?;
    Ok(EthnicityPath::from_leaf(leaf, p))
}

impl EthnicityProvider for RemoteProvider {
    fn predict(&self, normalized_name: &str) -> Result<EthnicityPath> {
        let body = self
            .transport
            .get(&self.url_for(normalized_name))
            .map_err(Error::Provider)?;
        parse_distribution(&body)
    }
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    name_hash: String,
    path: Vec<String>,
    confidence: f64,
}

pub fn name_hash(normalized_name: &str) -> String {
    hex::encode(Sha256::digest(normalized_name.as_bytes()))
}

/// Append-only JSONL cache in front of another provider. Only successful
/// lookups are stored; names are kept as SHA-256 digests.
pub struct CachedProvider<P> {
    inner: P,
    path: PathBuf,
    entries: Mutex<HashMap<String, EthnicityPath>>,
    file: Mutex<File>,
}

impl<P: EthnicityProvider> CachedProvider<P> {
    pub fn open(inner: P, path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            let content = read_to_string(path)?;
            for (i, line) in content.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let c: CacheLine =
                    serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
                entries.insert(
                    c.name_hash,
                    EthnicityPath {
                        levels: c.path,
                        confidence: c.confidence,
                    },
                );
            }
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(CachedProvider {
            inner,
            path: path.to_path_buf(),
            entries: Mutex::new(entries),
            file: Mutex::new(file),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: EthnicityProvider> EthnicityProvider for CachedProvider<P> {
    fn predict(&self, normalized_name: &str) -> Result<EthnicityPath> {
        let key = name_hash(normalized_name);
        if let Some(hit) = self.entries.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let fresh = self.inner.predict(normalized_name)?;
        let line = serde_json::to_string(&CacheLine {
            name_hash: key.clone(),
            path: fresh.levels.clone(),
            confidence: fresh.confidence,
        })?;
        {
            let mut f = self.file.lock().unwrap();
            writeln!(f, "{line}").map_err(|e| Error::io(&self.path, e))?;
        }
        self.entries.lock().unwrap().insert(key, fresh.clone());
        Ok(fresh)
    }
}

/// Character n-gram classifier over taxonomy leaves.
pub struct LocalProvider {
    model: TrainedModel,
}

pub const LOCAL_MODEL_ATTRIBUTE: &str = "ethnicity";

impl LocalProvider {
    pub fn from_model(model: TrainedModel) -> Result<Self> {
        if let Some(bad) = model.classes.iter().find(|c| !LEAVES.contains(&c.as_str())) {
            return Err(Error::ModelFormat(format!("class {bad:?} is not a taxonomy leaf")));
        }
        Ok(LocalProvider { model })
    }

    /// Trains on `(name, category)` pairs; categories may be full paths or
    /// bare final levels.
    pub fn train(examples: &[(String, String)], hyper: &Hyperparams) -> Result<Self> {
        let mut names = Vec::with_capacity(examples.len());
        let mut leaves = Vec::with_capacity(examples.len());
        for (name, cat) in examples {
            let leaf = taxonomy::resolve_leaf(cat)
                .ok_or_else(|| Error::Rejected(format!("unknown ethnicity category {cat:?}")))?;
            names.push(normalize_name(name));
            leaves.push(leaf);
        }
        let texts: Vec<&str> = names.iter().map(String::as_str).collect();
        let order: Vec<String> = LEAVES.iter().map(|s| s.to_string()).collect();
        let model = TrainedModel::fit(
            LOCAL_MODEL_ATTRIBUTE,
            &texts,
            &leaves,
            &order,
            &FeatureConfig::char_names(),
            hyper,
        )?;
        Ok(LocalProvider { model })
    }

    pub fn model(&self) -> &TrainedModel {
        &self.model
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_model(&self.model, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_model(load_model(path)?)
    }
}

impl EthnicityProvider for LocalProvider {
    fn predict(&self, normalized_name: &str) -> Result<EthnicityPath> {
        let (leaf, p) = self.model.predict_text(normalized_name);
        Ok(EthnicityPath::from_leaf(&leaf, p))
    }
}

/// Reads `name,category` lines; a leading `name,...` header is skipped.
pub fn load_ethnicity_examples(path: &Path) -> Result<Vec<(String, String)>> {
    let content = read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.to_lowercase().starts_with("name,")) {
            continue;
        }
        let (name, cat) = line
            .rsplit_once(',')
            .ok_or_else(|| Error::parse(path, i + 1, "expected name,category"))?;
        if name.trim().is_empty() {
            return Err(Error::parse(path, i + 1, "empty name"));
        }
        out.push((name.trim().to_string(), cat.trim().to_string()));
    }
    Ok(out)
}
