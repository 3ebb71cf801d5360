//! Async client for the annotation service.

use enrich_core::annotation::{Adjudication, AgreementReport, LabelSubmission, Progress};
use enrich_core::corpus::{CorpusRecord, SchemaSet};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("server returned {status}: {message}")]
    Api { status: u16, message: String },
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
}

#[derive(Clone, Debug)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    pub fn new(base_url: &str) -> Self {
        Client {
            base: base_url.trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn check(resp: reqwest::Response) -> Result<reqwest::Response> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().await.unwrap_or_default();
        let message = serde_json::from_str::<ErrorBody>(&text)
            .map(|b| b.error)
            .unwrap_or(text);
        Err(ClientError::Api {
            status: status.as_u16(),
            message,
        })
    }

    async fn get_json<T: DeserializeOwned>(&self, path: &str, query: &[(&str, &str)]) -> Result<T> {
        let resp = self.http.get(self.url(path)).query(query).send().await?;
        Ok(Self::check(resp).await?.json().await?)
    }

    pub async fn health(&self) -> Result<()> {
        let resp = self.http.get(self.url("/health")).send().await?;
        Self::check(resp).await.map(|_| ())
    }

    pub async fn schema(&self) -> Result<SchemaSet> {
        self.get_json("/api/schema", &[]).await
    }

    /// `None` once the annotator has labeled every item.
    pub async fn next_task(&self, annotator: &str) -> Result<Option<CorpusRecord>> {
        let resp = self
            .http
            .get(self.url("/api/tasks/next"))
            .query(&[("annotator", annotator)])
            .send()
            .await?;
        if resp.status() == StatusCode::NO_CONTENT {
            return Ok(None);
        }
        Ok(Some(Self::check(resp).await?.json().await?))
    }

    pub async fn submit_label(&self, submission: &LabelSubmission) -> Result<()> {
        let resp = self.http.post(self.url("/api/labels")).json(submission).send().await?;
        Self::check(resp).await.map(|_| ())
    }

    /// All-annotator agreement, or a single pair's when `pair` is given.
    pub async fn agreement(&self, attribute: &str, pair: Option<(&str, &str)>) -> Result<AgreementReport> {
        let mut q = vec![("attribute", attribute)];
        if let Some((a, b)) = pair {
            q.push(("a", a));
            q.push(("b", b));
        }
        self.get_json("/api/agreement", &q).await
    }

    pub async fn progress(&self, annotator: &str) -> Result<Progress> {
        self.get_json("/api/progress", &[("annotator", annotator)]).await
    }

    pub async fn adjudication(&self, attribute: &str, policy: &str) -> Result<Adjudication> {
        self.get_json("/api/adjudication", &[("attribute", attribute), ("policy", policy)])
            .await
    }
}
