//! Thin async client for the twin session service, plus the offline
//! helpers behind `twin analyze` and `twin sus`.

pub mod report;

use futures::{Stream, StreamExt};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use twin_core::registration::PoseUpdate;
use twin_core::session::{Envelope, OperationRecord, ReplayReport, SequenceDocument, Snapshot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default)]
    pub blockers: Vec<String>,
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("server answered {status}: {}", body.message)]
    Api { status: u16, body: ApiErrorBody },
    #[error("unexpected response: {0}")]
    Decode(#[from] serde_json::Error),
    #[error("bad sequence document: {0}")]
    Document(String),
}

impl ClientError {
    /// Error kind reported by the server, e.g. `busy`.
    pub fn kind(&self) -> Option<&str> {
        match self {
            ClientError::Api { body, .. } => Some(&body.error),
            _ => None,
        }
    }
}

#[derive(Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

#[derive(Serialize)]
struct DetachRequest<'a> {
    component_id: &'a str,
}

#[derive(Serialize)]
struct ReplayRequest<'a> {
    pose_update: &'a PoseUpdate,
    #[serde(skip_serializing_if = "Option::is_none")]
    sequence: Option<&'a SequenceDocument>,
}

impl Client {
    pub fn new(base: impl Into<String>) -> Self {
        Client {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    async fn check(resp: reqwest::Response) -> Result<reqwest::Response, ClientError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().await?;
        let body = serde_json::from_str(&text).unwrap_or(ApiErrorBody {
            error: "http".into(),
            message: text,
            blockers: vec![],
        });
        Err(ClientError::Api { status: status.as_u16(), body })
    }

    async fn json<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, ClientError> {
        let text = Self::check(resp).await?.text().await?;
        Ok(serde_json::from_str(&text)?)
    }

    pub async fn scene(&self) -> Result<Snapshot, ClientError> {
        Self::json(self.http.get(self.url("/scene")).send().await?).await
    }

    pub async fn detach(&self, component_id: &str) -> Result<OperationRecord, ClientError> {
        let req = self.http.post(self.url("/detach")).json(&DetachRequest { component_id });
        Self::json(req.send().await?).await
    }

    pub async fn reset(&self) -> Result<(), ClientError> {
        Self::check(self.http.post(self.url("/reset")).send().await?).await?;
        Ok(())
    }

    /// The saved document as the server rendered it, and parsed.
    pub async fn save(&self) -> Result<(String, SequenceDocument), ClientError> {
        let text = Self::check(self.http.post(self.url("/sequence/save")).send().await?)
            .await?
            .text()
            .await?;
        let doc = SequenceDocument::from_json(&text).map_err(|e| ClientError::Document(e.to_string()))?;
        Ok((text, doc))
    }

    /// Replay `sequence`, or the server's last saved one when `None`.
    pub async fn replay(
        &self,
        sequence: Option<&SequenceDocument>,
        pose_update: &PoseUpdate,
    ) -> Result<ReplayReport, ClientError> {
        let req = self
            .http
            .post(self.url("/sequence/replay"))
            .json(&ReplayRequest { pose_update, sequence });
        Self::json(req.send().await?).await
    }

    /// The event feed, one envelope per line, starting with a snapshot.
    pub async fn events(&self) -> Result<impl Stream<Item = Result<Envelope, ClientError>>, ClientError> {
        let resp = Self::check(self.http.get(self.url("/events")).send().await?).await?;
        Ok(ndjson_lines(Box::pin(resp.bytes_stream())))
    }
}

/// Split a byte stream into newline-terminated JSON values.
fn ndjson_lines<S, B>(bytes: S) -> impl Stream<Item = Result<Envelope, ClientError>>
where
    S: Stream<Item = Result<B, reqwest::Error>> + Unpin,
    B: AsRef<[u8]>,
{
    futures::stream::unfold((bytes, Vec::<u8>::new()), |(mut bytes, mut buf)| async move {
        loop {
            if let Some(pos) = buf.iter().position(|b| *b == b'\n') {
                let line: Vec<u8> = buf.drain(..=pos).collect();
                let item = serde_json::from_slice(&line[..pos]).map_err(ClientError::from);
                return Some((item, (bytes, buf)));
            }
            match bytes.next().await? {
                Ok(chunk) => buf.extend_from_slice(chunk.as_ref()),
                Err(e) => return Some((Err(e.into()), (bytes, buf))),
            }
        }
    })
}
