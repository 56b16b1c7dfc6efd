//! Blocking client for the bank's HTTP API.

use std::fmt;
use std::time::Duration;

use anyhow::{Context, Result};
use pgs_bank::http::Problem;
use pgs_bank::MockBehavior;
use pgs_core::broker::{BankEndpoint, ShareEnvelope, UploadAck};
use pgs_core::protocol::BlacklistEntry;
use reqwest::blocking::{multipart, Client, RequestBuilder};
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::{json, Value};

/// A non-2xx answer, carrying the problem document's fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiFailure {
    pub status: u16,
    pub code: String,
    pub detail: String,
}

impl fmt::Display for ApiFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "bank answered {} {}: {}", self.status, self.code, self.detail)
    }
}

impl std::error::Error for ApiFailure {}

/// The subset of a transaction the CLI looks at.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TransactionSummary {
    pub id: u64,
    pub state: String,
    pub batch: Option<u64>,
    #[serde(default)]
    pub flags: Vec<String>,
    pub settlement_reference: Option<String>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BatchSummary {
    pub id: u64,
    pub state: String,
    pub transaction_ids: Vec<u64>,
    pub total_amount: i64,
    pub transfer_reference: Option<String>,
    pub decline_reason: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct UploadSummary {
    pub ack: UploadAck,
    pub pairing: String,
    pub transaction: TransactionSummary,
}

#[derive(Debug, Clone, Deserialize)]
pub struct DecisionSummary {
    pub transaction: TransactionSummary,
    pub batch: Option<BatchSummary>,
}

pub struct BankClient {
    base: String,
    http: Client,
    bearer: Option<String>,
}

impl BankClient {
    pub fn new(base_url: &str) -> Result<Self> {
        let http = Client::builder().timeout(Duration::from_secs(30)).build()?;
        Ok(Self {
            base: base_url.trim_end_matches('/').to_string(),
            http,
            bearer: None,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    pub fn login(&mut self, client_id: &str, client_secret: &str) -> Result<()> {
        let req = self.http.post(self.url("/token")).form(&[
            ("grant_type", "client_credentials"),
            ("client_id", client_id),
            ("client_secret", client_secret),
        ]);
        let v: Value = self.send(req)?;
        let token = v["access_token"]
            .as_str()
            .context("token response without access_token")?;
        self.bearer = Some(format!("Bearer {token}"));
        Ok(())
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    fn send<T: for<'de> Deserialize<'de>>(&self, mut req: RequestBuilder) -> Result<T> {
        if let Some(b) = &self.bearer {
            req = req.header(reqwest::header::AUTHORIZATION, b);
        }
        let resp = req
            .send()
            .with_context(|| format!("contacting bank at {}", self.base))?;
        let status = resp.status();
        let body = resp.bytes()?;
        if !status.is_success() {
            return Err(failure(status, &body).into());
        }
        serde_json::from_slice(&body).with_context(|| format!("decoding {status} response"))
    }

    pub fn upload(&self, envelope: &ShareEnvelope) -> Result<UploadSummary> {
        let form = multipart::Form::new()
            .part(
                "meta",
                multipart::Part::bytes(serde_json::to_vec(envelope.meta())?).mime_str("application/json")?,
            )
            .part(
                "share",
                multipart::Part::bytes(envelope.payload().to_vec())
                    .file_name("share.pbm")
                    .mime_str("image/x-portable-bitmap")?,
            );
        self.send(self.http.post(self.url("/shares")).multipart(form))
    }

    pub fn transaction(&self, id: u64) -> Result<TransactionSummary> {
        self.send(self.http.get(self.url(&format!("/transactions/{id}"))))
    }

    pub fn approve(&self, id: u64) -> Result<DecisionSummary> {
        self.send(self.http.post(self.url(&format!("/transactions/{id}/approve"))))
    }

    pub fn reject(&self, id: u64, note: Option<&str>) -> Result<DecisionSummary> {
        let req = self.http.post(self.url(&format!("/transactions/{id}/reject")));
        self.send(req.json(&json!({ "note": note })))
    }

    pub fn settle(&self, batch: u64, simulate: Option<&MockBehavior>) -> Result<BatchSummary> {
        let req = self.http.post(self.url(&format!("/batches/{batch}/settle")));
        self.send(req.json(&json!({ "simulate": simulate })))
    }

    pub fn drain_jobs(&self) -> Result<u64> {
        let v: Value = self.send(self.http.post(self.url("/jobs/drain")))?;
        v["ran"].as_u64().context("drain response without `ran`")
    }

    pub fn blacklist(&self) -> Result<Vec<BlacklistEntry>> {
        self.send(self.http.get(self.url("/blacklist")))
    }
}

fn failure(status: StatusCode, body: &[u8]) -> ApiFailure {
    match serde_json::from_slice::<Problem>(body) {
        Ok(p) => ApiFailure {
            status: status.as_u16(),
            code: p.code,
            detail: p.detail,
        },
        Err(_) => ApiFailure {
            status: status.as_u16(),
            code: "http_error".into(),
            detail: String::from_utf8_lossy(body).trim().to_string(),
        },
    }
}

impl BankEndpoint for BankClient {
    fn upload(&mut self, envelope: &ShareEnvelope) -> Result<UploadAck, String> {
        BankClient::upload(self, envelope)
            .map(|r| r.ack)
            .map_err(|e| format!("{e:#}"))
    }
}
