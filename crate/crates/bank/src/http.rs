//! HTTP+JSON front end.
//!
//! | method | path | role |
//! |---|---|---|
//! | POST | `/token` | none (client credentials) |
//! | POST | `/shares` | any |
//! | GET | `/transactions?state=&page=&pageSize=` | any, users see their own |
//! | GET | `/transactions/{id}` | any |
//! | POST | `/transactions/{id}/approve`, `/reject` | admin |
//! | GET | `/transactions/{id}/reconstruction` | any |
//! | POST | `/transactions/import` | admin |
//! | GET | `/batches`, `/batches/{id}` | any |
//! | POST | `/batches/{id}/settle` | admin |
//! | GET | `/export.csv?state=` | any |
//! | GET | `/blacklist`; DELETE `/blacklist/{party}` | any; admin |
//! | GET | `/notifications` | any |
//! | POST | `/jobs/drain` | admin |

use std::io::Cursor;
use std::net::SocketAddr;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::multipart::MultipartRejection;
use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Form, Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use pgs_core::broker::{EnvelopeMeta, ShareEnvelope};
use pgs_core::pnm;
use pgs_core::protocol::{BatchId, TransactionId};
use pgs_core::vc::BinaryImage;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::oneshot;

use crate::adapter::MockBehavior;
use crate::auth::{AuthError, Principal};
use crate::service::{
    BankService, Decision, ImportedTransaction, ReconstructionImages, ReconstructionRecord, ServiceError,
};

const MAX_BODY: usize = 64 * 1024 * 1024;

pub struct ApiError(ServiceError);

impl<E: Into<ServiceError>> From<E> for ApiError {
    fn from(e: E) -> Self {
        ApiError(e.into())
    }
}

impl ApiError {
    fn status(&self) -> StatusCode {
        use ServiceError::*;
        match &self.0 {
            Auth(AuthError::UnsupportedGrant(_)) => StatusCode::BAD_REQUEST,
            Auth(_) => StatusCode::UNAUTHORIZED,
            Forbidden(_) => StatusCode::FORBIDDEN,
            NotFound(_) => StatusCode::NOT_FOUND,
            Integrity(_) | Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Conflict(_) | Precondition(_) => StatusCode::CONFLICT,
            Protocol(e) => match e {
                pgs_core::protocol::ProtocolError::BlacklistedParty(_) => StatusCode::FORBIDDEN,
                pgs_core::protocol::ProtocolError::Validation { .. } => StatusCode::UNPROCESSABLE_ENTITY,
                pgs_core::protocol::ProtocolError::UnknownTransaction(_)
                | pgs_core::protocol::ProtocolError::UnknownBatch(_) => StatusCode::NOT_FOUND,
                _ => StatusCode::CONFLICT,
            },
            Adapter(_) => StatusCode::GATEWAY_TIMEOUT,
            Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

/// Problem-details body shared by every error response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    #[serde(rename = "type")]
    pub kind: String,
    pub title: String,
    pub status: u16,
    pub code: String,
    pub detail: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        let problem = Problem {
            kind: format!("urn:pgs:problem:{}", self.0.code()),
            title: status.canonical_reason().unwrap_or("error").into(),
            status: status.as_u16(),
            code: self.0.code().into(),
            detail: self.0.to_string(),
        };
        let mut resp = (status, Json(problem)).into_response();
        resp.headers_mut().insert(
            header::CONTENT_TYPE,
            HeaderValue::from_static("application/problem+json"),
        );
        if status == StatusCode::UNAUTHORIZED {
            resp.headers_mut()
                .insert(header::WWW_AUTHENTICATE, HeaderValue::from_static("Bearer"));
        }
        resp
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn principal(svc: &BankService, headers: &HeaderMap) -> ApiResult<Principal> {
    let auth = headers.get(header::AUTHORIZATION).and_then(|v| v.to_str().ok());
    Ok(svc.authenticate(auth)?)
}

/// Runs blocking service work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| Err(ServiceError::Storage(std::io::Error::other(e.to_string())).into()))
}

pub fn router(svc: BankService) -> Router {
    Router::new()
        .route("/token", post(token))
        .route("/shares", post(upload_share))
        .route("/transactions", get(list_transactions))
        .route("/transactions/import", post(import))
        .route("/transactions/{id}", get(get_transaction))
        .route("/transactions/{id}/approve", post(approve))
        .route("/transactions/{id}/reject", post(reject))
        .route("/transactions/{id}/reconstruction", get(reconstruction))
        .route("/batches", get(list_batches))
        .route("/batches/{id}", get(get_batch))
        .route("/batches/{id}/settle", post(settle))
        .route("/export.csv", get(export_csv))
        .route("/blacklist", get(blacklist))
        .route("/blacklist/{party}", delete(lift_blacklist))
        .route("/notifications", get(notifications))
        .route("/jobs/drain", post(drain_jobs))
        .layer(DefaultBodyLimit::max(MAX_BODY))
        .with_state(svc)
}

#[derive(Deserialize)]
struct TokenForm {
    grant_type: String,
    client_id: String,
    client_secret: String,
}

async fn token(State(svc): State<BankService>, Form(f): Form<TokenForm>) -> ApiResult<Response> {
    let tok = svc.issue_token(&f.grant_type, &f.client_id, &f.client_secret)?;
    let mut resp = Json(tok).into_response();
    resp.headers_mut()
        .insert(header::CACHE_CONTROL, HeaderValue::from_static("no-store"));
    Ok(resp)
}

async fn upload_share(
    State(svc): State<BankService>,
    headers: HeaderMap,
    multipart: Result<Multipart, MultipartRejection>,
) -> ApiResult<Response> {
    let p = principal(&svc, &headers)?;
    let bad = |m: String| ApiError(ServiceError::Validation(m));
    let mut multipart = multipart.map_err(|e| bad(e.body_text()))?;
    let mut meta: Option<EnvelopeMeta> = None;
    let mut payload: Option<Vec<u8>> = None;
    while let Some(field) = multipart.next_field().await.map_err(|e| bad(e.to_string()))? {
        match field.name() {
            Some("meta") => {
                let bytes = field.bytes().await.map_err(|e| bad(e.to_string()))?;
                meta = Some(serde_json::from_slice(&bytes).map_err(|e| bad(format!("meta: {e}")))?);
            }
            Some("share") => payload = Some(field.bytes().await.map_err(|e| bad(e.to_string()))?.to_vec()),
            _ => {}
        }
    }
    let (Some(meta), Some(payload)) = (meta, payload) else {
        return Err(bad("multipart body needs a `meta` part and a `share` part".into()));
    };
    let envelope = ShareEnvelope::from_parts(meta, payload);
    let receipt = blocking(move || Ok(svc.upload_share(&p, envelope)?)).await?;
    let status = match receipt.ack {
        pgs_core::broker::UploadAck::Stored => StatusCode::CREATED,
        pgs_core::broker::UploadAck::Duplicate => StatusCode::OK,
    };
    Ok((status, Json(receipt)).into_response())
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct ListQuery {
    state: Option<String>,
    page: Option<usize>,
    page_size: Option<usize>,
}

async fn list_transactions(
    State(svc): State<BankService>,
    headers: HeaderMap,
    Query(q): Query<ListQuery>,
) -> ApiResult<Response> {
    let p = principal(&svc, &headers)?;
    let page = svc.list_transactions(&p, q.state.as_deref(), q.page, q.page_size)?;
    Ok(Json(page).into_response())
}

fn parse_txn(id: &str) -> ApiResult<TransactionId> {
    id.parse()
        .map_err(|_| ServiceError::Validation(format!("bad transaction id {id:?}")).into())
}

fn parse_batch(id: &str) -> ApiResult<BatchId> {
    id.parse()
        .map_err(|_| ServiceError::Validation(format!("bad batch id {id:?}")).into())
}

async fn get_transaction(
    State(svc): State<BankService>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let p = principal(&svc, &headers)?;
    Ok(Json(svc.transaction(&p, parse_txn(&id)?)?).into_response())
}

#[derive(Deserialize, Default)]
#[serde(rename_all = "camelCase")]
struct DecisionBody {
    note: Option<String>,
    source: Option<String>,
}

fn optional_json<T: for<'de> Deserialize<'de> + Default>(body: &Bytes) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ServiceError::Validation(format!("body: {e}")).into())
}

async fn decide(svc: BankService, headers: HeaderMap, id: String, body: Bytes, d: Decision) -> ApiResult<Response> {
    let p = principal(&svc, &headers)?;
    let id = parse_txn(&id)?;
    let b: DecisionBody = optional_json(&body)?;
    let result = blocking(move || Ok(svc.operator_decide(&p, id, d, b.note, b.source.as_deref())?)).await?;
    Ok(Json(result).into_response())
}

async fn approve(
    State(svc): State<BankService>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    decide(svc, headers, id, body, Decision::Approve).await
}

async fn reject(
    State(svc): State<BankService>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    decide(svc, headers, id, body, Decision::Reject).await
}

#[derive(Deserialize)]
struct ImageQuery {
    image: Option<String>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ReconstructionBody {
    transaction_id: TransactionId,
    record: Option<ReconstructionRecord>,
    /// Base64 PBM (P4) images.
    seller_share: String,
    buyer_share: String,
    stacked: Option<String>,
    decoded: Option<String>,
}

fn pick<'a>(images: &'a ReconstructionImages, which: &str) -> ApiResult<&'a BinaryImage> {
    let img = match which {
        "decoded" => images.decoded.as_ref(),
        "stacked" => images.stacked.as_ref(),
        "seller" => Some(&images.seller_share),
        "buyer" => Some(&images.buyer_share),
        other => {
            return Err(ServiceError::Validation(format!(
                "image must be stacked, decoded, seller or buyer, got {other:?}"
            ))
            .into())
        }
    };
    img.ok_or_else(|| ServiceError::NotFound(format!("{which} image")).into())
}

pub fn encode_png(img: &BinaryImage) -> Vec<u8> {
    let raw: Vec<u8> = img
        .pixels()
        .iter()
        .map(|p| if p.is_black() { 0 } else { 255 })
        .collect();
    let gray =
        image::GrayImage::from_raw(img.width() as u32, img.height() as u32, raw).expect("buffer matches dimensions");
    let mut out = Cursor::new(Vec::new());
    gray.write_to(&mut out, image::ImageFormat::Png)
        .expect("png encoding to memory");
    out.into_inner()
}

/// JSON by default. `Accept: image/png` (or `image/x-portable-bitmap`) with
/// `?image=stacked|decoded|seller|buyer` returns that single image instead.
async fn reconstruction(
    State(svc): State<BankService>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Query(q): Query<ImageQuery>,
) -> ApiResult<Response> {
    let p = principal(&svc, &headers)?;
    let id = parse_txn(&id)?;
    let images = blocking(move || Ok(svc.reconstruction_images(&p, id)?)).await?;
    let accept = headers.get(header::ACCEPT).and_then(|v| v.to_str().ok()).unwrap_or("");
    let which = q.image.as_deref().unwrap_or("decoded");
    if accept.contains("image/png") {
        let png = encode_png(pick(&images, which)?);
        return Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response());
    }
    if accept.contains("image/x-portable-bitmap") {
        let pbm = pnm::encode_pbm(pick(&images, which)?);
        return Ok(([(header::CONTENT_TYPE, "image/x-portable-bitmap")], pbm).into_response());
    }
    let enc = |img: &BinaryImage| B64.encode(pnm::encode_pbm(img));
    Ok(Json(ReconstructionBody {
        transaction_id: id,
        seller_share: enc(&images.seller_share),
        buyer_share: enc(&images.buyer_share),
        stacked: images.stacked.as_ref().map(enc),
        decoded: images.decoded.as_ref().map(enc),
        record: images.record,
    })
    .into_response())
}

async fn import(
    State(svc): State<BankService>,
    headers: HeaderMap,
    records: Result<Json<Vec<ImportedTransaction>>, JsonRejection>,
) -> ApiResult<Response> {
    let p = principal(&svc, &headers)?;
    let Json(records) = records.map_err(|e| ApiError(ServiceError::Validation(e.body_text())))?;
    let n = blocking(move || Ok(svc.import_transactions(&p, records)?)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "imported": n }))).into_response())
}

async fn list_batches(State(svc): State<BankService>, headers: HeaderMap) -> ApiResult<Response> {
    let p = principal(&svc, &headers)?;
    Ok(Json(svc.batches(&p)).into_response())
}

async fn get_batch(State(svc): State<BankService>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<Response> {
    let p = principal(&svc, &headers)?;
    Ok(Json(svc.batch(&p, parse_batch(&id)?)?).into_response())
}

#[derive(Deserialize, Default)]
struct SettleBody {
    simulate: Option<MockBehavior>,
}

async fn settle(
    State(svc): State<BankService>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let p = principal(&svc, &headers)?;
    let id = parse_batch(&id)?;
    let b: SettleBody = optional_json(&body)?;
    let batch = blocking(move || Ok(svc.settle_batch(&p, id, b.simulate)?)).await?;
    Ok(Json(batch).into_response())
}

#[derive(Deserialize)]
struct StateQuery {
    state: Option<String>,
}

async fn export_csv(
    State(svc): State<BankService>,
    headers: HeaderMap,
    Query(q): Query<StateQuery>,
) -> ApiResult<Response> {
    let p = principal(&svc, &headers)?;
    let csv = svc.export_csv(&p, q.state.as_deref())?;
    Ok((
        [
            (header::CONTENT_TYPE, "text/csv; charset=utf-8"),
            (header::CONTENT_DISPOSITION, "attachment; filename=\"transactions.csv\""),
        ],
        csv,
    )
        .into_response())
}

async fn blacklist(State(svc): State<BankService>, headers: HeaderMap) -> ApiResult<Response> {
    let p = principal(&svc, &headers)?;
    Ok(Json(svc.blacklist(&p)).into_response())
}

async fn lift_blacklist(
    State(svc): State<BankService>,
    headers: HeaderMap,
    Path(party): Path<String>,
) -> ApiResult<Response> {
    let p = principal(&svc, &headers)?;
    let lifted = blocking(move || Ok(svc.lift_blacklist(&p, &party)?)).await?;
    Ok(Json(json!({ "lifted": lifted })).into_response())
}

async fn notifications(State(svc): State<BankService>, headers: HeaderMap) -> ApiResult<Response> {
    let p = principal(&svc, &headers)?;
    Ok(Json(svc.notifications(&p)).into_response())
}

async fn drain_jobs(State(svc): State<BankService>, headers: HeaderMap) -> ApiResult<Response> {
    let p = principal(&svc, &headers)?;
    if !p.is_admin() {
        return Err(ServiceError::Forbidden("draining jobs requires the admin role".into()).into());
    }
    let ran = blocking(move || Ok(svc.drain_jobs()?)).await?;
    Ok(Json(json!({ "ran": ran })).into_response())
}

pub async fn serve(listener: tokio::net::TcpListener, svc: BankService) -> std::io::Result<()> {
    axum::serve(listener, router(svc)).await
}

/// A server on its own runtime thread; stops when dropped.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Binds `addr` (port 0 picks a free one) and serves in the background.
pub fn spawn(svc: BankService, addr: SocketAddr) -> std::io::Result<ServerHandle> {
    let std_listener = std::net::TcpListener::bind(addr)?;
    std_listener.set_nonblocking(true)?;
    let addr = std_listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let thread = std::thread::Builder::new().name("bank-http".into()).spawn(move || {
        runtime.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(std_listener).expect("register listener");
            let server = axum::serve(listener, router(svc)).with_graceful_shutdown(async {
                let _ = rx.await;
            });
            if let Err(e) = server.await {
                tracing::error!(error = %e, "http server stopped");
            }
        })
    })?;
    Ok(ServerHandle {
        addr,
        stop: Some(tx),
        thread: Some(thread),
    })
}
