//! Client-credentials bearer tokens.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Duration, Utc};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ClientConfig;

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Clone)]
pub struct ManualClock(Arc<Mutex<DateTime<Utc>>>);

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        Self(Arc::new(Mutex::new(start)))
    }

    pub fn set(&self, t: DateTime<Utc>) {
        *self.0.lock().unwrap() = t;
    }

    pub fn advance(&self, by: Duration) {
        let mut t = self.0.lock().unwrap();
        *t += by;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApiRole {
    Admin,
    User,
}

impl fmt::Display for ApiRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ApiRole::Admin => "admin",
            ApiRole::User => "user",
        })
    }
}

impl FromStr for ApiRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "admin" => Ok(ApiRole::Admin),
            "user" => Ok(ApiRole::User),
            other => Err(format!("unknown role {other:?}")),
        }
    }
}

/// An authenticated caller. For `User` principals the client id is the
/// party identifier used in transactions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Principal {
    pub client_id: String,
    pub role: ApiRole,
    pub token_expiry: DateTime<Utc>,
}

impl Principal {
    pub fn is_admin(&self) -> bool {
        self.role == ApiRole::Admin
    }

    /// Admins see everything, users only purchases they are party to.
    pub fn can_see(&self, seller: &str, buyer: &str) -> bool {
        self.is_admin() || self.client_id == seller || self.client_id == buyer
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuthError {
    #[error("missing bearer token")]
    Missing,
    #[error("unknown bearer token")]
    Invalid,
    #[error("bearer token expired at {0}")]
    Expired(DateTime<Utc>),
    #[error("unknown client or wrong secret")]
    InvalidClient,
    #[error("unsupported grant type {0:?}")]
    UnsupportedGrant(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenResponse {
    pub access_token: String,
    pub token_type: String,
    pub expires_in: u64,
}

pub struct TokenIssuer {
    clients: Vec<ClientConfig>,
    ttl: Duration,
    clock: Arc<dyn Clock>,
    tokens: Mutex<HashMap<String, Principal>>,
}

impl TokenIssuer {
    pub fn new(clients: Vec<ClientConfig>, ttl_secs: u64, clock: Arc<dyn Clock>) -> Self {
        Self {
            clients,
            ttl: Duration::seconds(ttl_secs as i64),
            clock,
            tokens: Mutex::new(HashMap::new()),
        }
    }

    pub fn issue(&self, grant_type: &str, client_id: &str, secret: &str) -> Result<TokenResponse, AuthError> {
        if grant_type != "client_credentials" {
            return Err(AuthError::UnsupportedGrant(grant_type.into()));
        }
        let client = self
            .clients
            .iter()
            .find(|c| c.client_id == client_id && c.client_secret == secret)
            .ok_or(AuthError::InvalidClient)?;
        let mut raw = [0u8; 24];
        rand::rng().fill_bytes(&mut raw);
        let token = hex_token(&raw);
        let principal = Principal {
            client_id: client.client_id.clone(),
            role: client.role,
            token_expiry: self.clock.now() + self.ttl,
        };
        self.tokens.lock().unwrap().insert(token.clone(), principal);
        Ok(TokenResponse {
            access_token: token,
            token_type: "Bearer".into(),
            expires_in: self.ttl.num_seconds() as u64,
        })
    }

    /// Resolves an `Authorization` header value.
    pub fn authenticate(&self, header: Option<&str>) -> Result<Principal, AuthError> {
        let header = header.ok_or(AuthError::Missing)?;
        let token = header
            .strip_prefix("Bearer ")
            .or_else(|| header.strip_prefix("bearer "))
            .ok_or(AuthError::Missing)?
            .trim();
        let principal = self
            .tokens
            .lock()
            .unwrap()
            .get(token)
            .cloned()
            .ok_or(AuthError::Invalid)?;
        // a token is valid up to, not including, its expiry instant
        if self.clock.now() >= principal.token_expiry {
            return Err(AuthError::Expired(principal.token_expiry));
        }
        Ok(principal)
    }
}

fn hex_token(raw: &[u8]) -> String {
    raw.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn issuer(clock: &ManualClock) -> TokenIssuer {
        TokenIssuer::new(
            vec![
                ClientConfig::new("ops", "pw", ApiRole::Admin),
                ClientConfig::new("buyer1@alphaplus.com", "pw2", ApiRole::User),
            ],
            60,
            Arc::new(clock.clone()),
        )
    }

    #[test]
    fn issue_and_expire() {
        let clock = ManualClock::new(Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap());
        let iss = issuer(&clock);
        let tok = iss.issue("client_credentials", "ops", "pw").unwrap();
        assert_eq!(tok.expires_in, 60);
        let header = format!("Bearer {}", tok.access_token);
        assert!(iss.authenticate(Some(&header)).unwrap().is_admin());
        clock.advance(Duration::seconds(59));
        assert!(iss.authenticate(Some(&header)).is_ok());
        clock.advance(Duration::seconds(1));
        assert!(matches!(iss.authenticate(Some(&header)), Err(AuthError::Expired(_))));
    }

    #[test]
    fn rejects_bad_credentials_and_headers() {
        let clock = ManualClock::new(Utc::now());
        let iss = issuer(&clock);
        assert_eq!(
            iss.issue("client_credentials", "ops", "nope").unwrap_err(),
            AuthError::InvalidClient
        );
        assert!(matches!(
            iss.issue("password", "ops", "pw"),
            Err(AuthError::UnsupportedGrant(_))
        ));
        assert_eq!(iss.authenticate(None).unwrap_err(), AuthError::Missing);
        assert_eq!(iss.authenticate(Some("Basic abc")).unwrap_err(), AuthError::Missing);
        assert_eq!(iss.authenticate(Some("Bearer abc")).unwrap_err(), AuthError::Invalid);
    }

    #[test]
    fn users_see_own_purchases() {
        let p = Principal {
            client_id: "buyer1@alphaplus.com".into(),
            role: ApiRole::User,
            token_expiry: Utc::now(),
        };
        assert!(p.can_see("seller2@alphaplus.com", "buyer1@alphaplus.com"));
        assert!(!p.can_see("seller2@alphaplus.com", "buyer9@alphaplus.com"));
    }
}
