#![allow(dead_code)]

use std::sync::Arc;

use chrono::{DateTime, Duration, TimeZone, Utc};
use pgs_bank::auth::ApiRole;
use pgs_bank::{BankConfig, BankService, ClientConfig, ManualClock, Principal};
use pgs_core::broker::{PurchaseTerms, SenderRole, ShareEnvelope};
use pgs_core::imaging::{binarize, compose_selfie, render_price_captcha, Anchor, BinarizeMethod, GrayscaleImage};
use pgs_core::money::{Currency, Money};
use pgs_core::protocol::{BusinessModel, TransactionId};
use pgs_core::vc::{generate_shares, ShareSeed};

pub const SELLER: &str = "seller2@alphaplus.com";
pub const BUYER: &str = "buyer1@alphaplus.com";

pub fn t(s: i64) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2016, 9, 8, 11, 0, 0).unwrap() + Duration::seconds(s)
}

pub fn config() -> BankConfig {
    BankConfig {
        sync_jobs: true,
        batch_threshold: 100,
        clients: vec![
            ClientConfig::new("operator", "op-secret", ApiRole::Admin),
            ClientConfig::new("broker", "broker-secret", ApiRole::User),
            ClientConfig::new(BUYER, "buyer-secret", ApiRole::User),
            ClientConfig::new("buyer9@alphaplus.com", "b9-secret", ApiRole::User),
        ],
        ..BankConfig::default()
    }
}

pub fn bank(cfg: BankConfig) -> (BankService, ManualClock) {
    let clock = ManualClock::new(t(0));
    let svc = BankService::builder(cfg)
        .clock(Arc::new(clock.clone()))
        .build()
        .unwrap();
    (svc, clock)
}

pub fn login(svc: &BankService, id: &str, secret: &str) -> Principal {
    let tok = svc.issue_token("client_credentials", id, secret).unwrap();
    svc.authenticate(Some(&format!("Bearer {}", tok.access_token))).unwrap()
}

pub fn admin(svc: &BankService) -> Principal {
    login(svc, "operator", "op-secret")
}

pub fn broker(svc: &BankService) -> Principal {
    login(svc, "broker", "broker-secret")
}

#[derive(Clone)]
pub struct Purchase {
    pub id: u64,
    pub seller: String,
    pub buyer: String,
    pub amount: i64,
    /// Seconds after `t(0)` the captcha is shown.
    pub issued: i64,
    /// Seconds after `t(0)` the shares are generated.
    pub generated: i64,
}

impl Purchase {
    pub fn new(id: u64, amount: i64) -> Self {
        Self {
            id,
            seller: SELLER.into(),
            buyer: BUYER.into(),
            amount,
            issued: 0,
            generated: 5,
        }
    }

    pub fn terms(&self) -> PurchaseTerms {
        PurchaseTerms {
            seller: self.seller.clone(),
            buyer: self.buyer.clone(),
            amount: Money(self.amount),
            currency: Currency::xof(),
            business_model: BusinessModel::CarryThenCash,
            captcha_nonce: format!("nonce-{}", self.id),
            created_at: t(self.issued),
        }
    }

    /// (seller envelope, buyer envelope) for an honest selfie.
    pub fn envelopes(&self) -> (ShareEnvelope, ShareEnvelope) {
        let face = GrayscaleImage::from_fn(200, 80, |x, y| ((x * 3 + y * 5) % 256) as u8).unwrap();
        let captcha = render_price_captcha(Money(self.amount), &Currency::xof(), self.id, t(self.issued)).unwrap();
        let selfie = compose_selfie(
            &binarize(&face, BinarizeMethod::ErrorDiffusion),
            &captcha,
            Anchor::default(),
        )
        .unwrap();
        let (a, b) = generate_shares(&selfie, ShareSeed::from_u64(self.id)).unwrap();
        let seal = |role, share| {
            ShareEnvelope::seal(
                TransactionId(self.id),
                role,
                share,
                self.terms(),
                t(self.issued),
                t(self.generated),
                t(self.generated),
            )
        };
        (seal(SenderRole::Seller, &a), seal(SenderRole::Buyer, &b))
    }
}
