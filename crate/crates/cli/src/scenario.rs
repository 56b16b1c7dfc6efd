//! Scenario files and the runner that plays them against a bank.
//!
//! Seller and buyer phones are simulated in-process. Brokers are in-memory
//! stores named by the scenario; each logs in to the bank with its own
//! client credentials when it first delivers.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration as StdDuration, Instant};

use anyhow::{anyhow, bail, Context, Result};
use chrono::{DateTime, Duration, TimeZone, Utc};
use pgs_bank::MockBehavior;
use pgs_core::broker::{BrokerStore, Collected, Connectivity, PurchaseTerms, SenderRole, ShareEnvelope};
use pgs_core::imaging::GrayscaleImage;
use pgs_core::money::{Currency, Money};
use pgs_core::pnm;
use pgs_core::protocol::{create_transaction, Blacklist, BusinessModel, Event, Transaction, TransactionId};
use serde::{Deserialize, Serialize};

use crate::client::{ApiFailure, BankClient, TransactionSummary};
use crate::selfie::{synthetic_photo, take_selfie, PHOTO_HEIGHT, PHOTO_WIDTH};
use crate::shares::load_secret;

pub const TRANSCRIPT_FILE: &str = "transcript.txt";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Credentials {
    pub client_id: String,
    pub client_secret: String,
}

impl Credentials {
    pub fn new(id: &str, secret: &str) -> Self {
        Self {
            client_id: id.into(),
            client_secret: secret.into(),
        }
    }

    fn operator() -> Self {
        Self::new("operator", "operator-secret")
    }

    fn broker() -> Self {
        Self::new("broker", "broker-secret")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Scenario clock at the first step.
    #[serde(default = "default_start")]
    pub start_at: DateTime<Utc>,
    /// Purchases are numbered from here in `takeSelfie` order.
    #[serde(default = "default_first_id")]
    pub first_transaction_id: u64,
    #[serde(default = "Credentials::operator")]
    pub operator: Credentials,
    /// Broker name to credentials; unlisted brokers use `broker`/`broker-secret`.
    #[serde(default)]
    pub brokers: BTreeMap<String, Credentials>,
    pub steps: Vec<Step>,
}

fn default_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2016, 9, 8, 11, 0, 0).unwrap()
}

fn default_first_id() -> u64 {
    1
}

fn default_currency() -> String {
    "XOF".into()
}

fn default_capture_delay() -> i64 {
    5
}

fn default_business_model() -> BusinessModel {
    BusinessModel::CarryThenCash
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Shares {
    Seller,
    Buyer,
    #[default]
    Both,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SettleAs {
    #[default]
    Success,
    Declined,
    Timeout,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "step", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum Step {
    TakeSelfie {
        purchase: String,
        seller: String,
        buyer: String,
        /// Minor units.
        amount: i64,
        #[serde(default = "default_currency")]
        currency: String,
        #[serde(default = "default_business_model")]
        business_model: BusinessModel,
        /// Seconds between the captcha appearing and the shares being made.
        #[serde(default = "default_capture_delay")]
        capture_delay_secs: i64,
        /// PGM or PBM photo; a synthetic one is drawn when absent.
        photo: Option<PathBuf>,
    },
    ExchangeShares {
        purchase: String,
    },
    BrokerCollect {
        broker: String,
        purchase: String,
        #[serde(default)]
        shares: Shares,
    },
    BrokerGoOnline {
        broker: String,
    },
    BrokerGoOffline {
        broker: String,
    },
    BrokerDeliver {
        broker: String,
    },
    OperatorApprove {
        purchase: String,
    },
    OperatorReject {
        purchase: String,
        note: Option<String>,
    },
    Settle {
        purchase: String,
        #[serde(default)]
        outcome: SettleAs,
        reason: Option<String>,
    },
    /// Advances the scenario clock.
    Wait {
        secs: i64,
    },
    ExpectState {
        purchase: String,
        state: String,
    },
}

impl Step {
    pub fn name(&self) -> &'static str {
        match self {
            Step::TakeSelfie { .. } => "takeSelfie",
            Step::ExchangeShares { .. } => "exchangeShares",
            Step::BrokerCollect { .. } => "brokerCollect",
            Step::BrokerGoOnline { .. } => "brokerGoOnline",
            Step::BrokerGoOffline { .. } => "brokerGoOffline",
            Step::BrokerDeliver { .. } => "brokerDeliver",
            Step::OperatorApprove { .. } => "operatorApprove",
            Step::OperatorReject { .. } => "operatorReject",
            Step::Settle { .. } => "settle",
            Step::Wait { .. } => "wait",
            Step::ExpectState { .. } => "expectState",
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.check_references()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Every purchase must be introduced by an earlier `takeSelfie`.
    fn check_references(&self) -> Result<()> {
        let mut known: Vec<&str> = Vec::new();
        for (i, step) in self.steps.iter().enumerate() {
            let referenced = match step {
                Step::TakeSelfie { purchase, .. } => {
                    if known.contains(&purchase.as_str()) {
                        bail!("step {}: purchase {purchase:?} is taken twice", i + 1);
                    }
                    known.push(purchase);
                    None
                }
                Step::ExchangeShares { purchase }
                | Step::BrokerCollect { purchase, .. }
                | Step::OperatorApprove { purchase }
                | Step::OperatorReject { purchase, .. }
                | Step::Settle { purchase, .. }
                | Step::ExpectState { purchase, .. } => Some(purchase),
                _ => None,
            };
            if let Some(p) = referenced {
                if !known.contains(&p.as_str()) {
                    bail!("step {} ({}): unknown purchase {p:?}", i + 1, step.name());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replaces the scenario's seed.
    pub seed: Option<u64>,
    /// Ask the bank to finish pairing jobs after every delivery.
    pub sync_jobs: bool,
    /// Directory for selfies, envelopes and the transcript.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub transcript: Vec<String>,
    /// Purchase label to bank-side state, in creation order.
    pub final_states: Vec<(String, String)>,
    pub failure: Option<String>,
}

impl RunReport {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }

    pub fn final_state(&self, purchase: &str) -> Option<&str> {
        self.final_states
            .iter()
            .find(|(p, _)| p == purchase)
            .map(|(_, s)| s.as_str())
    }
}

struct Purchase {
    id: TransactionId,
    local: Transaction,
    seller: ShareEnvelope,
    buyer: ShareEnvelope,
    exchanged: bool,
    /// Last state seen at the bank.
    seen: Option<String>,
}

impl Purchase {
    fn last_state(&self) -> String {
        self.seen.clone().unwrap_or_else(|| self.local.state().to_string())
    }
}

struct Broker {
    store: BrokerStore,
    creds: Credentials,
    client: Option<BankClient>,
}

struct Runner<'a> {
    scenario: &'a Scenario,
    opts: &'a RunOptions,
    bank_url: &'a str,
    seed: u64,
    clock: DateTime<Utc>,
    operator: Option<BankClient>,
    brokers: BTreeMap<String, Broker>,
    purchases: BTreeMap<String, Purchase>,
    order: Vec<String>,
    lines: Vec<String>,
    sink: &'a mut dyn FnMut(&str),
}

/// Plays `scenario` step by step, stopping at the first failing step.
pub fn run(scenario: &Scenario, bank_url: &str, opts: &RunOptions, sink: &mut dyn FnMut(&str)) -> RunReport {
    let mut r = Runner {
        scenario,
        opts,
        bank_url,
        seed: opts.seed.unwrap_or(scenario.seed),
        clock: scenario.start_at,
        operator: None,
        brokers: BTreeMap::new(),
        purchases: BTreeMap::new(),
        order: Vec::new(),
        lines: Vec::new(),
        sink,
    };
    let name = if scenario.name.is_empty() {
        "unnamed"
    } else {
        &scenario.name
    };
    r.emit(format!(
        "scenario {name} (seed {}, {} steps)",
        r.seed,
        scenario.steps.len()
    ));
    let mut failure = None;
    for (i, step) in scenario.steps.iter().enumerate() {
        let tag = format!("[{:02}] {}", i + 1, step.name());
        match r.step(step) {
            Ok(lines) => {
                let mut lines = lines.into_iter();
                let head = lines.next().unwrap_or_default();
                r.emit(format!("{tag} {head}"));
                for l in lines {
                    r.emit(format!("     {l}"));
                }
            }
            Err(e) => {
                let msg = format!("{tag} FAILED: {e:#}");
                r.emit(msg.clone());
                failure = Some(msg);
                break;
            }
        }
    }
    let final_states = r.final_states();
    for (p, s) in &final_states {
        r.emit(format!("final {p}: {s}"));
    }
    r.emit(if failure.is_none() {
        "result: ok".into()
    } else {
        "result: failed".into()
    });
    if let Some(out) = &opts.out {
        let mut text = r.lines.join("\n");
        text.push('\n');
        if let Err(e) = fs::create_dir_all(out).and_then(|_| fs::write(out.join(TRANSCRIPT_FILE), text)) {
            (r.sink)(&format!("warning: could not write transcript: {e}"));
        }
    }
    RunReport {
        transcript: r.lines,
        final_states,
        failure,
    }
}

impl Runner<'_> {
    fn emit(&mut self, line: String) {
        (self.sink)(&line);
        self.lines.push(line);
    }

    fn final_states(&mut self) -> Vec<(String, String)> {
        let labels = self.order.clone();
        labels
            .into_iter()
            .map(|label| {
                let fetched = self.refresh(&label).ok();
                let state = fetched.unwrap_or_else(|| self.purchases[&label].last_state());
                (label, state)
            })
            .collect()
    }

    fn operator(&mut self) -> Result<&BankClient> {
        if self.operator.is_none() {
            let mut c = BankClient::new(self.bank_url)?;
            let creds = &self.scenario.operator;
            c.login(&creds.client_id, &creds.client_secret)
                .with_context(|| format!("operator login as {}", creds.client_id))?;
            self.operator = Some(c);
        }
        Ok(self.operator.as_ref().unwrap())
    }

    fn purchase(&self, label: &str) -> Result<&Purchase> {
        self.purchases
            .get(label)
            .ok_or_else(|| anyhow!("unknown purchase {label:?}"))
    }

    fn broker(&mut self, name: &str) -> &mut Broker {
        let creds = self
            .scenario
            .brokers
            .get(name)
            .cloned()
            .unwrap_or_else(Credentials::broker);
        self.brokers.entry(name.to_string()).or_insert_with(|| Broker {
            store: BrokerStore::new(),
            creds,
            client: None,
        })
    }

    /// Fetches the bank's view of a purchase the bank has heard of.
    fn refresh(&mut self, label: &str) -> Result<String> {
        let p = self.purchase(label)?;
        if p.seen.is_none() {
            return Ok(p.local.state().to_string());
        }
        let id = p.id.0;
        let t = self.operator()?.transaction(id)?;
        self.purchases.get_mut(label).unwrap().seen = Some(t.state.clone());
        Ok(t.state)
    }

    fn transition(&mut self, label: &str, t: &TransactionSummary) -> String {
        let p = self.purchases.get_mut(label).unwrap();
        let before = p.seen.clone().unwrap_or_else(|| p.local.state().to_string());
        p.seen = Some(t.state.clone());
        let mut line = if before == t.state {
            format!("{label}: {} (unchanged)", t.state)
        } else {
            format!("{label}: {before} -> {}", t.state)
        };
        if !t.flags.is_empty() {
            line.push_str(&format!(" [flags: {}]", t.flags.join(", ")));
        }
        line
    }

    fn label_of(&self, id: u64) -> Option<String> {
        self.purchases
            .iter()
            .find(|(_, p)| p.id.0 == id)
            .map(|(l, _)| l.clone())
    }

    fn step(&mut self, step: &Step) -> Result<Vec<String>> {
        match step {
            Step::TakeSelfie {
                purchase,
                seller,
                buyer,
                amount,
                currency,
                business_model,
                capture_delay_secs,
                photo,
            } => self.take_selfie(
                purchase,
                seller,
                buyer,
                Money(*amount),
                currency,
                *business_model,
                *capture_delay_secs,
                photo.as_deref(),
            ),
            Step::ExchangeShares { purchase } => {
                let at = self.clock;
                let p = self.purchases.get_mut(purchase).unwrap();
                if p.exchanged {
                    bail!("shares of {purchase} were already exchanged");
                }
                let before = p.local.state();
                p.local = p.local.apply(&Event::SharesExchangedLocally, at)?.transaction;
                p.exchanged = true;
                Ok(vec![format!(
                    "{purchase}: {before} -> {} (on the phones)",
                    p.local.state()
                )])
            }
            Step::BrokerCollect {
                broker,
                purchase,
                shares,
            } => {
                let p = self.purchase(purchase)?;
                let mut picked = Vec::new();
                if matches!(shares, Shares::Seller | Shares::Both) {
                    picked.push(p.seller.clone());
                }
                if matches!(shares, Shares::Buyer | Shares::Both) {
                    if !p.exchanged {
                        bail!("buyer of {purchase} has no share before exchangeShares");
                    }
                    picked.push(p.buyer.clone());
                }
                let b = self.broker(broker);
                let mut parts = Vec::new();
                for e in picked {
                    let role = e.sender_role();
                    let what = match b.store.collect(e)? {
                        Collected::Queued => "queued",
                        Collected::AlreadyHeld => "already held",
                    };
                    parts.push(format!("{role} share {what}"));
                }
                Ok(vec![format!(
                    "{broker} <- {purchase}: {} ({} pending)",
                    parts.join(", "),
                    b.store.pending_count()
                )])
            }
            Step::BrokerGoOnline { broker } => {
                self.broker(broker).store.set_connectivity(Connectivity::Online);
                Ok(vec![format!("{broker}: online")])
            }
            Step::BrokerGoOffline { broker } => {
                self.broker(broker).store.set_connectivity(Connectivity::Offline);
                Ok(vec![format!("{broker}: offline")])
            }
            Step::BrokerDeliver { broker } => self.deliver(broker),
            Step::OperatorApprove { purchase } => {
                self.await_pairing(purchase)?;
                let id = self.purchase(purchase)?.id.0;
                let d = self.operator()?.approve(id)?;
                let mut line = self.transition(purchase, &d.transaction);
                if let Some(b) = &d.batch {
                    line.push_str(&format!(
                        "; batch {} {} with {} transaction(s), total {}",
                        b.id,
                        b.state,
                        b.transaction_ids.len(),
                        b.total_amount
                    ));
                }
                let mut lines = vec![line];
                if let Some(b) = &d.batch {
                    lines.extend(self.batch_members(&b.transaction_ids, id)?);
                }
                Ok(lines)
            }
            Step::OperatorReject { purchase, note } => {
                self.await_pairing(purchase)?;
                let id = self.purchase(purchase)?.id.0;
                let d = self.operator()?.reject(id, note.as_deref())?;
                Ok(vec![self.transition(purchase, &d.transaction)])
            }
            Step::Settle {
                purchase,
                outcome,
                reason,
            } => self.settle(purchase, *outcome, reason.clone()),
            Step::Wait { secs } => {
                self.clock += Duration::seconds(*secs);
                Ok(vec![format!("clock now {}", self.clock.to_rfc3339())])
            }
            Step::ExpectState { purchase, state } => {
                let found = self.refresh(purchase)?;
                if &found != state {
                    bail!("{purchase} is {found}, expected {state}");
                }
                Ok(vec![format!("{purchase}: {found} as expected")])
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn take_selfie(
        &mut self,
        label: &str,
        seller: &str,
        buyer: &str,
        amount: Money,
        currency: &str,
        business_model: BusinessModel,
        capture_delay_secs: i64,
        photo: Option<&Path>,
    ) -> Result<Vec<String>> {
        let index = self.order.len() as u64;
        let id = TransactionId(self.scenario.first_transaction_id + index);
        let seed = self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(id.0);
        let currency = Currency::new(currency)?;
        let photo =
            match photo {
                Some(path) => {
                    match pnm::read_any(path).with_context(|| format!("reading {}", path.display()))? {
                        pnm::AnyImage::Gray(g) => g,
                        pnm::AnyImage::Binary(_) => {
                            let (b, _) = load_secret(path)?;
                            GrayscaleImage::from_fn(b.width(), b.height(), |x, y| {
                                if b.get(x, y).is_black() {
                                    0
                                } else {
                                    255
                                }
                            })?
                        }
                    }
                }
                None => synthetic_photo(PHOTO_WIDTH, PHOTO_HEIGHT, seed),
            };
        let issued = self.clock;
        let generated = issued + Duration::seconds(capture_delay_secs);
        let selfie = take_selfie(&photo, amount, &currency, seed, issued)?;
        let terms = PurchaseTerms {
            seller: seller.into(),
            buyer: buyer.into(),
            amount,
            currency: currency.clone(),
            business_model,
            captcha_nonce: selfie.captcha.nonce().into(),
            created_at: issued,
        };
        let local = create_transaction(terms.to_new_transaction(id), &Blacklist::default())?;
        let seal = |role, share| ShareEnvelope::seal(id, role, share, terms.clone(), issued, generated, generated);
        let seller_env = seal(SenderRole::Seller, &selfie.seller_share);
        let buyer_env = seal(SenderRole::Buyer, &selfie.buyer_share);
        if let Some(out) = &self.opts.out {
            let dir = out.join(label);
            fs::create_dir_all(&dir)?;
            pnm::write_pbm(dir.join("selfie.pbm"), &selfie.image)?;
            pnm::write_pbm(dir.join("captcha.pbm"), selfie.captcha.rendered_image())?;
            seller_env.write_dir(dir.join("seller"))?;
            buyer_env.write_dir(dir.join("buyer"))?;
        }
        self.clock = generated;
        let line = format!(
            "{label}: transaction {id}, {} {seller} -> {buyer}, captcha {} at {}, shares at {} ({}x{}); {}",
            selfie.captcha.text(),
            &selfie.captcha.nonce()[..8.min(selfie.captcha.nonce().len())],
            issued.format("%H:%M:%S"),
            generated.format("%H:%M:%S"),
            selfie.seller_share.width(),
            selfie.seller_share.height(),
            local.state()
        );
        self.purchases.insert(
            label.to_string(),
            Purchase {
                id,
                local,
                seller: seller_env,
                buyer: buyer_env,
                exchanged: false,
                seen: None,
            },
        );
        self.order.push(label.to_string());
        Ok(vec![line])
    }

    fn deliver(&mut self, name: &str) -> Result<Vec<String>> {
        let url = self.bank_url.to_string();
        let now = self.clock;
        let b = self.broker(name);
        if b.store.connectivity() == Connectivity::Online && b.client.is_none() {
            let mut c = BankClient::new(&url)?;
            c.login(&b.creds.client_id, &b.creds.client_secret)
                .with_context(|| format!("broker login as {}", b.creds.client_id))?;
            b.client = Some(c);
        }
        let report = match b.client.as_mut() {
            Some(client) => b.store.deliver_all(client, now)?,
            None => b.store.deliver_all(&mut NoBank, now)?,
        };
        let pending = b.store.pending_count();
        let mut lines = vec![format!(
            "{name}: {} delivered, {} failed, {pending} pending",
            report.delivered.len(),
            report.failed.len()
        )];
        for r in &report.delivered {
            lines.push(format!("{} {:?}", r.envelope.as_str(), r.ack).to_lowercase());
        }
        for f in &report.failed {
            lines.push(format!("{} failed: {}", f.envelope.as_str(), f.error));
        }
        if self.opts.sync_jobs {
            // the count depends on how much the bank's own worker already did
            self.operator()?.drain_jobs()?;
            lines.push("pairing jobs drained".into());
        }
        let mut touched: Vec<String> = Vec::new();
        for r in &report.delivered {
            let id = r.envelope.as_str().split('-').next().and_then(|s| s.parse().ok());
            if let Some(label) = id.and_then(|id| self.label_of(id)) {
                if !touched.contains(&label) {
                    touched.push(label);
                }
            }
        }
        for label in touched {
            let id = self.purchases[&label].id.0;
            let t = self.operator()?.transaction(id)?;
            lines.push(self.transition(&label, &t));
        }
        Ok(lines)
    }

    /// Without synchronous draining, waits for the bank's worker to finish
    /// pairing before an operator acts.
    fn await_pairing(&mut self, label: &str) -> Result<()> {
        if self.opts.sync_jobs {
            return Ok(());
        }
        let id = self.purchase(label)?.id.0;
        let deadline = Instant::now() + StdDuration::from_secs(10);
        loop {
            let t = self.operator()?.transaction(id)?;
            if t.state != "Incomplete" || Instant::now() >= deadline {
                return Ok(());
            }
            std::thread::sleep(StdDuration::from_millis(50));
        }
    }

    fn batch_members(&mut self, members: &[u64], skip: u64) -> Result<Vec<String>> {
        let mut lines = Vec::new();
        for &m in members.iter().filter(|&&m| m != skip) {
            if let Some(label) = self.label_of(m) {
                let t = self.operator()?.transaction(m)?;
                let line = self.transition(&label, &t);
                if !line.ends_with("(unchanged)") {
                    lines.push(line);
                }
            }
        }
        Ok(lines)
    }

    fn settle(&mut self, label: &str, outcome: SettleAs, reason: Option<String>) -> Result<Vec<String>> {
        let id = self.purchase(label)?.id.0;
        let t = self.operator()?.transaction(id)?;
        let batch = t
            .batch
            .ok_or_else(|| anyhow!("{label} is {} and belongs to no batch", t.state))?;
        let behavior = match outcome {
            SettleAs::Success => MockBehavior::Success,
            SettleAs::Declined => MockBehavior::Declined {
                reason: reason.unwrap_or_else(|| "insufficient funds".into()),
            },
            SettleAs::Timeout => MockBehavior::Timeout,
        };
        let result = self.operator()?.settle(batch, Some(&behavior));
        let mut lines = Vec::new();
        let members = match result {
            Ok(b) => {
                let detail = match (&b.transfer_reference, &b.decline_reason) {
                    (Some(r), _) => format!(", reference {r}"),
                    (_, Some(r)) => format!(", reason: {r}"),
                    _ => String::new(),
                };
                lines.push(format!("batch {batch} {}{detail}", b.state));
                b.transaction_ids
            }
            Err(e) if outcome == SettleAs::Timeout && is_timeout(&e) => {
                lines.push(format!("batch {batch}: payment provider timed out"));
                vec![id]
            }
            Err(e) => return Err(e),
        };
        lines.extend(self.batch_members(&members, u64::MAX)?);
        if outcome == SettleAs::Declined {
            for entry in self.operator()?.blacklist()? {
                lines.push(format!(
                    "blacklist: {} ({})",
                    entry.party,
                    serde_json::to_value(entry.reason)?.as_str().unwrap_or("?")
                ));
            }
        }
        Ok(lines)
    }
}

fn is_timeout(e: &anyhow::Error) -> bool {
    e.downcast_ref::<ApiFailure>().is_some_and(|f| f.status == 504)
}

/// Stand-in endpoint for an offline broker; never reached because
/// `deliver_all` refuses first.
struct NoBank;

impl pgs_core::broker::BankEndpoint for NoBank {
    fn upload(&mut self, _: &ShareEnvelope) -> Result<pgs_core::broker::UploadAck, String> {
        Err("no connection".into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_scenario_with_defaults() {
        let s = Scenario::from_json(
            r#"{"steps":[
                {"step":"takeSelfie","purchase":"p","seller":"s@x","buyer":"b@x","amount":5},
                {"step":"brokerCollect","broker":"k","purchase":"p","shares":"seller"},
                {"step":"settle","purchase":"p","outcome":"declined"}
            ]}"#,
        )
        .unwrap();
        assert_eq!(s.first_transaction_id, 1);
        assert_eq!(s.operator, Credentials::operator());
        match &s.steps[0] {
            Step::TakeSelfie {
                currency,
                capture_delay_secs,
                business_model,
                ..
            } => {
                assert_eq!(currency, "XOF");
                assert_eq!(*capture_delay_secs, 5);
                assert_eq!(*business_model, BusinessModel::CarryThenCash);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            &s.steps[1],
            Step::BrokerCollect {
                shares: Shares::Seller,
                ..
            }
        ));
        assert!(matches!(
            &s.steps[2],
            Step::Settle {
                outcome: SettleAs::Declined,
                ..
            }
        ));
    }

    #[test]
    fn rejects_forward_references_and_unknown_steps() {
        let err = Scenario::from_json(r#"{"steps":[{"step":"exchangeShares","purchase":"p"}]}"#).unwrap_err();
        assert!(format!("{err:#}").contains("unknown purchase"));
        assert!(Scenario::from_json(r#"{"steps":[{"step":"teleport"}]}"#).is_err());
        assert!(Scenario::from_json(r#"{"steps":[],"sed":1}"#).is_err());
    }

    #[test]
    fn local_steps_run_without_a_bank() {
        let s = Scenario::from_json(
            r#"{"seed":3,"steps":[
                {"step":"takeSelfie","purchase":"p","seller":"s@x","buyer":"b@x","amount":1500},
                {"step":"exchangeShares","purchase":"p"},
                {"step":"brokerCollect","broker":"k","purchase":"p"},
                {"step":"brokerDeliver","broker":"k"}
            ]}"#,
        )
        .unwrap();
        let mut seen = Vec::new();
        let report = run(&s, "http://127.0.0.1:9", &RunOptions::default(), &mut |l| {
            seen.push(l.to_string())
        });
        assert_eq!(report.transcript, seen);
        assert!(report.transcript[2].contains("Created -> ShareExchanged"));
        assert!(report.transcript[3].contains("2 pending"));
        let failure = report.failure.unwrap();
        assert!(failure.starts_with("[04] brokerDeliver FAILED"), "{failure}");
        assert!(failure.contains("offline"));
        assert_eq!(
            report.final_states,
            vec![("p".to_string(), "ShareExchanged".to_string())]
        );
    }
}
