use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pgs_bank::{BankConfig, BankService};
use pgs_cli::client::BankClient;
use pgs_cli::scenario::{self, RunOptions, Scenario};
use pgs_cli::selfie::{synthetic_photo, take_selfie, PHOTO_HEIGHT, PHOTO_WIDTH};
use pgs_cli::shares::{self, StackVerdict};
use pgs_cli::{broker, exit};
use pgs_core::broker::{Collected, Connectivity, PurchaseTerms, SenderRole, ShareEnvelope};
use pgs_core::imaging::{CaptchaTicket, GrayscaleImage};
use pgs_core::money::{Currency, Money};
use pgs_core::pnm::{self, AnyImage};
use pgs_core::protocol::{BusinessModel, TransactionId};
use pgs_core::vc::Share;

#[derive(Parser)]
#[command(
    name = "pgs",
    version,
    about = "Pay with a group selfie: share tools, broker, bank and demo runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a PBM (or PGM, binarized first) into two shares.
    Split {
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fixes the coin flips; OS entropy is used when absent.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Stack shares and decode. Exit 2 on tampering, 3 on size mismatch.
    Stack {
        #[arg(required = true, num_args = 2..)]
        shares: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a price captcha into a photo, as the seller's phone would.
    Selfie(SelfieArgs),
    /// Share envelopes as carried by a broker.
    Envelope {
        #[command(subcommand)]
        command: EnvelopeCommand,
    },
    /// Broker spool operations.
    Broker {
        /// Spool directory; created on first use.
        #[arg(long)]
        spool: PathBuf,
        #[command(subcommand)]
        command: BrokerCommand,
    },
    /// Run the bank's HTTP service.
    Serve {
        /// TOML config file; PGS_* environment variables override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Pair shares inside the upload request instead of a worker thread.
        #[arg(long)]
        sync_jobs: bool,
    },
    /// Play a scenario file end to end.
    Demo {
        scenario: PathBuf,
        /// Bank to talk to; an in-process bank is started when absent.
        #[arg(long)]
        bank_url: Option<String>,
        /// Config for the in-process bank.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Drain the bank's pairing jobs after each delivery.
        #[arg(long)]
        sync_jobs: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for selfies, envelopes and transcript.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SelfieArgs {
    /// Minor units.
    #[arg(long)]
    amount: i64,
    #[arg(long, default_value = "XOF")]
    currency: String,
    /// PGM photo; a synthetic one is drawn when absent.
    #[arg(long)]
    photo: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// When the captcha was shown; defaults to now.
    #[arg(long)]
    issued_at: Option<DateTime<Utc>>,
    /// Receives selfie.pbm, captcha.pbm and captcha.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum EnvelopeCommand {
    /// Wrap a share file with purchase terms and a checksum.
    Seal {
        #[arg(long)]
        share: PathBuf,
        #[arg(long, value_enum)]
        role: RoleArg,
        #[arg(long)]
        transaction: u64,
        #[arg(long)]
        seller: String,
        #[arg(long)]
        buyer: String,
        /// captcha.json written by `pgs selfie`.
        #[arg(long)]
        ticket: PathBuf,
        #[arg(long, value_enum, default_value = "carry-then-cash")]
        business_model: ModelArg,
        /// When the shares were generated; defaults to now.
        #[arg(long)]
        generated_at: Option<DateTime<Utc>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check an envelope directory's checksum.
    Verify { dir: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    Seller,
    Buyer,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    CarryThenCash,
    CashThenCarry,
}

#[derive(Subcommand)]
enum BrokerCommand {
    Status,
    Online,
    Offline,
    /// Queue envelope directories.
    Collect {
        #[arg(required = true)]
        envelopes: Vec<PathBuf>,
    },
    /// Upload everything pending. Requires the spool to be online.
    Deliver {
        #[arg(long)]
        bank_url: String,
        #[arg(long, default_value = "broker")]
        client_id: String,
        #[arg(long, default_value = "broker-secret")]
        client_secret: String,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::FAILURE)
        }
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Split { image, out, seed } => {
            let meta = shares::split(&image, seed, &out)?;
            println!(
                "{}x{} secret{} -> {} and {} ({}x{}) in {}",
                meta.secret_width,
                meta.secret_height,
                if meta.binarized { " (binarized)" } else { "" },
                shares::SHARE1_FILE,
                shares::SHARE2_FILE,
                meta.share_width,
                meta.secret_height,
                out.display()
            );
            Ok(exit::OK)
        }
        Command::Stack { shares: paths, out } => Ok(match shares::stack(&paths, &out)? {
            StackVerdict::Clean { width, height, black } => {
                println!(
                    "clean: decoded {width}x{height}, {black} black pixels -> {}",
                    out.display()
                );
                exit::OK
            }
            StackVerdict::Tampered {
                empty_blocks,
                malformed_blocks,
            } => {
                println!("tamper detected: {empty_blocks} empty block(s), {malformed_blocks} malformed block(s)");
                exit::TAMPER_DETECTED
            }
            StackVerdict::DimensionMismatch(msg) => {
                println!("{msg}");
                exit::DIMENSION_MISMATCH
            }
        }),
        Command::Selfie(args) => selfie(args),
        Command::Envelope { command } => envelope(command),
        Command::Broker { spool, command } => broker_cmd(&spool, command),
        Command::Serve {
            config,
            port,
            host,
            data_dir,
            sync_jobs,
        } => {
            let mut cfg = BankConfig::load(config.as_deref())?;
            if let Some(p) = port {
                cfg.port = p;
            }
            if data_dir.is_some() {
                cfg.data_dir = data_dir;
            }
            cfg.sync_jobs |= sync_jobs;
            serve(cfg, &host)
        }
        Command::Demo {
            scenario,
            bank_url,
            config,
            sync_jobs,
            seed,
            out,
        } => {
            let sc = Scenario::load(&scenario)?;
            let opts = RunOptions { seed, sync_jobs, out };
            let mut print = |l: &str| println!("{l}");
            let report = match bank_url {
                Some(url) => scenario::run(&sc, &url, &opts, &mut print),
                None => {
                    let mut cfg = BankConfig::load(config.as_deref())?;
                    cfg.sync_jobs |= sync_jobs;
                    let svc = BankService::new(cfg)?;
                    let server = pgs_bank::http::spawn(svc, SocketAddr::from(([127, 0, 0, 1], 0)))?;
                    eprintln!("in-process bank at {}", server.url());
                    let report = scenario::run(&sc, &server.url(), &opts, &mut print);
                    server.stop();
                    report
                }
            };
            Ok(if report.succeeded() { exit::OK } else { exit::FAILURE })
        }
    }
}

fn serve(cfg: BankConfig, host: &str) -> Result<u8> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let addr = format!("{host}:{}", cfg.port);
    let svc = BankService::new(cfg)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        println!("listening on http://{}", listener.local_addr()?);
        pgs_bank::http::serve(listener, svc).await?;
        Ok::<_, anyhow::Error>(())
    })?;
    Ok(exit::OK)
}

fn selfie(a: SelfieArgs) -> Result<u8> {
    let currency = Currency::new(&a.currency)?;
    let photo = match &a.photo {
        Some(p) => match pnm::read_any(p).with_context(|| format!("reading {}", p.display()))? {
            AnyImage::Gray(g) => g,
            AnyImage::Binary(b) => {
                GrayscaleImage::from_fn(
                    b.width(),
                    b.height(),
                    |x, y| {
                        if b.get(x, y).is_black() {
                            0
                        } else {
                            255
                        }
                    },
                )?
            }
        },
        None => synthetic_photo(PHOTO_WIDTH, PHOTO_HEIGHT, a.seed),
    };
    let issued = a.issued_at.unwrap_or_else(Utc::now);
    let s = take_selfie(&photo, Money(a.amount), &currency, a.seed, issued)?;
    fs::create_dir_all(&a.out)?;
    pnm::write_pbm(a.out.join("selfie.pbm"), &s.image)?;
    pnm::write_pbm(a.out.join("captcha.pbm"), s.captcha.rendered_image())?;
    fs::write(
        a.out.join("captcha.json"),
        serde_json::to_vec_pretty(&s.captcha.ticket())?,
    )?;
    println!(
        "selfie {}x{} with captcha {:?} (nonce {}) -> {}",
        s.image.width(),
        s.image.height(),
        s.captcha.text(),
        s.captcha.nonce(),
        a.out.display()
    );
    Ok(exit::OK)
}

fn envelope(command: EnvelopeCommand) -> Result<u8> {
    match command {
        EnvelopeCommand::Seal {
            share,
            role,
            transaction,
            seller,
            buyer,
            ticket,
            business_model,
            generated_at,
            out,
        } => {
            let ticket: CaptchaTicket =
                serde_json::from_slice(&fs::read(&ticket).with_context(|| format!("reading {}", ticket.display()))?)?;
            let share =
                Share::from_image(&pnm::read_pbm(&share).with_context(|| format!("reading {}", share.display()))?)?;
            let generated = generated_at.unwrap_or_else(Utc::now);
            let terms = PurchaseTerms {
                seller,
                buyer,
                amount: ticket.amount,
                currency: ticket.currency,
                business_model: match business_model {
                    ModelArg::CarryThenCash => BusinessModel::CarryThenCash,
                    ModelArg::CashThenCarry => BusinessModel::CashThenCarry,
                },
                captcha_nonce: ticket.nonce,
                created_at: ticket.issued_at,
            };
            let role = match role {
                RoleArg::Seller => SenderRole::Seller,
                RoleArg::Buyer => SenderRole::Buyer,
            };
            let e = ShareEnvelope::seal(
                TransactionId(transaction),
                role,
                &share,
                terms,
                ticket.issued_at,
                generated,
                generated,
            );
            e.write_dir(&out)?;
            println!(
                "{} sealed ({}) -> {}",
                e.id().as_str(),
                e.meta().checksum,
                out.display()
            );
            Ok(exit::OK)
        }
        EnvelopeCommand::Verify { dir } => {
            let e = ShareEnvelope::read_dir(&dir)?;
            e.verify()?;
            println!("{} ok", e.id().as_str());
            Ok(exit::OK)
        }
    }
}

fn broker_cmd(spool: &Path, command: BrokerCommand) -> Result<u8> {
    match command {
        BrokerCommand::Status => {
            for l in broker::status(spool)? {
                println!("{l}");
            }
        }
        BrokerCommand::Online => {
            broker::set_connectivity(spool, Connectivity::Online)?;
            println!("online");
        }
        BrokerCommand::Offline => {
            broker::set_connectivity(spool, Connectivity::Offline)?;
            println!("offline");
        }
        BrokerCommand::Collect { envelopes } => {
            for (id, what) in broker::collect(spool, &envelopes)? {
                let what = match what {
                    Collected::Queued => "queued",
                    Collected::AlreadyHeld => "already held",
                };
                println!("{} {what}", id.as_str());
            }
        }
        BrokerCommand::Deliver {
            bank_url,
            client_id,
            client_secret,
        } => {
            let mut bank = BankClient::new(&bank_url)?;
            bank.login(&client_id, &client_secret)?;
            let report = broker::deliver(spool, &mut bank, Utc::now())?;
            for r in &report.delivered {
                println!("{} delivered ({:?})", r.envelope.as_str(), r.ack);
            }
            for f in &report.failed {
                println!("{} failed: {}", f.envelope.as_str(), f.error);
            }
            if !report.failed.is_empty() {
                bail!("{} envelope(s) not delivered", report.failed.len());
            }
        }
    }
    Ok(exit::OK)
}
