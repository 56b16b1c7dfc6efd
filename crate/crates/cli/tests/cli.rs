use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pgs_bank::http::{spawn, ServerHandle};
use pgs_bank::{BankConfig, BankService};
use pgs_core::pnm;
use pgs_core::vc::{BinaryImage, Pixel, Share};

fn pgs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pgs"))
        .args(args)
        .output()
        .expect("run pgs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.json"))
        .display()
        .to_string()
}

fn bank(sync_jobs: bool) -> ServerHandle {
    let cfg = BankConfig {
        sync_jobs,
        ..BankConfig::default()
    };
    spawn(BankService::new(cfg).unwrap(), SocketAddr::from(([127, 0, 0, 1], 0))).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn secret() -> BinaryImage {
    BinaryImage::from_fn(9, 5, |x, y| Pixel::from_black((x * y + x) % 3 == 0)).unwrap()
}

#[test]
fn split_then_stack_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("secret.pbm");
    pnm::write_pbm(&input, &secret()).unwrap();
    let shares = dir.path().join("shares");
    let o = pgs(&["split", s(&input), "--seed", "12", "--out", s(&shares)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (one, two) = (shares.join("share1.pbm"), shares.join("share2.pbm"));

    let clean = dir.path().join("clean");
    let o = pgs(&["stack", s(&one), s(&two), "--out", s(&clean)]);
    assert_eq!(code(&o), 0);
    assert_eq!(pnm::read_pbm(clean.join("decoded.pbm")).unwrap(), secret());

    let mut share = Share::from_image(&pnm::read_pbm(&one).unwrap()).unwrap();
    share.flip(7);
    let bad = dir.path().join("bad.pbm");
    pnm::write_pbm(&bad, &share.to_image()).unwrap();
    let o = pgs(&["stack", s(&bad), s(&two), "--out", s(&dir.path().join("t"))]);
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("tamper detected"));

    let other = dir.path().join("other.pbm");
    pnm::write_pbm(&other, &BinaryImage::filled(10, 5, Pixel::White).unwrap()).unwrap();
    let o = pgs(&["stack", s(&one), s(&other), "--out", s(&dir.path().join("m"))]);
    assert_eq!(code(&o), 3);

    assert_eq!(
        code(&pgs(&[
            "stack",
            s(&one),
            s(&dir.path().join("missing.pbm")),
            "--out",
            "x"
        ])),
        1
    );
    assert_eq!(code(&pgs(&["stack", s(&one), "--out", "x"])), 64);
    assert_eq!(code(&pgs(&["frobnicate"])), 64);
    assert_eq!(code(&pgs(&["--help"])), 0);
}

#[test]
fn split_is_deterministic_and_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("secret.pbm");
    pnm::write_pbm(&input, &secret()).unwrap();
    for out in ["a", "b"] {
        assert_eq!(
            code(&pgs(&[
                "split",
                s(&input),
                "--seed",
                "3",
                "--out",
                s(&dir.path().join(out))
            ])),
            0
        );
    }
    for f in ["share1.pbm", "share2.pbm", "meta.json"] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(f)).unwrap(),
            std::fs::read(dir.path().join("b").join(f)).unwrap()
        );
    }
    let junk = dir.path().join("junk.pbm");
    std::fs::write(&junk, b"P7\n1 1\n").unwrap();
    let o = pgs(&["split", s(&junk), "--out", s(&dir.path().join("c"))]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));

    let huge = dir.path().join("huge.pbm");
    std::fs::write(&huge, b"P4\n4097 1\n").unwrap();
    assert_eq!(code(&pgs(&["split", s(&huge), "--out", s(&dir.path().join("d"))])), 1);
}

#[test]
fn manual_pipeline_through_a_broker_spool() {
    let dir = tempfile::tempdir().unwrap();
    let p = |x: &str| dir.path().join(x);
    let server = bank(true);
    let url = server.url();

    let o = pgs(&[
        "selfie",
        "--amount",
        "1500",
        "--seed",
        "4",
        "--issued-at",
        "2016-09-08T11:00:00Z",
        "--out",
        s(&p("selfie")),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        code(&pgs(&[
            "split",
            s(&p("selfie/selfie.pbm")),
            "--seed",
            "4",
            "--out",
            s(&p("shares"))
        ])),
        0
    );
    for (role, share) in [("seller", "share1.pbm"), ("buyer", "share2.pbm")] {
        let o = pgs(&[
            "envelope",
            "seal",
            "--share",
            s(&p("shares").join(share)),
            "--role",
            role,
            "--transaction",
            "41",
            "--seller",
            "seller2@alphaplus.com",
            "--buyer",
            "buyer1@alphaplus.com",
            "--ticket",
            s(&p("selfie/captcha.json")),
            "--generated-at",
            "2016-09-08T11:00:20Z",
            "--out",
            s(&p(role)),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(code(&pgs(&["envelope", "verify", s(&p(role))])), 0);
    }

    let spool = p("spool");
    let o = pgs(&[
        "broker",
        "--spool",
        s(&spool),
        "collect",
        s(&p("seller")),
        s(&p("buyer")),
    ]);
    assert_eq!(stdout(&o), "41-seller queued\n41-buyer queued\n");
    let o = pgs(&["broker", "--spool", s(&spool), "deliver", "--bank-url", &url]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("offline"));

    assert_eq!(code(&pgs(&["broker", "--spool", s(&spool), "online"])), 0);
    let o = pgs(&["broker", "--spool", s(&spool), "deliver", "--bank-url", &url]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).matches("delivered (Stored)").count(), 2);
    let status = stdout(&pgs(&["broker", "--spool", s(&spool), "status"]));
    assert!(
        status.contains("pending: 0") && status.contains("delivered: 2"),
        "{status}"
    );

    // a second delivery session sends nothing again
    let o = pgs(&["broker", "--spool", s(&spool), "deliver", "--bank-url", &url]);
    assert_eq!(stdout(&o), "");

    let mut client = pgs_cli::client::BankClient::new(&url).unwrap();
    client.login("operator", "operator-secret").unwrap();
    assert_eq!(client.transaction(41).unwrap().state, "ToApprove");

    let o = pgs(&["broker", "--spool", s(&p("spool2")), "collect", s(&p("seller"))]);
    assert_eq!(code(&o), 0);
    pgs(&["broker", "--spool", s(&p("spool2")), "online"]);
    let o = pgs(&[
        "broker",
        "--spool",
        s(&p("spool2")),
        "deliver",
        "--bank-url",
        &url,
        "--client-secret",
        "nope",
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("invalid_client"));
}

#[test]
fn demo_transcripts_are_deterministic() {
    let run = || {
        let out = tempfile::tempdir().unwrap();
        let o = pgs(&["demo", &scenario("market-day"), "--sync-jobs", "--out", s(out.path())]);
        assert_eq!(code(&o), 0, "{}", stdout(&o));
        let file = std::fs::read_to_string(out.path().join("transcript.txt")).unwrap();
        assert_eq!(file, stdout(&o));
        assert!(out.path().join("rice/seller/share.pbm").exists());
        stdout(&o)
    };
    assert_eq!(run(), run());

    let a = stdout(&pgs(&["demo", &scenario("happy-path"), "--sync-jobs", "--seed", "1"]));
    let b = stdout(&pgs(&["demo", &scenario("happy-path"), "--sync-jobs", "--seed", "2"]));
    assert_ne!(a, b);
}

#[test]
fn demo_against_external_bank() {
    for sync in [true, false] {
        let server = bank(false);
        let mut args = vec![
            "demo".to_string(),
            scenario("declined"),
            "--bank-url".into(),
            server.url(),
        ];
        if sync {
            args.push("--sync-jobs".into());
        }
        let o = Command::new(env!("CARGO_BIN_EXE_pgs")).args(&args).output().unwrap();
        let text = stdout(&o);
        assert_eq!(code(&o), 0, "{text}");
        assert!(
            text.contains("blacklist: buyer1@alphaplus.com (paymentDeclined)"),
            "{text}"
        );
        assert!(text.contains("final p1: Declined"));
    }
}

#[test]
fn failing_step_is_reported_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let path: PathBuf = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"name":"premature","steps":[
            {"step":"takeSelfie","purchase":"p1","seller":"seller2@alphaplus.com","buyer":"buyer1@alphaplus.com","amount":12500},
            {"step":"exchangeShares","purchase":"p1"},
            {"step":"brokerCollect","broker":"kofi","purchase":"p1","shares":"seller"},
            {"step":"brokerGoOnline","broker":"kofi"},
            {"step":"brokerDeliver","broker":"kofi"},
            {"step":"operatorApprove","purchase":"p1"},
            {"step":"expectState","purchase":"p1","state":"Settled"}
        ]}"#,
    )
    .unwrap();
    let o = pgs(&["demo", s(&path), "--sync-jobs"]);
    assert_eq!(code(&o), 1);
    let text = stdout(&o);
    assert!(text.contains("[06] operatorApprove FAILED"), "{text}");
    assert!(text.contains("illegal_transition"), "{text}");
    assert!(text.ends_with("final p1: Incomplete\nresult: failed\n"), "{text}");
    assert!(!text.contains("[07]"));

    std::fs::write(&path, r#"{"steps":[{"step":"settle","purchase":"ghost"}]}"#).unwrap();
    assert_eq!(code(&pgs(&["demo", s(&path)])), 1);
}

#[test]
fn serve_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bank.toml");
    std::fs::write(&cfg, "port = \"not a number\"\n").unwrap();
    let o = pgs(&["serve", "--config", s(&cfg)]);
    assert_eq!(code(&o), 1);
}
