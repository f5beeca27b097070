//! End-to-end tests of the `qsample` binary: document parsing, every
//! subcommand, exit codes, output formats, and report round-trips.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::{Value, json};

use qsample_core::cheat::AuditReport;
use qsample_core::cutchoose::SimReport;

fn workdir() -> &'static PathBuf {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = std::env::temp_dir().join(format!("qsample-cli-tests-{}", std::process::id()));
        fs::create_dir_all(&dir).expect("create test workdir");
        dir
    })
}

fn write_doc(name: &str, doc: &Value) -> PathBuf {
    let path = workdir().join(name);
    fs::write(&path, serde_json::to_string_pretty(doc).unwrap()).expect("write fixture");
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsample")).args(args).output().expect("spawn qsample")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Parses JSON output and checks the report envelope.
fn parse_report(out: &Output, kind: &str) -> Value {
    let v: Value = serde_json::from_str(&stdout(out)).expect("stdout is JSON");
    assert_eq!(v["version"], 1, "schema version");
    assert_eq!(v["kind"], kind, "report kind");
    v
}

// ---------------------------------------------------------------------------
// Fixtures
// ---------------------------------------------------------------------------

fn zero() -> Value {
    json!([0.0, 0.0])
}

fn re(x: f64) -> Value {
    json!([x, 0.0])
}

/// 2×2 diagonal projector with real diagonal (d0, d1).
fn diag2(d0: f64, d1: f64) -> Value {
    json!([[[d0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [d1, 0.0]]])
}

/// Maximally entangled two-qubit device measured in the computational basis.
fn coin_device_doc() -> Value {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    json!({
        "version": 1,
        "kind": "device_spec",
        "dim_a": 2,
        "dim_b": 2,
        "state": [re(s), zero(), zero(), re(s)],
        "alice_meas": [[diag2(1.0, 0.0), diag2(0.0, 1.0)]],
        "bob_meas": [[diag2(1.0, 0.0), diag2(0.0, 1.0)]],
    })
}

fn coin_dist_doc() -> Value {
    json!({
        "version": 1,
        "kind": "distribution",
        "na": 2,
        "nb": 2,
        "table": [0.5, 0.0, 0.0, 0.5],
    })
}

fn product_dist_doc() -> Value {
    json!({
        "version": 1,
        "kind": "distribution",
        "na": 2,
        "nb": 2,
        "table": [0.25, 0.25, 0.25, 0.25],
    })
}

/// One-move protocol: Alice entangles her qubit with the message and sends
/// it; both sides measure in the computational basis (ideal shared coin).
fn coin_proto_doc() -> Value {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let v0 = json!([
        [re(s), zero(), re(s), zero()],
        [zero(), re(s), zero(), re(s)],
        [zero(), re(s), zero(), re(-s)],
        [re(s), zero(), re(-s), zero()],
    ]);
    json!({
        "version": 1,
        "kind": "protocol",
        "dim_a": 2,
        "dim_m": 2,
        "dim_b": 1,
        "first": "alice",
        "moves": [{"party": "alice", "unitary": v0}],
        "final_alice": [diag2(1.0, 0.0), diag2(0.0, 1.0)],
        "final_bob": [diag2(1.0, 0.0), diag2(0.0, 1.0)],
    })
}

fn identity_iso_doc() -> Value {
    json!({
        "version": 1,
        "kind": "isometry_pair",
        "v_a": [[re(1.0), zero()], [zero(), re(1.0)]],
        "v_b": [[re(1.0), zero()], [zero(), re(1.0)]],
        "junk": [re(1.0)],
    })
}

fn sim_doc(extra: Value) -> Value {
    let mut doc = json!({
        "version": 1,
        "kind": "sim_config",
        "n_boxes": 4,
        "shots_per_input": 120,
        "trials": 60,
        "final_inputs": [0, 0],
        "calibration": {"runs": 80, "quantile": 0.95},
        "target": "coin",
    });
    doc.as_object_mut().unwrap().extend(extra.as_object().unwrap().clone());
    doc
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[test]
fn check_product_prints_the_verdict_with_exit_0() {
    let dist = write_doc("product.dist.json", &product_dist_doc());
    let out = run(&["check-product", dist.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("product: true"), "stdout: {}", stdout(&out));

    let coin = write_doc("coin.dist.json", &coin_dist_doc());
    let out = run(&["check-product", coin.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("product: false"), "stdout: {text}");
    assert!(text.contains("witness:"), "stdout: {text}");

    // A device spec is also accepted; its correlation is computed first.
    let dev = write_doc("coin.device.json", &coin_device_doc());
    let out = run(&["check-product", dev.to_str().unwrap(), "--format", "json"]);
    assert_eq!(code(&out), 0);
    let v = parse_report(&out, "product_report");
    assert_eq!(v["product"], false);
    assert_eq!(v["tol"], 1e-8);
}

#[test]
fn correlation_reproduces_the_ideal_coin_table() {
    let dev = write_doc("corr.device.json", &coin_device_doc());
    let out = run(&["correlation", dev.to_str().unwrap(), "--format", "json"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let v = parse_report(&out, "correlation_report");
    let table: Vec<f64> =
        v["table"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(table.len(), 4);
    for (got, want) in table.iter().zip([0.5, 0.0, 0.0, 0.5]) {
        assert!((got - want).abs() <= 1e-10, "table: {table:?}");
    }
    assert!((v["alice_marginals"][0][0].as_f64().unwrap() - 0.5).abs() <= 1e-10);
    assert!((v["bob_marginals"][0][1].as_f64().unwrap() - 0.5).abs() <= 1e-10);

    let out = run(&["correlation", dev.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x,y,a,b,p");
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[1], "0,0,0,0,0.5");
    assert_eq!(lines[2], "0,0,0,1,0");
}

#[test]
fn bias_floor_of_the_ideal_coin_is_the_closed_form_root() {
    let dist = write_doc("floor.dist.json", &coin_dist_doc());
    let out = run(&["bias-floor", dist.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("floor: 0.207106781"), "stdout: {}", stdout(&out));

    let out = run(&["bias-floor", dist.to_str().unwrap(), "--format", "json"]);
    let v = parse_report(&out, "bias_floor_report");
    let want = (2f64.sqrt() - 1.0) / 2.0;
    assert!((v["floor"].as_f64().unwrap() - want).abs() <= 1e-9);
    assert_eq!(v["roots"].as_array().unwrap().len(), 2);
}

#[test]
fn closeness_accepts_the_target_against_itself() {
    let dev = write_doc("close.device.json", &coin_device_doc());
    let iso = write_doc("close.iso.json", &identity_iso_doc());
    let out = run(&[
        "closeness",
        dev.to_str().unwrap(),
        dev.to_str().unwrap(),
        iso.to_str().unwrap(),
        "--delta",
        "0.01",
        "--format",
        "json",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let v = parse_report(&out, "closeness_report");
    assert_eq!(v["within"], true);
    assert!(v["max_distance"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn cheat_reports_the_sender_forcing_the_coin() {
    let proto = write_doc("cheat.proto.json", &coin_proto_doc());
    let out = run(&[
        "cheat",
        proto.to_str().unwrap(),
        "--party",
        "alice",
        "--outcome",
        "0",
        "--format",
        "json",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let v = parse_report(&out, "cheat_report");
    let r = &v["reports"][0];
    assert_eq!(r["cheater"], "Alice");
    assert!((r["p_star"].as_f64().unwrap() - 1.0).abs() <= 1e-6, "report: {r}");
    assert!((r["honest_prob"].as_f64().unwrap() - 0.5).abs() <= 1e-9);

    // No --party: profiles for both cheaters, 2 outcomes each.
    let out = run(&["cheat", proto.to_str().unwrap(), "--format", "json"]);
    let v = parse_report(&out, "cheat_report");
    assert_eq!(v["reports"].as_array().unwrap().len(), 4);

    // --outcome without --party is a usage error.
    let out = run(&["cheat", proto.to_str().unwrap(), "--outcome", "0"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn kitaev_check_passes_on_the_coin_protocol() {
    let proto = write_doc("kitaev.proto.json", &coin_proto_doc());
    let out = run(&["kitaev-check", proto.to_str().unwrap(), "--format", "json"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let v = parse_report(&out, "kitaev_report");
    assert!(v["min_residual"].as_f64().unwrap() >= -1e-6);
    // Cheating Alice forces either outcome outright; cheating Bob cannot move
    // Alice's half of the ideal coin.
    assert!((v["alice_forcing"][0].as_f64().unwrap() - 1.0).abs() <= 1e-6);
    assert!((v["bob_forcing"][0].as_f64().unwrap() - 0.5).abs() <= 1e-6);
}

#[test]
fn audit_exit_code_separates_the_two_verdicts() {
    let proto = write_doc("audit.proto.json", &coin_proto_doc());

    // δ below the forcing gap: the audit fails with exit 3 and reports the
    // worst margin 0.1 = p* − p − δ = 1 − 0.5 − 0.4.
    let out =
        run(&["audit", proto.to_str().unwrap(), "--delta", "0.4", "--format", "json"]);
    assert_eq!(code(&out), 3, "stderr: {}", stderr(&out));
    let v = parse_report(&out, "audit_report");
    assert_eq!(v["passed"], false);
    let report: AuditReport = serde_json::from_str(&stdout(&out)).expect("typed re-parse");
    let worst = report.checks.iter().map(|c| c.excess).fold(f64::NEG_INFINITY, f64::max);
    assert!((worst - 0.1).abs() <= 1e-5, "worst excess {worst}");

    // Text mode shows the failing check.
    let out = run(&["audit", proto.to_str().unwrap(), "--delta", "0.4"]);
    assert_eq!(code(&out), 3);
    assert!(stdout(&out).contains("passed: false"));
    assert!(stdout(&out).contains("FAIL"));

    // δ above the gap: secure, exit 0.
    let out = run(&["audit", proto.to_str().unwrap(), "--delta", "0.5"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("passed: true"));
}

#[test]
fn multiparty_finds_the_nonproduct_bipartition() {
    let ghz = write_doc(
        "ghz.dist.json",
        &json!({
            "version": 1,
            "kind": "distribution",
            "sizes": [2, 2, 2],
            "table": [0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5],
        }),
    );
    let out = run(&["multiparty", ghz.to_str().unwrap(), "--format", "json"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let v = parse_report(&out, "multiparty_report");
    assert_eq!(v["product"], false);
    assert_eq!(v["witness"]["side_a"][0], 0);

    let uniform = write_doc(
        "uniform.dist.json",
        &json!({
            "version": 1,
            "kind": "distribution",
            "sizes": [2, 2, 2],
            "table": [0.125, 0.125, 0.125, 0.125, 0.125, 0.125, 0.125, 0.125],
        }),
    );
    let out = run(&["multiparty", uniform.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("product: true"));
}

#[test]
fn simulate_is_seeded_deterministic_and_writes_trial_csv() {
    let cfg = write_doc("sim.config.json", &sim_doc(json!({})));
    let csv_path = workdir().join("trials.csv");
    let args = [
        "simulate",
        cfg.to_str().unwrap(),
        "--seed",
        "5",
        "--format",
        "json",
        "--trial-csv",
        csv_path.to_str().unwrap(),
    ];
    let out1 = run(&args);
    assert_eq!(code(&out1), 0, "stderr: {}", stderr(&out1));
    let v = parse_report(&out1, "sim_report");
    assert_eq!(v["adversary"], "honest");
    assert_eq!(v["trials"], 60);
    assert_eq!(v["seed"], 5);
    let report: SimReport = serde_json::from_str(&stdout(&out1)).expect("typed re-parse");
    assert_eq!(report.records.len(), 60);

    let csv = fs::read_to_string(&csv_path).expect("trial csv written");
    assert_eq!(csv.lines().count(), 61);
    assert!(csv.starts_with("trial,aborted,"));

    // Same seed, same bytes — also under a thread-count override.
    let out2 = run(&args);
    assert_eq!(stdout(&out1), stdout(&out2));
    let out3 = Command::new(env!("CARGO_BIN_EXE_qsample"))
        .args(args)
        .env("QSAMPLE_THREADS", "1")
        .output()
        .expect("spawn qsample");
    assert_eq!(stdout(&out1), stdout(&out3));

    // The --adversary flag overrides the document.
    let out = run(&[
        "simulate",
        cfg.to_str().unwrap(),
        "--seed",
        "5",
        "--adversary",
        "final-box-swap",
        "--format",
        "json",
    ]);
    assert_eq!(code(&out), 0);
    let v = parse_report(&out, "sim_report");
    assert_eq!(v["adversary"], "final-box-swap");
}

#[test]
fn simulate_requires_an_explicit_seed() {
    let cfg = write_doc("sim.noseed.json", &sim_doc(json!({})));
    let out = run(&["simulate", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("seed"), "stderr: {}", stderr(&out));

    // A seed stored in the document works without the flag.
    let cfg = write_doc("sim.docseed.json", &sim_doc(json!({"seed": 9, "trials": 10})));
    let out = run(&["simulate", cfg.to_str().unwrap(), "--format", "json"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let v = parse_report(&out, "sim_report");
    assert_eq!(v["seed"], 9);
}

#[test]
fn invalid_documents_and_usage_fail_with_exit_1() {
    // Unreadable JSON.
    let broken = workdir().join("broken.json");
    fs::write(&broken, "{ this is not json").unwrap();
    let out = run(&["check-product", broken.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("JSON"), "stderr: {}", stderr(&out));

    // Missing file.
    let out = run(&["correlation", workdir().join("absent.json").to_str().unwrap()]);
    assert_eq!(code(&out), 1);

    // Unsupported schema version.
    let doc = json!({"version": 2, "kind": "distribution", "na": 2, "nb": 2,
        "table": [0.5, 0.0, 0.0, 0.5]});
    let path = write_doc("future.dist.json", &doc);
    let out = run(&["bias-floor", path.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("version"));

    // Wrong kind for the subcommand.
    let dev = write_doc("kind.device.json", &coin_device_doc());
    let out = run(&["audit", dev.to_str().unwrap(), "--delta", "0.1"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("kind"));

    // A distribution that is not a distribution.
    let bad = json!({"version": 1, "kind": "distribution", "na": 2, "nb": 2,
        "table": [0.9, 0.0, 0.0, 0.5]});
    let path = write_doc("unnormalized.dist.json", &bad);
    let out = run(&["bias-floor", path.to_str().unwrap()]);
    assert_eq!(code(&out), 1);

    // Unknown adversary.
    let cfg = write_doc("sim.badadv.json", &sim_doc(json!({})));
    let out = run(&["simulate", cfg.to_str().unwrap(), "--seed", "1", "--adversary", "evil"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("adversary"), "stderr: {}", stderr(&out));

    // CSV where no table shape exists.
    let dist = write_doc("csv.dist.json", &product_dist_doc());
    let out = run(&["check-product", dist.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(code(&out), 1);

    // Unknown subcommand / flag are usage errors, not panics.
    let out = run(&["frobnicate"]);
    assert_eq!(code(&out), 1);
    let out = run(&["--help"]);
    assert_eq!(code(&out), 0);
}

#[test]
fn out_flag_writes_the_report_to_a_file() {
    let dist = write_doc("outflag.dist.json", &coin_dist_doc());
    let target = workdir().join("floor-report.json");
    let out = run(&[
        "bias-floor",
        dist.to_str().unwrap(),
        "--format",
        "json",
        "--out",
        target.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).is_empty());
    let text = fs::read_to_string(&target).expect("report file");
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["kind"], "bias_floor_report");
    assert_eq!(v["version"], 1);
}
