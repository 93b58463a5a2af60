use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn damsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_damsim"))
        .args(args)
        .env_remove("SIMSEED")
        .output()
        .expect("binary runs")
}

fn run_in(out: &Path, cmd: &str, file: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--scenario", file.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    damsim(&args)
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn clear_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "clear", &scenario("twonode.json"), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(dir.path(), "lmp.csv"), "node,hour,lmp\nn1,0,10.000000\nn2,0,30.000000\n");
    let settlement = read(dir.path(), "settlement.csv");
    assert!(settlement.contains("demand0,load_payment,3600.000000"));
    assert!(settlement.contains("system,congestion_rent,1000.000000"));
}

#[test]
fn regulate_with_exact_estimate_has_no_uplift() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "regulate", &scenario("twonode.json"), &[]);
    assert_eq!(out.status.code(), Some(0));
    let outcome = read(dir.path(), "outcome.csv");
    assert!(outcome.contains("uplift,0.000000"), "{outcome}");
    assert!(outcome.contains("c,2600.000000"), "{outcome}");
    assert!(outcome.contains("regulated_revenue,500.000000"), "{outcome}");
}

#[test]
fn regulate_with_distorted_offer() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "regulate", &scenario("twonode.json"), &["--alpha", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let outcome = read(dir.path(), "outcome.csv");
    assert!(outcome.contains("regulated_revenue,-400.000000"), "{outcome}");
    assert!(outcome.contains("firm_profit,-600.000000"), "{outcome}");
}

#[test]
fn sweep_flags_truthful_argmax() {
    let dir = tempfile::tempdir().unwrap();
    let grid = "alpha=0.5,1,1.5,2;beta=0;withhold=0,0.25,0.5;ramp_scale=1";
    let out = run_in(dir.path(), "sweep", &scenario("twonode.json"), &["--regime", "proposed", "--grid", grid]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = read(dir.path(), "sweep.csv");
    assert_eq!(table.lines().count(), 13);
    let truthful = table.lines().find(|l| l.starts_with("3,1,0,0,1,ok")).expect("truthful row");
    assert!(truthful.ends_with(",1,1"), "{truthful}");
    let summary = read(dir.path(), "sweep_summary.csv");
    assert!(summary.lines().any(|l| l.starts_with("proposed,") && l.ends_with(",1")), "{summary}");
}

#[test]
fn sweep_reports_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let grid = "alpha=0.5,1,2;withhold=0,0.2;ramp_scale=0.5,1";
    for dir in [&a, &b] {
        let out = run_in(dir.path(), "sweep", &scenario("fivenode.json"), &["--grid", grid]);
        assert_eq!(out.status.code(), Some(0));
    }
    for f in ["sweep.csv", "sweep_summary.csv"] {
        assert_eq!(read(a.path(), f), read(b.path(), f));
    }
}

#[test]
fn verify_passes_on_canonical() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "verify", &scenario("twonode.json"), &["--samples", "200"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = read(dir.path(), "verify.csv");
    assert!(!report.contains(",fail"), "{report}");
}

#[test]
fn seed_flag_and_environment() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let file = scenario("twonode.json");
    let flag = run_in(a.path(), "verify", &file, &["--samples", "50", "--seed", "9"]);
    let env = Command::new(env!("CARGO_BIN_EXE_damsim"))
        .args(["verify", "--scenario", file.to_str().unwrap(), "--out", b.path().to_str().unwrap(), "--samples", "50"])
        .env("SIMSEED", "9")
        .output()
        .unwrap();
    assert_eq!(flag.status.code(), Some(0));
    assert_eq!(env.status.code(), Some(0));
    assert_eq!(read(a.path(), "verify.csv"), read(b.path(), "verify.csv"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // Usage.
    assert_eq!(damsim(&["clear"]).status.code(), Some(1));
    assert_eq!(damsim(&["frobnicate"]).status.code(), Some(1));
    let bad_grid = run_in(d, "sweep", &scenario("twonode.json"), &["--grid", "gamma=1"]);
    assert_eq!(bad_grid.status.code(), Some(1));
    assert_eq!(damsim(&["--help"]).status.code(), Some(0));

    // Parse, unknown key and validation errors all map to 2.
    let missing = d.join("missing.json");
    assert_eq!(run_in(d, "clear", &missing, &[]).status.code(), Some(2));
    let broken = d.join("broken.json");
    std::fs::write(&broken, "{ not json").unwrap();
    assert_eq!(run_in(d, "clear", &broken, &[]).status.code(), Some(2));
    let text = std::fs::read_to_string(scenario("twonode.json")).unwrap();
    let unknown = d.join("unknown.json");
    std::fs::write(&unknown, text.replacen("\"hours\": 1", "\"hours\": 1, \"hour\": 2", 1)).unwrap();
    let out = run_in(d, "clear", &unknown, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));
    let invalid = d.join("invalid.json");
    std::fs::write(&invalid, text.replacen("\"capacity\": 50.0", "\"capacity\": -50.0", 1)).unwrap();
    let out = run_in(d, "clear", &invalid, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("network.lines[0].capacity"));
    // A distortion outside its range is an input error too.
    assert_eq!(run_in(d, "clear", &scenario("twonode.json"), &["--withhold", "2"]).status.code(), Some(2));

    // Withholding 90% leaves 110 MW for 120 MW of demand.
    let out = run_in(d, "clear", &scenario("twonode.json"), &["--withhold", "0.9"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("infeasible"));
}
