use std::process::{Command, Output};
use std::time::Instant;

use bellcert::cli::canonical_json;
use serde_json::Value;

fn bellcert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bellcert")).args(args).env_remove("BELLCERT_THREADS").output().unwrap()
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn bounds_for_three_settings() {
    let out = bellcert(&["bounds", "--n", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert_eq!(v["schema_version"], "1");
    assert_eq!(v["payload"]["local"], 6);
    assert_eq!(v["payload"]["local_bruteforce"], 6);
    let q = 4.0 * 3f64.sqrt();
    assert!((v["payload"]["quantum"].as_f64().unwrap() - q).abs() < 1e-15);
    assert!((v["payload"]["spectral"].as_f64().unwrap() - q).abs() < 1e-9);
}

#[test]
fn bruteforce_is_skipped_beyond_twelve() {
    let out = bellcert(&["bounds", "--n", "13"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json_of(&out)["payload"]["local_bruteforce"], "skipped: n>12");
}

#[test]
fn pipeline_passes_at_four_settings() {
    let out = bellcert(&["all", "--n", "4"]);
    let v = json_of(&out);
    assert_eq!(out.status.code(), Some(0), "{v}");
    assert_eq!(v["passed"], true);
    assert_eq!(v["payload"]["extract"]["bell_pairs"], 2);
}

#[test]
fn smallest_pipeline_is_fast() {
    let start = Instant::now();
    let out = bellcert(&["all", "--n", "2"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(start.elapsed().as_secs_f64() < 1.0, "{:?}", start.elapsed());
}

#[test]
fn injected_fault_fails_the_sos_verdict() {
    for cmd in ["sos-check", "all"] {
        let out = bellcert(&[cmd, "--n", "4", "--inject-fault", "non_involutive"]);
        assert_eq!(out.status.code(), Some(1), "{cmd}");
        let v = json_of(&out);
        let key = if cmd == "all" { "sos.sos_identity" } else { "sos_identity" };
        assert_eq!(v["verdicts"][key]["passed"], false, "{cmd}");
        assert_eq!(v["passed"], false);
    }
}

#[test]
fn reports_are_deterministic_across_thread_counts() {
    let a = bellcert(&["all", "--n", "3", "--seed", "7", "--threads", "1"]);
    let b = bellcert(&["all", "--n", "3", "--seed", "7", "--threads", "4"]);
    let c = Command::new(env!("CARGO_BIN_EXE_bellcert"))
        .args(["all", "--n", "3", "--seed", "7"])
        .env("BELLCERT_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
}

#[test]
fn json_round_trips_byte_for_byte() {
    let out = bellcert(&["robustness", "--n", "3", "--seeds", "2"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let parsed: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(canonical_json(&parsed), text);
}

#[test]
fn verdicts_are_auditable() {
    let v = json_of(&bellcert(&["all", "--n", "3"]));
    let verdicts = v["verdicts"].as_object().unwrap();
    assert!(!verdicts.is_empty());
    for (name, x) in verdicts {
        let m = x["measured"].as_f64().unwrap();
        let t = x["threshold"].as_f64().unwrap();
        let pass = match x["comparison"].as_str().unwrap() {
            "<=" => m <= t,
            ">=" => m >= t,
            other => panic!("{name}: comparison {other}"),
        };
        assert_eq!(x["passed"].as_bool().unwrap(), pass, "{name}");
    }
}

#[test]
fn csv_has_one_row_per_sample() {
    let out = bellcert(&["robustness", "--n", "2", "--format", "csv", "--eps-grid", "1e-4,3e-4,1e-3,3e-3,1e-2,3e-2", "--seeds", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 31);
    assert!(lines[0].starts_with("eps,seed,"));
}

#[test]
fn tolerance_overrides_are_echoed() {
    let v = json_of(&bellcert(&["sos-check", "--n", "2", "--tol.sos_identity=1e-6", "--tol.optimality", "1e-7"]));
    assert_eq!(v["config"]["tolerances"]["sos_identity"].as_f64(), Some(1e-6));
    assert_eq!(v["config"]["tolerances"]["optimality"].as_f64(), Some(1e-7));
    assert_eq!(v["verdicts"]["sos_identity"]["threshold"].as_f64(), Some(1e-6 * v["payload"]["certificate"]["claimed_value"].as_f64().unwrap()));
}

#[test]
fn usage_errors_exit_with_two() {
    for args in [
        &["bounds", "--n", "1"][..],
        &["robustness", "--model", "sideways"],
        &["bounds", "--tol.nonsense=1"],
        &["bounds", "--tol.sos_identity=abc"],
        &["frobnicate"],
    ] {
        assert_eq!(bellcert(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn degenerate_grid_reports_structured_error() {
    let out = bellcert(&["robustness", "--n", "2", "--eps-grid", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let v = json_of(&out);
    assert_eq!(v["error"]["kind"], "degenerate_grid");
}

#[test]
fn out_flag_writes_file() {
    let dir = std::env::temp_dir().join(format!("bellcert-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("report.json");
    let out = bellcert(&["strategy", "--n", "4", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["payload"]["m_star"], 4);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn unwritable_output_is_an_internal_error() {
    let out = bellcert(&["bounds", "--n", "2", "--out", "/nonexistent-dir/x/report.json"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn help_documents_tolerances() {
    let out = bellcert(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for name in bellcert::cli::default_tolerances().keys() {
        assert!(text.contains(name.as_str()), "{name}");
    }
}
