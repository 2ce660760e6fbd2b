//! Behavioral tests of the command-line surface: flag validation and exit
//! codes, manifest contents, output formats, and the documented error
//! paths of each subcommand.

mod common;

use common::*;
use sha2::{Digest, Sha256};
use tempfile::tempdir;

#[test]
fn even_inline_xi_value_is_a_usage_error() {
    let dir = tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "simulate",
            "--xi",
            r#"{"atoms":[{"value":2,"prob":1}]}"#,
            "--steps",
            "10",
        ],
    );
    assert_eq!(exit_code(&out), 2, "stderr: {}", stderr_of(&out));
    assert!(stderr_of(&out).contains("even value 2"));
}

#[test]
fn even_reach_target_is_a_usage_error() {
    let dir = tempdir().unwrap();
    let out = run_in(dir.path(), &["reach", "--m", "4"]);
    assert_eq!(exit_code(&out), 2);
    assert!(stderr_of(&out).contains("even"));
}

#[test]
fn even_x0_is_a_usage_error() {
    let dir = tempdir().unwrap();
    let out = run_in(dir.path(), &["simulate", "--x0", "4", "--steps", "10"]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn unknown_preset_is_a_usage_error() {
    let dir = tempdir().unwrap();
    let out = run_in(dir.path(), &["simulate", "--xi", "bogus", "--steps", "10"]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn backwards_range_is_a_usage_error() {
    let dir = tempdir().unwrap();
    let out = run_in(dir.path(), &["classical", "--range", "9..1"]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn missing_required_target_is_a_usage_error() {
    let dir = tempdir().unwrap();
    assert_eq!(exit_code(&run_in(dir.path(), &["reach"])), 2);
    assert_eq!(exit_code(&run_in(dir.path(), &["classical"])), 2);
}

#[test]
fn even_stationary_cutoff_is_a_usage_error() {
    let dir = tempdir().unwrap();
    let out = run_in(dir.path(), &["stationary", "--cutoff", "100"]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn stationary_non_convergence_exits_3_and_leaves_a_manifest() {
    let dir = tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["stationary", "--cutoff", "999", "--max-iters", "1"],
    );
    assert_eq!(exit_code(&out), 3, "stderr: {}", stderr_of(&out));
    let manifest = json(dir.path(), "manifest.json");
    assert!(manifest["diagnostics"]["residual"].as_f64().unwrap() > 1e-12);
}

#[test]
fn manifest_digests_match_the_outputs() {
    let dir = tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "simulate", "--steps", "20000", "--seed", "11", "--replicas", "2",
        ],
    );
    assert_ok(&out);
    let manifest = json(dir.path(), "manifest.json");
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["stream_ids"], serde_json::json!([0, 1]));
    assert_eq!(manifest["config"]["steps"], 20000);
    assert_eq!(
        manifest["config"]["distribution"]["atoms"][0]["value"], 1,
        "resolved noise law is recorded"
    );
    let outputs = manifest["outputs"].as_array().unwrap();
    let names: Vec<&str> = outputs
        .iter()
        .map(|o| o["path"].as_str().unwrap())
        .collect();
    assert!(names.contains(&"report.json"));
    for output in outputs {
        let bytes = read_bytes(dir.path(), output["path"].as_str().unwrap());
        assert_eq!(output["bytes"].as_u64().unwrap(), bytes.len() as u64);
        let digest = format!("{:x}", Sha256::digest(&bytes));
        assert_eq!(output["sha256"].as_str().unwrap(), digest);
    }
    let started = manifest["started_at"].as_str().unwrap();
    let finished = manifest["finished_at"].as_str().unwrap();
    assert!(started <= finished, "{started} vs {finished}");
}

#[test]
fn classical_budget_exhaustion_marks_the_row_undecided() {
    let dir = tempdir().unwrap();
    let out = run_in(dir.path(), &["classical", "--x0", "27", "--max-steps", "5"]);
    assert_ok(&out);
    let csv = read(dir.path(), "classical.csv");
    assert_eq!(csv.lines().nth(1).unwrap().split(',').nth(1), Some("undecided"));
    let manifest = json(dir.path(), "manifest.json");
    assert_eq!(manifest["diagnostics"]["undecided"], 1);
}

#[test]
fn classical_from_one_reports_the_trivial_cycle() {
    let dir = tempdir().unwrap();
    let out = run_in(dir.path(), &["classical", "--x0", "1"]);
    assert_ok(&out);
    let csv = read(dir.path(), "classical.csv");
    assert_eq!(csv.lines().nth(1), Some("1,0,1,0,1"));
}

#[test]
fn reach_single_target_writes_the_known_certificate() {
    let dir = tempdir().unwrap();
    let out = run_in(dir.path(), &["reach", "--m", "5"]);
    assert_ok(&out);
    let cert = json(dir.path(), "certificate.json");
    assert_eq!(cert["target"], "5");
    assert_eq!(cert["prob"], "1/16");
    assert_eq!(cert["steps"].as_array().unwrap().len(), 2);
    assert_eq!(cert["steps"][0]["state"], "1");
    assert_eq!(cert["steps"][0]["xi"], 3);
    assert_eq!(cert["steps"][1]["state"], "3");
    assert_eq!(cert["steps"][1]["xi"], 1);
}

#[test]
fn reach_range_writes_verified_rows() {
    let dir = tempdir().unwrap();
    let out = run_in(dir.path(), &["reach", "--range", "1..999", "--verify"]);
    assert_ok(&out);
    let csv = read(dir.path(), "certificates.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "m,path_len,prob_num,prob_den,ok");
    assert_eq!(lines.len(), 1 + 500);
    assert!(lines[1..].iter().all(|l| l.ends_with(",true")));
    let manifest = json(dir.path(), "manifest.json");
    assert_eq!(manifest["diagnostics"]["verified"], true);
    assert_eq!(manifest["diagnostics"]["targets"], 500);
}

#[test]
fn unreachable_threshold_gives_empty_tables_and_a_notice() {
    let dir = tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "excursions", "--M", "1e9", "--steps", "1000", "--replicas", "1",
        ],
    );
    assert_ok(&out);
    assert!(stderr_of(&out).contains("notice"));
    let csv = read(dir.path(), "excursions_0.csv");
    assert_eq!(csv.trim_end(), "k,start,end,duration");
    let tails = json(dir.path(), "tails.json");
    assert!(tails["tails"].is_null());
    assert_eq!(tails["complete_excursions"], 0);
    assert!(!tails["notes"].as_array().unwrap().is_empty());
}

#[test]
fn pm1_simulation_reports_absorption_by_horizon() {
    let dir = tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "simulate", "--xi", "pm1", "--x0", "5", "--steps", "10000",
            "--replicas", "50", "--seed", "3",
        ],
    );
    assert_ok(&out);
    let report = json(dir.path(), "report.json");
    let absorption = &report["absorption"];
    assert_eq!(absorption["replicas"], 50);
    assert_eq!(
        absorption["absorbed"],
        report["meta"]["terminals"]["absorbed_at_one"]
    );
    assert!(absorption["frequency"].as_f64().unwrap() > 0.0);
}

#[test]
fn worker_count_does_not_change_the_report() {
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    let args = ["simulate", "--steps", "20000", "--seed", "5", "--replicas", "3"];
    let mut one = args.to_vec();
    one.extend(["--jobs", "1"]);
    assert_ok(&run_in(a.path(), &one));
    assert_ok(&run_in(b.path(), &args));
    assert_eq!(read(a.path(), "report.json"), read(b.path(), "report.json"));
}

#[test]
fn stationary_exports_self_loop_and_point_mass() {
    let dir = tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["stationary", "--cutoff", "99", "--export-table"],
    );
    assert_ok(&out);
    let table = read(dir.path(), "table.csv");
    assert!(
        table.lines().any(|l| l == "1,1,1,2"),
        "row 1 -> 1 with probability 1/2 missing"
    );

    let dir2 = tempdir().unwrap();
    let out = run_in(dir2.path(), &["stationary", "--xi", "pm1", "--cutoff", "99"]);
    assert_ok(&out);
    let pi = read(dir2.path(), "pi.csv");
    let pi1: f64 = pi
        .lines()
        .nth(1)
        .and_then(|l| l.strip_prefix("1,"))
        .unwrap()
        .parse()
        .unwrap();
    assert!(pi1 > 0.9999, "pm1 mass at 1 is {pi1}");
}
