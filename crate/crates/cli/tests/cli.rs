//! End-to-end tests driving the compiled binary: every subcommand, the JSON
//! contracts on disk, determinism across runs, and the exit-code convention.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use regret2cause_core::{Cid, InterventionSpec, Policy};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_regret2cause"))
}

fn run_ok(args: &[&str], dir: &Path) -> Output {
    let out = bin().args(args).current_dir(dir).output().expect("spawn");
    assert!(
        out.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn gen_envs(dir: &Path, n: usize) {
    run_ok(
        &[
            "gen",
            "--family",
            "binary-pair",
            "--n",
            &n.to_string(),
            "--seed",
            "7",
            "--out",
            "envs",
        ],
        dir,
    );
}

#[test]
fn gen_writes_parseable_environments_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    gen_envs(tmp.path(), 3);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("envs/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["family"], "binary-pair");
    assert_eq!(manifest["count"], 3);
    let files = manifest["files"].as_array().unwrap();
    assert_eq!(files.len(), 3);
    for f in files {
        let path = tmp.path().join("envs").join(f.as_str().unwrap());
        let json = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        let cid = Cid::from_json(&json).expect("generated environment must validate");
        assert_eq!(cid.chance().dag().variable_count(), 2);
    }
}

#[test]
fn gen_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        run_ok(
            &[
                "gen",
                "--family",
                "binary-pair",
                "--n",
                "2",
                "--seed",
                "11",
                "--out",
                out.to_str().unwrap(),
            ],
            tmp.path(),
        );
    }
    for name in ["env_00000.json", "env_00001.json", "manifest.json"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
}

#[test]
fn solve_writes_the_exact_optimal_policy() {
    let tmp = tempfile::tempdir().unwrap();
    gen_envs(tmp.path(), 1);
    let env_path = tmp.path().join("envs/env_00000.json");
    fs::write(
        tmp.path().join("shift.json"),
        r#"{"type":"hard","variable":"X","value":1}"#,
    )
    .unwrap();
    run_ok(
        &[
            "solve",
            "--model",
            "envs/env_00000.json",
            "--shift",
            "shift.json",
            "--out",
            "policy.json",
        ],
        tmp.path(),
    );
    let policy: Policy =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("policy.json")).unwrap()).unwrap();
    let cid =
        Cid::from_json(&serde_json::from_str(&fs::read_to_string(&env_path).unwrap()).unwrap())
            .unwrap();
    let shift = InterventionSpec::Hard {
        variable: "X".into(),
        value: 1,
    };
    assert_eq!(policy, cid.optimal_policy(&shift).unwrap());
}

#[test]
fn discover_exact_recovers_graph_and_tables() {
    let tmp = tempfile::tempdir().unwrap();
    gen_envs(tmp.path(), 1);
    run_ok(
        &[
            "discover",
            "--cid",
            "envs/env_00000.json",
            "--delta",
            "0",
            "--samples",
            "64",
            "--mode",
            "bisect",
            "--seed",
            "7",
            "--out",
            "rec.json",
        ],
        tmp.path(),
    );
    let rec: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("rec.json")).unwrap()).unwrap();
    let cid = Cid::from_json(
        &serde_json::from_str(
            &fs::read_to_string(tmp.path().join("envs/env_00000.json")).unwrap(),
        )
        .unwrap(),
    )
    .unwrap();
    let dag = cid.chance().dag();
    let true_edges: Vec<[String; 2]> = dag
        .edges()
        .map(|(p, c)| [dag.name(p).to_string(), dag.name(c).to_string()])
        .collect();
    let got_edges: Vec<[String; 2]> = rec["edges"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| {
            [
                e[0].as_str().unwrap().to_string(),
                e[1].as_str().unwrap().to_string(),
            ]
        })
        .collect();
    assert_eq!(got_edges, true_edges);
    assert!(rec["unidentifiable"].as_array().unwrap().is_empty());
    // Every recovered probability matches the generating model closely, and
    // its reported interval contains the point.
    for cpd_json in rec["cpds"].as_array().unwrap() {
        let name = cpd_json["variable"].as_str().unwrap();
        let v = dag.index_of(name).unwrap();
        let truth = &cid.chance().cpd(v).table;
        let table = cpd_json["table"].as_array().unwrap();
        assert_eq!(table.len(), truth.len());
        for (row_json, truth_row) in table.iter().zip(truth) {
            for (p_json, &p_true) in row_json.as_array().unwrap().iter().zip(truth_row) {
                let p = p_json.as_f64().unwrap();
                assert!(
                    (p - p_true).abs() <= 1e-6,
                    "{name}: recovered {p} vs true {p_true}"
                );
            }
        }
    }
    for bounds_json in rec["bounds"].as_array().unwrap() {
        for row in bounds_json["table"].as_array().unwrap() {
            for pair in row.as_array().unwrap() {
                let lo = pair[0].as_f64().unwrap();
                let hi = pair[1].as_f64().unwrap();
                assert!(lo <= hi + 1e-12);
            }
        }
    }
}

#[test]
fn sweep_writes_the_csv_contract_and_json_mirror() {
    let tmp = tempfile::tempdir().unwrap();
    run_ok(
        &[
            "sweep",
            "--bounds",
            "0,0.3",
            "--n-envs",
            "4",
            "--samples",
            "500",
            "--mode",
            "mc",
            "--seed",
            "7",
            "--out",
            "sweep.csv",
        ],
        tmp.path(),
    );
    let csv = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "regret_bound_normalized,n_envs,g_error_rate,p_mean_abs_error,p_worst_abs_error,\
         baseline_g_error_rate,baseline_p_mean_abs_error,fallback_rate"
    );
    assert_eq!(lines.count(), 2, "one data row per bound");
    let mirror: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("sweep.json")).unwrap()).unwrap();
    assert_eq!(mirror["rows"].as_array().unwrap().len(), 2);
    assert_eq!(mirror["config"]["n_envs"], 4);
}

#[test]
fn exit_codes_follow_the_convention() {
    let tmp = tempfile::tempdir().unwrap();
    // Missing input file: configuration error.
    let out = bin()
        .args(["discover", "--cid", "missing.json", "--out", "r.json"])
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    // Rejected parameter value: configuration error.
    let out = bin()
        .args([
            "sweep", "--bounds", "0.3", "--n-envs", "0", "--out", "s.csv",
        ])
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    // Unknown flag: configuration error (argument parsing).
    let out = bin()
        .args(["solve", "--no-such-flag"])
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    // Invalid JSON payload: configuration error.
    fs::write(tmp.path().join("bad.json"), "{not json").unwrap();
    let out = bin()
        .args(["discover", "--cid", "bad.json", "--out", "r.json"])
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
