use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tsynth_core::dataset::read_jsonl;
use tsynth_core::library::structured_unitary;
use tsynth_core::matrix::{ComplexMatrix, UnitaryFile};

fn tsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsynth"))
        .args(args)
        .env_remove("TSYNTH_CHECKPOINT_DIR")
        .output()
        .expect("binary runs")
}

fn write_unitary(path: &Path, u: &ComplexMatrix) {
    fs::write(path, serde_json::to_string(&UnitaryFile::from_matrix(u)).unwrap()).unwrap();
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_qubits_is_a_usage_error() {
    let out = tsynth(&["train", "--steps", "10"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn synth_without_a_model_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let u = dir.path().join("u.json");
    write_unitary(&u, &ComplexMatrix::identity(4));
    let out = tsynth(&["synth", "--unitary", s(&u)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn identity_synthesizes_to_the_empty_circuit() {
    let dir = tempfile::tempdir().unwrap();
    let u = dir.path().join("u.json");
    let out_dir = dir.path().join("out");
    write_unitary(&u, &ComplexMatrix::identity(4));
    let out = tsynth(&["synth", "--unitary", s(&u), "--uniform", "--runs", "4", "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["success"], true);
    assert_eq!(report["total_gates"], 0);
    assert!(out_dir.join("manifest.json").exists());
}

#[test]
fn controlled_t_is_a_synthesis_failure() {
    let dir = tempfile::tempdir().unwrap();
    let u = dir.path().join("ct.json");
    write_unitary(&u, &structured_unitary("ct").unwrap());
    let out = tsynth(&[
        "synth", "--unitary", s(&u), "--uniform", "--runs", "8", "--sims", "16", "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn checkpoint_qubit_mismatch_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let train_dir = dir.path().join("train");
    let out = tsynth(&[
        "train", "--qubits", "2", "--gate-min", "1", "--gate-max", "2", "--steps", "64", "--workers",
        "2", "--batch", "8", "--width", "8", "--layers", "1", "--sims", "4", "--eval-sims", "4",
        "--eval-targets", "2", "--eval-runs", "1", "--out", s(&train_dir),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(train_dir.join("train_log.csv").exists());
    let u = dir.path().join("tof.json");
    write_unitary(&u, &structured_unitary("toffoli").unwrap());
    let ck = train_dir.join("checkpoint.json");
    let out = tsynth(&["synth", "--unitary", s(&u), "--checkpoint", s(&ck)]);
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_tsynth"))
        .args(["synth", "--unitary", s(&u), "--runs", "2"])
        .env("TSYNTH_CHECKPOINT_DIR", &train_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_dataset_bench_writes_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("empty.jsonl");
    fs::write(&data, "").unwrap();
    let csv = dir.path().join("bench.csv");
    let out = tsynth(&["bench", "--dataset", s(&data), "--uniform", "--out", s(&csv)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        fs::read_to_string(&csv).unwrap(),
        "target_id,success,input_t_count,input_gate_count,output_t_count,output_gate_count\n"
    );
}

#[test]
fn generated_targets_are_distinct_and_exact() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    let out = tsynth(&["gen-targets", "--qubits", "2", "--t-gates", "0", "--count", "50", "--seed", "1", "--out", s(&data)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let records = read_jsonl(std::io::BufReader::new(fs::File::open(&data).unwrap())).unwrap();
    assert_eq!(records.len(), 50);
    let keys: HashSet<Vec<i64>> = records
        .iter()
        .map(|r| {
            let c = r.circuit().unwrap();
            assert_eq!(c.t_count(), 0);
            c.unitary().canonical_key()
        })
        .collect();
    assert_eq!(keys.len(), 50);
}

#[test]
fn unsatisfiable_statistic_stalls() {
    let dir = tempfile::tempdir().unwrap();
    let out = tsynth(&[
        "gen-targets", "--qubits", "2", "--t-gates", "1", "--total-gates", "0", "--count", "1",
        "--max-attempts", "500", "--out", s(&dir.path().join("x.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stalled"));
}

#[test]
fn five_qubit_targets_respect_the_gate_cap() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    let out = tsynth(&["gen-targets", "--qubits", "5", "--total-gates", "40", "--count", "2", "--out", s(&data)]);
    assert_eq!(out.status.code(), Some(0));
    let records = read_jsonl(std::io::BufReader::new(fs::File::open(&data).unwrap())).unwrap();
    assert!(records.iter().all(|r| r.gate_count == 40 && r.n_qubits == 5));
    let out = tsynth(&["gen-targets", "--qubits", "5", "--total-gates", "41", "--count", "1", "--out", s(&data)]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn score_kinds_share_one_run_set() {
    let dir = tempfile::tempdir().unwrap();
    let u = dir.path().join("cp.json");
    write_unitary(&u, &structured_unitary("cp").unwrap());
    let mut reports = Vec::new();
    for score in ["gates", "tcount"] {
        let o = dir.path().join(score);
        let out = tsynth(&[
            "synth", "--unitary", s(&u), "--uniform", "--max-steps", "12", "--runs", "16", "--sims",
            "32", "--score", score, "--seed", "4", "--out", s(&o),
        ]);
        assert!(matches!(out.status.code(), Some(0) | Some(3)));
        let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(o.join("report.json")).unwrap()).unwrap();
        reports.push(r);
    }
    assert_eq!(reports[0]["runs"], reports[1]["runs"]);
}

#[test]
fn oracle_reports_minimal_counts() {
    let dir = tempfile::tempdir().unwrap();
    let u = dir.path().join("cz.json");
    write_unitary(&u, &structured_unitary("cz").unwrap());
    let o = dir.path().join("o");
    let out = tsynth(&["oracle", "--unitary", s(&u), "--max-gates", "4", "--out", s(&o)]);
    assert_eq!(out.status.code(), Some(0));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(o.join("oracle.json")).unwrap()).unwrap();
    assert_eq!(r["gate_count"], 3);
    assert_eq!(r["t_count"], 0);
}
