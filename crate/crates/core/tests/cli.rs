use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_safemon");

fn safemon(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> serde_json::Value {
    let out = safemon(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("one JSON summary line")
}

fn walkthrough(dir: &Path) {
    ok(
        dir,
        &[
            "synth",
            "gen",
            "--out",
            "d",
            "--seed",
            "4",
            "--n-train",
            "200",
            "--n-val",
            "60",
            "--n-test",
            "80",
        ],
    );
    ok(
        dir,
        &[
            "fit-ood",
            "--manifest",
            "d/train/manifest.jsonl",
            "--out",
            "ood.txt",
        ],
    );
    ok(
        dir,
        &[
            "fit-oms",
            "--manifest",
            "d/train/manifest.jsonl",
            "--trace",
            "d/train/trace.jsonl",
            "--k",
            "3",
            "--out",
            "oms.txt",
        ],
    );
    ok(
        dir,
        &[
            "calibrate",
            "--manifest",
            "d/val/manifest.jsonl",
            "--trace",
            "d/val/trace.jsonl",
            "--out",
            "cal.json",
        ],
    );
    ok(
        dir,
        &[
            "evaluate",
            "--manifest",
            "d/test/manifest.jsonl",
            "--trace",
            "d/test/trace.jsonl",
            "--ood",
            "ood.txt",
            "--oms",
            "oms.txt",
            "--tau-conf",
            "calibrate",
            "--calibration",
            "cal.json",
            "--out",
            "ev",
        ],
    );
    ok(
        dir,
        &["report", "--input", "ev/report.json", "--out", "rep"],
    );
}

#[test]
fn walkthrough_produces_eight_row_table() {
    let tmp = tempfile::tempdir().unwrap();
    walkthrough(tmp.path());
    let table = fs::read_to_string(tmp.path().join("rep/table.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "Monitors,SG,RH,AC");
    assert_eq!(lines.len(), 9);
    assert_eq!(lines[1].split(',').next(), Some("No monitor"));
    assert_eq!(lines[8].split(',').next(), Some("ODD+OOD+OMS"));
    let attribution = fs::read_to_string(tmp.path().join("rep/attribution.csv")).unwrap();
    assert_eq!(attribution.lines().count(), 4);
    let results = fs::read_to_string(tmp.path().join("ev/results.jsonl")).unwrap();
    assert_eq!(results.lines().count(), 80);
}

#[test]
fn missing_trace_ids_are_listed() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    walkthrough(dir);
    let trace = fs::read_to_string(dir.join("d/test/trace.jsonl")).unwrap();
    let kept: Vec<&str> = trace
        .lines()
        .filter(|l| !l.contains("\"test-000003\"") && !l.contains("\"test-000010\""))
        .collect();
    fs::write(dir.join("short.jsonl"), kept.join("\n") + "\n").unwrap();
    let out = safemon(
        dir,
        &[
            "evaluate",
            "--manifest",
            "d/test/manifest.jsonl",
            "--trace",
            "short.jsonl",
            "--ood",
            "ood.txt",
            "--oms",
            "oms.txt",
            "--tau-conf",
            "0.5",
            "--out",
            "bad",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1);
    let diag: serde_json::Value = serde_json::from_str(&stderr).unwrap();
    let message = diag["message"].as_str().unwrap();
    assert!(
        message.contains("test-000003") && message.contains("test-000010"),
        "{message}"
    );
    assert!(!dir.join("bad/report.json").exists());
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = safemon(tmp.path(), &["fit-ood", "--out", "x.txt"]);
    assert_eq!(out.status.code(), Some(1));
    let out = safemon(tmp.path(), &["evaluate", "--tau-conf", "often"]);
    assert_eq!(out.status.code(), Some(1));
    let out = safemon(
        tmp.path(),
        &[
            "corrupt",
            "--manifest",
            "m",
            "--kind",
            "rain",
            "--severity",
            "1",
            "--out",
            "o",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_file_supplies_options() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(
        dir.join("run.toml"),
        "seed = 9\n[synth_gen]\nout = \"d\"\nn_train = 30\nn_val = 10\nn_test = 10\np_fn = 0.0\np_fp = 0.0\n",
    )
    .unwrap();
    let summary = ok(
        dir,
        &["--config", "run.toml", "synth", "gen", "--n-test", "12"],
    );
    assert_eq!(summary["seed"], 9);
    assert_eq!(summary["counts"]["test"], 12);
    assert_eq!(summary["counts"]["train"], 30);
    let provenance: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("d/synth.json")).unwrap()).unwrap();
    assert_eq!(provenance["stub"]["p_fn"], 0.0);
    assert_eq!(provenance["seed"], 9);
}

#[test]
fn corrupt_keeps_metadata_and_input() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(
        dir,
        &[
            "synth",
            "gen",
            "--out",
            "d",
            "--n-train",
            "10",
            "--n-val",
            "10",
            "--n-test",
            "10",
        ],
    );
    let before = fs::read(dir.join("d/test/manifest.jsonl")).unwrap();
    ok(
        dir,
        &[
            "corrupt",
            "--manifest",
            "d/test/manifest.jsonl",
            "--kind",
            "gaussian-noise",
            "--severity",
            "3",
            "--out",
            "noisy",
        ],
    );
    assert_eq!(fs::read(dir.join("d/test/manifest.jsonl")).unwrap(), before);

    let clean = safemon::trace_io::load_manifest(&dir.join("d/test/manifest.jsonl")).unwrap();
    let noisy = safemon::trace_io::load_manifest(&dir.join("noisy/manifest.jsonl")).unwrap();
    for (a, b) in clean.entries.iter().zip(&noisy.entries) {
        assert_eq!(a.metadata, b.metadata);
        assert_eq!(a.ground_truth, b.ground_truth);
        assert_eq!(
            b.corruption.map(|c| c.to_string()).as_deref(),
            Some("gaussian_noise@3")
        );
    }
    let again = safemon(
        dir,
        &[
            "corrupt",
            "--manifest",
            "noisy/manifest.jsonl",
            "--kind",
            "fog",
            "--severity",
            "1",
            "--out",
            "twice",
        ],
    );
    assert_eq!(again.status.code(), Some(2));
    let inplace = safemon(
        dir,
        &[
            "corrupt",
            "--manifest",
            "d/test/manifest.jsonl",
            "--kind",
            "fog",
            "--severity",
            "1",
            "--out",
            "d/test",
        ],
    );
    assert_eq!(inplace.status.code(), Some(1));
    assert_eq!(fs::read(dir.join("d/test/manifest.jsonl")).unwrap(), before);
}

#[test]
fn report_merges_datasets() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    walkthrough(dir);
    ok(
        dir,
        &[
            "corrupt",
            "--manifest",
            "d/test/manifest.jsonl",
            "--kind",
            "brightness",
            "--severity",
            "2",
            "--out",
            "b2",
        ],
    );
    ok(
        dir,
        &[
            "synth",
            "detect",
            "--manifest",
            "b2/manifest.jsonl",
            "--out",
            "b2/trace.jsonl",
        ],
    );
    ok(
        dir,
        &[
            "evaluate",
            "--manifest",
            "b2/manifest.jsonl",
            "--trace",
            "b2/trace.jsonl",
            "--ood",
            "ood.txt",
            "--oms",
            "oms.txt",
            "--tau-conf",
            "0.5",
            "--mode",
            "combinations",
            "--out",
            "evb",
        ],
    );
    ok(
        dir,
        &[
            "report",
            "--input",
            "ev/report.json",
            "evb/report.json",
            "--out",
            "both",
        ],
    );
    let table = fs::read_to_string(dir.join("both/table.csv")).unwrap();
    assert!(table.starts_with("Dataset,Monitors,SG,RH,AC\n"));
    assert_eq!(table.lines().count(), 17);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("evb/report.json")).unwrap()).unwrap();
    assert!(report.get("serial").is_none() && report.get("attribution").is_none());
}
