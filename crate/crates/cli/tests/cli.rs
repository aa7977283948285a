use std::path::Path;
use std::process::Command;

use coevo::llm::{write_transcript, TranscriptEntry};
use coevo::runner::SEED_PROGRAM;

fn coevo(args: &[&str], dir: &Path) -> (bool, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_coevo")).args(args).current_dir(dir).output().unwrap();
    (out.status.success(), String::from_utf8_lossy(&out.stdout).into_owned(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn setup(dir: &Path) {
    let instance = serde_json::json!({
        "name": "fs",
        "problem": "flowshop",
        "data": {"processing_times": [[1, 2], [2, 1], [3, 3], [1, 4]]},
        "reference": 11,
        "sense": "min"
    });
    std::fs::write(dir.join("fs.json"), instance.to_string()).unwrap();
    let entries: Vec<TranscriptEntry> = (1..=6)
        .map(|a| TranscriptEntry {
            tag: Some(format!("run0/c{a}/try1")),
            prompt: None,
            response: format!("<code>\n{}\n</code>", SEED_PROGRAM.replace("max_iter = 200", &format!("max_iter = {}", 10 * a))),
            timestamp: None,
        })
        .collect();
    write_transcript(&dir.join("t.jsonl"), &entries).unwrap();
    std::fs::write(
        dir.join("run.toml"),
        "task = \"flowshop\"\ntrain = [\"fs.json\"]\n\n[evolution]\nmax_candidates = 6\nindependent_runs = 1\n\n[llm]\ntranscript = \"t.jsonl\"\n",
    )
    .unwrap();
}

#[test]
fn evolve_replay_report() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    let (ok, stdout, stderr) = coevo(&["evolve", "run.toml", "--out", "out", "--record-transcript", "rec.jsonl"], dir.path());
    assert!(ok, "{stderr}");
    assert!(stdout.contains("run 0: best"), "{stdout}");
    assert!(dir.path().join("rec.jsonl").exists());

    let (ok, stdout, stderr) = coevo(&["replay", "out/run-0/ledger.jsonl"], dir.path());
    assert!(ok, "{stderr}");
    assert!(stdout.contains("6 attempts"), "{stdout}");
    assert!(!stdout.contains("truncated"));

    let (ok, stdout, stderr) = coevo(&["report", "out/run-0/ledger.jsonl"], dir.path());
    assert!(ok, "{stderr}");
    assert!(stdout.starts_with("candidate_index,candidate_id,score,best_so_far"));
    assert_eq!(stdout.lines().count(), 1 + 7);
}

#[test]
fn evaluate_prints_ratio() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    std::fs::write(dir.path().join("sol.json"), "[0, 3, 2, 1]").unwrap();
    let (ok, stdout, stderr) = coevo(&["evaluate", "fs.json", "sol.json"], dir.path());
    assert!(ok, "{stderr}");
    assert!(stdout.contains("objective 11") && stdout.contains("ratio 1.000000"), "{stdout}");
    std::fs::write(dir.path().join("bad.json"), "[0, 0, 2, 1]").unwrap();
    let (ok, stdout, _) = coevo(&["evaluate", "fs.json", "bad.json"], dir.path());
    assert!(ok);
    assert!(stdout.contains("infeasible"), "{stdout}");
}

#[test]
fn bad_config_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "task = \"x\"\ntrain = []\napi_key = \"secret\"\n").unwrap();
    let (ok, _, stderr) = coevo(&["evolve", "run.toml"], dir.path());
    assert!(!ok);
    assert!(stderr.contains("unknown field"), "{stderr}");
}
