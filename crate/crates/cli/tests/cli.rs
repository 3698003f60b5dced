use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures/mini")
        .join(name)
}

fn tddgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tddgen"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn replay_run(out: &Path, criterion: &str) -> Output {
    tddgen(&[
        "run",
        "--dataset",
        s(&fixture("mini.jsonl")),
        "--backend",
        "replay",
        "--store",
        s(&fixture("replay.jsonl")),
        "--criterion",
        criterion,
        "--workers",
        "3",
        "--out",
        s(out),
    ])
}

#[test]
fn replay_run_writes_transcripts_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = replay_run(dir.path(), "private");
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("mini (#6), private tests"), "{stdout}");
    assert_eq!(
        std::fs::read_dir(dir.path().join("transcripts"))
            .unwrap()
            .count(),
        6
    );
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().last().unwrap(), "all,,,6,0,1,1,4");
}

#[test]
fn parallel_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(replay_run(a.path(), "public").status.success());
    assert!(replay_run(b.path(), "public").status.success());
    for entry in std::fs::read_dir(a.path().join("transcripts")).unwrap() {
        let path = entry.unwrap().path();
        let other = b.path().join("transcripts").join(path.file_name().unwrap());
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(other).unwrap(),
            "{}",
            path.display()
        );
    }
    assert_eq!(
        std::fs::read(a.path().join("report.json")).unwrap(),
        std::fs::read(b.path().join("report.json")).unwrap()
    );
}

#[test]
fn report_regrades_saved_transcripts() {
    let dir = tempfile::tempdir().unwrap();
    assert!(replay_run(dir.path(), "public").status.success());
    let transcripts = dir.path().join("transcripts");
    let dataset = fixture("mini.jsonl");
    let out = tddgen(&[
        "report",
        "--transcripts",
        s(&transcripts),
        "--dataset",
        s(&dataset),
        "--format",
        "csv",
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .ends_with("all,,,6,1,1,1,3\n"));

    let out = tddgen(&[
        "report",
        "--transcripts",
        s(&transcripts),
        "--dataset",
        s(&dataset),
        "--criterion",
        "private",
        "--format",
        "json",
    ]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["downgraded"], 1);
}

#[test]
fn validate_accepts_fixture_and_rejects_garbage() {
    let out = tddgen(&["validate", "--dataset", s(&fixture("mini.jsonl"))]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("6 problems"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"id\": \"x\", \"title\": \"t\"}\n").unwrap();
    let out = tddgen(&["validate", "--dataset", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("line 1"));
}

#[test]
fn missing_store_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = tddgen(&[
        "run",
        "--dataset",
        s(&fixture("mini.jsonl")),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn replay_miss_is_an_infrastructure_failure() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    let out = tddgen(&[
        "run",
        "--dataset",
        s(&fixture("mini.jsonl")),
        "--store",
        s(&empty),
        "--out",
        s(&dir.path().join("out")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!dir.path().join("out/report.json").exists());
}

#[test]
fn seed_changes_digests() {
    let dir = tempfile::tempdir().unwrap();
    let out = tddgen(&[
        "run",
        "--dataset",
        s(&fixture("mini.jsonl")),
        "--store",
        s(&fixture("replay.jsonl")),
        "--seed",
        "7",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "a different seed must miss the store"
    );
}
