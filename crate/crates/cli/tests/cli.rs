use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn wrangle(args: &[&std::ffi::OsStr]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wrangle")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let path = entry.unwrap().path();
        let target = to.join(path.file_name().unwrap());
        if path.is_dir() {
            copy_dir(&path, &target);
        } else {
            std::fs::copy(&path, &target).unwrap();
        }
    }
}

#[test]
fn check_reports_diagnostics_and_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"required_tables":["t.csv"],"program":[{"function":"drop","table":"t.csv","axis":1}]}"#).unwrap();
    let out = wrangle(&["check".as_ref(), bad.as_os_str()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).starts_with("step 0: BadArity"), "{}", stdout(&out));
}

#[test]
fn check_passes_a_clean_program() {
    let program = fixtures().join("scenario/program.json");
    let tables = fixtures().join("scenario/tables");
    let out = wrangle(&["check".as_ref(), program.as_os_str(), "--tables".as_ref(), tables.as_os_str()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "ok\n");
}

#[test]
fn check_flags_unknown_functions_at_parse_time() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"required_tables":[],"program":[{"function":"pivot"}]}"#).unwrap();
    let out = wrangle(&["check".as_ref(), bad.as_os_str()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).starts_with("step 0: UnknownFunction"));
}

#[test]
fn explain_numbers_the_steps() {
    let out = wrangle(&["explain".as_ref(), fixtures().join("scenario/program.json").as_os_str()]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "1. Drop the column Gender in the given table(s)");
    assert_eq!(lines[4], "5. Merge the given table(s) with the table Table2.csv based on the values in the column StudentID");
}

#[test]
fn exec_writes_outputs_and_matches_golden() {
    let out_dir = tempfile::tempdir().unwrap();
    let out = wrangle(&[
        "exec".as_ref(),
        fixtures().join("scenario").as_os_str(),
        "--out-dir".as_ref(),
        out_dir.path().as_os_str(),
    ]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).ends_with("match merged\n"));
    let golden = std::fs::read_to_string(fixtures().join("scenario/golden.csv")).unwrap();
    assert_eq!(std::fs::read_to_string(out_dir.path().join("merged_v3.csv")).unwrap(), golden);
    let graph: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.path().join("provenance.json")).unwrap()).unwrap();
    assert!(graph["nodes"].as_array().unwrap().iter().any(|n| n == "Table1_v0.csv"));
}

#[test]
fn exec_exits_one_on_golden_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&fixtures().join("tasks/task4_integration"), dir.path());
    std::fs::write(dir.path().join("golden/merged_count.csv"), "count\n3\n").unwrap();
    let out = wrangle(&["exec".as_ref(), dir.path().as_os_str()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("MISMATCH merged_count: line 2"), "{}", stdout(&out));
}

#[test]
fn exec_reports_scalars() {
    let out = wrangle(&["exec".as_ref(), fixtures().join("tasks/task7_statistics").as_os_str()]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("p_value = "));
    assert!(text.contains("match p_value"));
}

#[test]
fn replay_is_byte_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let run = |dir: &Path| {
        wrangle(&["replay".as_ref(), fixtures().join("scenario").as_os_str(), "--out-dir".as_ref(), dir.as_os_str()])
    };
    let (first, second) = (run(a.path()), run(b.path()));
    assert!(first.status.success(), "{}", stdout(&first));
    assert_eq!(first.stdout, second.stdout);
    for name in ["merged_v3.csv", "provenance.json"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap());
    }
}

#[test]
fn replay_without_transcript_fails() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.json");
    let out = wrangle(&[
        "replay".as_ref(),
        fixtures().join("scenario").as_os_str(),
        "--mock-transcript".as_ref(),
        missing.as_os_str(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("none.json"));
}

#[test]
fn replay_runs_out_of_replies_when_the_script_diverges() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&fixtures().join("scenario"), dir.path());
    std::fs::write(dir.path().join("transcript.json"), "[]").unwrap();
    let out = wrangle(&["replay".as_ref(), dir.path().as_os_str()]);
    assert_eq!(out.status.code(), Some(2));
}
