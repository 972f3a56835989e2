use std::path::PathBuf;

use wrangle_core::table::{emit_csv, ingest_csv};
use wrangle_core::{explain_program, parse_program, run_program, VersionedStore};

fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/scenario").join(rel)
}

fn load_store() -> VersionedStore {
    let mut store = VersionedStore::new();
    for name in ["Table1", "Table2"] {
        let bytes = std::fs::read(fixture(&format!("tables/{name}.csv"))).unwrap();
        store.store_version(name, ingest_csv(&bytes, &format!("{name}.csv")).unwrap());
    }
    store
}

#[test]
fn scenario_program_reproduces_golden_table() {
    let mut store = load_store();
    let program = parse_program(&std::fs::read_to_string(fixture("program.json")).unwrap()).unwrap();
    run_program(&program, &mut store).unwrap();
    let merged = store.get(&store.latest_ref("merged").unwrap()).unwrap();
    let golden = std::fs::read_to_string(fixture("golden.csv")).unwrap();
    assert_eq!(String::from_utf8(emit_csv(merged)).unwrap(), golden);
}

#[test]
fn originals_survive_the_run() {
    let mut store = load_store();
    let before: Vec<Vec<u8>> = ["Table1_v0.csv", "Table2_v0.csv"].iter().map(|n| emit_csv(store.fetch(n).unwrap())).collect();
    let program = parse_program(&std::fs::read_to_string(fixture("program.json")).unwrap()).unwrap();
    run_program(&program, &mut store).unwrap();
    for (n, b) in ["Table1_v0.csv", "Table2_v0.csv"].iter().zip(before) {
        assert_eq!(emit_csv(store.fetch(n).unwrap()), b);
    }
}

#[test]
fn scenario_steps_read_as_templates() {
    let program = parse_program(&std::fs::read_to_string(fixture("program.json")).unwrap()).unwrap();
    let texts: Vec<String> = explain_program(&program).into_iter().map(|s| s.text).collect();
    assert_eq!(texts[0], "Drop the column Gender in the given table(s)");
    assert_eq!(texts[2], "Move the column Name to column 1 in the given table(s)");
    assert_eq!(
        texts[4],
        "Merge the given table(s) with the table Table2.csv based on the values in the column StudentID"
    );
    assert_eq!(texts[5], "Drop the rows in the given table(s) if there are more than 50% of missing values.");
}

#[test]
fn scripted_session_replay_matches_golden() {
    use std::sync::Arc;
    use wrangle_core::{Agent, MockLlm, ReplayScript, Session};

    let transcript = std::fs::read_to_string(fixture("transcript.json")).unwrap();
    let mock = Arc::new(MockLlm::from_json(&transcript).unwrap());
    let mut session = Session::new(Arc::new(Agent::new(mock.clone())));
    let script: ReplayScript = serde_json::from_str(&std::fs::read_to_string(fixture("replay.json")).unwrap()).unwrap();
    let log = session.replay(&script, &fixture("")).unwrap();
    assert_eq!(mock.remaining(), 0);
    assert_eq!(log[6]["choices"], serde_json::json!(["Yes", "No", "Other (please specify)"]));
    let golden = std::fs::read_to_string(fixture("golden.csv")).unwrap();
    assert_eq!(String::from_utf8(session.latest_csv("merged").unwrap()).unwrap(), golden);
    let graph = session.provenance();
    let into_merged = graph["edges"].as_array().unwrap().iter().filter(|e| e["to"] == "merged_v0.csv").count();
    assert_eq!(into_merged, 2);
}
