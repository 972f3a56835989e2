use serde_json::{json, Value};
use wrangle_core::{check_program, parse_program, ProgramError, Table, VersionedStore};

fn store() -> VersionedStore {
    let mut store = VersionedStore::new();
    for name in ["Table1", "Table2"] {
        store.store_version(name, Table::new(format!("{name}.csv"), vec!["StudentID".into()], vec![]).unwrap());
    }
    store
}

/// `(step, code)` pairs a program produces, parse diagnostics first.
pub fn diagnose(program: &Value, store: &VersionedStore) -> Vec<(usize, String)> {
    let doc = json!({"required_tables": [], "program": program});
    let ds = match parse_program(&doc.to_string()) {
        Ok(p) => check_program(&p, store),
        Err(ProgramError::Diagnostics(ds)) => ds,
        Err(e) => panic!("{e}"),
    };
    let mut out: Vec<(usize, String)> = ds.iter().map(|d| (d.call_index, d.code.to_string())).collect();
    out.sort();
    out
}

#[test]
fn malformed_corpus_yields_expected_codes() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/malformed/corpus.json");
    let corpus: Vec<Value> = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert!(corpus.len() >= 15);
    let store = store();
    let mut wrong = Vec::new();
    for entry in &corpus {
        let got = diagnose(&entry["program"], &store);
        let mut want: Vec<(usize, String)> = entry["expect"]
            .as_array()
            .unwrap()
            .iter()
            .map(|p| (p[0].as_u64().unwrap() as usize, p[1].as_str().unwrap().to_string()))
            .collect();
        want.sort();
        if got != want {
            wrong.push(format!("{}: got {got:?}, want {want:?}", entry["name"]));
        }
    }
    assert!(wrong.is_empty(), "{}", wrong.join("\n"));
}

#[test]
fn well_formed_programs_are_clean() {
    let program = json!([
        {"function": "merge", "table_a": "Table1.csv", "table_b": "Table2.csv", "how": "inner", "on": "StudentID"},
        {"function": "drop", "table": "merged.csv", "label": null, "axis": 0, "condition": "missing_ratio > 0.5"},
        {"function": "delete_table", "table_name": "Table2.csv"}
    ]);
    assert!(diagnose(&program, &store()).is_empty());
}
