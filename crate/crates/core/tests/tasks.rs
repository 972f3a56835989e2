use std::path::{Path, PathBuf};

use serde_json::Value;
use wrangle_core::table::{emit_csv, ingest_csv};
use wrangle_core::{parse_program, run_program, VersionedStore};

fn task_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/tasks").join(name)
}

fn run_task(name: &str) {
    let dir = task_dir(name);
    let mut store = VersionedStore::new();
    for entry in std::fs::read_dir(dir.join("tables")).unwrap() {
        let path = entry.unwrap().path();
        let file = path.file_name().unwrap().to_str().unwrap().to_string();
        let base = Path::new(&file).file_stem().unwrap().to_str().unwrap().to_string();
        store.store_version(&base, ingest_csv(&std::fs::read(&path).unwrap(), &file).unwrap());
    }
    let program = parse_program(&std::fs::read_to_string(dir.join("program.json")).unwrap()).unwrap();
    let (_, env) = run_program(&program, &mut store).unwrap();
    let fixture: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("fixture.json")).unwrap()).unwrap();
    for (base, rel) in fixture["expect"].as_object().unwrap() {
        let latest = store.latest_ref(base).unwrap_or_else(|| panic!("{name}: no table {base}"));
        let got = String::from_utf8(emit_csv(store.get(&latest).unwrap())).unwrap();
        let want = std::fs::read_to_string(dir.join(rel.as_str().unwrap())).unwrap();
        assert_eq!(got, want, "{name}: {base}");
    }
    if let Some(scalars) = fixture["scalars"].as_object() {
        for (key, want) in scalars {
            let got = env.get(key).copied().unwrap_or_else(|| panic!("{name}: no scalar {key}"));
            let want = want.as_f64().unwrap();
            assert!((got - want).abs() <= 1e-9 * want.abs().max(1e-300), "{name}: {key} {got} vs {want}");
        }
    }
}

#[test]
fn segmentation_by_quarter() {
    run_task("task1_segmentation");
}

#[test]
fn mean_imputation() {
    run_task("task2_imputation");
}

#[test]
fn categorical_split_and_aggregate() {
    run_task("task3_categorical");
}

#[test]
fn merge_then_count() {
    run_task("task4_integration");
}

#[test]
fn exact_key_merge_split_and_sort() {
    run_task("task5_exact_match");
}

#[test]
fn sparse_rows_dropped_then_filled() {
    run_task("task6_cleaning");
}

#[test]
fn significance_gates_the_drop() {
    run_task("task7_statistics");
}
