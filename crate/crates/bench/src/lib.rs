//! Deterministic workloads shared by the benchmarks.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use wrangle_core::{parse_program, CellValue, DslProgram, Table, VersionedStore};

const NAMES: [&str; 8] = ["Ada", "Ben", "Cleo", "Dev", "Eli", "Fay", "Gus", "Hal"];
const LEVELS: [&str; 3] = ["BS", "MS", "PhD"];

/// `rows` records of `id, name, level, score, age` with about 10% missing
/// scores.
pub fn people(rows: usize, seed: u64) -> Table {
    let mut rng = StdRng::seed_from_u64(seed);
    let columns = ["id", "name", "level", "score", "age"].map(String::from).to_vec();
    let data = (0..rows)
        .map(|i| {
            let score = if rng.gen_bool(0.1) { CellValue::Null } else { CellValue::Float(rng.gen_range(0.0..100.0)) };
            vec![
                CellValue::Text(format!("{:06}", i)),
                CellValue::Text(NAMES[rng.gen_range(0..NAMES.len())].to_string()),
                CellValue::Text(LEVELS[rng.gen_range(0..LEVELS.len())].to_string()),
                score,
                CellValue::Int(rng.gen_range(18..70)),
            ]
        })
        .collect();
    Table::new("people.csv", columns, data).expect("rectangular")
}

/// `rows` records of `id, grade` sharing the id space of [`people`].
pub fn grades(rows: usize, seed: u64) -> Table {
    let mut rng = StdRng::seed_from_u64(seed);
    let columns = ["id", "grade"].map(String::from).to_vec();
    let data = (0..rows)
        .map(|_| vec![CellValue::Text(format!("{:06}", rng.gen_range(0..rows))), CellValue::Int(rng.gen_range(1..=5))])
        .collect();
    Table::new("grades.csv", columns, data).expect("rectangular")
}

pub fn store(rows: usize) -> VersionedStore {
    let mut store = VersionedStore::new();
    store.store_version("people", people(rows, 1));
    store.store_version("grades", grades(rows, 2));
    store
}

/// A cleaning pipeline touching most operation families.
pub fn pipeline() -> DslProgram {
    parse_program(
        r#"{"required_tables":["people.csv","grades.csv"],"program":[
            {"function":"merge","table_a":"people.csv","table_b":"grades.csv","how":"left","on":"id"},
            {"function":"drop","table":"merged.csv","label":null,"axis":0,"condition":"missing_ratio > 0.3"},
            {"function":"fill","table":"merged.csv","method":"mean","labels":["score"],"axis":1},
            {"function":"concatenate","table":"merged.csv","label_a":"name","label_b":"level","glue":" / ","new_label":"tag","axis":1},
            {"function":"rearrange","table":"merged.csv","by_values":"name","axis":1},
            {"function":"divide","table":"merged.csv","by":"level","axis":1}
        ]}"#,
    )
    .expect("valid pipeline")
}

pub fn samples(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = StdRng::seed_from_u64(seed);
    let a = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
    let b = (0..n).map(|_| rng.gen_range(0.5..10.5)).collect();
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use wrangle_core::{check_program, run_program};

    #[test]
    fn pipeline_runs_on_the_workload() {
        let mut s = store(50);
        assert!(check_program(&pipeline(), &s).is_empty());
        run_program(&pipeline(), &mut s).unwrap();
        assert!(s.bases().any(|b| b.starts_with("merged_")));
    }
}
