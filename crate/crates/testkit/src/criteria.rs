//! Acceptance checks shared by the acceptance target. Each check returns a
//! [`Verdict`] instead of panicking so a runner can report all of them.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};
use wrangle_core::demo::column_letter;
use wrangle_core::interp::stats::welch_t_test;
use wrangle_core::table::emit_csv;
use wrangle_core::{
    check_program, explain_call, parse_program, run_program, Agent, AgentError, CellValue, DemoEvent, DemoKind,
    DslFunction, DslProgram, MockLlm, PlanStep, ProgramError, ProvenanceGraph, Table, TableDiff, VersionedStore,
};

use crate::gen;

#[derive(Debug, Clone)]
pub struct Verdict {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    fn from(name: &'static str, r: Result<String, String>) -> Verdict {
        match r {
            Ok(detail) => Verdict { name, passed: true, detail },
            Err(detail) => Verdict { name, passed: false, detail },
        }
    }

    pub fn line(&self) -> String {
        format!("[{}] {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Every translation rule renders byte-exactly.
pub fn translation(fixtures: &Path) -> Verdict {
    Verdict::from("translation", (|| {
        let rules = read_json(&fixtures.join("translation_rules.json"))?;
        let rules = rules.as_array().ok_or("rules must be a list")?;
        let mut exact = 0;
        let mut first_miss = None;
        for rule in rules {
            let doc = json!({"required_tables": [], "program": [rule["call"]]});
            let program = parse_program(&doc.to_string()).map_err(|e| e.to_string())?;
            let got = explain_call(&program.calls[0]);
            if Some(got.as_str()) == rule["expected"].as_str() {
                exact += 1;
            } else if first_miss.is_none() {
                first_miss = Some(got);
            }
        }
        let summary = format!("{exact}/{} exact", rules.len());
        match first_miss {
            None if rules.len() == 22 => Ok(summary),
            None => Err(format!("{summary}, expected 22 rules")),
            Some(m) => Err(format!("{summary}; first mismatch {m:?}")),
        }
    })())
}

/// `cases` random cases per function against the naive reference.
pub fn oracle(cases: usize, seed: u64, budget_secs: f64) -> Verdict {
    let start = Instant::now();
    let mut failures = Vec::new();
    for f in DslFunction::ALL {
        let report = crate::oracle_suite(f, cases, seed);
        if let Some(first) = report.failures.first() {
            failures.push(format!("{f}: {} failures, first: {first}", report.failures.len()));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let n = DslFunction::ALL.len();
    let r = if !failures.is_empty() {
        Err(failures.join("; "))
    } else if secs >= budget_secs {
        Err(format!("{n}x{cases} agree but took {secs:.1}s (budget {budget_secs}s)"))
    } else {
        Ok(format!("{n}x{cases} cases agree in {secs:.1}s"))
    };
    Verdict::from("oracle suite", r)
}

/// Frozen high-precision Welch values plus the degenerate rules.
pub fn statistics(fixtures: &Path) -> Verdict {
    Verdict::from("statistics", (|| {
        let cases = read_json(&fixtures.join("stats/welch.json"))?;
        let cases = cases.as_array().ok_or("welch fixture must be a list")?;
        let floats = |v: &Value| -> Vec<f64> { v.as_array().into_iter().flatten().filter_map(Value::as_f64).collect() };
        let (mut worst_t, mut worst_p) = (0f64, 0f64);
        for (i, c) in cases.iter().enumerate() {
            let r = welch_t_test(&floats(&c["a"]), &floats(&c["b"])).map_err(|e| format!("case {i}: {e}"))?;
            let t = c["statistic"].as_f64().ok_or("statistic")?;
            let p = c["p_value"].as_f64().ok_or("p_value")?;
            worst_t = worst_t.max((r.statistic - t).abs() / t.abs().max(1.0));
            worst_p = worst_p.max((r.p_value - p).abs());
            if !(0.0..=1.0).contains(&r.p_value) {
                return Err(format!("case {i}: p {} outside [0, 1]", r.p_value));
            }
        }
        if worst_t > 1e-9 || worst_p > 1e-7 {
            return Err(format!("worst t error {worst_t:e}, worst p error {worst_p:e}"));
        }
        let same = welch_t_test(&[2.0, 2.0, 2.0], &[2.0, 2.0]).map_err(|e| e.to_string())?;
        let apart = welch_t_test(&[1.0, 1.0], &[4.0, 4.0]).map_err(|e| e.to_string())?;
        if (same.statistic, same.p_value) != (0.0, 1.0) || (apart.statistic, apart.p_value) != (-1e308, 0.0) {
            return Err(format!("degenerate results {same:?} and {apart:?}"));
        }
        Ok(format!("{} samples, worst t error {worst_t:.1e}, worst p error {worst_p:.1e}, degenerate rules hold", cases.len()))
    })())
}

fn diagnose(program: &Value, store: &VersionedStore) -> Result<Vec<(usize, String)>, String> {
    let doc = json!({"required_tables": [], "program": program});
    let ds = match parse_program(&doc.to_string()) {
        Ok(p) => check_program(&p, store),
        Err(ProgramError::Diagnostics(ds)) => ds,
        Err(e) => return Err(e.to_string()),
    };
    let mut out: Vec<(usize, String)> = ds.iter().map(|d| (d.call_index, d.code.to_string())).collect();
    out.sort();
    Ok(out)
}

fn corpus_store() -> VersionedStore {
    let mut store = VersionedStore::new();
    for name in ["Table1", "Table2"] {
        let t = Table::new(format!("{name}.csv"), vec!["StudentID".into()], vec![]).expect("valid table");
        store.store_version(name, t);
    }
    store
}

/// Malformed corpus codes, one-round repair and the repair budget.
pub fn checker_and_repair(fixtures: &Path) -> Verdict {
    Verdict::from("checker and repair", (|| {
        let corpus = read_json(&fixtures.join("malformed/corpus.json"))?;
        let corpus = corpus.as_array().ok_or("corpus must be a list")?;
        let store = corpus_store();
        for entry in corpus {
            let mut want: Vec<(usize, String)> = entry["expect"]
                .as_array()
                .into_iter()
                .flatten()
                .map(|p| (p[0].as_u64().unwrap_or(0) as usize, p[1].as_str().unwrap_or("").to_string()))
                .collect();
            want.sort();
            let got = diagnose(&entry["program"], &store)?;
            if got != want {
                return Err(format!("{}: got {got:?}, want {want:?}", entry["name"]));
            }
        }

        let plan = [PlanStep { function: DslFunction::Drop, description: "drop a column".into() }];
        let broken = json!({"required_tables": ["Table1.csv"], "program": [{"function": "drop", "table": "Table1.csv", "axis": 1}]});
        let fixed = json!({"required_tables": ["Table1.csv"], "program": [{"function": "drop", "table": "Table1.csv", "label": "StudentID", "axis": 1}]});
        let mock = MockLlm::from_json(
            &json!([{"stage": "Generate", "response": broken}, {"stage": "GenerateWithError", "response": fixed}]).to_string(),
        )
        .map_err(|e| e.to_string())?;
        let synthesis = Agent::new(Arc::new(mock)).with_max_repairs(3).synthesize(&plan, "", &store).map_err(|e| e.to_string())?;
        if synthesis.repairs != 1 {
            return Err(format!("fixing mock took {} repairs", synthesis.repairs));
        }

        let never: Vec<Value> = std::iter::once(json!({"stage": "Generate", "response": broken}))
            .chain((0..3).map(|_| json!({"stage": "GenerateWithError", "response": broken})))
            .collect();
        let mock = Arc::new(MockLlm::from_json(&Value::Array(never).to_string()).map_err(|e| e.to_string())?);
        match Agent::new(mock.clone()).with_max_repairs(3).synthesize(&plan, "", &store) {
            Err(AgentError::SynthesisFailed { repairs: 3, .. }) if mock.remaining() == 0 => {}
            other => return Err(format!("never-fixing mock ended with {other:?}, {} replies left", mock.remaining())),
        }
        Ok(format!("{} malformed programs coded, 1 repair to converge, SynthesisFailed after 3", corpus.len()))
    })())
}

fn acyclic(graph: &ProvenanceGraph) -> bool {
    let mut indegree: BTreeMap<&str, usize> = graph.nodes().map(|n| (n, 0)).collect();
    for e in graph.edges() {
        match indegree.get_mut(e.to.as_str()) {
            Some(d) => *d += 1,
            None => return false,
        }
        if !indegree.contains_key(e.from.as_str()) {
            return false;
        }
    }
    let mut ready: Vec<&str> = indegree.iter().filter(|(_, d)| **d == 0).map(|(n, _)| *n).collect();
    let mut seen = 0;
    while let Some(n) = ready.pop() {
        seen += 1;
        for e in graph.edges().filter(|e| e.from == n) {
            let d = indegree.get_mut(e.to.as_str()).expect("checked above");
            *d -= 1;
            if *d == 0 {
                ready.push(e.to.as_str());
            }
        }
    }
    seen == indegree.len()
}

/// Merge in-degree, acyclicity over random runs, and divide fan-out.
pub fn provenance(seed: u64, runs: usize) -> Verdict {
    Verdict::from("provenance", (|| {
        let mut store = VersionedStore::new();
        let a = Table::from_strs("A.csv", &["id", "x"], &[&["1", "a"], &["2", "b"]]).map_err(|e| e.to_string())?;
        let b = Table::from_strs("B.csv", &["id", "y"], &[&["1", "c"]]).map_err(|e| e.to_string())?;
        store.store_version("A", a);
        store.store_version("B", b);
        let merge = parse_program(
            r#"{"required_tables":["A.csv","B.csv"],"program":[{"function":"merge","table_a":"A.csv","table_b":"B.csv","how":"inner","on":"id"}]}"#,
        )
        .map_err(|e| e.to_string())?;
        let (effects, _) = run_program(&merge, &mut store).map_err(|e| e.to_string())?;
        let mut graph = ProvenanceGraph::new();
        graph.record_effects(&effects);
        let into_c = graph.edges().filter(|e| e.to == "merged_v0.csv").count();
        if into_c != 2 {
            return Err(format!("merge output has in-degree {into_c}"));
        }

        let mut rng = StdRng::seed_from_u64(seed);
        let mut store = VersionedStore::new();
        let mut graph = ProvenanceGraph::new();
        for _ in 0..runs {
            let f = *DslFunction::ALL.choose(&mut rng).expect("non-empty");
            let case = gen::case(&mut rng, f);
            for t in &case.tables {
                let r = store.store_version(t.stem(), t.clone());
                graph.add_node(r.rendered());
            }
            let program = DslProgram::new(vec![], case.dsl_calls());
            match run_program(&program, &mut store) {
                Ok((effects, _)) => graph.record_effects(&effects),
                Err(e) => graph.record_effects(&e.completed),
            }
        }
        if !acyclic(&graph) {
            return Err("random runs produced a cycle".into());
        }

        for k in 1..=6usize {
            let rows: Vec<Vec<String>> = (0..2 * k).map(|i| vec![format!("g{}", i % k), i.to_string()]).collect();
            let rows: Vec<Vec<&str>> = rows.iter().map(|r| r.iter().map(String::as_str).collect()).collect();
            let rows: Vec<&[&str]> = rows.iter().map(Vec::as_slice).collect();
            let mut store = VersionedStore::new();
            store.store_version("t", Table::from_strs("t.csv", &["g", "v"], &rows).map_err(|e| e.to_string())?);
            let divide = parse_program(
                r#"{"required_tables":["t.csv"],"program":[{"function":"divide","table":"t.csv","by":"g","axis":1}]}"#,
            )
            .map_err(|e| e.to_string())?;
            let (effects, _) = run_program(&divide, &mut store).map_err(|e| e.to_string())?;
            let mut graph = ProvenanceGraph::new();
            graph.record_effects(&effects);
            let out = graph.edges().filter(|e| e.from == "t_v0.csv").count();
            if out != k {
                return Err(format!("divide into {k} groups gave {out} edges"));
            }
        }
        Ok(format!("merge in-degree 2, {runs} random runs acyclic, divide k=1..6 gives k edges"))
    })())
}

fn blank_table(rows: usize, cols: usize) -> Table {
    let columns = (1..=cols).map(|i| format!("c{i}")).collect();
    Table::new("t.csv", columns, vec![vec![CellValue::Int(0); cols]; rows]).expect("valid table")
}

fn apply_writes(events: &[DemoEvent], rows: usize, cols: usize) -> Vec<Vec<CellValue>> {
    let mut grid = vec![vec![CellValue::Int(0); cols]; rows];
    for e in events {
        for (r, c, v) in e.cell_writes() {
            grid[r - 1][c - 1] = v;
        }
    }
    grid
}

/// Column collapse for n = 2..10, idempotence and replay equivalence.
pub fn demo_merging(seed: u64, sequences: usize) -> Verdict {
    Verdict::from("demonstration merging", (|| {
        for n in 2..=10usize {
            let mut diff = TableDiff::new();
            let table = blank_table(n, 3);
            diff.register_table(&table);
            for r in 1..=n {
                let e = DemoEvent::edit("t.csv", r, "B", CellValue::Int(0), CellValue::Int(r as i64));
                diff.log_event(e).map_err(|e| e.to_string())?;
            }
            let kinds: Vec<DemoKind> = diff.events().iter().map(|e| e.kind).collect();
            if kinds != [DemoKind::EditColumn] {
                return Err(format!("n={n}: events {kinds:?}"));
            }
        }

        let mut rng = StdRng::seed_from_u64(seed);
        for s in 0..sequences {
            let (rows, cols) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
            let table = blank_table(rows, cols);
            let mut raw = Vec::new();
            let mut diff = TableDiff::new();
            diff.register_table(&table);
            for _ in 0..rng.gen_range(1..=12) {
                let mut batch = Vec::new();
                match rng.gen_range(0..4) {
                    0 => {
                        let c = rng.gen_range(1..=cols);
                        let mut order: Vec<usize> = (1..=rows).collect();
                        order.shuffle(&mut rng);
                        batch.extend(order.into_iter().map(|r| (r, c)));
                    }
                    1 => {
                        let r = rng.gen_range(1..=rows);
                        let mut order: Vec<usize> = (1..=cols).collect();
                        order.shuffle(&mut rng);
                        batch.extend(order.into_iter().map(|c| (r, c)));
                    }
                    2 => batch.push((rng.gen_range(1..=rows), rng.gen_range(1..=cols))),
                    _ => {
                        let e = DemoEvent::copy_paste("t.csv", "A1", "B2");
                        raw.push(e.clone());
                        diff.log_event(e).map_err(|e| e.to_string())?;
                    }
                }
                for (r, c) in batch {
                    let new = CellValue::Int(rng.gen_range(1..100));
                    let e = DemoEvent::edit("t.csv", r, &column_letter(c), CellValue::Int(0), new);
                    raw.push(e.clone());
                    diff.log_event(e).map_err(|e| e.to_string())?;
                }
            }
            if apply_writes(&raw, rows, cols) != apply_writes(diff.events(), rows, cols) {
                return Err(format!("sequence {s}: merged events replay to a different grid"));
            }
            let once = diff.events().to_vec();
            diff.merge_edits(&table);
            if diff.events() != once.as_slice() {
                return Err(format!("sequence {s}: merging again changed the log"));
            }
        }
        Ok(format!("n=2..10 collapse to one EditColumn, {sequences} random sequences replay-equivalent and idempotent"))
    })())
}

/// Version-0 tables re-emit identical bytes after random runs.
pub fn immutability(seed: u64, per_function: usize) -> Verdict {
    Verdict::from("immutability", (|| {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut checked = 0;
        for f in DslFunction::ALL {
            for i in 0..per_function {
                let case = gen::case(&mut rng, f);
                let mut store = VersionedStore::new();
                let mut originals = Vec::new();
                for t in &case.tables {
                    let r = store.store_version(t.stem(), t.clone());
                    originals.push((r.rendered(), emit_csv(t)));
                }
                let program = DslProgram::new(vec![], case.dsl_calls());
                let _ = run_program(&program, &mut store);
                for (name, bytes) in &originals {
                    let after = store.fetch(name).map(emit_csv);
                    if after.as_ref() != Some(bytes) {
                        return Err(format!("{f} case {i}: {name} changed"));
                    }
                    checked += 1;
                }
            }
        }
        Ok(format!("{checked} v0 tables unchanged across {} functions", DslFunction::ALL.len()))
    })())
}
