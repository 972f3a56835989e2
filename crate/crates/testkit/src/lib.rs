//! Test support: random case generation and naive reference semantics used
//! to cross-check the interpreter.

pub mod criteria;
pub mod gen;
pub mod oracle;

use rand::rngs::StdRng;
use rand::SeedableRng;
use wrangle_core::{run_program, DslFunction, DslProgram, VersionedStore};

use gen::Case;
use oracle::Grid;

/// Runs `case` through the interpreter and the reference and describes the
/// first disagreement. Both sides failing counts as agreement.
pub fn compare(case: &Case) -> Result<(), String> {
    let mut store = VersionedStore::new();
    for t in &case.tables {
        store.store_version(t.stem(), t.clone());
    }
    let names = case.tables.iter().map(|t| t.name().to_string()).collect();
    let program = DslProgram::new(names, case.dsl_calls());
    let actual = run_program(&program, &mut store);
    let expected = oracle::run(&mut oracle::Store::new(&case.tables), &case.calls);
    let (got, want) = match (actual, expected) {
        (Err(_), Err(_)) => return Ok(()),
        (Ok(_), Err(e)) => return Err(format!("interpreter succeeded, reference failed: {}", e.0)),
        (Err(e), Ok(_)) => return Err(format!("reference succeeded, interpreter failed: {e}")),
        (Ok((effects, env)), Ok(exp)) => {
            if effects.len() != exp.calls.len() {
                return Err(format!("{} effects, expected {}", effects.len(), exp.calls.len()));
            }
            for (fx, want) in effects.iter().zip(&exp.calls) {
                if fx.skipped != want.skipped {
                    return Err(format!("step {}: skipped={}, expected {}", fx.call_index, fx.skipped, want.skipped));
                }
                let names: Vec<&String> = want.outputs.iter().map(|(n, _)| n).collect();
                if fx.outputs.iter().collect::<Vec<_>>() != names {
                    return Err(format!("step {}: outputs {:?}, expected {:?}", fx.call_index, fx.outputs, names));
                }
                for (name, grid) in &want.outputs {
                    let got = store.fetch(name).map(Grid::from_table);
                    if got.as_ref() != Some(grid) {
                        return Err(format!("{name}: got {got:?}, expected {grid:?}"));
                    }
                }
            }
            (env, exp.env)
        }
    };
    compare_env(&got, &want)
}

fn compare_env(got: &wrangle_core::ScalarEnv, want: &std::collections::BTreeMap<String, f64>) -> Result<(), String> {
    if got.keys().ne(want.keys()) {
        return Err(format!("scalars {got:?}, expected {want:?}"));
    }
    for (k, w) in want {
        let g = got[k];
        let ok = match k.as_str() {
            "statistic" => (g - w).abs() <= 1e-9 * w.abs().max(1.0),
            "p_value" => (g - w).abs() <= 1e-7,
            _ => g == *w,
        };
        if !ok {
            return Err(format!("{k} = {g}, expected {w}"));
        }
    }
    Ok(())
}

/// Result of running many random cases for one function.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub function: DslFunction,
    pub cases: usize,
    /// Cases where the interpreter produced output (not an error).
    pub succeeded: usize,
    pub failures: Vec<String>,
}

/// Compares `cases` random cases for `function`, seeded deterministically.
pub fn oracle_suite(function: DslFunction, cases: usize, seed: u64) -> SuiteReport {
    let mut rng = StdRng::seed_from_u64(seed ^ (function as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut report = SuiteReport { function, cases, succeeded: 0, failures: Vec::new() };
    for i in 0..cases {
        let case = gen::case(&mut rng, function);
        let mut store = VersionedStore::new();
        for t in &case.tables {
            store.store_version(t.stem(), t.clone());
        }
        let program = DslProgram::new(vec![], case.dsl_calls());
        if run_program(&program, &mut store).is_ok() {
            report.succeeded += 1;
        }
        if let Err(msg) = compare(&case) {
            report.failures.push(format!("case {i}: {msg}\n  calls: {:?}\n  tables: {:?}", case.dsl_calls(), case.tables));
        }
    }
    report
}
