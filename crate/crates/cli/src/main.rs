//! `wrangle`: run, explain, check and replay wrangling programs headlessly.
//!
//! A fixture directory holds `tables/*.csv`, a `program.json` exchange
//! document and optionally `fixture.json` naming golden outputs. Replay
//! fixtures add `replay.json` (scripted user actions), `transcript.json`
//! (scripted model replies) and `golden.csv`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::Value;
use wrangle_core::table::{emit_csv, ingest_csv};
use wrangle_core::{
    check_program, explain_program, parse_program, render_diagnostics, run_program, Agent, MockLlm, ProgramError,
    ProvenanceGraph, ReplayScript, Session, Table, VersionedStore,
};

#[derive(Parser)]
#[command(name = "wrangle", version, about = "Run, explain, check and replay wrangling programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a fixture's program over its tables and compare against its goldens.
    Exec {
        /// Fixture directory with tables/ and program.json.
        dir: PathBuf,
        /// Program to run instead of <DIR>/program.json.
        #[arg(long)]
        program: Option<PathBuf>,
        /// Write every version the run produced, plus provenance.json, here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Print the numbered natural-language steps of a program.
    Explain { program: PathBuf },
    /// Print syntax diagnostics; exits 1 when there are any.
    Check {
        program: PathBuf,
        /// Check table references against the CSVs in this directory instead
        /// of assuming the program's required tables exist.
        #[arg(long)]
        tables: Option<PathBuf>,
    },
    /// Drive a scripted session against scripted model replies and compare
    /// the final table to <DIR>/golden.csv.
    Replay {
        /// Fixture directory with replay.json and golden.csv.
        dir: PathBuf,
        /// Model transcript [default: <DIR>/transcript.json].
        #[arg(long)]
        mock_transcript: Option<PathBuf>,
        /// Repair rounds allowed per synthesis.
        #[arg(long, default_value_t = 3)]
        max_repairs: usize,
        /// Write the final table and provenance.json here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Exec { dir, program, out_dir } => exec(&dir, program.as_deref(), out_dir.as_deref()),
        Command::Explain { program } => explain(&program),
        Command::Check { program, tables } => check(&program, tables.as_deref()),
        Command::Replay { dir, mock_transcript, max_repairs, out_dir } => {
            replay(&dir, mock_transcript.as_deref(), max_repairs, out_dir.as_deref())
        }
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_program(path: &Path) -> Result<wrangle_core::DslProgram> {
    match parse_program(&read(path)?) {
        Ok(p) => Ok(p),
        Err(ProgramError::Diagnostics(ds)) => bail!("{}\n{}", path.display(), render_diagnostics(&ds)),
        Err(e) => Err(e).with_context(|| path.display().to_string()),
    }
}

/// Loads every CSV of `dir` as version 0, in file-name order.
fn load_tables(dir: &Path) -> Result<VersionedStore> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let mut store = VersionedStore::new();
    for path in files {
        let file = path.file_name().and_then(|f| f.to_str()).context("non-UTF-8 file name")?.to_string();
        let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        let table = ingest_csv(&bytes, &file).with_context(|| path.display().to_string())?;
        store.store_version(file.trim_end_matches(".csv"), table);
    }
    Ok(store)
}

fn write_out(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn first_difference(got: &str, want: &str) -> String {
    for (i, (g, w)) in got.lines().zip(want.lines()).enumerate() {
        if g != w {
            return format!("line {}: got {g:?}, want {w:?}", i + 1);
        }
    }
    format!("got {} lines, want {}", got.lines().count(), want.lines().count())
}

/// Prints one `match`/`MISMATCH` line and reports whether `got` equals the
/// golden file.
fn compare_golden(label: &str, got: &[u8], golden: &Path) -> Result<bool> {
    let want = read(golden)?;
    let got = String::from_utf8_lossy(got);
    if got == want {
        println!("match {label}");
        Ok(true)
    } else {
        println!("MISMATCH {label}: {}", first_difference(&got, &want));
        Ok(false)
    }
}

fn latest_csv(store: &VersionedStore, base: &str) -> Option<Vec<u8>> {
    store.latest_ref(base).and_then(|r| store.get(&r)).map(emit_csv)
}

fn scalar_close(key: &str, got: f64, want: f64) -> bool {
    match key {
        "p_value" => (got - want).abs() <= 1e-7,
        _ => (got - want).abs() <= 1e-9 * want.abs().max(1.0),
    }
}

fn exec(dir: &Path, program: Option<&Path>, out_dir: Option<&Path>) -> Result<bool> {
    let program_path = program.map_or_else(|| dir.join("program.json"), Path::to_path_buf);
    let program = load_program(&program_path)?;
    let mut store = load_tables(&dir.join("tables"))?;
    let diagnostics = check_program(&program, &store);
    if !diagnostics.is_empty() {
        println!("{}", render_diagnostics(&diagnostics));
        return Ok(false);
    }
    let mut graph = ProvenanceGraph::new();
    for name in store.names() {
        graph.add_node(name.to_string());
    }
    let (effects, scalars) = run_program(&program, &mut store).map_err(|e| anyhow::anyhow!("{e}"))?;
    graph.record_effects(&effects);
    for e in &effects {
        if e.skipped {
            println!("step {}: {} skipped", e.call_index, e.function);
        } else {
            println!("step {}: {} {} -> {}", e.call_index, e.function, e.inputs.join(", "), e.outputs.join(", "));
        }
    }
    for (k, v) in &scalars {
        println!("{k} = {v:?}");
    }
    if let Some(out) = out_dir {
        for name in effects.iter().flat_map(|e| &e.outputs) {
            if let Some(t) = store.fetch(name) {
                write_out(out, name, &emit_csv(t))?;
            }
        }
        write_out(out, "provenance.json", serde_json::to_string_pretty(&graph.to_json())?.as_bytes())?;
    }

    let fixture_path = dir.join("fixture.json");
    if !fixture_path.exists() {
        return Ok(true);
    }
    let fixture: Value = serde_json::from_str(&read(&fixture_path)?).context("parsing fixture.json")?;
    let mut expected: Vec<(String, PathBuf)> = Vec::new();
    if let Some(base) = fixture["final_table"].as_str() {
        expected.push((base.to_string(), dir.join("golden.csv")));
    }
    for (base, rel) in fixture["expect"].as_object().into_iter().flatten() {
        expected.push((base.clone(), dir.join(rel.as_str().context("expect entries are file names")?)));
    }
    let mut ok = true;
    for (base, golden) in &expected {
        match latest_csv(&store, base) {
            Some(bytes) => ok &= compare_golden(base, &bytes, golden)?,
            None => {
                println!("MISMATCH {base}: no such table");
                ok = false;
            }
        }
    }
    for (key, want) in fixture["scalars"].as_object().into_iter().flatten() {
        let want = want.as_f64().context("scalar goldens are numbers")?;
        match scalars.get(key) {
            Some(&got) if scalar_close(key, got, want) => println!("match {key}"),
            got => {
                println!("MISMATCH {key}: got {got:?}, want {want:?}");
                ok = false;
            }
        }
    }
    Ok(ok)
}

fn explain(path: &Path) -> Result<bool> {
    for step in explain_program(&load_program(path)?) {
        println!("{}. {}", step.index, step.text);
    }
    Ok(true)
}

fn check(path: &Path, tables: Option<&Path>) -> Result<bool> {
    let program = match parse_program(&read(path)?) {
        Ok(p) => p,
        Err(ProgramError::Diagnostics(ds)) => {
            println!("{}", render_diagnostics(&ds));
            return Ok(false);
        }
        Err(e) => return Err(e).with_context(|| path.display().to_string()),
    };
    let store = match tables {
        Some(dir) => load_tables(dir)?,
        None => {
            let mut store = VersionedStore::new();
            for name in &program.required_tables {
                let table = Table::new(name.clone(), Vec::new(), Vec::new())?;
                store.store_version(name.trim_end_matches(".csv"), table);
            }
            store
        }
    };
    let diagnostics = check_program(&program, &store);
    if diagnostics.is_empty() {
        println!("ok");
        return Ok(true);
    }
    println!("{}", render_diagnostics(&diagnostics));
    Ok(false)
}

fn replay(dir: &Path, transcript: Option<&Path>, max_repairs: usize, out_dir: Option<&Path>) -> Result<bool> {
    let transcript = transcript.map_or_else(|| dir.join("transcript.json"), Path::to_path_buf);
    let mock = Arc::new(MockLlm::from_json(&read(&transcript)?).with_context(|| transcript.display().to_string())?);
    let script: ReplayScript = serde_json::from_str(&read(&dir.join("replay.json"))?).context("parsing replay.json")?;
    let mut session = Session::new(Arc::new(Agent::new(mock.clone()).with_max_repairs(max_repairs)));
    for (i, action) in script.actions.iter().enumerate() {
        let reply = session.apply(action, dir).map_err(|e| anyhow::anyhow!("action {i}: {e}"))?;
        println!("{i}: {reply}");
    }
    if mock.remaining() > 0 {
        eprintln!("warning: {} scripted model replies were not used", mock.remaining());
    }
    let graph = session.provenance();
    let final_csv = session.latest_csv(&script.final_table).map_err(|e| anyhow::anyhow!("{e}"))?;
    if let Some(out) = out_dir {
        let rendered = session
            .store
            .latest_ref(&script.final_table)
            .map(|r| r.rendered())
            .context("final table vanished")?;
        write_out(out, &rendered, &final_csv)?;
        write_out(out, "provenance.json", serde_json::to_string_pretty(&graph)?.as_bytes())?;
    }
    compare_golden(&script.final_table, &final_csv, &dir.join("golden.csv"))
}
