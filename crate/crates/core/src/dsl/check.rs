//! Static checking of programs against the signature catalog.
//!
//! The checker validates arity, argument kinds, axes, enumerated options,
//! conditions and table availability. It never looks inside tables: whether a
//! column exists or a row is in range is a runtime concern.

use std::collections::BTreeSet;
use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::catalog::{signature, ParamKind, AGGREGATE_FUNCTIONS, FILL_METHODS, JOIN_KINDS, TEST_STRATEGIES};
use super::{Arg, DslCall, DslFunction, DslProgram, KNOWN_SCALARS};
use crate::table::{TableRef, VersionedStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiagnosticCode {
    UnknownFunction,
    BadArity,
    BadArgKind,
    BadAxis,
    UnknownTable,
    BadCondition,
}

impl fmt::Display for DiagnosticCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxDiagnostic {
    pub call_index: usize,
    pub code: DiagnosticCode,
    pub message: String,
}

impl SyntaxDiagnostic {
    pub fn new(call_index: usize, code: DiagnosticCode, message: impl Into<String>) -> Self {
        SyntaxDiagnostic { call_index, code, message: message.into() }
    }
}

impl fmt::Display for SyntaxDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {}: {}: {}", self.call_index, self.code, self.message)
    }
}

/// One line per diagnostic, `step {call_index}: {code}: {message}`, in
/// call order.
pub fn render_diagnostics(ds: &[SyntaxDiagnostic]) -> String {
    let mut sorted: Vec<&SyntaxDiagnostic> = ds.iter().collect();
    sorted.sort_by_key(|d| d.call_index);
    sorted.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n")
}

/// Checks `program` against the tables present in `store`.
pub fn check_program(program: &DslProgram, store: &VersionedStore) -> Vec<SyntaxDiagnostic> {
    check_program_with(program, &|name| store.resolve(name).map(|r| r.base))
}

/// Checks `program` with a caller-supplied resolver mapping a table name to
/// the base it refers to, or `None` when the table does not exist.
pub fn check_program_with(
    program: &DslProgram,
    resolve: &dyn Fn(&str) -> Option<String>,
) -> Vec<SyntaxDiagnostic> {
    let mut scope = Scope { resolve, produced: BTreeSet::new(), deleted: BTreeSet::new(), prefixes: Vec::new() };
    let mut out = Vec::new();
    for (index, call) in program.calls.iter().enumerate() {
        check_call(index, call, &mut scope, &mut out);
    }
    out
}

struct Scope<'a> {
    resolve: &'a dyn Fn(&str) -> Option<String>,
    produced: BTreeSet<String>,
    deleted: BTreeSet<String>,
    prefixes: Vec<String>,
}

impl Scope<'_> {
    fn candidates(name: &str) -> Vec<String> {
        let stem = name.strip_suffix(".csv").unwrap_or(name).to_string();
        let mut out = vec![stem];
        if let Some(r) = TableRef::parse_rendered(name) {
            out.push(r.base);
        }
        out
    }

    /// Base a read of `name` refers to, if available at this point.
    fn lookup(&self, name: &str) -> Option<String> {
        let candidates = Scope::candidates(name);
        if let Some(base) = candidates.iter().find(|b| self.produced.contains(*b)) {
            return Some(base.clone());
        }
        if let Some(base) = candidates
            .iter()
            .find(|b| self.prefixes.iter().any(|p| b.starts_with(p.as_str())))
        {
            return Some(base.clone());
        }
        if candidates.iter().any(|b| self.deleted.contains(b)) {
            return None;
        }
        (self.resolve)(name)
    }

    fn write(&mut self, base: String) {
        self.deleted.remove(&base);
        self.produced.insert(base);
    }

    fn delete(&mut self, base: String) {
        self.produced.remove(&base);
        self.deleted.insert(base);
    }
}

fn show(arg: &Arg) -> String {
    super::exchange::arg_json(arg).to_string()
}

fn check_call(index: usize, call: &DslCall, scope: &mut Scope<'_>, out: &mut Vec<SyntaxDiagnostic>) {
    let sig = signature(call.function);
    let f = call.function.name();
    let mut push = |code, msg: String| out.push(SyntaxDiagnostic::new(index, code, msg));

    if call.args.len() > sig.params.len() {
        push(
            DiagnosticCode::BadArity,
            format!("{f} expects at most {} arguments, got {}", sig.params.len(), call.args.len()),
        );
    }

    let arg_at = |i: usize| call.args.get(i).unwrap_or(&Arg::Null);
    let table_slots: Vec<usize> = sig.table_params().map(|(i, _)| i).collect();
    let tables_given = table_slots.iter().filter(|&&i| !arg_at(i).is_null()).count();
    if tables_given < table_slots.len() {
        push(
            DiagnosticCode::BadArity,
            format!("{f} expects ≥{} table arguments, got {tables_given}", table_slots.len()),
        );
    }

    let item_condition = call.condition.as_ref().is_some_and(|c| c.uses_missing_ratio());
    for (i, p) in sig.params.iter().enumerate() {
        let arg = arg_at(i);
        if arg.is_null() {
            if p.kind == ParamKind::Table || p.optional {
                if call.function == DslFunction::Drop && p.name == "label" && !item_condition {
                    push(
                        DiagnosticCode::BadArity,
                        format!("{f} argument {i} ({}) is required unless a missing_ratio condition selects the items", p.name),
                    );
                }
                continue;
            }
            push(DiagnosticCode::BadArity, format!("{f} argument {i} ({}) is required", p.name));
            continue;
        }
        let ok = match p.kind {
            ParamKind::Table => matches!(arg, Arg::TableName(t) if t.len() > 4 && t.ends_with(".csv")),
            ParamKind::Count => matches!(arg, Arg::Number(n) if n.fract() == 0.0 && *n >= 0.0),
            ParamKind::Label => match arg {
                Arg::Label(s) => !s.is_empty(),
                Arg::Number(n) => n.fract() == 0.0 && *n >= 1.0,
                _ => false,
            },
            ParamKind::Labels => match arg {
                Arg::Label(s) => !s.is_empty(),
                Arg::Number(n) => n.fract() == 0.0 && *n >= 1.0,
                Arg::LabelList(v) => !v.is_empty(),
                _ => false,
            },
            ParamKind::Axis => {
                if arg.as_axis().is_none() {
                    push(
                        DiagnosticCode::BadAxis,
                        format!("{f} argument {i} ({}) must be 0/\"index\"/\"rows\" or 1/\"columns\", got {}", p.name, show(arg)),
                    );
                }
                true
            }
            ParamKind::Values => match arg {
                Arg::ValueGrid(rows) => {
                    !rows.is_empty() && !rows[0].is_empty() && rows.iter().all(|r| r.len() == rows[0].len())
                }
                Arg::Number(_) | Arg::Label(_) => true,
                _ => false,
            },
            ParamKind::Mapping => matches!(arg, Arg::Mapping(m) if !m.is_empty()),
            ParamKind::Text => matches!(arg, Arg::Label(_)),
            ParamKind::Scalar => matches!(arg, Arg::Number(_) | Arg::Label(_)),
        };
        if !ok {
            let expected = match p.kind {
                ParamKind::Table => "a table name ending in \".csv\"",
                ParamKind::Count => "a non-negative integer",
                ParamKind::Label => "a label or 1-based position",
                ParamKind::Labels => "a label or a non-empty list of labels",
                ParamKind::Axis => "an axis",
                ParamKind::Values => "a rectangular value grid or a scalar",
                ParamKind::Mapping => "a non-empty mapping",
                ParamKind::Text => "a string",
                ParamKind::Scalar => "a scalar value",
            };
            push(
                DiagnosticCode::BadArgKind,
                format!("{f} argument {i} ({}) must be {expected}, got {}", p.name, show(arg)),
            );
        }
    }

    // Enumerated options.
    let text_of = |name: &str| match call.arg(name) {
        Arg::Label(s) => Some(s.clone()),
        _ => None,
    };
    let mut bad_option = |param: &str, value: &str, allowed: &[&str]| {
        let i = sig.position(param).expect("catalog parameter");
        push(
            DiagnosticCode::BadArgKind,
            format!("{f} argument {i} ({param}) must be one of {}, got {value:?}", allowed.join("/")),
        );
    };
    match call.function {
        DslFunction::PivotTable => {
            if let Some(a) = text_of("aggfunc") {
                if !AGGREGATE_FUNCTIONS.contains(&a.as_str()) {
                    bad_option("aggfunc", &a, &AGGREGATE_FUNCTIONS);
                }
            }
        }
        DslFunction::Merge => {
            if let Some(h) = text_of("how") {
                if !JOIN_KINDS.contains(&h.as_str()) {
                    bad_option("how", &h, &JOIN_KINDS);
                }
            }
        }
        DslFunction::Fill => {
            if let Some(m) = text_of("method") {
                if !FILL_METHODS.contains(&m.as_str()) && !m.starts_with("value:") {
                    bad_option("method", &m, &["mean", "median", "mode", "ffill", "bfill", "value:<literal>"]);
                }
            }
        }
        DslFunction::Aggregate => {
            if let Arg::Mapping(pairs) = call.arg("functions") {
                for (_, func) in pairs {
                    if !AGGREGATE_FUNCTIONS.contains(&func.as_str()) {
                        bad_option("functions", func, &AGGREGATE_FUNCTIONS);
                    }
                }
            }
        }
        DslFunction::Test => {
            if let Some(s) = text_of("strategy") {
                if !TEST_STRATEGIES.contains(&s.as_str()) {
                    bad_option("strategy", &s, &TEST_STRATEGIES);
                }
            }
        }
        DslFunction::Split => {
            if text_of("delimiter").is_some_and(|d| d.is_empty()) {
                push(DiagnosticCode::BadArgKind, format!("{f} argument 2 (delimiter) must not be empty"));
            }
            if let Some(labels) = call.arg("new_label_list").as_labels() {
                if labels.len() < 2 {
                    push(
                        DiagnosticCode::BadArgKind,
                        format!("{f} argument 3 (new_label_list) must name at least 2 labels, got {}", labels.len()),
                    );
                }
            }
        }
        DslFunction::Format => {
            if let Some(p) = text_of("pattern") {
                if let Err(e) = Regex::new(&p) {
                    push(
                        DiagnosticCode::BadArgKind,
                        format!("{f} argument 2 (pattern) is not a valid regular expression: {}", e.to_string().lines().last().unwrap_or("")),
                    );
                }
            }
        }
        _ => {}
    }

    if let Some(cond) = &call.condition {
        for ident in cond.identifiers() {
            if !KNOWN_SCALARS.contains(&ident) {
                push(
                    DiagnosticCode::BadCondition,
                    format!("{f} condition references unknown scalar {ident:?}; known: {}", KNOWN_SCALARS.join(", ")),
                );
            }
        }
        if cond.uses_missing_ratio() && !matches!(call.function, DslFunction::Drop | DslFunction::Fill) {
            push(
                DiagnosticCode::BadCondition,
                format!("{f} condition uses missing_ratio, which is only valid for per-item drop/fill"),
            );
        }
    }

    // Table availability, then the call's writes.
    let mut bases = Vec::new();
    for &i in &table_slots {
        if let Arg::TableName(name) = arg_at(i) {
            match scope.lookup(name) {
                Some(base) => bases.push(Some(base)),
                None => {
                    push(
                        DiagnosticCode::UnknownTable,
                        format!("{f} argument {i} ({}) references unknown table {name}", sig.params[i].name),
                    );
                    bases.push(None);
                }
            }
        } else {
            bases.push(None);
        }
    }
    apply_writes(call, &bases, scope);
}

fn apply_writes(call: &DslCall, bases: &[Option<String>], scope: &mut Scope<'_>) {
    let first = bases.first().cloned().flatten();
    match call.function {
        DslFunction::CreateTable => scope.write("new_table".into()),
        DslFunction::DeleteTable => {
            if let Some(b) = first {
                scope.delete(b);
            }
        }
        DslFunction::Merge => scope.write("merged".into()),
        DslFunction::Move | DslFunction::Swap => {
            for b in bases.iter().flatten() {
                scope.write(b.clone());
            }
        }
        DslFunction::Copy => {
            if let Some(Some(b)) = bases.get(1) {
                scope.write(b.clone());
            }
        }
        DslFunction::Divide => {
            if let Some(b) = first {
                scope.prefixes.push(format!("{b}_"));
            }
        }
        DslFunction::Count => {
            if let Some(b) = first {
                scope.write(format!("{b}_count"));
            }
        }
        DslFunction::Test => {}
        _ => {
            if let Some(b) = first {
                scope.write(b);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_program;
    use crate::table::Table;

    fn store() -> VersionedStore {
        let mut s = VersionedStore::new();
        s.store_version("a", Table::from_strs("a.csv", &["id"], &[]).unwrap());
        s.store_version("b", Table::from_strs("b.csv", &["id"], &[]).unwrap());
        s
    }

    fn codes(doc: &str) -> Vec<DiagnosticCode> {
        check_program(&parse_program(doc).unwrap(), &store()).into_iter().map(|d| d.code).collect()
    }

    #[test]
    fn merge_with_one_table() {
        let p = parse_program(r#"{"required_tables":["a.csv"],"program":[{"function":"merge","table_a":"a.csv"}]}"#).unwrap();
        let ds = check_program(&p, &store());
        assert_eq!(ds.len(), 1);
        assert_eq!(render_diagnostics(&ds), "step 0: BadArity: merge expects ≥2 table arguments, got 1");
    }

    #[test]
    fn dangling_table() {
        assert_eq!(
            codes(r#"{"required_tables":[],"program":[{"function":"transpose","table":"ghost.csv"}]}"#),
            vec![DiagnosticCode::UnknownTable]
        );
    }

    #[test]
    fn produced_tables_become_readable() {
        assert!(codes(
            r#"{"required_tables":["a.csv","b.csv"],"program":[
                {"function":"merge","table_a":"a.csv","table_b":"b.csv","how":"outer","on":"id"},
                {"function":"transpose","table":"merged.csv"}]}"#
        )
        .is_empty());
    }

    #[test]
    fn deleted_tables_are_gone() {
        assert_eq!(
            codes(
                r#"{"required_tables":["a.csv"],"program":[
                {"function":"delete_table","table_name":"a.csv"},
                {"function":"transpose","table":"a.csv"}]}"#
            ),
            vec![DiagnosticCode::UnknownTable]
        );
    }

    #[test]
    fn bad_axis_and_kinds() {
        assert_eq!(
            codes(r#"{"required_tables":["a.csv"],"program":[{"function":"drop","table":"a.csv","label":"x","axis":"diagonal"}]}"#),
            vec![DiagnosticCode::BadAxis]
        );
        assert_eq!(
            codes(r#"{"required_tables":["a.csv"],"program":[{"function":"drop","table":"a.csv","label":{"k":"v"},"axis":1}]}"#),
            vec![DiagnosticCode::BadArgKind]
        );
    }

    #[test]
    fn conditions_are_scoped() {
        assert_eq!(
            codes(r#"{"required_tables":["a.csv"],"program":[{"function":"transpose","table":"a.csv","condition":"missing_ratio > 0.5"}]}"#),
            vec![DiagnosticCode::BadCondition]
        );
        assert_eq!(
            codes(r#"{"required_tables":["a.csv"],"program":[{"function":"transpose","table":"a.csv","condition":"pvalue < 0.05"}]}"#),
            vec![DiagnosticCode::BadCondition]
        );
    }

    #[test]
    fn diagnostics_render_in_call_order() {
        let ds = vec![
            SyntaxDiagnostic::new(2, DiagnosticCode::BadAxis, "x"),
            SyntaxDiagnostic::new(0, DiagnosticCode::UnknownTable, "y"),
        ];
        assert_eq!(render_diagnostics(&ds), "step 0: UnknownTable: y\nstep 2: BadAxis: x");
        assert_eq!(render_diagnostics(&[]), "");
    }

    #[test]
    fn checker_is_pure() {
        let s = store();
        let p = parse_program(r#"{"required_tables":[],"program":[{"function":"transpose","table":"ghost.csv"}]}"#).unwrap();
        let first = check_program(&p, &s);
        assert_eq!(check_program(&p, &s), first);
        assert_eq!(s, store());
    }
}
