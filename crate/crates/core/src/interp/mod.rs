//! Program execution over the versioned store.
//!
//! Each call reads the latest version of the bases it names and stores its
//! results as new versions; nothing already stored is ever modified. Every
//! executed call leaves an [`Effect`] recording the exact versions it read and
//! wrote.

pub mod ops;
pub mod stats;

use std::collections::{BTreeMap, BTreeSet};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dsl::{signature, Arg, CondError, DslCall, DslFunction, DslProgram, ParamKind};
use crate::table::{Axis, CellValue, Selector, Table, TableRef, VersionedStore};
use ops::{AggFunc, FillMethod, JoinKind, OpError, Values};
pub use stats::{welch_t_test, TestResult};

/// Scalars produced by `test` (`statistic`, `p_value`) and `count`.
pub type ScalarEnv = BTreeMap<String, f64>;

/// Dataflow record of one executed call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Effect {
    pub call_index: usize,
    pub function: DslFunction,
    /// Rendered names of the versions read.
    pub inputs: Vec<String>,
    /// Rendered names of the versions written.
    pub outputs: Vec<String>,
    /// The call's condition was false over its whole scope; nothing was written.
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExecErrorKind {
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("table {0} was deleted earlier in this program")]
    DeletedTable(String),
    #[error("{0}")]
    BadArgument(String),
    #[error(transparent)]
    Op(#[from] OpError),
    #[error(transparent)]
    Condition(#[from] CondError),
}

/// A runtime fault. Versions stored by earlier calls stay in the store; their
/// effects are kept in `completed`.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("step {call_index}: {function}: {kind}")]
pub struct ExecError {
    pub call_index: usize,
    pub function: DslFunction,
    pub kind: ExecErrorKind,
    pub completed: Vec<Effect>,
}

/// Runs `program`, resolving every base to its latest version.
pub fn run_program(
    program: &DslProgram,
    store: &mut VersionedStore,
) -> Result<(Vec<Effect>, ScalarEnv), ExecError> {
    run_program_with(program, store, &BTreeMap::new())
}

/// Runs `program` with some bases pinned to a version. A pinned base read
/// before this run writes it resolves to the pinned version, so re-running a
/// script starts from the same inputs even after earlier runs appended new
/// versions.
pub fn run_program_with(
    program: &DslProgram,
    store: &mut VersionedStore,
    pins: &BTreeMap<String, u32>,
) -> Result<(Vec<Effect>, ScalarEnv), ExecError> {
    let mut run = Run { store, pins, written: BTreeSet::new(), deleted: BTreeSet::new(), env: ScalarEnv::new() };
    let mut effects = Vec::with_capacity(program.calls.len());
    for (index, call) in program.calls.iter().enumerate() {
        match run.call(index, call) {
            Ok(effect) => effects.push(effect),
            Err(kind) => {
                return Err(ExecError { call_index: index, function: call.function, kind, completed: effects })
            }
        }
    }
    log::debug!("ran {} calls, {} effects", program.calls.len(), effects.len());
    Ok((effects, run.env))
}

type Result2<T> = Result<T, ExecErrorKind>;

fn bad(msg: impl Into<String>) -> ExecErrorKind {
    ExecErrorKind::BadArgument(msg.into())
}

fn selector(arg: &Arg) -> Option<Selector> {
    match arg {
        Arg::Number(n) if n.fract() == 0.0 && *n >= 1.0 => Some(Selector::Position(*n as usize)),
        Arg::Number(_) | Arg::Label(_) => arg.as_text().map(Selector::Name),
        _ => None,
    }
}

fn selectors(arg: &Arg) -> Option<Vec<Selector>> {
    match arg {
        Arg::LabelList(v) => Some(v.iter().cloned().map(Selector::Name).collect()),
        _ => selector(arg).map(|s| vec![s]),
    }
}

fn number_cell(n: f64) -> CellValue {
    if n.fract() == 0.0 && n.abs() < 9e15 {
        CellValue::Int(n as i64)
    } else {
        CellValue::Float(n)
    }
}

fn scalar_cell(arg: &Arg) -> CellValue {
    match arg {
        Arg::Number(n) => number_cell(*n),
        Arg::Label(s) => CellValue::from_token(s),
        _ => CellValue::Null,
    }
}

fn retype(c: &CellValue) -> CellValue {
    match c {
        CellValue::Text(s) => CellValue::from_token(s),
        other => other.clone(),
    }
}

struct Run<'a> {
    store: &'a mut VersionedStore,
    pins: &'a BTreeMap<String, u32>,
    written: BTreeSet<String>,
    deleted: BTreeSet<String>,
    env: ScalarEnv,
}

/// Arguments of one call, with typed accessors that report the parameter.
struct Args<'c> {
    call: &'c DslCall,
}

impl<'c> Args<'c> {
    fn raw(&self, name: &str) -> &'c Arg {
        self.call.arg(name)
    }

    fn sel(&self, name: &str) -> Result2<Selector> {
        selector(self.raw(name)).ok_or_else(|| bad(format!("{name} must be a label or position")))
    }

    fn sels(&self, name: &str) -> Result2<Vec<Selector>> {
        selectors(self.raw(name)).ok_or_else(|| bad(format!("{name} must be a label or list of labels")))
    }

    fn opt_sels(&self, name: &str) -> Result2<Option<Vec<Selector>>> {
        if self.raw(name).is_null() {
            Ok(None)
        } else {
            self.sels(name).map(Some)
        }
    }

    fn text(&self, name: &str) -> Result2<String> {
        self.raw(name).as_text().ok_or_else(|| bad(format!("{name} must be a string")))
    }

    fn axis(&self) -> Result2<Axis> {
        self.raw("axis").as_axis().ok_or_else(|| bad("axis must be 0 or 1"))
    }

    fn count(&self, name: &str) -> Result2<usize> {
        match self.raw(name) {
            Arg::Number(n) if n.fract() == 0.0 && *n >= 0.0 => Ok(*n as usize),
            other => Err(bad(format!("{name} must be a non-negative integer, got {}", other.kind_name()))),
        }
    }
}

impl Run<'_> {
    fn resolve(&self, name: &str) -> Result2<TableRef> {
        let stem = name.strip_suffix(".csv").unwrap_or(name);
        if let Some(pinned) = self.store.fetch(name).and_then(|_| TableRef::parse_rendered(name)) {
            if self.deleted.contains(&pinned.base) {
                return Err(ExecErrorKind::DeletedTable(name.into()));
            }
            return Ok(pinned);
        }
        if self.deleted.contains(stem) {
            return Err(ExecErrorKind::DeletedTable(name.into()));
        }
        if !self.written.contains(stem) {
            if let Some(&v) = self.pins.get(stem) {
                let r = TableRef::new(stem, v);
                if self.store.get(&r).is_some() {
                    return Ok(r);
                }
            }
        }
        self.store.latest_ref(stem).ok_or_else(|| ExecErrorKind::UnknownTable(name.into()))
    }

    fn read(&self, name: &str) -> Result2<(TableRef, Table)> {
        let r = self.resolve(name)?;
        let t = self.store.get(&r).cloned().ok_or_else(|| ExecErrorKind::UnknownTable(name.into()))?;
        Ok((r, t))
    }

    fn write(&mut self, base: &str, table: Table) -> String {
        self.deleted.remove(base);
        self.written.insert(base.to_string());
        self.store.store_version(base, table).rendered()
    }

    fn call(&mut self, index: usize, call: &DslCall) -> Result2<Effect> {
        let sig = signature(call.function);
        let args = Args { call };
        let mut inputs: Vec<(TableRef, Table)> = Vec::new();
        for (i, p) in sig.params.iter().enumerate() {
            if p.kind != ParamKind::Table {
                continue;
            }
            let name = call
                .args
                .get(i)
                .and_then(Arg::as_table)
                .ok_or_else(|| bad(format!("{} must name a table", p.name)))?;
            inputs.push(self.read(name)?);
        }
        let mut input_names: Vec<String> = Vec::new();
        for (r, _) in &inputs {
            if !input_names.contains(&r.rendered()) {
                input_names.push(r.rendered());
            }
        }
        let mut effect = Effect {
            call_index: index,
            function: call.function,
            inputs: input_names,
            outputs: Vec::new(),
            skipped: false,
        };

        let per_item = call.condition.as_ref().is_some_and(|c| c.uses_missing_ratio());
        if let Some(cond) = call.condition.as_ref().filter(|_| !per_item) {
            if !cond.eval(&self.env, None)? {
                effect.skipped = true;
                return Ok(effect);
            }
        }

        let outputs = match self.apply(call, &args, &inputs)? {
            Some(outputs) => outputs,
            None => {
                effect.skipped = true;
                Vec::new()
            }
        };
        effect.outputs = outputs;
        Ok(effect)
    }

    /// Items along `axis` whose per-item condition holds, as positions.
    fn selected_items(&self, call: &DslCall, t: &Table, candidates: Vec<usize>, axis: Axis) -> Result2<Vec<usize>> {
        let cond = call.condition.as_ref().expect("per-item condition");
        let ratios = ops::missing_ratios(t, axis);
        let mut keep = Vec::new();
        for i in candidates {
            if cond.eval(&self.env, Some(ratios[i]))? {
                keep.push(i);
            }
        }
        Ok(keep)
    }

    /// Executes one call; `None` means a per-item condition selected nothing.
    fn apply(&mut self, call: &DslCall, a: &Args<'_>, inputs: &[(TableRef, Table)]) -> Result2<Option<Vec<String>>> {
        use DslFunction as F;
        let first = inputs.first();
        let base = first.map(|(r, _)| r.base.clone()).unwrap_or_default();
        let t = first.map(|(_, t)| t);
        let per_item = call.condition.as_ref().is_some_and(|c| c.uses_missing_ratio());
        let single = |table: Table, run: &mut Self| Ok(Some(vec![run.write(&base, table)]));

        match call.function {
            F::CreateTable => {
                let (rows, cols) = (a.count("row_number")?, a.count("column_number")?);
                let table = ops::create_table("new_table.csv", rows, cols)?;
                Ok(Some(vec![self.write("new_table", table)]))
            }
            F::DeleteTable => {
                self.written.remove(&base);
                self.deleted.insert(base);
                Ok(Some(Vec::new()))
            }
            F::PivotTable => {
                let agg_name = a.text("aggfunc")?;
                let agg = AggFunc::parse(&agg_name).ok_or_else(|| bad(format!("unknown aggfunc {agg_name:?}")))?;
                let out = ops::pivot_table(t.unwrap(), &a.sel("index")?, &a.sel("columns")?, &a.sel("values")?, agg)?;
                single(out, self)
            }
            F::Merge => {
                let how = match a.raw("how") {
                    Arg::Null => JoinKind::Outer,
                    other => {
                        let h = other.as_text().unwrap_or_default();
                        JoinKind::parse(&h).ok_or_else(|| bad(format!("unknown join kind {h:?}")))?
                    }
                };
                let on = match a.raw("on") {
                    Arg::Null => None,
                    other => Some(other.as_labels().ok_or_else(|| bad("on must be a label or list of labels"))?),
                };
                let out = ops::merge(&inputs[0].1, &inputs[1].1, how, on.as_deref())?;
                Ok(Some(vec![self.write("merged", out)]))
            }
            F::Subtable => single(ops::subtable(t.unwrap(), &a.sels("labels")?, a.axis()?)?, self),
            F::Transpose => single(ops::transpose(t.unwrap())?, self),
            F::Insert => {
                let name = match a.raw("index_name") {
                    Arg::Null => None,
                    other => other.as_text(),
                };
                single(ops::insert(t.unwrap(), &a.sel("index")?, name.as_deref(), a.axis()?)?, self)
            }
            F::Drop => {
                let axis = a.axis()?;
                let table = t.unwrap();
                let labels = a.opt_sels("label")?;
                let targets = if per_item {
                    let candidates = match &labels {
                        Some(ls) => ls.iter().map(|l| table.resolve(l, axis)).collect::<Result<Vec<_>, _>>().map_err(OpError::from)?,
                        None => (0..table.len_along(axis)).collect(),
                    };
                    let chosen = self.selected_items(call, table, candidates, axis)?;
                    if chosen.is_empty() {
                        return Ok(None);
                    }
                    chosen.into_iter().map(|i| Selector::Position(i + 1)).collect()
                } else {
                    labels.ok_or_else(|| bad("drop needs a label unless a missing_ratio condition selects items"))?
                };
                single(ops::drop(table, &targets, axis)?, self)
            }
            F::Assign => {
                let values = match a.raw("values") {
                    Arg::ValueGrid(g) => Values::Grid(g.iter().map(|r| r.iter().map(retype).collect()).collect()),
                    Arg::Number(_) | Arg::Label(_) => Values::Scalar(scalar_cell(a.raw("values"))),
                    _ => return Err(bad("values must be a grid or a scalar")),
                };
                let out = ops::assign(
                    t.unwrap(),
                    &a.sel("start_row_index")?,
                    &a.sel("end_row_index")?,
                    &a.sel("start_column_index")?,
                    &a.sel("end_column_index")?,
                    &values,
                )?;
                single(out, self)
            }
            F::Move | F::Swap => {
                let (oref, origin) = &inputs[0];
                let (tref, target) = &inputs[1];
                let same = oref.base == tref.base;
                let other = if same { None } else { Some(target) };
                let axis = a.axis()?;
                let (new_origin, new_target) = if call.function == F::Move {
                    ops::move_item(origin, &a.sel("origin_index")?, other, &a.sel("target_index")?, axis)?
                } else {
                    ops::swap(origin, &a.sel("label_a")?, other, &a.sel("label_b")?, axis)?
                };
                let mut outs = vec![self.write(&oref.base, new_origin)];
                if let Some(nt) = new_target {
                    outs.push(self.write(&tref.base, nt));
                }
                Ok(Some(outs))
            }
            F::Copy => {
                let (oref, origin) = &inputs[0];
                let (tref, target) = &inputs[1];
                let other = if oref.base == tref.base { None } else { Some(target) };
                let out = ops::copy(origin, &a.sel("origin_label")?, other, &a.sel("target_label")?, a.axis()?)?;
                Ok(Some(vec![self.write(&tref.base, out)]))
            }
            F::Rearrange => {
                let by_values = match a.raw("by_values") {
                    Arg::Null => None,
                    _ => Some(a.sel("by_values")?),
                };
                let by_array = a.opt_sels("by_array")?;
                single(ops::rearrange(t.unwrap(), by_values.as_ref(), by_array.as_deref(), a.axis()?)?, self)
            }
            F::Divide => {
                let children = ops::divide(t.unwrap(), &a.sel("by")?, a.axis()?)?;
                let mut used: Vec<String> = Vec::new();
                let mut outs = Vec::new();
                for (value, child) in children {
                    let stem = format!("{base}_{}", ops::sanitize_value(&value));
                    let mut name = stem.clone();
                    let mut k = 2;
                    while used.contains(&name) {
                        name = format!("{stem}_{k}");
                        k += 1;
                    }
                    used.push(name.clone());
                    outs.push(self.write(&name, child));
                }
                Ok(Some(outs))
            }
            F::Fill => {
                let method_name = a.text("method")?;
                let method =
                    FillMethod::parse(&method_name).ok_or_else(|| bad(format!("unknown fill method {method_name:?}")))?;
                let axis = a.axis()?;
                let table = t.unwrap();
                let mut labels = a.opt_sels("labels")?;
                if per_item {
                    let candidates = match &labels {
                        Some(ls) => ls.iter().map(|l| table.resolve(l, axis)).collect::<Result<Vec<_>, _>>().map_err(OpError::from)?,
                        None => (0..table.len_along(axis)).collect(),
                    };
                    let chosen = self.selected_items(call, table, candidates, axis)?;
                    if chosen.is_empty() {
                        return Ok(None);
                    }
                    labels = Some(chosen.into_iter().map(|i| Selector::Position(i + 1)).collect());
                }
                single(ops::fill(table, &method, labels.as_deref(), axis)?, self)
            }
            F::Aggregate => {
                let Arg::Mapping(pairs) = a.raw("functions") else {
                    return Err(bad("functions must map labels to aggregation functions"));
                };
                let functions = pairs
                    .iter()
                    .map(|(label, f)| {
                        AggFunc::parse(f)
                            .map(|agg| (Selector::Name(label.clone()), agg))
                            .ok_or_else(|| bad(format!("unknown aggregation function {f:?}")))
                    })
                    .collect::<Result2<Vec<_>>>()?;
                single(ops::aggregate(t.unwrap(), &functions, a.axis()?)?, self)
            }
            F::Test => {
                let strategy = a.text("strategy")?;
                if strategy != "t-test" {
                    return Err(bad(format!("unknown test strategy {strategy:?}")));
                }
                let r = ops::test(&inputs[0].1, &a.sel("label_a")?, &inputs[1].1, &a.sel("label_b")?, a.axis()?)?;
                self.env.insert("statistic".into(), r.statistic);
                self.env.insert("p_value".into(), r.p_value);
                Ok(Some(Vec::new()))
            }
            F::Count => {
                let out = ops::count(t.unwrap(), &a.sel("label")?, &scalar_cell(a.raw("value")), a.axis()?)?;
                if let Some(n) = out.rows()[0][0].as_f64() {
                    self.env.insert("count".into(), n);
                }
                Ok(Some(vec![self.write(&format!("{base}_count"), out)]))
            }
            F::Concatenate => {
                let out = ops::concatenate(
                    t.unwrap(),
                    &a.sel("label_a")?,
                    &a.sel("label_b")?,
                    &a.text("glue")?,
                    &a.text("new_label")?,
                    a.axis()?,
                )?;
                single(out, self)
            }
            F::Split => {
                let labels = a.raw("new_label_list").as_labels().ok_or_else(|| bad("new_label_list must list labels"))?;
                let out = ops::split(t.unwrap(), &a.sel("label")?, &a.text("delimiter")?, &labels, a.axis()?)?;
                single(out, self)
            }
            F::Format => {
                let pattern = a.text("pattern")?;
                let re = Regex::new(&pattern).map_err(|e| bad(format!("invalid pattern {pattern:?}: {e}")))?;
                let out = ops::format(t.unwrap(), &a.sel("label")?, &re, &a.text("replace_with")?, a.axis()?)?;
                single(out, self)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_program;

    fn store() -> VersionedStore {
        let mut s = VersionedStore::new();
        s.store_version(
            "t",
            Table::from_strs("t.csv", &["id", "v", "w"], &[&["1", "", ""], &["2", "5", ""], &["3", "7", "8"]])
                .unwrap(),
        );
        s
    }

    fn run(doc: &str, s: &mut VersionedStore) -> Result<(Vec<Effect>, ScalarEnv), ExecError> {
        run_program(&parse_program(doc).unwrap(), s)
    }

    #[test]
    fn empty_program() {
        let mut s = store();
        let (effects, env) = run(r#"{"required_tables":[],"program":[]}"#, &mut s).unwrap();
        assert!(effects.is_empty() && env.is_empty());
        assert_eq!(s, store());
    }

    #[test]
    fn per_item_drop() {
        let mut s = store();
        let (effects, _) = run(
            r#"{"required_tables":["t.csv"],"program":[{"function":"drop","table":"t.csv","label":null,"axis":0,"condition":"missing_ratio > 0.5"}]}"#,
            &mut s,
        )
        .unwrap();
        assert_eq!(effects[0].inputs, vec!["t_v0.csv"]);
        assert_eq!(effects[0].outputs, vec!["t_v1.csv"]);
        assert_eq!(s.fetch("t_v1.csv").unwrap().nrows(), 2);
    }

    #[test]
    fn false_condition_skips() {
        let mut s = store();
        let (effects, _) = run(
            r#"{"required_tables":["t.csv"],"program":[{"function":"drop","table":"t.csv","label":null,"axis":0,"condition":"missing_ratio > 0.9"}]}"#,
            &mut s,
        )
        .unwrap();
        assert!(effects[0].skipped && effects[0].outputs.is_empty());
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn fault_keeps_earlier_versions() {
        let mut s = store();
        let err = run(
            r#"{"required_tables":["t.csv"],"program":[
                {"function":"transpose","table":"t.csv"},
                {"function":"drop","table":"t.csv","label":"absent","axis":1}]}"#,
            &mut s,
        )
        .unwrap_err();
        assert_eq!(err.call_index, 1);
        assert_eq!(err.completed.len(), 1);
        assert!(s.fetch("t_v1.csv").is_some());
    }

    #[test]
    fn delete_then_read_fails() {
        let mut s = store();
        let err = run(
            r#"{"required_tables":["t.csv"],"program":[
                {"function":"delete_table","table_name":"t.csv"},
                {"function":"transpose","table":"t.csv"}]}"#,
            &mut s,
        )
        .unwrap_err();
        assert_eq!(err.call_index, 1);
        assert!(matches!(err.kind, ExecErrorKind::DeletedTable(_)));
        assert_eq!(err.completed[0].inputs, vec!["t_v0.csv"]);
        assert!(err.completed[0].outputs.is_empty());
    }

    #[test]
    fn pinned_inputs() {
        let mut s = store();
        let doc = r#"{"required_tables":["t.csv"],"program":[{"function":"drop","table":"t.csv","label":"w","axis":1}]}"#;
        let p = parse_program(doc).unwrap();
        let pins = BTreeMap::from([("t".to_string(), 0)]);
        run_program_with(&p, &mut s, &pins).unwrap();
        let (effects, _) = run_program_with(&p, &mut s, &pins).unwrap();
        assert_eq!(effects[0].inputs, vec!["t_v0.csv"]);
        assert_eq!(effects[0].outputs, vec!["t_v2.csv"]);
    }

    #[test]
    fn test_then_conditional_drop() {
        let mut s = store();
        let (effects, env) = run(
            r#"{"required_tables":["t.csv"],"program":[
                {"function":"test","table_a":"t.csv","label_a":"id","table_b":"t.csv","label_b":"v","strategy":"t-test","axis":1},
                {"function":"drop","table":"t.csv","label":"w","axis":1,"condition":"p_value < 0.05"}]}"#,
            &mut s,
        )
        .unwrap();
        assert!(env.contains_key("statistic"));
        assert_eq!(effects[1].skipped, env["p_value"] >= 0.05);
    }
}
