//! Naive reference semantics for every DSL function.
//!
//! Nothing here calls into the interpreter or the table helpers: cells are
//! typed, rendered, compared and aggregated by the straightforward loops
//! below, and names are resolved against a plain header vector.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use regex::Regex;
use statrs::distribution::{ContinuousCDF, StudentsT};
use wrangle_core::{Arg, CellValue, DslCall, DslFunction, Table};

use crate::gen::Cond;

/// A header and its rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub header: Vec<String>,
    pub rows: Vec<Vec<CellValue>>,
}

impl Grid {
    pub fn from_table(t: &Table) -> Grid {
        Grid { header: t.columns().to_vec(), rows: t.rows().to_vec() }
    }

    fn ncols(&self) -> usize {
        self.header.len()
    }

    fn nrows(&self) -> usize {
        self.rows.len()
    }

    fn column(&self, j: usize) -> Vec<CellValue> {
        let mut out = Vec::new();
        for r in &self.rows {
            out.push(r[j].clone());
        }
        out
    }
}

/// Failure marker; the reason is only for debugging mismatches.
#[derive(Debug, Clone, PartialEq)]
pub struct Fault(pub String);

type R<T> = Result<T, Fault>;

fn fault<T>(msg: impl Into<String>) -> R<T> {
    Err(Fault(msg.into()))
}

/// What one call did.
#[derive(Debug, Clone, PartialEq)]
pub struct CallOutcome {
    pub outputs: Vec<(String, Grid)>,
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Outcome {
    pub calls: Vec<CallOutcome>,
    pub env: BTreeMap<String, f64>,
}

// ---- cells ----------------------------------------------------------------

pub fn render(c: &CellValue) -> String {
    match c {
        CellValue::Null => String::new(),
        CellValue::Int(i) => format!("{i}"),
        CellValue::Float(f) => format!("{f:?}"),
        CellValue::Bool(true) => "true".into(),
        CellValue::Bool(false) => "false".into(),
        CellValue::Text(s) => s.clone(),
    }
}

/// The ingest typing cascade.
pub fn typed(tok: &str) -> CellValue {
    if ["", "N/A", "NA", "null", "NULL"].contains(&tok) {
        return CellValue::Null;
    }
    let number = Regex::new(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$").expect("static pattern");
    if number.is_match(tok) {
        let unsigned = tok.trim_start_matches(['+', '-']);
        let int_part: String = unsigned.chars().take_while(|c| c.is_ascii_digit()).collect();
        let redundant_zero = int_part.len() > 1 && int_part.starts_with('0');
        if !redundant_zero {
            if let Ok(i) = tok.parse::<i64>() {
                return CellValue::Int(i);
            }
            if let Ok(f) = tok.parse::<f64>() {
                if f.is_finite() {
                    return CellValue::Float(f);
                }
            }
        }
    }
    match tok.to_ascii_lowercase().as_str() {
        "true" => CellValue::Bool(true),
        "false" => CellValue::Bool(false),
        _ => CellValue::Text(tok.to_string()),
    }
}

fn num(c: &CellValue) -> Option<f64> {
    match c {
        CellValue::Int(i) => Some(*i as f64),
        CellValue::Float(f) => Some(*f),
        _ => None,
    }
}

fn rank(c: &CellValue) -> u8 {
    match c {
        CellValue::Int(_) | CellValue::Float(_) => 0,
        CellValue::Bool(_) => 1,
        CellValue::Text(_) => 2,
        CellValue::Null => 3,
    }
}

/// Numbers, then booleans, then case-folded text, then nulls.
pub fn compare(a: &CellValue, b: &CellValue) -> Ordering {
    if rank(a) != rank(b) {
        return rank(a).cmp(&rank(b));
    }
    match (a, b) {
        (CellValue::Bool(x), CellValue::Bool(y)) => (*x as u8).cmp(&(*y as u8)),
        (CellValue::Text(x), CellValue::Text(y)) => x.to_lowercase().cmp(&y.to_lowercase()),
        (CellValue::Null, CellValue::Null) => Ordering::Equal,
        _ => {
            let (x, y) = (num(a).unwrap(), num(b).unwrap());
            if x < y {
                Ordering::Less
            } else if x > y {
                Ordering::Greater
            } else {
                Ordering::Equal
            }
        }
    }
}

/// Stable insertion sort of positions by `keys`.
fn sorted_positions(keys: &[CellValue]) -> Vec<usize> {
    let mut order: Vec<usize> = Vec::new();
    for i in 0..keys.len() {
        let mut at = order.len();
        while at > 0 && compare(&keys[order[at - 1]], &keys[i]) == Ordering::Greater {
            at -= 1;
        }
        order.insert(at, i);
    }
    order
}

fn null_count(cells: &[CellValue]) -> usize {
    let mut n = 0;
    for c in cells {
        if *c == CellValue::Null {
            n += 1;
        }
    }
    n
}

fn ratio(cells: &[CellValue]) -> f64 {
    if cells.is_empty() {
        0.0
    } else {
        null_count(cells) as f64 / cells.len() as f64
    }
}

fn has_duplicates(names: &[String]) -> bool {
    for i in 0..names.len() {
        for j in 0..i {
            if names[i] == names[j] {
                return true;
            }
        }
    }
    false
}

fn checked(header: Vec<String>, rows: Vec<Vec<CellValue>>) -> R<Grid> {
    if has_duplicates(&header) {
        return fault("duplicate column");
    }
    Ok(Grid { header, rows })
}

// ---- aggregation ----------------------------------------------------------

fn agg_known(f: &str) -> bool {
    ["mean", "sum", "min", "max", "count", "median"].contains(&f)
}

fn aggregate_of(f: &str, cells: &[CellValue]) -> R<CellValue> {
    let mut present = Vec::new();
    for c in cells {
        if *c != CellValue::Null {
            present.push(c.clone());
        }
    }
    if f == "count" {
        return Ok(CellValue::Int(present.len() as i64));
    }
    if present.is_empty() {
        return Ok(CellValue::Null);
    }
    let all_numeric = present.iter().all(|c| num(c).is_some());
    match f {
        "mean" => {
            if !all_numeric {
                return fault("mean of non-numeric");
            }
            let mut s = 0.0;
            for c in &present {
                s += num(c).unwrap();
            }
            Ok(CellValue::Float(s / present.len() as f64))
        }
        "sum" => {
            if !all_numeric {
                return fault("sum of non-numeric");
            }
            let mut total: Option<i64> = Some(0);
            for c in &present {
                total = match (total, c) {
                    (Some(t), CellValue::Int(i)) => t.checked_add(*i),
                    _ => None,
                };
            }
            if let Some(t) = total {
                return Ok(CellValue::Int(t));
            }
            let mut s = 0.0;
            for c in &present {
                s += num(c).unwrap();
            }
            Ok(CellValue::Float(s))
        }
        "median" => {
            if !all_numeric {
                return fault("median of non-numeric");
            }
            let order = sorted_positions(&present);
            let n = order.len();
            if n % 2 == 1 {
                Ok(present[order[n / 2]].clone())
            } else {
                let lo = num(&present[order[n / 2 - 1]]).unwrap();
                let hi = num(&present[order[n / 2]]).unwrap();
                Ok(CellValue::Float((lo + hi) / 2.0))
            }
        }
        "min" | "max" => {
            let want = if f == "min" { Ordering::Less } else { Ordering::Greater };
            let mut best = present[0].clone();
            for c in &present[1..] {
                if compare(c, &best) == want {
                    best = c.clone();
                }
            }
            Ok(best)
        }
        _ => fault("unknown aggregation"),
    }
}

// ---- argument reading -----------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Sel {
    Name(String),
    Pos(usize),
}

fn number_text(n: f64) -> String {
    if n.fract() == 0.0 && n.abs() < 1e15 {
        format!("{}", n as i64)
    } else {
        format!("{n}")
    }
}

fn arg_text(a: &Arg) -> Option<String> {
    match a {
        Arg::Label(s) | Arg::TableName(s) => Some(s.clone()),
        Arg::Number(n) => Some(number_text(*n)),
        _ => None,
    }
}

fn sel(a: &Arg) -> R<Sel> {
    match a {
        Arg::Number(n) if n.fract() == 0.0 && *n >= 1.0 => Ok(Sel::Pos(*n as usize)),
        Arg::Number(_) | Arg::Label(_) => Ok(Sel::Name(arg_text(a).unwrap())),
        _ => fault("not a selector"),
    }
}

fn sels(a: &Arg) -> R<Vec<Sel>> {
    match a {
        Arg::LabelList(v) => Ok(v.iter().map(|s| Sel::Name(s.clone())).collect()),
        _ => Ok(vec![sel(a)?]),
    }
}

fn opt_sels(a: &Arg) -> R<Option<Vec<Sel>>> {
    if *a == Arg::Null {
        Ok(None)
    } else {
        sels(a).map(Some)
    }
}

fn labels_of(a: &Arg) -> Option<Vec<String>> {
    match a {
        Arg::LabelList(v) => Some(v.clone()),
        Arg::Label(_) | Arg::Number(_) => arg_text(a).map(|s| vec![s]),
        _ => None,
    }
}

fn text(a: &Arg) -> R<String> {
    arg_text(a).map_or_else(|| fault("not text"), Ok)
}

fn rows_axis(call: &DslCall) -> R<bool> {
    match call.arg("axis") {
        Arg::Axis(a) => Ok(a.as_number() == 0),
        _ => fault("bad axis"),
    }
}

fn scalar(a: &Arg) -> CellValue {
    match a {
        Arg::Number(n) if n.fract() == 0.0 && n.abs() < 9e15 => CellValue::Int(*n as i64),
        Arg::Number(n) => CellValue::Float(*n),
        Arg::Label(s) => typed(s),
        _ => CellValue::Null,
    }
}

// ---- resolution -----------------------------------------------------------

fn parse_pos(s: &str) -> Option<usize> {
    s.trim().parse::<usize>().ok()
}

fn col_of(g: &Grid, s: &Sel) -> R<usize> {
    match s {
        Sel::Name(n) => {
            for (j, h) in g.header.iter().enumerate() {
                if h == n {
                    return Ok(j);
                }
            }
            match parse_pos(n) {
                Some(p) if p >= 1 && p <= g.ncols() => Ok(p - 1),
                _ => fault(format!("no column {n}")),
            }
        }
        Sel::Pos(p) if *p >= 1 && *p <= g.ncols() => Ok(p - 1),
        Sel::Pos(p) => fault(format!("no column {p}")),
    }
}

fn row_of(g: &Grid, s: &Sel) -> R<usize> {
    let p = match s {
        Sel::Pos(p) => Some(*p),
        Sel::Name(n) => parse_pos(n),
    };
    match p {
        Some(p) if p >= 1 && p <= g.nrows() => Ok(p - 1),
        _ => fault("no row"),
    }
}

fn item_of(g: &Grid, s: &Sel, rows: bool) -> R<usize> {
    if rows {
        row_of(g, s)
    } else {
        col_of(g, s)
    }
}

fn item_count(g: &Grid, rows: bool) -> usize {
    if rows {
        g.nrows()
    } else {
        g.ncols()
    }
}

fn item(g: &Grid, i: usize, rows: bool) -> Vec<CellValue> {
    if rows {
        g.rows[i].clone()
    } else {
        g.column(i)
    }
}

// ---- store ----------------------------------------------------------------

/// Versioned tables by base, plus the bases deleted during the run.
#[derive(Debug, Clone, Default)]
pub struct Store {
    versions: BTreeMap<String, Vec<Grid>>,
    deleted: BTreeSet<String>,
}

impl Store {
    pub fn new(tables: &[Table]) -> Store {
        let mut s = Store::default();
        for t in tables {
            s.versions.entry(t.stem().to_string()).or_default().push(Grid::from_table(t));
        }
        s
    }

    fn read(&self, name: &str) -> R<(String, String, Grid)> {
        let base = name.strip_suffix(".csv").unwrap_or(name).to_string();
        if self.deleted.contains(&base) {
            return fault("deleted");
        }
        match self.versions.get(&base) {
            Some(v) => {
                let k = v.len() - 1;
                Ok((base.clone(), format!("{base}_v{k}.csv"), v[k].clone()))
            }
            None => fault(format!("no table {name}")),
        }
    }

    fn write(&mut self, base: &str, g: Grid) -> (String, Grid) {
        self.deleted.remove(base);
        let v = self.versions.entry(base.to_string()).or_default();
        v.push(g.clone());
        (format!("{base}_v{}.csv", v.len() - 1), g)
    }
}

// ---- running --------------------------------------------------------------

/// Runs `calls` in order; any fault fails the whole run.
pub fn run(store: &mut Store, calls: &[(DslCall, Option<Cond>)]) -> R<Outcome> {
    let mut out = Outcome::default();
    for (call, cond) in calls {
        let co = run_call(store, call, cond.as_ref(), &mut out.env)?;
        out.calls.push(co);
    }
    Ok(out)
}

fn table_params(f: DslFunction) -> &'static [&'static str] {
    use DslFunction as F;
    match f {
        F::CreateTable => &[],
        F::DeleteTable => &["table_name"],
        F::Merge | F::Swap | F::Test => &["table_a", "table_b"],
        F::Move | F::Copy => &["origin_table", "target_table"],
        _ => &["table"],
    }
}

fn run_call(
    store: &mut Store,
    call: &DslCall,
    cond: Option<&Cond>,
    env: &mut BTreeMap<String, f64>,
) -> R<CallOutcome> {
    let mut inputs = Vec::new();
    for p in table_params(call.function) {
        match call.arg(p) {
            Arg::TableName(n) => inputs.push(store.read(n)?),
            _ => return fault("table expected"),
        }
    }
    let per_item = matches!(cond, Some(c) if c.per_item());
    if let Some(c) = cond {
        if !per_item && !c.holds(None) {
            return Ok(CallOutcome { outputs: vec![], skipped: true });
        }
    }
    let written = apply(store, call, if per_item { cond } else { None }, &inputs, env)?;
    match written {
        Some(outputs) => Ok(CallOutcome { outputs, skipped: false }),
        None => Ok(CallOutcome { outputs: vec![], skipped: true }),
    }
}

type Written = Option<Vec<(String, Grid)>>;

fn apply(
    store: &mut Store,
    call: &DslCall,
    cond: Option<&Cond>,
    inputs: &[(String, String, Grid)],
    env: &mut BTreeMap<String, f64>,
) -> R<Written> {
    use DslFunction as F;
    let a = |n: &str| call.arg(n);
    let base = inputs.first().map(|i| i.0.clone()).unwrap_or_default();
    let g = inputs.first().map(|i| i.2.clone());
    let one = |store: &mut Store, grid: Grid| -> R<Written> { Ok(Some(vec![store.write(&base, grid)])) };
    match call.function {
        F::CreateTable => {
            let dim = |n: &str| match a(n) {
                Arg::Number(x) if x.fract() == 0.0 && *x >= 0.0 => Ok(*x as usize),
                _ => fault("bad dimension"),
            };
            let (r, c) = (dim("row_number")?, dim("column_number")?);
            let header = (1..=c).map(|i| format!("Column{i}")).collect();
            let rows = vec![vec![CellValue::Null; c]; r];
            Ok(Some(vec![store.write("new_table", Grid { header, rows })]))
        }
        F::DeleteTable => {
            store.deleted.insert(base);
            Ok(Some(vec![]))
        }
        F::PivotTable => {
            let f = text(a("aggfunc"))?;
            if !agg_known(&f) {
                return fault("unknown aggfunc");
            }
            let out = pivot(&g.unwrap(), &sel(a("index"))?, &sel(a("columns"))?, &sel(a("values"))?, &f)?;
            one(store, out)
        }
        F::Merge => {
            let how = match a("how") {
                Arg::Null => "outer".to_string(),
                other => arg_text(other).unwrap_or_default(),
            };
            if !["outer", "inner", "left", "right"].contains(&how.as_str()) {
                return fault("unknown join");
            }
            let on = match a("on") {
                Arg::Null => None,
                other => Some(labels_of(other).map_or_else(|| fault("bad on"), Ok)?),
            };
            let out = merge(&inputs[0].2, &inputs[1].2, &how, on)?;
            Ok(Some(vec![store.write("merged", out)]))
        }
        F::Subtable => {
            let out = subtable(&g.unwrap(), &sels(a("labels"))?, rows_axis(call)?)?;
            one(store, out)
        }
        F::Transpose => one(store, transpose(&g.unwrap())?),
        F::Insert => {
            let name = match a("index_name") {
                Arg::Null => None,
                other => arg_text(other),
            };
            let out = insert(&g.unwrap(), &sel(a("index"))?, name, rows_axis(call)?)?;
            one(store, out)
        }
        F::Drop => {
            let rows = rows_axis(call)?;
            let g = g.unwrap();
            let labels = opt_sels(a("label"))?;
            let targets: Vec<usize> = match cond {
                Some(c) => {
                    let candidates = match &labels {
                        Some(ls) => ls.iter().map(|l| item_of(&g, l, rows)).collect::<R<Vec<_>>>()?,
                        None => (0..item_count(&g, rows)).collect(),
                    };
                    let chosen: Vec<usize> =
                        candidates.into_iter().filter(|&i| c.holds(Some(ratio(&item(&g, i, rows))))).collect();
                    if chosen.is_empty() {
                        return Ok(None);
                    }
                    chosen
                }
                None => match labels {
                    Some(ls) => ls.iter().map(|l| item_of(&g, l, rows)).collect::<R<Vec<_>>>()?,
                    None => return fault("drop needs labels"),
                },
            };
            one(store, drop_items(&g, &targets, rows))
        }
        F::Assign => {
            let values = match a("values") {
                Arg::ValueGrid(v) => v
                    .iter()
                    .map(|r| r.iter().map(|c| if let CellValue::Text(s) = c { typed(s) } else { c.clone() }).collect())
                    .collect(),
                Arg::Number(_) | Arg::Label(_) => vec![vec![scalar(a("values"))]],
                _ => return fault("bad values"),
            };
            let g = g.unwrap();
            let r1 = row_of(&g, &sel(a("start_row_index"))?)?;
            let r2 = row_of(&g, &sel(a("end_row_index"))?)?;
            let c1 = col_of(&g, &sel(a("start_column_index"))?)?;
            let c2 = col_of(&g, &sel(a("end_column_index"))?)?;
            one(store, assign(&g, r1, r2, c1, c2, &values)?)
        }
        F::Move | F::Swap | F::Copy => {
            let (ob, _, og) = &inputs[0];
            let (tb, _, tg) = &inputs[1];
            let same = ob == tb;
            let rows = rows_axis(call)?;
            match call.function {
                F::Move => {
                    let (no, nt) = move_item(og, &sel(a("origin_index"))?, if same { None } else { Some(tg) }, &sel(a("target_index"))?, rows)?;
                    let mut outs = vec![store.write(ob, no)];
                    if let Some(nt) = nt {
                        outs.push(store.write(tb, nt));
                    }
                    Ok(Some(outs))
                }
                F::Swap => {
                    let (na, nb) = swap(og, &sel(a("label_a"))?, if same { None } else { Some(tg) }, &sel(a("label_b"))?, rows)?;
                    let mut outs = vec![store.write(ob, na)];
                    if let Some(nb) = nb {
                        outs.push(store.write(tb, nb));
                    }
                    Ok(Some(outs))
                }
                _ => {
                    let target = if same { og } else { tg };
                    let out = copy(og, &sel(a("origin_label"))?, target, &sel(a("target_label"))?, rows)?;
                    Ok(Some(vec![store.write(tb, out)]))
                }
            }
        }
        F::Rearrange => {
            let by_values = match a("by_values") {
                Arg::Null => None,
                other => Some(sel(other)?),
            };
            let by_array = opt_sels(a("by_array"))?;
            one(store, rearrange(&g.unwrap(), by_values, by_array, rows_axis(call)?)?)
        }
        F::Divide => {
            let by = sel(a("by"))?;
            let children = divide(&g.unwrap(), &by, rows_axis(call)?)?;
            let mut used: Vec<String> = Vec::new();
            let mut outs = Vec::new();
            for (key, child) in children {
                let stem = format!("{base}_{}", sanitize(&key));
                let mut name = stem.clone();
                let mut k = 2;
                while used.contains(&name) {
                    name = format!("{stem}_{k}");
                    k += 1;
                }
                used.push(name.clone());
                outs.push(store.write(&name, child));
            }
            Ok(Some(outs))
        }
        F::Fill => {
            let method = text(a("method"))?;
            let known = ["mean", "median", "mode", "ffill", "bfill"].contains(&method.as_str());
            if !known && !method.starts_with("value:") {
                return fault("unknown fill method");
            }
            let rows = rows_axis(call)?;
            let g = g.unwrap();
            let labels = opt_sels(a("labels"))?;
            let mut items: Vec<usize> = match &labels {
                Some(ls) => ls.iter().map(|l| item_of(&g, l, rows)).collect::<R<Vec<_>>>()?,
                None => (0..item_count(&g, rows)).collect(),
            };
            if let Some(c) = cond {
                items.retain(|&i| c.holds(Some(ratio(&item(&g, i, rows)))));
                if items.is_empty() {
                    return Ok(None);
                }
            }
            one(store, fill(&g, &method, &items, rows)?)
        }
        F::Aggregate => {
            let Arg::Mapping(pairs) = a("functions") else {
                return fault("bad mapping");
            };
            for (_, f) in pairs {
                if !agg_known(f) {
                    return fault("unknown aggregation");
                }
            }
            let rows = rows_axis(call)?;
            let g = g.unwrap();
            let mut header = Vec::new();
            let mut row = Vec::new();
            for (label, f) in pairs {
                let i = item_of(&g, &Sel::Name(label.clone()), rows)?;
                header.push(if rows { label.clone() } else { g.header[i].clone() });
                row.push(aggregate_of(f, &item(&g, i, rows))?);
            }
            one(store, checked(header, vec![row])?)
        }
        F::Test => {
            if text(a("strategy"))? != "t-test" {
                return fault("unknown strategy");
            }
            let rows = rows_axis(call)?;
            let xa = numeric_item(&inputs[0].2, &sel(a("label_a"))?, rows)?;
            let xb = numeric_item(&inputs[1].2, &sel(a("label_b"))?, rows)?;
            let (t, p) = welch(&xa, &xb)?;
            env.insert("statistic".into(), t);
            env.insert("p_value".into(), p);
            Ok(Some(vec![]))
        }
        F::Count => {
            let g = g.unwrap();
            let rows = rows_axis(call)?;
            let i = item_of(&g, &sel(a("label"))?, rows)?;
            let v = scalar(a("value"));
            let mut n = 0i64;
            for c in item(&g, i, rows) {
                let hit = match (num(&c), num(&v)) {
                    (Some(x), Some(y)) => x == y,
                    _ => c == v,
                };
                if hit {
                    n += 1;
                }
            }
            env.insert("count".into(), n as f64);
            let out = Grid { header: vec!["count".into()], rows: vec![vec![CellValue::Int(n)]] };
            Ok(Some(vec![store.write(&format!("{base}_count"), out)]))
        }
        F::Concatenate => {
            let g = g.unwrap();
            let rows = rows_axis(call)?;
            let ia = item_of(&g, &sel(a("label_a"))?, rows)?;
            let ib = item_of(&g, &sel(a("label_b"))?, rows)?;
            let glue = text(a("glue"))?;
            let new_label = text(a("new_label"))?;
            let (va, vb) = (item(&g, ia, rows), item(&g, ib, rows));
            let mut joined = Vec::new();
            for k in 0..va.len() {
                joined.push(typed(&format!("{}{}{}", render(&va[k]), glue, render(&vb[k]))));
            }
            one(store, append(&g, vec![(new_label, joined)], rows)?)
        }
        F::Split => {
            let labels = labels_of(a("new_label_list")).map_or_else(|| fault("bad labels"), Ok)?;
            let g = g.unwrap();
            let s = sel(a("label"))?;
            let delim = text(a("delimiter"))?;
            let rows = rows_axis(call)?;
            if delim.is_empty() || labels.len() < 2 {
                return fault("bad split");
            }
            let i = item_of(&g, &s, rows)?;
            let k = labels.len();
            let mut parts: Vec<Vec<CellValue>> = vec![Vec::new(); k];
            for c in item(&g, i, rows) {
                let pieces = split_parts(&c, &delim, k);
                for (slot, piece) in parts.iter_mut().zip(pieces) {
                    slot.push(typed(&piece));
                }
            }
            one(store, append(&g, labels.into_iter().zip(parts).collect(), rows)?)
        }
        F::Format => {
            let pattern = text(a("pattern"))?;
            let re = Regex::new(&pattern).map_err(|e| Fault(e.to_string()))?;
            let g = g.unwrap();
            let rows = rows_axis(call)?;
            let i = item_of(&g, &sel(a("label"))?, rows)?;
            let with = text(a("replace_with"))?;
            let mut out = g.clone();
            let n = if rows { g.ncols() } else { g.nrows() };
            for k in 0..n {
                let cell = if rows { &mut out.rows[i][k] } else { &mut out.rows[k][i] };
                if *cell == CellValue::Null {
                    continue;
                }
                *cell = typed(&substitute(&re, &render(cell), &with));
            }
            one(store, out)
        }
    }
}

// ---- per-function references ----------------------------------------------

fn pivot(g: &Grid, index: &Sel, columns: &Sel, values: &Sel, f: &str) -> R<Grid> {
    let (ic, cc, vc) = (col_of(g, index)?, col_of(g, columns)?, col_of(g, values)?);
    let mut keys: Vec<CellValue> = Vec::new();
    let mut heads: Vec<CellValue> = Vec::new();
    for r in &g.rows {
        if r[ic] == CellValue::Null || r[cc] == CellValue::Null {
            continue;
        }
        if !keys.contains(&r[ic]) {
            keys.push(r[ic].clone());
        }
        if !heads.contains(&r[cc]) {
            heads.push(r[cc].clone());
        }
    }
    let mut header = vec![g.header[ic].clone()];
    for h in &heads {
        header.push(render(h));
    }
    let mut rows = Vec::new();
    for k in &keys {
        let mut row = vec![k.clone()];
        for h in &heads {
            let mut cells = Vec::new();
            for r in &g.rows {
                if r[ic] == *k && r[cc] == *h {
                    cells.push(r[vc].clone());
                }
            }
            row.push(if cells.is_empty() { CellValue::Null } else { aggregate_of(f, &cells)? });
        }
        rows.push(row);
    }
    checked(header, rows)
}

fn find(header: &[String], name: &str) -> Option<usize> {
    header.iter().position(|h| h == name)
}

fn merge(a: &Grid, b: &Grid, how: &str, on: Option<Vec<String>>) -> R<Grid> {
    let keys = match on {
        Some(k) => k,
        None => a.header.iter().filter(|h| find(&b.header, h).is_some()).cloned().collect(),
    };
    if keys.is_empty() {
        return fault("no keys");
    }
    let mut ka = Vec::new();
    let mut kb = Vec::new();
    for k in &keys {
        ka.push(find(&a.header, k).map_or_else(|| fault("key missing in a"), Ok)?);
        kb.push(find(&b.header, k).map_or_else(|| fault("key missing in b"), Ok)?);
    }
    let extra: Vec<usize> = (0..b.ncols()).filter(|&j| find(&a.header, &b.header[j]).is_none()).collect();
    let mut header = a.header.clone();
    for &j in &extra {
        header.push(b.header[j].clone());
    }
    let row = |ra: Option<&Vec<CellValue>>, rb: Option<&Vec<CellValue>>| {
        let mut out = Vec::new();
        for (i, h) in a.header.iter().enumerate() {
            let va = ra.map_or(CellValue::Null, |r| r[i].clone());
            let vb = match (find(&b.header, h), rb) {
                (Some(j), Some(r)) => r[j].clone(),
                _ => CellValue::Null,
            };
            out.push(if va != CellValue::Null { va } else { vb });
        }
        for &j in &extra {
            out.push(rb.map_or(CellValue::Null, |r| r[j].clone()));
        }
        out
    };
    let same_key = |ra: &Vec<CellValue>, rb: &Vec<CellValue>| {
        (0..ka.len()).all(|k| exact_eq(&ra[ka[k]], &rb[kb[k]]))
    };
    let mut rows = Vec::new();
    let mut used = vec![false; b.nrows()];
    for ra in &a.rows {
        let mut hit = false;
        for (j, rb) in b.rows.iter().enumerate() {
            if same_key(ra, rb) {
                hit = true;
                used[j] = true;
                rows.push(row(Some(ra), Some(rb)));
            }
        }
        if !hit && (how == "outer" || how == "left") {
            rows.push(row(Some(ra), None));
        }
    }
    if how == "outer" || how == "right" {
        for (j, rb) in b.rows.iter().enumerate() {
            if !used[j] {
                rows.push(row(None, Some(rb)));
            }
        }
    }
    checked(header, rows)
}

/// Type-exact key equality: `Int(1)` and `Float(1.0)` do not join.
fn exact_eq(x: &CellValue, y: &CellValue) -> bool {
    match (x, y) {
        (CellValue::Float(p), CellValue::Float(q)) => p.to_bits() == q.to_bits(),
        _ => x == y,
    }
}

fn subtable(g: &Grid, labels: &[Sel], rows: bool) -> R<Grid> {
    let mut idx = Vec::new();
    for l in labels {
        idx.push(item_of(g, l, rows)?);
    }
    if rows {
        Ok(Grid { header: g.header.clone(), rows: idx.iter().map(|&i| g.rows[i].clone()).collect() })
    } else {
        let header = idx.iter().map(|&j| g.header[j].clone()).collect();
        let out = g.rows.iter().map(|r| idx.iter().map(|&j| r[j].clone()).collect()).collect();
        checked(header, out)
    }
}

fn generated_header(n: usize) -> Vec<String> {
    let mut h = vec!["index".to_string()];
    for i in 1..=n {
        h.push(i.to_string());
    }
    h
}

fn transpose(g: &Grid) -> R<Grid> {
    if g.ncols() >= 1 && g.header == generated_header(g.ncols() - 1) {
        let header: Vec<String> = g.rows.iter().map(|r| render(&r[0])).collect();
        if header.iter().all(|h| !h.is_empty()) && !has_duplicates(&header) {
            let mut rows = Vec::new();
            for j in 1..g.ncols() {
                rows.push(g.column(j));
            }
            return Ok(Grid { header, rows });
        }
    }
    let mut rows = Vec::new();
    for (j, h) in g.header.iter().enumerate() {
        let t = typed(h);
        let head = if t != CellValue::Null && render(&t) == *h { t } else { CellValue::Text(h.clone()) };
        let mut row = vec![head];
        row.extend(g.column(j));
        rows.push(row);
    }
    Ok(Grid { header: generated_header(g.nrows()), rows })
}

fn insert(g: &Grid, index: &Sel, name: Option<String>, rows: bool) -> R<Grid> {
    let count = item_count(g, rows);
    let p = match index {
        Sel::Pos(p) => Some(*p),
        Sel::Name(n) => match parse_pos(n) {
            Some(p) => Some(p),
            None if !rows => find(&g.header, n).map(|i| i + 1),
            None => None,
        },
    };
    let p = match p {
        Some(p) if p >= 1 && p <= count + 1 => p - 1,
        _ => return fault("insert position"),
    };
    let mut out = g.clone();
    if rows {
        out.rows.insert(p, vec![CellValue::Null; g.ncols()]);
        return Ok(out);
    }
    let label = match name {
        Some(n) => n,
        None => {
            let want = format!("Column{}", p + 1);
            let mut pick = want.clone();
            let mut k = 2;
            while g.header.contains(&pick) {
                pick = format!("{want}_{k}");
                k += 1;
            }
            pick
        }
    };
    out.header.insert(p, label);
    for r in &mut out.rows {
        r.insert(p, CellValue::Null);
    }
    checked(out.header, out.rows)
}

fn drop_items(g: &Grid, targets: &[usize], rows: bool) -> Grid {
    let mut out = Grid { header: Vec::new(), rows: Vec::new() };
    if rows {
        out.header = g.header.clone();
        for (i, r) in g.rows.iter().enumerate() {
            if !targets.contains(&i) {
                out.rows.push(r.clone());
            }
        }
    } else {
        for (j, h) in g.header.iter().enumerate() {
            if !targets.contains(&j) {
                out.header.push(h.clone());
            }
        }
        for r in &g.rows {
            let mut nr = Vec::new();
            for (j, c) in r.iter().enumerate() {
                if !targets.contains(&j) {
                    nr.push(c.clone());
                }
            }
            out.rows.push(nr);
        }
    }
    out
}

fn assign(g: &Grid, r1: usize, r2: usize, c1: usize, c2: usize, values: &[Vec<CellValue>]) -> R<Grid> {
    if r1 > r2 || c1 > c2 {
        return fault("inverted region");
    }
    let (h, w) = (r2 - r1 + 1, c2 - c1 + 1);
    let broadcast = values.len() == 1 && values[0].len() == 1;
    if !broadcast && (values.len() != h || values.iter().any(|r| r.len() != w)) {
        return fault("shape mismatch");
    }
    let mut out = g.clone();
    for i in r1..=r2 {
        for j in c1..=c2 {
            out.rows[i][j] = if broadcast { values[0][0].clone() } else { values[i - r1][j - c1].clone() };
        }
    }
    Ok(out)
}

/// Removes item `i`, returning its name (columns only) and cells.
fn lift(g: &Grid, i: usize, rows: bool) -> (Option<String>, Vec<CellValue>, Grid) {
    let mut rest = g.clone();
    if rows {
        let cells = rest.rows.remove(i);
        (None, cells, rest)
    } else {
        let name = rest.header.remove(i);
        let mut cells = Vec::new();
        for r in &mut rest.rows {
            cells.push(r.remove(i));
        }
        (Some(name), cells, rest)
    }
}

fn place(g: &mut Grid, at: usize, name: Option<String>, cells: Vec<CellValue>, rows: bool) -> R<()> {
    if rows {
        if cells.len() != g.ncols() {
            return fault("row width");
        }
        g.rows.insert(at, cells);
        return Ok(());
    }
    let name = name.unwrap();
    if g.header.contains(&name) {
        return fault("duplicate column");
    }
    if g.header.is_empty() && g.rows.is_empty() {
        g.rows = vec![Vec::new(); cells.len()];
    }
    if cells.len() != g.nrows() {
        return fault("column height");
    }
    g.header.insert(at, name);
    for (r, c) in g.rows.iter_mut().zip(cells) {
        r.insert(at, c);
    }
    Ok(())
}

fn landing(g: &Grid, s: &Sel, rows: bool) -> R<usize> {
    let count = item_count(g, rows);
    let p = match s {
        Sel::Pos(p) => Some(*p),
        Sel::Name(n) => match find(&g.header, n) {
            Some(i) if !rows => Some(i + 1),
            _ => parse_pos(n),
        },
    };
    match p {
        Some(p) if p >= 1 && p <= count + 1 => Ok(p - 1),
        _ => fault("target position"),
    }
}

fn move_item(o: &Grid, from: &Sel, t: Option<&Grid>, to: &Sel, rows: bool) -> R<(Grid, Option<Grid>)> {
    let i = item_of(o, from, rows)?;
    let (name, cells, mut rest) = lift(o, i, rows);
    match t {
        None => {
            let own_name = !rows && matches!(to, Sel::Name(n) if Some(n) == name.as_ref());
            let at = if own_name { i } else { landing(&rest, to, rows)? };
            place(&mut rest, at, name, cells, rows)?;
            Ok((rest, None))
        }
        Some(t) => {
            let mut nt = t.clone();
            let at = landing(&nt, to, rows)?;
            place(&mut nt, at, name, cells, rows)?;
            Ok((rest, Some(nt)))
        }
    }
}

fn copy(o: &Grid, from: &Sel, t: &Grid, to: &Sel, rows: bool) -> R<Grid> {
    let cells = item(o, item_of(o, from, rows)?, rows);
    let mut out = t.clone();
    if rows {
        if cells.len() != t.ncols() {
            return fault("row width");
        }
        match row_of(t, to) {
            Ok(i) => out.rows[i] = cells,
            Err(e) => {
                let p = match to {
                    Sel::Pos(p) => Some(*p),
                    Sel::Name(n) => parse_pos(n),
                };
                if p != Some(t.nrows() + 1) {
                    return Err(e);
                }
                out.rows.push(cells);
            }
        }
        return Ok(out);
    }
    if out.header.is_empty() && out.rows.is_empty() {
        out.rows = vec![Vec::new(); cells.len()];
    }
    if cells.len() != out.nrows() {
        return fault("column height");
    }
    match col_of(t, to) {
        Ok(j) => {
            for (r, c) in out.rows.iter_mut().zip(cells) {
                r[j] = c;
            }
        }
        Err(e) => {
            let Sel::Name(n) = to else { return Err(e) };
            out.header.push(n.clone());
            for (r, c) in out.rows.iter_mut().zip(cells) {
                r.push(c);
            }
        }
    }
    Ok(out)
}

fn swap(a: &Grid, la: &Sel, b: Option<&Grid>, lb: &Sel, rows: bool) -> R<(Grid, Option<Grid>)> {
    let ia = item_of(a, la, rows)?;
    let mut na = a.clone();
    match b {
        None => {
            let ib = item_of(a, lb, rows)?;
            if rows {
                na.rows.swap(ia, ib);
            } else {
                na.header.swap(ia, ib);
                for r in &mut na.rows {
                    r.swap(ia, ib);
                }
            }
            Ok((na, None))
        }
        Some(b) => {
            let ib = item_of(b, lb, rows)?;
            let mut nb = b.clone();
            if rows {
                if a.ncols() != b.ncols() {
                    return fault("widths differ");
                }
                na.rows[ia] = b.rows[ib].clone();
                nb.rows[ib] = a.rows[ia].clone();
            } else {
                if a.nrows() != b.nrows() {
                    return fault("heights differ");
                }
                na.header[ia] = b.header[ib].clone();
                nb.header[ib] = a.header[ia].clone();
                for k in 0..a.nrows() {
                    na.rows[k][ia] = b.rows[k][ib].clone();
                    nb.rows[k][ib] = a.rows[k][ia].clone();
                }
            }
            Ok((checked(na.header, na.rows)?, Some(checked(nb.header, nb.rows)?)))
        }
    }
}

fn rearrange(g: &Grid, by_values: Option<Sel>, by_array: Option<Vec<Sel>>, rows: bool) -> R<Grid> {
    let keyed = by_values.is_some();
    let order = match (by_values, by_array) {
        (Some(k), None) => sorted_positions(&item(g, item_of(g, &k, rows)?, rows)),
        (None, Some(list)) => {
            let mut idx = Vec::new();
            for l in &list {
                idx.push(item_of(g, l, rows)?);
            }
            let n = item_count(g, rows);
            let complete = idx.len() == n && (0..n).all(|i| idx.contains(&i));
            if !complete {
                return fault("not a permutation");
            }
            idx
        }
        _ => return fault("exactly one of by_values and by_array"),
    };
    // A key item orders the other dimension; an explicit array orders its own.
    let reorder_rows = keyed != rows;
    let mut out = Grid { header: Vec::new(), rows: Vec::new() };
    if reorder_rows {
        out.header = g.header.clone();
        for &i in &order {
            out.rows.push(g.rows[i].clone());
        }
    } else {
        for &j in &order {
            out.header.push(g.header[j].clone());
        }
        for r in &g.rows {
            out.rows.push(order.iter().map(|&j| r[j].clone()).collect());
        }
    }
    Ok(out)
}

fn divide(g: &Grid, by: &Sel, rows: bool) -> R<Vec<(CellValue, Grid)>> {
    let keys = item(g, item_of(g, by, rows)?, rows);
    let mut distinct: Vec<CellValue> = Vec::new();
    for k in &keys {
        if !distinct.contains(k) {
            distinct.push(k.clone());
        }
    }
    let mut out = Vec::new();
    for d in distinct {
        let members: Vec<usize> = (0..keys.len()).filter(|&i| keys[i] == d).collect();
        let child = if rows {
            Grid {
                header: members.iter().map(|&j| g.header[j].clone()).collect(),
                rows: g.rows.iter().map(|r| members.iter().map(|&j| r[j].clone()).collect()).collect(),
            }
        } else {
            Grid { header: g.header.clone(), rows: members.iter().map(|&i| g.rows[i].clone()).collect() }
        };
        out.push((d, child));
    }
    Ok(out)
}

fn sanitize(v: &CellValue) -> String {
    let s = render(v);
    if s.is_empty() {
        return "null".into();
    }
    let mut out = String::new();
    for ch in s.chars() {
        if ch.is_alphanumeric() {
            out.extend(ch.to_lowercase().take(1));
        } else {
            out.push('_');
        }
    }
    out
}

fn fill(g: &Grid, method: &str, items: &[usize], rows: bool) -> R<Grid> {
    let mut out = g.clone();
    for &i in items {
        let mut cells = item(g, i, rows);
        if null_count(&cells) > 0 {
            fill_cells(&mut cells, method)?;
        }
        for (k, c) in cells.into_iter().enumerate() {
            if rows {
                out.rows[i][k] = c;
            } else {
                out.rows[k][i] = c;
            }
        }
    }
    Ok(out)
}

fn fill_cells(cells: &mut [CellValue], method: &str) -> R<()> {
    let present: Vec<CellValue> = cells.iter().filter(|c| **c != CellValue::Null).cloned().collect();
    let replacement = match method {
        "mean" | "median" => {
            if present.is_empty() || present.iter().any(|c| num(c).is_none()) {
                return fault("fill needs numbers");
            }
            aggregate_of(method, &present)?
        }
        "mode" => {
            let mut best = CellValue::Null;
            let mut best_n = 0;
            for (i, c) in present.iter().enumerate() {
                if present[..i].contains(c) {
                    continue;
                }
                let n = present.iter().filter(|x| *x == c).count();
                if n > best_n {
                    best = c.clone();
                    best_n = n;
                }
            }
            best
        }
        "ffill" => {
            for i in 1..cells.len() {
                if cells[i] == CellValue::Null {
                    cells[i] = cells[i - 1].clone();
                }
            }
            return Ok(());
        }
        "bfill" => {
            for i in (1..cells.len()).rev() {
                if cells[i - 1] == CellValue::Null {
                    cells[i - 1] = cells[i].clone();
                }
            }
            return Ok(());
        }
        other => typed(other.strip_prefix("value:").unwrap_or_default()),
    };
    for c in cells.iter_mut() {
        if *c == CellValue::Null {
            *c = replacement.clone();
        }
    }
    Ok(())
}

fn numeric_item(g: &Grid, s: &Sel, rows: bool) -> R<Vec<f64>> {
    let mut xs = Vec::new();
    for c in item(g, item_of(g, s, rows)?, rows) {
        if c == CellValue::Null {
            continue;
        }
        match num(&c) {
            Some(x) => xs.push(x),
            None => return fault("non-numeric sample"),
        }
    }
    Ok(xs)
}

/// Welch's statistic with a p-value from an external t distribution.
pub fn welch(a: &[f64], b: &[f64]) -> R<(f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return fault("too few values");
    }
    let moments = |xs: &[f64]| {
        let n = xs.len() as f64;
        let mut s = 0.0;
        for x in xs {
            s += x;
        }
        let m = s / n;
        let mut q = 0.0;
        for x in xs {
            q += (x - m) * (x - m);
        }
        (m, q / (n - 1.0), n)
    };
    let (ma, va, na) = moments(a);
    let (mb, vb, nb) = moments(b);
    if va == 0.0 && vb == 0.0 {
        if ma == mb {
            return Ok((0.0, 1.0));
        }
        return Ok((if ma > mb { 1e308 } else { -1e308 }, 0.0));
    }
    let se2 = va / na + vb / nb;
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Fault(e.to_string()))?;
    let p = 2.0 * dist.cdf(-t.abs());
    Ok((t, p.clamp(0.0, 1.0)))
}

fn append(g: &Grid, new: Vec<(String, Vec<CellValue>)>, rows: bool) -> R<Grid> {
    let mut out = g.clone();
    for (name, cells) in new {
        if rows {
            out.rows.push(cells);
        } else {
            out.header.push(name);
            for (r, c) in out.rows.iter_mut().zip(cells) {
                r.push(c);
            }
        }
    }
    checked(out.header, out.rows)
}

fn split_parts(c: &CellValue, delim: &str, k: usize) -> Vec<String> {
    let mut parts = Vec::new();
    if *c != CellValue::Null {
        let mut rest = render(c);
        while parts.len() + 1 < k {
            match rest.find(delim) {
                Some(p) => {
                    parts.push(rest[..p].to_string());
                    rest = rest[p + delim.len()..].to_string();
                }
                None => break,
            }
        }
        parts.push(rest);
    }
    while parts.len() < k {
        parts.push(String::new());
    }
    parts
}

/// Replaces every match, expanding `$0`..`$9` and `$$` by hand.
fn substitute(re: &Regex, text: &str, with: &str) -> String {
    let mut out = String::new();
    let mut last = 0;
    for caps in re.captures_iter(text) {
        let m = caps.get(0).unwrap();
        out.push_str(&text[last..m.start()]);
        let chars: Vec<char> = with.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            if chars[i] == '$' && i + 1 < chars.len() {
                let next = chars[i + 1];
                if let Some(d) = next.to_digit(10) {
                    out.push_str(caps.get(d as usize).map_or("", |g| g.as_str()));
                    i += 2;
                    continue;
                }
                if next == '$' {
                    out.push('$');
                    i += 2;
                    continue;
                }
            }
            out.push(chars[i]);
            i += 1;
        }
        last = m.end();
    }
    out.push_str(&text[last..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn typing_cascade() {
        assert_eq!(typed("00336617"), CellValue::Text("00336617".into()));
        assert_eq!(typed("-3"), CellValue::Int(-3));
        assert_eq!(typed("2.5"), CellValue::Float(2.5));
        assert_eq!(typed("N/A"), CellValue::Null);
        assert_eq!(typed("True"), CellValue::Bool(true));
        assert_eq!(typed("inf"), CellValue::Text("inf".into()));
    }

    #[test]
    fn split_examples() {
        let c = CellValue::Text("a-b-c".into());
        assert_eq!(split_parts(&c, "-", 2), vec!["a", "b-c"]);
        assert_eq!(split_parts(&CellValue::Text("a".into()), "-", 2), vec!["a", ""]);
    }

    #[test]
    fn group_substitution() {
        let re = Regex::new(r"(\d{4})-(\d{2})").unwrap();
        assert_eq!(substitute(&re, "2024-05", "$2/$1"), "05/2024");
    }

    #[test]
    fn welch_hand_example() {
        let (t, _) = welch(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
        assert!((t + 1.224744871391589).abs() < 1e-12);
    }
}
