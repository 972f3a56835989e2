//! Random tables and random calls for every DSL function.
//!
//! Tables are at most 6x6 with mixed cell types and about 20% nulls. Calls
//! mostly carry valid arguments but regularly reference missing labels,
//! out-of-range positions or unknown options so error paths get exercised.

use rand::seq::SliceRandom;
use rand::Rng;
use wrangle_core::dsl::signature;
use wrangle_core::{Arg, Axis, CellValue, ConditionExpr, DslCall, DslFunction, Table};

/// A condition together with its expected truth value, so the reference
/// side never needs to parse condition text.
#[derive(Debug, Clone, PartialEq)]
pub enum Cond {
    Always,
    Never,
    RatioAbove(f64),
    RatioAtLeast(f64),
    RatioBelow(f64),
}

impl Cond {
    pub fn source(&self) -> String {
        match self {
            Cond::Always => "0 < 1".into(),
            Cond::Never => "1 < 0".into(),
            Cond::RatioAbove(x) => format!("missing_ratio > {x}"),
            Cond::RatioAtLeast(x) => format!("missing_ratio >= {x}"),
            Cond::RatioBelow(x) => format!("missing_ratio < {x}"),
        }
    }

    pub fn per_item(&self) -> bool {
        !matches!(self, Cond::Always | Cond::Never)
    }

    /// Truth value for one item's missing ratio (`None` for scalar forms).
    pub fn holds(&self, ratio: Option<f64>) -> bool {
        let r = ratio.unwrap_or(0.0);
        match self {
            Cond::Always => true,
            Cond::Never => false,
            Cond::RatioAbove(x) => r > *x,
            Cond::RatioAtLeast(x) => r >= *x,
            Cond::RatioBelow(x) => r < *x,
        }
    }
}

/// Initial tables plus the calls to run against them.
#[derive(Debug, Clone)]
pub struct Case {
    pub tables: Vec<Table>,
    pub calls: Vec<(DslCall, Option<Cond>)>,
}

impl Case {
    fn single(tables: Vec<Table>, call: DslCall, cond: Option<Cond>) -> Case {
        Case { tables, calls: vec![(call, cond)] }
    }

    /// The calls with their conditions attached, as the interpreter sees them.
    pub fn dsl_calls(&self) -> Vec<DslCall> {
        self.calls
            .iter()
            .map(|(call, cond)| match cond {
                Some(c) => call.clone().with_condition(ConditionExpr::parse(&c.source()).expect("generated condition parses")),
                None => call.clone(),
            })
            .collect()
    }
}

/// Builds a call from named arguments; unnamed optional slots stay `Null`.
pub fn call(function: DslFunction, named: &[(&str, Arg)]) -> DslCall {
    let sig = signature(function);
    let args = sig
        .params
        .iter()
        .map(|p| named.iter().find(|(n, _)| *n == p.name).map_or(Arg::Null, |(_, a)| a.clone()))
        .collect();
    DslCall::new(function, args)
}

const COLUMN_NAMES: [&str; 10] = ["id", "name", "score", "grade", "city", "x", "y", "z", "2", "Full Name"];
const TEXTS: [&str; 9] = ["a", "b", "A", "B c", "a-b", "a-b-c", "x y z", "00", "7a"];
const FLOATS: [f64; 4] = [0.5, 1.5, 2.25, -1.5];

pub fn random_cell<R: Rng>(rng: &mut R) -> CellValue {
    if rng.gen_bool(0.2) {
        return CellValue::Null;
    }
    match rng.gen_range(0..4) {
        0 => CellValue::Int(rng.gen_range(-2..5)),
        1 => CellValue::Float(*FLOATS.choose(rng).unwrap()),
        2 => CellValue::Text(TEXTS.choose(rng).unwrap().to_string()),
        _ => CellValue::Bool(rng.gen()),
    }
}

fn numeric_cell<R: Rng>(rng: &mut R) -> CellValue {
    if rng.gen_bool(0.2) {
        return CellValue::Null;
    }
    if rng.gen_bool(0.5) {
        CellValue::Int(rng.gen_range(-3..6))
    } else {
        CellValue::Float(rng.gen_range(-30..60) as f64 / 8.0)
    }
}

fn names<R: Rng>(rng: &mut R, n: usize) -> Vec<String> {
    let mut pool: Vec<&str> = COLUMN_NAMES.to_vec();
    pool.shuffle(rng);
    pool[..n].iter().map(|s| s.to_string()).collect()
}

/// A random table of at most 6x6.
pub fn random_table<R: Rng>(rng: &mut R, name: &str) -> Table {
    let rows = rng.gen_range(0..=6);
    let cols = rng.gen_range(1..=6);
    table_of(rng, name, rows, cols, random_cell)
}

fn numeric_table<R: Rng>(rng: &mut R, name: &str) -> Table {
    let rows = rng.gen_range(1..=6);
    let cols = rng.gen_range(1..=4);
    table_of(rng, name, rows, cols, numeric_cell)
}

fn table_of<R: Rng>(rng: &mut R, name: &str, rows: usize, cols: usize, cell: fn(&mut R) -> CellValue) -> Table {
    let header = names(rng, cols);
    let grid = (0..rows).map(|_| (0..cols).map(|_| cell(rng)).collect()).collect();
    Table::new(name, header, grid).expect("generated table is valid")
}

/// A table already carrying the header a transpose produces.
fn transposed_shape<R: Rng>(rng: &mut R, name: &str) -> Table {
    let rows = rng.gen_range(1..=6);
    let cols = rng.gen_range(1..=5);
    let mut header = vec!["index".to_string()];
    header.extend((1..=cols).map(|i| i.to_string()));
    let labels = names(rng, rows);
    let grid = labels
        .into_iter()
        .map(|l| {
            let mut r = vec![CellValue::Text(l)];
            r.extend((0..cols).map(|_| random_cell(rng)));
            r
        })
        .collect();
    Table::new(name, header, grid).expect("generated table is valid")
}

fn tname(name: &str) -> Arg {
    Arg::TableName(name.into())
}

fn axis_arg(rows: bool) -> Arg {
    Arg::Axis(if rows { Axis::Rows } else { Axis::Columns })
}

fn pick<'a, R: Rng, T>(rng: &mut R, items: &'a [T]) -> &'a T {
    items.choose(rng).unwrap()
}

fn column_arg<R: Rng>(rng: &mut R, t: &Table) -> Arg {
    let n = t.ncols();
    match rng.gen_range(0..20) {
        0..=9 if n > 0 => Arg::Label(pick(rng, t.columns()).clone()),
        10..=13 => Arg::Number(rng.gen_range(1..=n + 1) as f64),
        14..=16 => Arg::Label(rng.gen_range(1..=n + 1).to_string()),
        _ => Arg::Label("nope".into()),
    }
}

fn row_arg<R: Rng>(rng: &mut R, t: &Table) -> Arg {
    let n = t.nrows();
    match rng.gen_range(0..10) {
        0..=5 => Arg::Number(rng.gen_range(1..=n + 1) as f64),
        6..=8 => Arg::Label(rng.gen_range(1..=n + 1).to_string()),
        _ => Arg::Label("first".into()),
    }
}

fn item_arg<R: Rng>(rng: &mut R, t: &Table, rows: bool) -> Arg {
    if rows {
        row_arg(rng, t)
    } else {
        column_arg(rng, t)
    }
}

fn label_text(a: &Arg) -> String {
    match a {
        Arg::Label(s) => s.clone(),
        Arg::Number(n) => (*n as usize).to_string(),
        _ => String::new(),
    }
}

fn item_list<R: Rng>(rng: &mut R, t: &Table, rows: bool) -> Arg {
    let k = rng.gen_range(1..=3);
    Arg::LabelList((0..k).map(|_| label_text(&item_arg(rng, t, rows))).collect())
}

fn items_arg<R: Rng>(rng: &mut R, t: &Table, rows: bool) -> Arg {
    if rng.gen_bool(0.5) {
        item_list(rng, t, rows)
    } else {
        item_arg(rng, t, rows)
    }
}

fn scalar_cond<R: Rng>(rng: &mut R) -> Option<Cond> {
    match rng.gen_range(0..20) {
        0 | 1 => Some(Cond::Always),
        2 => Some(Cond::Never),
        _ => None,
    }
}

fn ratio_cond<R: Rng>(rng: &mut R) -> Option<Cond> {
    let x = *pick(rng, &[0.0, 0.2, 0.3, 0.5, 0.75]);
    match rng.gen_range(0..10) {
        0..=3 => Some(Cond::RatioAbove(x)),
        4 => Some(Cond::RatioAtLeast(x)),
        5 => Some(Cond::RatioBelow(x)),
        6 => scalar_cond(rng).or(Some(Cond::Always)),
        _ => None,
    }
}

fn value_arg<R: Rng>(rng: &mut R) -> Arg {
    match rng.gen_range(0..3) {
        0 => Arg::Number(rng.gen_range(-2..5) as f64),
        1 => Arg::Number(*pick(rng, &FLOATS)),
        _ => Arg::Label(pick(rng, &TEXTS).to_string()),
    }
}

/// A second table that shares some column names (and most key values) with `t`.
fn partner<R: Rng>(rng: &mut R, t: &Table, name: &str) -> Table {
    let cols = rng.gen_range(1..=5);
    let mut header: Vec<String> = Vec::new();
    for _ in 0..cols {
        let candidate = if rng.gen_bool(0.5) && t.ncols() > 0 {
            pick(rng, t.columns()).clone()
        } else {
            pick(rng, &COLUMN_NAMES).to_string()
        };
        if !header.contains(&candidate) {
            header.push(candidate);
        }
    }
    let rows = if rng.gen_bool(0.5) { t.nrows() } else { rng.gen_range(0..=6) };
    let grid = (0..rows)
        .map(|_| {
            header
                .iter()
                .map(|h| match t.column_index(h) {
                    Some(j) if t.nrows() > 0 && rng.gen_bool(0.7) => t.rows()[rng.gen_range(0..t.nrows())][j].clone(),
                    _ => random_cell(rng),
                })
                .collect()
        })
        .collect();
    Table::new(name, header, grid).expect("generated table is valid")
}

/// One random case exercising `f`.
pub fn case<R: Rng>(rng: &mut R, f: DslFunction) -> Case {
    use DslFunction as F;
    let rows = rng.gen_bool(0.35);
    let t = random_table(rng, "t.csv");
    let ax = axis_arg(rows);
    match f {
        F::CreateTable => {
            let dim = |rng: &mut R| if rng.gen_bool(0.05) { -1.0 } else { rng.gen_range(0..=6) as f64 };
            let c = call(f, &[("row_number", Arg::Number(dim(rng))), ("column_number", Arg::Number(dim(rng)))]);
            Case::single(vec![], c, scalar_cond(rng))
        }
        F::DeleteTable => {
            let name = if rng.gen_bool(0.8) { "t.csv" } else { "zz.csv" };
            let read_after = if rng.gen_bool(0.5) { "t.csv" } else { "u.csv" };
            let u = random_table(rng, "u.csv");
            Case {
                tables: vec![t, u],
                calls: vec![
                    (call(f, &[("table_name", tname(name))]), None),
                    (call(F::Transpose, &[("table", tname(read_after))]), None),
                ],
            }
        }
        F::PivotTable => {
            let agg = *pick(rng, &["mean", "sum", "min", "max", "count", "median", "var"]);
            let c = call(
                f,
                &[
                    ("table", tname("t.csv")),
                    ("index", column_arg(rng, &t)),
                    ("columns", column_arg(rng, &t)),
                    ("values", column_arg(rng, &t)),
                    ("aggfunc", Arg::Label(agg.into())),
                ],
            );
            Case::single(vec![t], c, scalar_cond(rng))
        }
        F::Merge => {
            let u = partner(rng, &t, "u.csv");
            let shared: Vec<String> = t.columns().iter().filter(|c| u.column_index(c).is_some()).cloned().collect();
            let how = match rng.gen_range(0..12) {
                0..=2 => Arg::Null,
                11 => Arg::Label("cross".into()),
                k => Arg::Label(["outer", "inner", "left", "right"][k % 4].into()),
            };
            let on = match rng.gen_range(0..10) {
                0..=2 => Arg::Null,
                3..=6 if !shared.is_empty() => Arg::Label(pick(rng, &shared).clone()),
                7..=8 if !shared.is_empty() => {
                    let mut s = shared.clone();
                    s.shuffle(rng);
                    s.truncate(rng.gen_range(1..=s.len()));
                    Arg::LabelList(s)
                }
                _ => Arg::Label(pick(rng, &COLUMN_NAMES).to_string()),
            };
            let c = call(f, &[("table_a", tname("t.csv")), ("table_b", tname("u.csv")), ("how", how), ("on", on)]);
            Case::single(vec![t, u], c, scalar_cond(rng))
        }
        F::Subtable => {
            let c = call(f, &[("table", tname("t.csv")), ("labels", items_arg(rng, &t, rows)), ("axis", ax)]);
            Case::single(vec![t], c, scalar_cond(rng))
        }
        F::Transpose => {
            let t = if rng.gen_bool(0.3) { transposed_shape(rng, "t.csv") } else { t };
            Case::single(vec![t], call(f, &[("table", tname("t.csv"))]), scalar_cond(rng))
        }
        F::Insert => {
            let count = if rows { t.nrows() } else { t.ncols() };
            let index = match rng.gen_range(0..10) {
                0..=5 => Arg::Number(rng.gen_range(0..=count + 2) as f64),
                6..=7 => Arg::Label(rng.gen_range(1..=count + 1).to_string()),
                _ => column_arg(rng, &t),
            };
            let name = match rng.gen_range(0..4) {
                0 => Arg::Null,
                1 => Arg::Label(pick(rng, &COLUMN_NAMES).to_string()),
                _ => Arg::Label("new".into()),
            };
            let c = call(f, &[("table", tname("t.csv")), ("index", index), ("index_name", name), ("axis", ax)]);
            Case::single(vec![t], c, scalar_cond(rng))
        }
        F::Drop => {
            let cond = ratio_cond(rng);
            let label = if rng.gen_bool(if cond.is_some() { 0.6 } else { 0.1 }) { Arg::Null } else { items_arg(rng, &t, rows) };
            let c = call(f, &[("table", tname("t.csv")), ("label", label), ("axis", ax)]);
            Case::single(vec![t], c, cond)
        }
        F::Assign => {
            let ordered = |rng: &mut R, n: usize| {
                let a = rng.gen_range(1..=n.max(1));
                (Arg::Number(a as f64), Arg::Number(rng.gen_range(a..=n.max(1)) as f64))
            };
            let (r1, r2) = if rng.gen_bool(0.75) { ordered(rng, t.nrows()) } else { (row_arg(rng, &t), row_arg(rng, &t)) };
            let (c1, c2) = if rng.gen_bool(0.75) { ordered(rng, t.ncols()) } else { (column_arg(rng, &t), column_arg(rng, &t)) };
            let values = if rng.gen_bool(0.4) {
                value_arg(rng)
            } else {
                let span = |a: &Arg, b: &Arg| match (a, b) {
                    (Arg::Number(x), Arg::Number(y)) if y >= x => Some((*y - *x) as usize + 1),
                    _ => None,
                };
                let (h, w) = match (span(&r1, &r2), span(&c1, &c2)) {
                    (Some(h), Some(w)) if rng.gen_bool(0.8) => (h, w),
                    _ => (rng.gen_range(1..=3), rng.gen_range(1..=3)),
                };
                Arg::ValueGrid((0..h).map(|_| (0..w).map(|_| random_cell(rng)).collect()).collect())
            };
            let c = call(
                f,
                &[
                    ("table", tname("t.csv")),
                    ("start_row_index", r1),
                    ("end_row_index", r2),
                    ("start_column_index", c1),
                    ("end_column_index", c2),
                    ("values", values),
                ],
            );
            Case::single(vec![t], c, scalar_cond(rng))
        }
        F::Move | F::Copy | F::Swap => {
            let u = if rng.gen_bool(0.5) { partner(rng, &t, "u.csv") } else { random_table(rng, "u.csv") };
            let cross = rng.gen_bool(0.5);
            let target = if cross { &u } else { &t };
            let origin_arg = item_arg(rng, &t, rows);
            let target_arg = match (f, rng.gen_range(0..10)) {
                (F::Copy, 0..=1) if !rows => Arg::Label("fresh".into()),
                (F::Move, 0..=1) if !cross => origin_arg.clone(),
                (_, 2..=3) => Arg::Number(rng.gen_range(1..=target.len_along(if rows { Axis::Rows } else { Axis::Columns }) + 2) as f64),
                _ => item_arg(rng, target, rows),
            };
            let tn = tname(if cross { "u.csv" } else { "t.csv" });
            let named: Vec<(&str, Arg)> = match f {
                F::Move => vec![
                    ("origin_table", tname("t.csv")),
                    ("origin_index", origin_arg),
                    ("target_table", tn),
                    ("target_index", target_arg),
                    ("axis", ax),
                ],
                F::Copy => vec![
                    ("origin_table", tname("t.csv")),
                    ("origin_label", origin_arg),
                    ("target_table", tn),
                    ("target_label", target_arg),
                    ("axis", ax),
                ],
                _ => vec![
                    ("table_a", tname("t.csv")),
                    ("label_a", origin_arg),
                    ("table_b", tn),
                    ("label_b", target_arg),
                    ("axis", ax),
                ],
            };
            Case::single(vec![t, u], call(f, &named), scalar_cond(rng))
        }
        F::Rearrange => {
            let n = if rows { t.nrows() } else { t.ncols() };
            let permutation = || -> Vec<String> {
                if rows {
                    (1..=n).map(|i| i.to_string()).collect()
                } else {
                    t.columns().to_vec()
                }
            };
            let (by_values, by_array) = match rng.gen_range(0..20) {
                0..=9 => (item_arg(rng, &t, rows), Arg::Null),
                10..=16 => {
                    let mut p = permutation();
                    p.shuffle(rng);
                    if rng.gen_bool(0.15) && !p.is_empty() {
                        p.pop();
                    }
                    (Arg::Null, Arg::LabelList(p))
                }
                17..=18 => (Arg::Null, item_list(rng, &t, rows)),
                _ => (Arg::Null, Arg::Null),
            };
            let c = call(f, &[("table", tname("t.csv")), ("by_values", by_values), ("by_array", by_array), ("axis", ax)]);
            Case::single(vec![t], c, scalar_cond(rng))
        }
        F::Divide => {
            let rows = rng.gen_bool(0.2);
            let c = call(f, &[("table", tname("t.csv")), ("by", item_arg(rng, &t, rows)), ("axis", axis_arg(rows))]);
            Case::single(vec![t], c, scalar_cond(rng))
        }
        F::Fill => {
            let t = if rng.gen_bool(0.4) { numeric_table(rng, "t.csv") } else { t };
            let method = *pick(rng, &["mean", "median", "mode", "ffill", "bfill", "value:0", "value:x", "value:2.5", "avg"]);
            let labels = if rng.gen_bool(0.5) { Arg::Null } else { items_arg(rng, &t, rows) };
            let c = call(f, &[("table", tname("t.csv")), ("method", Arg::Label(method.into())), ("labels", labels), ("axis", ax)]);
            Case::single(vec![t], c, ratio_cond(rng))
        }
        F::Aggregate => {
            let t = if rng.gen_bool(0.5) { numeric_table(rng, "t.csv") } else { t };
            let k = rng.gen_range(0..=3);
            let pairs = (0..k)
                .map(|_| {
                    let label = label_text(&item_arg(rng, &t, rows));
                    let func = *pick(rng, &["mean", "sum", "min", "max", "count", "median", "mean", "var"]);
                    (label, func.to_string())
                })
                .collect();
            let c = call(f, &[("table", tname("t.csv")), ("functions", Arg::Mapping(pairs)), ("axis", ax)]);
            Case::single(vec![t], c, scalar_cond(rng))
        }
        F::Test => {
            let a = if rng.gen_bool(0.9) { numeric_table(rng, "t.csv") } else { t };
            let b = numeric_table(rng, "u.csv");
            let strategy = if rng.gen_bool(0.9) { "t-test" } else { "anova" };
            let c = call(
                f,
                &[
                    ("table_a", tname("t.csv")),
                    ("label_a", column_arg(rng, &a)),
                    ("table_b", tname("u.csv")),
                    ("label_b", column_arg(rng, &b)),
                    ("strategy", Arg::Label(strategy.into())),
                    ("axis", axis_arg(false)),
                ],
            );
            Case::single(vec![a, b], c, scalar_cond(rng))
        }
        F::Count => {
            let value = if rng.gen_bool(0.15) { Arg::Null } else { value_arg(rng) };
            let c = call(f, &[("table", tname("t.csv")), ("label", item_arg(rng, &t, rows)), ("value", value), ("axis", ax)]);
            Case::single(vec![t], c, scalar_cond(rng))
        }
        F::Concatenate => {
            let glue = *pick(rng, &[" ", "", ",", "-"]);
            let new_label = if rng.gen_bool(0.8) { "joined".to_string() } else { pick(rng, &COLUMN_NAMES).to_string() };
            let c = call(
                f,
                &[
                    ("table", tname("t.csv")),
                    ("label_a", item_arg(rng, &t, rows)),
                    ("label_b", item_arg(rng, &t, rows)),
                    ("glue", Arg::Label(glue.into())),
                    ("new_label", Arg::Label(new_label)),
                    ("axis", ax),
                ],
            );
            Case::single(vec![t], c, scalar_cond(rng))
        }
        F::Split => {
            let delimiter = *pick(rng, &["-", " ", "-", "", "b"]);
            let k = rng.gen_range(1..=3);
            let labels: Vec<String> = (0..k)
                .map(|i| if rng.gen_bool(0.9) { format!("part{i}") } else { pick(rng, &COLUMN_NAMES).to_string() })
                .collect();
            let c = call(
                f,
                &[
                    ("table", tname("t.csv")),
                    ("label", item_arg(rng, &t, rows)),
                    ("delimiter", Arg::Label(delimiter.into())),
                    ("new_label_list", Arg::LabelList(labels)),
                    ("axis", ax),
                ],
            );
            Case::single(vec![t], c, scalar_cond(rng))
        }
        F::Format => {
            let pattern = *pick(rng, &[r"\s+", "a", r"(\w)-(\w)", "^(.)", "[0-9]+", "(", "x*", r"(\d)(\d)?", "rue$"]);
            let with = *pick(rng, &["_", "", "$1", "[$1]", "$2/$1", "$$", "X", "$0!", "9"]);
            let c = call(
                f,
                &[
                    ("table", tname("t.csv")),
                    ("label", item_arg(rng, &t, rows)),
                    ("pattern", Arg::Label(pattern.into())),
                    ("replace_with", Arg::Label(with.into())),
                    ("axis", ax),
                ],
            );
            Case::single(vec![t], c, scalar_cond(rng))
        }
    }
}
