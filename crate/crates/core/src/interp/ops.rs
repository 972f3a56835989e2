//! The DSL operations as pure functions over tables.
//!
//! Every function takes its inputs by reference and returns fresh tables; the
//! interpreter is responsible for resolving names and storing results.
//! Selectors address rows by 1-based data position and columns by name or
//! 1-based position.

use std::collections::HashMap;

use regex::Regex;

use super::stats::{welch_t_test, StatsError, TestResult};
use crate::table::{Axis, CellValue, Selector, Table, TableError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OpError {
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> OpError {
    OpError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggFunc {
    Mean,
    Sum,
    Min,
    Max,
    Count,
    Median,
}

impl AggFunc {
    pub fn parse(name: &str) -> Option<AggFunc> {
        Some(match name {
            "mean" => AggFunc::Mean,
            "sum" => AggFunc::Sum,
            "min" => AggFunc::Min,
            "max" => AggFunc::Max,
            "count" => AggFunc::Count,
            "median" => AggFunc::Median,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Mean => "mean",
            AggFunc::Sum => "sum",
            AggFunc::Min => "min",
            AggFunc::Max => "max",
            AggFunc::Count => "count",
            AggFunc::Median => "median",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinKind {
    Outer,
    Inner,
    Left,
    Right,
}

impl JoinKind {
    pub fn parse(name: &str) -> Option<JoinKind> {
        Some(match name {
            "outer" => JoinKind::Outer,
            "inner" => JoinKind::Inner,
            "left" => JoinKind::Left,
            "right" => JoinKind::Right,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FillMethod {
    Mean,
    Median,
    Mode,
    Ffill,
    Bfill,
    Value(CellValue),
}

impl FillMethod {
    /// Parses `mean`, `median`, `mode`, `ffill`, `bfill` or `value:<literal>`;
    /// the literal is typed with the ingest cascade.
    pub fn parse(method: &str) -> Option<FillMethod> {
        if let Some(lit) = method.strip_prefix("value:") {
            return Some(FillMethod::Value(CellValue::from_token(lit)));
        }
        Some(match method {
            "mean" => FillMethod::Mean,
            "median" => FillMethod::Median,
            "mode" => FillMethod::Mode,
            "ffill" => FillMethod::Ffill,
            "bfill" => FillMethod::Bfill,
            _ => return None,
        })
    }
}

/// A value grid or a scalar broadcast over a region.
#[derive(Debug, Clone, PartialEq)]
pub enum Values {
    Scalar(CellValue),
    Grid(Vec<Vec<CellValue>>),
}

fn rebuild(like: &Table, columns: Vec<String>, rows: Vec<Vec<CellValue>>) -> Result<Table, OpError> {
    Ok(Table::new(like.name(), columns, rows)?)
}

fn numeric(cells: &[&CellValue], what: &str) -> Result<Vec<f64>, OpError> {
    cells
        .iter()
        .map(|c| c.as_f64().ok_or_else(|| invalid(format!("{what} requires numeric values, found {:?}", c.render()))))
        .collect()
}

/// Applies an aggregation function to the non-null cells of `cells`.
///
/// `count` counts non-null cells. The other functions return `Null` when no
/// non-null cell remains. `sum` of integers stays an integer; `mean` is always
/// a float; `median` keeps the middle cell for odd counts. `min` and `max` use
/// the sort comparator and keep the first of equal candidates.
pub fn aggregate_cells(f: AggFunc, cells: &[CellValue]) -> Result<CellValue, OpError> {
    let present: Vec<&CellValue> = cells.iter().filter(|c| !c.is_null()).collect();
    if f == AggFunc::Count {
        return Ok(CellValue::Int(present.len() as i64));
    }
    if present.is_empty() {
        return Ok(CellValue::Null);
    }
    Ok(match f {
        AggFunc::Mean => {
            let xs = numeric(&present, "mean")?;
            CellValue::Float(xs.iter().sum::<f64>() / xs.len() as f64)
        }
        AggFunc::Sum => {
            let xs = numeric(&present, "sum")?;
            let ints: Option<Vec<i64>> = present
                .iter()
                .map(|c| match c {
                    CellValue::Int(i) => Some(*i),
                    _ => None,
                })
                .collect();
            match ints.and_then(|v| v.into_iter().try_fold(0i64, |acc, i| acc.checked_add(i))) {
                Some(total) => CellValue::Int(total),
                None => CellValue::Float(xs.iter().sum()),
            }
        }
        AggFunc::Median => {
            numeric(&present, "median")?;
            let mut sorted = present.clone();
            sorted.sort_by(|a, b| a.sort_cmp(b));
            let n = sorted.len();
            if n % 2 == 1 {
                sorted[n / 2].clone()
            } else {
                let lo = sorted[n / 2 - 1].as_f64().expect("numeric");
                let hi = sorted[n / 2].as_f64().expect("numeric");
                CellValue::Float((lo + hi) / 2.0)
            }
        }
        AggFunc::Min | AggFunc::Max => {
            let want = if f == AggFunc::Min { std::cmp::Ordering::Less } else { std::cmp::Ordering::Greater };
            let mut best = present[0];
            for c in &present[1..] {
                if c.sort_cmp(best) == want {
                    best = c;
                }
            }
            best.clone()
        }
        AggFunc::Count => unreachable!("handled above"),
    })
}

/// Equality used by `count`: numeric cells compare by value, everything
/// else structurally (so `Null` matches `Null`).
pub fn cells_match(a: &CellValue, b: &CellValue) -> bool {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => x == y,
        _ => a == b,
    }
}

fn missing_ratio(cells: &[CellValue]) -> f64 {
    if cells.is_empty() {
        0.0
    } else {
        cells.iter().filter(|c| c.is_null()).count() as f64 / cells.len() as f64
    }
}

/// Fraction of null cells in each row (axis Rows) or column (axis Columns).
pub fn missing_ratios(t: &Table, axis: Axis) -> Vec<f64> {
    (0..t.len_along(axis)).map(|i| missing_ratio(&t.vector(i, axis))).collect()
}

fn fresh_column_name(columns: &[String], wanted: &str) -> String {
    if !columns.iter().any(|c| c == wanted) {
        return wanted.to_string();
    }
    (2..)
        .map(|k| format!("{wanted}_{k}"))
        .find(|c| !columns.contains(c))
        .expect("unbounded")
}

pub fn create_table(name: &str, rows: usize, cols: usize) -> Result<Table, OpError> {
    let columns = (1..=cols).map(|i| format!("Column{i}")).collect();
    Ok(Table::new(name, columns, vec![vec![CellValue::Null; cols]; rows])?)
}

pub fn pivot_table(
    t: &Table,
    index: &Selector,
    columns: &Selector,
    values: &Selector,
    agg: AggFunc,
) -> Result<Table, OpError> {
    let (ic, cc, vc) = (t.resolve_column(index)?, t.resolve_column(columns)?, t.resolve_column(values)?);
    let mut keys: Vec<CellValue> = Vec::new();
    let mut heads: Vec<CellValue> = Vec::new();
    let mut groups: HashMap<(usize, usize), Vec<CellValue>> = HashMap::new();
    for row in t.rows() {
        let (k, h) = (&row[ic], &row[cc]);
        if k.is_null() || h.is_null() {
            continue;
        }
        let ki = keys.iter().position(|x| x == k).unwrap_or_else(|| {
            keys.push(k.clone());
            keys.len() - 1
        });
        let hi = heads.iter().position(|x| x == h).unwrap_or_else(|| {
            heads.push(h.clone());
            heads.len() - 1
        });
        groups.entry((ki, hi)).or_default().push(row[vc].clone());
    }
    let mut out_cols = vec![t.columns()[ic].clone()];
    out_cols.extend(heads.iter().map(CellValue::render));
    let mut rows = Vec::with_capacity(keys.len());
    for (ki, k) in keys.iter().enumerate() {
        let mut row = vec![k.clone()];
        for hi in 0..heads.len() {
            row.push(match groups.get(&(ki, hi)) {
                Some(cells) => aggregate_cells(agg, cells)?,
                None => CellValue::Null,
            });
        }
        rows.push(row);
    }
    rebuild(t, out_cols, rows)
}

/// Equi-join of `a` and `b` on `on` (or on every shared column name).
///
/// Output columns are `a`'s columns followed by `b`'s columns that `a` does
/// not have. Key columns and other shared columns are coalesced, preferring
/// `a`'s value when it is not null. Rows follow `a`'s order, each matched
/// against `b` in `b`'s order, followed by unmatched `b` rows for outer and
/// right joins.
pub fn merge(a: &Table, b: &Table, how: JoinKind, on: Option<&[String]>) -> Result<Table, OpError> {
    let keys: Vec<String> = match on {
        Some(k) => k.to_vec(),
        None => a.columns().iter().filter(|c| b.column_index(c).is_some()).cloned().collect(),
    };
    if keys.is_empty() {
        return Err(invalid("merge needs at least one key column shared by both tables"));
    }
    let mut ka = Vec::new();
    let mut kb = Vec::new();
    for k in &keys {
        ka.push(a.column_index(k).ok_or_else(|| TableError::UnknownColumn(format!("{k} in {}", a.name())))?);
        kb.push(b.column_index(k).ok_or_else(|| TableError::UnknownColumn(format!("{k} in {}", b.name())))?);
    }
    let b_extra: Vec<usize> = (0..b.ncols()).filter(|&j| a.column_index(&b.columns()[j]).is_none()).collect();
    // For each a column, the matching b column if the name is shared.
    let shared: Vec<Option<usize>> = a.columns().iter().map(|c| b.column_index(c)).collect();
    let mut columns = a.columns().to_vec();
    columns.extend(b_extra.iter().map(|&j| b.columns()[j].clone()));

    let mut index: HashMap<Vec<String>, Vec<usize>> = HashMap::new();
    let key_of = |row: &[CellValue], cols: &[usize]| -> Vec<String> {
        cols.iter().map(|&c| format!("{:?}", canonical(&row[c]))).collect()
    };
    for (j, row) in b.rows().iter().enumerate() {
        index.entry(key_of(row, &kb)).or_default().push(j);
    }

    let combine = |ra: Option<&Vec<CellValue>>, rb: Option<&Vec<CellValue>>| -> Vec<CellValue> {
        let mut out = Vec::with_capacity(columns.len());
        for (i, s) in shared.iter().enumerate() {
            let from_a = ra.map(|r| r[i].clone()).unwrap_or(CellValue::Null);
            let v = match (from_a, s, rb) {
                (v, _, _) if !v.is_null() => v,
                (_, Some(j), Some(rb)) => rb[*j].clone(),
                _ => CellValue::Null,
            };
            out.push(v);
        }
        for &j in &b_extra {
            out.push(rb.map(|r| r[j].clone()).unwrap_or(CellValue::Null));
        }
        out
    };

    let mut rows = Vec::new();
    let mut b_matched = vec![false; b.nrows()];
    for ra in a.rows() {
        match index.get(&key_of(ra, &ka)) {
            Some(js) => {
                for &j in js {
                    b_matched[j] = true;
                    rows.push(combine(Some(ra), Some(&b.rows()[j])));
                }
            }
            None => {
                if matches!(how, JoinKind::Outer | JoinKind::Left) {
                    rows.push(combine(Some(ra), None));
                }
            }
        }
    }
    if matches!(how, JoinKind::Outer | JoinKind::Right) {
        for (j, rb) in b.rows().iter().enumerate() {
            if !b_matched[j] {
                rows.push(combine(None, Some(rb)));
            }
        }
    }
    rebuild(a, columns, rows)
}

/// Hashable identity for join keys consistent with `CellValue` equality.
fn canonical(c: &CellValue) -> (u8, String) {
    match c {
        CellValue::Null => (0, String::new()),
        CellValue::Int(i) => (1, i.to_string()),
        CellValue::Float(f) => (2, format!("{:?}", f.to_bits())),
        CellValue::Text(s) => (3, s.clone()),
        CellValue::Bool(b) => (4, b.to_string()),
    }
}

pub fn subtable(t: &Table, labels: &[Selector], axis: Axis) -> Result<Table, OpError> {
    let idx = labels.iter().map(|l| t.resolve(l, axis)).collect::<Result<Vec<_>, _>>()?;
    match axis {
        Axis::Columns => rebuild(
            t,
            idx.iter().map(|&i| t.columns()[i].clone()).collect(),
            t.rows().iter().map(|r| idx.iter().map(|&i| r[i].clone()).collect()).collect(),
        ),
        Axis::Rows => rebuild(t, t.columns().to_vec(), idx.iter().map(|&i| t.rows()[i].clone()).collect()),
    }
}

/// The header a transpose generates: `index, 1, 2, ..., n`.
fn transposed_header(n: usize) -> Vec<String> {
    std::iter::once("index".to_string()).chain((1..=n).map(|i| i.to_string())).collect()
}

/// Transposes the header-plus-rows grid. The old header becomes the first
/// column (named `index`) and the new header is `index, 1, ..., n`. A table
/// carrying exactly that generated header is transposed back, its first
/// column becoming the header again, so transposing twice restores the
/// original table.
pub fn transpose(t: &Table) -> Result<Table, OpError> {
    if t.columns() == transposed_header(t.ncols().saturating_sub(1)).as_slice() && t.ncols() >= 1 {
        let header: Vec<String> = t.rows().iter().map(|r| r[0].render()).collect();
        let unique = header.iter().enumerate().all(|(i, h)| !h.is_empty() && !header[..i].contains(h));
        if unique {
            let rows = (1..t.ncols()).map(|j| t.rows().iter().map(|r| r[j].clone()).collect()).collect();
            return rebuild(t, header, rows);
        }
    }
    let rows = t
        .columns()
        .iter()
        .enumerate()
        .map(|(j, c)| {
            std::iter::once(header_cell(c))
                .chain(t.rows().iter().map(|r| r[j].clone()))
                .collect()
        })
        .collect();
    rebuild(t, transposed_header(t.nrows()), rows)
}

/// Types a header name with the cascade unless that would change its text.
fn header_cell(name: &str) -> CellValue {
    let typed = CellValue::from_token(name);
    if typed.render() == name && !typed.is_null() {
        typed
    } else {
        CellValue::Text(name.to_string())
    }
}

/// Position (1-based, up to `count + 1`) named by an insert index: a number,
/// a digit string, or the name of the column to insert before.
fn insert_position(t: &Table, index: &Selector, axis: Axis) -> Result<usize, OpError> {
    let count = t.len_along(axis);
    let pos = match index {
        Selector::Position(p) => Some(*p),
        Selector::Name(n) => match n.trim().parse::<usize>() {
            Ok(p) => Some(p),
            Err(_) if axis == Axis::Columns => t.column_index(n).map(|i| i + 1),
            Err(_) => None,
        },
    };
    match pos {
        Some(p) if p >= 1 && p <= count + 1 => Ok(p),
        _ => Err(invalid(format!("insert position {index} is outside 1..={}", count + 1))),
    }
}

/// Inserts an all-null row or column at a 1-based position. A new column is
/// named `name`, or `Column{position}` when absent.
pub fn insert(t: &Table, index: &Selector, name: Option<&str>, axis: Axis) -> Result<Table, OpError> {
    let p = insert_position(t, index, axis)? - 1;
    let mut rows = t.rows().to_vec();
    match axis {
        Axis::Rows => {
            rows.insert(p, vec![CellValue::Null; t.ncols()]);
            rebuild(t, t.columns().to_vec(), rows)
        }
        Axis::Columns => {
            let mut columns = t.columns().to_vec();
            let label = match name {
                Some(n) => n.to_string(),
                None => fresh_column_name(&columns, &format!("Column{}", p + 1)),
            };
            columns.insert(p, label);
            for r in &mut rows {
                r.insert(p, CellValue::Null);
            }
            rebuild(t, columns, rows)
        }
    }
}

pub fn drop(t: &Table, labels: &[Selector], axis: Axis) -> Result<Table, OpError> {
    let idx = labels.iter().map(|l| t.resolve(l, axis)).collect::<Result<Vec<_>, _>>()?;
    let keep = |i: usize| !idx.contains(&i);
    match axis {
        Axis::Rows => rebuild(
            t,
            t.columns().to_vec(),
            t.rows().iter().enumerate().filter(|(i, _)| keep(*i)).map(|(_, r)| r.clone()).collect(),
        ),
        Axis::Columns => rebuild(
            t,
            t.columns().iter().enumerate().filter(|(i, _)| keep(*i)).map(|(_, c)| c.clone()).collect(),
            t.rows()
                .iter()
                .map(|r| r.iter().enumerate().filter(|(i, _)| keep(*i)).map(|(_, c)| c.clone()).collect())
                .collect(),
        ),
    }
}

/// Overwrites the inclusive region `r1..=r2` x `c1..=c2`. A scalar or a
/// 1x1 grid is broadcast; any other grid must match the region's shape.
pub fn assign(
    t: &Table,
    r1: &Selector,
    r2: &Selector,
    c1: &Selector,
    c2: &Selector,
    values: &Values,
) -> Result<Table, OpError> {
    let (r1, r2) = (t.resolve_row(r1)?, t.resolve_row(r2)?);
    let (c1, c2) = (t.resolve_column(c1)?, t.resolve_column(c2)?);
    if r1 > r2 || c1 > c2 {
        return Err(invalid("assign region must have start ≤ end"));
    }
    let (h, w) = (r2 - r1 + 1, c2 - c1 + 1);
    let cell_at: Box<dyn Fn(usize, usize) -> CellValue + '_> = match values {
        Values::Scalar(v) => Box::new(move |_, _| v.clone()),
        Values::Grid(g) if g.len() == 1 && g[0].len() == 1 => Box::new(move |_, _| g[0][0].clone()),
        Values::Grid(g) => {
            if g.len() != h || g.iter().any(|r| r.len() != w) {
                let gw = g.first().map_or(0, Vec::len);
                return Err(invalid(format!("assign values are {}x{gw}, region is {h}x{w}", g.len())));
            }
            Box::new(move |i, j| g[i][j].clone())
        }
    };
    let mut rows = t.rows().to_vec();
    for i in 0..h {
        for j in 0..w {
            rows[r1 + i][c1 + j] = cell_at(i, j);
        }
    }
    rebuild(t, t.columns().to_vec(), rows)
}

/// One labeled row or column lifted out of a table.
struct Item {
    name: Option<String>,
    cells: Vec<CellValue>,
}

fn take_item(t: &Table, idx: usize, axis: Axis) -> (Item, Vec<String>, Vec<Vec<CellValue>>) {
    let mut columns = t.columns().to_vec();
    let mut rows = t.rows().to_vec();
    match axis {
        Axis::Rows => {
            let cells = rows.remove(idx);
            (Item { name: None, cells }, columns, rows)
        }
        Axis::Columns => {
            let name = columns.remove(idx);
            let cells = rows.iter_mut().map(|r| r.remove(idx)).collect();
            (Item { name: Some(name), cells }, columns, rows)
        }
    }
}

fn put_item(
    columns: &mut Vec<String>,
    rows: &mut Vec<Vec<CellValue>>,
    at: usize,
    item: Item,
    axis: Axis,
) -> Result<(), OpError> {
    match axis {
        Axis::Rows => {
            if item.cells.len() != columns.len() {
                return Err(invalid(format!("row has {} cells, target has {} columns", item.cells.len(), columns.len())));
            }
            rows.insert(at, item.cells);
        }
        Axis::Columns => {
            let name = item.name.expect("columns carry names");
            if columns.contains(&name) {
                return Err(TableError::DuplicateColumn(name).into());
            }
            if columns.is_empty() && rows.is_empty() {
                rows.resize(item.cells.len(), Vec::new());
            }
            if item.cells.len() != rows.len() {
                return Err(invalid(format!("column has {} cells, target has {} rows", item.cells.len(), rows.len())));
            }
            columns.insert(at, name);
            for (r, c) in rows.iter_mut().zip(item.cells) {
                r.insert(at, c);
            }
        }
    }
    Ok(())
}

/// Resolves a target position after the moved item was removed: a number or
/// digit string is a 1-based position up to `count + 1`, a column name means
/// "before that column".
fn target_position(columns: &[String], nrows: usize, sel: &Selector, axis: Axis) -> Result<usize, OpError> {
    let count = match axis {
        Axis::Rows => nrows,
        Axis::Columns => columns.len(),
    };
    let pos = match sel {
        Selector::Position(p) => Some(*p),
        Selector::Name(n) => match columns.iter().position(|c| c == n) {
            Some(i) if axis == Axis::Columns => Some(i + 1),
            _ => n.trim().parse::<usize>().ok(),
        },
    };
    match pos {
        Some(p) if p >= 1 && p <= count + 1 => Ok(p - 1),
        _ => Err(invalid(format!("target position {sel} is outside 1..={}", count + 1))),
    }
}

/// Moves a row or column from `origin` into `target` (or within `origin`
/// when `target` is `None`). Returns the new origin and, for cross-table
/// moves, the new target.
pub fn move_item(
    origin: &Table,
    origin_index: &Selector,
    target: Option<&Table>,
    target_index: &Selector,
    axis: Axis,
) -> Result<(Table, Option<Table>), OpError> {
    let from = origin.resolve(origin_index, axis)?;
    let (item, mut ocols, mut orows) = take_item(origin, from, axis);
    match target {
        None => {
            let same_label = axis == Axis::Columns
                && matches!(target_index, Selector::Name(n) if Some(n) == item.name.as_ref());
            let at = if same_label {
                from
            } else {
                target_position(&ocols, orows.len(), target_index, axis)?
            };
            put_item(&mut ocols, &mut orows, at, item, axis)?;
            Ok((rebuild(origin, ocols, orows)?, None))
        }
        Some(target) => {
            let mut tcols = target.columns().to_vec();
            let mut trows = target.rows().to_vec();
            let at = target_position(&tcols, trows.len(), target_index, axis)?;
            put_item(&mut tcols, &mut trows, at, item, axis)?;
            Ok((rebuild(origin, ocols, orows)?, Some(rebuild(target, tcols, trows)?)))
        }
    }
}

/// Copies a row or column of `origin` onto `target_label` of `target` (or of
/// `origin` itself when `target` is `None`). An existing label is
/// overwritten in place; an unknown column name is appended as a new
/// column; row `nrows + 1` appends a row. Returns the new target.
pub fn copy(
    origin: &Table,
    origin_label: &Selector,
    target: Option<&Table>,
    target_label: &Selector,
    axis: Axis,
) -> Result<Table, OpError> {
    let src = origin.resolve(origin_label, axis)?;
    let cells = origin.vector(src, axis);
    let target = target.unwrap_or(origin);
    let mut columns = target.columns().to_vec();
    let mut rows = target.rows().to_vec();
    match axis {
        Axis::Columns => {
            if columns.is_empty() && rows.is_empty() {
                rows.resize(cells.len(), Vec::new());
            }
            if cells.len() != rows.len() {
                return Err(invalid(format!("column has {} cells, target has {} rows", cells.len(), rows.len())));
            }
            match target.resolve_column(target_label) {
                Ok(j) => {
                    for (r, c) in rows.iter_mut().zip(cells) {
                        r[j] = c;
                    }
                }
                Err(_) => {
                    let Selector::Name(name) = target_label else {
                        return Err(TableError::UnknownColumn(target_label.to_string()).into());
                    };
                    columns.push(name.clone());
                    for (r, c) in rows.iter_mut().zip(cells) {
                        r.push(c);
                    }
                }
            }
        }
        Axis::Rows => {
            if cells.len() != columns.len() {
                return Err(invalid(format!("row has {} cells, target has {} columns", cells.len(), columns.len())));
            }
            match target.resolve_row(target_label) {
                Ok(i) => rows[i] = cells,
                Err(e) => {
                    let append = match target_label {
                        Selector::Position(p) => *p == rows.len() + 1,
                        Selector::Name(n) => n.trim().parse::<usize>().ok() == Some(rows.len() + 1),
                    };
                    if !append {
                        return Err(e.into());
                    }
                    rows.push(cells);
                }
            }
        }
    }
    rebuild(target, columns, rows)
}

/// Exchanges two labeled rows or columns, in place. Columns travel with
/// their names. Returns the new `a` and, for cross-table swaps, the new `b`.
pub fn swap(
    a: &Table,
    label_a: &Selector,
    b: Option<&Table>,
    label_b: &Selector,
    axis: Axis,
) -> Result<(Table, Option<Table>), OpError> {
    let ia = a.resolve(label_a, axis)?;
    match b {
        None => {
            let ib = a.resolve(label_b, axis)?;
            let mut columns = a.columns().to_vec();
            let mut rows = a.rows().to_vec();
            match axis {
                Axis::Rows => rows.swap(ia, ib),
                Axis::Columns => {
                    columns.swap(ia, ib);
                    for r in &mut rows {
                        r.swap(ia, ib);
                    }
                }
            }
            Ok((rebuild(a, columns, rows)?, None))
        }
        Some(b) => {
            let ib = b.resolve(label_b, axis)?;
            let (mut acols, mut arows) = (a.columns().to_vec(), a.rows().to_vec());
            let (mut bcols, mut brows) = (b.columns().to_vec(), b.rows().to_vec());
            match axis {
                Axis::Rows => {
                    if a.ncols() != b.ncols() {
                        return Err(invalid(format!("row swap needs equal widths, got {} and {}", a.ncols(), b.ncols())));
                    }
                    std::mem::swap(&mut arows[ia], &mut brows[ib]);
                }
                Axis::Columns => {
                    if a.nrows() != b.nrows() {
                        return Err(invalid(format!("column swap needs equal row counts, got {} and {}", a.nrows(), b.nrows())));
                    }
                    std::mem::swap(&mut acols[ia], &mut bcols[ib]);
                    for (ra, rb) in arows.iter_mut().zip(brows.iter_mut()) {
                        std::mem::swap(&mut ra[ia], &mut rb[ib]);
                    }
                }
            }
            Ok((rebuild(a, acols, arows)?, Some(rebuild(b, bcols, brows)?)))
        }
    }
}

/// Sorts or permutes. `by_values` names the row or column (per `axis`)
/// whose values order the other dimension: a column sorts rows, a row sorts
/// columns. `by_array` lists every label of the `axis` dimension in the
/// wanted order.
pub fn rearrange(
    t: &Table,
    by_values: Option<&Selector>,
    by_array: Option<&[Selector]>,
    axis: Axis,
) -> Result<Table, OpError> {
    let order: Vec<usize> = match (by_values, by_array) {
        (Some(key), None) => {
            let k = t.resolve(key, axis)?;
            let keys = t.vector(k, axis);
            let mut order: Vec<usize> = (0..keys.len()).collect();
            order.sort_by(|&x, &y| keys[x].sort_cmp(&keys[y]));
            order
        }
        (None, Some(labels)) => {
            let idx = labels.iter().map(|l| t.resolve(l, axis)).collect::<Result<Vec<_>, _>>()?;
            let mut seen = idx.clone();
            seen.sort_unstable();
            if seen != (0..t.len_along(axis)).collect::<Vec<_>>() {
                return Err(invalid("by_array must list every label exactly once"));
            }
            idx
        }
        _ => return Err(invalid("rearrange needs exactly one of by_values and by_array")),
    };
    // `order` permutes the dimension other than `axis` for a key, and the
    // `axis` dimension itself for an explicit array.
    let permute_rows = by_values.is_some() == (axis == Axis::Columns);
    if permute_rows {
        rebuild(t, t.columns().to_vec(), order.iter().map(|&i| t.rows()[i].clone()).collect())
    } else {
        rebuild(
            t,
            order.iter().map(|&j| t.columns()[j].clone()).collect(),
            t.rows().iter().map(|r| order.iter().map(|&j| r[j].clone()).collect()).collect(),
        )
    }
}

/// Partitions rows by the values of a column (axis Columns) or columns by
/// the values of a row (axis Rows). Groups appear in first-appearance order.
pub fn divide(t: &Table, by: &Selector, axis: Axis) -> Result<Vec<(CellValue, Table)>, OpError> {
    let k = t.resolve(by, axis)?;
    let keys = t.vector(k, axis);
    let mut groups: Vec<(CellValue, Vec<usize>)> = Vec::new();
    for (i, key) in keys.iter().enumerate() {
        match groups.iter_mut().find(|(g, _)| g == key) {
            Some((_, members)) => members.push(i),
            None => groups.push((key.clone(), vec![i])),
        }
    }
    groups
        .into_iter()
        .map(|(key, members)| {
            let child = match axis {
                Axis::Columns => {
                    rebuild(t, t.columns().to_vec(), members.iter().map(|&i| t.rows()[i].clone()).collect())?
                }
                Axis::Rows => rebuild(
                    t,
                    members.iter().map(|&j| t.columns()[j].clone()).collect(),
                    t.rows().iter().map(|r| members.iter().map(|&j| r[j].clone()).collect()).collect(),
                )?,
            };
            Ok((key, child))
        })
        .collect()
}

fn fill_vector(cells: &mut [CellValue], method: &FillMethod, label: &str) -> Result<(), OpError> {
    if !cells.iter().any(CellValue::is_null) {
        return Ok(());
    }
    let replacement = match method {
        FillMethod::Mean | FillMethod::Median => {
            let present: Vec<CellValue> = cells.iter().filter(|c| !c.is_null()).cloned().collect();
            if present.is_empty() || present.iter().any(|c| !c.is_numeric()) {
                return Err(invalid(format!("fill needs numeric values in {label}")));
            }
            let f = if *method == FillMethod::Mean { AggFunc::Mean } else { AggFunc::Median };
            Some(aggregate_cells(f, &present)?)
        }
        FillMethod::Mode => {
            let mut tally: Vec<(CellValue, usize)> = Vec::new();
            for c in cells.iter().filter(|c| !c.is_null()) {
                match tally.iter_mut().find(|(v, _)| v == c) {
                    Some((_, n)) => *n += 1,
                    None => tally.push((c.clone(), 1)),
                }
            }
            let mut best: Option<(CellValue, usize)> = None;
            for (v, n) in tally {
                if best.as_ref().map_or(true, |(_, bn)| n > *bn) {
                    best = Some((v, n));
                }
            }
            Some(best.map_or(CellValue::Null, |(v, _)| v))
        }
        FillMethod::Value(v) => Some(v.clone()),
        FillMethod::Ffill | FillMethod::Bfill => None,
    };
    match (replacement, method) {
        (Some(v), _) => {
            for c in cells.iter_mut().filter(|c| c.is_null()) {
                *c = v.clone();
            }
        }
        (None, FillMethod::Ffill) => {
            for i in 1..cells.len() {
                if cells[i].is_null() {
                    cells[i] = cells[i - 1].clone();
                }
            }
        }
        (None, _) => {
            for i in (0..cells.len().saturating_sub(1)).rev() {
                if cells[i].is_null() {
                    cells[i] = cells[i + 1].clone();
                }
            }
        }
    }
    Ok(())
}

/// Fills nulls inside each labeled column (axis Columns) or row (axis Rows),
/// or inside every item when `labels` is `None`. Items without nulls are
/// left untouched.
pub fn fill(t: &Table, method: &FillMethod, labels: Option<&[Selector]>, axis: Axis) -> Result<Table, OpError> {
    let items: Vec<usize> = match labels {
        Some(ls) => ls.iter().map(|l| t.resolve(l, axis)).collect::<Result<_, _>>()?,
        None => (0..t.len_along(axis)).collect(),
    };
    let mut rows = t.rows().to_vec();
    for i in items {
        let label = match axis {
            Axis::Columns => format!("column {}", t.columns()[i]),
            Axis::Rows => format!("row {}", i + 1),
        };
        let mut cells = t.vector(i, axis);
        fill_vector(&mut cells, method, &label)?;
        for (k, c) in cells.into_iter().enumerate() {
            match axis {
                Axis::Columns => rows[k][i] = c,
                Axis::Rows => rows[i][k] = c,
            }
        }
    }
    rebuild(t, t.columns().to_vec(), rows)
}

/// One-row summary: one output column per `(label, function)` entry.
pub fn aggregate(t: &Table, functions: &[(Selector, AggFunc)], axis: Axis) -> Result<Table, OpError> {
    let mut columns = Vec::new();
    let mut row = Vec::new();
    for (label, f) in functions {
        let i = t.resolve(label, axis)?;
        columns.push(match axis {
            Axis::Columns => t.columns()[i].clone(),
            Axis::Rows => label.to_string(),
        });
        row.push(aggregate_cells(*f, &t.vector(i, axis))?);
    }
    rebuild(t, columns, vec![row])
}

fn numeric_vector(t: &Table, label: &Selector, axis: Axis) -> Result<Vec<f64>, OpError> {
    let i = t.resolve(label, axis)?;
    let cells = t.vector(i, axis);
    let present: Vec<&CellValue> = cells.iter().filter(|c| !c.is_null()).collect();
    numeric(&present, "test")
}

/// Welch t-test between two labeled vectors; nulls are ignored.
pub fn test(
    a: &Table,
    label_a: &Selector,
    b: &Table,
    label_b: &Selector,
    axis: Axis,
) -> Result<TestResult, OpError> {
    let xa = numeric_vector(a, label_a, axis)?;
    let xb = numeric_vector(b, label_b, axis)?;
    Ok(welch_t_test(&xa, &xb)?)
}

/// 1x1 table with column `count` holding the occurrences of `value`.
pub fn count(t: &Table, label: &Selector, value: &CellValue, axis: Axis) -> Result<Table, OpError> {
    let i = t.resolve(label, axis)?;
    let n = t.vector(i, axis).iter().filter(|c| cells_match(c, value)).count();
    rebuild(t, vec!["count".into()], vec![vec![CellValue::Int(n as i64)]])
}

fn append_items(t: &Table, new: Vec<(String, Vec<CellValue>)>, axis: Axis) -> Result<Table, OpError> {
    let mut columns = t.columns().to_vec();
    let mut rows = t.rows().to_vec();
    for (name, cells) in new {
        match axis {
            Axis::Columns => {
                columns.push(name);
                for (r, c) in rows.iter_mut().zip(cells) {
                    r.push(c);
                }
            }
            Axis::Rows => rows.push(cells),
        }
    }
    rebuild(t, columns, rows)
}

/// Appends `text(a) + glue + text(b)` as a new column `new_label` (axis
/// Columns) or a new last row (axis Rows). Null renders as "".
pub fn concatenate(
    t: &Table,
    label_a: &Selector,
    label_b: &Selector,
    glue: &str,
    new_label: &str,
    axis: Axis,
) -> Result<Table, OpError> {
    let (ia, ib) = (t.resolve(label_a, axis)?, t.resolve(label_b, axis)?);
    let (va, vb) = (t.vector(ia, axis), t.vector(ib, axis));
    let joined = va
        .iter()
        .zip(&vb)
        .map(|(x, y)| CellValue::from_token(&format!("{}{glue}{}", x.render(), y.render())))
        .collect();
    append_items(t, vec![(new_label.to_string(), joined)], axis)
}

/// Splits each cell on the first `k - 1` occurrences of `delimiter` into
/// `k = new_labels.len()` parts, appended as new columns (or rows). Missing
/// parts are null.
pub fn split(
    t: &Table,
    label: &Selector,
    delimiter: &str,
    new_labels: &[String],
    axis: Axis,
) -> Result<Table, OpError> {
    if delimiter.is_empty() {
        return Err(invalid("split delimiter must not be empty"));
    }
    let k = new_labels.len();
    if k < 2 {
        return Err(invalid("split needs at least 2 new labels"));
    }
    let i = t.resolve(label, axis)?;
    let source = t.vector(i, axis);
    let mut parts: Vec<Vec<CellValue>> = vec![Vec::with_capacity(source.len()); k];
    for cell in &source {
        let text = cell.render();
        let mut pieces = if cell.is_null() { Vec::new() } else { text.splitn(k, delimiter).collect::<Vec<_>>() };
        pieces.resize(k, "");
        for (slot, piece) in parts.iter_mut().zip(pieces) {
            slot.push(CellValue::from_token(piece));
        }
    }
    append_items(t, new_labels.iter().cloned().zip(parts).collect(), axis)
}

/// Rewrites `$1`..`$9` group references as `${1}`..`${9}` so a reference
/// followed by text is not read as a named group.
fn expand_template(replace_with: &str) -> String {
    let mut out = String::with_capacity(replace_with.len());
    let mut chars = replace_with.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '$' {
            match chars.peek() {
                Some(d) if d.is_ascii_digit() => {
                    out.push_str("${");
                    out.push(*d);
                    out.push('}');
                    chars.next();
                    continue;
                }
                Some('$') => {
                    out.push_str("$$");
                    chars.next();
                    continue;
                }
                _ => {}
            }
        }
        out.push(c);
    }
    out
}

/// Replaces every match of `pattern` in each non-null cell's text with
/// `replace_with` and retypes the result.
pub fn format(
    t: &Table,
    label: &Selector,
    pattern: &Regex,
    replace_with: &str,
    axis: Axis,
) -> Result<Table, OpError> {
    let i = t.resolve(label, axis)?;
    let template = expand_template(replace_with);
    let mut rows = t.rows().to_vec();
    for k in 0..t.len_along(other(axis)) {
        let cell = match axis {
            Axis::Columns => &mut rows[k][i],
            Axis::Rows => &mut rows[i][k],
        };
        if cell.is_null() {
            continue;
        }
        let replaced = pattern.replace_all(&cell.render(), template.as_str()).into_owned();
        *cell = CellValue::from_token(&replaced);
    }
    rebuild(t, t.columns().to_vec(), rows)
}

fn other(axis: Axis) -> Axis {
    match axis {
        Axis::Rows => Axis::Columns,
        Axis::Columns => Axis::Rows,
    }
}

/// Lowercase, non-alphanumerics replaced by `_`; empty values become `null`.
pub fn sanitize_value(v: &CellValue) -> String {
    let text = v.render();
    if text.is_empty() {
        return "null".into();
    }
    text.chars()
        .map(|c| if c.is_alphanumeric() { c.to_lowercase().next().unwrap_or(c) } else { '_' })
        .collect()
}
