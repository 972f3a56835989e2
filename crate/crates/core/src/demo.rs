//! Demonstration capture: spreadsheet edits recorded as events, merged into
//! row and column edits, and serialized as the table-diff prompt block.
//!
//! Coordinates are spreadsheet-style: row 0 is the header, data rows start at
//! 1, and columns are letters (`A`, `B`, ..., `AA`).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::table::{CellValue, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DemoKind {
    Insert,
    Delete,
    Edit,
    CopyPaste,
    DragDrop,
    EditRow,
    EditColumn,
}

impl fmt::Display for DemoKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// One (old, new) pair of a merged row or column edit. `at` is the row
/// number for a column edit and the column letter for a row edit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditPair {
    pub at: String,
    pub old: CellValue,
    pub new: CellValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoEvent {
    pub kind: DemoKind,
    pub table: String,
    #[serde(default)]
    pub row: Option<usize>,
    #[serde(default)]
    pub column: Option<String>,
    #[serde(default)]
    pub old: Option<CellValue>,
    #[serde(default)]
    pub new: Option<CellValue>,
    /// Kind-specific fields such as `Source`/`Target` or `From`/`To`.
    #[serde(default)]
    pub payload: BTreeMap<String, String>,
    /// Ordered pairs of a merged edit.
    #[serde(default)]
    pub pairs: Vec<EditPair>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DemoError {
    #[error("{kind} event is missing {field}")]
    Missing { kind: DemoKind, field: &'static str },
    #[error("bad column letter {0:?}")]
    BadColumn(String),
}

/// 1-based column number to spreadsheet letters.
pub fn column_letter(mut n: usize) -> String {
    let mut out = Vec::new();
    while n > 0 {
        let r = (n - 1) % 26;
        out.push(b'A' + r as u8);
        n = (n - 1) / 26;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

/// Spreadsheet letters to a 1-based column number.
pub fn column_number(letters: &str) -> Option<usize> {
    if letters.is_empty() || !letters.bytes().all(|b| b.is_ascii_uppercase()) {
        return None;
    }
    Some(letters.bytes().fold(0, |acc, b| acc * 26 + (b - b'A' + 1) as usize))
}

impl DemoEvent {
    fn bare(kind: DemoKind, table: &str) -> DemoEvent {
        DemoEvent {
            kind,
            table: table.to_string(),
            row: None,
            column: None,
            old: None,
            new: None,
            payload: BTreeMap::new(),
            pairs: Vec::new(),
        }
    }

    pub fn edit(table: &str, row: usize, column: &str, old: CellValue, new: CellValue) -> DemoEvent {
        DemoEvent { row: Some(row), column: Some(column.into()), old: Some(old), new: Some(new), ..Self::bare(DemoKind::Edit, table) }
    }

    pub fn insert_row(table: &str, row: usize) -> DemoEvent {
        DemoEvent { row: Some(row), ..Self::bare(DemoKind::Insert, table) }
    }

    pub fn insert_column(table: &str, column: &str) -> DemoEvent {
        DemoEvent { column: Some(column.into()), ..Self::bare(DemoKind::Insert, table) }
    }

    pub fn delete_row(table: &str, row: usize) -> DemoEvent {
        DemoEvent { row: Some(row), ..Self::bare(DemoKind::Delete, table) }
    }

    pub fn delete_column(table: &str, column: &str) -> DemoEvent {
        DemoEvent { column: Some(column.into()), ..Self::bare(DemoKind::Delete, table) }
    }

    pub fn copy_paste(table: &str, source: &str, target: &str) -> DemoEvent {
        let payload = BTreeMap::from([("Source".to_string(), source.to_string()), ("Target".to_string(), target.to_string())]);
        DemoEvent { payload, ..Self::bare(DemoKind::CopyPaste, table) }
    }

    pub fn drag_drop(table: &str, from: &str, to: &str) -> DemoEvent {
        let payload = BTreeMap::from([("From".to_string(), from.to_string()), ("To".to_string(), to.to_string())]);
        DemoEvent { payload, ..Self::bare(DemoKind::DragDrop, table) }
    }

    fn validate(&self) -> Result<(), DemoError> {
        let missing = |field| Err(DemoError::Missing { kind: self.kind, field });
        if let Some(c) = &self.column {
            column_number(c).ok_or_else(|| DemoError::BadColumn(c.clone()))?;
        }
        match self.kind {
            DemoKind::Edit => {
                if self.row.is_none() {
                    return missing("row");
                }
                if self.column.is_none() {
                    return missing("column");
                }
                if self.old.is_none() {
                    return missing("old");
                }
                if self.new.is_none() {
                    return missing("new");
                }
            }
            DemoKind::Insert | DemoKind::Delete => {
                if self.row.is_none() && self.column.is_none() {
                    return missing("row or column");
                }
            }
            DemoKind::EditColumn => {
                if self.column.is_none() {
                    return missing("column");
                }
                if self.pairs.is_empty() {
                    return missing("pairs");
                }
            }
            DemoKind::EditRow => {
                if self.row.is_none() {
                    return missing("row");
                }
                if self.pairs.is_empty() {
                    return missing("pairs");
                }
            }
            DemoKind::CopyPaste | DemoKind::DragDrop => {}
        }
        Ok(())
    }

    /// Cell writes `(row, column number, new value)` implied by an edit
    /// event, in application order.
    pub fn cell_writes(&self) -> Vec<(usize, usize, CellValue)> {
        let col = || self.column.as_deref().and_then(column_number);
        match self.kind {
            DemoKind::Edit => match (self.row, col(), &self.new) {
                (Some(r), Some(c), Some(v)) => vec![(r, c, v.clone())],
                _ => Vec::new(),
            },
            DemoKind::EditColumn => col()
                .map(|c| self.pairs.iter().filter_map(|p| Some((p.at.parse().ok()?, c, p.new.clone()))).collect())
                .unwrap_or_default(),
            DemoKind::EditRow => self
                .row
                .map(|r| self.pairs.iter().filter_map(|p| Some((r, column_number(&p.at)?, p.new.clone()))).collect())
                .unwrap_or_default(),
            _ => Vec::new(),
        }
    }
}

/// Renders a cell for the diff block: `null` for nulls, JSON-quoted when the
/// text would be ambiguous inside the brace syntax.
fn render_value(v: &CellValue) -> String {
    match v {
        CellValue::Null => "null".into(),
        CellValue::Text(s) => {
            let plain = !s.is_empty()
                && s.trim() == s
                && s != "null"
                && !s.chars().any(|c| matches!(c, ',' | '{' | '}' | ':' | '"' | '\n' | '\r'));
            if plain {
                s.clone()
            } else {
                serde_json::Value::String(s.clone()).to_string()
            }
        }
        other => other.render(),
    }
}

impl fmt::Display for DemoEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut fields: Vec<String> = Vec::new();
        if let Some(r) = self.row {
            fields.push(format!("Row:{r}"));
        }
        if let Some(c) = &self.column {
            fields.push(format!("Column:{c}"));
        }
        if let Some(o) = &self.old {
            fields.push(format!("Old:{}", render_value(o)));
        }
        if let Some(n) = &self.new {
            fields.push(format!("New:{}", render_value(n)));
        }
        for (k, v) in &self.payload {
            fields.push(format!("{k}:{}", render_value(&CellValue::Text(v.clone()))));
        }
        fields.push(format!("Type:{}", self.kind));
        if matches!(self.kind, DemoKind::EditRow | DemoKind::EditColumn) {
            fields.push(format!("Cells:{}", self.pairs.len()));
        }
        write!(f, "{{{}}}", fields.join(","))?;
        let key = if self.kind == DemoKind::EditColumn { "Row" } else { "Column" };
        for p in &self.pairs {
            write!(f, "\n  {{{key}:{},Old:{},New:{}}}", p.at, render_value(&p.old), render_value(&p.new))?;
        }
        Ok(())
    }
}

/// Ordered demonstration log plus the data shape of each table involved.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TableDiff {
    events: Vec<DemoEvent>,
    /// Data rows and columns per table.
    shapes: BTreeMap<String, (usize, usize)>,
}

impl TableDiff {
    pub fn new() -> TableDiff {
        TableDiff::default()
    }

    pub fn events(&self) -> &[DemoEvent] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn has_table(&self, name: &str) -> bool {
        self.shapes.contains_key(name)
    }

    /// Forgets the logged events but keeps the registered table shapes.
    pub fn clear_events(&mut self) {
        self.events.clear();
    }

    pub fn register_table(&mut self, table: &Table) {
        self.shapes.insert(table.name().to_string(), (table.nrows(), table.ncols()));
    }

    /// Appends `event` and re-runs the merge pass for its table.
    pub fn log_event(&mut self, event: DemoEvent) -> Result<(), DemoError> {
        event.validate()?;
        if let Some(shape) = self.shapes.get_mut(&event.table) {
            match (event.kind, event.row, &event.column) {
                (DemoKind::Insert, Some(_), None) => shape.0 += 1,
                (DemoKind::Insert, None, Some(_)) => shape.1 += 1,
                (DemoKind::Delete, Some(_), None) => shape.0 = shape.0.saturating_sub(1),
                (DemoKind::Delete, None, Some(_)) => shape.1 = shape.1.saturating_sub(1),
                _ => {}
            }
        }
        let table = event.table.clone();
        self.events.push(event);
        self.merge_table(&table);
        Ok(())
    }

    /// Records `table`'s shape and merges its edit runs.
    pub fn merge_edits(&mut self, table: &Table) {
        self.register_table(table);
        self.merge_table(table.name());
    }

    /// Replaces maximal runs of consecutive plain edits of `table` that cover
    /// every data cell of a column (checked first) or of a row by a single
    /// merged edit, placed where the last covered edit was.
    fn merge_table(&mut self, table: &str) {
        let Some(&(nrows, ncols)) = self.shapes.get(table) else { return };
        let is_plain = |e: &DemoEvent| e.kind == DemoKind::Edit && e.table == table;
        let mut out: Vec<DemoEvent> = Vec::with_capacity(self.events.len());
        let mut i = 0;
        while i < self.events.len() {
            if !is_plain(&self.events[i]) {
                out.push(self.events[i].clone());
                i += 1;
                continue;
            }
            let mut j = i;
            while j < self.events.len() && is_plain(&self.events[j]) {
                j += 1;
            }
            out.extend(merge_run(&self.events[i..j], table, nrows, ncols));
            i = j;
        }
        self.events = out;
    }
}

fn merge_run(run: &[DemoEvent], table: &str, nrows: usize, ncols: usize) -> Vec<DemoEvent> {
    // slots[k] holds either the original edit k or a merged edit placed at k.
    let mut slots: Vec<Option<DemoEvent>> = run.iter().cloned().map(Some).collect();
    let mut consumed = vec![false; run.len()];
    let cell = |e: &DemoEvent| (e.row.expect("edit row"), e.column.clone().expect("edit column"));

    // Builds a merged event from the live edits selected by `pick`, if they
    // cover `want` distinct keys.
    let try_merge = |consumed: &mut Vec<bool>,
                     slots: &mut Vec<Option<DemoEvent>>,
                     pick: &dyn Fn(usize, &str) -> Option<String>,
                     want: usize,
                     make: &dyn Fn(Vec<EditPair>) -> DemoEvent|
     -> bool {
        let members: Vec<usize> = (0..run.len())
            .filter(|&k| !consumed[k])
            .filter(|&k| {
                let (r, c) = cell(&run[k]);
                pick(r, &c).is_some()
            })
            .collect();
        let keys: BTreeSet<String> = members
            .iter()
            .map(|&k| {
                let (r, c) = cell(&run[k]);
                pick(r, &c).expect("member")
            })
            .collect();
        if want == 0 || keys.len() != want {
            return false;
        }
        let mut by_key: BTreeMap<(usize, String), EditPair> = BTreeMap::new();
        for &k in &members {
            let (r, c) = cell(&run[k]);
            let at = pick(r, &c).expect("member");
            let order = at.parse::<usize>().ok().or_else(|| column_number(&at)).unwrap_or(0);
            let e = &run[k];
            by_key
                .entry((order, at.clone()))
                .and_modify(|p| p.new = e.new.clone().expect("edit new"))
                .or_insert(EditPair { at, old: e.old.clone().expect("edit old"), new: e.new.clone().expect("edit new") });
        }
        let last = *members.last().expect("non-empty");
        for &k in &members {
            consumed[k] = true;
            slots[k] = None;
        }
        slots[last] = Some(make(by_key.into_values().collect()));
        true
    };

    loop {
        let mut changed = false;
        let letters: BTreeSet<String> =
            (0..run.len()).filter(|&k| !consumed[k]).filter_map(|k| run[k].column.clone()).collect();
        for letter in letters {
            let l = letter.clone();
            let pick = move |r: usize, c: &str| (c == l && r >= 1 && r <= nrows).then(|| r.to_string());
            let make = |pairs| DemoEvent {
                column: Some(letter.clone()),
                pairs,
                ..DemoEvent::bare(DemoKind::EditColumn, table)
            };
            changed |= try_merge(&mut consumed, &mut slots, &pick, nrows, &make);
        }
        let rows: BTreeSet<usize> = (0..run.len()).filter(|&k| !consumed[k]).filter_map(|k| run[k].row).collect();
        for row in rows.into_iter().filter(|&r| r >= 1) {
            let pick = move |r: usize, c: &str| {
                (r == row && column_number(c).is_some_and(|n| n <= ncols)).then(|| c.to_string())
            };
            let make = |pairs| DemoEvent { row: Some(row), pairs, ..DemoEvent::bare(DemoKind::EditRow, table) };
            changed |= try_merge(&mut consumed, &mut slots, &pick, ncols, &make);
        }
        if !changed {
            break;
        }
    }
    slots.into_iter().flatten().collect()
}

/// The diff block: one line per event (merged edits add indented pair
/// lines), with a `[table]` header before each table's events when the diff
/// spans more than one table.
pub fn serialize_diff(diff: &TableDiff) -> String {
    let tables: BTreeSet<&str> = diff.events.iter().map(|e| e.table.as_str()).collect();
    let headed = tables.len() > 1;
    let mut lines = Vec::new();
    let mut current: Option<&str> = None;
    for e in &diff.events {
        if headed && current != Some(e.table.as_str()) {
            lines.push(format!("[{}]", e.table));
            current = Some(e.table.as_str());
        }
        lines.push(e.to_string());
    }
    lines.join("\n")
}

impl fmt::Display for TableDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_diff(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: usize, cols: usize) -> Table {
        let columns = (1..=cols).map(|i| format!("c{i}")).collect();
        Table::new("t.csv", columns, vec![vec![CellValue::Int(0); cols]; rows]).unwrap()
    }

    #[test]
    fn single_edit_line() {
        let mut d = TableDiff::new();
        d.log_event(DemoEvent::edit("t.csv", 5, "E", CellValue::Int(0), CellValue::Int(3370))).unwrap();
        assert_eq!(serialize_diff(&d), "{Row:5,Column:E,Old:0,New:3370,Type:Edit}");
    }

    #[test]
    fn full_column_merges() {
        let mut d = TableDiff::new();
        d.register_table(&table(3, 2));
        for r in 1..=3 {
            d.log_event(DemoEvent::edit("t.csv", r, "B", CellValue::Int(0), CellValue::Int(r as i64))).unwrap();
        }
        assert_eq!(d.events().len(), 1);
        assert_eq!(
            serialize_diff(&d),
            "{Column:B,Type:EditColumn,Cells:3}\n  {Row:1,Old:0,New:1}\n  {Row:2,Old:0,New:2}\n  {Row:3,Old:0,New:3}"
        );
    }

    #[test]
    fn partial_coverage_stays() {
        let mut d = TableDiff::new();
        d.register_table(&table(3, 2));
        for r in 1..=2 {
            d.log_event(DemoEvent::edit("t.csv", r, "B", CellValue::Int(0), CellValue::Int(1))).unwrap();
        }
        assert_eq!(d.events().len(), 2);
    }

    #[test]
    fn one_column_row_is_a_column_merge() {
        let mut d = TableDiff::new();
        d.register_table(&table(1, 1));
        d.log_event(DemoEvent::edit("t.csv", 1, "A", CellValue::Int(0), CellValue::Int(1))).unwrap();
        assert_eq!(d.events()[0].kind, DemoKind::EditColumn);
        let mut d = TableDiff::new();
        d.register_table(&table(2, 1));
        d.log_event(DemoEvent::edit("t.csv", 1, "A", CellValue::Int(0), CellValue::Int(1))).unwrap();
        assert_eq!(d.events()[0].kind, DemoKind::EditRow);
    }

    #[test]
    fn letters_round_trip() {
        for n in [1, 5, 26, 27, 52, 703] {
            assert_eq!(column_number(&column_letter(n)), Some(n));
        }
        assert_eq!(column_letter(5), "E");
        assert_eq!(column_letter(27), "AA");
    }

    #[test]
    fn malformed_edit_is_rejected() {
        let mut d = TableDiff::new();
        let mut e = DemoEvent::edit("t.csv", 1, "A", CellValue::Null, CellValue::Int(1));
        e.old = None;
        assert!(d.log_event(e).is_err());
    }

    #[test]
    fn other_kinds_serialize() {
        assert_eq!(DemoEvent::delete_column("t.csv", "C").to_string(), "{Column:C,Type:Delete}");
        assert_eq!(DemoEvent::drag_drop("t.csv", "B", "A").to_string(), "{From:B,To:A,Type:DragDrop}");
        assert_eq!(
            DemoEvent::edit("t.csv", 1, "A", CellValue::Null, CellValue::Text("a, b".into())).to_string(),
            "{Row:1,Column:A,Old:null,New:\"a, b\",Type:Edit}"
        );
    }
}
