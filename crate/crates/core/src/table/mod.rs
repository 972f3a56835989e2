//! Typed in-memory tables, CSV ingestion and the versioned table store.

mod csv_io;
mod store;

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use csv_io::{emit_csv, ingest_csv, IngestError};
pub use store::{StoreError, TableRef, VersionedStore};

/// Tokens that ingest as [`CellValue::Null`].
pub const NULL_TOKENS: [&str; 5] = ["", "N/A", "NA", "null", "NULL"];

/// A single typed cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value")]
pub enum CellValue {
    Null,
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
}

impl CellValue {
    /// Types a raw token with the ingest cascade: null tokens, then integer,
    /// float, boolean and finally text. Numeric tokens with a redundant
    /// leading zero (`00336617`) stay text.
    pub fn from_token(token: &str) -> CellValue {
        if NULL_TOKENS.contains(&token) {
            return CellValue::Null;
        }
        if is_numeric_token(token) && !has_leading_zero(token) {
            if let Ok(i) = token.parse::<i64>() {
                return CellValue::Int(i);
            }
            if let Ok(f) = token.parse::<f64>() {
                if f.is_finite() {
                    return CellValue::Float(f);
                }
            }
        }
        if token.eq_ignore_ascii_case("true") {
            return CellValue::Bool(true);
        }
        if token.eq_ignore_ascii_case("false") {
            return CellValue::Bool(false);
        }
        CellValue::Text(token.to_string())
    }

    /// Text rendering used by CSV emission, string operations and prompts.
    /// `Null` renders as the empty string.
    pub fn render(&self) -> String {
        match self {
            CellValue::Null => String::new(),
            CellValue::Int(i) => i.to_string(),
            CellValue::Float(f) => format!("{f:?}"),
            CellValue::Text(s) => s.clone(),
            CellValue::Bool(b) => b.to_string(),
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, CellValue::Null)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            CellValue::Int(i) => Some(*i as f64),
            CellValue::Float(f) => Some(*f),
            _ => None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, CellValue::Int(_) | CellValue::Float(_))
    }

    fn sort_class(&self) -> u8 {
        match self {
            CellValue::Int(_) | CellValue::Float(_) => 0,
            CellValue::Bool(_) => 1,
            CellValue::Text(_) => 2,
            CellValue::Null => 3,
        }
    }

    /// Ordering used by `rearrange`, `min` and `max`: numbers first, then
    /// booleans, then text compared case-insensitively, with nulls last.
    pub fn sort_cmp(&self, other: &CellValue) -> Ordering {
        let by_class = self.sort_class().cmp(&other.sort_class());
        if by_class != Ordering::Equal {
            return by_class;
        }
        match (self, other) {
            (CellValue::Bool(a), CellValue::Bool(b)) => a.cmp(b),
            (CellValue::Text(a), CellValue::Text(b)) => a.to_lowercase().cmp(&b.to_lowercase()),
            (CellValue::Null, CellValue::Null) => Ordering::Equal,
            _ => {
                let (a, b) = (self.as_f64().unwrap_or(0.0), other.as_f64().unwrap_or(0.0));
                a.partial_cmp(&b).unwrap_or(Ordering::Equal)
            }
        }
    }
}

impl fmt::Display for CellValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl From<i64> for CellValue {
    fn from(v: i64) -> Self {
        CellValue::Int(v)
    }
}

impl From<f64> for CellValue {
    fn from(v: f64) -> Self {
        CellValue::Float(v)
    }
}

impl From<&str> for CellValue {
    fn from(v: &str) -> Self {
        CellValue::from_token(v)
    }
}

fn is_numeric_token(token: &str) -> bool {
    let body = token.strip_prefix(['+', '-']).unwrap_or(token);
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(pos) => (&body[..pos], Some(&body[pos + 1..])),
        None => (body, None),
    };
    let (int_part, frac_part) = match mantissa.find('.') {
        Some(pos) => (&mantissa[..pos], Some(&mantissa[pos + 1..])),
        None => (mantissa, None),
    };
    let digits = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
    let mantissa_ok = match frac_part {
        None => !int_part.is_empty() && digits(int_part),
        Some(frac) => {
            digits(int_part) && digits(frac) && !(int_part.is_empty() && frac.is_empty())
        }
    };
    let exponent_ok = match exponent {
        None => true,
        Some(exp) => {
            let exp = exp.strip_prefix(['+', '-']).unwrap_or(exp);
            !exp.is_empty() && digits(exp)
        }
    };
    mantissa_ok && exponent_ok
}

fn has_leading_zero(token: &str) -> bool {
    let body = token.strip_prefix(['+', '-']).unwrap_or(token);
    let int_part = body.split(['.', 'e', 'E']).next().unwrap_or("");
    int_part.len() > 1 && int_part.starts_with('0')
}

/// Row or column axis. Parses the aliases `0`, `"index"`, `"rows"` and `1`,
/// `"columns"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    Rows,
    Columns,
}

impl Axis {
    pub fn parse(token: &str) -> Option<Axis> {
        match token.trim().to_ascii_lowercase().as_str() {
            "0" | "index" | "rows" | "row" => Some(Axis::Rows),
            "1" | "columns" | "column" => Some(Axis::Columns),
            _ => None,
        }
    }

    pub fn from_number(n: f64) -> Option<Axis> {
        if n == 0.0 {
            Some(Axis::Rows)
        } else if n == 1.0 {
            Some(Axis::Columns)
        } else {
            None
        }
    }

    /// Canonical exchange-format value.
    pub fn as_number(self) -> i64 {
        match self {
            Axis::Rows => 0,
            Axis::Columns => 1,
        }
    }
}

/// Addresses one row or column inside a table. Rows are addressed by a
/// 1-based data-row position (the header is never a row); columns by name or
/// 1-based position.
#[derive(Debug, Clone, PartialEq)]
pub enum Selector {
    Name(String),
    Position(usize),
}

impl Selector {
    pub fn from_text(text: &str) -> Selector {
        Selector::Name(text.to_string())
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::Name(n) => f.write_str(n),
            Selector::Position(p) => write!(f, "{p}"),
        }
    }
}

/// Errors raised by structural table operations.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TableError {
    #[error("table name {0:?} must end with \".csv\"")]
    BadName(String),
    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),
    #[error("row {row} has {got} cells, expected {expected}")]
    RaggedRow { row: usize, got: usize, expected: usize },
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("unknown row {0}")]
    UnknownRow(String),
}

/// A named grid of typed cells with an ordered, unique header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    name: String,
    columns: Vec<String>,
    rows: Vec<Vec<CellValue>>,
}

impl Table {
    pub fn new(
        name: impl Into<String>,
        columns: Vec<String>,
        rows: Vec<Vec<CellValue>>,
    ) -> Result<Table, TableError> {
        let name = name.into();
        if name.len() <= 4 || !name.ends_with(".csv") {
            return Err(TableError::BadName(name));
        }
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].contains(c) {
                return Err(TableError::DuplicateColumn(c.clone()));
            }
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != columns.len() {
                return Err(TableError::RaggedRow {
                    row: i + 1,
                    got: r.len(),
                    expected: columns.len(),
                });
            }
        }
        Ok(Table { name, columns, rows })
    }

    /// Builds a table from string literals typed with the ingest cascade.
    /// Convenient for tests and fixtures.
    pub fn from_strs(name: &str, columns: &[&str], rows: &[&[&str]]) -> Result<Table, TableError> {
        Table::new(
            name,
            columns.iter().map(|c| c.to_string()).collect(),
            rows.iter()
                .map(|r| r.iter().map(|t| CellValue::from_token(t)).collect())
                .collect(),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<CellValue>] {
        &self.rows
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn cell(&self, row: usize, col: usize) -> &CellValue {
        &self.rows[row][col]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column_values(&self, idx: usize) -> Vec<CellValue> {
        self.rows.iter().map(|r| r[idx].clone()).collect()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Table {
        self.name = name.into();
        self
    }

    pub fn into_parts(self) -> (String, Vec<String>, Vec<Vec<CellValue>>) {
        (self.name, self.columns, self.rows)
    }

    /// Stem of the table name without the `.csv` suffix.
    pub fn stem(&self) -> &str {
        self.name.strip_suffix(".csv").unwrap_or(&self.name)
    }

    /// Resolves a column selector to a 0-based index. Text selectors match
    /// names first and fall back to a 1-based position when they are all
    /// digits.
    pub fn resolve_column(&self, sel: &Selector) -> Result<usize, TableError> {
        match sel {
            Selector::Name(n) => {
                if let Some(i) = self.column_index(n) {
                    return Ok(i);
                }
                match n.trim().parse::<usize>() {
                    Ok(p) if p >= 1 && p <= self.ncols() => Ok(p - 1),
                    _ => Err(TableError::UnknownColumn(n.clone())),
                }
            }
            Selector::Position(p) if *p >= 1 && *p <= self.ncols() => Ok(p - 1),
            Selector::Position(p) => Err(TableError::UnknownColumn(p.to_string())),
        }
    }

    /// Resolves a row selector (1-based data-row position) to a 0-based index.
    pub fn resolve_row(&self, sel: &Selector) -> Result<usize, TableError> {
        let pos = match sel {
            Selector::Position(p) => Some(*p),
            Selector::Name(n) => n.trim().parse::<usize>().ok(),
        };
        match pos {
            Some(p) if p >= 1 && p <= self.nrows() => Ok(p - 1),
            _ => Err(TableError::UnknownRow(sel.to_string())),
        }
    }

    pub fn resolve(&self, sel: &Selector, axis: Axis) -> Result<usize, TableError> {
        match axis {
            Axis::Rows => self.resolve_row(sel),
            Axis::Columns => self.resolve_column(sel),
        }
    }

    /// Cells of one row or column as an owned vector.
    pub fn vector(&self, idx: usize, axis: Axis) -> Vec<CellValue> {
        match axis {
            Axis::Rows => self.rows[idx].clone(),
            Axis::Columns => self.column_values(idx),
        }
    }

    /// Number of items (rows or columns) along the axis.
    pub fn len_along(&self, axis: Axis) -> usize {
        match axis {
            Axis::Rows => self.nrows(),
            Axis::Columns => self.ncols(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cascade_types_tokens() {
        assert_eq!(CellValue::from_token("9"), CellValue::Int(9));
        assert_eq!(CellValue::from_token("3.5"), CellValue::Float(3.5));
        assert_eq!(CellValue::from_token("N/A"), CellValue::Null);
        assert_eq!(CellValue::from_token(""), CellValue::Null);
        assert_eq!(CellValue::from_token("TRUE"), CellValue::Bool(true));
        assert_eq!(CellValue::from_token("00336617"), CellValue::Text("00336617".into()));
        assert_eq!(CellValue::from_token("0"), CellValue::Int(0));
        assert_eq!(CellValue::from_token("0.25"), CellValue::Float(0.25));
        assert_eq!(CellValue::from_token("00.5"), CellValue::Text("00.5".into()));
        assert_eq!(CellValue::from_token("1e3"), CellValue::Float(1000.0));
        assert_eq!(CellValue::from_token("NaN"), CellValue::Text("NaN".into()));
        assert_eq!(CellValue::from_token("inf"), CellValue::Text("inf".into()));
        assert_eq!(CellValue::from_token("."), CellValue::Text(".".into()));
    }

    #[test]
    fn float_rendering_reingests_as_float() {
        for f in [2.0, 0.1, -0.0, 1e21, 1e-7, 123.456] {
            let v = CellValue::Float(f);
            assert_eq!(CellValue::from_token(&v.render()), v);
        }
    }

    #[test]
    fn sort_order_numbers_text_null() {
        let mut v = vec![
            CellValue::Null,
            CellValue::Text("bob".into()),
            CellValue::Int(3),
            CellValue::Text("Alice".into()),
            CellValue::Float(1.5),
        ];
        v.sort_by(|a, b| a.sort_cmp(b));
        assert_eq!(
            v,
            vec![
                CellValue::Float(1.5),
                CellValue::Int(3),
                CellValue::Text("Alice".into()),
                CellValue::Text("bob".into()),
                CellValue::Null,
            ]
        );
    }

    #[test]
    fn axis_aliases() {
        assert_eq!(Axis::parse("index"), Some(Axis::Rows));
        assert_eq!(Axis::parse("0"), Some(Axis::Rows));
        assert_eq!(Axis::parse("columns"), Some(Axis::Columns));
        assert_eq!(Axis::from_number(1.0), Some(Axis::Columns));
        assert_eq!(Axis::parse("diagonal"), None);
    }

    #[test]
    fn table_invariants() {
        assert!(matches!(
            Table::from_strs("t.csv", &["a", "a"], &[]),
            Err(TableError::DuplicateColumn(_))
        ));
        assert!(matches!(Table::from_strs("t", &["a"], &[]), Err(TableError::BadName(_))));
        assert!(matches!(
            Table::new("t.csv", vec!["a".into()], vec![vec![]]),
            Err(TableError::RaggedRow { .. })
        ));
    }

    #[test]
    fn selectors_resolve() {
        let t = Table::from_strs("t.csv", &["x", "y"], &[&["1", "2"], &["3", "4"]]).unwrap();
        assert_eq!(t.resolve_column(&Selector::Name("y".into())), Ok(1));
        assert_eq!(t.resolve_column(&Selector::Position(1)), Ok(0));
        assert_eq!(t.resolve_column(&Selector::Name("2".into())), Ok(1));
        assert_eq!(t.resolve_row(&Selector::Name("1".into())), Ok(0));
        assert!(t.resolve_row(&Selector::Position(0)).is_err());
        assert!(t.resolve_row(&Selector::Position(3)).is_err());
    }
}
