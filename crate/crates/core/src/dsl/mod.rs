//! Wrangling programs: the closed function set, argument model, JSON exchange
//! format and the static checker.

mod catalog;
mod check;
mod condition;
mod exchange;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::table::{Axis, CellValue};

pub use catalog::{signature, Param, ParamKind, Signature, AGGREGATE_FUNCTIONS, FILL_METHODS, JOIN_KINDS, TEST_STRATEGIES};
pub use check::{check_program, check_program_with, render_diagnostics, DiagnosticCode, SyntaxDiagnostic};
pub use condition::{CondError, ConditionExpr, RelOp, Term, KNOWN_SCALARS};
pub use exchange::{parse_calls, parse_program, parse_program_value, program_to_json, ProgramError};
pub(crate) use exchange::arg_json;

/// The closed set of DSL functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DslFunction {
    CreateTable,
    DeleteTable,
    PivotTable,
    Merge,
    Subtable,
    Transpose,
    Insert,
    Drop,
    Assign,
    Move,
    Copy,
    Swap,
    Rearrange,
    Divide,
    Fill,
    Aggregate,
    Test,
    Count,
    Concatenate,
    Split,
    Format,
}

impl DslFunction {
    pub const ALL: [DslFunction; 21] = [
        DslFunction::CreateTable,
        DslFunction::DeleteTable,
        DslFunction::PivotTable,
        DslFunction::Merge,
        DslFunction::Subtable,
        DslFunction::Transpose,
        DslFunction::Insert,
        DslFunction::Drop,
        DslFunction::Assign,
        DslFunction::Move,
        DslFunction::Copy,
        DslFunction::Swap,
        DslFunction::Rearrange,
        DslFunction::Divide,
        DslFunction::Fill,
        DslFunction::Aggregate,
        DslFunction::Test,
        DslFunction::Count,
        DslFunction::Concatenate,
        DslFunction::Split,
        DslFunction::Format,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DslFunction::CreateTable => "create_table",
            DslFunction::DeleteTable => "delete_table",
            DslFunction::PivotTable => "pivot_table",
            DslFunction::Merge => "merge",
            DslFunction::Subtable => "subtable",
            DslFunction::Transpose => "transpose",
            DslFunction::Insert => "insert",
            DslFunction::Drop => "drop",
            DslFunction::Assign => "assign",
            DslFunction::Move => "move",
            DslFunction::Copy => "copy",
            DslFunction::Swap => "swap",
            DslFunction::Rearrange => "rearrange",
            DslFunction::Divide => "divide",
            DslFunction::Fill => "fill",
            DslFunction::Aggregate => "aggregate",
            DslFunction::Test => "test",
            DslFunction::Count => "count",
            DslFunction::Concatenate => "concatenate",
            DslFunction::Split => "split",
            DslFunction::Format => "format",
        }
    }

    pub fn from_name(name: &str) -> Option<DslFunction> {
        DslFunction::ALL.iter().copied().find(|f| f.name() == name)
    }
}

impl fmt::Display for DslFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One argument value of a call, positionally aligned with the function's
/// signature. Absent optional parameters are `Null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Arg {
    TableName(String),
    Number(f64),
    Label(String),
    LabelList(Vec<String>),
    Axis(Axis),
    ValueGrid(Vec<Vec<CellValue>>),
    Mapping(Vec<(String, String)>),
    Null,
}

impl Arg {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Arg::TableName(_) => "table name",
            Arg::Number(_) => "number",
            Arg::Label(_) => "label",
            Arg::LabelList(_) => "label list",
            Arg::Axis(_) => "axis",
            Arg::ValueGrid(_) => "value grid",
            Arg::Mapping(_) => "mapping",
            Arg::Null => "null",
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Arg::Null)
    }

    pub fn as_table(&self) -> Option<&str> {
        match self {
            Arg::TableName(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_axis(&self) -> Option<Axis> {
        match self {
            Arg::Axis(a) => Some(*a),
            _ => None,
        }
    }

    /// Text of a label-like argument; numbers render without a fraction when
    /// integral.
    pub fn as_text(&self) -> Option<String> {
        match self {
            Arg::Label(s) | Arg::TableName(s) => Some(s.clone()),
            Arg::Number(n) => Some(format_number(*n)),
            _ => None,
        }
    }

    /// Labels of a single-or-list argument.
    pub fn as_labels(&self) -> Option<Vec<String>> {
        match self {
            Arg::LabelList(v) => Some(v.clone()),
            Arg::Label(_) | Arg::Number(_) => self.as_text().map(|s| vec![s]),
            _ => None,
        }
    }
}

pub(crate) fn format_number(n: f64) -> String {
    if n.fract() == 0.0 && n.abs() < 1e15 {
        format!("{}", n as i64)
    } else {
        format!("{n}")
    }
}

/// One program step.
#[derive(Debug, Clone, PartialEq)]
pub struct DslCall {
    pub function: DslFunction,
    pub args: Vec<Arg>,
    pub condition: Option<ConditionExpr>,
}

impl DslCall {
    pub fn new(function: DslFunction, args: Vec<Arg>) -> DslCall {
        DslCall { function, args, condition: None }
    }

    pub fn with_condition(mut self, condition: ConditionExpr) -> DslCall {
        self.condition = Some(condition);
        self
    }

    /// Argument by signature parameter name; `Null` when the slot is absent.
    pub fn arg(&self, name: &str) -> &Arg {
        const NULL: Arg = Arg::Null;
        signature(self.function)
            .position(name)
            .and_then(|i| self.args.get(i))
            .unwrap_or(&NULL)
    }
}

/// A synthesized program: the tables it needs plus its ordered calls.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DslProgram {
    pub required_tables: Vec<String>,
    pub calls: Vec<DslCall>,
}

impl DslProgram {
    pub fn new(required_tables: Vec<String>, calls: Vec<DslCall>) -> DslProgram {
        DslProgram { required_tables, calls }
    }

    pub fn is_empty(&self) -> bool {
        self.calls.is_empty()
    }

    pub fn to_json(&self) -> serde_json::Value {
        program_to_json(self)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("program serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn function_names_round_trip() {
        for f in DslFunction::ALL {
            assert_eq!(DslFunction::from_name(f.name()), Some(f));
        }
        assert_eq!(DslFunction::from_name("sort_rows"), None);
    }

    #[test]
    fn every_function_has_one_signature() {
        for f in DslFunction::ALL {
            let sig = signature(f);
            assert_eq!(sig.function, f);
            assert!(!sig.params.is_empty());
        }
    }
}
