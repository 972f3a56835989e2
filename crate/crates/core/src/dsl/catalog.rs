//! Per-function signatures: parameter names, accepted kinds and defaults.

use super::DslFunction;

pub const AGGREGATE_FUNCTIONS: [&str; 6] = ["mean", "sum", "min", "max", "count", "median"];
pub const JOIN_KINDS: [&str; 4] = ["outer", "inner", "left", "right"];
pub const FILL_METHODS: [&str; 5] = ["mean", "median", "mode", "ffill", "bfill"];
pub const TEST_STRATEGIES: [&str; 1] = ["t-test"];

/// What a parameter slot accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// A table name ending in `.csv`.
    Table,
    /// A non-negative integer.
    Count,
    /// One row/column selector: a label string or a 1-based position.
    Label,
    /// One selector or a non-empty list of them.
    Labels,
    Axis,
    /// A value grid or a single scalar to broadcast.
    Values,
    /// Column → function mapping.
    Mapping,
    /// Free string (glue, delimiter, pattern, method, ...).
    Text,
    /// Any scalar cell value, including null.
    Scalar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Param {
    pub name: &'static str,
    pub kind: ParamKind,
    /// Optional parameters default to `Null` when absent.
    pub optional: bool,
}

const fn req(name: &'static str, kind: ParamKind) -> Param {
    Param { name, kind, optional: false }
}

const fn opt(name: &'static str, kind: ParamKind) -> Param {
    Param { name, kind, optional: true }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Signature {
    pub function: DslFunction,
    pub params: &'static [Param],
}

impl Signature {
    pub fn position(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn table_params(&self) -> impl Iterator<Item = (usize, &Param)> {
        self.params.iter().enumerate().filter(|(_, p)| p.kind == ParamKind::Table)
    }
}

use ParamKind::*;

const CREATE_TABLE: &[Param] = &[req("row_number", Count), req("column_number", Count)];
const DELETE_TABLE: &[Param] = &[req("table_name", Table)];
const PIVOT_TABLE: &[Param] = &[
    req("table", Table),
    req("index", Label),
    req("columns", Label),
    req("values", Label),
    req("aggfunc", Text),
];
const MERGE: &[Param] = &[
    req("table_a", Table),
    req("table_b", Table),
    opt("how", Text),
    opt("on", Labels),
];
const SUBTABLE: &[Param] = &[req("table", Table), req("labels", Labels), req("axis", Axis)];
const TRANSPOSE: &[Param] = &[req("table", Table)];
const INSERT: &[Param] = &[
    req("table", Table),
    req("index", Label),
    opt("index_name", Text),
    req("axis", Axis),
];
// `label` may be null only when a per-item condition selects the items.
const DROP: &[Param] = &[req("table", Table), opt("label", Labels), req("axis", Axis)];
const ASSIGN: &[Param] = &[
    req("table", Table),
    req("start_row_index", Label),
    req("end_row_index", Label),
    req("start_column_index", Label),
    req("end_column_index", Label),
    req("values", Values),
];
const MOVE: &[Param] = &[
    req("origin_table", Table),
    req("origin_index", Label),
    req("target_table", Table),
    req("target_index", Label),
    req("axis", Axis),
];
const COPY: &[Param] = &[
    req("origin_table", Table),
    req("origin_label", Label),
    req("target_table", Table),
    req("target_label", Label),
    req("axis", Axis),
];
const SWAP: &[Param] = &[
    req("table_a", Table),
    req("label_a", Label),
    req("table_b", Table),
    req("label_b", Label),
    req("axis", Axis),
];
const REARRANGE: &[Param] = &[
    req("table", Table),
    opt("by_values", Label),
    opt("by_array", Labels),
    req("axis", Axis),
];
const DIVIDE: &[Param] = &[req("table", Table), req("by", Label), req("axis", Axis)];
const FILL: &[Param] = &[
    req("table", Table),
    req("method", Text),
    opt("labels", Labels),
    req("axis", Axis),
];
const AGGREGATE: &[Param] = &[req("table", Table), req("functions", Mapping), req("axis", Axis)];
const TEST: &[Param] = &[
    req("table_a", Table),
    req("label_a", Label),
    req("table_b", Table),
    req("label_b", Label),
    req("strategy", Text),
    req("axis", Axis),
];
const COUNT: &[Param] = &[
    req("table", Table),
    req("label", Label),
    opt("value", Scalar),
    req("axis", Axis),
];
const CONCATENATE: &[Param] = &[
    req("table", Table),
    req("label_a", Label),
    req("label_b", Label),
    req("glue", Text),
    req("new_label", Text),
    req("axis", Axis),
];
const SPLIT: &[Param] = &[
    req("table", Table),
    req("label", Label),
    req("delimiter", Text),
    req("new_label_list", Labels),
    req("axis", Axis),
];
const FORMAT: &[Param] = &[
    req("table", Table),
    req("label", Label),
    req("pattern", Text),
    req("replace_with", Text),
    req("axis", Axis),
];

/// The signature catalog entry for `function`.
pub fn signature(function: DslFunction) -> Signature {
    let params = match function {
        DslFunction::CreateTable => CREATE_TABLE,
        DslFunction::DeleteTable => DELETE_TABLE,
        DslFunction::PivotTable => PIVOT_TABLE,
        DslFunction::Merge => MERGE,
        DslFunction::Subtable => SUBTABLE,
        DslFunction::Transpose => TRANSPOSE,
        DslFunction::Insert => INSERT,
        DslFunction::Drop => DROP,
        DslFunction::Assign => ASSIGN,
        DslFunction::Move => MOVE,
        DslFunction::Copy => COPY,
        DslFunction::Swap => SWAP,
        DslFunction::Rearrange => REARRANGE,
        DslFunction::Divide => DIVIDE,
        DslFunction::Fill => FILL,
        DslFunction::Aggregate => AGGREGATE,
        DslFunction::Test => TEST,
        DslFunction::Count => COUNT,
        DslFunction::Concatenate => CONCATENATE,
        DslFunction::Split => SPLIT,
        DslFunction::Format => FORMAT,
    };
    Signature { function, params }
}
