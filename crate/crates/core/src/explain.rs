//! Rule-based natural-language rendering of program steps.
//!
//! Each function has a fixed template of literal fragments and argument
//! slots. Fragments are joined with single spaces, except that a fragment
//! starting with a comma attaches directly to the previous one. Row-axis
//! calls read "row"/"rows" where the template says "column"/"columns".

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dsl::{Arg, ConditionExpr, DslCall, DslFunction, DslProgram, RelOp, Term};
use crate::table::Axis;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplainedStep {
    /// 1-based step number.
    pub index: usize,
    pub text: String,
    /// Index of the call in the program.
    pub call_ref: usize,
}

enum Piece {
    Lit(&'static str),
    Slot(String),
}

fn render_arg(arg: &Arg) -> String {
    match arg {
        Arg::Null => "null".into(),
        Arg::LabelList(v) => v.join(", "),
        Arg::ValueGrid(_) | Arg::Mapping(_) => dumps(&crate::dsl::arg_json(arg)),
        other => other.as_text().unwrap_or_default(),
    }
}

/// JSON with `", "` and `": "` separators and non-ASCII escaped as `\uXXXX`,
/// the default layout of Python's `json.dumps`.
fn dumps(v: &Value) -> String {
    match v {
        Value::Array(items) => format!("[{}]", items.iter().map(dumps).collect::<Vec<_>>().join(", ")),
        Value::Object(map) => {
            let body: Vec<String> = map.iter().map(|(k, v)| format!("{}: {}", dumps_str(k), dumps(v))).collect();
            format!("{{{}}}", body.join(", "))
        }
        Value::String(s) => dumps_str(s),
        other => other.to_string(),
    }
}

fn dumps_str(s: &str) -> String {
    let quoted = Value::String(s.to_string()).to_string();
    let mut out = String::with_capacity(quoted.len());
    for c in quoted.chars() {
        if c.is_ascii() {
            out.push(c);
        } else {
            let mut units = [0u16; 2];
            for u in c.encode_utf16(&mut units) {
                out.push_str(&format!("\\u{u:04x}"));
            }
        }
    }
    out
}

fn swap_axis_words(text: &str) -> String {
    text.split(' ')
        .map(|w| match w {
            "column" => "row",
            "columns" => "rows",
            other => other,
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn join(pieces: Vec<Piece>, rows: bool) -> String {
    let mut out = String::new();
    for p in pieces {
        let text = match p {
            Piece::Lit(l) if rows => swap_axis_words(l),
            Piece::Lit(l) => l.to_string(),
            Piece::Slot(s) => s,
        };
        if !out.is_empty() && !text.starts_with(',') {
            out.push(' ');
        }
        out.push_str(&text);
    }
    out
}

fn is_plural(arg: &Arg) -> bool {
    matches!(arg, Arg::LabelList(v) if v.len() > 1)
}

/// Translates one call without its condition.
fn template(call: &DslCall) -> Vec<Piece> {
    use DslFunction as F;
    use Piece::{Lit, Slot};
    let s = |name: &str| Slot(render_arg(call.arg(name)));
    match call.function {
        F::CreateTable => vec![
            Lit("Create a blank table with"),
            s("row_number"),
            Lit("rows and"),
            s("column_number"),
            Lit("columns"),
        ],
        F::DeleteTable => vec![Lit("Delete the table"), s("table_name")],
        F::Insert => vec![Lit("Insert a column at position"), s("index"), Lit("in the given table(s)")],
        F::Drop => match call.arg("label") {
            Arg::Null => vec![Lit("Drop the columns in the given table(s)")],
            label if is_plural(label) => vec![Lit("Drop the columns"), s("label"), Lit("in the given table(s)")],
            _ => vec![Lit("Drop the column"), s("label"), Lit("in the given table(s)")],
        },
        F::Assign => vec![Lit("Assign the values"), s("values"), Lit("in the given table(s)")],
        F::Move => vec![
            Lit("Move the column"),
            s("origin_index"),
            Lit("to column"),
            s("target_index"),
            Lit("in the given table(s)"),
        ],
        F::Copy => vec![
            Lit("Copy the column"),
            s("origin_label"),
            Lit("to column"),
            s("target_label"),
            Lit("in the given table(s)"),
        ],
        F::Swap => vec![
            Lit("Swap the column"),
            s("label_a"),
            Lit("and the column"),
            s("label_b"),
            Lit("in the given table(s)"),
        ],
        F::Merge => vec![
            Lit("Merge the given table(s) with the table"),
            s("table_b"),
            Lit("based on the values in the column"),
            s("on"),
        ],
        F::Concatenate => vec![
            Lit("Concatenate the columns"),
            s("label_a"),
            Lit("and"),
            s("label_b"),
            Lit("in the given table(s) with the glue"),
            s("glue"),
        ],
        F::Split => vec![
            Lit("Split the values in the column"),
            s("label"),
            Lit("in the given table(s) with the delimiter"),
            s("delimiter"),
        ],
        F::Transpose => vec![Lit("Transpose the given table(s)")],
        F::Aggregate => vec![Lit("Aggregate the given table(s) with the functions"), s("functions")],
        F::Test => vec![
            Lit("Test the columns"),
            s("label_a"),
            Lit("in table"),
            s("table_a"),
            Lit("and"),
            s("label_b"),
            Lit("in table"),
            s("table_b"),
            Lit("using the"),
            s("strategy"),
        ],
        F::Rearrange => {
            let key = if call.arg("by_values").is_null() { s("by_array") } else { s("by_values") };
            vec![Lit("Rearrange the columns in the given table(s) based on the values in the column"), key]
        }
        F::Format => vec![
            Lit("Format the values in the column"),
            s("label"),
            Lit("in the given table(s) with the pattern"),
            s("pattern"),
            Lit("and replace them with"),
            s("replace_with"),
        ],
        F::Divide => vec![Lit("Divide the given table(s) by the values in the column"), s("by")],
        F::Fill => {
            let tail = [Lit("in the given table(s) with the method"), s("method")];
            let mut head = match call.arg("labels") {
                Arg::Null => vec![Lit("Fill the missing values in all columns")],
                labels if is_plural(labels) => vec![Lit("Fill the missing values in the columns"), s("labels")],
                _ => vec![Lit("Fill the missing values in the column"), s("labels")],
            };
            head.extend(tail);
            head
        }
        F::PivotTable => vec![
            Lit("Create a pivot table in the given table(s) with the index"),
            s("index"),
            Lit(", columns"),
            s("columns"),
            Lit(", values"),
            s("values"),
            Lit(", and the aggregation function"),
            s("aggfunc"),
        ],
        F::Subtable => vec![Lit("Extract a subtable from the given table(s) based on the columns"), s("labels")],
        F::Count => vec![
            Lit("Count the occurrences of the value"),
            s("value"),
            Lit("in the column"),
            s("label"),
            Lit("in the given table(s)"),
        ],
    }
}

/// Trims a decimal rendering of `x` to at most six fractional digits.
fn trim_decimal(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

/// Condition prose: the missing-value threshold and p-value forms have
/// canonical sentences; anything else reads as its source text.
pub fn render_condition(c: &ConditionExpr) -> String {
    if let Some(cmp) = c.single() {
        match (&cmp.lhs, cmp.op, &cmp.rhs) {
            (Term::MissingRatio, RelOp::Gt, Term::Number(x, _)) => {
                return format!("if there are more than {}% of missing values", trim_decimal(x * 100.0));
            }
            (Term::Ident(name), RelOp::Lt, Term::Number(_, src)) if name == "p_value" => {
                return format!("if the p-value is less than {src}");
            }
            _ => {}
        }
    }
    format!("if {}", c.source())
}

/// One sentence for `call`, with the condition appended when present.
pub fn explain_call(call: &DslCall) -> String {
    let rows = call.arg("axis").as_axis() == Some(Axis::Rows);
    let body = join(template(call), rows);
    match &call.condition {
        Some(c) => format!("{body} {}.", render_condition(c)),
        None => body,
    }
}

pub fn explain_program(program: &DslProgram) -> Vec<ExplainedStep> {
    program
        .calls
        .iter()
        .enumerate()
        .map(|(i, call)| ExplainedStep { index: i + 1, text: explain_call(call), call_ref: i })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_program;

    fn first(doc_calls: &str) -> String {
        let p = parse_program(&format!(r#"{{"required_tables":[],"program":[{doc_calls}]}}"#)).unwrap();
        explain_call(&p.calls[0])
    }

    #[test]
    fn delete_and_create() {
        assert_eq!(first(r#"{"function":"delete_table","table_name":"sales.csv"}"#), "Delete the table sales.csv");
        assert_eq!(
            first(r#"{"function":"create_table","row_number":2,"column_number":3}"#),
            "Create a blank table with 2 rows and 3 columns"
        );
    }

    #[test]
    fn condition_suffix() {
        assert_eq!(
            first(r#"{"function":"drop","table":"t.csv","label":"Gender","axis":1,"condition":"missing_ratio > 0.3"}"#),
            "Drop the column Gender in the given table(s) if there are more than 30% of missing values."
        );
    }

    #[test]
    fn row_axis_swaps_words() {
        assert_eq!(
            first(r#"{"function":"drop","table":"t.csv","label":null,"axis":0,"condition":"missing_ratio > 0.5"}"#),
            "Drop the rows in the given table(s) if there are more than 50% of missing values."
        );
    }

    #[test]
    fn pivot_commas_attach() {
        assert_eq!(
            first(r#"{"function":"pivot_table","table":"t.csv","index":"a","columns":"b","values":"c","aggfunc":"sum"}"#),
            "Create a pivot table in the given table(s) with the index a, columns b, values c, and the aggregation function sum"
        );
    }

    #[test]
    fn condition_prose() {
        let c = |s: &str| render_condition(&ConditionExpr::parse(s).unwrap());
        assert_eq!(c("p_value < 0.05"), "if the p-value is less than 0.05");
        assert_eq!(c("1 < 2"), "if 1 < 2");
        assert_eq!(c("missing_ratio > 0.125"), "if there are more than 12.5% of missing values");
    }

    #[test]
    fn fill_scopes() {
        assert_eq!(
            first(r#"{"function":"fill","table":"t.csv","method":"mean","labels":null,"axis":1}"#),
            "Fill the missing values in all columns in the given table(s) with the method mean"
        );
        assert_eq!(
            first(r#"{"function":"fill","table":"t.csv","method":"mean","labels":["a","b"],"axis":1}"#),
            "Fill the missing values in the columns a, b in the given table(s) with the method mean"
        );
    }

    #[test]
    fn grids_render_like_json_dumps() {
        assert_eq!(
            first(r#"{"function":"assign","table":"t.csv","start_row_index":1,"end_row_index":1,"start_column_index":1,"end_column_index":2,"values":[[1,"é"]]}"#),
            r#"Assign the values [[1, "\u00e9"]] in the given table(s)"#
        );
        assert_eq!(
            first(r#"{"function":"aggregate","table":"t.csv","functions":{"Income":"mean","Age":"max"},"axis":1}"#),
            r#"Aggregate the given table(s) with the functions {"Income": "mean", "Age": "max"}"#
        );
    }

    #[test]
    fn explain_program_numbers_steps() {
        let p = parse_program(
            r#"{"required_tables":["t.csv"],"program":[{"function":"transpose","table":"t.csv"},{"function":"delete_table","table_name":"t.csv"}]}"#,
        )
        .unwrap();
        let steps = explain_program(&p);
        assert_eq!(steps.iter().map(|s| s.index).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(steps, explain_program(&p));
    }
}
