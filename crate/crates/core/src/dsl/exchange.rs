//! JSON exchange format:
//!
//! ```json
//! {"required_tables": ["a.csv"],
//!  "program": [{"function": "drop", "table": "a.csv", "label": "Gender", "axis": 1,
//!               "condition": "missing_ratio > 0.3"}]}
//! ```
//!
//! Calls may also carry positional arguments under `"args"`.

use serde_json::{Map, Number, Value};

use super::catalog::{signature, ParamKind};
use super::check::{DiagnosticCode, SyntaxDiagnostic};
use super::{format_number, Arg, ConditionExpr, DslCall, DslFunction, DslProgram};
use crate::table::{Axis, CellValue};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProgramError {
    /// The document is not shaped like a program at all.
    #[error("malformed program document: {0}")]
    Malformed(String),
    /// The document is shaped correctly but some calls cannot be represented.
    #[error("program has {} syntax error(s)", .0.len())]
    Diagnostics(Vec<SyntaxDiagnostic>),
}

/// Parses a program exchange document from JSON text.
pub fn parse_program(doc: &str) -> Result<DslProgram, ProgramError> {
    let value: Value = serde_json::from_str(doc).map_err(|e| ProgramError::Malformed(e.to_string()))?;
    parse_program_value(&value)
}

pub fn parse_program_value(value: &Value) -> Result<DslProgram, ProgramError> {
    let obj = value
        .as_object()
        .ok_or_else(|| ProgramError::Malformed("document must be a JSON object".into()))?;
    let required = obj
        .get("required_tables")
        .ok_or_else(|| ProgramError::Malformed("missing \"required_tables\"".into()))?
        .as_array()
        .ok_or_else(|| ProgramError::Malformed("\"required_tables\" must be a list".into()))?;
    let required_tables = required
        .iter()
        .map(|v| {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| ProgramError::Malformed("required table names must be strings".into()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let program = obj
        .get("program")
        .ok_or_else(|| ProgramError::Malformed("missing \"program\"".into()))?;
    Ok(DslProgram { required_tables, calls: parse_calls(program)? })
}

/// Parses the `program` list on its own.
pub fn parse_calls(value: &Value) -> Result<Vec<DslCall>, ProgramError> {
    let list = value
        .as_array()
        .ok_or_else(|| ProgramError::Malformed("\"program\" must be a list".into()))?;
    let mut calls = Vec::with_capacity(list.len());
    let mut diagnostics = Vec::new();
    for (index, item) in list.iter().enumerate() {
        match parse_call(index, item) {
            Ok(call) => calls.push(call),
            Err(CallError::Malformed(m)) => {
                return Err(ProgramError::Malformed(format!("program item {index}: {m}")))
            }
            Err(CallError::Diagnostics(mut ds)) => diagnostics.append(&mut ds),
        }
    }
    if diagnostics.is_empty() {
        Ok(calls)
    } else {
        Err(ProgramError::Diagnostics(diagnostics))
    }
}

enum CallError {
    Malformed(String),
    Diagnostics(Vec<SyntaxDiagnostic>),
}

fn parse_call(index: usize, item: &Value) -> Result<DslCall, CallError> {
    let obj = item
        .as_object()
        .ok_or_else(|| CallError::Malformed("each call must be a JSON object".into()))?;
    let name = obj
        .get("function")
        .and_then(Value::as_str)
        .ok_or_else(|| CallError::Malformed("missing \"function\" name".into()))?;
    let Some(function) = DslFunction::from_name(name) else {
        return Err(CallError::Diagnostics(vec![SyntaxDiagnostic::new(
            index,
            DiagnosticCode::UnknownFunction,
            format!("unknown function {name:?}; use only the DSL grammar functions"),
        )]));
    };

    let mut diagnostics = Vec::new();
    let condition = match obj.get("condition") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) if s.trim().is_empty() => None,
        Some(Value::String(s)) => match ConditionExpr::parse(s) {
            Ok(c) => Some(c),
            Err(e) => {
                diagnostics.push(SyntaxDiagnostic::new(
                    index,
                    DiagnosticCode::BadCondition,
                    format!("{name} condition is not valid: {e}"),
                ));
                None
            }
        },
        Some(other) => {
            diagnostics.push(SyntaxDiagnostic::new(
                index,
                DiagnosticCode::BadCondition,
                format!("{name} condition must be a string, got {other}"),
            ));
            None
        }
    };

    let sig = signature(function);
    let positional = obj.get("args").or_else(|| obj.get("arguments"));
    let args = match positional {
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, v)| coerce(v, sig.params.get(i).map(|p| p.kind)))
            .collect(),
        Some(_) => return Err(CallError::Malformed("\"args\" must be a list".into())),
        None => {
            for key in obj.keys() {
                if key != "function" && key != "condition" && sig.position(key).is_none() {
                    diagnostics.push(SyntaxDiagnostic::new(
                        index,
                        DiagnosticCode::BadArity,
                        format!("{name} has no parameter {key:?}"),
                    ));
                }
            }
            sig.params
                .iter()
                .map(|p| obj.get(p.name).map_or(Arg::Null, |v| coerce(v, Some(p.kind))))
                .collect()
        }
    };

    if diagnostics.is_empty() {
        Ok(DslCall { function, args, condition })
    } else {
        Err(CallError::Diagnostics(diagnostics))
    }
}

fn json_cell(v: &Value) -> CellValue {
    match v {
        Value::Null => CellValue::Null,
        Value::Bool(b) => CellValue::Bool(*b),
        Value::Number(n) => match n.as_i64() {
            Some(i) => CellValue::Int(i),
            None => CellValue::Float(n.as_f64().unwrap_or(0.0)),
        },
        // Kept verbatim so the call renders as written; assign types it.
        Value::String(s) => CellValue::Text(s.clone()),
        other => CellValue::Text(other.to_string()),
    }
}

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.as_f64().map(format_number).unwrap_or_else(|| n.to_string())),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn raw(v: &Value) -> Arg {
    match v {
        Value::Null => Arg::Null,
        Value::String(s) => Arg::Label(s.clone()),
        Value::Number(n) => Arg::Number(n.as_f64().unwrap_or(f64::NAN)),
        Value::Bool(b) => Arg::Label(b.to_string()),
        Value::Array(items) if items.iter().all(|i| !i.is_array() && !i.is_object()) => {
            match items.iter().map(scalar_text).collect::<Option<Vec<_>>>() {
                Some(labels) => Arg::LabelList(labels),
                None => Arg::ValueGrid(vec![items.iter().map(json_cell).collect()]),
            }
        }
        Value::Array(items) => grid(items),
        Value::Object(map) => Arg::Mapping(
            map.iter()
                .map(|(k, v)| (k.clone(), scalar_text(v).unwrap_or_else(|| v.to_string())))
                .collect(),
        ),
    }
}

fn grid(items: &[Value]) -> Arg {
    let rows = items
        .iter()
        .map(|row| match row {
            Value::Array(cells) => cells.iter().map(json_cell).collect(),
            scalar => vec![json_cell(scalar)],
        })
        .collect();
    Arg::ValueGrid(rows)
}

/// Coerces a JSON value to the argument kind its slot expects. Values that do
/// not fit are kept in their raw form so the checker can report them.
fn coerce(v: &Value, kind: Option<ParamKind>) -> Arg {
    let Some(kind) = kind else { return raw(v) };
    match (kind, v) {
        (_, Value::Null) => Arg::Null,
        (ParamKind::Table, Value::String(s)) => Arg::TableName(s.clone()),
        (ParamKind::Axis, Value::Number(n)) => {
            n.as_f64().and_then(Axis::from_number).map_or_else(|| raw(v), Arg::Axis)
        }
        (ParamKind::Axis, Value::String(s)) => Axis::parse(s).map_or_else(|| raw(v), Arg::Axis),
        (ParamKind::Count, Value::String(s)) => match s.trim().parse::<f64>() {
            Ok(n) => Arg::Number(n),
            Err(_) => raw(v),
        },
        (ParamKind::Text, Value::Number(_) | Value::Bool(_)) => {
            Arg::Label(scalar_text(v).expect("scalar"))
        }
        (ParamKind::Values, Value::Array(items)) => {
            if items.iter().any(Value::is_array) {
                grid(items)
            } else {
                Arg::ValueGrid(vec![items.iter().map(json_cell).collect()])
            }
        }
        _ => raw(v),
    }
}

fn number_json(n: f64) -> Value {
    if n.fract() == 0.0 && n.abs() < 9e15 {
        Value::Number(Number::from(n as i64))
    } else {
        Number::from_f64(n).map_or(Value::Null, Value::Number)
    }
}

fn cell_json(c: &CellValue) -> Value {
    match c {
        CellValue::Null => Value::Null,
        CellValue::Int(i) => Value::Number(Number::from(*i)),
        CellValue::Float(f) => Number::from_f64(*f).map_or(Value::Null, Value::Number),
        CellValue::Text(s) => Value::String(s.clone()),
        CellValue::Bool(b) => Value::Bool(*b),
    }
}

pub(crate) fn arg_json(arg: &Arg) -> Value {
    match arg {
        Arg::TableName(s) | Arg::Label(s) => Value::String(s.clone()),
        Arg::Number(n) => number_json(*n),
        Arg::LabelList(v) => Value::Array(v.iter().cloned().map(Value::String).collect()),
        Arg::Axis(a) => Value::Number(Number::from(a.as_number())),
        Arg::ValueGrid(rows) => Value::Array(
            rows.iter().map(|r| Value::Array(r.iter().map(cell_json).collect())).collect(),
        ),
        Arg::Mapping(pairs) => Value::Object(
            pairs.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect(),
        ),
        Arg::Null => Value::Null,
    }
}

pub(crate) fn call_json(call: &DslCall) -> Value {
    let sig = signature(call.function);
    let mut obj = Map::new();
    obj.insert("function".into(), Value::String(call.function.name().into()));
    if call.args.len() > sig.params.len() {
        obj.insert("args".into(), Value::Array(call.args.iter().map(arg_json).collect()));
    } else {
        for (i, p) in sig.params.iter().enumerate() {
            obj.insert(p.name.into(), call.args.get(i).map_or(Value::Null, arg_json));
        }
    }
    if let Some(c) = &call.condition {
        obj.insert("condition".into(), Value::String(c.source().to_string()));
    }
    Value::Object(obj)
}

/// Serializes a program back to the exchange document.
pub fn program_to_json(program: &DslProgram) -> Value {
    let mut obj = Map::new();
    obj.insert(
        "required_tables".into(),
        Value::Array(program.required_tables.iter().cloned().map(Value::String).collect()),
    );
    obj.insert("program".into(), Value::Array(program.calls.iter().map(call_json).collect()));
    Value::Object(obj)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document() {
        let p = parse_program(r#"{"required_tables":["a.csv"],"program":[{"function":"transpose","table":"a.csv"}]}"#)
            .unwrap();
        assert_eq!(p.required_tables, vec!["a.csv"]);
        assert_eq!(p.calls.len(), 1);
        assert_eq!(p.calls[0].function, DslFunction::Transpose);
        assert_eq!(p.calls[0].args, vec![Arg::TableName("a.csv".into())]);
    }

    #[test]
    fn unknown_function_is_a_diagnostic() {
        let err = parse_program(r#"{"required_tables":[],"program":[{"function":"sort_rows","table":"a.csv"}]}"#)
            .unwrap_err();
        match err {
            ProgramError::Diagnostics(ds) => {
                assert_eq!(ds.len(), 1);
                assert_eq!(ds[0].code, DiagnosticCode::UnknownFunction);
                assert_eq!(ds[0].call_index, 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn condition_is_parsed() {
        let p = parse_program(
            r#"{"required_tables":["t.csv"],"program":[{"function":"drop","table":"t.csv","label":null,"axis":0,"condition":"missing_ratio > 0.3"}]}"#,
        )
        .unwrap();
        let c = p.calls[0].condition.as_ref().unwrap();
        assert!(c.uses_missing_ratio());
        assert_eq!(p.calls[0].arg("axis"), &Arg::Axis(Axis::Rows));
    }

    #[test]
    fn bad_condition_is_a_diagnostic() {
        let err = parse_program(
            r#"{"required_tables":["t.csv"],"program":[{"function":"drop","table":"t.csv","label":"a","axis":1,"condition":"missing_ratio >"}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, ProgramError::Diagnostics(ref ds) if ds[0].code == DiagnosticCode::BadCondition));
    }

    #[test]
    fn malformed_documents() {
        assert!(matches!(parse_program("[1,2]"), Err(ProgramError::Malformed(_))));
        assert!(matches!(parse_program(r#"{"program":[]}"#), Err(ProgramError::Malformed(_))));
        assert!(matches!(
            parse_program(r#"{"required_tables":[],"program":[{"table":"a.csv"}]}"#),
            Err(ProgramError::Malformed(_))
        ));
        assert!(matches!(parse_program("not json"), Err(ProgramError::Malformed(_))));
    }

    #[test]
    fn positional_arguments() {
        let p = parse_program(
            r#"{"required_tables":["a.csv","b.csv"],"program":[{"function":"merge","args":["a.csv","b.csv","inner","id"]}]}"#,
        )
        .unwrap();
        assert_eq!(p.calls[0].arg("how"), &Arg::Label("inner".into()));
        assert_eq!(p.calls[0].arg("on"), &Arg::Label("id".into()));
    }

    #[test]
    fn serialize_then_parse_is_identity() {
        let doc = r#"{"required_tables":["a.csv"],"program":[
            {"function":"assign","table":"a.csv","start_row_index":"1","end_row_index":"2",
             "start_column_index":1,"end_column_index":1,"values":[[1],[2.5]]},
            {"function":"aggregate","table":"a.csv","functions":{"x":"mean"},"axis":"columns"},
            {"function":"rearrange","table":"a.csv","by_values":null,"by_array":["b","a"],"axis":1},
            {"function":"drop","table":"a.csv","label":["x","y"],"axis":1,"condition":"p_value < 0.05"}]}"#;
        let p = parse_program(doc).unwrap();
        let again = parse_program(&p.to_json_string()).unwrap();
        assert_eq!(again, p);
    }
}
