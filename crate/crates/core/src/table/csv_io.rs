use super::{CellValue, Table, TableError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IngestError {
    #[error("table name {0:?} must end with \".csv\"")]
    BadName(String),
    #[error("CSV input is not valid UTF-8")]
    NotUtf8,
    #[error("record {row} has {got} fields, header has {expected}")]
    RaggedRow { row: usize, got: usize, expected: usize },
    #[error("duplicate header name {0:?}")]
    DuplicateHeader(String),
    #[error("malformed CSV: {0}")]
    Malformed(String),
}

/// Parses RFC 4180 CSV (comma delimiter, CRLF or LF) into a typed table.
/// The first record is the header; data rows are numbered from 1 in errors.
pub fn ingest_csv(bytes: &[u8], name: &str) -> Result<Table, IngestError> {
    if name.len() <= 4 || !name.ends_with(".csv") {
        return Err(IngestError::BadName(name.to_string()));
    }
    let text = std::str::from_utf8(bytes).map_err(|_| IngestError::NotUtf8)?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());

    let mut records = reader.records();
    let header = match records.next() {
        None => return Ok(Table::new(name, Vec::new(), Vec::new()).expect("empty table")),
        Some(r) => r.map_err(|e| IngestError::Malformed(e.to_string()))?,
    };
    let columns: Vec<String> = header.iter().map(str::to_string).collect();

    let mut rows = Vec::new();
    for (i, record) in records.enumerate() {
        let record = record.map_err(|e| IngestError::Malformed(e.to_string()))?;
        if record.len() != columns.len() {
            return Err(IngestError::RaggedRow {
                row: i + 1,
                got: record.len(),
                expected: columns.len(),
            });
        }
        rows.push(record.iter().map(CellValue::from_token).collect());
    }

    Table::new(name, columns, rows).map_err(|e| match e {
        TableError::DuplicateColumn(c) => IngestError::DuplicateHeader(c),
        other => IngestError::Malformed(other.to_string()),
    })
}

/// Serializes a table as CSV with LF line endings; nulls become empty fields.
pub fn emit_csv(table: &Table) -> Vec<u8> {
    if table.ncols() == 0 {
        return Vec::new();
    }
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    writer.write_record(table.columns()).expect("in-memory write");
    for row in table.rows() {
        writer
            .write_record(row.iter().map(CellValue::render))
            .expect("in-memory write");
    }
    writer.into_inner().expect("in-memory flush")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn leading_zero_ids_stay_text() {
        let t = ingest_csv(b"id,x\n00336617,9\n", "t.csv").unwrap();
        assert_eq!(t.rows()[0], vec![CellValue::Text("00336617".into()), CellValue::Int(9)]);
    }

    #[test]
    fn header_only() {
        let t = ingest_csv(b"a\n", "t.csv").unwrap();
        assert_eq!(t.ncols(), 1);
        assert_eq!(t.nrows(), 0);
    }

    #[test]
    fn null_tokens_and_floats() {
        let t = ingest_csv(b"a,b\nN/A,3.5\r\n", "t.csv").unwrap();
        assert_eq!(t.rows()[0], vec![CellValue::Null, CellValue::Float(3.5)]);
    }

    #[test]
    fn ragged_and_duplicate_errors() {
        assert_eq!(
            ingest_csv(b"a,b\n1,2\n3\n", "t.csv"),
            Err(IngestError::RaggedRow { row: 2, got: 1, expected: 2 })
        );
        assert_eq!(
            ingest_csv(b"a,a\n1,2\n", "t.csv"),
            Err(IngestError::DuplicateHeader("a".into()))
        );
        assert!(matches!(ingest_csv(b"a\n", "t.txt"), Err(IngestError::BadName(_))));
    }

    #[test]
    fn single_null_cell_emits_empty_field() {
        let t = Table::new("t.csv", vec!["a".into()], vec![vec![CellValue::Null]]).unwrap();
        let out = emit_csv(&t);
        assert_eq!(String::from_utf8(out.clone()).unwrap(), "a\n\"\"\n");
        assert_eq!(ingest_csv(&out, "t.csv").unwrap(), t);
    }

    #[test]
    fn quoting_survives() {
        let t = Table::from_strs("t.csv", &["a b", "c"], &[&["x,y", "say \"hi\""]]).unwrap();
        assert_eq!(ingest_csv(&emit_csv(&t), "t.csv").unwrap(), t);
    }

    fn cell() -> impl Strategy<Value = CellValue> {
        prop_oneof![
            Just(CellValue::Null),
            any::<i64>().prop_map(CellValue::Int),
            (-1e9f64..1e9).prop_map(CellValue::Float),
            any::<bool>().prop_map(CellValue::Bool),
            "[a-zA-Z ,\"\n]{1,8}"
                .prop_map(|s| CellValue::from_token(&s))
                .prop_filter("text must stay text", |c| matches!(c, CellValue::Text(_))),
            "0[0-9]{1,6}".prop_map(CellValue::Text),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn round_trip_random_tables(
            ncols in 1usize..=5,
            grid in proptest::collection::vec(proptest::collection::vec(cell(), 5), 0..=5),
        ) {
            let columns: Vec<String> = (0..ncols).map(|i| format!("c{i}")).collect();
            let rows: Vec<Vec<CellValue>> =
                grid.into_iter().map(|r| r.into_iter().take(ncols).collect()).collect();
            let t = Table::new("r.csv", columns, rows).unwrap();
            let back = ingest_csv(&emit_csv(&t), "r.csv").unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
