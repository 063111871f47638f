//! Dataset files (CSV and JSON lines) and structured report documents.
//!
//! Numbers are written in the shortest decimal form that parses back to the
//! same double, so a write/read cycle is bit-exact. Files are written to a
//! temporary sibling and renamed into place.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::dataset::Dataset;
use crate::sphere::AmbientVector;

/// Version of the report/counter document layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at row {row}{}: {detail}", column.map(|c| format!(", column {c}")).unwrap_or_default())]
    Parse {
        row: usize,
        column: Option<usize>,
        detail: String,
    },
    #[error("ragged rows: row {row} has {found} fields, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value at row {row}, column {column}")]
    NonFiniteValue { row: usize, column: usize },
    #[error("file contains no data rows")]
    EmptyFile,
    #[error("invalid delimiter {0:?}")]
    InvalidDelimiter(char),
    #[error("cannot serialize document: {0}")]
    Serialize(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatKind {
    Csv,
    Jsonl,
}

/// Whether the first CSV row is a header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeaderMode {
    /// A header is assumed when some field of row 1 is not a number.
    #[default]
    Auto,
    Present,
    Absent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetFileFormat {
    pub kind: FormatKind,
    pub header: HeaderMode,
    pub delimiter: char,
}

impl Default for DatasetFileFormat {
    fn default() -> Self {
        Self::csv()
    }
}

impl DatasetFileFormat {
    pub fn csv() -> Self {
        Self {
            kind: FormatKind::Csv,
            header: HeaderMode::Auto,
            delimiter: ',',
        }
    }

    pub fn jsonl() -> Self {
        Self {
            kind: FormatKind::Jsonl,
            header: HeaderMode::Absent,
            delimiter: ',',
        }
    }

    /// `.jsonl`/`.ndjson`/`.json` select JSON lines; anything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "ndjson" | "json") => Self::jsonl(),
            _ => Self::csv(),
        }
    }

    pub fn validate(&self) -> Result<(), IoError> {
        let d = self.delimiter;
        if d.is_ascii_digit() || d == '-' || d == '.' || d.is_whitespace() || !d.is_ascii() {
            return Err(IoError::InvalidDelimiter(d));
        }
        Ok(())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_field(text: &str, row: usize, column: usize) -> Result<f64, IoError> {
    let value: f64 = text.trim().parse().map_err(|_| IoError::Parse {
        row,
        column: Some(column),
        detail: format!("not a number: {text:?}"),
    })?;
    if !value.is_finite() {
        return Err(IoError::NonFiniteValue { row, column });
    }
    Ok(value)
}

fn build(rows: Vec<Vec<f64>>, rows_at: Vec<usize>) -> Result<Dataset, IoError> {
    let expected = rows.first().ok_or(IoError::EmptyFile)?.len();
    for (r, at) in rows.iter().zip(&rows_at) {
        if r.len() != expected {
            return Err(IoError::RaggedRows {
                row: *at,
                expected,
                found: r.len(),
            });
        }
    }
    let points = rows
        .into_iter()
        .map(AmbientVector::new)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| IoError::Parse {
            row: 0,
            column: None,
            detail: e.to_string(),
        })?;
    Ok(Dataset::new(points).expect("uniform nonempty rows"))
}

/// Parses dataset text. Row numbers in errors are 1-based file lines.
pub fn parse_dataset(text: &str, format: &DatasetFileFormat) -> Result<Dataset, IoError> {
    format.validate()?;
    match format.kind {
        FormatKind::Csv => parse_csv(text, format),
        FormatKind::Jsonl => parse_jsonl(text),
    }
}

fn parse_csv(text: &str, format: &DatasetFileFormat) -> Result<Dataset, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(format.delimiter as u8)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    let mut rows_at = Vec::new();
    let mut header_checked = false;
    for (index, record) in reader.records().enumerate() {
        let record = record.map_err(|e| IoError::Parse {
            row: index + 1,
            column: None,
            detail: e.to_string(),
        })?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(index + 1);
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        if !header_checked {
            header_checked = true;
            let is_header = match format.header {
                HeaderMode::Present => true,
                HeaderMode::Absent => false,
                HeaderMode::Auto => record.iter().any(|f| f.trim().parse::<f64>().is_err()),
            };
            if is_header {
                continue;
            }
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, f)| parse_field(f, line, c + 1))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
        rows_at.push(line);
    }
    build(rows, rows_at)
}

fn parse_jsonl(text: &str) -> Result<Dataset, IoError> {
    let mut rows = Vec::new();
    let mut rows_at = Vec::new();
    for (index, line) in text.lines().enumerate() {
        let row = index + 1;
        if line.trim().is_empty() {
            continue;
        }
        let values: Vec<Value> = serde_json::from_str(line).map_err(|e| IoError::Parse {
            row,
            column: None,
            detail: e.to_string(),
        })?;
        let parsed = values
            .iter()
            .enumerate()
            .map(|(c, v)| {
                v.as_f64().ok_or_else(|| IoError::Parse {
                    row,
                    column: Some(c + 1),
                    detail: format!("not a number: {v}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(parsed);
        rows_at.push(row);
    }
    build(rows, rows_at)
}

pub fn read_dataset(path: &Path, format: &DatasetFileFormat) -> Result<Dataset, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_dataset(&text, format)
}

/// Shortest decimal that parses back to the same double.
pub fn format_number(x: f64) -> String {
    format!("{x:?}")
}

pub fn render_dataset(data: &Dataset, format: &DatasetFileFormat) -> Result<String, IoError> {
    format.validate()?;
    let mut out = String::new();
    match format.kind {
        FormatKind::Csv => {
            let sep = format.delimiter.to_string();
            if format.header == HeaderMode::Present {
                let names: Vec<String> = (1..=data.dim()).map(|i| format!("x{i}")).collect();
                out.push_str(&names.join(&sep));
                out.push('\n');
            }
            for p in data.points() {
                let fields: Vec<String> = p.coords().iter().map(|&x| format_number(x)).collect();
                out.push_str(&fields.join(&sep));
                out.push('\n');
            }
        }
        FormatKind::Jsonl => {
            for p in data.points() {
                let fields: Vec<String> = p.coords().iter().map(|&x| format_number(x)).collect();
                out.push('[');
                out.push_str(&fields.join(","));
                out.push_str("]\n");
            }
        }
    }
    Ok(out)
}

/// Writes `contents` to a temporary file next to `path`, then renames it.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), IoError> {
    let err = io_err(path);
    if path.as_os_str().is_empty() {
        return Err(err(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            "empty path",
        )));
    }
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = match tempfile::NamedTempFile::new_in(dir) {
        Ok(t) => t,
        Err(e) => return Err(err(e)),
    };
    if let Err(e) = tmp.write_all(contents).and_then(|_| tmp.flush()) {
        return Err(err(e));
    }
    tmp.persist(path).map_err(|e| err(e.error))?;
    Ok(())
}

pub fn write_dataset(
    data: &Dataset,
    path: &Path,
    format: &DatasetFileFormat,
) -> Result<(), IoError> {
    let text = render_dataset(data, format)?;
    write_atomic(path, text.as_bytes())
}

/// A report or counter document: `{schema_version, command, seed, inputs,
/// results}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub command: String,
    pub seed: Option<u64>,
    pub inputs: Value,
    pub results: Value,
}

impl ReportDocument {
    pub fn new(command: &str, seed: Option<u64>, inputs: Value, results: Value) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            seed,
            inputs,
            results,
        }
    }

    pub fn render(&self) -> Result<String, IoError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        write_atomic(path, self.render()?.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv() -> DatasetFileFormat {
        DatasetFileFormat::csv()
    }

    #[test]
    fn read_examples() {
        let d = parse_dataset("1,2\n3,4\n", &csv()).unwrap();
        assert_eq!((d.len(), d.dim()), (2, 2));
        let d = parse_dataset("[1,2,3]\n[4,5,6]\n", &DatasetFileFormat::jsonl()).unwrap();
        assert_eq!((d.len(), d.dim()), (2, 3));
        assert_eq!(d.points()[1].coords(), &[4.0, 5.0, 6.0]);
        match parse_dataset("1,2\n3\n", &csv()) {
            Err(IoError::RaggedRows {
                row: 2,
                expected: 2,
                found: 1,
            }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn read_errors() {
        assert!(matches!(parse_dataset("", &csv()), Err(IoError::EmptyFile)));
        assert!(matches!(
            parse_dataset("a,b\n", &csv()),
            Err(IoError::EmptyFile)
        ));
        assert!(matches!(
            parse_dataset(
                "1,2\n3,x\n",
                &DatasetFileFormat {
                    header: HeaderMode::Absent,
                    ..csv()
                }
            ),
            Err(IoError::Parse {
                row: 2,
                column: Some(2),
                ..
            })
        ));
        assert!(matches!(
            parse_dataset("1,2\nNaN,1\n", &csv()),
            Err(IoError::NonFiniteValue { row: 2, column: 1 })
        ));
        assert!(matches!(
            parse_dataset("[1,\"a\"]\n", &DatasetFileFormat::jsonl()),
            Err(IoError::Parse {
                row: 1,
                column: Some(2),
                ..
            })
        ));
        assert!(matches!(
            parse_dataset("[1,2]\n[1e999,2]\n", &DatasetFileFormat::jsonl()),
            Err(IoError::Parse { row: 2, .. })
        ));
        assert!(matches!(
            parse_dataset("[1,2]\n[3]\n", &DatasetFileFormat::jsonl()),
            Err(IoError::RaggedRows { row: 2, .. })
        ));
    }

    #[test]
    fn header_detection_and_override() {
        let d = parse_dataset("a,b\n1,2\n", &csv()).unwrap();
        assert_eq!(d.len(), 1);
        let forced = DatasetFileFormat {
            header: HeaderMode::Present,
            ..csv()
        };
        assert_eq!(parse_dataset("1,2\n3,4\n", &forced).unwrap().len(), 1);
        // Row numbers keep counting the header line.
        assert!(matches!(
            parse_dataset("a,b\n1,2\n3\n", &csv()),
            Err(IoError::RaggedRows { row: 3, .. })
        ));
    }

    #[test]
    fn delimiter_rules() {
        for d in ['1', '-', '.', ' ', '\t'] {
            let f = DatasetFileFormat {
                delimiter: d,
                ..csv()
            };
            assert!(matches!(f.validate(), Err(IoError::InvalidDelimiter(_))));
        }
        let f = DatasetFileFormat {
            delimiter: ';',
            ..csv()
        };
        assert_eq!(parse_dataset("1;2\n3;4\n", &f).unwrap().dim(), 2);
    }

    #[test]
    fn shortest_representation() {
        let d = Dataset::from_rows(vec![vec![0.1, -0.0, 1e-300, 1.0 / 3.0]]).unwrap();
        let text = render_dataset(&d, &csv()).unwrap();
        assert!(text.starts_with("0.1,"));
        let back = parse_dataset(&text, &csv()).unwrap();
        for (a, b) in back.points()[0].coords().iter().zip(d.points()[0].coords()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn empty_path_is_io_error() {
        let d = Dataset::from_rows(vec![vec![1.0]]).unwrap();
        assert!(matches!(
            write_dataset(&d, Path::new(""), &csv()),
            Err(IoError::Io { .. })
        ));
    }

    #[test]
    fn write_read_files() {
        let dir = tempfile::tempdir().unwrap();
        let d = Dataset::from_rows(vec![vec![1.5, -2.25], vec![3.0, 1e20]]).unwrap();
        for (name, fmt) in [("a.csv", csv()), ("a.jsonl", DatasetFileFormat::jsonl())] {
            let path = dir.path().join(name);
            write_dataset(&d, &path, &fmt).unwrap();
            assert_eq!(
                read_dataset(&path, &DatasetFileFormat::from_path(&path)).unwrap(),
                d
            );
        }
    }

    #[test]
    fn report_document_layout() {
        let doc = ReportDocument::new(
            "reduce",
            Some(7),
            serde_json::json!({"n": 1}),
            serde_json::json!({}),
        );
        let v: Value = serde_json::from_str(&doc.render().unwrap()).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), 5);
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["seed"], 7);
    }
}
