use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CognitiveLevel, Dataset, Example};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    Tsv,
    Jsonl,
}

impl DataFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(DataFormat::Csv),
            "tsv" | "tab" => Some(DataFormat::Tsv),
            "jsonl" | "ndjson" => Some(DataFormat::Jsonl),
            _ => None,
        }
    }
}

impl std::str::FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(DataFormat::Csv),
            "tsv" => Ok(DataFormat::Tsv),
            "jsonl" => Ok(DataFormat::Jsonl),
            other => Err(Error::InvalidArgument(format!("unknown data format {other:?}"))),
        }
    }
}

struct Record {
    line: u64,
    id: Option<String>,
    text: String,
    label: String,
}

/// Load a labelled corpus.
///
/// Delimited files need a header with `text` and `label` columns (an `id`
/// column is optional); JSONL records carry `text`, `label` and optionally
/// `id`. Missing ids become `<dataset-name>:<row-index>`. The dataset name is
/// the file stem.
pub fn load_dataset(path: impl AsRef<Path>, format: DataFormat) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    let records = match format {
        DataFormat::Csv => read_delimited(file, b',')?,
        DataFormat::Tsv => read_delimited(file, b'\t')?,
        DataFormat::Jsonl => read_jsonl(file, path)?,
    };

    let mut examples = Vec::with_capacity(records.len());
    for (row, rec) in records.into_iter().enumerate() {
        let text = rec.text.trim();
        if text.is_empty() {
            return Err(Error::EmptyText { line: rec.line });
        }
        let label: CognitiveLevel = rec.label.parse().map_err(|_| Error::UnknownLabel {
            line: rec.line,
            label: rec.label.clone(),
        })?;
        let id = rec.id.unwrap_or_else(|| format!("{name}:{row}"));
        examples.push(Example::new(id, text, label, name.clone()));
    }
    Dataset::new(name, examples)
}

fn read_delimited(file: File, delimiter: u8) -> Result<Vec<Record>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
    };
    let (text_col, label_col) = match (column("text"), column("label")) {
        (Some(t), Some(l)) => (t, l),
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "header must contain `text` and `label` columns".into(),
            })
        }
    };
    let id_col = column("id");

    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(i as u64 + 2, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(i as u64 + 2, |p| p.line());
        let field = |col: usize| {
            rec.get(col).map(str::to_string).ok_or_else(|| Error::Parse {
                line,
                message: format!("missing column {col}"),
            })
        };
        out.push(Record {
            line,
            id: id_col
                .and_then(|c| rec.get(c))
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string),
            text: field(text_col)?,
            label: field(label_col)?,
        });
    }
    Ok(out)
}

#[derive(Deserialize)]
struct JsonRecord {
    text: String,
    label: String,
    #[serde(default)]
    id: Option<String>,
}

fn read_jsonl(file: File, path: &Path) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push(Record {
            line: line_no,
            id: rec.id,
            text: rec.text,
            label: rec.label,
        });
    }
    Ok(out)
}

/// Write a dataset in the canonical two-column delimited layout (`text,label`)
/// or as JSONL with ids.
pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>, format: DataFormat) -> Result<()> {
    let path = path.as_ref();
    match format {
        DataFormat::Csv | DataFormat::Tsv => {
            let delimiter = if format == DataFormat::Csv { b',' } else { b'\t' };
            let mut w = csv::WriterBuilder::new()
                .delimiter(delimiter)
                .from_path(path)
                .map_err(|e| Error::Parse {
                    line: 0,
                    message: e.to_string(),
                })?;
            let csv_err = |e: csv::Error| Error::Parse {
                line: 0,
                message: e.to_string(),
            };
            w.write_record(["text", "label"]).map_err(csv_err)?;
            for ex in dataset.examples() {
                w.write_record([ex.text.as_str(), ex.label.name()])
                    .map_err(csv_err)?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        DataFormat::Jsonl => {
            let mut buf = String::new();
            for ex in dataset.examples() {
                let rec = serde_json::json!({"id": ex.id, "text": ex.text, "label": ex.label});
                buf.push_str(&serde_json::to_string(&rec)?);
                buf.push('\n');
            }
            std::fs::write(path, buf).map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}
