//! Dataset files: CSV (header `id,caption,cuis`, cuis
//! semicolon-separated) and JSONL (one object per line with keys `id`,
//! `caption`, `cuis`). Line numbers in errors are 1-based file lines,
//! so the first CSV data row is line 2.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use medcap_core::corpus::RawSample;
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {reason}")]
    Malformed {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}: duplicate id {id:?} on lines {first_line} and {second_line}")]
    DuplicateId {
        path: String,
        id: String,
        first_line: usize,
        second_line: usize,
    },
    #[error("{path} line {line}: caption is empty")]
    EmptyCaption { path: String, line: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DatasetFormat {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Cleaned datasets may legitimately contain captions that emptied
    /// out; raw ingest should reject them.
    pub allow_empty_captions: bool,
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    id: String,
    caption: String,
    #[serde(default)]
    cuis: String,
}

#[derive(Debug, Deserialize)]
struct JsonRow {
    id: String,
    caption: String,
    #[serde(default)]
    cuis: Vec<String>,
}

/// Load a dataset, rejecting empty captions.
pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Vec<RawSample>, DatasetError> {
    load_dataset_with(path, format, LoadOptions::default())
}

pub fn load_dataset_with(
    path: &Path,
    format: DatasetFormat,
    options: LoadOptions,
) -> Result<Vec<RawSample>, DatasetError> {
    let rows = match format {
        DatasetFormat::Csv => load_csv(path)?,
        DatasetFormat::Jsonl => load_jsonl(path)?,
    };
    let path_str = path.display().to_string();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (sample, line) in &rows {
        if let Some(&first_line) = seen.get(&sample.id) {
            return Err(DatasetError::DuplicateId {
                path: path_str,
                id: sample.id.clone(),
                first_line,
                second_line: *line,
            });
        }
        seen.insert(sample.id.clone(), *line);
        if sample.id.is_empty() {
            return Err(DatasetError::Malformed {
                path: path_str,
                line: *line,
                reason: "id is empty".into(),
            });
        }
        if sample.caption.is_empty() && !options.allow_empty_captions {
            return Err(DatasetError::EmptyCaption {
                path: path_str,
                line: *line,
            });
        }
    }
    Ok(rows.into_iter().map(|(s, _)| s).collect())
}

fn load_csv(path: &Path) -> Result<Vec<(RawSample, usize)>, DatasetError> {
    let path_str = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => DatasetError::Io {
                path: path_str.clone(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => DatasetError::Malformed {
                path: path_str.clone(),
                line: 1,
                reason: e.to_string(),
            },
        })?;
    let mut rows = Vec::new();
    for (index, record) in reader.deserialize::<CsvRow>().enumerate() {
        let line = index + 2; // header occupies line 1
        let row = record.map_err(|e| DatasetError::Malformed {
            path: path_str.clone(),
            line,
            reason: e.to_string(),
        })?;
        let concepts = row
            .cuis
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        rows.push((
            RawSample {
                id: row.id,
                caption: row.caption,
                concepts,
                image_ref: None,
            },
            line,
        ));
    }
    Ok(rows)
}

fn load_jsonl(path: &Path) -> Result<Vec<(RawSample, usize)>, DatasetError> {
    let path_str = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path_str.clone(),
        source,
    })?;
    let mut rows = Vec::new();
    for (index, line_text) in text.lines().enumerate() {
        let line = index + 1;
        if line_text.trim().is_empty() {
            continue;
        }
        let row: JsonRow =
            serde_json::from_str(line_text).map_err(|e| DatasetError::Malformed {
                path: path_str.clone(),
                line,
                reason: format!("record {line}: {e}"),
            })?;
        rows.push((
            RawSample {
                id: row.id,
                caption: row.caption,
                concepts: row.cuis,
                image_ref: None,
            },
            line,
        ));
    }
    Ok(rows)
}

/// Write a dataset in the given format, mirroring the load conventions.
pub fn save_dataset(
    path: &Path,
    format: DatasetFormat,
    samples: &[RawSample],
) -> Result<(), DatasetError> {
    let path_str = path.display().to_string();
    let io_err = |source| DatasetError::Io {
        path: path_str.clone(),
        source,
    };
    match format {
        DatasetFormat::Csv => {
            let mut writer = csv::Writer::from_path(path).map_err(|e| DatasetError::Io {
                path: path_str.clone(),
                source: std::io::Error::other(e.to_string()),
            })?;
            writer
                .write_record(["id", "caption", "cuis"])
                .map_err(|e| DatasetError::Io {
                    path: path_str.clone(),
                    source: std::io::Error::other(e.to_string()),
                })?;
            for s in samples {
                writer
                    .write_record([&s.id, &s.caption, &s.concepts.join(";")])
                    .map_err(|e| DatasetError::Io {
                        path: path_str.clone(),
                        source: std::io::Error::other(e.to_string()),
                    })?;
            }
            writer.flush().map_err(io_err)?;
        }
        DatasetFormat::Jsonl => {
            let mut out = fs::File::create(path).map_err(io_err)?;
            for s in samples {
                let row = serde_json::json!({
                    "id": s.id,
                    "caption": s.caption,
                    "cuis": s.concepts,
                });
                writeln!(out, "{row}").map_err(io_err)?;
            }
        }
    }
    Ok(())
}

/// One caption per line, for the scoring command.
pub fn load_caption_lines(path: &Path) -> Result<Vec<String>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(text.lines().map(String::from).collect())
}
