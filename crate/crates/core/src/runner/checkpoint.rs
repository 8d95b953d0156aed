//! Append-only NDJSON log of finished rows.
//!
//! The first line is a header naming the study, master seed and outcomes so a
//! resume against a different run is refused. Every following line is one row:
//!
//! ```text
//! {"row_id":3,"outcomes":{"estimate":0.12,"pvalue":0.4,"singular":false},"status":"ok"}
//! ```
//!
//! Non-finite reals are written as the strings `"NaN"`, `"inf"` and `"-inf"`.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value as Json};

use crate::error::{Error, Result};
use crate::results::{ResultRow, Status};
use crate::study::OutcomeSchema;
use crate::table::io::atomic_write;
use crate::value::{Value, ValueKind};

/// Identity of the run a checkpoint belongs to.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Header {
    pub study: String,
    pub master_seed: u64,
    pub outcomes: Vec<String>,
}

impl Header {
    fn to_json(&self) -> Json {
        json!({
            "tidysim_checkpoint": 1,
            "study": self.study,
            "master_seed": self.master_seed,
            "outcomes": self.outcomes,
        })
    }

    fn from_json(v: &Json) -> Option<Header> {
        v.get("tidysim_checkpoint")?;
        Some(Header {
            study: v.get("study")?.as_str()?.to_owned(),
            master_seed: v.get("master_seed")?.as_u64()?,
            outcomes: v
                .get("outcomes")?
                .as_array()?
                .iter()
                .map(|s| s.as_str().map(str::to_owned))
                .collect::<Option<_>>()?,
        })
    }
}

fn value_to_json(v: &Value) -> Json {
    match v {
        Value::Null => Json::Null,
        Value::Bool(b) => (*b).into(),
        Value::Int(i) => (*i).into(),
        Value::UInt(u) => (*u).into(),
        Value::Real(x) if x.is_nan() => "NaN".into(),
        Value::Real(x) if x.is_infinite() => if *x > 0.0 { "inf" } else { "-inf" }.into(),
        Value::Real(x) => (*x).into(),
        Value::Text(s) => s.clone().into(),
    }
}

fn value_from_json(kind: ValueKind, v: &Json) -> Option<Value> {
    if v.is_null() {
        return Some(Value::Null);
    }
    Some(match kind {
        ValueKind::Real => match v {
            Json::Number(n) => Value::Real(n.as_f64()?),
            Json::String(s) => match s.as_str() {
                "NaN" => Value::Real(f64::NAN),
                "inf" => Value::Real(f64::INFINITY),
                "-inf" => Value::Real(f64::NEG_INFINITY),
                _ => return None,
            },
            _ => return None,
        },
        ValueKind::Integer => Value::Int(v.as_i64()?),
        ValueKind::Boolean => Value::Bool(v.as_bool()?),
        ValueKind::Text => Value::Text(v.as_str()?.to_owned()),
    })
}

pub(crate) fn encode_row(schema: &OutcomeSchema, row: &ResultRow) -> String {
    let outcomes: Map<String, Json> = schema
        .names()
        .zip(&row.outcomes)
        .map(|(n, v)| (n.to_owned(), value_to_json(v)))
        .collect();
    json!({
        "row_id": row.row_id,
        "outcomes": outcomes,
        "status": row.status.encode(),
    })
    .to_string()
}

pub(crate) fn decode_row(schema: &OutcomeSchema, line: &str) -> Option<ResultRow> {
    let v: Json = serde_json::from_str(line).ok()?;
    let row_id = v.get("row_id")?.as_u64()?;
    let status = Status::decode(v.get("status")?.as_str()?);
    let outcomes = v.get("outcomes")?.as_object()?;
    if outcomes.len() != schema.len() {
        return None;
    }
    let outcomes = schema
        .fields()
        .iter()
        .map(|(name, kind)| value_from_json(*kind, outcomes.get(name)?))
        .collect::<Option<Vec<_>>>()?;
    Some(ResultRow {
        row_id,
        outcomes,
        status,
    })
}

/// Rows recovered from an existing log.
#[derive(Debug, Default)]
pub(crate) struct Recovered {
    pub rows: HashMap<u64, ResultRow>,
    pub corrupt_lines: usize,
    /// The file must be rewritten before appending (corrupt lines or a torn last line).
    pub needs_rewrite: bool,
}

pub(crate) fn load(path: &Path, header: &Header, schema: &OutcomeSchema) -> Result<Recovered> {
    let text = match fs::read(path) {
        Ok(bytes) => String::from_utf8_lossy(&bytes).into_owned(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Recovered::default()),
        Err(e) => {
            return Err(Error::Checkpoint {
                path: path.to_owned(),
                message: e.to_string(),
            })
        }
    };
    let mut out = Recovered {
        needs_rewrite: !text.is_empty() && !text.ends_with('\n'),
        ..Recovered::default()
    };
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if let Some(found) = serde_json::from_str::<Json>(line)
            .ok()
            .as_ref()
            .and_then(Header::from_json)
        {
            if found != *header {
                return Err(Error::Checkpoint {
                    path: path.to_owned(),
                    message: format!(
                        "written by study `{}` with master seed {} and outcomes {:?}, \
                         this run is `{}` with master seed {} and outcomes {:?}",
                        found.study,
                        found.master_seed,
                        found.outcomes,
                        header.study,
                        header.master_seed,
                        header.outcomes
                    ),
                });
            }
            continue;
        }
        match decode_row(schema, line) {
            Some(row) => {
                out.rows.insert(row.row_id, row);
            }
            None => {
                log::warn!(
                    "{}:{}: ignoring unreadable checkpoint line; the row will be re-run",
                    path.display(),
                    lineno + 1
                );
                out.corrupt_lines += 1;
                out.needs_rewrite = true;
            }
        }
    }
    Ok(out)
}

/// Append handle; each row is flushed as soon as it is written.
pub(crate) struct Writer {
    path: PathBuf,
    file: BufWriter<File>,
}

impl Writer {
    /// Start a fresh log containing only the header.
    pub fn create(path: &Path, header: &Header) -> Result<Writer> {
        Self::rewrite(path, header, std::iter::empty(), &OutcomeSchema::new::<String>([])?)
    }

    /// Replace the log with the header plus `rows`, then open it for appending.
    pub fn rewrite<'a>(
        path: &Path,
        header: &Header,
        rows: impl Iterator<Item = &'a ResultRow>,
        schema: &OutcomeSchema,
    ) -> Result<Writer> {
        atomic_write(path, |w| {
            writeln!(w, "{}", header.to_json())?;
            for row in rows {
                writeln!(w, "{}", encode_row(schema, row))?;
            }
            Ok(())
        })?;
        Self::append(path)
    }

    pub fn append(path: &Path) -> Result<Writer> {
        let file = OpenOptions::new()
            .append(true)
            .create(true)
            .open(path)
            .map_err(|e| Error::Checkpoint {
                path: path.to_owned(),
                message: e.to_string(),
            })?;
        Ok(Writer {
            path: path.to_owned(),
            file: BufWriter::new(file),
        })
    }

    pub fn write(&mut self, schema: &OutcomeSchema, row: &ResultRow) -> Result<()> {
        let line = encode_row(schema, row);
        (|| {
            writeln!(self.file, "{line}")?;
            self.file.flush()
        })()
        .map_err(|e| Error::Checkpoint {
            path: self.path.clone(),
            message: e.to_string(),
        })
    }
}
