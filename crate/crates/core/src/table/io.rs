//! Parquet (primary) and CSV + JSON schema sidecar (secondary) storage.
//!
//! The table schema, including categorical dictionaries in level order, is
//! stored as JSON under the `tidysim.schema` key of the Arrow schema metadata,
//! so level order survives a round-trip even though Parquet itself only keeps
//! the values that were actually used.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use arrow_array::cast::AsArray;
use arrow_array::types::{
    Float32Type, Float64Type, Int16Type, Int32Type, Int64Type, Int8Type, UInt16Type, UInt32Type,
    UInt64Type, UInt8Type,
};
use arrow_array::{
    Array, ArrayRef, BooleanArray, DictionaryArray, Float64Array, Int32Array, Int64Array,
    RecordBatch, StringArray, UInt64Array,
};
use arrow_schema::{DataType, Field, Schema};
use parquet::arrow::arrow_reader::ParquetRecordBatchReaderBuilder;
use parquet::arrow::ArrowWriter;
use parquet::basic::Compression;
use parquet::file::properties::WriterProperties;

use super::{Column, ColumnSchema, ColumnType, Table, TableSchema};
use crate::error::{Error, Result};

const SCHEMA_KEY: &str = "tidysim.schema";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Parquet,
    Csv,
}

impl Format {
    /// `.csv` selects CSV; anything else is Parquet.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Parquet,
        }
    }
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "parquet" => Ok(Format::Parquet),
            "csv" => Ok(Format::Csv),
            other => Err(Error::InvalidArgument(format!("unknown format `{other}`"))),
        }
    }
}

/// `data/grid.csv` → `data/grid.schema.json`.
pub fn schema_sidecar_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("table");
    path.with_file_name(format!("{stem}.schema.json"))
}

/// Write `table` to `path`. The file appears atomically (temp file + rename),
/// so an existing file is never left half-overwritten.
pub fn write_table(table: &Table, path: &Path, format: Format) -> Result<()> {
    match format {
        Format::Parquet => atomic_write(path, |w| write_parquet(table, w)),
        Format::Csv => {
            let schema = serde_json::to_vec_pretty(&table.schema())?;
            atomic_write(&schema_sidecar_path(path), |w| Ok(w.write_all(&schema)?))?;
            atomic_write(path, |w| write_csv(table, w))
        }
    }
}

pub fn read_table(path: &Path) -> Result<Table> {
    match Format::from_path(path) {
        Format::Parquet => read_parquet(path),
        Format::Csv => read_csv(path),
    }
}

pub(crate) fn atomic_write(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
) -> Result<()> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::InvalidArgument(format!("bad output path {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        body(&mut w)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

fn to_arrow(col: &Column) -> (DataType, ArrayRef) {
    match col {
        Column::UInt(v) => (DataType::UInt64, Arc::new(UInt64Array::from(v.clone()))),
        Column::Int(v) => (DataType::Int64, Arc::new(Int64Array::from(v.clone()))),
        Column::Real(v) => (DataType::Float64, Arc::new(Float64Array::from(v.clone()))),
        Column::Bool(v) => (DataType::Boolean, Arc::new(BooleanArray::from(v.clone()))),
        Column::Text(v) => (
            DataType::Utf8,
            Arc::new(v.iter().map(|s| s.as_deref()).collect::<StringArray>()),
        ),
        Column::Categorical { levels, codes } => {
            let keys: Int32Array = codes.iter().map(|c| c.map(|c| c as i32)).collect();
            let values = Arc::new(StringArray::from_iter_values(levels));
            let dict = DictionaryArray::<Int32Type>::try_new(keys, values)
                .expect("codes index into levels");
            (
                DataType::Dictionary(Box::new(DataType::Int32), Box::new(DataType::Utf8)),
                Arc::new(dict),
            )
        }
    }
}

fn write_parquet(table: &Table, w: &mut (impl Write + Send)) -> Result<()> {
    let mut fields = Vec::with_capacity(table.num_columns());
    let mut arrays = Vec::with_capacity(table.num_columns());
    for (name, col) in table.columns() {
        let (dt, arr) = to_arrow(col);
        fields.push(Field::new(name, dt, true));
        arrays.push(arr);
    }
    let metadata = HashMap::from([(
        SCHEMA_KEY.to_owned(),
        serde_json::to_string(&table.schema())?,
    )]);
    let schema = Arc::new(Schema::new_with_metadata(fields, metadata));
    let props = WriterProperties::builder()
        .set_compression(Compression::SNAPPY)
        .build();
    let mut writer = ArrowWriter::try_new(w, schema.clone(), Some(props))?;
    if table.num_columns() > 0 {
        let batch = RecordBatch::try_new(schema, arrays)?;
        writer.write(&batch)?;
    }
    writer.close()?;
    Ok(())
}

fn nullable<T>(arr: &dyn Array, n: usize, f: impl Fn(usize) -> T) -> Vec<Option<T>> {
    (0..n).map(|i| (!arr.is_null(i)).then(|| f(i))).collect()
}

fn strings_of(arr: &dyn Array) -> Result<Vec<Option<String>>> {
    let n = arr.len();
    Ok(match arr.data_type() {
        DataType::Utf8 => {
            let a = arr.as_string::<i32>();
            nullable(arr, n, |i| a.value(i).to_owned())
        }
        DataType::LargeUtf8 => {
            let a = arr.as_string::<i64>();
            nullable(arr, n, |i| a.value(i).to_owned())
        }
        DataType::Utf8View => {
            let a = arr.as_string_view();
            nullable(arr, n, |i| a.value(i).to_owned())
        }
        other => return Err(Error::Schema(format!("expected strings, found {other}"))),
    })
}

fn from_arrow(arr: &dyn Array) -> Result<Column> {
    let n = arr.len();
    macro_rules! prim {
        ($ty:ty, $variant:ident, $conv:expr) => {{
            let a = arr.as_primitive::<$ty>();
            Column::$variant(nullable(arr, n, |i| $conv(a.value(i))))
        }};
    }
    Ok(match arr.data_type() {
        DataType::UInt64 => prim!(UInt64Type, UInt, |v| v),
        DataType::UInt32 => prim!(UInt32Type, UInt, u64::from),
        DataType::UInt16 => prim!(UInt16Type, UInt, u64::from),
        DataType::UInt8 => prim!(UInt8Type, UInt, u64::from),
        DataType::Int64 => prim!(Int64Type, Int, |v| v),
        DataType::Int32 => prim!(Int32Type, Int, i64::from),
        DataType::Int16 => prim!(Int16Type, Int, i64::from),
        DataType::Int8 => prim!(Int8Type, Int, i64::from),
        DataType::Float64 => prim!(Float64Type, Real, |v| v),
        DataType::Float32 => prim!(Float32Type, Real, f64::from),
        DataType::Boolean => {
            let a = arr.as_boolean();
            Column::Bool(nullable(arr, n, |i| a.value(i)))
        }
        DataType::Utf8 | DataType::LargeUtf8 | DataType::Utf8View => Column::Text(strings_of(arr)?),
        DataType::Dictionary(_, _) => {
            let dict = arr.as_any_dictionary();
            let values = strings_of(dict.values().as_ref())?;
            let keys = dict.normalized_keys();
            let mut col = Column::Categorical {
                levels: Vec::new(),
                codes: Vec::with_capacity(n),
            };
            for (i, k) in keys.into_iter().enumerate() {
                let v = if arr.is_null(i) {
                    crate::value::Value::Null
                } else {
                    values[k].clone().map_or(crate::value::Value::Null, Into::into)
                };
                col.push(v)?;
            }
            col
        }
        other => return Err(Error::Schema(format!("unsupported column type {other}"))),
    })
}

/// Reorder a categorical column's dictionary to the recorded level order.
fn apply_levels(col: Column, levels: &[String]) -> Result<Column> {
    let Column::Categorical { levels: found, codes } = col else {
        return Ok(col);
    };
    let remap: Vec<u32> = found
        .iter()
        .map(|l| {
            levels
                .iter()
                .position(|x| x == l)
                .map(|p| p as u32)
                .ok_or_else(|| Error::Schema(format!("level `{l}` missing from dictionary")))
        })
        .collect::<Result<_>>()?;
    Ok(Column::Categorical {
        levels: levels.to_vec(),
        codes: codes.into_iter().map(|c| c.map(|c| remap[c as usize])).collect(),
    })
}

fn read_parquet(path: &Path) -> Result<Table> {
    let builder = ParquetRecordBatchReaderBuilder::try_new(File::open(path)?)?;
    let arrow_schema = builder.schema().clone();
    let stored: Option<TableSchema> = arrow_schema
        .metadata()
        .get(SCHEMA_KEY)
        .map(|s| serde_json::from_str(s))
        .transpose()?;
    let reader = builder.build()?;

    let mut columns: Vec<Option<Column>> = vec![None; arrow_schema.fields().len()];
    for batch in reader {
        let batch = batch?;
        for (slot, arr) in columns.iter_mut().zip(batch.columns()) {
            let col = from_arrow(arr.as_ref())?;
            match slot {
                Some(existing) => existing.extend_from(&col)?,
                None => *slot = Some(col),
            }
        }
    }

    let mut table = Table::new();
    for (i, field) in arrow_schema.fields().iter().enumerate() {
        let col = match columns[i].take() {
            Some(c) => c,
            None => empty_for(field.data_type())?,
        };
        let col = match stored
            .as_ref()
            .and_then(|s| s.columns.iter().find(|c| c.name == *field.name()))
        {
            Some(ColumnSchema { levels: Some(levels), .. }) => apply_levels(col, levels)?,
            _ => col,
        };
        table.push_column(field.name().clone(), col)?;
    }
    if let Some(s) = stored {
        table.metadata = s.metadata;
    }
    Ok(table)
}

fn empty_for(dt: &DataType) -> Result<Column> {
    Ok(match dt {
        DataType::UInt64 | DataType::UInt32 | DataType::UInt16 | DataType::UInt8 => {
            Column::UInt(vec![])
        }
        DataType::Int64 | DataType::Int32 | DataType::Int16 | DataType::Int8 => Column::Int(vec![]),
        DataType::Float64 | DataType::Float32 => Column::Real(vec![]),
        DataType::Boolean => Column::Bool(vec![]),
        DataType::Utf8 | DataType::LargeUtf8 | DataType::Utf8View => Column::Text(vec![]),
        DataType::Dictionary(_, _) => Column::Categorical {
            levels: vec![],
            codes: vec![],
        },
        other => return Err(Error::Schema(format!("unsupported column type {other}"))),
    })
}

pub(crate) fn write_csv(table: &Table, w: &mut impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(table.names())?;
    let mut record = Vec::with_capacity(table.num_columns());
    for row in 0..table.num_rows() {
        record.clear();
        for (_, col) in table.columns() {
            record.push(if col.is_null(row) {
                String::new()
            } else {
                col.get(row).to_string()
            });
        }
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

fn parse_cell(col: &mut Column, raw: &str, name: &str) -> Result<()> {
    let bad = || Error::Schema(format!("column `{name}`: cannot parse `{raw}`"));
    if raw.is_empty() {
        return col.push(crate::value::Value::Null);
    }
    match col {
        Column::UInt(v) => v.push(Some(raw.parse().map_err(|_| bad())?)),
        Column::Int(v) => v.push(Some(raw.parse().map_err(|_| bad())?)),
        Column::Real(v) => v.push(Some(raw.parse().map_err(|_| bad())?)),
        Column::Bool(v) => v.push(Some(raw.parse().map_err(|_| bad())?)),
        Column::Text(v) => v.push(Some(raw.to_owned())),
        Column::Categorical { .. } => col.push(raw.into())?,
    }
    Ok(())
}

fn infer_type(values: impl Iterator<Item = String> + Clone) -> ColumnType {
    let non_empty = values.filter(|s| !s.is_empty());
    if non_empty.clone().all(|s| s.parse::<i64>().is_ok()) {
        ColumnType::Int
    } else if non_empty.clone().all(|s| s.parse::<f64>().is_ok()) {
        ColumnType::Real
    } else if non_empty.clone().all(|s| s == "true" || s == "false") {
        ColumnType::Bool
    } else {
        ColumnType::Text
    }
}

fn empty_column(ty: ColumnType, levels: Option<&[String]>) -> Column {
    match ty {
        ColumnType::UInt => Column::UInt(vec![]),
        ColumnType::Int => Column::Int(vec![]),
        ColumnType::Real => Column::Real(vec![]),
        ColumnType::Bool => Column::Bool(vec![]),
        ColumnType::Text => Column::Text(vec![]),
        ColumnType::Categorical => Column::Categorical {
            levels: levels.map(<[String]>::to_vec).unwrap_or_default(),
            codes: vec![],
        },
    }
}

/// Read a CSV file, typed by its `<name>.schema.json` sidecar when present,
/// otherwise by per-column inference (integer, real, boolean, text).
fn read_csv(path: &Path) -> Result<Table> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let rows: Vec<csv::StringRecord> = reader.records().collect::<std::result::Result<_, _>>()?;

    let sidecar = schema_sidecar_path(path);
    let schema: TableSchema = if sidecar.exists() {
        serde_json::from_slice(&fs::read(&sidecar)?)?
    } else {
        TableSchema {
            columns: header
                .iter()
                .enumerate()
                .map(|(j, name)| ColumnSchema {
                    name: name.clone(),
                    column_type: infer_type(rows.iter().map(move |r| r[j].to_owned())),
                    levels: None,
                })
                .collect(),
            metadata: Default::default(),
        }
    };
    let names: Vec<&str> = schema.columns.iter().map(|c| c.name.as_str()).collect();
    if names != header {
        return Err(Error::Schema(format!(
            "CSV header {header:?} does not match schema sidecar {names:?}"
        )));
    }

    let mut columns: Vec<Column> = schema
        .columns
        .iter()
        .map(|c| empty_column(c.column_type, c.levels.as_deref()))
        .collect();
    for row in &rows {
        for (j, col) in columns.iter_mut().enumerate() {
            parse_cell(col, &row[j], &header[j])?;
        }
    }
    let mut table = Table::from_columns(header.into_iter().zip(columns).collect())?;
    table.metadata = schema.metadata;
    Ok(table)
}
