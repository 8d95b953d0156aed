//! Minimal typed, nullable column store shared by grids, results and aggregates.

pub(crate) mod io;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value::Value;

pub use io::{read_table, schema_sidecar_path, write_table, Format};

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    UInt(Vec<Option<u64>>),
    Int(Vec<Option<i64>>),
    Real(Vec<Option<f64>>),
    Bool(Vec<Option<bool>>),
    Text(Vec<Option<String>>),
    /// Dictionary-encoded strings; `codes` index into `levels`.
    Categorical {
        levels: Vec<String>,
        codes: Vec<Option<u32>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    UInt,
    Int,
    Real,
    Bool,
    Text,
    Categorical,
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::UInt(v) => v.len(),
            Column::Int(v) => v.len(),
            Column::Real(v) => v.len(),
            Column::Bool(v) => v.len(),
            Column::Text(v) => v.len(),
            Column::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column_type(&self) -> ColumnType {
        match self {
            Column::UInt(_) => ColumnType::UInt,
            Column::Int(_) => ColumnType::Int,
            Column::Real(_) => ColumnType::Real,
            Column::Bool(_) => ColumnType::Bool,
            Column::Text(_) => ColumnType::Text,
            Column::Categorical { .. } => ColumnType::Categorical,
        }
    }

    /// Empty column of the same type (categoricals keep their levels).
    pub fn empty_like(&self) -> Column {
        match self {
            Column::UInt(_) => Column::UInt(Vec::new()),
            Column::Int(_) => Column::Int(Vec::new()),
            Column::Real(_) => Column::Real(Vec::new()),
            Column::Bool(_) => Column::Bool(Vec::new()),
            Column::Text(_) => Column::Text(Vec::new()),
            Column::Categorical { levels, .. } => Column::Categorical {
                levels: levels.clone(),
                codes: Vec::new(),
            },
        }
    }

    /// Cell value; categoricals decode to text.
    pub fn get(&self, i: usize) -> Value {
        fn opt<T>(v: &Option<T>, f: impl FnOnce(&T) -> Value) -> Value {
            v.as_ref().map_or(Value::Null, f)
        }
        match self {
            Column::UInt(v) => opt(&v[i], |x| Value::UInt(*x)),
            Column::Int(v) => opt(&v[i], |x| Value::Int(*x)),
            Column::Real(v) => opt(&v[i], |x| Value::Real(*x)),
            Column::Bool(v) => opt(&v[i], |x| Value::Bool(*x)),
            Column::Text(v) => opt(&v[i], |x| Value::Text(x.clone())),
            Column::Categorical { levels, codes } => {
                opt(&codes[i], |c| Value::Text(levels[*c as usize].clone()))
            }
        }
    }

    pub fn is_null(&self, i: usize) -> bool {
        match self {
            Column::UInt(v) => v[i].is_none(),
            Column::Int(v) => v[i].is_none(),
            Column::Real(v) => v[i].is_none(),
            Column::Bool(v) => v[i].is_none(),
            Column::Text(v) => v[i].is_none(),
            Column::Categorical { codes, .. } => codes[i].is_none(),
        }
    }

    pub fn null_count(&self) -> usize {
        (0..self.len()).filter(|&i| self.is_null(i)).count()
    }

    /// Gather rows by index; `None` produces a null.
    pub fn take(&self, indices: &[Option<usize>]) -> Column {
        fn pick<T: Clone>(v: &[Option<T>], idx: &[Option<usize>]) -> Vec<Option<T>> {
            idx.iter().map(|i| i.and_then(|i| v[i].clone())).collect()
        }
        match self {
            Column::UInt(v) => Column::UInt(pick(v, indices)),
            Column::Int(v) => Column::Int(pick(v, indices)),
            Column::Real(v) => Column::Real(pick(v, indices)),
            Column::Bool(v) => Column::Bool(pick(v, indices)),
            Column::Text(v) => Column::Text(pick(v, indices)),
            Column::Categorical { levels, codes } => Column::Categorical {
                levels: levels.clone(),
                codes: pick(codes, indices),
            },
        }
    }

    /// Append a value, checking its type. Text appended to a categorical
    /// column extends the dictionary when the level is new.
    pub fn push(&mut self, value: Value) -> Result<()> {
        let mismatch = |col: &Column, v: &Value| {
            Error::Schema(format!("cannot store {v:?} in a {:?} column", col.column_type()))
        };
        match (&mut *self, value) {
            (Column::UInt(v), Value::Null) => v.push(None),
            (Column::Int(v), Value::Null) => v.push(None),
            (Column::Real(v), Value::Null) => v.push(None),
            (Column::Bool(v), Value::Null) => v.push(None),
            (Column::Text(v), Value::Null) => v.push(None),
            (Column::Categorical { codes, .. }, Value::Null) => codes.push(None),
            (Column::UInt(v), Value::UInt(x)) => v.push(Some(x)),
            (Column::UInt(v), Value::Int(x)) if x >= 0 => v.push(Some(x as u64)),
            (Column::Int(v), Value::Int(x)) => v.push(Some(x)),
            (Column::Int(v), Value::UInt(x)) if x <= i64::MAX as u64 => v.push(Some(x as i64)),
            (Column::Real(v), Value::Real(x)) => v.push(Some(x)),
            (Column::Real(v), Value::Int(x)) => v.push(Some(x as f64)),
            (Column::Bool(v), Value::Bool(x)) => v.push(Some(x)),
            (Column::Text(v), Value::Text(x)) => v.push(Some(x)),
            (Column::Categorical { levels, codes }, Value::Text(x)) => {
                let code = match levels.iter().position(|l| *l == x) {
                    Some(c) => c,
                    None => {
                        levels.push(x);
                        levels.len() - 1
                    }
                };
                codes.push(Some(code as u32));
            }
            (col, v) => return Err(mismatch(col, &v)),
        }
        Ok(())
    }

    /// Append all rows of `other`, which must have the same type.
    /// Categorical dictionaries are merged by level name.
    pub fn extend_from(&mut self, other: &Column) -> Result<()> {
        match (&mut *self, other) {
            (Column::UInt(a), Column::UInt(b)) => a.extend_from_slice(b),
            (Column::Int(a), Column::Int(b)) => a.extend_from_slice(b),
            (Column::Real(a), Column::Real(b)) => a.extend_from_slice(b),
            (Column::Bool(a), Column::Bool(b)) => a.extend_from_slice(b),
            (Column::Text(a), Column::Text(b)) => a.extend_from_slice(b),
            (Column::Categorical { .. }, Column::Categorical { .. }) => {
                for i in 0..other.len() {
                    self.push(other.get(i))?;
                }
            }
            (a, b) => {
                return Err(Error::Schema(format!(
                    "cannot append {:?} column to {:?} column",
                    b.column_type(),
                    a.column_type()
                )))
            }
        }
        Ok(())
    }
}

/// Column-level schema entry, serialized into Parquet metadata and CSV sidecars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    #[serde(rename = "type")]
    pub column_type: ColumnType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TableSchema {
    pub columns: Vec<ColumnSchema>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

/// An ordered set of equally long, uniquely named columns plus string metadata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    names: Vec<String>,
    columns: Vec<Column>,
    rows: usize,
    metadata: BTreeMap<String, String>,
}

impl Table {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_columns(columns: Vec<(String, Column)>) -> Result<Self> {
        let mut table = Table::new();
        for (name, col) in columns {
            table.push_column(name, col)?;
        }
        Ok(table)
    }

    pub fn push_column(&mut self, name: impl Into<String>, column: Column) -> Result<()> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(Error::Schema(format!("duplicate column `{name}`")));
        }
        if self.names.is_empty() {
            self.rows = column.len();
        } else if column.len() != self.rows {
            return Err(Error::Schema(format!(
                "column `{name}` has {} rows, table has {}",
                column.len(),
                self.rows
            )));
        }
        self.names.push(name);
        self.columns.push(column);
        Ok(())
    }

    pub fn with_column(mut self, name: impl Into<String>, column: Column) -> Result<Self> {
        self.push_column(name, column)?;
        Ok(self)
    }

    pub fn num_rows(&self) -> usize {
        self.rows
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> impl Iterator<Item = (&str, &Column)> {
        self.names.iter().map(String::as_str).zip(&self.columns)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.column_index(name).map(|i| &self.columns[i])
    }

    pub fn require(&self, name: &str) -> Result<&Column> {
        self.column(name)
            .ok_or_else(|| Error::UnknownColumn(name.to_owned()))
    }

    pub fn value(&self, row: usize, name: &str) -> Result<Value> {
        Ok(self.require(name)?.get(row))
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn set_metadata(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.metadata.insert(key.into(), value.into());
    }

    pub fn take(&self, indices: &[Option<usize>]) -> Table {
        Table {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c.take(indices)).collect(),
            rows: indices.len(),
            metadata: self.metadata.clone(),
        }
    }

    /// Rows `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Table {
        let idx: Vec<_> = (start..end.min(self.rows)).map(Some).collect();
        self.take(&idx)
    }

    /// Row-wise concatenation of tables with identical column names and types.
    pub fn concat(tables: &[Table]) -> Result<Table> {
        let Some(first) = tables.first() else {
            return Ok(Table::new());
        };
        let mut out = Table {
            names: first.names.clone(),
            columns: first.columns.iter().map(Column::empty_like).collect(),
            rows: 0,
            metadata: first.metadata.clone(),
        };
        for t in tables {
            if t.names != out.names {
                return Err(Error::Schema(format!(
                    "cannot concatenate tables with columns {:?} and {:?}",
                    out.names, t.names
                )));
            }
            for (dst, src) in out.columns.iter_mut().zip(&t.columns) {
                dst.extend_from(src)?;
            }
            out.rows += t.rows;
        }
        Ok(out)
    }

    pub fn schema(&self) -> TableSchema {
        TableSchema {
            columns: self
                .columns()
                .map(|(name, col)| ColumnSchema {
                    name: name.to_owned(),
                    column_type: col.column_type(),
                    levels: match col {
                        Column::Categorical { levels, .. } => Some(levels.clone()),
                        _ => None,
                    },
                })
                .collect(),
            metadata: self.metadata.clone(),
        }
    }

    /// Stable sort of row order by a `u64` key column (e.g. `row_id`).
    pub fn sort_by_u64(&self, name: &str) -> Result<Table> {
        let Column::UInt(keys) = self.require(name)? else {
            return Err(Error::Schema(format!("column `{name}` is not uint")));
        };
        let mut idx: Vec<usize> = (0..self.rows).collect();
        idx.sort_by_key(|&i| keys[i]);
        let idx: Vec<_> = idx.into_iter().map(Some).collect();
        Ok(self.take(&idx))
    }

    /// Map from `u64` key to row index; fails on duplicate or null keys.
    pub(crate) fn index_by_u64(&self, name: &str) -> Result<HashMap<u64, usize>> {
        let Column::UInt(keys) = self.require(name)? else {
            return Err(Error::Schema(format!("column `{name}` is not uint")));
        };
        let mut map = HashMap::with_capacity(keys.len());
        for (i, k) in keys.iter().enumerate() {
            let k = k.ok_or_else(|| Error::Schema(format!("null key in `{name}`")))?;
            if map.insert(k, i).is_some() {
                return Err(Error::DuplicateRowId(k));
            }
        }
        Ok(map)
    }
}
