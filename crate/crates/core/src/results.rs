//! The tidy results table and its joins and reshapes.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::study::OutcomeSchema;
use crate::table::{Column, ColumnType, Table};
use crate::value::{Value, ValueKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Ok,
    Error(String),
}

impl Status {
    pub fn is_ok(&self) -> bool {
        matches!(self, Status::Ok)
    }

    /// `"ok"` or `"error: <message>"`.
    pub fn encode(&self) -> String {
        match self {
            Status::Ok => "ok".to_owned(),
            Status::Error(m) => format!("error: {m}"),
        }
    }

    pub fn decode(s: &str) -> Status {
        match s {
            "ok" => Status::Ok,
            other => Status::Error(other.strip_prefix("error: ").unwrap_or(other).to_owned()),
        }
    }
}

/// One executed grid row. Outcomes are all null when the row failed.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub row_id: u64,
    pub outcomes: Vec<Value>,
    pub status: Status,
}

impl ResultRow {
    /// Equality with reals compared bit for bit (so NaN equals NaN).
    pub fn identical(&self, other: &ResultRow) -> bool {
        self.row_id == other.row_id
            && self.status == other.status
            && self.outcomes.len() == other.outcomes.len()
            && self.outcomes.iter().zip(&other.outcomes).all(|(a, b)| match (a, b) {
                (Value::Real(x), Value::Real(y)) => x.to_bits() == y.to_bits(),
                (a, b) => a == b,
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultsTable {
    pub schema: OutcomeSchema,
    pub rows: Vec<ResultRow>,
}

fn empty_outcome_column(kind: ValueKind) -> Column {
    match kind {
        ValueKind::Real => Column::Real(Vec::new()),
        ValueKind::Integer => Column::Int(Vec::new()),
        ValueKind::Boolean => Column::Bool(Vec::new()),
        ValueKind::Text => Column::Text(Vec::new()),
    }
}

impl ResultsTable {
    pub fn new(schema: OutcomeSchema) -> Self {
        Self {
            schema,
            rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn sort(&mut self) {
        self.rows.sort_by_key(|r| r.row_id);
    }

    pub fn identical(&self, other: &ResultsTable) -> bool {
        self.schema == other.schema
            && self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| a.identical(b))
    }

    pub fn error_count(&self) -> usize {
        self.rows.iter().filter(|r| !r.status.is_ok()).count()
    }

    /// Columns `row_id`, the outcomes in schema order, then `status`.
    pub fn to_table(&self) -> Table {
        let mut row_id = Vec::with_capacity(self.rows.len());
        let mut status = Vec::with_capacity(self.rows.len());
        let mut cols: Vec<Column> = self
            .schema
            .fields()
            .iter()
            .map(|(_, k)| empty_outcome_column(*k))
            .collect();
        for r in &self.rows {
            row_id.push(Some(r.row_id));
            status.push(Some(r.status.encode()));
            for (col, v) in cols.iter_mut().zip(&r.outcomes) {
                col.push(v.clone()).expect("outcomes conform to schema");
            }
        }
        let mut t = Table::new().with_column("row_id", Column::UInt(row_id)).unwrap();
        for ((name, _), col) in self.schema.fields().iter().zip(cols) {
            t.push_column(name.clone(), col).unwrap();
        }
        t.push_column("status", Column::Text(status)).unwrap();
        t
    }

    /// Inverse of [`ResultsTable::to_table`]; outcome types follow the column types.
    pub fn from_table(table: &Table) -> Result<Self> {
        let names = table.names();
        if names.first().map(String::as_str) != Some("row_id")
            || names.last().map(String::as_str) != Some("status")
        {
            return Err(Error::Schema(format!(
                "results table must start with `row_id` and end with `status`, found {names:?}"
            )));
        }
        let outcome_names = &names[1..names.len() - 1];
        let mut fields = Vec::with_capacity(outcome_names.len());
        for name in outcome_names {
            let kind = match table.require(name)?.column_type() {
                ColumnType::Real => ValueKind::Real,
                ColumnType::Int | ColumnType::UInt => ValueKind::Integer,
                ColumnType::Bool => ValueKind::Boolean,
                ColumnType::Text | ColumnType::Categorical => ValueKind::Text,
            };
            fields.push((name.clone(), kind));
        }
        let schema = OutcomeSchema::new(fields)?;
        let ids = table.require("row_id")?;
        let status = table.require("status")?;
        let mut rows = Vec::with_capacity(table.num_rows());
        for i in 0..table.num_rows() {
            let row_id = match ids.get(i) {
                Value::UInt(v) => v,
                Value::Int(v) if v >= 0 => v as u64,
                other => return Err(Error::Schema(format!("bad row_id {other}"))),
            };
            let status = match status.get(i) {
                Value::Text(s) => Status::decode(&s),
                other => return Err(Error::Schema(format!("bad status {other}"))),
            };
            let outcomes = outcome_names
                .iter()
                .map(|n| match table.value(i, n)? {
                    Value::UInt(u) => Ok(Value::Int(i64::try_from(u).map_err(|_| Error::Overflow)?)),
                    v => Ok(v),
                })
                .collect::<Result<_>>()?;
            rows.push(ResultRow {
                row_id,
                outcomes,
                status,
            });
        }
        Ok(Self { schema, rows })
    }
}

/// Left join of `right` onto `left` by the `row_id` column. Every left row is
/// kept; right columns are null where no match exists.
pub fn left_join(left: &Table, right: &Table) -> Result<Table> {
    let right_index = right.index_by_u64("row_id")?;
    let left_index = left.index_by_u64("row_id")?;
    if let Some(id) = right_index.keys().find(|id| !left_index.contains_key(id)) {
        return Err(Error::Schema(format!("row_id {id} is not in the grid")));
    }
    let Column::UInt(left_ids) = left.require("row_id")? else {
        unreachable!("index_by_u64 checked the type")
    };
    let picks: Vec<Option<usize>> = left_ids
        .iter()
        .map(|id| id.and_then(|id| right_index.get(&id).copied()))
        .collect();
    let mut out = left.clone();
    for (name, col) in right.columns().filter(|(n, _)| *n != "row_id") {
        out.push_column(name, col.take(&picks))?;
    }
    Ok(out)
}

/// Analysis frame: grid columns plus outcome columns, one row per grid row.
pub fn join_grid_results(grid: &Grid, results: &ResultsTable) -> Result<Table> {
    left_join(&grid.to_table(), &results.to_table())
}

/// Turn wide result columns named `<level>_..._<value>` into long rows, one
/// per (input row × level combination).
///
/// `row_id` and `status` are key columns; every other column must end in
/// `_<value>` for one of `value_names`, preceded by exactly one level per entry
/// of `factor_names`. Output columns: `row_id` (synthesized as
/// `wide_row_id × combinations + combination_index`, combinations numbered in
/// column order), `wide_row_id`, one categorical column per factor, the value
/// columns, and `status` if present.
pub fn pivot_long(wide: &Table, value_names: &[&str], factor_names: &[&str]) -> Result<Table> {
    let mut combos: Vec<Vec<String>> = Vec::new();
    let mut cells: HashMap<(usize, &str), usize> = HashMap::new();
    for (ci, name) in wide.names().iter().enumerate() {
        if name == "row_id" || name == "status" {
            continue;
        }
        let parsed = value_names.iter().find_map(|v| {
            let prefix = if factor_names.is_empty() {
                (name == v).then_some("")?
            } else {
                name.strip_suffix(v)?.strip_suffix('_')?
            };
            let levels: Vec<String> = if factor_names.is_empty() {
                Vec::new()
            } else {
                prefix.split('_').map(str::to_owned).collect()
            };
            (levels.len() == factor_names.len() && levels.iter().all(|l| !l.is_empty()))
                .then_some((levels, *v))
        });
        let Some((levels, value)) = parsed else {
            return Err(Error::Schema(format!(
                "column `{name}` is not of the form {}<value> with value in {value_names:?}",
                factor_names.iter().map(|f| format!("<{f}>_")).collect::<String>()
            )));
        };
        let combo = match combos.iter().position(|c| *c == levels) {
            Some(i) => i,
            None => {
                combos.push(levels);
                combos.len() - 1
            }
        };
        if cells.insert((combo, value), ci).is_some() {
            return Err(Error::Schema(format!("column `{name}` appears twice")));
        }
    }
    for (c, levels) in combos.iter().enumerate() {
        for v in value_names {
            if !cells.contains_key(&(c, *v)) {
                return Err(Error::Schema(format!(
                    "value `{v}` missing for levels {levels:?}"
                )));
            }
        }
    }

    let ids = wide.require("row_id")?;
    let n_combos = combos.len() as u64;
    let n_out = wide.num_rows() * combos.len();
    let mut row_id = Vec::with_capacity(n_out);
    let mut wide_row_id = Vec::with_capacity(n_out);
    let mut factor_codes: Vec<Vec<Option<u32>>> = vec![Vec::with_capacity(n_out); factor_names.len()];
    let factor_levels: Vec<Vec<String>> = (0..factor_names.len())
        .map(|j| {
            let mut levels: Vec<String> = Vec::new();
            for c in &combos {
                if !levels.contains(&c[j]) {
                    levels.push(c[j].clone());
                }
            }
            levels
        })
        .collect();
    let mut origin = Vec::with_capacity(n_out);
    for i in 0..wide.num_rows() {
        let id = match ids.get(i) {
            Value::UInt(v) => v,
            Value::Int(v) if v >= 0 => v as u64,
            other => return Err(Error::Schema(format!("bad row_id {other}"))),
        };
        for (c, levels) in combos.iter().enumerate() {
            let synth = id
                .checked_mul(n_combos)
                .and_then(|v| v.checked_add(c as u64))
                .ok_or(Error::Overflow)?;
            row_id.push(Some(synth));
            wide_row_id.push(Some(id));
            for (j, codes) in factor_codes.iter_mut().enumerate() {
                let code = factor_levels[j].iter().position(|l| *l == levels[j]).unwrap();
                codes.push(Some(code as u32));
            }
            origin.push((i, c));
        }
    }

    let mut out = Table::new()
        .with_column("row_id", Column::UInt(row_id))?
        .with_column("wide_row_id", Column::UInt(wide_row_id))?;
    for ((name, levels), codes) in factor_names.iter().zip(factor_levels).zip(factor_codes) {
        out.push_column(*name, Column::Categorical { levels, codes })?;
    }
    for v in value_names {
        let first = wide.names()[cells[&(0, *v)]].as_str();
        let mut col = wide.require(first)?.empty_like();
        for &(i, c) in &origin {
            let src = &wide.names()[cells[&(c, *v)]];
            col.push(wide.value(i, src)?)?;
        }
        out.push_column(*v, col)?;
    }
    if let Some(status) = wide.column("status") {
        let idx: Vec<Option<usize>> = origin.iter().map(|&(i, _)| Some(i)).collect();
        out.push_column("status", status.take(&idx))?;
    }
    Ok(out)
}

/// Analysis frame for pivoted results: one row per long row, with the grid
/// columns of its `wide_row_id` attached.
pub fn join_grid_long(grid: &Grid, long: &Table) -> Result<Table> {
    let grid_table = grid.to_table();
    let index = grid_table.index_by_u64("row_id")?;
    let wide = long.require("wide_row_id")?;
    let picks = (0..long.num_rows())
        .map(|i| match wide.get(i) {
            Value::UInt(id) => index
                .get(&id)
                .copied()
                .map(Some)
                .ok_or_else(|| Error::Schema(format!("row_id {id} is not in the grid"))),
            other => Err(Error::Schema(format!("bad wide_row_id {other}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Table::new()
        .with_column("row_id", long.require("row_id")?.clone())?
        .with_column("wide_row_id", wide.clone())?;
    for (name, col) in grid_table.columns().filter(|(n, _)| *n != "row_id") {
        out.push_column(name, col.take(&picks))?;
    }
    for (name, col) in long.columns().filter(|(n, _)| !matches!(*n, "row_id" | "wide_row_id")) {
        out.push_column(name, col.clone())?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SidecarCheck {
    pub row_id: u64,
    pub path: Option<PathBuf>,
    pub exists: bool,
}

/// Check that every file referenced in text column `column` exists. Relative
/// paths are resolved against `base_dir` when given. Null paths count as missing.
pub fn attach_sidecar(results: &Table, column: &str, base_dir: Option<&Path>) -> Result<Vec<SidecarCheck>> {
    let col = results.require(column)?;
    if !matches!(col.column_type(), ColumnType::Text | ColumnType::Categorical) {
        return Err(Error::Schema(format!("column `{column}` does not hold file paths")));
    }
    let ids = results.require("row_id")?;
    (0..results.num_rows())
        .map(|i| {
            let row_id = match ids.get(i) {
                Value::UInt(v) => v,
                Value::Int(v) if v >= 0 => v as u64,
                other => return Err(Error::Schema(format!("bad row_id {other}"))),
            };
            let path = col.get(i).as_str().map(|p| match base_dir {
                Some(base) if Path::new(p).is_relative() => base.join(p),
                _ => PathBuf::from(p),
            });
            let exists = path.as_deref().is_some_and(Path::exists);
            Ok(SidecarCheck { row_id, path, exists })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{expand_grid, FactorSpec, GridSpec};

    fn schema() -> OutcomeSchema {
        OutcomeSchema::new([("v", ValueKind::Real), ("flag", ValueKind::Boolean)]).unwrap()
    }

    fn results(ids: &[u64]) -> ResultsTable {
        ResultsTable {
            schema: schema(),
            rows: ids
                .iter()
                .map(|&id| ResultRow {
                    row_id: id,
                    outcomes: vec![Value::Real(id as f64 / 2.0), Value::Bool(id % 2 == 0)],
                    status: Status::Ok,
                })
                .collect(),
        }
    }

    fn grid() -> Grid {
        expand_grid(&GridSpec::new(vec![FactorSpec::integer("a", [1, 2, 3, 4, 5]).unwrap()], 2, 3))
            .unwrap()
    }

    #[test]
    fn status_encoding() {
        assert_eq!(Status::decode(&Status::Ok.encode()), Status::Ok);
        let e = Status::Error("boom: at x".into());
        assert_eq!(Status::decode(&e.encode()), e);
    }

    #[test]
    fn table_round_trip() {
        let mut r = results(&[0, 1, 2]);
        r.rows[1] = ResultRow {
            row_id: 1,
            outcomes: vec![Value::Null, Value::Null],
            status: Status::Error("failed".into()),
        };
        let back = ResultsTable::from_table(&r.to_table()).unwrap();
        assert!(back.identical(&r));
    }

    #[test]
    fn full_join_has_no_nulls() {
        let g = grid();
        let frame = join_grid_results(&g, &results(&(0..10).collect::<Vec<_>>())).unwrap();
        assert_eq!(frame.num_rows(), 10);
        assert_eq!(frame.require("v").unwrap().null_count(), 0);
    }

    #[test]
    fn missing_rows_are_null() {
        let ids: Vec<u64> = (0..10).filter(|i| *i != 5 && *i != 9).collect();
        let frame = join_grid_results(&grid(), &results(&ids)).unwrap();
        assert_eq!(frame.num_rows(), 10);
        let v = frame.require("v").unwrap();
        assert!(v.is_null(5) && v.is_null(9));
        assert!(frame.require("status").unwrap().is_null(5));
        assert_eq!(v.null_count(), 2);
    }

    #[test]
    fn join_is_order_insensitive() {
        let ids: Vec<u64> = (0..10).collect();
        let mut shuffled = results(&ids);
        shuffled.rows.reverse();
        shuffled.rows.swap(2, 7);
        let a = join_grid_results(&grid(), &results(&ids)).unwrap();
        let b = join_grid_results(&grid(), &shuffled).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn duplicate_and_foreign_ids_rejected() {
        assert!(matches!(
            join_grid_results(&grid(), &results(&[1, 1])),
            Err(Error::DuplicateRowId(1))
        ));
        assert!(join_grid_results(&grid(), &results(&[42])).is_err());
    }

    #[test]
    fn pivot_two_outcomes() {
        let wide = Table::from_columns(vec![
            ("row_id".into(), Column::UInt(vec![Some(0), Some(1), Some(2)])),
            ("post_uncorrected_pvalue".into(), Column::Real(vec![Some(0.1), Some(0.2), Some(0.3)])),
            ("change_uncorrected_pvalue".into(), Column::Real(vec![Some(0.4), Some(0.5), Some(0.6)])),
        ])
        .unwrap();
        let long = pivot_long(&wide, &["pvalue"], &["outcome", "correction"]).unwrap();
        assert_eq!(long.num_rows(), 6);
        assert_eq!(
            long.require("outcome").unwrap(),
            &Column::Categorical {
                levels: vec!["post".into(), "change".into()],
                codes: vec![Some(0), Some(1), Some(0), Some(1), Some(0), Some(1)],
            }
        );
        assert_eq!(
            long.require("pvalue").unwrap(),
            &Column::Real(vec![Some(0.1), Some(0.4), Some(0.2), Some(0.5), Some(0.3), Some(0.6)])
        );
        assert_eq!(long.value(5, "row_id").unwrap(), Value::UInt(5));
        assert_eq!(long.value(5, "wide_row_id").unwrap(), Value::UInt(2));
    }

    #[test]
    fn pivot_single_combination_is_rename() {
        let wide = Table::from_columns(vec![
            ("row_id".into(), Column::UInt(vec![Some(4), Some(9)])),
            ("change_uncorrected_pvalue".into(), Column::Real(vec![Some(0.4), Some(0.5)])),
            ("change_uncorrected_estimate".into(), Column::Real(vec![Some(1.0), Some(2.0)])),
        ])
        .unwrap();
        let long = pivot_long(&wide, &["estimate", "pvalue"], &["outcome", "correction"]).unwrap();
        assert_eq!(long.num_rows(), 2);
        assert_eq!(long.require("row_id").unwrap(), &Column::UInt(vec![Some(4), Some(9)]));
        assert_eq!(long.require("pvalue").unwrap(), wide.require("change_uncorrected_pvalue").unwrap());
    }

    #[test]
    fn pivot_parses_outcome_correction_value_names() {
        let wide = Table::from_columns(vec![
            ("row_id".into(), Column::UInt(vec![Some(0)])),
            ("changescore_uncorrected_pvalue".into(), Column::Real(vec![Some(0.04)])),
        ])
        .unwrap();
        let long = pivot_long(&wide, &["pvalue"], &["outcome", "correction"]).unwrap();
        assert_eq!(long.value(0, "outcome").unwrap(), Value::Text("changescore".into()));
        assert_eq!(long.value(0, "correction").unwrap(), Value::Text("uncorrected".into()));
    }

    #[test]
    fn pivot_rejects_bad_names() {
        let wide = Table::from_columns(vec![
            ("row_id".into(), Column::UInt(vec![Some(0)])),
            ("post_pvalue".into(), Column::Real(vec![Some(0.04)])),
        ])
        .unwrap();
        let err = pivot_long(&wide, &["pvalue"], &["outcome", "correction"]).unwrap_err();
        assert!(err.to_string().contains("post_pvalue"));
        let missing = Table::from_columns(vec![
            ("row_id".into(), Column::UInt(vec![Some(0)])),
            ("post_x_pvalue".into(), Column::Real(vec![Some(0.04)])),
            ("post_x_estimate".into(), Column::Real(vec![Some(0.04)])),
            ("change_x_pvalue".into(), Column::Real(vec![Some(0.04)])),
        ])
        .unwrap();
        assert!(pivot_long(&missing, &["pvalue", "estimate"], &["outcome", "correction"]).is_err());
    }

    #[test]
    fn sidecar_report() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["a.txt", "b.txt"] {
            std::fs::write(dir.path().join(name), "trace").unwrap();
        }
        let t = Table::from_columns(vec![
            ("row_id".into(), Column::UInt(vec![Some(0), Some(1), Some(2)])),
            (
                "trace".into(),
                Column::Text(vec![Some("a.txt".into()), Some("b.txt".into()), None]),
            ),
        ])
        .unwrap();
        let report = attach_sidecar(&t, "trace", Some(dir.path())).unwrap();
        assert_eq!(report.iter().map(|r| r.exists).collect::<Vec<_>>(), vec![true, true, false]);
        std::fs::remove_file(dir.path().join("b.txt")).unwrap();
        let report = attach_sidecar(&t, "trace", Some(dir.path())).unwrap();
        assert_eq!(report.iter().filter(|r| !r.exists).map(|r| r.row_id).collect::<Vec<_>>(), vec![1, 2]);
        assert!(attach_sidecar(&t.slice(0, 0), "trace", None).unwrap().is_empty());
        assert!(attach_sidecar(&t, "row_id", None).is_err());
    }
}
