//! Grid ⇄ table conversion and file storage.
//!
//! Columns: `row_id` (uint), one column per factor, `iteration` (int), `seed`
//! (uint). Categorical factors are dictionary-encoded. The design (factors
//! with ordered levels, iterations, master seed) is kept as JSON in the
//! `tidysim.grid` metadata entry.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Design, FactorKind, FactorSpec, Grid, GridRow, Rows};
use crate::error::{Error, Result};
use crate::table::{read_table, write_table, Column, Format, Table};
use crate::value::Value;

pub(crate) const GRID_KEY: &str = "tidysim.grid";

#[derive(Debug, Serialize, Deserialize)]
struct FactorRepr {
    name: String,
    kind: FactorKind,
    levels: Vec<serde_json::Value>,
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct DesignRepr {
    factors: Vec<FactorRepr>,
    iterations: u64,
    master_seed: u64,
}

fn level_to_json(v: &Value) -> serde_json::Value {
    match v {
        Value::Int(i) => (*i).into(),
        Value::Real(x) => serde_json::Number::from_f64(*x).map_or(serde_json::Value::Null, Into::into),
        Value::Bool(b) => (*b).into(),
        Value::Text(s) => s.clone().into(),
        Value::UInt(u) => (*u).into(),
        Value::Null => serde_json::Value::Null,
    }
}

fn level_from_json(kind: FactorKind, v: &serde_json::Value) -> Result<Value> {
    let bad = || Error::Schema(format!("bad {kind} level {v}"));
    Ok(match kind {
        FactorKind::Integer => Value::Int(v.as_i64().ok_or_else(bad)?),
        FactorKind::Real => Value::Real(v.as_f64().ok_or_else(bad)?),
        FactorKind::Boolean => Value::Bool(v.as_bool().ok_or_else(bad)?),
        FactorKind::Categorical => Value::Text(v.as_str().ok_or_else(bad)?.to_owned()),
    })
}

impl DesignRepr {
    fn of(design: &Design) -> Self {
        Self {
            factors: design
                .factors
                .iter()
                .map(|f| FactorRepr {
                    name: f.name.clone(),
                    kind: f.kind,
                    levels: f.levels.iter().map(level_to_json).collect(),
                })
                .collect(),
            iterations: design.iterations,
            master_seed: design.master_seed,
        }
    }

    fn into_design(self) -> Result<Design> {
        let factors = self
            .factors
            .into_iter()
            .map(|f| {
                let levels = f
                    .levels
                    .iter()
                    .map(|l| level_from_json(f.kind, l))
                    .collect::<Result<_>>()?;
                FactorSpec::new(f.name, f.kind, levels)
            })
            .collect::<Result<_>>()?;
        Design::new(factors, self.iterations, self.master_seed)
    }
}

impl Grid {
    /// Tidy table with columns `row_id`, factors..., `iteration`, `seed`.
    pub fn to_table(&self) -> Table {
        let n = self.len();
        let mut row_id = Vec::with_capacity(n);
        let mut iteration = Vec::with_capacity(n);
        let mut seed = Vec::with_capacity(n);
        let mut codes: Vec<Vec<u32>> = vec![Vec::with_capacity(n); self.factors().len()];
        for r in self.iter() {
            row_id.push(Some(r.row_id));
            iteration.push(Some(r.iteration as i64));
            seed.push(Some(r.seed));
            for (dst, &c) in codes.iter_mut().zip(&r.levels) {
                dst.push(c);
            }
        }
        let mut table = Table::new().with_column("row_id", Column::UInt(row_id)).unwrap();
        for (f, codes) in self.factors().iter().zip(codes) {
            let col = match f.kind {
                FactorKind::Categorical => Column::Categorical {
                    levels: f.levels.iter().map(|l| l.as_str().unwrap().to_owned()).collect(),
                    codes: codes.into_iter().map(Some).collect(),
                },
                FactorKind::Integer => Column::Int(
                    codes.into_iter().map(|c| f.levels[c as usize].as_i64()).collect(),
                ),
                FactorKind::Real => Column::Real(
                    codes.into_iter().map(|c| f.levels[c as usize].as_f64()).collect(),
                ),
                FactorKind::Boolean => Column::Bool(
                    codes.into_iter().map(|c| f.levels[c as usize].as_bool()).collect(),
                ),
            };
            table.push_column(f.name.clone(), col).unwrap();
        }
        table.push_column("iteration", Column::Int(iteration)).unwrap();
        table.push_column("seed", Column::UInt(seed)).unwrap();
        table.set_metadata(
            GRID_KEY,
            serde_json::to_string(&DesignRepr::of(&self.design)).unwrap(),
        );
        table
    }

    /// Rebuild a grid from its table form. Without design metadata the factors
    /// are inferred from the columns (levels in dictionary or ascending order).
    pub fn from_table(table: &Table) -> Result<Grid> {
        let uint = |name: &str| -> Result<Vec<u64>> {
            let col = table
                .column(name)
                .ok_or_else(|| Error::Schema(format!("grid is missing the `{name}` column")))?;
            (0..col.len())
                .map(|i| match col.get(i) {
                    Value::UInt(v) => Ok(v),
                    Value::Int(v) if v >= 0 => Ok(v as u64),
                    other => Err(Error::Schema(format!("`{name}`[{i}] = {other} is not a row index"))),
                })
                .collect()
        };
        let row_ids = uint("row_id")?;
        let iterations = uint("iteration")?;
        let seeds = uint("seed")?;

        let factor_cols: Vec<&str> = table
            .names()
            .iter()
            .map(String::as_str)
            .filter(|n| !super::RESERVED_NAMES.contains(n))
            .collect();

        let design = match table.metadata().get(GRID_KEY) {
            Some(json) => serde_json::from_str::<DesignRepr>(json)?.into_design()?,
            None => infer_design(table, &factor_cols, &iterations)?,
        };
        let names: Vec<&str> = design.factors.iter().map(|f| f.name.as_str()).collect();
        if names != factor_cols {
            return Err(Error::Schema(format!(
                "grid columns {factor_cols:?} do not match its factors {names:?}"
            )));
        }

        let mut rows = Vec::with_capacity(table.num_rows());
        for i in 0..table.num_rows() {
            let levels = design
                .factors
                .iter()
                .map(|f| {
                    let v = table.value(i, &f.name)?;
                    f.level_index(&v).ok_or_else(|| {
                        Error::Schema(format!("row {i}: `{}` = {v} is not a level", f.name))
                    })
                })
                .collect::<Result<_>>()?;
            rows.push(GridRow {
                row_id: row_ids[i],
                levels,
                iteration: iterations[i],
                seed: seeds[i],
            });
        }

        // Keep the compact lazy form when every row is exactly what the design says.
        let follows_design = rows
            .iter()
            .all(|r| r.row_id < design.total && design.decode(r.row_id) == *r)
            && rows.windows(2).all(|w| w[0].row_id < w[1].row_id);
        let rows = if follows_design {
            Rows::Ids(rows.iter().map(|r| r.row_id).collect())
        } else {
            Rows::Stored(rows.into())
        };
        Ok(Grid {
            design: Arc::new(design),
            rows,
        })
    }
}

fn infer_design(table: &Table, factor_cols: &[&str], iterations: &[u64]) -> Result<Design> {
    let mut factors = Vec::new();
    for &name in factor_cols {
        let col = table.require(name)?;
        let (kind, mut levels): (FactorKind, Vec<Value>) = match col {
            Column::Categorical { levels, .. } => (
                FactorKind::Categorical,
                levels.iter().map(|l| Value::Text(l.clone())).collect(),
            ),
            Column::Int(_) | Column::UInt(_) => (FactorKind::Integer, Vec::new()),
            Column::Real(_) => (FactorKind::Real, Vec::new()),
            Column::Bool(_) => (FactorKind::Boolean, Vec::new()),
            Column::Text(_) => (FactorKind::Categorical, Vec::new()),
        };
        if levels.is_empty() {
            for i in 0..col.len() {
                let v = match col.get(i) {
                    Value::UInt(u) => Value::Int(i64::try_from(u).map_err(|_| Error::Overflow)?),
                    Value::Null => {
                        return Err(Error::Schema(format!("null in grid factor `{name}`")))
                    }
                    v => v,
                };
                if !levels.contains(&v) {
                    levels.push(v);
                }
            }
            if kind != FactorKind::Categorical {
                levels.sort_by(|a, b| a.total_cmp(b));
            }
        }
        factors.push(FactorSpec::new(name, kind, levels)?);
    }
    let max_iter = iterations.iter().copied().max().unwrap_or(1).max(1);
    Design::new(factors, max_iter, 0)
}

pub fn write_grid(grid: &Grid, path: &Path, format: Format) -> Result<()> {
    write_table(&grid.to_table(), path, format)
}

/// Read a grid file; the format follows the extension (`.csv` or Parquet).
pub fn read_grid(path: &Path) -> Result<Grid> {
    Grid::from_table(&read_table(path)?)
}
