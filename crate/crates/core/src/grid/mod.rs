//! The simulation grid: a full factorial design over the factors, stacked
//! `iterations` times, one row per individual simulation.
//!
//! Row ordering is fixed: the first-listed factor varies fastest and the
//! iteration varies slowest, so row `r` of a design with `C` cells per
//! iteration belongs to iteration `r / C + 1`. Every row carries the seed
//! `derive_seed(master_seed, row_id)`.
//!
//! Grids are immutable. An unfiltered grid never materializes its rows: each
//! row is decoded from its `row_id` on demand. Filtering and slicing keep the
//! original `row_id`s (and therefore seeds), leaving gaps.

mod filter;
mod io;

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::splitmix64;
use crate::value::Value;

pub use filter::FilterExpr;
pub use io::{read_grid, write_grid};

/// Column names that cannot be used as factor names.
pub const RESERVED_NAMES: [&str; 3] = ["row_id", "iteration", "seed"];

/// Seed for grid row `row_id`: one splitmix64 step from state `master_seed + row_id`.
pub fn derive_seed(master_seed: u64, row_id: u64) -> u64 {
    let mut state = master_seed.wrapping_add(row_id);
    splitmix64(&mut state)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorKind {
    Integer,
    Real,
    Categorical,
    Boolean,
}

impl fmt::Display for FactorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FactorKind::Integer => "integer",
            FactorKind::Real => "real",
            FactorKind::Categorical => "categorical",
            FactorKind::Boolean => "boolean",
        })
    }
}

pub(crate) fn valid_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// A simulation factor and its ordered, distinct levels.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSpec {
    name: String,
    kind: FactorKind,
    levels: Vec<Value>,
}

impl FactorSpec {
    pub fn new(name: impl Into<String>, kind: FactorKind, levels: Vec<Value>) -> Result<Self> {
        let name = name.into();
        let invalid = |reason: String| Error::Spec(format!("factor `{name}`: {reason}"));
        if !valid_identifier(&name) {
            return Err(invalid("name must match [a-z_][a-z0-9_]*".into()));
        }
        if RESERVED_NAMES.contains(&name.as_str()) {
            return Err(invalid("name is reserved".into()));
        }
        if levels.is_empty() {
            return Err(invalid("needs at least one level".into()));
        }
        for level in &levels {
            let ok = match (kind, level) {
                (FactorKind::Integer, Value::Int(_)) => true,
                (FactorKind::Real, Value::Real(v)) => v.is_finite(),
                (FactorKind::Categorical, Value::Text(_)) => true,
                (FactorKind::Boolean, Value::Bool(_)) => true,
                _ => false,
            };
            if !ok {
                return Err(invalid(format!("level {level:?} is not a valid {kind} level")));
            }
        }
        let mut sorted: Vec<&Value> = levels.iter().collect();
        sorted.sort_by(|a, b| a.total_cmp(b));
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(invalid(format!("duplicate level {}", w[0])));
        }
        Ok(Self { name, kind, levels })
    }

    pub fn integer(name: impl Into<String>, levels: impl IntoIterator<Item = i64>) -> Result<Self> {
        Self::new(name, FactorKind::Integer, levels.into_iter().map(Value::Int).collect())
    }

    pub fn real(name: impl Into<String>, levels: impl IntoIterator<Item = f64>) -> Result<Self> {
        Self::new(name, FactorKind::Real, levels.into_iter().map(Value::Real).collect())
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        levels: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        Self::new(
            name,
            FactorKind::Categorical,
            levels.into_iter().map(|s| Value::Text(s.into())).collect(),
        )
    }

    pub fn boolean(name: impl Into<String>, levels: impl IntoIterator<Item = bool>) -> Result<Self> {
        Self::new(name, FactorKind::Boolean, levels.into_iter().map(Value::Bool).collect())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> FactorKind {
        self.kind
    }

    pub fn levels(&self) -> &[Value] {
        &self.levels
    }

    fn level_index(&self, value: &Value) -> Option<u32> {
        let found = match (self.kind, value) {
            (FactorKind::Real, Value::Int(v)) => {
                let v = *v as f64;
                self.levels.iter().position(|l| l.as_f64() == Some(v))
            }
            _ => self.levels.iter().position(|l| l == value),
        };
        found.map(|i| i as u32)
    }
}

/// Declarative description of a grid.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub factors: Vec<FactorSpec>,
    pub iterations: u64,
    pub master_seed: u64,
    pub filter: Option<FilterExpr>,
}

impl GridSpec {
    pub fn new(factors: Vec<FactorSpec>, iterations: u64, master_seed: u64) -> Self {
        Self {
            factors,
            iterations,
            master_seed,
            filter: None,
        }
    }

    pub fn with_filter(mut self, filter: FilterExpr) -> Self {
        self.filter = Some(filter);
        self
    }
}

/// One simulation setting. `levels[j]` indexes into factor `j`'s levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridRow {
    pub row_id: u64,
    pub levels: Vec<u32>,
    pub iteration: u64,
    pub seed: u64,
}

/// The validated full design that every grid row id refers to.
#[derive(Debug)]
pub(crate) struct Design {
    factors: Vec<FactorSpec>,
    iterations: u64,
    master_seed: u64,
    cells: u64,
    total: u64,
}

impl Design {
    fn new(factors: Vec<FactorSpec>, iterations: u64, master_seed: u64) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Spec("at least one factor is required".into()));
        }
        if iterations == 0 {
            return Err(Error::Spec("iterations must be positive".into()));
        }
        for (i, f) in factors.iter().enumerate() {
            if factors[..i].iter().any(|g| g.name == f.name) {
                return Err(Error::Spec(format!("duplicate factor name `{}`", f.name)));
            }
        }
        let cells = factors.iter().try_fold(1u64, |acc, f| {
            acc.checked_mul(f.levels.len() as u64).ok_or(Error::Overflow)
        })?;
        let total = cells.checked_mul(iterations).ok_or(Error::Overflow)?;
        Ok(Self {
            factors,
            iterations,
            master_seed,
            cells,
            total,
        })
    }

    /// Mixed-radix decomposition of `row_id`, first factor least significant.
    fn decode(&self, row_id: u64) -> GridRow {
        debug_assert!(row_id < self.total);
        let mut rest = row_id % self.cells;
        let levels = self
            .factors
            .iter()
            .map(|f| {
                let radix = f.levels.len() as u64;
                let digit = rest % radix;
                rest /= radix;
                digit as u32
            })
            .collect();
        GridRow {
            row_id,
            levels,
            iteration: row_id / self.cells + 1,
            seed: derive_seed(self.master_seed, row_id),
        }
    }
}

#[derive(Debug, Clone)]
enum Rows {
    /// Contiguous row ids of the design.
    Range(Range<u64>),
    /// Sorted row ids of the design.
    Ids(Arc<[u64]>),
    /// Explicit rows, for grids read from files that do not follow a design.
    Stored(Arc<[GridRow]>),
}

/// An addressable, immutable collection of grid rows.
#[derive(Debug, Clone)]
pub struct Grid {
    design: Arc<Design>,
    rows: Rows,
}

/// Build the full factorial grid for `spec`, applying its filter if present.
pub fn expand_grid(spec: &GridSpec) -> Result<Grid> {
    let design = Design::new(spec.factors.clone(), spec.iterations, spec.master_seed)?;
    let grid = Grid {
        rows: Rows::Range(0..design.total),
        design: Arc::new(design),
    };
    match &spec.filter {
        Some(f) => grid.filter_expr(f),
        None => Ok(grid),
    }
}

impl Grid {
    pub fn len(&self) -> usize {
        match &self.rows {
            Rows::Range(r) => (r.end - r.start) as usize,
            Rows::Ids(ids) => ids.len(),
            Rows::Stored(rows) => rows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn factors(&self) -> &[FactorSpec] {
        &self.design.factors
    }

    pub fn factor_names(&self) -> impl Iterator<Item = &str> {
        self.design.factors.iter().map(|f| f.name.as_str())
    }

    pub fn iterations(&self) -> u64 {
        self.design.iterations
    }

    pub fn master_seed(&self) -> u64 {
        self.design.master_seed
    }

    /// Rows in one iteration of the full design (product of level counts).
    pub fn cells_per_iteration(&self) -> u64 {
        self.design.cells
    }

    /// Rows in the unfiltered design.
    pub fn design_rows(&self) -> u64 {
        self.design.total
    }

    /// Row at position `pos` (not row id), computed on demand for lazy grids.
    pub fn row(&self, pos: usize) -> Option<GridRow> {
        match &self.rows {
            Rows::Range(r) => {
                let id = r.start.checked_add(pos as u64)?;
                (id < r.end).then(|| self.design.decode(id))
            }
            Rows::Ids(ids) => ids.get(pos).map(|&id| self.design.decode(id)),
            Rows::Stored(rows) => rows.get(pos).cloned(),
        }
    }

    pub fn row_id(&self, pos: usize) -> Option<u64> {
        match &self.rows {
            Rows::Range(r) => {
                let id = r.start.checked_add(pos as u64)?;
                (id < r.end).then_some(id)
            }
            Rows::Ids(ids) => ids.get(pos).copied(),
            Rows::Stored(rows) => rows.get(pos).map(|r| r.row_id),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = GridRow> + '_ {
        (0..self.len()).map(move |i| self.row(i).expect("position in range"))
    }

    pub fn row_ids(&self) -> Vec<u64> {
        (0..self.len()).map(|i| self.row_id(i).unwrap()).collect()
    }

    pub fn view<'a>(&'a self, row: &'a GridRow) -> RowView<'a> {
        RowView {
            factors: &self.design.factors,
            row,
        }
    }

    /// Materialize every row by enumerating the design with an odometer, an
    /// enumeration independent of the lazy mixed-radix decoding.
    pub fn materialize(&self) -> Grid {
        let rows: Vec<GridRow> = match &self.rows {
            Rows::Stored(rows) => rows.to_vec(),
            _ => {
                let wanted = self.row_ids();
                let mut out = Vec::with_capacity(wanted.len());
                let mut next = wanted.iter().peekable();
                let mut digits = vec![0u32; self.design.factors.len()];
                let mut row_id = 0u64;
                'iter: for iteration in 1..=self.design.iterations {
                    digits.iter_mut().for_each(|d| *d = 0);
                    loop {
                        let Some(&&want) = next.peek() else { break 'iter };
                        if want == row_id {
                            out.push(GridRow {
                                row_id,
                                levels: digits.clone(),
                                iteration,
                                seed: derive_seed(self.design.master_seed, row_id),
                            });
                            next.next();
                        }
                        row_id += 1;
                        // increment the odometer, first factor fastest
                        let mut carry = true;
                        for (d, f) in digits.iter_mut().zip(&self.design.factors) {
                            *d += 1;
                            if (*d as usize) < f.levels.len() {
                                carry = false;
                                break;
                            }
                            *d = 0;
                        }
                        if carry {
                            break;
                        }
                    }
                }
                out
            }
        };
        Grid {
            design: self.design.clone(),
            rows: Rows::Stored(rows.into()),
        }
    }

    fn with_ids(&self, ids: Vec<u64>) -> Grid {
        Grid {
            design: self.design.clone(),
            rows: Rows::Ids(ids.into()),
        }
    }

    fn keep(&self, mut keep: impl FnMut(&GridRow) -> Result<bool>) -> Result<Grid> {
        match &self.rows {
            Rows::Stored(rows) => {
                let mut out = Vec::new();
                for r in rows.iter() {
                    if keep(r)? {
                        out.push(r.clone());
                    }
                }
                Ok(Grid {
                    design: self.design.clone(),
                    rows: Rows::Stored(out.into()),
                })
            }
            _ => {
                let mut ids = Vec::new();
                for r in self.iter() {
                    if keep(&r)? {
                        ids.push(r.row_id);
                    }
                }
                Ok(self.with_ids(ids))
            }
        }
    }

    /// Keep rows for which `predicate` holds. Row ids and seeds are preserved.
    pub fn filter<F>(&self, mut predicate: F) -> Result<Grid>
    where
        F: FnMut(&RowView<'_>) -> Result<bool>,
    {
        let factors = &self.design.factors;
        self.keep(|row| predicate(&RowView { factors, row }))
    }

    pub fn filter_expr(&self, expr: &FilterExpr) -> Result<Grid> {
        expr.check(self.factors())?;
        self.filter(|row| expr.eval(row))
    }

    /// Rows at positions `[range.start, range.end)`.
    pub fn slice_rows(&self, range: Range<usize>) -> Result<Grid> {
        if range.start > range.end || range.end > self.len() {
            return Err(Error::OutOfRange(format!(
                "slice {}..{} of a grid with {} rows",
                range.start,
                range.end,
                self.len()
            )));
        }
        let rows = match &self.rows {
            Rows::Range(r) => Rows::Range(r.start + range.start as u64..r.start + range.end as u64),
            Rows::Ids(ids) => Rows::Ids(ids[range].into()),
            Rows::Stored(rows) => Rows::Stored(rows[range].into()),
        };
        Ok(Grid {
            design: self.design.clone(),
            rows,
        })
    }

    /// Keep exactly the rows whose iteration is in `iterations`.
    pub fn subset_iterations(&self, iterations: &BTreeSet<u64>) -> Result<Grid> {
        if let Some(bad) = iterations
            .iter()
            .find(|&&i| i == 0 || i > self.design.iterations)
        {
            return Err(Error::OutOfRange(format!(
                "iteration {bad} outside 1..={}",
                self.design.iterations
            )));
        }
        if let Rows::Range(r) = &self.rows {
            // whole iterations are contiguous blocks of row ids
            let cells = self.design.cells;
            let mut ids = Vec::new();
            for &it in iterations {
                let lo = ((it - 1) * cells).max(r.start);
                let hi = (it * cells).min(r.end);
                ids.extend(lo..hi.max(lo));
            }
            return Ok(self.with_ids(ids));
        }
        self.keep(|row| Ok(iterations.contains(&row.iteration)))
    }
}

/// Named access to one row's factor values.
#[derive(Debug, Clone, Copy)]
pub struct RowView<'a> {
    factors: &'a [FactorSpec],
    row: &'a GridRow,
}

impl<'a> RowView<'a> {
    pub fn new(factors: &'a [FactorSpec], row: &'a GridRow) -> Self {
        Self { factors, row }
    }

    pub fn row(&self) -> &GridRow {
        self.row
    }

    pub fn row_id(&self) -> u64 {
        self.row.row_id
    }

    pub fn seed(&self) -> u64 {
        self.row.seed
    }

    pub fn iteration(&self) -> u64 {
        self.row.iteration
    }

    pub fn factors(&self) -> &[FactorSpec] {
        self.factors
    }

    /// Value of factor `name`; `iteration`, `seed` and `row_id` are also accessible.
    pub fn get(&self, name: &str) -> Result<&'a Value> {
        let j = self
            .factors
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| Error::UnknownFactor(name.to_owned()))?;
        Ok(&self.factors[j].levels[self.row.levels[j] as usize])
    }

    pub fn value(&self, name: &str) -> Result<Value> {
        match name {
            "row_id" => Ok(Value::UInt(self.row.row_id)),
            "iteration" => Ok(Value::Int(self.row.iteration as i64)),
            "seed" => Ok(Value::UInt(self.row.seed)),
            _ => self.get(name).cloned(),
        }
    }

    fn typed<T>(&self, name: &str, what: &str, f: impl Fn(&Value) -> Option<T>) -> Result<T> {
        let v = self.get(name)?;
        f(v).ok_or_else(|| Error::Schema(format!("factor `{name}` = {v} is not {what}")))
    }

    pub fn get_f64(&self, name: &str) -> Result<f64> {
        self.typed(name, "numeric", Value::as_f64)
    }

    pub fn get_i64(&self, name: &str) -> Result<i64> {
        self.typed(name, "an integer", Value::as_i64)
    }

    pub fn get_bool(&self, name: &str) -> Result<bool> {
        self.typed(name, "a boolean", Value::as_bool)
    }

    pub fn get_str(&self, name: &str) -> Result<&'a str> {
        let v = self.get(name)?;
        v.as_str()
            .ok_or_else(|| Error::Schema(format!("factor `{name}` = {v} is not text")))
    }

    /// `(name, value)` pairs for every factor, in factor order.
    pub fn pairs(&self) -> impl Iterator<Item = (&'a str, &'a Value)> + '_ {
        self.factors
            .iter()
            .zip(&self.row.levels)
            .map(|(f, &l)| (f.name.as_str(), &f.levels[l as usize]))
    }
}
