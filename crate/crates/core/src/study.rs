//! The pluggable generate/analyze pair run for every grid row.

use std::fmt;

use crate::error::{Error, Result};
use crate::grid::RowView;
use crate::table::Table;
use crate::value::{Value, ValueKind};

/// A row-level failure raised by a study. The runner records it in the row's
/// status instead of aborting the run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StudyError(String);

impl StudyError {
    pub fn new(message: impl Into<String>) -> Self {
        Self(message.into())
    }

    pub fn message(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StudyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for StudyError {}

impl From<Error> for StudyError {
    fn from(e: Error) -> Self {
        Self(e.to_string())
    }
}

/// Ordered outcome names and their types.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeSchema(Vec<(String, ValueKind)>);

impl OutcomeSchema {
    pub fn new<S: Into<String>>(fields: impl IntoIterator<Item = (S, ValueKind)>) -> Result<Self> {
        let fields: Vec<(String, ValueKind)> =
            fields.into_iter().map(|(n, k)| (n.into(), k)).collect();
        for (i, (name, _)) in fields.iter().enumerate() {
            if matches!(name.as_str(), "row_id" | "status") {
                return Err(Error::Schema(format!("outcome name `{name}` is reserved")));
            }
            if fields[..i].iter().any(|(n, _)| n == name) {
                return Err(Error::Schema(format!("duplicate outcome `{name}`")));
            }
        }
        Ok(Self(fields))
    }

    pub fn fields(&self) -> &[(String, ValueKind)] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|(n, _)| n.as_str())
    }

    /// Reorder `outcomes` into schema order, checking names and types.
    pub fn conform(&self, outcomes: Outcomes) -> Result<Vec<Value>, StudyError> {
        let mut slots: Vec<Option<Value>> = vec![None; self.0.len()];
        for (name, value) in outcomes.0 {
            let Some(j) = self.0.iter().position(|(n, _)| *n == name) else {
                return Err(StudyError::new(format!("undeclared outcome `{name}`")));
            };
            if slots[j].is_some() {
                return Err(StudyError::new(format!("outcome `{name}` returned twice")));
            }
            let kind = self.0[j].1;
            if !value.fits(kind) {
                return Err(StudyError::new(format!(
                    "outcome `{name}` = {value:?} does not match declared type {kind:?}"
                )));
            }
            slots[j] = Some(match (kind, value) {
                (ValueKind::Real, Value::Int(i)) => Value::Real(i as f64),
                (ValueKind::Integer, Value::UInt(u)) => Value::Int(
                    i64::try_from(u).map_err(|_| StudyError::new(format!("outcome `{name}` overflows")))?,
                ),
                (_, v) => v,
            });
        }
        slots
            .into_iter()
            .zip(&self.0)
            .map(|(v, (name, _))| v.ok_or_else(|| StudyError::new(format!("missing outcome `{name}`"))))
            .collect()
    }
}

/// Named outcome values returned by an analysis.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcomes(Vec<(String, Value)>);

impl Outcomes {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, value: impl Into<Value>) -> Self {
        self.0.push((name.into(), value.into()));
        self
    }

    pub fn push(&mut self, name: impl Into<String>, value: impl Into<Value>) {
        self.0.push((name.into(), value.into()));
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.0.iter().map(|(n, v)| (n.as_str(), v))
    }
}

/// A data-generating process plus the analysis applied to each generated dataset.
///
/// `generate` receives the row's factor values and seed; its output is the
/// interface to `analyze`. Both must be pure functions of their inputs so
/// results do not depend on which worker runs a row.
pub trait Study: Send + Sync {
    type Dataset;

    fn name(&self) -> &str;

    fn outcome_schema(&self) -> &OutcomeSchema;

    /// Factors the grid must provide.
    fn required_factors(&self) -> &[&str] {
        &[]
    }

    fn generate(&self, params: &RowView<'_>, seed: u64) -> Result<Self::Dataset, StudyError>;

    fn analyze(&self, data: &Self::Dataset, params: &RowView<'_>) -> Result<Outcomes, StudyError>;

    /// Tidy table form of a dataset, used when replaying a row for debugging.
    fn dataset_table(&self, data: &Self::Dataset) -> Table;
}

/// Object-safe view of a [`Study`], used by the runner and the registry.
pub trait DynStudy: Send + Sync {
    fn name(&self) -> &str;
    fn outcome_schema(&self) -> &OutcomeSchema;
    fn required_factors(&self) -> &[&str];
    /// Generate and analyze one row.
    fn execute(&self, params: &RowView<'_>) -> Result<Outcomes, StudyError>;
    /// Generate one row's dataset and analyze it, returning both.
    fn replay(&self, params: &RowView<'_>) -> Result<(Table, Result<Outcomes, StudyError>), StudyError>;
}

impl<S: Study> DynStudy for S {
    fn name(&self) -> &str {
        Study::name(self)
    }

    fn outcome_schema(&self) -> &OutcomeSchema {
        Study::outcome_schema(self)
    }

    fn required_factors(&self) -> &[&str] {
        Study::required_factors(self)
    }

    fn execute(&self, params: &RowView<'_>) -> Result<Outcomes, StudyError> {
        let data = self.generate(params, params.seed())?;
        self.analyze(&data, params)
    }

    fn replay(&self, params: &RowView<'_>) -> Result<(Table, Result<Outcomes, StudyError>), StudyError> {
        let data = self.generate(params, params.seed())?;
        Ok((self.dataset_table(&data), self.analyze(&data, params)))
    }
}

/// Fail unless every factor the study needs is present in `factors`.
pub fn check_factors<'a>(study: &dyn DynStudy, factors: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let present: Vec<&str> = factors.into_iter().collect();
    let missing: Vec<&str> = study
        .required_factors()
        .iter()
        .copied()
        .filter(|f| !present.contains(f))
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::Schema(format!(
            "study `{}` needs factors {missing:?}, grid has {present:?}",
            study.name()
        )))
    }
}

/// Built-in studies, by name.
pub fn registry() -> Vec<Box<dyn DynStudy>> {
    vec![
        Box::new(crate::prepost::PrePostStudy::new()),
        Box::new(crate::prepost::PrePostWideStudy::new()),
    ]
}

pub fn find_study(name: &str) -> Result<Box<dyn DynStudy>> {
    let mut all = registry();
    match all.iter().position(|s| s.name() == name) {
        Some(i) => Ok(all.swap_remove(i)),
        None => Err(Error::UnknownStudy {
            name: name.to_owned(),
            available: all.iter().map(|s| s.name().to_owned()).collect(),
        }),
    }
}
