//! Pre-post randomized trial power study.
//!
//! Each unit has a baseline `pre ~ N(0, 3²)` and a follow-up
//! `post = pre + N(0, 0.3²) + effect_size · treated`, where the first
//! `⌊n/2⌋` units are treated. The treatment effect is estimated by OLS on
//! either `post` or the change score `post − pre`, optionally adjusting for
//! `pre`. Draw order per seed: the `pre` vector, then the `post` noise vector.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::RowView;
use crate::linmodel::{add_intercept, fit_ols};
use crate::numerics::{normal, Rng};
use crate::study::{OutcomeSchema, Outcomes, Study, StudyError};
use crate::table::{Column, Table};
use crate::value::ValueKind;

pub const PRE_SD: f64 = 3.0;
pub const NOISE_SD: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct PrePostDataset {
    pub id: Vec<i64>,
    pub treated: Vec<bool>,
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
}

impl PrePostDataset {
    pub fn len(&self) -> usize {
        self.id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id.is_empty()
    }

    pub fn to_table(&self) -> Table {
        Table::from_columns(vec![
            ("id".into(), Column::Int(self.id.iter().copied().map(Some).collect())),
            ("treated".into(), Column::Bool(self.treated.iter().copied().map(Some).collect())),
            ("pre".into(), Column::Real(self.pre.iter().copied().map(Some).collect())),
            ("post".into(), Column::Real(self.post.iter().copied().map(Some).collect())),
        ])
        .expect("columns have equal length")
    }
}

/// Which response the treatment effect is estimated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Response {
    Post,
    Change,
}

impl Response {
    pub const ALL: [Response; 2] = [Response::Post, Response::Change];

    pub fn as_str(self) -> &'static str {
        match self {
            Response::Post => "post",
            Response::Change => "change",
        }
    }
}

impl FromStr for Response {
    type Err = StudyError;

    fn from_str(s: &str) -> Result<Self, StudyError> {
        match s {
            "post" => Ok(Response::Post),
            "change" => Ok(Response::Change),
            other => Err(StudyError::new(format!(
                "unknown outcome `{other}`, expected `post` or `change`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrePostOutcome {
    pub estimate: f64,
    pub pvalue: f64,
    pub singular: bool,
}

pub fn generate_prepost(sample_size: i64, effect_size: f64, seed: u64) -> Result<PrePostDataset, StudyError> {
    if sample_size < 2 {
        return Err(StudyError::new(format!(
            "sample size must be at least 2 so both arms are present, got {sample_size}"
        )));
    }
    if !effect_size.is_finite() {
        return Err(StudyError::new(format!("effect size must be finite, got {effect_size}")));
    }
    let n = sample_size as usize;
    let n_treated = n / 2;
    let treated: Vec<bool> = (0..n).map(|i| i < n_treated).collect();
    let mut rng = Rng::from_seed(seed);
    let pre = normal(&mut rng, 0.0, PRE_SD, n)?;
    let noise = normal(&mut rng, 0.0, NOISE_SD, n)?;
    let post = pre
        .iter()
        .zip(&noise)
        .zip(&treated)
        .map(|((p, e), &t)| p + e + if t { effect_size } else { 0.0 })
        .collect();
    Ok(PrePostDataset {
        id: (0..sample_size).collect(),
        treated,
        pre,
        post,
    })
}

/// Treatment coefficient, its p-value and the singularity flag for one analysis variant.
pub fn analyze_prepost(data: &PrePostDataset, response: Response, correction: bool) -> Result<PrePostOutcome, StudyError> {
    let n = data.len();
    let n_treated = data.treated.iter().filter(|&&t| t).count();
    if n_treated == 0 || n_treated == n {
        return Err(StudyError::new("both treatment arms must be present"));
    }
    let y = DVector::from_iterator(
        n,
        data.post.iter().zip(&data.pre).map(|(post, pre)| match response {
            Response::Post => *post,
            Response::Change => post - pre,
        }),
    );
    let k = if correction { 2 } else { 1 };
    let x = DMatrix::from_fn(n, k, |i, j| match j {
        0 => f64::from(u8::from(data.treated[i])),
        _ => data.pre[i],
    });
    let fit = fit_ols(&add_intercept(&x), &y).map_err(|e| match e {
        Error::InsufficientDf { n, k } => StudyError::new(format!(
            "insufficient degrees of freedom: {n} units for {k} coefficients"
        )),
        other => other.into(),
    })?;
    Ok(PrePostOutcome {
        estimate: fit.coef[1],
        pvalue: fit.p_value[1],
        singular: fit.singular,
    })
}

fn sample_size(params: &RowView<'_>) -> Result<i64, StudyError> {
    Ok(params.get_i64("sample_size")?)
}

/// One analysis variant per grid row (`outcome` and `correction` are grid factors).
#[derive(Debug)]
pub struct PrePostStudy {
    schema: OutcomeSchema,
}

impl PrePostStudy {
    pub fn new() -> Self {
        Self {
            schema: OutcomeSchema::new([
                ("estimate", ValueKind::Real),
                ("pvalue", ValueKind::Real),
                ("singular", ValueKind::Boolean),
            ])
            .unwrap(),
        }
    }
}

impl Default for PrePostStudy {
    fn default() -> Self {
        Self::new()
    }
}

impl Study for PrePostStudy {
    type Dataset = PrePostDataset;

    fn name(&self) -> &str {
        "prepost"
    }

    fn outcome_schema(&self) -> &OutcomeSchema {
        &self.schema
    }

    fn required_factors(&self) -> &[&str] {
        &["sample_size", "effect_size", "outcome", "correction"]
    }

    fn generate(&self, params: &RowView<'_>, seed: u64) -> Result<PrePostDataset, StudyError> {
        generate_prepost(sample_size(params)?, params.get_f64("effect_size")?, seed)
    }

    fn analyze(&self, data: &PrePostDataset, params: &RowView<'_>) -> Result<Outcomes, StudyError> {
        let response: Response = params.get_str("outcome")?.parse()?;
        let out = analyze_prepost(data, response, params.get_bool("correction")?)?;
        Ok(Outcomes::new()
            .with("estimate", out.estimate)
            .with("pvalue", out.pvalue)
            .with("singular", out.singular))
    }

    fn dataset_table(&self, data: &PrePostDataset) -> Table {
        data.to_table()
    }
}

/// Level name of the correction factor in wide column names.
pub fn correction_label(correction: bool) -> &'static str {
    if correction {
        "corrected"
    } else {
        "uncorrected"
    }
}

/// All four analysis variants on each generated dataset, reported in wide
/// columns named `<outcome>_<correction>_<value>`, e.g. `change_uncorrected_pvalue`.
#[derive(Debug)]
pub struct PrePostWideStudy {
    schema: OutcomeSchema,
}

impl PrePostWideStudy {
    pub fn new() -> Self {
        let mut fields = Vec::new();
        for correction in [false, true] {
            for response in Response::ALL {
                let prefix = format!("{}_{}", response.as_str(), correction_label(correction));
                fields.push((format!("{prefix}_estimate"), ValueKind::Real));
                fields.push((format!("{prefix}_pvalue"), ValueKind::Real));
                fields.push((format!("{prefix}_singular"), ValueKind::Boolean));
            }
        }
        Self {
            schema: OutcomeSchema::new(fields).unwrap(),
        }
    }
}

impl Default for PrePostWideStudy {
    fn default() -> Self {
        Self::new()
    }
}

impl Study for PrePostWideStudy {
    type Dataset = PrePostDataset;

    fn name(&self) -> &str {
        "prepost_wide"
    }

    fn outcome_schema(&self) -> &OutcomeSchema {
        &self.schema
    }

    fn required_factors(&self) -> &[&str] {
        &["sample_size", "effect_size"]
    }

    fn generate(&self, params: &RowView<'_>, seed: u64) -> Result<PrePostDataset, StudyError> {
        generate_prepost(sample_size(params)?, params.get_f64("effect_size")?, seed)
    }

    fn analyze(&self, data: &PrePostDataset, _params: &RowView<'_>) -> Result<Outcomes, StudyError> {
        let mut out = Outcomes::new();
        for correction in [false, true] {
            for response in Response::ALL {
                let prefix = format!("{}_{}", response.as_str(), correction_label(correction));
                let r = analyze_prepost(data, response, correction)?;
                out.push(format!("{prefix}_estimate"), r.estimate);
                out.push(format!("{prefix}_pvalue"), r.pvalue);
                out.push(format!("{prefix}_singular"), r.singular);
            }
        }
        Ok(out)
    }

    fn dataset_table(&self, data: &PrePostDataset) -> Table {
        data.to_table()
    }
}
