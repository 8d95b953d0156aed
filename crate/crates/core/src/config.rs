//! TOML study configuration.
//!
//! ```toml
//! study = "prepost"
//! iterations = 500
//! master_seed = 42
//! filter = "sample_size > 10"     # optional
//!
//! [factors]                       # listed order = grid order, first varies fastest
//! sample_size = [10, 20, 30]      # integers
//! effect_size = [0.0, 0.5]        # reals (any float makes the factor real)
//! outcome = ["post", "change"]    # categorical
//! correction = [false, true]      # boolean
//! dose = { kind = "real", levels = [1, 2, 4] }
//!
//! [run]                           # optional defaults for `tidysim run`
//! jobs = 8
//!
//! [aggregate]                     # optional defaults for `tidysim aggregate`
//! group_by = ["sample_size", "effect_size"]
//! alpha = 0.05
//! z = 1.96
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::grid::{FactorKind, FactorSpec, FilterExpr, GridSpec};
use crate::value::Value;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunDefaults {
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregateDefaults {
    pub group_by: Option<Vec<String>>,
    pub alpha: Option<f64>,
    pub z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExplicitFactor {
    kind: FactorKind,
    levels: Vec<toml::Value>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub study: Option<String>,
    pub iterations: u64,
    pub master_seed: u64,
    pub filter: Option<String>,
    factors: toml::Table,
    #[serde(default)]
    pub run: RunDefaults,
    #[serde(default)]
    pub aggregate: AggregateDefaults,
}

fn level(kind: FactorKind, v: &toml::Value) -> Option<Value> {
    Some(match (kind, v) {
        (FactorKind::Integer, toml::Value::Integer(i)) => Value::Int(*i),
        (FactorKind::Real, toml::Value::Integer(i)) => Value::Real(*i as f64),
        (FactorKind::Real, toml::Value::Float(x)) => Value::Real(*x),
        (FactorKind::Categorical, toml::Value::String(s)) => Value::Text(s.clone()),
        (FactorKind::Boolean, toml::Value::Boolean(b)) => Value::Bool(*b),
        _ => return None,
    })
}

fn infer_kind(levels: &[toml::Value]) -> Option<FactorKind> {
    use toml::Value as T;
    if levels.iter().all(|v| matches!(v, T::Integer(_))) {
        Some(FactorKind::Integer)
    } else if levels.iter().all(|v| matches!(v, T::Integer(_) | T::Float(_))) {
        Some(FactorKind::Real)
    } else if levels.iter().all(|v| matches!(v, T::String(_))) {
        Some(FactorKind::Categorical)
    } else if levels.iter().all(|v| matches!(v, T::Boolean(_))) {
        Some(FactorKind::Boolean)
    } else {
        None
    }
}

impl StudyConfig {
    pub fn parse(text: &str) -> Result<StudyConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<StudyConfig> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn factors(&self) -> Result<Vec<FactorSpec>> {
        self.factors
            .iter()
            .map(|(name, v)| {
                let (kind, levels) = match v {
                    toml::Value::Array(levels) => {
                        let kind = infer_kind(levels).ok_or_else(|| {
                            Error::Config(format!(
                                "factor `{name}` mixes level types; use {{ kind = \"...\", levels = [...] }}"
                            ))
                        })?;
                        (kind, levels.clone())
                    }
                    toml::Value::Table(t) => {
                        let e: ExplicitFactor = t
                            .clone()
                            .try_into()
                            .map_err(|e| Error::Config(format!("factor `{name}`: {e}")))?;
                        (e.kind, e.levels)
                    }
                    other => {
                        return Err(Error::Config(format!(
                            "factor `{name}` must be an array of levels, found {}",
                            other.type_str()
                        )))
                    }
                };
                let levels = levels
                    .iter()
                    .map(|v| {
                        level(kind, v).ok_or_else(|| {
                            Error::Config(format!("factor `{name}`: level {v} is not {kind}"))
                        })
                    })
                    .collect::<Result<_>>()?;
                FactorSpec::new(name.clone(), kind, levels)
            })
            .collect()
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        let mut spec = GridSpec::new(self.factors()?, self.iterations, self.master_seed);
        if let Some(f) = &self.filter {
            spec = spec.with_filter(FilterExpr::parse(f)?);
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::expand_grid;

    #[test]
    fn kinds_inferred_in_order() {
        let c = StudyConfig::parse(
            r#"
            iterations = 2
            master_seed = 1
            [factors]
            n = [10, 20]
            effect = [0, 0.5]
            arm = ["a", "b"]
            flag = [true]
            dose = { kind = "real", levels = [1, 2] }
            "#,
        )
        .unwrap();
        let f = c.factors().unwrap();
        let kinds: Vec<FactorKind> = f.iter().map(|f| f.kind()).collect();
        assert_eq!(
            kinds,
            [FactorKind::Integer, FactorKind::Real, FactorKind::Categorical, FactorKind::Boolean, FactorKind::Real]
        );
        assert_eq!(f[1].levels(), &[Value::Real(0.0), Value::Real(0.5)]);
        assert_eq!(expand_grid(&c.grid_spec().unwrap()).unwrap().len(), 32);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = StudyConfig::parse("iterations = 1\nmaster_seed = 0\nseeds = 3\n[factors]\nx = [1]\n").unwrap_err();
        assert!(err.to_string().contains("seeds"), "{err}");
        assert!(StudyConfig::parse("iterations = 1\nmaster_seed = 0\n[factors]\nx = [1]\n[run]\nfoo = 1\n").is_err());
    }

    #[test]
    fn malformed_toml_names_line() {
        let err = StudyConfig::parse("iterations = 1\nmaster_seed = \n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn mixed_levels_rejected() {
        let c = StudyConfig::parse("iterations = 1\nmaster_seed = 0\n[factors]\nx = [1, \"a\"]\n").unwrap();
        assert!(c.factors().is_err());
    }
}
