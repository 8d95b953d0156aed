//! Summaries over Monte Carlo iterations: bias with a quantile interval and
//! power with a normal-approximation binomial interval.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::table::{Column, Table};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateSpec {
    pub group_by: Vec<String>,
    /// Rejection threshold: a row rejects when `pvalue < alpha`.
    pub alpha: f64,
    /// Critical value of the power interval.
    pub z: f64,
    /// Quantiles of `estimate − truth` reported as `bias_lo` and `bias_hi`.
    pub quantiles: (f64, f64),
    pub estimate: String,
    pub pvalue: String,
    pub truth: String,
}

impl Default for AggregateSpec {
    fn default() -> Self {
        Self {
            group_by: Vec::new(),
            alpha: 0.05,
            z: 1.96,
            quantiles: (0.025, 0.975),
            estimate: "estimate".into(),
            pvalue: "pvalue".into(),
            truth: "effect_size".into(),
        }
    }
}

impl AggregateSpec {
    pub fn new<S: Into<String>>(group_by: impl IntoIterator<Item = S>) -> Self {
        Self {
            group_by: group_by.into_iter().map(Into::into).collect(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.z > 0.0 && self.z.is_finite()) {
            return bad(format!("z must be positive, got {}", self.z));
        }
        let (lo, hi) = self.quantiles;
        if !((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo <= hi) {
            return bad(format!("quantiles must satisfy 0 ≤ lo ≤ hi ≤ 1, got ({lo}, {hi})"));
        }
        Ok(())
    }
}

/// Summary of one group. Statistics are `None` when the group has no usable rows.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub key: Vec<Value>,
    pub bias: Option<f64>,
    pub bias_lo: Option<f64>,
    pub bias_hi: Option<f64>,
    pub power: Option<f64>,
    pub n_sim: u64,
    pub n_error: u64,
    pub power_se: Option<f64>,
    pub power_lo: Option<f64>,
    pub power_hi: Option<f64>,
}

/// Linear interpolation between order statistics at position `q·(n−1)`
/// (the type 7 rule). `sorted` must be in ascending order.
pub fn quantile(sorted: &[f64], q: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::InvalidArgument("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("quantile level {q} outside [0, 1]")));
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let h = pos - lo as f64;
    Ok(match sorted.get(lo + 1) {
        Some(next) if h > 0.0 => sorted[lo] + h * (next - sorted[lo]),
        _ => sorted[lo],
    })
}

/// Power estimate `rejections / n`, its standard error, and the interval
/// `power ∓ z·se` clipped to [0, 1]. Returns `(power, se, lo, hi)`.
pub fn power_interval(rejections: u64, n: u64, z: f64) -> Option<(f64, f64, f64, f64)> {
    if n == 0 {
        return None;
    }
    let p = rejections as f64 / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    Some((p, se, (p - z * se).clamp(0.0, 1.0), (p + z * se).clamp(0.0, 1.0)))
}

#[derive(Debug, Clone, PartialEq)]
struct GroupKey(Vec<Value>);

impl Eq for GroupKey {}

impl PartialOrd for GroupKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for GroupKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

/// Sort key of a cell: categorical values order by level position, the rest by value.
fn sort_value(col: &Column, i: usize) -> Value {
    match col {
        Column::Categorical { codes, .. } => codes[i].map_or(Value::Null, |c| Value::UInt(c.into())),
        other => other.get(i),
    }
}

fn numeric(frame: &Table, name: &str) -> Result<Vec<Option<f64>>> {
    let col = frame.require(name)?;
    (0..col.len())
        .map(|i| match col.get(i) {
            Value::Null => Ok(None),
            v => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| Error::Schema(format!("column `{name}` is not numeric"))),
        })
        .collect()
}

struct Group {
    first_row: usize,
    diffs: Vec<f64>,
    rejections: u64,
    n_error: u64,
}

/// A row counts as a simulation when its status (if the frame has one) is
/// `ok` and its estimate, p-value and truth are all non-null and not NaN.
/// Every other row counts as an error.
pub fn aggregate_rows(frame: &Table, spec: &AggregateSpec) -> Result<(Vec<usize>, Vec<AggregateRow>)> {
    spec.validate()?;
    let estimate = numeric(frame, &spec.estimate)?;
    let pvalue = numeric(frame, &spec.pvalue)?;
    let truth = numeric(frame, &spec.truth)?;
    let status = frame.column("status");
    let keys: Vec<&Column> = spec
        .group_by
        .iter()
        .map(|g| frame.require(g))
        .collect::<Result<_>>()?;

    let mut groups: BTreeMap<GroupKey, Group> = BTreeMap::new();
    for i in 0..frame.num_rows() {
        let key = GroupKey(keys.iter().map(|c| sort_value(c, i)).collect());
        let g = groups.entry(key).or_insert_with(|| Group {
            first_row: i,
            diffs: Vec::new(),
            rejections: 0,
            n_error: 0,
        });
        let ok = status.map_or(true, |s| s.get(i).as_str() == Some("ok"));
        match (estimate[i], pvalue[i], truth[i]) {
            (Some(e), Some(p), Some(t)) if ok && !e.is_nan() && !p.is_nan() && !t.is_nan() => {
                g.diffs.push(e - t);
                g.rejections += u64::from(p < spec.alpha);
            }
            _ => g.n_error += 1,
        }
    }

    let mut firsts = Vec::with_capacity(groups.len());
    let mut rows = Vec::with_capacity(groups.len());
    for (_, mut g) in groups {
        // sorting first makes the mean independent of input order
        g.diffs.sort_by(f64::total_cmp);
        let n = g.diffs.len() as u64;
        let (bias, bias_lo, bias_hi) = if n == 0 {
            (None, None, None)
        } else {
            (
                Some(g.diffs.iter().sum::<f64>() / n as f64),
                Some(quantile(&g.diffs, spec.quantiles.0)?),
                Some(quantile(&g.diffs, spec.quantiles.1)?),
            )
        };
        let interval = power_interval(g.rejections, n, spec.z);
        rows.push(AggregateRow {
            key: keys.iter().map(|c| c.get(g.first_row)).collect(),
            bias,
            bias_lo,
            bias_hi,
            power: interval.map(|i| i.0),
            n_sim: n,
            n_error: g.n_error,
            power_se: interval.map(|i| i.1),
            power_lo: interval.map(|i| i.2),
            power_hi: interval.map(|i| i.3),
        });
        firsts.push(g.first_row);
    }
    Ok((firsts, rows))
}

/// One row per group, sorted by group key. Columns: the group keys, then
/// `bias, bias_lo, bias_hi, power, n_sim, n_error, power_se, power_lo, power_hi`.
pub fn aggregate(frame: &Table, spec: &AggregateSpec) -> Result<Table> {
    let (firsts, rows) = aggregate_rows(frame, spec)?;
    let picks: Vec<Option<usize>> = firsts.into_iter().map(Some).collect();
    let mut out = Table::new();
    for g in &spec.group_by {
        out.push_column(g.clone(), frame.require(g)?.take(&picks))?;
    }
    let real = |f: fn(&AggregateRow) -> Option<f64>| Column::Real(rows.iter().map(f).collect());
    let count = |f: fn(&AggregateRow) -> u64| Column::Int(rows.iter().map(|r| Some(f(r) as i64)).collect());
    out.push_column("bias", real(|r| r.bias))?;
    out.push_column("bias_lo", real(|r| r.bias_lo))?;
    out.push_column("bias_hi", real(|r| r.bias_hi))?;
    out.push_column("power", real(|r| r.power))?;
    out.push_column("n_sim", count(|r| r.n_sim))?;
    out.push_column("n_error", count(|r| r.n_error))?;
    out.push_column("power_se", real(|r| r.power_se))?;
    out.push_column("power_lo", real(|r| r.power_lo))?;
    out.push_column("power_hi", real(|r| r.power_hi))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(estimates: &[f64], pvalues: &[f64], truth: f64) -> Table {
        let n = estimates.len();
        Table::from_columns(vec![
            ("g".into(), Column::Int(vec![Some(1); n])),
            ("effect_size".into(), Column::Real(vec![Some(truth); n])),
            ("estimate".into(), Column::Real(estimates.iter().copied().map(Some).collect())),
            ("pvalue".into(), Column::Real(pvalues.iter().copied().map(Some).collect())),
            ("status".into(), Column::Text(vec![Some("ok".into()); n])),
        ])
        .unwrap()
    }

    #[test]
    fn quantile_rule() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5).unwrap(), 2.5);
        assert_eq!(quantile(&[3.0, 5.0, 9.0], 0.0).unwrap(), 3.0);
        assert_eq!(quantile(&[3.0, 5.0, 9.0], 1.0).unwrap(), 9.0);
        assert!((quantile(&[0.0, 10.0], 0.025).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(quantile(&[7.0], 0.3).unwrap(), 7.0);
        assert!(quantile(&[], 0.5).is_err());
    }

    #[test]
    fn power_quarter() {
        let t = aggregate(&frame(&[0.0; 4], &[0.01, 0.20, 0.30, 0.40], 0.0), &AggregateSpec::new(["g"])).unwrap();
        assert_eq!(t.value(0, "power").unwrap(), Value::Real(0.25));
        let se = t.value(0, "power_se").unwrap().as_f64().unwrap();
        assert!((se - (0.25f64 * 0.75 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(t.value(0, "power_lo").unwrap(), Value::Real(0.0));
        assert!((t.value(0, "power_hi").unwrap().as_f64().unwrap() - (0.25 + 1.96 * se)).abs() < 1e-15);
    }

    #[test]
    fn no_rejections() {
        let t = aggregate(&frame(&[0.0; 3], &[0.5, 0.06, 0.05], 0.0), &AggregateSpec::new(["g"])).unwrap();
        for c in ["power", "power_se", "power_lo", "power_hi"] {
            assert_eq!(t.value(0, c).unwrap(), Value::Real(0.0), "{c}");
        }
    }

    #[test]
    fn bias_two_points() {
        let t = aggregate(&frame(&[0.1, 0.3], &[0.5, 0.5], 0.2), &AggregateSpec::new(["g"])).unwrap();
        let get = |c| t.value(0, c).unwrap().as_f64().unwrap();
        assert!(get("bias").abs() < 1e-15);
        assert!((get("bias_lo") + 0.095).abs() < 1e-12);
        assert!((get("bias_hi") - 0.095).abs() < 1e-12);
    }

    #[test]
    fn errors_and_empty_groups() {
        let mut f = frame(&[0.1, 0.2, f64::NAN], &[0.01, 0.5, 0.5], 0.0);
        let status = Column::Text(vec![Some("ok".into()), Some("error: x".into()), Some("ok".into())]);
        f = Table::from_columns(
            f.columns()
                .map(|(n, c)| (n.to_owned(), if n == "status" { status.clone() } else { c.clone() }))
                .collect(),
        )
        .unwrap();
        let (_, rows) = aggregate_rows(&f, &AggregateSpec::new(["g"])).unwrap();
        assert_eq!((rows[0].n_sim, rows[0].n_error), (1, 2));
        assert_eq!(rows[0].power, Some(1.0));

        let dead = f.take(&[Some(1), Some(2)]);
        let (_, rows) = aggregate_rows(&dead, &AggregateSpec::new(["g"])).unwrap();
        assert_eq!((rows[0].n_sim, rows[0].n_error), (0, 2));
        assert_eq!(rows[0].power, None);
        assert_eq!(rows[0].bias, None);
    }

    #[test]
    fn groups_sorted_by_level_order() {
        let t = Table::from_columns(vec![
            (
                "outcome".into(),
                Column::Categorical {
                    levels: vec!["post".into(), "change".into()],
                    codes: vec![Some(1), Some(0), Some(1)],
                },
            ),
            ("effect_size".into(), Column::Real(vec![Some(0.0); 3])),
            ("estimate".into(), Column::Real(vec![Some(0.0); 3])),
            ("pvalue".into(), Column::Real(vec![Some(0.01), Some(0.5), Some(0.5)])),
        ])
        .unwrap();
        let out = aggregate(&t, &AggregateSpec::new(["outcome"])).unwrap();
        assert_eq!(out.value(0, "outcome").unwrap(), Value::Text("post".into()));
        assert_eq!(out.value(1, "n_sim").unwrap(), Value::Int(2));
        assert_eq!(
            out.names(),
            ["outcome", "bias", "bias_lo", "bias_hi", "power", "n_sim", "n_error", "power_se", "power_lo", "power_hi"]
        );
    }

    #[test]
    fn missing_columns_and_bad_spec() {
        let f = frame(&[0.1], &[0.5], 0.0);
        assert!(matches!(aggregate(&f, &AggregateSpec::new(["nope"])), Err(Error::UnknownColumn(_))));
        let mut spec = AggregateSpec::new(["g"]);
        spec.pvalue = "p".into();
        assert!(aggregate(&f, &spec).is_err());
        assert!(aggregate(&f, &AggregateSpec { alpha: 1.0, ..AggregateSpec::new(["g"]) }).is_err());
        assert!(aggregate(&f, &AggregateSpec { z: 0.0, ..AggregateSpec::new(["g"]) }).is_err());
    }
}
