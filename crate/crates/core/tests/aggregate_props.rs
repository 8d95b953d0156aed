use proptest::prelude::*;
use tidysim::aggregate::{aggregate, aggregate_rows, quantile, AggregateSpec};
use tidysim::{Column, Table, Value};

/// (group, estimate, pvalue, status ok) per row; truth fixed at 0.5.
type Rows = Vec<(i64, Option<f64>, f64, bool)>;

fn arb_rows() -> impl Strategy<Value = Rows> {
    prop::collection::vec(
        (
            0i64..4,
            prop::option::weighted(0.9, -3.0f64..3.0),
            0.0f64..1.0,
            prop::bool::weighted(0.9),
        ),
        1..120,
    )
}

fn frame(rows: &Rows) -> Table {
    Table::from_columns(vec![
        ("g".into(), Column::Int(rows.iter().map(|r| Some(r.0)).collect())),
        ("h".into(), Column::Int(rows.iter().map(|r| Some(r.0 % 2)).collect())),
        ("effect_size".into(), Column::Real(vec![Some(0.5); rows.len()])),
        ("estimate".into(), Column::Real(rows.iter().map(|r| r.1).collect())),
        ("pvalue".into(), Column::Real(rows.iter().map(|r| Some(r.2)).collect())),
        (
            "status".into(),
            Column::Text(rows.iter().map(|r| Some(if r.3 { "ok" } else { "error: x" }.into())).collect()),
        ),
    ])
    .unwrap()
}

fn same(a: &Table, b: &Table) -> bool {
    a.names() == b.names()
        && a.num_rows() == b.num_rows()
        && a.names().iter().all(|n| {
            (0..a.num_rows()).all(|i| match (a.value(i, n).unwrap(), b.value(i, n).unwrap()) {
                (Value::Real(x), Value::Real(y)) => x.to_bits() == y.to_bits(),
                (x, y) => x == y,
            })
        })
}

proptest! {
    #[test]
    fn row_order_does_not_matter(rows in arb_rows(), key in any::<u64>()) {
        let f = frame(&rows);
        let mut perm: Vec<usize> = (0..rows.len()).collect();
        perm.sort_by_key(|&i| (i as u64).wrapping_mul(key | 1).rotate_left(17));
        let shuffled = f.take(&perm.iter().map(|&i| Some(i)).collect::<Vec<_>>());
        let spec = AggregateSpec::new(["g"]);
        prop_assert!(same(&aggregate(&f, &spec).unwrap(), &aggregate(&shuffled, &spec).unwrap()));
    }

    #[test]
    fn counts_cover_every_row(rows in arb_rows()) {
        let (_, agg) = aggregate_rows(&frame(&rows), &AggregateSpec::new(["g"])).unwrap();
        for a in &agg {
            let Value::Int(g) = a.key[0] else { unreachable!() };
            let members: Vec<_> = rows.iter().filter(|r| r.0 == g).collect();
            prop_assert_eq!((a.n_sim + a.n_error) as usize, members.len());
            prop_assert_eq!(a.n_sim as usize, members.iter().filter(|r| r.3 && r.1.is_some()).count());
        }
        let keys: Vec<&Value> = agg.iter().map(|a| &a.key[0]).collect();
        prop_assert!(keys.windows(2).all(|w| w[0].total_cmp(w[1]).is_lt()));
    }

    #[test]
    fn coarse_power_is_the_weighted_fine_power(rows in arb_rows()) {
        let f = frame(&rows);
        let (_, fine) = aggregate_rows(&f, &AggregateSpec::new(["h", "g"])).unwrap();
        let (_, coarse) = aggregate_rows(&f, &AggregateSpec::new(["h"])).unwrap();
        for c in &coarse {
            let parts: Vec<_> = fine.iter().filter(|x| x.key[0] == c.key[0] && x.n_sim > 0).collect();
            let n: u64 = parts.iter().map(|p| p.n_sim).sum();
            prop_assert_eq!(n, c.n_sim);
            if n > 0 {
                let weighted: f64 = parts.iter().map(|p| p.power.unwrap() * p.n_sim as f64).sum::<f64>() / n as f64;
                prop_assert!((weighted - c.power.unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn intervals_are_ordered_and_clipped(rows in arb_rows(), z in 0.5f64..4.0) {
        let spec = AggregateSpec { z, ..AggregateSpec::new(["g"]) };
        let (_, agg) = aggregate_rows(&frame(&rows), &spec).unwrap();
        for a in agg.iter().filter(|a| a.n_sim > 0) {
            let (p, se, lo, hi) = (a.power.unwrap(), a.power_se.unwrap(), a.power_lo.unwrap(), a.power_hi.unwrap());
            prop_assert!((se - (p * (1.0 - p) / a.n_sim as f64).sqrt()).abs() < 1e-15);
            prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
            prop_assert!((lo - (p - z * se).max(0.0)).abs() < 1e-15);
            prop_assert!(a.bias_lo.unwrap() <= a.bias.unwrap() + 1e-12 || a.n_sim < 3);
            prop_assert!(a.bias_lo.unwrap() <= a.bias_hi.unwrap());
        }
    }

    #[test]
    fn power_grows_with_alpha(rows in arb_rows(), a1 in 0.01f64..0.5, step in 0.0f64..0.4) {
        let f = frame(&rows);
        let lo = aggregate_rows(&f, &AggregateSpec { alpha: a1, ..AggregateSpec::new(["g"]) }).unwrap().1;
        let hi = aggregate_rows(&f, &AggregateSpec { alpha: a1 + step, ..AggregateSpec::new(["g"]) }).unwrap().1;
        for (x, y) in lo.iter().zip(&hi) {
            prop_assert!(x.power.unwrap_or(0.0) <= y.power.unwrap_or(0.0));
        }
    }

    #[test]
    fn quantile_hits_order_statistics(mut xs in prop::collection::vec(-10.0f64..10.0, 2..50), k in 0usize..50) {
        xs.sort_by(f64::total_cmp);
        let k = k % xs.len();
        let q = k as f64 / (xs.len() - 1) as f64;
        prop_assert!((quantile(&xs, q).unwrap() - xs[k]).abs() < 1e-12);
        // between neighbouring order statistics the rule interpolates linearly
        if k + 1 < xs.len() {
            let mid = (k as f64 + 0.25) / (xs.len() - 1) as f64;
            prop_assert!((quantile(&xs, mid).unwrap() - (0.75 * xs[k] + 0.25 * xs[k + 1])).abs() < 1e-9);
        }
    }
}

#[test]
fn difference_of_two_powers_has_root_two_se() {
    // two independent cells with the same power and size
    let rows: Rows = (0..200).map(|i| (i % 2, Some(0.0), if i % 8 < 2 { 0.01 } else { 0.5 }, true)).collect();
    let (_, agg) = aggregate_rows(&frame(&rows), &AggregateSpec::new(["g"])).unwrap();
    let (a, b) = (&agg[0], &agg[1]);
    assert_eq!(a.power, b.power);
    let se_diff = (a.power_se.unwrap().powi(2) + b.power_se.unwrap().powi(2)).sqrt();
    assert!((se_diff - 2f64.sqrt() * a.power_se.unwrap()).abs() < 1e-15);
}

#[test]
fn nan_estimates_count_as_errors() {
    let mut f = frame(&vec![(0, Some(1.0), 0.01, true); 3]);
    f = f.with_column("estimate2", Column::Real(vec![Some(f64::NAN), Some(1.0), Some(1.0)])).unwrap();
    let spec = AggregateSpec { estimate: "estimate2".into(), ..AggregateSpec::new(["g"]) };
    let (_, agg) = aggregate_rows(&f, &spec).unwrap();
    assert_eq!((agg[0].n_sim, agg[0].n_error), (2, 1));
}

#[test]
fn output_columns_in_order() {
    let agg = aggregate(&frame(&vec![(1, Some(0.7), 0.01, true); 4]), &AggregateSpec::new(["g", "h"])).unwrap();
    let names: Vec<&str> = agg.names().iter().map(String::as_str).collect();
    assert_eq!(
        names,
        ["g", "h", "bias", "bias_lo", "bias_hi", "power", "n_sim", "n_error", "power_se", "power_lo", "power_hi"]
    );
    assert!((agg.value(0, "bias").unwrap().as_f64().unwrap() - 0.2).abs() < 1e-15);
    assert_eq!(agg.value(0, "n_sim").unwrap(), Value::Int(4));
}

#[test]
fn bad_specs_rejected() {
    let f = frame(&vec![(1, Some(0.7), 0.01, true)]);
    assert!(aggregate(&f, &AggregateSpec { alpha: 1.5, ..AggregateSpec::new(["g"]) }).is_err());
    assert!(aggregate(&f, &AggregateSpec::new(["nope"])).unwrap_err().to_string().contains("nope"));
}
