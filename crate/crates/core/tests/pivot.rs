use proptest::prelude::*;
use tidysim::prepost::PrePostWideStudy;
use tidysim::results::{join_grid_long, pivot_long};
use tidysim::{expand_grid, run, Column, FactorSpec, GridSpec, RunConfig, Table, Value};

/// A wide table with columns `<a>_<b>_<value>` for the given levels.
fn wide(ids: &[u64], a: &[&str], b: &[&str], cells: &[f64]) -> Table {
    let mut t = Table::new().with_column("row_id", Column::UInt(ids.iter().copied().map(Some).collect())).unwrap();
    let mut k = 0;
    for lb in b {
        for la in a {
            for v in ["x", "y"] {
                let col = ids.iter().map(|_| {
                    k += 1;
                    Some(cells[k % cells.len()])
                });
                t.push_column(format!("{la}_{lb}_{v}"), Column::Real(col.collect())).unwrap();
            }
        }
    }
    t
}

proptest! {
    #[test]
    fn pivot_then_widen_is_identity(
        ids in prop::collection::btree_set(0u64..1000, 1..8),
        na in 1usize..4,
        nb in 1usize..3,
        cells in prop::collection::vec(-1e6f64..1e6, 1..30),
    ) {
        let ids: Vec<u64> = ids.into_iter().collect();
        let a_levels = ["p", "q", "r"];
        let b_levels = ["m", "n"];
        let w = wide(&ids, &a_levels[..na], &b_levels[..nb], &cells);
        let long = pivot_long(&w, &["x", "y"], &["a", "b"]).unwrap();
        let combos = (na * nb) as u64;
        prop_assert_eq!(long.num_rows(), ids.len() * combos as usize);
        for i in 0..long.num_rows() {
            let Value::UInt(wide_id) = long.value(i, "wide_row_id").unwrap() else { panic!() };
            let Value::UInt(row_id) = long.value(i, "row_id").unwrap() else { panic!() };
            prop_assert_eq!(row_id / combos, wide_id);
            let a = long.value(i, "a").unwrap();
            let b = long.value(i, "b").unwrap();
            let src = ids.iter().position(|&id| id == wide_id).unwrap();
            for v in ["x", "y"] {
                let col = format!("{}_{}_{v}", a.as_str().unwrap(), b.as_str().unwrap());
                prop_assert_eq!(long.value(i, v).unwrap(), w.value(src, &col).unwrap());
            }
        }
        // every wide cell appears exactly once
        prop_assert_eq!(long.num_rows() * 2, (w.num_columns() - 1) * ids.len());
        let mut seen: Vec<u64> = (0..long.num_rows())
            .map(|i| match long.value(i, "row_id").unwrap() { Value::UInt(v) => v, _ => unreachable!() })
            .collect();
        seen.sort_unstable();
        seen.dedup();
        prop_assert_eq!(seen.len(), long.num_rows());
    }
}

#[test]
fn malformed_column_names_are_reported() {
    let w = wide(&[0], &["p"], &["m"], &[1.0]).with_column("oops", Column::Real(vec![Some(0.0)])).unwrap();
    let err = pivot_long(&w, &["x", "y"], &["a", "b"]).unwrap_err();
    assert!(err.to_string().contains("oops"), "{err}");
    let missing = Table::new()
        .with_column("row_id", Column::UInt(vec![Some(0)]))
        .unwrap()
        .with_column("p_m_x", Column::Real(vec![Some(0.0)]))
        .unwrap();
    assert!(pivot_long(&missing, &["x", "y"], &["a", "b"]).unwrap_err().to_string().contains("`y`"));
}

#[test]
fn wide_prepost_agrees_with_long_prepost() {
    let factors = vec![
        FactorSpec::integer("sample_size", [6, 9]).unwrap(),
        FactorSpec::real("effect_size", [0.0, 0.7]).unwrap(),
    ];
    let g = expand_grid(&GridSpec::new(factors, 3, 5)).unwrap();
    let res = run(&g, &PrePostWideStudy::new(), &RunConfig::default()).unwrap();
    let long = pivot_long(&res.to_table(), &["estimate", "pvalue", "singular"], &["outcome", "correction"]).unwrap();
    let frame = join_grid_long(&g, &long).unwrap();
    assert_eq!(frame.num_rows(), g.len() * 4);
    for col in ["sample_size", "effect_size", "iteration", "seed", "outcome", "correction", "estimate", "status"] {
        assert!(frame.column(col).is_some(), "{col}");
    }
    // change and post estimates differ without correction and coincide with it
    for i in (0..frame.num_rows()).step_by(4) {
        let e: Vec<f64> = (0..4).map(|k| frame.value(i + k, "estimate").unwrap().as_f64().unwrap()).collect();
        assert!((e[0] - e[1]).abs() > 1e-9);
        assert!((e[2] - e[3]).abs() < 1e-9);
    }
}
