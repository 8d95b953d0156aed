mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use tidysim::linmodel::{fit_ols, SINGULARITY_THRESHOLD};
use tidysim::numerics::student_t_two_sided_p;

fn instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (1usize..=4)
        .prop_flat_map(|k| (Just(k), (k + 1)..=12))
        .prop_flat_map(|(k, n)| {
            (
                prop::collection::vec(prop::collection::vec(-3.0f64..3.0, k - 1), n),
                prop::collection::vec(-5.0f64..5.0, n),
            )
        })
        .prop_map(|(cols, y)| {
            let x = cols
                .into_iter()
                .map(|mut r| {
                    r.insert(0, 1.0);
                    r
                })
                .collect();
            (x, y)
        })
}

fn to_nalgebra(x: &[Vec<f64>], y: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let (n, k) = (x.len(), x[0].len());
    (
        DMatrix::from_fn(n, k, |i, j| x[i][j]),
        DVector::from_column_slice(y),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fit_matches_oracle((x, y) in instance()) {
        let oracle = common::ols(&x, &y);
        // the oracle's normal equations lose accuracy on ill-conditioned draws
        prop_assume!(oracle.min_eigenvalue > 1e-3);
        let (xm, yv) = to_nalgebra(&x, &y);
        let fit = fit_ols(&xm, &yv).unwrap();
        prop_assert!(!fit.singular);
        for j in 0..fit.coef.len() {
            prop_assert!((fit.coef[j] - oracle.coef[j]).abs() < 1e-8, "coef {} {} {}", j, fit.coef[j], oracle.coef[j]);
            prop_assert!((fit.stderr[j] - oracle.stderr[j]).abs() < 1e-8, "se {}", j);
            prop_assert!((fit.p_value[j] - oracle.p_value[j]).abs() < 1e-6, "p {} {} {}", j, fit.p_value[j], oracle.p_value[j]);
        }
        prop_assert!((fit.min_eigenvalue - oracle.min_eigenvalue).abs() < 1e-8 * (1.0 + oracle.min_eigenvalue));
    }

    #[test]
    fn t_tail_matches_integration(t in -12.0f64..12.0, df in 1u64..60) {
        let p = student_t_two_sided_p(t, df).unwrap();
        let q = common::t_two_sided_p(t, df as f64);
        prop_assert!((p - q).abs() < 1e-9, "t={} df={} {} vs {}", t, df, p, q);
    }

    #[test]
    fn p_values_in_unit_interval(t in prop::num::f64::NORMAL, df in 1u64..1_000_000) {
        let p = student_t_two_sided_p(t, df).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn collinear_columns_flagged((x, y) in instance(), scale in 0.5f64..2.0) {
        prop_assume!(x[0].len() >= 2 && x.len() > x[0].len() + 1);
        let x2: Vec<Vec<f64>> = x.iter().map(|r| { let mut r = r.clone(); let last = r[r.len() - 1]; r.push(last * scale); r }).collect();
        let (xm, yv) = to_nalgebra(&x2, &y);
        let fit = fit_ols(&xm, &yv).unwrap();
        prop_assert!(fit.singular);
        prop_assert!(fit.min_eigenvalue < SINGULARITY_THRESHOLD);
    }
}

#[test]
fn closed_form_tails() {
    // df = 1 is Cauchy: p = 1 − (2/π)·atan|t|
    for t in [0.3f64, 1.0, 4.0, 50.0] {
        let exact = 1.0 - 2.0 / std::f64::consts::PI * f64::atan(t);
        assert!((common::t_two_sided_p(t, 1.0) - exact).abs() < 1e-11);
        assert!((student_t_two_sided_p(t, 1).unwrap() - exact).abs() < 1e-13);
    }
    // df = 2: p = 1 − t/√(2 + t²)
    for t in [0.3f64, 1.0, 4.0] {
        let exact = 1.0 - t / (2.0 + t * t).sqrt();
        assert!((common::t_two_sided_p(t, 2.0) - exact).abs() < 1e-11);
    }
}

#[test]
fn t_two_and_ten_degrees() {
    let oracle = common::t_two_sided_p(2.0, 10.0);
    assert!((oracle - 0.07339).abs() < 5e-6, "{oracle}");
    assert!((student_t_two_sided_p(2.0, 10).unwrap() - oracle).abs() < 1e-10);
}
