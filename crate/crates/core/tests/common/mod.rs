//! Reference implementations used as test oracles. They share no numerical
//! code with the library: least squares goes through a Jacobi eigensolver on
//! XᵀX, and p-values integrate the t density directly.

#![allow(dead_code, clippy::too_many_arguments, clippy::needless_range_loop)]

use std::f64::consts::PI;

/// Lanczos approximation (g = 7, 9 terms) of ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let mut a = C[0];
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, eps: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, a, b, fa, fm, fb, whole, eps, 50)
}

/// Two-sided Student t p-value, 2·∫_{|t|}^∞ density, via the substitution
/// x = |t| + u/(1−u) on u ∈ [0, 1].
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    let c = (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp() / (df * PI).sqrt();
    let t = t.abs();
    let f = move |u: f64| {
        if u >= 1.0 {
            // the transformed integrand tends to c·df^((df+1)/2)·(1−u)^(df−1)
            return if df == 1.0 { c } else { 0.0 };
        }
        let x = t + u / (1.0 - u);
        c * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0) / ((1.0 - u) * (1.0 - u))
    };
    2.0 * integrate(&f, 0.0, 1.0, 1e-14)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and column eigenvectors (row-major `v[i][j]`).
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut a: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

pub struct OracleFit {
    pub coef: Vec<f64>,
    pub stderr: Vec<f64>,
    pub p_value: Vec<f64>,
    pub min_eigenvalue: f64,
}

/// Least squares through the pseudo-inverse of XᵀX. `x` is row-major n×k.
pub fn ols(x: &[Vec<f64>], y: &[f64]) -> OracleFit {
    let (n, k) = (x.len(), x[0].len());
    let xtx: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| (0..n).map(|r| x[r][i] * x[r][j]).sum()).collect())
        .collect();
    let xty: Vec<f64> = (0..k).map(|i| (0..n).map(|r| x[r][i] * y[r]).sum()).collect();
    let (lambda, v) = jacobi_eigen(&xtx);
    let lmax = lambda.iter().copied().fold(0.0, f64::max);
    let tol = lmax * 1e-12;
    let pinv: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    (0..k)
                        .filter(|&m| lambda[m] > tol)
                        .map(|m| v[i][m] * v[j][m] / lambda[m])
                        .sum()
                })
                .collect()
        })
        .collect();
    let coef: Vec<f64> = (0..k).map(|i| (0..k).map(|j| pinv[i][j] * xty[j]).sum()).collect();
    let rss: f64 = (0..n)
        .map(|r| {
            let fit: f64 = (0..k).map(|j| x[r][j] * coef[j]).sum();
            (y[r] - fit).powi(2)
        })
        .sum();
    let df = (n - k) as f64;
    let sigma2 = rss / df;
    let stderr: Vec<f64> = (0..k).map(|i| (sigma2 * pinv[i][i]).sqrt()).collect();
    let p_value = coef.iter().zip(&stderr).map(|(b, se)| t_two_sided_p(b / se, df)).collect();
    OracleFit {
        coef,
        stderr,
        p_value,
        min_eigenvalue: lambda.iter().copied().fold(f64::INFINITY, f64::min).max(0.0),
    }
}

/// Nested-loop enumeration of a full factorial design: the first factor is
/// the innermost loop and the iteration the outermost. Returns
/// `(level indices, iteration)` per row.
pub fn nested_loop_rows(level_counts: &[usize], iterations: u64) -> Vec<(Vec<u32>, u64)> {
    fn recurse(counts: &[usize], prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        // counts are given last factor first so the first factor ends up innermost
        match counts.split_first() {
            None => out.push(prefix.iter().rev().copied().collect()),
            Some((&c, rest)) => {
                for l in 0..c as u32 {
                    prefix.push(l);
                    recurse(rest, prefix, out);
                    prefix.pop();
                }
            }
        }
    }
    let reversed: Vec<usize> = level_counts.iter().rev().copied().collect();
    let mut cells = Vec::new();
    recurse(&reversed, &mut Vec::new(), &mut cells);
    let mut rows = Vec::new();
    for it in 1..=iterations {
        for c in &cells {
            rows.push((c.clone(), it));
        }
    }
    rows
}
