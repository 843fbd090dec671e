//! Reference implementations used as test oracles. Deliberately naive: dense
//! normal equations, textbook sandwich formulas, direct evaluation. Nothing
//! here shares code with the crates under test.

use statrs::distribution::{ContinuousCDF, Normal};

/// Gauss-Jordan inverse with partial pivoting.
pub fn invert(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        let p = a[col][col];
        assert!(p.abs() > 1e-300, "singular matrix");
        for v in &mut a[col] {
            *v /= p;
        }
        for row in 0..n {
            if row != col {
                let f = a[row][col];
                if f != 0.0 {
                    for j in 0..2 * n {
                        a[row][j] -= f * a[col][j];
                    }
                }
            }
        }
    }
    a.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, m, p) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; p]; n];
    for i in 0..n {
        for k in 0..m {
            for j in 0..p {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

/// `X'X` from row-major data.
pub fn gram(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = x[0].len();
    let mut g = vec![vec![0.0; k]; k];
    for row in x {
        for a in 0..k {
            for b in 0..k {
                g[a][b] += row[a] * row[b];
            }
        }
    }
    g
}

/// OLS by solving `(X'X) b = X'y` with an explicit inverse.
pub fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let k = x[0].len();
    let mut xty = vec![0.0; k];
    for (row, yi) in x.iter().zip(y) {
        for j in 0..k {
            xty[j] += row[j] * yi;
        }
    }
    let inv = invert(&gram(x));
    (0..k).map(|i| (0..k).map(|j| inv[i][j] * xty[j]).sum()).collect()
}

pub fn residuals(x: &[Vec<f64>], y: &[f64], beta: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(y)
        .map(|(row, yi)| yi - row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

/// Heteroskedasticity-robust sandwich with the `N/(N-k)` small-sample factor.
pub fn hc1_covariance(x: &[Vec<f64>], resid: &[f64]) -> Vec<Vec<f64>> {
    let n = x.len();
    let k = x[0].len();
    let bread = invert(&gram(x));
    let mut meat = vec![vec![0.0; k]; k];
    for (row, e) in x.iter().zip(resid) {
        for a in 0..k {
            for b in 0..k {
                meat[a][b] += row[a] * row[b] * e * e;
            }
        }
    }
    let scale = n as f64 / (n - k) as f64;
    mat_mul(&mat_mul(&bread, &meat), &bread)
        .into_iter()
        .map(|r| r.into_iter().map(|v| v * scale).collect())
        .collect()
}

/// Cluster sandwich written out per cluster label, with the
/// `G/(G-1) (N-1)/(N-k)` factor.
pub fn cluster_covariance(x: &[Vec<f64>], resid: &[f64], labels: &[u64]) -> Vec<Vec<f64>> {
    let n = x.len();
    let k = x[0].len();
    let mut uniq = labels.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    let g = uniq.len();
    let mut meat = vec![vec![0.0; k]; k];
    for l in &uniq {
        let mut s = vec![0.0; k];
        for i in (0..n).filter(|i| labels[*i] == *l) {
            for j in 0..k {
                s[j] += x[i][j] * resid[i];
            }
        }
        for a in 0..k {
            for b in 0..k {
                meat[a][b] += s[a] * s[b];
            }
        }
    }
    let bread = invert(&gram(x));
    let scale = g as f64 / (g - 1) as f64 * (n - 1) as f64 / (n - k) as f64;
    mat_mul(&mat_mul(&bread, &meat), &bread)
        .into_iter()
        .map(|r| r.into_iter().map(|v| v * scale).collect())
        .collect()
}

/// Two-pass simple regression of `y` on `x`: `(slope, intercept, r2)`.
pub fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sst: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    (slope, intercept, 1.0 - sse / sst)
}

/// `1e4 * (r/100) * (2/3) * (v/100) * sqrt(2 tau / pi)`, term by term.
pub fn gbm_term_direct(rate_pct: f64, vol_pct: f64, tau: f64) -> f64 {
    let r = rate_pct / 100.0;
    let v = vol_pct / 100.0;
    10_000.0 * r * (2.0 / 3.0) * v * (2.0 * tau / std::f64::consts::PI).sqrt()
}

/// `E[sup_{s<=t} (-W_s)^+]` for Brownian motion with volatility `sigma`.
pub fn reflected_mean(sigma: f64, t: f64) -> f64 {
    sigma * (2.0 * t / std::f64::consts::PI).sqrt()
}

/// Leading-order low bias of a running maximum of Brownian motion monitored
/// every `dt`: `-zeta(1/2) / sqrt(2 pi) * sigma * sqrt(dt)`.
pub fn discrete_monitoring_shift(sigma: f64, dt: f64) -> f64 {
    const ZETA_HALF: f64 = -1.460_354_508_809_586_8;
    -ZETA_HALF / (2.0 * std::f64::consts::PI).sqrt() * sigma * dt.sqrt()
}

/// Composite trapezoid rule with `n` intervals.
pub fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h)).sum();
    h * (0.5 * f(a) + inner + 0.5 * f(b))
}

/// Discount factor of a flat annually compounded rate at integer maturity.
pub fn annual_df(rate: f64, years: u32) -> f64 {
    (1.0 + rate).powi(-(years as i32))
}

/// Probability that a normal variate is strictly positive.
pub fn normal_positive_share(mean: f64, sd: f64) -> f64 {
    1.0 - Normal::new(mean, sd).unwrap().cdf(0.0)
}

/// Median by full sort.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
