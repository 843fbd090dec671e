//! Householder least squares for tall, narrow design matrices.

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    nrows: usize,
    cols: Vec<Vec<f64>>,
}

impl DesignMatrix {
    pub fn from_columns(cols: Vec<Vec<f64>>) -> Self {
        let nrows = cols.first().map_or(0, Vec::len);
        assert!(cols.iter().all(|c| c.len() == nrows), "ragged design matrix");
        Self { nrows, cols }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let k = rows.first().map_or(0, Vec::len);
        let cols = (0..k).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Self::from_columns(cols)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cols[j][i]
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.cols[j]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.cols.iter().map(|c| c[i]).collect()
    }

    pub fn mul_vec(&self, beta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        for (col, b) in self.cols.iter().zip(beta) {
            for (o, x) in out.iter_mut().zip(col) {
                *o += b * x;
            }
        }
        out
    }

    /// `X' v`.
    pub fn t_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.cols
            .iter()
            .map(|c| c.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub beta: Vec<f64>,
    /// `(X'X)^-1`, the bread of the sandwich.
    pub xtx_inv: Vec<Vec<f64>>,
}

/// Index of the first column that is (numerically) a combination of earlier ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankDeficient(pub usize);

const RANK_TOL: f64 = 1e-10;

/// Solves `min ||y - X b||` by Householder QR without pivoting, so a
/// collinear column is reported at its own position.
pub fn least_squares(x: &DesignMatrix, y: &[f64]) -> Result<LeastSquares, RankDeficient> {
    let n = x.nrows;
    let k = x.ncols();
    assert_eq!(y.len(), n);
    if n < k {
        return Err(RankDeficient(n));
    }
    let norms: Vec<f64> = x.cols.iter().map(|c| norm(c)).collect();
    let mut a = x.cols.clone();
    let mut qty = y.to_vec();

    for j in 0..k {
        let alpha = norm(&a[j][j..]);
        if !(alpha > RANK_TOL * norms[j]) || norms[j] == 0.0 {
            return Err(RankDeficient(j));
        }
        let sign = if a[j][j] >= 0.0 { 1.0 } else { -1.0 };
        // v = a_j[j..] + sign * alpha * e_1, stored in place.
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] += sign * alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        let reflect = |col: &mut [f64]| {
            let dot: f64 = v.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
            let s = 2.0 * dot / vnorm2;
            for (c, vi) in col.iter_mut().zip(&v) {
                *c -= s * vi;
            }
        };
        for col in a.iter_mut().skip(j) {
            reflect(&mut col[j..]);
        }
        reflect(&mut qty[j..]);
        if !(a[j][j].abs() > RANK_TOL * norms[j]) {
            return Err(RankDeficient(j));
        }
    }

    // R is a[j][i] for i <= j.
    let r = |i: usize, j: usize| a[j][i];
    let mut beta = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|j| r(i, j) * beta[j]).sum();
        beta[i] = (qty[i] - s) / r(i, i);
    }

    // R^-1 by back substitution, then (X'X)^-1 = R^-1 R^-T.
    let mut rinv = vec![vec![0.0; k]; k];
    for c in 0..k {
        for i in (0..=c).rev() {
            let rhs = if i == c { 1.0 } else { 0.0 };
            let s: f64 = (i + 1..=c).map(|j| r(i, j) * rinv[j][c]).sum();
            rinv[i][c] = (rhs - s) / r(i, i);
        }
    }
    let mut xtx_inv = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            xtx_inv[i][j] = (i.max(j)..k).map(|m| rinv[i][m] * rinv[j][m]).sum();
        }
    }
    Ok(LeastSquares { beta, xtx_inv })
}

fn norm(v: &[f64]) -> f64 {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * v.iter().map(|x| (x / scale).powi(2)).sum::<f64>().sqrt()
}

/// `A B C` for square matrices.
pub(crate) fn sandwich(bread: &[Vec<f64>], meat: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = bread.len();
    let mut tmp = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            tmp[i][j] = (0..k).map(|m| bread[i][m] * meat[m][j]).sum();
        }
    }
    let mut out = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            out[i][j] = (0..k).map(|m| tmp[i][m] * bread[m][j]).sum();
        }
    }
    out
}
