//! Dense row-major matrices and the handful of kernels the model needs.

/// Row-major 2D array of f64. Vectors are stored as 1 x n.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn vector(n: usize) -> Self {
        Self::zeros(1, n)
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c));
        Self { rows: r, cols: c, data: rows.into_iter().flatten().collect() }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    /// self += other (elementwise), shapes must match.
    pub fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.data.iter()
    }
}

/// y[t] = x[t] . w[o] + b[o]: x is T x In, w is Out x In (row per output),
/// bias optional, result T x Out.
pub fn linear(x: &Mat, w: &Mat, b: Option<&Mat>) -> Mat {
    debug_assert_eq!(x.cols, w.cols);
    let mut y = Mat::zeros(x.rows, w.rows);
    for t in 0..x.rows {
        let xt = x.row(t);
        let yt = y.row_mut(t);
        for o in 0..w.rows {
            let wo = w.row(o);
            let mut acc = 0.0;
            for i in 0..w.cols {
                acc += xt[i] * wo[i];
            }
            yt[o] = acc;
        }
        if let Some(b) = b {
            for (yo, bo) in yt.iter_mut().zip(b.row(0)) {
                *yo += bo;
            }
        }
    }
    y
}

/// Accumulate gradients for a `linear` call: given dy (T x Out), x (T x In):
///   dw[o,i] += sum_t dy[t,o] * x[t,i];  db[o] += sum_t dy[t,o];
///   dx[t,i] += sum_o dy[t,o] * w[o,i].
pub fn linear_backward(
    dy: &Mat,
    x: &Mat,
    w: &Mat,
    dw: &mut Mat,
    db: Option<&mut Mat>,
    dx: &mut Mat,
) {
    for t in 0..x.rows {
        let dyt = dy.row(t);
        let xt = x.row(t);
        for o in 0..w.rows {
            let g = dyt[o];
            if g == 0.0 {
                continue;
            }
            let dwo = dw.row_mut(o);
            for i in 0..w.cols {
                dwo[i] += g * xt[i];
            }
        }
    }
    if let Some(db) = db {
        let dbr = db.row_mut(0);
        for t in 0..dy.rows {
            for (o, g) in dy.row(t).iter().enumerate() {
                dbr[o] += g;
            }
        }
    }
    for t in 0..x.rows {
        let dyt = dy.row(t);
        let dxt = dx.row_mut(t);
        for o in 0..w.rows {
            let g = dyt[o];
            if g == 0.0 {
                continue;
            }
            let wo = w.row(o);
            for i in 0..w.cols {
                dxt[i] += g * wo[i];
            }
        }
    }
}

/// Numerically stable softmax over a slice, in place.
pub fn softmax_inplace(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

/// Log-softmax of one row, returned as a new vector.
pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = row.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
    row.iter().map(|x| x - log_sum).collect()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// SiLU (swish) activation: x * sigmoid(x).
#[inline]
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

/// Derivative of SiLU with respect to its input.
#[inline]
pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_matches_manual() {
        let x = Mat::from_rows(vec![vec![1.0, 2.0], vec![3.0, -1.0]]);
        let w = Mat::from_rows(vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![-1.0, 2.0]]);
        let mut b = Mat::vector(3);
        b.row_mut(0).copy_from_slice(&[0.1, 0.2, 0.3]);
        let y = linear(&x, &w, Some(&b));
        assert_eq!(y.rows, 2);
        assert_eq!(y.cols, 3);
        assert!((y.at(0, 0) - 1.1).abs() < 1e-12);
        assert!((y.at(0, 1) - 1.7).abs() < 1e-12);
        assert!((y.at(1, 2) - (-3.0 - 2.0 + 0.3)).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut row = vec![0.3, -2.0, 5.0, 0.0];
        softmax_inplace(&mut row);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(row.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn log_softmax_consistent_with_softmax() {
        let row = vec![1.0, 2.0, 3.0];
        let ls = log_softmax(&row);
        let mut sm = row.clone();
        softmax_inplace(&mut sm);
        for (l, p) in ls.iter().zip(&sm) {
            assert!((l.exp() - p).abs() < 1e-12);
        }
    }

    #[test]
    fn silu_grad_matches_finite_difference() {
        for &x in &[-3.0, -0.5, 0.0, 0.7, 2.5] {
            let h = 1e-6;
            let num = (silu(x + h) - silu(x - h)) / (2.0 * h);
            assert!((silu_grad(x) - num).abs() < 1e-8, "x={x}");
        }
    }
}
