use nalgebra::{DMatrix, DVector};

/// Householder QR of an `n x k` matrix with full orthogonal factor.
/// Columns are taken in order; a column whose residual norm after projection
/// falls below `tol * (1 + norm)` is treated as dependent and skipped.
pub struct ColumnQr {
    /// Full `n x n` orthogonal factor; the first `rank` columns span the
    /// accepted columns, the rest span their orthogonal complement.
    pub q: DMatrix<f64>,
    /// `rank x rank` upper triangle for the accepted columns.
    pub r: DMatrix<f64>,
    /// Indices of accepted columns, in order.
    pub independent: Vec<usize>,
}

impl ColumnQr {
    pub fn rank(&self) -> usize {
        self.independent.len()
    }

    pub fn null_space(&self) -> DMatrix<f64> {
        let n = self.q.nrows();
        self.q.columns(self.rank(), n - self.rank()).into_owned()
    }

    pub fn range(&self) -> DMatrix<f64> {
        self.q.columns(0, self.rank()).into_owned()
    }

    /// Solves `R y = b` for the accepted columns.
    pub fn solve_upper(&self, b: &DVector<f64>) -> DVector<f64> {
        let k = self.rank();
        let mut y = DVector::zeros(k);
        for i in (0..k).rev() {
            let mut s = b[i];
            for j in i + 1..k {
                s -= self.r[(i, j)] * y[j];
            }
            y[i] = s / self.r[(i, i)];
        }
        y
    }

    /// Solves `R^T y = b`.
    pub fn solve_upper_transpose(&self, b: &DVector<f64>) -> DVector<f64> {
        let k = self.rank();
        let mut y = DVector::zeros(k);
        for i in 0..k {
            let mut s = b[i];
            for j in 0..i {
                s -= self.r[(j, i)] * y[j];
            }
            y[i] = s / self.r[(i, i)];
        }
        y
    }
}

pub fn column_qr(a: &DMatrix<f64>, tol: f64) -> ColumnQr {
    let n = a.nrows();
    let k = a.ncols();
    // Reflectors are accumulated into qt (= Q^T) applied to the identity.
    let mut work = a.clone();
    let mut qt = DMatrix::<f64>::identity(n, n);
    let mut independent = Vec::new();
    let mut rank = 0;
    let mut v = DVector::<f64>::zeros(n);
    for j in 0..k {
        if rank == n {
            break;
        }
        let col_norm = a.column(j).norm();
        let tail_norm = work.view((rank, j), (n - rank, 1)).norm();
        if tail_norm <= tol * (1.0 + col_norm) {
            continue;
        }
        let x0 = work[(rank, j)];
        let alpha = if x0 >= 0.0 { -tail_norm } else { tail_norm };
        v.fill(0.0);
        for i in rank..n {
            v[i] = work[(i, j)];
        }
        v[rank] -= alpha;
        let vnorm2 = v.rows(rank, n - rank).norm_squared();
        if vnorm2 > 0.0 {
            apply_reflector(&mut work, &v, rank, vnorm2, j);
            apply_reflector(&mut qt, &v, rank, vnorm2, 0);
        }
        work[(rank, j)] = alpha;
        for i in rank + 1..n {
            work[(i, j)] = 0.0;
        }
        independent.push(j);
        rank += 1;
    }
    let mut r = DMatrix::zeros(rank, rank);
    for (c, &j) in independent.iter().enumerate() {
        for i in 0..=c {
            r[(i, c)] = work[(i, j)];
        }
    }
    ColumnQr { q: qt.transpose(), r, independent }
}

fn apply_reflector(m: &mut DMatrix<f64>, v: &DVector<f64>, start: usize, vnorm2: f64, first_col: usize) {
    let n = m.nrows();
    for c in first_col..m.ncols() {
        let mut dot = 0.0;
        for i in start..n {
            dot += v[i] * m[(i, c)];
        }
        if dot == 0.0 {
            continue;
        }
        let f = 2.0 * dot / vnorm2;
        for i in start..n {
            m[(i, c)] -= f * v[i];
        }
    }
}
