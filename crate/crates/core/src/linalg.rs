//! Small dense kernels on column-major slices.
//!
//! Every reduction here runs in a fixed order so results are reproducible
//! bit for bit across runs and thread counts.

use ndarray::{Array2, ShapeBuilder};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let tail: f64 = chunks_a
        .remainder()
        .iter()
        .zip(chunks_b.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        acc[0] += ca[0] * cb[0];
        acc[1] += ca[1] * cb[1];
        acc[2] += ca[2] * cb[2];
        acc[3] += ca[3] * cb[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Scales `v` to unit norm. Returns `None` for a zero or non-finite vector.
pub fn normalized(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let n = norm(&v);
    if !(n > 0.0 && n.is_finite()) {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= n);
    Some(v)
}

/// Allocates a zeroed `rows x cols` matrix in column-major layout.
pub fn zeros_f(rows: usize, cols: usize) -> Array2<f64> {
    Array2::zeros((rows, cols).f())
}

/// Copies any 2-D array into column-major layout.
pub fn to_col_major(a: ndarray::ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = zeros_f(a.nrows(), a.ncols());
    out.assign(&a);
    out
}

pub fn is_col_major(a: &Array2<f64>) -> bool {
    a.t().is_standard_layout()
}

/// Column `j` of a column-major matrix as a contiguous slice.
#[inline]
pub fn col(a: &Array2<f64>, j: usize) -> &[f64] {
    let m = a.nrows();
    let data = a
        .as_slice_memory_order()
        .expect("column-major matrix must be contiguous");
    &data[j * m..(j + 1) * m]
}

#[inline]
pub fn col_mut(a: &mut Array2<f64>, j: usize) -> &mut [f64] {
    let m = a.nrows();
    let data = a
        .as_slice_memory_order_mut()
        .expect("column-major matrix must be contiguous");
    &mut data[j * m..(j + 1) * m]
}

/// Cholesky factor of a Gram matrix that grows one row/column at a time.
///
/// Holds the lower-triangular `L` with `L Lᵀ = G_S` for the current support.
#[derive(Debug, Clone)]
pub struct IncrementalCholesky {
    capacity: usize,
    len: usize,
    // row-major, capacity x capacity
    l: Vec<f64>,
}

impl IncrementalCholesky {
    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            capacity,
            len: 0,
            l: vec![0.0; capacity * capacity],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Appends a new column with cross terms `cross[j] = <d_j, d_new>` and
    /// squared norm `diag = <d_new, d_new>`.
    ///
    /// Returns `false` (leaving the factor untouched) when the new column is
    /// numerically in the span of the current ones: the squared distance to
    /// that span falls below `rel_tol * diag`.
    pub fn push(&mut self, cross: &[f64], diag: f64, rel_tol: f64) -> bool {
        let n = self.len;
        debug_assert_eq!(cross.len(), n);
        if n == self.capacity {
            self.grow();
        }
        let cap = self.capacity;
        let mut w = vec![0.0; n];
        for i in 0..n {
            let row = &self.l[i * cap..i * cap + i];
            let s = cross[i] - dot(row, &w[..i]);
            w[i] = s / self.l[i * cap + i];
        }
        let rest = diag - norm_sq(&w);
        // NaN fails the comparison as well
        if rest.partial_cmp(&(rel_tol * diag)) != Some(std::cmp::Ordering::Greater) || !rest.is_finite() {
            return false;
        }
        self.l[n * cap..n * cap + n].copy_from_slice(&w);
        self.l[n * cap + n] = rest.sqrt();
        self.len += 1;
        true
    }

    /// Solves `L Lᵀ x = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.len;
        let cap = self.capacity;
        debug_assert_eq!(rhs.len(), n);
        let mut y = vec![0.0; n];
        for i in 0..n {
            let row = &self.l[i * cap..i * cap + i];
            y[i] = (rhs[i] - dot(row, &y[..i])) / self.l[i * cap + i];
        }
        for i in (0..n).rev() {
            let s = y[i] - (i + 1..n).map(|j| self.l[j * cap + i] * y[j]).sum::<f64>();
            y[i] = s / self.l[i * cap + i];
        }
        y
    }

    fn grow(&mut self) {
        let old_cap = self.capacity;
        let cap = (old_cap * 2).max(4);
        let mut l = vec![0.0; cap * cap];
        for i in 0..self.len {
            l[i * cap..i * cap + i + 1].copy_from_slice(&self.l[i * old_cap..i * old_cap + i + 1]);
        }
        self.l = l;
        self.capacity = cap;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive_sum() {
        let a: Vec<f64> = (0..11).map(|i| i as f64 * 0.5 - 1.0).collect();
        let b: Vec<f64> = (0..11).map(|i| (i * i) as f64 / 7.0).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn normalized_rejects_zero() {
        assert!(normalized(vec![0.0; 3]).is_none());
        let v = normalized(vec![3.0, 4.0]).unwrap();
        assert_eq!(v, vec![0.6, 0.8]);
    }

    #[test]
    fn cholesky_solves_spd_system() {
        // G = [[4, 2, 0], [2, 5, 1], [0, 1, 3]]
        let g = [[4.0, 2.0, 0.0], [2.0, 5.0, 1.0], [0.0, 1.0, 3.0]];
        let mut chol = IncrementalCholesky::with_capacity(1);
        for (k, gk) in g.iter().enumerate() {
            let cross: Vec<f64> = (0..k).map(|j| g[j][k]).collect();
            assert!(chol.push(&cross, gk[k], 1e-12));
        }
        let x = chol.solve(&[1.0, 2.0, 3.0]);
        for i in 0..3 {
            let lhs: f64 = (0..3).map(|j| g[i][j] * x[j]).sum();
            assert!((lhs - [1.0, 2.0, 3.0][i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_dependent_column() {
        let mut chol = IncrementalCholesky::with_capacity(2);
        assert!(chol.push(&[], 1.0, 1e-10));
        // identical second column: cross = 1, diag = 1
        assert!(!chol.push(&[1.0], 1.0, 1e-10));
        assert_eq!(chol.len(), 1);
    }

    #[test]
    fn col_major_slices() {
        let mut a = zeros_f(2, 3);
        a[[1, 2]] = 5.0;
        assert!(is_col_major(&a));
        assert_eq!(col(&a, 2), &[0.0, 5.0]);
        col_mut(&mut a, 0)[0] = 1.0;
        assert_eq!(a[[0, 0]], 1.0);
    }
}
