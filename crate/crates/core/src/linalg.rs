//! Dense row-major matrices and the handful of vector kernels the solvers need.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Dense real matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major entries; all entries must be finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::domain(format!(
                "matrix must have at least one row and one column, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "matrix entries",
                expected: rows * cols,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "matrix row length",
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0);
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.get(i, j);
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    /// `A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.mul_vec_into(x, &mut out);
        out
    }

    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o = dot(row, x);
        }
    }

    /// `Aᵀ v`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        self.tr_mul_vec_into(v, &mut out);
        out
    }

    pub fn tr_mul_vec_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.fill(0.0);
        for (&vi, row) in v.iter().zip(self.data.chunks_exact(self.cols)) {
            if vi != 0.0 {
                axpy(vi, row, out);
            }
        }
    }

    /// `AᵀA` (cols × cols).
    pub fn gram(&self) -> DenseMatrix {
        let n = self.cols;
        let mut g = vec![0.0; n * n];
        for row in self.data.chunks_exact(n) {
            for (i, &ri) in row.iter().enumerate() {
                if ri == 0.0 {
                    continue;
                }
                let gi = &mut g[i * n..i * n + n];
                for j in i..n {
                    gi[j] += ri * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                g[i * n + j] = g[j * n + i];
            }
        }
        DenseMatrix {
            rows: n,
            cols: n,
            data: g,
        }
    }

    /// `AAᵀ` (rows × rows).
    pub fn outer_gram(&self) -> DenseMatrix {
        let m = self.rows;
        let mut g = vec![0.0; m * m];
        for i in 0..m {
            for j in i..m {
                let v = dot(self.row(i), self.row(j));
                g[i * m + j] = v;
                g[j * m + i] = v;
            }
        }
        DenseMatrix {
            rows: m,
            cols: m,
            data: g,
        }
    }

    /// Rows listed in `indices`, in order, repeated where indices repeat.
    pub fn select_rows(&self, indices: &[usize]) -> Result<DenseMatrix> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::domain(format!(
                    "row index {i} out of range for {} rows",
                    self.rows
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        DenseMatrix::new(indices.len(), self.cols, data)
    }

    pub fn select_columns(&self, indices: &[usize]) -> Result<DenseMatrix> {
        if let Some(&j) = indices.iter().find(|&&j| j >= self.cols) {
            return Err(Error::domain(format!(
                "column index {j} out of range for {} columns",
                self.cols
            )));
        }
        let mut data = Vec::with_capacity(indices.len() * self.rows);
        for i in 0..self.rows {
            let row = self.row(i);
            data.extend(indices.iter().map(|&j| row[j]));
        }
        DenseMatrix::new(self.rows, indices.len(), data)
    }

    pub fn column_norms(&self) -> Vec<f64> {
        let mut sq = vec![0.0; self.cols];
        for row in self.data.chunks_exact(self.cols) {
            for (s, &v) in sq.iter_mut().zip(row) {
                *s += v * v;
            }
        }
        sq.into_iter().map(f64::sqrt).collect()
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<f64>) -> Result<Self> {
        let data = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)]))
            .collect();
        Self::new(m.nrows(), m.ncols(), data)
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Rescales every column to unit Euclidean norm.
pub fn normalize_columns(a: &DenseMatrix) -> Result<DenseMatrix> {
    let norms = a.column_norms();
    if let Some(j) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::ZeroColumn(j));
    }
    let mut out = a.clone();
    let cols = out.cols;
    for row in out.data_mut().chunks_exact_mut(cols) {
        for (v, &n) in row.iter_mut().zip(&norms) {
            *v /= n;
        }
    }
    Ok(out)
}

/// `m × n` matrix of i.i.d. standard normal entries, filled row by row.
pub fn gaussian_matrix(m: usize, n: usize, stream: &RngStream) -> DenseMatrix {
    let mut rng = stream.rng();
    let data = (0..m * n)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    DenseMatrix {
        rows: m,
        cols: n,
        data,
    }
}

/// `n` i.i.d. standard normal draws.
pub fn gaussian_vector(n: usize, stream: &RngStream) -> Vec<f64> {
    let mut rng = stream.rng();
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
    /// `Lᵀ` row-major, so back substitution reads rows too.
    lt: Vec<f64>,
}

impl Cholesky {
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        if a.rows != a.cols {
            return Err(Error::DimensionMismatch {
                context: "cholesky (square)",
                expected: a.rows,
                found: a.cols,
            });
        }
        let n = a.rows;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let lj = &l[j * n..j * n + j];
            let d = a.get(j, j) - dot(lj, lj);
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::domain(format!(
                    "matrix is not positive definite (pivot {j} = {d:e})"
                )));
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in j + 1..n {
                let (head, tail) = l.split_at_mut(i * n);
                let li = &mut tail[..n];
                let s = a.get(i, j) - dot(&li[..j], &head[j * n..j * n + j]);
                li[j] = s / djj;
            }
        }
        let mut lt = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                lt[j * n + i] = l[i * n + j];
            }
        }
        Ok(Self { n, l, lt })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Smallest diagonal entry of the factor.
    pub fn min_pivot(&self) -> f64 {
        (0..self.n)
            .map(|i| self.l[i * self.n + i])
            .fold(f64::INFINITY, f64::min)
    }

    /// Solves `(L Lᵀ) x = b` overwriting `b` with `x`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            b[i] = (b[i] - dot(row, &b[..i])) / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let row = &self.lt[i * n + i + 1..(i + 1) * n];
            b[i] = (b[i] - dot(row, &b[i + 1..])) / self.lt[i * n + i];
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four accumulators let the compiler vectorize the reduction.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm_sq(v: &[f64]) -> f64 {
    dot(v, v)
}

pub fn norm2(v: &[f64]) -> f64 {
    norm_sq(v).sqrt()
}

pub fn norm1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn normalize_diagonal() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 3.0]]).unwrap();
        assert_eq!(normalize_columns(&a).unwrap(), DenseMatrix::identity(2));
    }

    #[test]
    fn normalize_identity_is_identity() {
        let i = DenseMatrix::identity(4);
        assert_eq!(normalize_columns(&i).unwrap(), i);
    }

    #[test]
    fn normalize_random_unit_columns() {
        let a = gaussian_matrix(3, 2, &RngStream::new(5, 1));
        let b = normalize_columns(&a).unwrap();
        for j in 0..2 {
            let col = b.column(j);
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(approx(norm, 1.0, 1e-12));
            // direction preserved
            let orig = a.column(j);
            let scale = orig[0] / col[0];
            assert!(scale > 0.0);
            for (o, c) in orig.iter().zip(&col) {
                assert!(approx(*o, scale * c, 1e-12 * scale.abs()));
            }
        }
    }

    #[test]
    fn normalize_zero_column_reports_index() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0, 2.0], vec![1.0, 0.0, 1.0]]).unwrap();
        assert_eq!(normalize_columns(&a), Err(Error::ZeroColumn(1)));
    }

    #[test]
    fn normalize_is_idempotent() {
        let a = gaussian_matrix(6, 5, &RngStream::new(11, 3));
        let once = normalize_columns(&a).unwrap();
        let twice = normalize_columns(&once).unwrap();
        for (x, y) in once.as_slice().iter().zip(twice.as_slice()) {
            assert!(approx(*x, *y, 1e-12));
        }
    }

    #[test]
    fn gaussian_moments() {
        let a = gaussian_matrix(1000, 1, &RngStream::new(2024, 0));
        let v = a.as_slice();
        let mean = v.iter().sum::<f64>() / 1000.0;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 999.0;
        assert!(mean.abs() <= 0.1, "mean {mean}");
        assert!((0.85..=1.15).contains(&var), "var {var}");
    }

    #[test]
    fn gaussian_deterministic_and_shaped() {
        let s = RngStream::new(3, 4);
        let a = gaussian_matrix(3, 4, &s);
        let b = gaussian_matrix(3, 4, &s);
        assert_eq!(a.as_slice().len(), 12);
        assert!(a.as_slice().iter().all(|v| v.is_finite()));
        let bits = |m: &DenseMatrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(DenseMatrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(DenseMatrix::new(1, 1, vec![f64::NAN]).is_err());
        assert!(DenseMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn gram_and_products_agree_with_nalgebra() {
        let a = gaussian_matrix(5, 3, &RngStream::new(1, 1));
        let na = a.to_nalgebra();
        let g = a.gram();
        let ng = na.transpose() * &na;
        let og = a.outer_gram();
        let nog = &na * na.transpose();
        for i in 0..3 {
            for j in 0..3 {
                assert!(approx(g.get(i, j), ng[(i, j)], 1e-12));
            }
        }
        for i in 0..5 {
            for j in 0..5 {
                assert!(approx(og.get(i, j), nog[(i, j)], 1e-12));
            }
        }
        let x = [0.3, -1.0, 2.0];
        let ax = a.mul_vec(&x);
        let nax = &na * nalgebra::DVector::from_row_slice(&x);
        for i in 0..5 {
            assert!(approx(ax[i], nax[i], 1e-12));
        }
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        let atv = a.tr_mul_vec(&v);
        let natv = na.transpose() * nalgebra::DVector::from_row_slice(&v);
        for j in 0..3 {
            assert!(approx(atv[j], natv[j], 1e-12));
        }
        assert_eq!(a.transpose().transpose(), a);
    }

    #[test]
    fn cholesky_solves() {
        let a = gaussian_matrix(8, 4, &RngStream::new(7, 7));
        let mut g = a.gram();
        for i in 0..4 {
            g.data_mut()[i * 4 + i] += 0.5;
        }
        let ch = Cholesky::factor(&g).unwrap();
        let x = [1.0, -2.0, 0.5, 3.0];
        let mut b = g.mul_vec(&x);
        ch.solve_in_place(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!(approx(*u, *v, 1e-10));
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(Cholesky::factor(&a).is_err());
    }

    #[test]
    fn select_rows_duplicates() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let s = a.select_rows(&[2, 2]).unwrap();
        assert_eq!(s.row(0), &[5.0, 6.0]);
        assert_eq!(s.row(1), &[5.0, 6.0]);
        assert!(a.select_rows(&[3]).is_err());
        let c = a.select_columns(&[1]).unwrap();
        assert_eq!(c.column(0), vec![2.0, 4.0, 6.0]);
    }
}
