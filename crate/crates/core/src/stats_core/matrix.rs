use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(Self { rows: r, cols: c, data: rows.concat() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Unit diagonal, constant off-diagonal `a`.
    pub fn exchangeable(n: usize, a: f64) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { a })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::Shape(format!(
                "vector of length {} against {} columns",
                v.len(),
                self.cols
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    pub fn is_lower_triangular(&self) -> bool {
        self.is_square() && (0..self.rows).all(|i| (i + 1..self.cols).all(|j| self[(i, j)] == 0.0))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix { rows: idx.len(), cols: self.cols, data }
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower-triangular `L` with `L·Lᵀ = sigma`.
pub fn cholesky(sigma: &Matrix) -> Result<Matrix> {
    if !sigma.is_square() || sigma.rows() == 0 {
        return Err(Error::Shape(format!(
            "cholesky needs a non-empty square matrix, got {}x{}",
            sigma.rows(),
            sigma.cols()
        )));
    }
    if !sigma.is_symmetric(1e-10) {
        return Err(Error::Shape("cholesky input is not symmetric".into()));
    }
    let n = sigma.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = sigma[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = sigma[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Symmetric (pseudo-)inverse via eigendecomposition.
///
/// Eigenvalues below `rel_tol · max|λ|` are treated as zero. Returns the
/// inverse and the numerical rank.
pub fn symmetric_pinv(a: &Matrix, rel_tol: f64) -> Result<(Matrix, usize)> {
    if !a.is_square() {
        return Err(Error::Shape("pseudo-inverse needs a square matrix".into()));
    }
    let n = a.rows();
    if n == 0 {
        return Ok((Matrix::zeros(0, 0), 0));
    }
    let mut sym = a.to_nalgebra();
    sym = (&sym + sym.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cut = max * rel_tol;
    let mut rank = 0;
    let mut out = DMatrix::<f64>::zeros(n, n);
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() > cut && lambda.abs() > 0.0 {
            rank += 1;
            let v = eig.eigenvectors.column(k);
            out += (v * v.transpose()) / lambda;
        }
    }
    Ok((Matrix::from_nalgebra(&out), rank))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_examples() {
        let id = Matrix::identity(3);
        assert_eq!(cholesky(&id).unwrap(), id);
        let s = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let l = cholesky(&s).unwrap();
        assert!((l[(1, 0)] - 0.5).abs() < 1e-12);
        assert!((l[(1, 1)] - 0.866025).abs() < 1e-6);
        assert_eq!(l[(0, 1)], 0.0);
        let bad = Matrix::from_rows(&[vec![1.0, 1.2], vec![1.2, 1.0]]).unwrap();
        match cholesky(&bad) {
            Err(Error::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("expected pivot error, got {other:?}"),
        }
    }

    #[test]
    fn cholesky_reconstructs_and_is_deterministic() {
        let s = Matrix::from_rows(&[
            vec![4.0, 1.2, -0.6, 0.3],
            vec![1.2, 2.0, 0.4, 0.1],
            vec![-0.6, 0.4, 1.5, -0.2],
            vec![0.3, 0.1, -0.2, 0.9],
        ])
        .unwrap();
        let l = cholesky(&s).unwrap();
        assert!(l.is_lower_triangular());
        let back = l.matmul(&l.transpose()).unwrap();
        assert!(back.max_abs_diff(&s) < 1e-10);
        let again = cholesky(&s).unwrap();
        assert_eq!(
            l.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            again.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn pinv_rank_deficient() {
        let a = Matrix::from_rows(&[vec![5.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let (inv, rank) = symmetric_pinv(&a, 1e-12).unwrap();
        assert_eq!(rank, 1);
        assert!((inv[(0, 0)] - 0.2).abs() < 1e-15);
        assert_eq!(inv[(1, 1)], 0.0);
    }

    #[test]
    fn row_major_layout() {
        let m = Matrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(m[(0, 2)], 3.0);
        assert_eq!(m[(1, 0)], 4.0);
        assert_eq!(m.column(1), vec![2.0, 5.0]);
        assert!(Matrix::new(2, 2, vec![1.0]).is_err());
    }
}
