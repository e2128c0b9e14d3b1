//! Small dense matrices and rank-3 tensors, generic over [`Scalar`].
//!
//! Every dimension in this crate is tiny (≤ 8), so the containers are
//! `Vec`-backed with no blocking or allocation tricks. The point of rolling
//! these by hand is genericity: LU factorization and matrix products must run
//! unchanged over nested dual numbers, which rules out the usual linear
//! algebra crates (their generic inverses demand field traits dual numbers
//! cannot satisfy).

use crate::error::CoreError;
use crate::scalar::Scalar;
use std::ops::{Index, IndexMut};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(rows: &[&[S]]) -> Self {
        let r = rows.len();
        let c = if r > 0 { rows[0].len() } else { 0 };
        Mat::from_fn(r, c, |i, j| rows[i][j])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat<S> {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Mat<S>) -> Mat<S> {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[S]) -> Vec<S> {
        assert_eq!(self.cols, v.len(), "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| {
                let mut acc = S::zero();
                for j in 0..self.cols {
                    acc += self[(i, j)] * v[j];
                }
                acc
            })
            .collect()
    }

    pub fn add(&self, other: &Mat<S>) -> Mat<S> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat::from_fn(self.rows, self.cols, |i, j| self[(i, j)] + other[(i, j)])
    }

    pub fn sub(&self, other: &Mat<S>) -> Mat<S> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat::from_fn(self.rows, self.cols, |i, j| self[(i, j)] - other[(i, j)])
    }

    pub fn scale(&self, s: S) -> Mat<S> {
        Mat::from_fn(self.rows, self.cols, |i, j| self[(i, j)] * s)
    }

    /// Largest `mag` over all entries.
    pub fn max_mag(&self) -> f64 {
        self.data.iter().map(|x| x.mag()).fold(0.0, f64::max)
    }

    /// Max |value| of the entrywise difference (primal parts only).
    pub fn max_abs_diff(&self, other: &Mat<S>) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (*a - *b).value().abs())
            .fold(0.0, f64::max)
    }

    /// Max |a_ij − a_ji| over the primal parts; 0 for a symmetric matrix.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).value().abs());
            }
        }
        worst
    }

    /// LU factorization with partial pivoting (pivot chosen by primal
    /// magnitude). Errors if a pivot is smaller than `1e-13 · max entry`.
    pub fn lu(&self) -> Result<Lu<S>, CoreError> {
        assert_eq!(self.rows, self.cols, "lu requires a square matrix");
        let n = self.rows;
        let mut a = self.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = self.max_mag().max(1e-300);
        for k in 0..n {
            let mut piv = k;
            let mut best = a[(k, k)].mag();
            for r in (k + 1)..n {
                let m = a[(r, k)].mag();
                if m > best {
                    best = m;
                    piv = r;
                }
            }
            if best < 1e-13 * scale {
                return Err(CoreError::degenerate(format!(
                    "singular {n}×{n} matrix (pivot {best:.3e} vs scale {scale:.3e})"
                )));
            }
            if piv != k {
                for j in 0..n {
                    let tmp = a[(k, j)];
                    a[(k, j)] = a[(piv, j)];
                    a[(piv, j)] = tmp;
                }
                perm.swap(k, piv);
            }
            let pivot = a[(k, k)];
            for r in (k + 1)..n {
                let factor = a[(r, k)] / pivot;
                a[(r, k)] = factor;
                for j in (k + 1)..n {
                    let akj = a[(k, j)];
                    a[(r, j)] -= factor * akj;
                }
            }
        }
        Ok(Lu { lu: a, perm })
    }

    pub fn inverse(&self) -> Result<Mat<S>, CoreError> {
        let lu = self.lu()?;
        let n = self.rows;
        let mut inv = Mat::zeros(n, n);
        let mut e = vec![S::zero(); n];
        for j in 0..n {
            e[j] = S::one();
            let col = lu.solve(&e);
            e[j] = S::zero();
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Ok(inv)
    }

    /// Extracts the primal-valued matrix.
    pub fn values(&self) -> Mat<f64> {
        Mat::from_fn(self.rows, self.cols, |i, j| self[(i, j)].value())
    }
}

impl<S> Index<(usize, usize)> for Mat<S> {
    type Output = S;
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.cols + j]
    }
}

impl<S> IndexMut<(usize, usize)> for Mat<S> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.cols + j]
    }
}

/// LU factors with the row permutation applied during elimination.
pub struct Lu<S> {
    lu: Mat<S>,
    perm: Vec<usize>,
}

impl<S: Scalar> Lu<S> {
    pub fn solve(&self, b: &[S]) -> Vec<S> {
        let n = self.perm.len();
        assert_eq!(b.len(), n);
        let mut y: Vec<S> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            for j in 0..i {
                let yj = y[j];
                y[i] -= self.lu[(i, j)] * yj;
            }
        }
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                let yj = y[j];
                y[i] -= self.lu[(i, j)] * yj;
            }
            y[i] = y[i] / self.lu[(i, i)];
        }
        y
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &Mat<S>) -> Mat<S> {
        let n = self.perm.len();
        assert_eq!(b.rows(), n);
        let mut x = Mat::zeros(n, b.cols());
        for col in 0..b.cols() {
            let rhs: Vec<S> = (0..n).map(|r| b[(r, col)]).collect();
            let sol = self.solve(&rhs);
            for r in 0..n {
                x[(r, col)] = sol[r];
            }
        }
        x
    }
}

/// Rank-3 tensor with fixed dimensions, row-major in the last index.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3<S> {
    dims: [usize; 3],
    data: Vec<S>,
}

impl<S: Scalar> Tensor3<S> {
    pub fn zeros(d0: usize, d1: usize, d2: usize) -> Self {
        Tensor3 {
            dims: [d0, d1, d2],
            data: vec![S::zero(); d0 * d1 * d2],
        }
    }

    pub fn from_fn(
        d0: usize,
        d1: usize,
        d2: usize,
        mut f: impl FnMut(usize, usize, usize) -> S,
    ) -> Self {
        let mut t = Tensor3::zeros(d0, d1, d2);
        for i in 0..d0 {
            for j in 0..d1 {
                for k in 0..d2 {
                    t[[i, j, k]] = f(i, j, k);
                }
            }
        }
        t
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn max_mag(&self) -> f64 {
        self.data.iter().map(|x| x.mag()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Tensor3<S>) -> f64 {
        assert_eq!(self.dims, other.dims);
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (*a - *b).value().abs())
            .fold(0.0, f64::max)
    }
}

impl<S> Index<[usize; 3]> for Tensor3<S> {
    type Output = S;
    fn index(&self, [i, j, k]: [usize; 3]) -> &S {
        &self.data[(i * self.dims[1] + j) * self.dims[2] + k]
    }
}

impl<S> IndexMut<[usize; 3]> for Tensor3<S> {
    fn index_mut(&mut self, [i, j, k]: [usize; 3]) -> &mut S {
        &mut self.data[(i * self.dims[1] + j) * self.dims[2] + k]
    }
}

/// Eigenvalues of a symmetric `f64` matrix by cyclic Jacobi rotations.
/// Returns them in ascending order.
pub fn sym_eigenvalues(a: &Mat<f64>) -> Vec<f64> {
    assert_eq!(a.rows(), a.cols());
    let n = a.rows();
    let mut m = a.clone();
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(m[(i, j)].abs());
            }
        }
        if off < 1e-15 * (1.0 + m.max_mag()) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * m[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Smallest singular value of a rectangular `f64` matrix via the symmetric
/// eigenproblem of AᵀA (fine at these sizes). Used for rank checks.
pub fn smallest_singular_value(a: &Mat<f64>) -> f64 {
    let (small, _) = if a.rows() >= a.cols() {
        (a.transpose().matmul(a), a.cols())
    } else {
        (a.matmul(&a.transpose()), a.rows())
    };
    let ev = sym_eigenvalues(&small);
    ev[0].max(0.0).sqrt()
}

/// Checks positive definiteness of a symmetric `f64` matrix.
pub fn is_positive_definite(a: &Mat<f64>) -> bool {
    sym_eigenvalues(a).first().is_some_and(|&l| l > 0.0)
}
