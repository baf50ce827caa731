//! Small dense complex matrices: LU solve and the products the per-frequency
//! Cayley transform needs.

use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::complex_zeros;
use crate::tensor::Shape;

/// Pivots smaller than this in magnitude are treated as singular.
pub const PIVOT_FLOOR: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: complex_zeros(rows * cols),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                shape: [1, 1, rows, cols],
                len: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn conj_transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(c, r)] = self[(r, c)].conj();
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::ShapeMismatch {
                expected: [1, 1, self.cols, rhs.cols],
                got: [1, 1, rhs.rows, rhs.cols],
            });
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == ZERO {
                    continue;
                }
                for c in 0..rhs.cols {
                    out.data[r * rhs.cols + c] += a * rhs.data[k * rhs.cols + c];
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, rhs: &Self) -> Self {
        self.zip(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.zip(rhs, |a, b| a - b)
    }

    fn zip(&self, rhs: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn scale(&self, k: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&a| a * k).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|z| z.norm_sqr()).sum::<f64>())
    }

    fn shape(&self) -> Shape {
        [1, 1, self.rows, self.cols]
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Solves `a · y = b` by LU factorization with partial pivoting.
pub fn complex_solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    let n = a.rows;
    if a.cols != n {
        return Err(Error::ShapeMismatch {
            expected: [1, 1, n, n],
            got: a.shape(),
        });
    }
    if b.rows != n {
        return Err(Error::ShapeMismatch {
            expected: [1, 1, n, b.cols],
            got: b.shape(),
        });
    }
    let m = b.cols;
    let mut lu = a.data.clone();
    let mut y = b.data.clone();

    for col in 0..n {
        let (pivot_row, pivot_mag) = (col..n)
            .map(|r| (r, lu[r * n + col].norm()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pivot_mag >= PIVOT_FLOOR) {
            return Err(Error::Singular {
                column: col,
                pivot: pivot_mag,
            });
        }
        if pivot_row != col {
            for c in 0..n {
                lu.swap(col * n + c, pivot_row * n + c);
            }
            for c in 0..m {
                y.swap(col * m + c, pivot_row * m + c);
            }
        }
        let inv = ONE / lu[col * n + col];
        for r in col + 1..n {
            let f = lu[r * n + col] * inv;
            if f == ZERO {
                continue;
            }
            lu[r * n + col] = f;
            for c in col + 1..n {
                let v = lu[col * n + c];
                lu[r * n + c] -= f * v;
            }
            for c in 0..m {
                let v = y[col * m + c];
                y[r * m + c] -= f * v;
            }
        }
    }

    // Back substitution on the upper factor.
    for row in (0..n).rev() {
        let inv = ONE / lu[row * n + row];
        for c in 0..m {
            let mut acc = y[row * m + c];
            for k in row + 1..n {
                acc -= lu[row * n + k] * y[k * m + c];
            }
            y[row * m + c] = acc * inv;
        }
    }
    Ok(CMatrix {
        rows: n,
        cols: m,
        data: y,
    })
}
