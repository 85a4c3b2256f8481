//! Dense complex vectors and matrices.
//!
//! Matrices are stored row-major. Every product accumulates each output
//! entry over the inner index in increasing order, so results are
//! bit-reproducible for a given input.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

pub type Complex = num_complex::Complex64;

pub const ZERO: Complex = Complex::new(0.0, 0.0);
pub const ONE: Complex = Complex::new(1.0, 0.0);

/// Relative pivot threshold used by [`linear_solve`].
pub const PIVOT_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVector {
    data: Vec<Complex>,
}

impl ComplexVector {
    pub fn zeros(n: usize) -> Self {
        Self { data: vec![ZERO; n] }
    }

    pub fn from_vec(data: Vec<Complex>) -> Self {
        Self { data }
    }

    pub fn from_real(values: &[f64]) -> Self {
        Self {
            data: values.iter().map(|&x| Complex::new(x, 0.0)).collect(),
        }
    }

    /// Standard basis vector `e_k` of length `n`.
    pub fn basis(n: usize, k: usize) -> Self {
        let mut v = Self::zeros(n);
        v.data[k] = ONE;
        v
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Complex> {
        self.data.iter()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Hermitian inner product `selfᴴ · other`.
    pub fn dot(&self, other: &ComplexVector) -> Complex {
        dot(&self.data, &other.data)
    }

    pub fn scale(&self, s: Complex) -> ComplexVector {
        Self::from_vec(self.data.iter().map(|z| z * s).collect())
    }

    pub fn distance(&self, other: &ComplexVector) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

impl Index<usize> for ComplexVector {
    type Output = Complex;
    fn index(&self, i: usize) -> &Complex {
        &self.data[i]
    }
}

impl IndexMut<usize> for ComplexVector {
    fn index_mut(&mut self, i: usize) -> &mut Complex {
        &mut self.data[i]
    }
}

/// `aᴴ · b` over slices of equal length.
pub fn dot(a: &[Complex], b: &[Complex]) -> Complex {
    let (mut re, mut im) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re + x.im * y.im;
        im += x.re * y.im - x.im * y.re;
    }
    Complex::new(re, im)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape("from_vec", (rows, cols), (data.len(), 1)));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn diag(values: &[Complex]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    /// Builds a matrix whose `j`-th column is `columns[j]`.
    pub fn from_columns(columns: &[ComplexVector]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, |c| c.len());
        let mut m = Self::zeros(rows, cols);
        for (j, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(Error::shape("from_columns", (rows, cols), (c.len(), 1)));
            }
            for i in 0..rows {
                m.data[i * cols + j] = c[i];
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[Complex] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> ComplexVector {
        ComplexVector::from_vec((0..self.rows).map(|i| self[(i, j)]).collect())
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> ComplexMatrix {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j].conj();
            }
        }
        out
    }

    pub fn scale(&self, s: Complex) -> ComplexMatrix {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn add(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    fn zip_with(
        &self,
        other: &ComplexMatrix,
        op: &'static str,
        f: impl Fn(Complex, Complex) -> Complex,
    ) -> Result<ComplexMatrix> {
        if self.shape() != other.shape() {
            return Err(Error::shape(op, self.shape(), other.shape()));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sqr().sqrt()
    }

    /// `‖self − other‖_F`; panics on shape mismatch.
    pub fn distance(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// `self · v`.
    pub fn matvec(&self, v: &[Complex]) -> Result<ComplexVector> {
        if v.len() != self.cols {
            return Err(Error::shape("matvec", self.shape(), (v.len(), 1)));
        }
        let mut out = vec![ZERO; self.rows];
        self.matvec_into(v, &mut out);
        Ok(ComplexVector::from_vec(out))
    }

    /// `out = self · v` without shape checks beyond debug assertions.
    pub(crate) fn matvec_into(&self, v: &[Complex], out: &mut [Complex]) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let (mut re, mut im) = (0.0, 0.0);
            for (a, x) in row.iter().zip(v) {
                re += a.re * x.re - a.im * x.im;
                im += a.re * x.im + a.im * x.re;
            }
            *o = Complex::new(re, im);
        }
    }

    /// `out += selfᴴ · v`.
    pub(crate) fn adjoint_matvec_acc(&self, v: &[Complex], out: &mut [Complex]) {
        debug_assert_eq!(v.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (i, x) in v.iter().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (o, a) in out.iter_mut().zip(row) {
                // conj(a) * x
                o.re += a.re * x.re + a.im * x.im;
                o.im += a.re * x.im - a.im * x.re;
            }
        }
    }

    /// `selfᴴ · v`.
    pub fn adjoint_matvec(&self, v: &[Complex]) -> Result<ComplexVector> {
        if v.len() != self.rows {
            return Err(Error::shape("adjoint_matvec", self.shape(), (v.len(), 1)));
        }
        let mut out = vec![ZERO; self.cols];
        self.adjoint_matvec_acc(v, &mut out);
        Ok(ComplexVector::from_vec(out))
    }

    /// Rank-one update `self += x · yᴴ`.
    pub(crate) fn add_outer(&mut self, x: &[Complex], y: &[Complex]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(y.len(), self.cols);
        for (i, a) in x.iter().enumerate() {
            if a.re == 0.0 && a.im == 0.0 {
                continue;
            }
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (r, b) in row.iter_mut().zip(y) {
                // a * conj(b)
                r.re += a.re * b.re + a.im * b.im;
                r.im += a.im * b.re - a.re * b.im;
            }
        }
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex;
    fn index(&self, (i, j): (usize, usize)) -> &Complex {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex {
        &mut self.data[i * self.cols + j]
    }
}

/// Complex matrix product `a · b`.
///
/// Each output entry is accumulated over the inner index from left to right.
pub fn matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.cols != b.rows {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    let (n, m) = (a.rows, b.cols);
    let mut out = ComplexMatrix::zeros(n, m);
    for i in 0..n {
        let out_row = &mut out.data[i * m..(i + 1) * m];
        for k in 0..a.cols {
            let x = a.data[i * a.cols + k];
            let b_row = &b.data[k * m..(k + 1) * m];
            for (o, y) in out_row.iter_mut().zip(b_row) {
                o.re += x.re * y.re - x.im * y.im;
                o.im += x.re * y.im + x.im * y.re;
            }
        }
    }
    Ok(out)
}

/// `a · bᴴ`, computed as row-by-row inner products.
pub fn matmul_adjoint(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.cols != b.cols {
        return Err(Error::shape("matmul_adjoint", a.shape(), b.shape()));
    }
    let mut out = ComplexMatrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let ar = a.row(i);
        for j in 0..b.rows {
            // Σ_k a_ik conj(b_jk) = conj(dot(a_i, b_j))
            out.data[i * b.rows + j] = dot(ar, b.row(j)).conj();
        }
    }
    Ok(out)
}

/// Solves `a · x = b` by Gaussian elimination with partial pivoting.
///
/// A pivot whose modulus falls below `PIVOT_TOLERANCE` times the largest
/// initial modulus in its column is reported as [`Error::Singular`].
pub fn linear_solve(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() {
        return Err(Error::shape("linear_solve", a.shape(), a.shape()));
    }
    if b.rows != a.rows {
        return Err(Error::shape("linear_solve", a.shape(), b.shape()));
    }
    let n = a.rows;
    let m = b.cols;
    let mut lu = a.data.clone();
    let mut x = b.data.clone();

    let col_max: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|i| a.data[i * n + j].norm()).fold(0.0, f64::max))
        .collect();

    for k in 0..n {
        let mut p = k;
        let mut best = lu[k * n + k].norm_sqr();
        for i in k + 1..n {
            let mag = lu[i * n + k].norm_sqr();
            if mag > best {
                best = mag;
                p = i;
            }
        }
        let pivot_mag = best.sqrt();
        if !(pivot_mag > PIVOT_TOLERANCE * col_max[k]) {
            return Err(Error::Singular { pivot: k });
        }
        if p != k {
            for j in 0..n {
                lu.swap(k * n + j, p * n + j);
            }
            for j in 0..m {
                x.swap(k * m + j, p * m + j);
            }
        }
        let inv_pivot = lu[k * n + k].inv();
        for i in k + 1..n {
            let factor = lu[i * n + k] * inv_pivot;
            if factor.re == 0.0 && factor.im == 0.0 {
                continue;
            }
            lu[i * n + k] = ZERO;
            let (upper, lower) = lu.split_at_mut(i * n);
            let pivot_row = &upper[k * n + k + 1..k * n + n];
            let row = &mut lower[k + 1..n];
            axpy_neg(row, factor, pivot_row);
            let (upper, lower) = x.split_at_mut(i * m);
            axpy_neg(&mut lower[..m], factor, &upper[k * m..k * m + m]);
        }
    }

    for k in (0..n).rev() {
        let inv_pivot = lu[k * n + k].inv();
        let (upper, lower) = x.split_at_mut((k + 1) * m);
        let row = &mut upper[k * m..];
        for j in k + 1..n {
            let coeff = lu[k * n + j];
            axpy_neg(row, coeff, &lower[(j - k - 1) * m..(j - k) * m]);
        }
        for v in row.iter_mut() {
            *v *= inv_pivot;
        }
    }
    Ok(ComplexMatrix { rows: n, cols: m, data: x })
}

/// `y -= s · x`
#[inline]
fn axpy_neg(y: &mut [Complex], s: Complex, x: &[Complex]) {
    for (a, b) in y.iter_mut().zip(x) {
        a.re -= s.re * b.re - s.im * b.im;
        a.im -= s.re * b.im + s.im * b.re;
    }
}

/// `‖WᴴW − I‖_F`.
pub fn unitarity_defect(w: &ComplexMatrix) -> Result<f64> {
    if !w.is_square() {
        return Err(Error::shape("unitarity_defect", w.shape(), w.shape()));
    }
    let n = w.rows;
    let mut gram = ComplexMatrix::zeros(n, n);
    for k in 0..n {
        let row = w.row(k);
        gram.add_outer(
            &row.iter().map(|z| z.conj()).collect::<Vec<_>>(),
            &row.iter().map(|z| z.conj()).collect::<Vec<_>>(),
        );
    }
    for i in 0..n {
        gram.data[i * n + i] -= ONE;
    }
    Ok(gram.frobenius_norm())
}

/// Orthonormalizes the columns of a square matrix by Gram-Schmidt with one
/// round of reorthogonalization.
///
/// This is the `Q` factor of the QR decomposition whose `R` has a positive
/// real diagonal.
pub fn orthonormalize_columns(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() {
        return Err(Error::shape("orthonormalize_columns", a.shape(), a.shape()));
    }
    let n = a.rows;
    // work on columns stored contiguously
    let t = a.adjoint();
    let mut q: Vec<Vec<Complex>> = Vec::with_capacity(n);
    for j in 0..n {
        let mut v: Vec<Complex> = t.row(j).iter().map(|z| z.conj()).collect();
        for _ in 0..2 {
            for basis in &q {
                let proj = dot(basis, &v);
                axpy_neg(&mut v, proj, basis);
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::Singular { pivot: j });
        }
        for z in v.iter_mut() {
            *z /= norm;
        }
        q.push(v);
    }
    let columns: Vec<ComplexVector> = q.into_iter().map(ComplexVector::from_vec).collect();
    ComplexMatrix::from_columns(&columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{haar_unitary, randn_circular, Rng};

    fn c(re: f64, im: f64) -> Complex {
        Complex::new(re, im)
    }

    fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> ComplexMatrix {
        ComplexMatrix::from_vec(rows, cols, randn_circular(rows * cols, rng).into_vec()).unwrap()
    }

    #[test]
    fn identity_times_matrix() {
        let m = ComplexMatrix::from_vec(2, 2, vec![c(1.0, 2.0), c(3.0, -1.0), c(0.5, 0.0), c(0.0, 4.0)])
            .unwrap();
        assert_eq!(matmul(&ComplexMatrix::identity(2), &m).unwrap(), m);
    }

    #[test]
    fn i_squared() {
        let i = ComplexMatrix::from_vec(1, 1, vec![c(0.0, 1.0)]).unwrap();
        assert_eq!(matmul(&i, &i).unwrap()[(0, 0)], c(-1.0, 0.0));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = matmul(&ComplexMatrix::zeros(2, 3), &ComplexMatrix::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(2, 3)"), "{msg}");
    }

    #[test]
    fn adjoint_of_product() {
        let mut rng = Rng::new(11);
        let a = random_matrix(4, 4, &mut rng);
        let b = random_matrix(4, 4, &mut rng);
        let lhs = matmul(&a, &b).unwrap().adjoint();
        let rhs = matmul(&b.adjoint(), &a.adjoint()).unwrap();
        for (x, y) in lhs.as_slice().iter().zip(rhs.as_slice()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn matmul_adjoint_matches_explicit() {
        let mut rng = Rng::new(5);
        let a = random_matrix(3, 5, &mut rng);
        let b = random_matrix(4, 5, &mut rng);
        let fast = matmul_adjoint(&a, &b).unwrap();
        let slow = matmul(&a, &b.adjoint()).unwrap();
        assert!(fast.distance(&slow) < 1e-12);
    }

    #[test]
    fn solve_identity() {
        let mut rng = Rng::new(3);
        let b = random_matrix(5, 2, &mut rng);
        assert!(linear_solve(&ComplexMatrix::identity(5), &b).unwrap().distance(&b) < 1e-15);
    }

    #[test]
    fn solve_scalar() {
        let a = ComplexMatrix::from_vec(1, 1, vec![c(0.0, 2.0)]).unwrap();
        let b = ComplexMatrix::from_vec(1, 1, vec![c(4.0, 0.0)]).unwrap();
        let x = linear_solve(&a, &b).unwrap();
        assert!((x[(0, 0)] - c(0.0, -2.0)).norm() < 1e-15);
    }

    #[test]
    fn solve_reconstructs() {
        let mut rng = Rng::new(8);
        // diagonally loaded to stay well conditioned
        let mut a = random_matrix(8, 8, &mut rng);
        for i in 0..8 {
            a[(i, i)] += c(4.0, 0.0);
        }
        let x = random_matrix(8, 1, &mut rng);
        let b = matmul(&a, &x).unwrap();
        assert!(linear_solve(&a, &b).unwrap().distance(&x) < 1e-10);
    }

    #[test]
    fn solve_needs_pivoting() {
        let a = ComplexMatrix::from_vec(2, 2, vec![ZERO, ONE, ONE, ZERO]).unwrap();
        let b = ComplexMatrix::from_vec(2, 1, vec![c(2.0, 0.0), c(3.0, 0.0)]).unwrap();
        let x = linear_solve(&a, &b).unwrap();
        assert_eq!(x.as_slice(), &[c(3.0, 0.0), c(2.0, 0.0)]);
    }

    #[test]
    fn solve_singular_reports_pivot() {
        let a = ComplexMatrix::from_vec(2, 2, vec![ONE, c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)]).unwrap();
        let b = ComplexMatrix::identity(2);
        match linear_solve(&a, &b) {
            Err(Error::Singular { pivot }) => assert_eq!(pivot, 1),
            other => panic!("expected singular, got {other:?}"),
        }
    }

    #[test]
    fn defect_examples() {
        assert_eq!(unitarity_defect(&ComplexMatrix::identity(3)).unwrap(), 0.0);
        let d = ComplexMatrix::diag(&[ONE, c(2.0, 0.0)]);
        assert!((unitarity_defect(&d).unwrap() - 3.0).abs() < 1e-15);
        assert!(unitarity_defect(&ComplexMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn haar_defect() {
        let mut rng = Rng::new(1);
        assert!(unitarity_defect(&haar_unitary(16, &mut rng)).unwrap() < 1e-12);
    }

    #[test]
    fn orthonormalize_recovers_unitary() {
        let mut rng = Rng::new(2);
        let q = haar_unitary(6, &mut rng);
        // a unitary input is its own Q factor up to rounding when R has positive diagonal
        let mut r = ComplexMatrix::zeros(6, 6);
        for i in 0..6 {
            for j in i..6 {
                r[(i, j)] = if i == j { c(1.0 + i as f64, 0.0) } else { c(0.3, -0.2) };
            }
        }
        let a = matmul(&q, &r).unwrap();
        assert!(orthonormalize_columns(&a).unwrap().distance(&q) < 1e-12);
    }
}
