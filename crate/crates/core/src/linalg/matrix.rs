use std::fmt;

use num_traits::Float;

use crate::error::{check_dim, Error, Result};

/// Floating point element type of a [`Matrix`]. Implemented for `f64` (the
/// default everywhere) and `f32` (speed runs).
pub trait Scalar: Float + fmt::Debug + Default + Send + Sync + 'static {
    /// `c = alpha * op(a) * op(b) + beta * c` on raw row-major buffers with
    /// explicit strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    fn from_f64(x: f64) -> Self;
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            fn gemm_raw(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: callers pass buffers whose extents cover every
                // index reachable through the given dimensions and strides;
                // `Matrix::gemm` checks this via the shape checks.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    );
                }
            }

            fn from_f64(x: f64) -> Self {
                x as $t
            }
        }
    };
}

impl_scalar!(f64, matrixmultiply::dgemm);
impl_scalar!(f32, matrixmultiply::sgemm);

/// Dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix<T: Scalar = f64> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        check_dim("Matrix::new", rows * cols, data.len())?;
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("Matrix::new"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_dim("Matrix::from_rows", cols, r.len())?;
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: T, other: &Self) -> Result<()> {
        check_dim("Matrix::axpy", self.rows, other.rows)?;
        check_dim("Matrix::axpy", self.cols, other.cols)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + s * b;
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(T::one(), other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(-T::one(), other)?;
        Ok(out)
    }

    pub fn add_identity(&mut self, s: T) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self.data[i * self.cols + i] = self.data[i * self.cols + i] + s;
        }
    }

    /// Maximum absolute column sum.
    pub fn norm_1(&self) -> T {
        (0..self.cols)
            .map(|c| {
                (0..self.rows)
                    .map(|r| self.get(r, c).abs())
                    .fold(T::zero(), |a, b| a + b)
            })
            .fold(T::zero(), T::max)
    }

    pub fn norm_frobenius(&self) -> T {
        self.data
            .iter()
            .map(|&x| x * x)
            .fold(T::zero(), |a, b| a + b)
            .sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().map(|x| x.abs()).fold(T::zero(), T::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `c = alpha * op(a) * op(b) + beta * c` where `op` optionally transposes.
    #[allow(clippy::too_many_arguments)]
    pub fn gemm(
        alpha: T,
        a: &Self,
        trans_a: bool,
        b: &Self,
        trans_b: bool,
        beta: T,
        c: &mut Self,
    ) -> Result<()> {
        let (m, k) = if trans_a { (a.cols, a.rows) } else { (a.rows, a.cols) };
        let (kb, n) = if trans_b { (b.cols, b.rows) } else { (b.rows, b.cols) };
        check_dim("gemm", k, kb)?;
        check_dim("gemm", m, c.rows)?;
        check_dim("gemm", n, c.cols)?;
        let (rsa, csa) = if trans_a { (1, a.cols as isize) } else { (a.cols as isize, 1) };
        let (rsb, csb) = if trans_b { (1, b.cols as isize) } else { (b.cols as isize, 1) };
        if k == 0 {
            for x in c.data.iter_mut() {
                *x = *x * beta;
            }
            return Ok(());
        }
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            &a.data,
            rsa,
            csa,
            &b.data,
            rsb,
            csb,
            beta,
            &mut c.data,
            c.cols as isize,
            1,
        );
        Ok(())
    }

    pub fn matvec(&self, v: &[T]) -> Result<Vec<T>> {
        check_dim("matvec", self.cols, v.len())?;
        Ok((0..self.rows).map(|r| dot(self.row(r), v)).collect())
    }

    /// `selfᵀ v`.
    pub fn matvec_transpose(&self, v: &[T]) -> Result<Vec<T>> {
        check_dim("matvec_transpose", self.rows, v.len())?;
        let mut out = vec![T::zero(); self.cols];
        for (r, &vr) in v.iter().enumerate() {
            axpy_slice(vr, self.row(r), &mut out);
        }
        Ok(out)
    }
}

/// Standard matrix product `a · b`.
pub fn matmul<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    check_dim("matmul", a.cols, b.rows)?;
    let mut c = Matrix::zeros(a.rows, b.cols);
    Matrix::gemm(T::one(), a, false, b, false, T::zero(), &mut c)?;
    if !c.is_finite() {
        return Err(Error::NonFinite("matmul"));
    }
    Ok(c)
}

/// Applies `a` to every row of `vs` (each row is one vector): returns the
/// matrix whose row `i` is `a · vs[i]`.
pub fn matvec_batch<T: Scalar>(a: &Matrix<T>, vs: &Matrix<T>) -> Result<Matrix<T>> {
    check_dim("matvec_batch", a.cols, vs.cols)?;
    let mut out = Matrix::zeros(vs.rows, a.rows);
    Matrix::gemm(T::one(), vs, false, a, true, T::zero(), &mut out)?;
    Ok(out)
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// `y += s * x`.
#[inline]
pub fn axpy_slice<T: Scalar>(s: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + s * xi;
    }
}

pub fn norm2<T: Scalar>(v: &[T]) -> T {
    dot(v, v).sqrt()
}

/// Relative error `‖a − b‖∞ / max(‖b‖∞, floor)`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len(), "rel_err: length mismatch");
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|x| x.abs()).fold(0.0, f64::max).max(floor);
    diff / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_times_matrix() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(matmul(&Matrix::identity(2), &m).unwrap(), m);
    }

    #[test]
    fn hand_checked_product() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[2.0, 4.0]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = Matrix::<f64>::zeros(2, 3);
        let b = Matrix::<f64>::zeros(2, 3);
        assert!(matches!(matmul(&a, &b), Err(Error::Dimension { .. })));
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        assert_eq!(
            Matrix::new(1, 1, vec![f64::NAN]),
            Err(Error::NonFinite("Matrix::new"))
        );
    }

    #[test]
    fn transposed_gemm_variants() {
        let a = Matrix::from_fn(3, 2, |r, c| (r * 2 + c) as f64 + 1.0);
        let b = Matrix::from_fn(3, 4, |r, c| (r as f64) - (c as f64) * 0.5);
        let mut c = Matrix::zeros(2, 4);
        Matrix::gemm(1.0, &a, true, &b, false, 0.0, &mut c).unwrap();
        let expected = matmul(&a.transpose(), &b).unwrap();
        assert_eq!(c, expected);

        let vs = Matrix::from_fn(5, 2, |r, c| (r + c) as f64);
        let batch = matvec_batch(&a, &vs).unwrap();
        for r in 0..5 {
            assert_eq!(batch.row(r), a.matvec(vs.row(r)).unwrap().as_slice());
        }
    }

    #[test]
    fn single_precision_product() {
        let a = Matrix::<f32>::from_fn(3, 3, |r, c| (r + 2 * c) as f32);
        let c = matmul(&a, &Matrix::identity(3)).unwrap();
        assert_eq!(c, a);
    }

    #[test]
    fn transpose_matvec_agrees() {
        let a = Matrix::from_fn(3, 4, |r, c| (r as f64 + 1.0) * (c as f64 - 1.5));
        let v = [1.0, -2.0, 0.5];
        assert_eq!(
            a.matvec_transpose(&v).unwrap(),
            a.transpose().matvec(&v).unwrap()
        );
    }
}
