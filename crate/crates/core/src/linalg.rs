//! Dense row-major matrices and the handful of kernels the models need.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;
use core::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Floating-point element type of model parameters.
///
/// `f32` is the storage type used for training; `f64` exists so that
/// gradient checks can run against tight tolerances.
pub trait Scalar:
    Float + Default + Debug + Send + Sync + AddAssign + SubAssign + MulAssign + 'static
{
    /// Size in bytes when serialised.
    const BYTES: usize;
    const TAG: &'static str;

    fn lit(x: f64) -> Self;
    fn as_f64(self) -> f64;

    /// Inner product. `f32` accumulates in `f32` lanes unless the
    /// `wide-f32` feature asks for `f64` accumulation.
    fn dot(a: &[Self], b: &[Self]) -> Self;
}

macro_rules! lane_dot {
    ($a:expr, $b:expr, $acc:ty, $n:expr) => {{
        let a = $a;
        let b = $b;
        debug_assert_eq!(a.len(), b.len());
        let mut lanes = [0 as $acc; $n];
        let ca = a.chunks_exact($n);
        let cb = b.chunks_exact($n);
        let (ra, rb) = (ca.remainder(), cb.remainder());
        for (x, y) in ca.zip(cb) {
            for i in 0..$n {
                lanes[i] += (x[i] as $acc) * (y[i] as $acc);
            }
        }
        let mut tail = 0 as $acc;
        for (x, y) in ra.iter().zip(rb) {
            tail += (*x as $acc) * (*y as $acc);
        }
        // pairwise fold keeps the reduction order fixed
        let mut width = $n;
        while width > 1 {
            width /= 2;
            for i in 0..width {
                lanes[i] += lanes[i + width];
            }
        }
        lanes[0] + tail
    }};
}

const LANES: usize = 8;

impl Scalar for f32 {
    const BYTES: usize = 4;
    const TAG: &'static str = "f32";

    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }

    #[inline]
    fn dot(a: &[f32], b: &[f32]) -> f32 {
        #[cfg(not(feature = "wide-f32"))]
        {
            lane_dot!(a, b, f32, LANES)
        }
        #[cfg(feature = "wide-f32")]
        {
            lane_dot!(a, b, f64, 8) as f32
        }
    }
}

impl Scalar for f64 {
    const BYTES: usize = 8;
    const TAG: &'static str = "f64";

    #[inline]
    fn lit(x: f64) -> Self {
        x
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }

    #[inline]
    fn dot(a: &[f64], b: &[f64]) -> f64 {
        lane_dot!(a, b, f64, 8)
    }
}

/// `y += alpha * x`
#[inline]
pub fn axpy<F: Scalar>(alpha: F, x: &[F], y: &mut [F]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn sigmoid<F: Scalar>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// `ln Σ exp(x_i)` computed in f64 with max subtraction.
pub fn log_sum_exp<F: Scalar>(xs: &[F]) -> f64 {
    let max = xs
        .iter()
        .map(|x| x.as_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|x| libm::exp(x.as_f64() - max)).sum();
    max + libm::log(sum)
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = F::one();
        }
        m
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
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
    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: F) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<F> {
        self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// `out = self · x`
    pub fn mul_vec(&self, x: &[F], out: &mut [F]) {
        debug_assert_eq!(x.len(), self.cols);
        for (r, o) in out.iter_mut().enumerate().take(self.rows) {
            *o = F::dot(self.row(r), x);
        }
    }

    /// `out += selfᵀ · x`
    pub fn add_mul_vec_transposed(&self, x: &[F], out: &mut [F]) {
        debug_assert_eq!(x.len(), self.rows);
        for (r, &xr) in x.iter().enumerate() {
            if xr != F::zero() {
                axpy(xr, self.row(r), out);
            }
        }
    }

    /// Batched product: `outs[b] = self · xs[b]` for every column vector of
    /// the batch, one pass over the matrix rows.
    pub fn mul_batch(&self, xs: &[&[F]], outs: &mut [&mut [F]]) {
        debug_assert_eq!(xs.len(), outs.len());
        for r in 0..self.rows {
            let row = self.row(r);
            for (x, out) in xs.iter().zip(outs.iter_mut()) {
                out[r] = F::dot(row, x);
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<G: Scalar>(&self) -> Matrix<G> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| G::lit(x.as_f64())).collect(),
        }
    }
}
