//! Small tensor and layer toolkit with hand-written backward passes.
//!
//! Everything works on single samples in channel-major (`C x H x W`) layout;
//! batches are plain loops that accumulate into a shared gradient set.

pub mod adam;
pub mod layers;
pub mod rotate;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use serde::{Deserialize, Serialize};

pub use adam::{Adam, AdamConfig};
pub use layers::{Conv2d, ConvCache, Linear, LinearCache};
pub use rotate::RotationMap;

/// Floating-point element type with a GEMM kernel.
pub trait Real:
    num_traits::Float + Default + Debug + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static
{
    /// `C = alpha * A B + beta * C` with arbitrary strides.
    ///
    /// # Safety
    /// Pointers and strides must describe in-bounds `m x k`, `k x n` and `m x n` matrices.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn of_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn of_f64(v: f64) -> f32 {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn of_f64(v: f64) -> f64 {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }
}

/// Row-major matrix view over a slice: `(data, rows, cols, transposed)`.
#[derive(Clone, Copy)]
pub struct MatRef<'a, F> {
    pub data: &'a [F],
    pub rows: usize,
    pub cols: usize,
    pub transposed: bool,
}

impl<'a, F> MatRef<'a, F> {
    pub fn new(data: &'a [F], rows: usize, cols: usize) -> Self {
        Self { data, rows, cols, transposed: false }
    }

    /// The transpose of a row-major `rows x cols` matrix.
    pub fn t(data: &'a [F], rows: usize, cols: usize) -> Self {
        Self { data, rows: cols, cols: rows, transposed: true }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.rows as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `out (m x n) = a b` or `out += a b` when `accumulate` is set.
pub fn matmul<F: Real>(a: MatRef<F>, b: MatRef<F>, out: &mut [F], accumulate: bool) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert!(a.data.len() >= m * k && b.data.len() >= k * n && out.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    let beta = if accumulate { F::one() } else { F::zero() };
    // SAFETY: bounds asserted above; strides describe the same row-major buffers.
    unsafe {
        F::gemm_raw(m, k, n, F::one(), a.data.as_ptr(), rsa, csa, b.data.as_ptr(), rsb, csb, beta, out.as_mut_ptr(), n as isize, 1);
    }
}

/// Dense `C x H x W` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w, data: vec![F::zero(); c * h * w] }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), c * h * w);
        Self { c, h, w, data }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    #[inline]
    pub fn at(&self, c: usize, r: usize, col: usize) -> F {
        self.data[(c * self.h + r) * self.w + col]
    }

    pub fn channel(&self, c: usize) -> &[F] {
        let p = self.plane();
        &self.data[c * p..(c + 1) * p]
    }

    pub fn add_assign(&mut self, other: &Tensor<F>) {
        assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn relu_inplace(&mut self) {
        for v in &mut self.data {
            if *v < F::zero() {
                *v = F::zero();
            }
        }
    }

    /// Zeroes entries of `grad` where the post-activation value was not positive.
    pub fn relu_backward(&self, grad: &mut Tensor<F>) {
        for (g, &y) in grad.data.iter_mut().zip(&self.data) {
            if y <= F::zero() {
                *g = F::zero();
            }
        }
    }

    /// Per-channel mean over the spatial grid.
    pub fn spatial_mean(&self) -> Vec<F> {
        let inv = F::one() / F::of_f64(self.plane() as f64);
        (0..self.c).map(|c| self.channel(c).iter().copied().sum::<F>() * inv).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// One named, shaped parameter array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor<F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<F>,
}

/// Ordered parameter (or gradient) collection addressed by index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet<F> {
    pub tensors: Vec<ParamTensor<F>>,
}

impl<F: Real> ParamSet<F> {
    pub fn new() -> Self {
        Self { tensors: Vec::new() }
    }

    pub fn add(&mut self, name: &str, shape: Vec<usize>, data: Vec<F>) -> usize {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape of {name}");
        self.tensors.push(ParamTensor { name: name.to_string(), shape, data });
        self.tensors.len() - 1
    }

    #[inline]
    pub fn get(&self, id: usize) -> &[F] {
        &self.tensors[id].data
    }

    #[inline]
    pub fn get_mut(&mut self, id: usize) -> &mut [F] {
        &mut self.tensors[id].data
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|t| ParamTensor { name: t.name.clone(), shape: t.shape.clone(), data: vec![F::zero(); t.data.len()] })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn scale(&mut self, s: F) {
        for t in &mut self.tensors {
            for v in &mut t.data {
                *v *= s;
            }
        }
    }

    pub fn add_scaled(&mut self, other: &ParamSet<F>, s: F) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, &y) in a.data.iter_mut().zip(&b.data) {
                *x += y * s;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Order-sensitive FNV-1a hash of all values, for change detection.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in &self.tensors {
            for v in &t.data {
                h ^= v.as_f64().to_bits();
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    pub fn cast<G: Real>(&self) -> ParamSet<G> {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .map(|t| ParamTensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|&v| G::of_f64(v.as_f64())).collect(),
                })
                .collect(),
        }
    }
}
