//! Dense matrix product with gradients.

use super::{GradSink, Tensor};
use crate::scalar::Scalar;

/// C += A·B with A m×k, B k×n, all row-major. Loop order keeps the inner
/// walk contiguous; each output element accumulates in a fixed order, so
/// results are bit-stable.
pub(crate) fn gemm<S: Scalar>(m: usize, k: usize, n: usize, a: &[S], b: &[S], out: &mut [S]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let c_row = &mut out[i * n..(i + 1) * n];
        for (t, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == S::zero() {
                continue;
            }
            let b_row = &b[t * n..(t + 1) * n];
            for (c, &bv) in c_row.iter_mut().zip(b_row) {
                *c += av * bv;
            }
        }
    }
}

/// C += Aᵀ·B with A m×k (used transposed), B m×n, C k×n.
pub(crate) fn gemm_tn<S: Scalar>(m: usize, k: usize, n: usize, a: &[S], b: &[S], out: &mut [S]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    for i in 0..m {
        let b_row = &b[i * n..(i + 1) * n];
        for (t, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == S::zero() {
                continue;
            }
            let c_row = &mut out[t * n..(t + 1) * n];
            for (c, &bv) in c_row.iter_mut().zip(b_row) {
                *c += av * bv;
            }
        }
    }
}

pub(crate) fn transpose<S: Scalar>(rows: usize, cols: usize, x: &[S]) -> Vec<S> {
    let mut out = vec![S::zero(); rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = x[i * cols + j];
        }
    }
    out
}

impl<S: Scalar> Tensor<S> {
    /// Matrix product of an m×k and a k×n tensor.
    pub fn matmul(&self, rhs: &Tensor<S>) -> Tensor<S> {
        assert_eq!(self.rank(), 2, "matmul lhs must be a matrix, got {:?}", self.shape());
        assert_eq!(rhs.rank(), 2, "matmul rhs must be a matrix, got {:?}", rhs.shape());
        let (m, k) = (self.shape()[0], self.shape()[1]);
        let (k2, n) = (rhs.shape()[0], rhs.shape()[1]);
        assert_eq!(
            k, k2,
            "matmul inner dimensions disagree: {:?} x {:?}",
            self.shape(),
            rhs.shape()
        );

        let mut data = vec![S::zero(); m * n];
        gemm(m, k, n, &self.inner.data.borrow(), &rhs.inner.data.borrow(), &mut data);

        let (a_h, b_h) = (self.clone(), rhs.clone());
        Tensor::from_op(vec![m, n], data, &[self, rhs], move |g, sink: &mut GradSink<S>| {
            if a_h.tracks_grad() {
                // dA = G·Bᵀ
                let bt = transpose(k, n, &b_h.inner.data.borrow());
                let mut ga = vec![S::zero(); m * k];
                gemm(m, n, k, g, &bt, &mut ga);
                sink.accumulate(&a_h, &ga);
            }
            if b_h.tracks_grad() {
                // dB = Aᵀ·G
                let mut gb = vec![S::zero(); k * n];
                gemm_tn(m, k, n, &a_h.inner.data.borrow(), g, &mut gb);
                sink.accumulate(&b_h, &gb);
            }
        })
    }
}
