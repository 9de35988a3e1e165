//! Reductions: sum, mean, and stabilized logsumexp.

use super::Tensor;
use crate::scalar::{c, Scalar};

fn check_axes(shape: &[usize], axes: &[usize]) {
    for &ax in axes {
        assert!(ax < shape.len(), "reduction axis {ax} out of range for {shape:?}");
        assert!(shape[ax] > 0, "reduction over empty axis {ax} of {shape:?}");
    }
}

/// Shape after dropping (or keeping as 1) the reduced axes.
fn reduced_shape(shape: &[usize], axes: &[usize], keepdim: bool) -> Vec<usize> {
    let mut out = Vec::new();
    for (d, &e) in shape.iter().enumerate() {
        if axes.contains(&d) {
            if keepdim {
                out.push(1);
            }
        } else {
            out.push(e);
        }
    }
    out
}

/// For each input linear index, the linear index of its reduction cell.
fn output_index_map(shape: &[usize], axes: &[usize]) -> Vec<usize> {
    let n: usize = shape.iter().product();
    let mut kept_strides = vec![0usize; shape.len()];
    {
        let mut acc = 1usize;
        for d in (0..shape.len()).rev() {
            if !axes.contains(&d) {
                kept_strides[d] = acc;
                acc *= shape[d];
            }
        }
    }
    let mut map = vec![0usize; n];
    let mut coords = vec![0usize; shape.len()];
    let mut out_idx = 0usize;
    for m in map.iter_mut() {
        *m = out_idx;
        for d in (0..shape.len()).rev() {
            coords[d] += 1;
            out_idx += kept_strides[d];
            if coords[d] < shape[d] {
                break;
            }
            coords[d] = 0;
            out_idx -= kept_strides[d] * shape[d];
        }
    }
    map
}

impl<S: Scalar> Tensor<S> {
    pub fn sum_axes(&self, axes: &[usize], keepdim: bool) -> Tensor<S> {
        check_axes(self.shape(), axes);
        let out_shape = reduced_shape(self.shape(), axes, keepdim);
        let map = output_index_map(self.shape(), axes);
        let out_len: usize = out_shape.iter().product();
        let mut data = vec![S::zero(); out_len];
        {
            let src = self.inner.data.borrow();
            for (i, &v) in src.iter().enumerate() {
                data[map[i]] += v;
            }
        }
        let input = self.clone();
        Tensor::from_op(out_shape, data, &[self], move |g, sink| {
            if let Some(buf) = sink.buf_mut(&input) {
                for (i, b) in buf.iter_mut().enumerate() {
                    *b += g[map[i]];
                }
            }
        })
    }

    pub fn mean_axes(&self, axes: &[usize], keepdim: bool) -> Tensor<S> {
        check_axes(self.shape(), axes);
        let count: usize = axes.iter().map(|&a| self.shape()[a]).product();
        self.sum_axes(axes, keepdim).div_scalar(c(count as f64))
    }

    pub fn sum_all(&self) -> Tensor<S> {
        let axes: Vec<usize> = (0..self.rank()).collect();
        if axes.is_empty() {
            return self.reshape(&[]);
        }
        self.sum_axes(&axes, false)
    }

    pub fn mean_all(&self) -> Tensor<S> {
        self.sum_all().div_scalar(c(self.len() as f64))
    }

    /// log Σ exp along one axis, computed as max + log Σ exp(x − max).
    pub fn logsumexp(&self, axis: usize, keepdim: bool) -> Tensor<S> {
        check_axes(self.shape(), &[axis]);
        let out_shape = reduced_shape(self.shape(), &[axis], keepdim);
        let map = output_index_map(self.shape(), &[axis]);
        let out_len: usize = out_shape.iter().product();

        let src = self.inner.data.borrow();
        let mut maxes = vec![S::neg_infinity(); out_len];
        for (i, &v) in src.iter().enumerate() {
            if v > maxes[map[i]] {
                maxes[map[i]] = v;
            }
        }
        let mut sums = vec![S::zero(); out_len];
        for (i, &v) in src.iter().enumerate() {
            sums[map[i]] += (v - maxes[map[i]]).exp();
        }
        let data: Vec<S> = maxes
            .iter()
            .zip(&sums)
            .map(|(&m, &s)| m + s.ln())
            .collect();
        drop(src);

        let y = data.clone();
        let input = self.clone();
        Tensor::from_op(out_shape, data, &[self], move |g, sink| {
            if let Some(buf) = sink.buf_mut(&input) {
                let xv = input.inner.data.borrow();
                for (i, b) in buf.iter_mut().enumerate() {
                    let o = map[i];
                    *b += g[o] * (xv[i] - y[o]).exp();
                }
            }
        })
    }
}
