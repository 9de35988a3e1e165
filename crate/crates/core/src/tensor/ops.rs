//! Elementwise, broadcast, and structural operations with backward rules.
//!
//! Binary ops broadcast right-aligned (trailing dimensions; an extent of 1
//! stretches). log/div clamp their dangerous inputs to at least
//! [`Scalar::log_eps`] instead of producing non-finite values.

use super::Tensor;
use crate::scalar::{c, Scalar};

pub(crate) fn strides_for(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![0; shape.len()];
    let mut acc = 1;
    for (s, &extent) in strides.iter_mut().zip(shape).rev() {
        *s = acc;
        acc *= extent;
    }
    strides
}

/// Broadcast shape of `a` and `b` under right-aligned rules.
/// Panics when an aligned pair of extents differs and neither is 1.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let ea = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let eb = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = match (ea, eb) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => panic!("shapes {a:?} and {b:?} are not broadcast-compatible"),
        };
    }
    out
}

/// Element strides of `shape` aligned into an `out_rank`-dim frame, with 0
/// where the input broadcasts.
fn aligned_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let strides = strides_for(shape);
    let offset = out_shape.len() - shape.len();
    let mut out = vec![0; out_shape.len()];
    for i in 0..shape.len() {
        out[offset + i] = if shape[i] == 1 && out_shape[offset + i] != 1 {
            0
        } else {
            strides[i]
        };
    }
    out
}

/// Walk every element of `out_shape`, calling `f(out_linear, a_offset, b_offset)`.
fn broadcast_walk(
    out_shape: &[usize],
    a_shape: &[usize],
    b_shape: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let n: usize = out_shape.iter().product();
    let rank = out_shape.len();
    if rank == 0 {
        if n > 0 {
            f(0, 0, 0);
        }
        return;
    }
    let astr = aligned_strides(a_shape, out_shape);
    let bstr = aligned_strides(b_shape, out_shape);
    let mut coords = vec![0usize; rank];
    let (mut ai, mut bi) = (0usize, 0usize);
    for i in 0..n {
        f(i, ai, bi);
        for d in (0..rank).rev() {
            coords[d] += 1;
            ai += astr[d];
            bi += bstr[d];
            if coords[d] < out_shape[d] {
                break;
            }
            coords[d] = 0;
            ai -= astr[d] * out_shape[d];
            bi -= bstr[d] * out_shape[d];
        }
    }
}

/// Sign-preserving clamp of a denominator away from zero.
#[inline]
fn clamp_den<S: Scalar>(b: S) -> S {
    let eps = S::log_eps();
    if b.abs() >= eps {
        b
    } else if b < S::zero() {
        -eps
    } else {
        eps
    }
}

impl<S: Scalar> Tensor<S> {
    fn binary(
        &self,
        rhs: &Tensor<S>,
        f: fn(S, S) -> S,
        da: fn(S, S) -> S,
        db: fn(S, S) -> S,
    ) -> Tensor<S> {
        let out_shape = broadcast_shape(self.shape(), rhs.shape());
        let a_shape = self.shape().to_vec();
        let b_shape = rhs.shape().to_vec();
        let n: usize = out_shape.iter().product();
        let mut data = vec![S::zero(); n];

        if a_shape == b_shape {
            let a = self.inner.data.borrow();
            let b = rhs.inner.data.borrow();
            for ((o, &x), &y) in data.iter_mut().zip(a.iter()).zip(b.iter()) {
                *o = f(x, y);
            }
        } else {
            let a = self.inner.data.borrow();
            let b = rhs.inner.data.borrow();
            broadcast_walk(&out_shape, &a_shape, &b_shape, |i, ai, bi| {
                data[i] = f(a[ai], b[bi]);
            });
        }

        let (lhs_h, rhs_h) = (self.clone(), rhs.clone());
        let out_shape_bw = out_shape.clone();
        Tensor::from_op(out_shape, data, &[self, rhs], move |g, sink| {
            let a = lhs_h.inner.data.borrow();
            let b = rhs_h.inner.data.borrow();
            let want_a = lhs_h.tracks_grad();
            let want_b = rhs_h.tracks_grad();
            let mut ga = want_a.then(|| vec![S::zero(); a.len()]);
            let mut gb = want_b.then(|| vec![S::zero(); b.len()]);
            if a.len() == b.len() && lhs_h.shape() == rhs_h.shape() {
                for i in 0..g.len() {
                    if let Some(ga) = ga.as_mut() {
                        ga[i] += g[i] * da(a[i], b[i]);
                    }
                    if let Some(gb) = gb.as_mut() {
                        gb[i] += g[i] * db(a[i], b[i]);
                    }
                }
            } else {
                broadcast_walk(&out_shape_bw, lhs_h.shape(), rhs_h.shape(), |i, ai, bi| {
                    if let Some(ga) = ga.as_mut() {
                        ga[ai] += g[i] * da(a[ai], b[bi]);
                    }
                    if let Some(gb) = gb.as_mut() {
                        gb[bi] += g[i] * db(a[ai], b[bi]);
                    }
                });
            }
            drop(a);
            drop(b);
            if let Some(ga) = ga {
                sink.accumulate(&lhs_h, &ga);
            }
            if let Some(gb) = gb {
                sink.accumulate(&rhs_h, &gb);
            }
        })
    }

    pub fn add(&self, rhs: &Tensor<S>) -> Tensor<S> {
        self.binary(rhs, |a, b| a + b, |_, _| S::one(), |_, _| S::one())
    }

    pub fn sub(&self, rhs: &Tensor<S>) -> Tensor<S> {
        self.binary(rhs, |a, b| a - b, |_, _| S::one(), |_, _| -S::one())
    }

    pub fn mul(&self, rhs: &Tensor<S>) -> Tensor<S> {
        self.binary(rhs, |a, b| a * b, |_, b| b, |a, _| a)
    }

    /// Division with the denominator clamped away from zero.
    pub fn div(&self, rhs: &Tensor<S>) -> Tensor<S> {
        self.binary(
            rhs,
            |a, b| a / clamp_den(b),
            |_, b| S::one() / clamp_den(b),
            |a, b| {
                let d = clamp_den(b);
                -a / (d * d)
            },
        )
    }

    /// Elementwise a^b. The log in the exponent gradient clamps its input.
    pub fn pow(&self, rhs: &Tensor<S>) -> Tensor<S> {
        self.binary(
            rhs,
            |a, b| a.powf(b),
            |a, b| b * a.powf(b - S::one()),
            |a, b| a.powf(b) * a.max(S::log_eps()).ln(),
        )
    }

    fn unary(&self, f: impl Fn(S) -> S, dfdx: impl Fn(S, S) -> S + 'static) -> Tensor<S> {
        let x = self.to_vec();
        let data: Vec<S> = x.iter().map(|&v| f(v)).collect();
        let y = data.clone();
        let input = self.clone();
        Tensor::from_op(self.shape().to_vec(), data, &[self], move |g, sink| {
            let xv = input.inner.data.borrow();
            let contrib: Vec<S> = g
                .iter()
                .zip(xv.iter().zip(&y))
                .map(|(&gi, (&xi, &yi))| gi * dfdx(xi, yi))
                .collect();
            drop(xv);
            sink.accumulate(&input, &contrib);
        })
    }

    pub fn neg(&self) -> Tensor<S> {
        self.unary(|x| -x, |_, _| -S::one())
    }

    pub fn exp(&self) -> Tensor<S> {
        self.unary(|x| x.exp(), |_, y| y)
    }

    /// Natural log of max(x, log_eps).
    pub fn ln(&self) -> Tensor<S> {
        self.unary(
            |x| x.max(S::log_eps()).ln(),
            |x, _| S::one() / x.max(S::log_eps()),
        )
    }

    pub fn abs(&self) -> Tensor<S> {
        self.unary(
            |x| x.abs(),
            |x, _| {
                if x > S::zero() {
                    S::one()
                } else if x < S::zero() {
                    -S::one()
                } else {
                    S::zero()
                }
            },
        )
    }

    pub fn relu(&self) -> Tensor<S> {
        self.unary(
            |x| x.max(S::zero()),
            |x, _| if x > S::zero() { S::one() } else { S::zero() },
        )
    }

    pub fn leaky_relu(&self, slope: f64) -> Tensor<S> {
        let k: S = c(slope);
        self.unary(
            move |x| if x > S::zero() { x } else { k * x },
            move |x, _| if x > S::zero() { S::one() } else { k },
        )
    }

    pub fn sigmoid(&self) -> Tensor<S> {
        self.unary(sigmoid_stable, |_, y| y * (S::one() - y))
    }

    pub fn softplus(&self) -> Tensor<S> {
        self.unary(
            |x| x.max(S::zero()) + (-x.abs()).exp().ln_1p(),
            |x, _| sigmoid_stable(x),
        )
    }

    pub fn tanh(&self) -> Tensor<S> {
        self.unary(|x| x.tanh(), |_, y| S::one() - y * y)
    }

    /// Clamp values to [lo, hi]; gradient passes only inside the band.
    pub fn clamp(&self, lo: S, hi: S) -> Tensor<S> {
        self.unary(
            move |x| x.max(lo).min(hi),
            move |x, _| {
                if x >= lo && x <= hi {
                    S::one()
                } else {
                    S::zero()
                }
            },
        )
    }

    pub fn add_scalar(&self, k: S) -> Tensor<S> {
        self.unary(move |x| x + k, |_, _| S::one())
    }

    pub fn sub_scalar(&self, k: S) -> Tensor<S> {
        self.add_scalar(-k)
    }

    pub fn mul_scalar(&self, k: S) -> Tensor<S> {
        self.unary(move |x| x * k, move |_, _| k)
    }

    pub fn div_scalar(&self, k: S) -> Tensor<S> {
        let d = clamp_den(k);
        self.unary(move |x| x / d, move |_, _| S::one() / d)
    }

    pub fn powf(&self, p: S) -> Tensor<S> {
        self.unary(move |x| x.powf(p), move |x, _| p * x.powf(p - S::one()))
    }

    pub fn square(&self) -> Tensor<S> {
        self.unary(|x| x * x, |x, _| x + x)
    }

    pub fn sqrt(&self) -> Tensor<S> {
        self.unary(
            |x| x.sqrt(),
            |x, y| {
                let _ = x;
                S::one() / (y + y).max(S::log_eps())
            },
        )
    }

    // ---- structural ops ----

    pub fn reshape(&self, shape: &[usize]) -> Tensor<S> {
        assert_eq!(
            self.len(),
            shape.iter().product::<usize>(),
            "reshape {:?} -> {:?} changes element count",
            self.shape(),
            shape
        );
        let input = self.clone();
        Tensor::from_op(shape.to_vec(), self.to_vec(), &[self], move |g, sink| {
            sink.accumulate(&input, g);
        })
    }

    /// Expand to `shape` under broadcasting rules; gradient sums back.
    pub fn broadcast_to(&self, shape: &[usize]) -> Tensor<S> {
        let out_shape = broadcast_shape(self.shape(), shape);
        assert_eq!(out_shape, shape, "cannot broadcast {:?} to {:?}", self.shape(), shape);
        let n: usize = shape.iter().product();
        let mut data = vec![S::zero(); n];
        {
            let src = self.inner.data.borrow();
            broadcast_walk(shape, self.shape(), self.shape(), |i, ai, _| {
                data[i] = src[ai];
            });
        }
        let input = self.clone();
        let out_shape = shape.to_vec();
        Tensor::from_op(shape.to_vec(), data, &[self], move |g, sink| {
            if let Some(buf) = sink.buf_mut(&input) {
                broadcast_walk(&out_shape, input.shape(), input.shape(), |i, ai, _| {
                    buf[ai] += g[i];
                });
            }
        })
    }

    /// Contiguous slice `start..start+len` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Tensor<S> {
        let shape = self.shape();
        assert!(axis < shape.len(), "narrow axis {axis} out of range for {shape:?}");
        assert!(
            start + len <= shape[axis],
            "narrow {}..{} exceeds extent {} on axis {axis}",
            start,
            start + len,
            shape[axis]
        );
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let extent = shape[axis];
        let mut out_shape = shape.to_vec();
        out_shape[axis] = len;

        let src = self.inner.data.borrow();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * extent * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        drop(src);

        let input = self.clone();
        Tensor::from_op(out_shape, data, &[self], move |g, sink| {
            if let Some(buf) = sink.buf_mut(&input) {
                for o in 0..outer {
                    let dst = o * extent * inner + start * inner;
                    let srcb = o * len * inner;
                    for i in 0..len * inner {
                        buf[dst + i] += g[srcb + i];
                    }
                }
            }
        })
    }

    /// Concatenate tensors along `axis`. All other extents must agree.
    pub fn concat(parts: &[&Tensor<S>], axis: usize) -> Tensor<S> {
        assert!(!parts.is_empty(), "concat of zero tensors");
        let rank = parts[0].rank();
        assert!(axis < rank, "concat axis {axis} out of range");
        let mut out_shape = parts[0].shape().to_vec();
        out_shape[axis] = parts.iter().map(|p| p.shape()[axis]).sum();
        for p in parts {
            assert_eq!(p.rank(), rank, "concat rank mismatch");
            for d in 0..rank {
                if d != axis {
                    assert_eq!(p.shape()[d], out_shape[d], "concat extent mismatch on axis {d}");
                }
            }
        }
        let outer: usize = out_shape[..axis].iter().product();
        let inner: usize = out_shape[axis + 1..].iter().product();
        let total_axis = out_shape[axis];

        let mut data = vec![S::zero(); outer * total_axis * inner];
        let mut offset = 0;
        for p in parts {
            let pa = p.shape()[axis];
            let src = p.inner.data.borrow();
            for o in 0..outer {
                let dst = (o * total_axis + offset) * inner;
                let sb = o * pa * inner;
                data[dst..dst + pa * inner].copy_from_slice(&src[sb..sb + pa * inner]);
            }
            offset += pa;
        }

        let handles: Vec<Tensor<S>> = parts.iter().map(|p| (*p).clone()).collect();
        Tensor::from_op(out_shape, data, parts, move |g, sink| {
            let mut offset = 0;
            for p in &handles {
                let pa = p.shape()[axis];
                if let Some(buf) = sink.buf_mut(p) {
                    for o in 0..outer {
                        let src = (o * total_axis + offset) * inner;
                        let db = o * pa * inner;
                        for i in 0..pa * inner {
                            buf[db + i] += g[src + i];
                        }
                    }
                }
                offset += pa;
            }
        })
    }

    /// 2-D transpose.
    pub fn transpose2(&self) -> Tensor<S> {
        assert_eq!(self.rank(), 2, "transpose2 needs a matrix, got {:?}", self.shape());
        let (r, cdim) = (self.shape()[0], self.shape()[1]);
        let src = self.inner.data.borrow();
        let mut data = vec![S::zero(); r * cdim];
        for i in 0..r {
            for j in 0..cdim {
                data[j * r + i] = src[i * cdim + j];
            }
        }
        drop(src);
        let input = self.clone();
        Tensor::from_op(vec![cdim, r], data, &[self], move |g, sink| {
            if let Some(buf) = sink.buf_mut(&input) {
                for i in 0..r {
                    for j in 0..cdim {
                        buf[i * cdim + j] += g[j * r + i];
                    }
                }
            }
        })
    }
}

#[inline]
fn sigmoid_stable<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

macro_rules! tensor_binop {
    ($trait:ident, $method:ident, $func:ident) => {
        impl<'a, S: Scalar> std::ops::$trait<&'a Tensor<S>> for &'a Tensor<S> {
            type Output = Tensor<S>;
            fn $method(self, rhs: &'a Tensor<S>) -> Tensor<S> {
                Tensor::$func(self, rhs)
            }
        }
    };
}

tensor_binop!(Add, add, add);
tensor_binop!(Sub, sub, sub);
tensor_binop!(Mul, mul, mul);
tensor_binop!(Div, div, div);
