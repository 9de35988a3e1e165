//! 2-D convolution and its transpose (cross-correlation convention, no
//! kernel flip), via im2col + GEMM. `conv_transpose2d` is the exact linear
//! adjoint of `conv2d` for the same geometry: its forward pass is the
//! backward-input pass of `conv2d`.
//!
//! Weight layouts: conv `[Cout, Cin, kh, kw]`, transpose `[Cin, Cout, kh, kw]`,
//! so the same weight array serves both directions of the adjoint pair.

use super::matmul::{gemm, gemm_tn, transpose};
use super::{GradSink, Tensor};
use crate::scalar::Scalar;

#[derive(Clone, Copy)]
struct Geom {
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geom {
    fn k(&self) -> usize {
        self.cin * self.kh * self.kw
    }
    fn n(&self) -> usize {
        self.oh * self.ow
    }
}

/// Unfold one image [cin, h, w] into columns [cin·kh·kw, oh·ow].
fn im2col<S: Scalar>(x: &[S], g: &Geom, col: &mut [S]) {
    debug_assert_eq!(col.len(), g.k() * g.n());
    let mut row = 0;
    for ci in 0..g.cin {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let dst = &mut col[row * g.n()..(row + 1) * g.n()];
                row += 1;
                let mut idx = 0;
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        for _ in 0..g.ow {
                            dst[idx] = S::zero();
                            idx += 1;
                        }
                        continue;
                    }
                    let src_row = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        dst[idx] = if ix < 0 || ix >= g.w as isize {
                            S::zero()
                        } else {
                            src_row[ix as usize]
                        };
                        idx += 1;
                    }
                }
            }
        }
    }
}

/// Fold columns back into an image, accumulating overlaps (adjoint of im2col).
fn col2im<S: Scalar>(col: &[S], g: &Geom, x: &mut [S]) {
    debug_assert_eq!(col.len(), g.k() * g.n());
    debug_assert_eq!(x.len(), g.cin * g.h * g.w);
    let mut row = 0;
    for ci in 0..g.cin {
        let plane = &mut x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let src = &col[row * g.n()..(row + 1) * g.n()];
                row += 1;
                let mut idx = 0;
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        idx += g.ow;
                        continue;
                    }
                    let dst_row = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst_row[ix as usize] += src[idx];
                        }
                        idx += 1;
                    }
                }
            }
        }
    }
}

fn conv_out_extent(input: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

impl<S: Scalar> Tensor<S> {
    /// Cross-correlation of `x: [B, Cin, H, W]` with `w: [Cout, Cin, kh, kw]`.
    pub fn conv2d(
        &self,
        weight: &Tensor<S>,
        bias: Option<&Tensor<S>>,
        stride: usize,
        padding: usize,
    ) -> Tensor<S> {
        assert_eq!(self.rank(), 4, "conv2d input must be [B,C,H,W], got {:?}", self.shape());
        assert_eq!(weight.rank(), 4, "conv2d weight must be [Cout,Cin,kh,kw]");
        assert!(stride >= 1, "conv2d stride must be >= 1");
        let (b, cin, h, w) = (
            self.shape()[0],
            self.shape()[1],
            self.shape()[2],
            self.shape()[3],
        );
        let (cout, wcin, kh, kw) = (
            weight.shape()[0],
            weight.shape()[1],
            weight.shape()[2],
            weight.shape()[3],
        );
        assert_eq!(cin, wcin, "conv2d channel mismatch: input {cin}, weight {wcin}");
        let oh = conv_out_extent(h, kh, stride, padding);
        let ow = conv_out_extent(w, kw, stride, padding);
        let (oh, ow) = match (oh, ow) {
            (Some(a), Some(b)) if a >= 1 && b >= 1 => (a, b),
            _ => panic!(
                "conv2d output extent is non-positive for input {h}x{w}, kernel {kh}x{kw}, stride {stride}, pad {padding}"
            ),
        };
        if let Some(bt) = bias {
            assert_eq!(bt.shape(), &[cout], "conv2d bias must be [Cout]");
        }
        let geom = Geom { cin, h, w, kh, kw, stride, pad: padding, oh, ow };
        let (k, n) = (geom.k(), geom.n());

        let mut out = vec![S::zero(); b * cout * n];
        {
            let x = self.inner.data.borrow();
            let wd = weight.inner.data.borrow();
            let bd = bias.map(|t| t.to_vec());
            let mut col = vec![S::zero(); k * n];
            for bi in 0..b {
                im2col(&x[bi * cin * h * w..(bi + 1) * cin * h * w], &geom, &mut col);
                let y = &mut out[bi * cout * n..(bi + 1) * cout * n];
                gemm(cout, k, n, &wd, &col, y);
                if let Some(bd) = &bd {
                    for co in 0..cout {
                        let bv = bd[co];
                        for v in &mut y[co * n..(co + 1) * n] {
                            *v += bv;
                        }
                    }
                }
            }
        }

        let x_h = self.clone();
        let w_h = weight.clone();
        let bias_h = bias.cloned();
        let mut inputs: Vec<&Tensor<S>> = vec![self, weight];
        if let Some(bt) = bias {
            inputs.push(bt);
        }
        Tensor::from_op(vec![b, cout, oh, ow], out, &inputs, move |g, sink: &mut GradSink<S>| {
            let wd = w_h.inner.data.borrow();
            let xd = x_h.inner.data.borrow();
            if x_h.tracks_grad() {
                let mut col_g = vec![S::zero(); k * n];
                if let Some(buf) = sink.buf_mut(&x_h) {
                    for bi in 0..b {
                        col_g.iter_mut().for_each(|v| *v = S::zero());
                        gemm_tn(cout, k, n, &wd, &g[bi * cout * n..(bi + 1) * cout * n], &mut col_g);
                        col2im(&col_g, &geom, &mut buf[bi * cin * h * w..(bi + 1) * cin * h * w]);
                    }
                }
            }
            if w_h.tracks_grad() {
                let mut col = vec![S::zero(); k * n];
                let mut gw = vec![S::zero(); cout * k];
                for bi in 0..b {
                    im2col(&xd[bi * cin * h * w..(bi + 1) * cin * h * w], &geom, &mut col);
                    let col_t = transpose(k, n, &col);
                    gemm(cout, n, k, &g[bi * cout * n..(bi + 1) * cout * n], &col_t, &mut gw);
                }
                sink.accumulate(&w_h, &gw);
            }
            if let Some(bias_t) = &bias_h {
                if bias_t.tracks_grad() {
                    let mut gb = vec![S::zero(); cout];
                    for bi in 0..b {
                        for co in 0..cout {
                            let base = (bi * cout + co) * n;
                            for &gv in &g[base..base + n] {
                                gb[co] += gv;
                            }
                        }
                    }
                    sink.accumulate(bias_t, &gb);
                }
            }
        })
    }

    /// Transposed convolution of `x: [B, Cin, H, W]` with
    /// `w: [Cin, Cout, kh, kw]`; output extent `(H-1)·stride - 2·pad + kh`.
    pub fn conv_transpose2d(
        &self,
        weight: &Tensor<S>,
        bias: Option<&Tensor<S>>,
        stride: usize,
        padding: usize,
    ) -> Tensor<S> {
        assert_eq!(self.rank(), 4, "conv_transpose2d input must be [B,C,H,W]");
        assert_eq!(weight.rank(), 4, "conv_transpose2d weight must be [Cin,Cout,kh,kw]");
        assert!(stride >= 1);
        let (b, cin, hs, ws) = (
            self.shape()[0],
            self.shape()[1],
            self.shape()[2],
            self.shape()[3],
        );
        let (wcin, cout, kh, kw) = (
            weight.shape()[0],
            weight.shape()[1],
            weight.shape()[2],
            weight.shape()[3],
        );
        assert_eq!(cin, wcin, "conv_transpose2d channel mismatch: input {cin}, weight {wcin}");
        let hb = ((hs - 1) * stride + kh).checked_sub(2 * padding);
        let wb = ((ws - 1) * stride + kw).checked_sub(2 * padding);
        let (hb, wb) = match (hb, wb) {
            (Some(a), Some(bb)) if a >= 1 && bb >= 1 => (a, bb),
            _ => panic!(
                "conv_transpose2d output extent is non-positive for input {hs}x{ws}, kernel {kh}x{kw}, stride {stride}, pad {padding}"
            ),
        };
        if let Some(bt) = bias {
            assert_eq!(bt.shape(), &[cout], "conv_transpose2d bias must be [Cout]");
        }
        // The matching forward-conv geometry: conv(out) -> input.
        let geom = Geom {
            cin: cout,
            h: hb,
            w: wb,
            kh,
            kw,
            stride,
            pad: padding,
            oh: hs,
            ow: ws,
        };
        let (k, n) = (geom.k(), geom.n()); // k = cout*kh*kw, n = hs*ws

        let mut out = vec![S::zero(); b * cout * hb * wb];
        {
            let x = self.inner.data.borrow();
            let wd = weight.inner.data.borrow();
            let bd = bias.map(|t| t.to_vec());
            let mut col = vec![S::zero(); k * n];
            for bi in 0..b {
                col.iter_mut().for_each(|v| *v = S::zero());
                // col = Wᵀ · x  with W [cin, k]
                gemm_tn(cin, k, n, &wd, &x[bi * cin * n..(bi + 1) * cin * n], &mut col);
                let y = &mut out[bi * cout * hb * wb..(bi + 1) * cout * hb * wb];
                col2im(&col, &geom, y);
                if let Some(bd) = &bd {
                    for co in 0..cout {
                        let bv = bd[co];
                        for v in &mut y[co * hb * wb..(co + 1) * hb * wb] {
                            *v += bv;
                        }
                    }
                }
            }
        }

        let x_h = self.clone();
        let w_h = weight.clone();
        let bias_h = bias.cloned();
        let mut inputs: Vec<&Tensor<S>> = vec![self, weight];
        if let Some(bt) = bias {
            inputs.push(bt);
        }
        Tensor::from_op(vec![b, cout, hb, wb], out, &inputs, move |g, sink: &mut GradSink<S>| {
            let wd = w_h.inner.data.borrow();
            let xd = x_h.inner.data.borrow();
            let mut col_g = vec![S::zero(); k * n];
            if x_h.tracks_grad() {
                if let Some(buf) = sink.buf_mut(&x_h) {
                    // grad_x = conv(g, W): unfold g, multiply.
                    for bi in 0..b {
                        im2col(&g[bi * cout * hb * wb..(bi + 1) * cout * hb * wb], &geom, &mut col_g);
                        gemm(cin, k, n, &wd, &col_g, &mut buf[bi * cin * n..(bi + 1) * cin * n]);
                    }
                }
            }
            if w_h.tracks_grad() {
                let mut gw = vec![S::zero(); cin * k];
                for bi in 0..b {
                    im2col(&g[bi * cout * hb * wb..(bi + 1) * cout * hb * wb], &geom, &mut col_g);
                    let col_t = transpose(k, n, &col_g);
                    gemm(cin, n, k, &xd[bi * cin * n..(bi + 1) * cin * n], &col_t, &mut gw);
                }
                sink.accumulate(&w_h, &gw);
            }
            if let Some(bias_t) = &bias_h {
                if bias_t.tracks_grad() {
                    let plane = hb * wb;
                    let mut gb = vec![S::zero(); cout];
                    for bi in 0..b {
                        for co in 0..cout {
                            let base = (bi * cout + co) * plane;
                            for &gv in &g[base..base + plane] {
                                gb[co] += gv;
                            }
                        }
                    }
                    sink.accumulate(bias_t, &gb);
                }
            }
        })
    }
}
