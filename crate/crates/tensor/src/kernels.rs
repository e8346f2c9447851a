//! Forward and backward numerical kernels on raw tensors.
//!
//! All image tensors are NCHW. Convolutions lower to a single GEMM over an
//! im2col buffer spanning the whole batch.

use crate::float::{gemm, Float, Trans};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    /// # Panics
    /// If the input and kernel shapes are incompatible.
    pub fn new(x: &[usize], w: &[usize], stride: usize, pad: usize) -> Self {
        assert_eq!(x.len(), 4, "conv2d input must be NCHW, got {x:?}");
        assert_eq!(w.len(), 4, "conv2d kernel must be OCKK, got {w:?}");
        assert_eq!(
            x[1], w[1],
            "conv2d channel mismatch: input {x:?}, kernel {w:?}"
        );
        assert!(stride >= 1);
        let (h, wd, kh, kw) = (x[2], x[3], w[2], w[3]);
        assert!(
            h + 2 * pad >= kh && wd + 2 * pad >= kw,
            "conv2d kernel larger than padded input"
        );
        Self {
            n: x[0],
            c: x[1],
            h,
            w: wd,
            o: w[0],
            kh,
            kw,
            stride,
            pad,
            ho: (h + 2 * pad - kh) / stride + 1,
            wo: (wd + 2 * pad - kw) / stride + 1,
        }
    }

    fn ckk(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn np(&self) -> usize {
        self.n * self.ho * self.wo
    }

    /// Output columns `[lo, hi)` whose input column for kernel offset `kj` is in range.
    fn valid_cols(&self, kj: usize) -> (usize, usize) {
        valid_range(self.wo, self.w, self.stride, self.pad, kj)
    }

    fn valid_rows(&self, ki: usize) -> (usize, usize) {
        valid_range(self.ho, self.h, self.stride, self.pad, ki)
    }
}

fn valid_range(out: usize, inp: usize, stride: usize, pad: usize, k: usize) -> (usize, usize) {
    // o * stride + k - pad in [0, inp)
    let lo = if k >= pad {
        0
    } else {
        (pad - k).div_ceil(stride)
    };
    let hi = if inp + pad > k {
        ((inp + pad - k - 1) / stride + 1).min(out)
    } else {
        0
    };
    (lo.min(hi), hi)
}

fn im2col<T: Float>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let p = g.ho * g.wo;
    let np = g.np();
    let mut cols = vec![T::zero(); g.ckk() * np];
    for ci in 0..g.c {
        for ki in 0..g.kh {
            let (ylo, yhi) = g.valid_rows(ki);
            for kj in 0..g.kw {
                let (xlo, xhi) = g.valid_cols(kj);
                let row = (ci * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * np..(row + 1) * np];
                for ni in 0..g.n {
                    let src = &x[(ni * g.c + ci) * g.h * g.w..(ni * g.c + ci + 1) * g.h * g.w];
                    for oy in ylo..yhi {
                        let iy = oy * g.stride + ki - g.pad;
                        let drow = &mut dst[ni * p + oy * g.wo..ni * p + (oy + 1) * g.wo];
                        let srow = &src[iy * g.w..(iy + 1) * g.w];
                        if g.stride == 1 {
                            let ix0 = xlo + kj - g.pad;
                            drow[xlo..xhi].copy_from_slice(&srow[ix0..ix0 + (xhi - xlo)]);
                        } else {
                            for ox in xlo..xhi {
                                drow[ox] = srow[ox * g.stride + kj - g.pad];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Float>(cols: &[T], g: &ConvGeom) -> Vec<T> {
    let p = g.ho * g.wo;
    let np = g.np();
    let mut x = vec![T::zero(); g.n * g.c * g.h * g.w];
    for ci in 0..g.c {
        for ki in 0..g.kh {
            let (ylo, yhi) = g.valid_rows(ki);
            for kj in 0..g.kw {
                let (xlo, xhi) = g.valid_cols(kj);
                let row = (ci * g.kh + ki) * g.kw + kj;
                let src = &cols[row * np..(row + 1) * np];
                for ni in 0..g.n {
                    let dst = &mut x[(ni * g.c + ci) * g.h * g.w..(ni * g.c + ci + 1) * g.h * g.w];
                    for oy in ylo..yhi {
                        let iy = oy * g.stride + ki - g.pad;
                        let srow = &src[ni * p + oy * g.wo..ni * p + (oy + 1) * g.wo];
                        let drow = &mut dst[iy * g.w..(iy + 1) * g.w];
                        for ox in xlo..xhi {
                            drow[ox * g.stride + kj - g.pad] += srow[ox];
                        }
                    }
                }
            }
        }
    }
    x
}

/// 2-D cross-correlation with zero padding.
pub fn conv2d<T: Float>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Tensor<T> {
    let g = ConvGeom::new(x.shape(), w.shape(), stride, pad);
    if let Some(b) = b {
        assert_eq!(b.shape(), [g.o], "conv2d bias shape");
    }
    let cols = im2col(x.data(), &g);
    let np = g.np();
    let mut out_mat = vec![T::zero(); g.o * np];
    gemm(
        g.o,
        g.ckk(),
        np,
        w.data(),
        Trans::No,
        &cols,
        Trans::No,
        T::zero(),
        &mut out_mat,
    );
    let p = g.ho * g.wo;
    let mut out = vec![T::zero(); g.n * g.o * p];
    for oi in 0..g.o {
        let bias = b.map_or(T::zero(), |b| b.data()[oi]);
        for ni in 0..g.n {
            let src = &out_mat[oi * np + ni * p..oi * np + (ni + 1) * p];
            let dst = &mut out[(ni * g.o + oi) * p..(ni * g.o + oi + 1) * p];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = s + bias;
            }
        }
    }
    Tensor::new([g.n, g.o, g.ho, g.wo], out).expect("conv2d output shape")
}

/// Gradients of [`conv2d`]: `(d_input, d_kernel, d_bias)`, each only when requested.
#[allow(clippy::type_complexity)]
pub fn conv2d_backward<T: Float>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dout: &Tensor<T>,
    stride: usize,
    pad: usize,
    need: (bool, bool, bool),
) -> (Option<Tensor<T>>, Option<Tensor<T>>, Option<Tensor<T>>) {
    let g = ConvGeom::new(x.shape(), w.shape(), stride, pad);
    assert_eq!(dout.shape(), [g.n, g.o, g.ho, g.wo], "conv2d grad shape");
    let p = g.ho * g.wo;
    let np = g.np();
    let mut d_mat = vec![T::zero(); g.o * np];
    for ni in 0..g.n {
        for oi in 0..g.o {
            let src = &dout.data()[(ni * g.o + oi) * p..(ni * g.o + oi + 1) * p];
            d_mat[oi * np + ni * p..oi * np + (ni + 1) * p].copy_from_slice(src);
        }
    }
    let (need_x, need_w, need_b) = need;
    let dw = need_w.then(|| {
        let cols = im2col(x.data(), &g);
        let mut dw = vec![T::zero(); g.o * g.ckk()];
        gemm(
            g.o,
            np,
            g.ckk(),
            &d_mat,
            Trans::No,
            &cols,
            Trans::Yes,
            T::zero(),
            &mut dw,
        );
        Tensor::new(w.shape().to_vec(), dw).expect("kernel grad shape")
    });
    let db = need_b.then(|| {
        let sums = (0..g.o)
            .map(|oi| d_mat[oi * np..(oi + 1) * np].iter().copied().sum())
            .collect();
        Tensor::new([g.o], sums).expect("bias grad shape")
    });
    let dx = need_x.then(|| {
        let mut dcols = vec![T::zero(); g.ckk() * np];
        gemm(
            g.ckk(),
            g.o,
            np,
            w.data(),
            Trans::Yes,
            &d_mat,
            Trans::No,
            T::zero(),
            &mut dcols,
        );
        Tensor::new(x.shape().to_vec(), col2im(&dcols, &g)).expect("input grad shape")
    });
    (dx, dw, db)
}

/// Nearest-neighbour spatial upsampling by an integer factor.
pub fn upsample_nearest<T: Float>(x: &Tensor<T>, factor: usize) -> Tensor<T> {
    let (n, c, h, w) = x.dims4();
    let (ho, wo) = (h * factor, w * factor);
    let mut out = Vec::with_capacity(n * c * ho * wo);
    for plane in x.data().chunks_exact(h * w) {
        for oy in 0..ho {
            let row = &plane[(oy / factor) * w..(oy / factor + 1) * w];
            for ox in 0..wo {
                out.push(row[ox / factor]);
            }
        }
    }
    Tensor::new([n, c, ho, wo], out).expect("upsample shape")
}

pub fn upsample_nearest_backward<T: Float>(dout: &Tensor<T>, factor: usize) -> Tensor<T> {
    let (n, c, ho, wo) = dout.dims4();
    let (h, w) = (ho / factor, wo / factor);
    let mut dx = vec![T::zero(); n * c * h * w];
    for (pi, plane) in dout.data().chunks_exact(ho * wo).enumerate() {
        let dst = &mut dx[pi * h * w..(pi + 1) * h * w];
        for oy in 0..ho {
            for ox in 0..wo {
                dst[(oy / factor) * w + ox / factor] += plane[oy * wo + ox];
            }
        }
    }
    Tensor::new([n, c, h, w], dx).expect("upsample grad shape")
}

/// Capsule squash applied independently to each group of `group` channels at
/// every spatial position: `v = s * r / (1 + r^2)` with `r = sqrt(|s|^2 + eps)`.
pub fn squash<T: Float>(x: &Tensor<T>, group: usize, eps: T) -> Tensor<T> {
    let (n, c, h, w) = x.dims4();
    assert!(
        group > 0 && c % group == 0,
        "squash group must divide channels"
    );
    let hw = h * w;
    let mut out = vec![T::zero(); x.numel()];
    let data = x.data();
    for ni in 0..n {
        for gi in 0..c / group {
            let base = (ni * c + gi * group) * hw;
            for p in 0..hw {
                let mut sq = T::zero();
                for k in 0..group {
                    let s = data[base + k * hw + p];
                    sq += s * s;
                }
                let r2 = sq + eps;
                let f = r2.sqrt() / (T::one() + r2);
                for k in 0..group {
                    out[base + k * hw + p] = data[base + k * hw + p] * f;
                }
            }
        }
    }
    Tensor::new(x.shape().to_vec(), out).expect("squash shape")
}

pub fn squash_backward<T: Float>(
    x: &Tensor<T>,
    dout: &Tensor<T>,
    group: usize,
    eps: T,
) -> Tensor<T> {
    let (n, c, h, w) = x.dims4();
    let hw = h * w;
    let mut dx = vec![T::zero(); x.numel()];
    let (data, dv) = (x.data(), dout.data());
    let one = T::one();
    for ni in 0..n {
        for gi in 0..c / group {
            let base = (ni * c + gi * group) * hw;
            for p in 0..hw {
                let mut sq = T::zero();
                let mut dot = T::zero();
                for k in 0..group {
                    let i = base + k * hw + p;
                    sq += data[i] * data[i];
                    dot += data[i] * dv[i];
                }
                let r2 = sq + eps;
                let r = r2.sqrt();
                let denom = one + r2;
                let f = r / denom;
                // f'(r) / r with f(r) = r / (1 + r^2)
                let fp_over_r = (one - r2) / (denom * denom * r);
                for k in 0..group {
                    let i = base + k * hw + p;
                    dx[i] = f * dv[i] + data[i] * fp_over_r * dot;
                }
            }
        }
    }
    Tensor::new(x.shape().to_vec(), dx).expect("squash grad shape")
}

/// Label-controlled capsule routing.
///
/// `words` is `(B, N*K, H, W)` holding `N` capsule maps of `K` channels;
/// `selection` is `(B, C, N)`. Output `(B, C*K, H, W)` where capsule `c` is
/// `sum_n selection[b, c, n] * words[b, n]`. Zero coefficients are skipped,
/// so a one-hot row copies the selected map exactly.
pub fn route<T: Float>(words: &Tensor<T>, selection: &Tensor<T>, k: usize) -> Tensor<T> {
    let (b, nk, h, w) = words.dims4();
    assert_eq!(selection.rank(), 3, "selection must be (B, C, N)");
    let (sb, nc, nw) = (
        selection.shape()[0],
        selection.shape()[1],
        selection.shape()[2],
    );
    assert_eq!(sb, b, "route batch mismatch");
    assert_eq!(nw * k, nk, "route word count mismatch");
    let map = k * h * w;
    let mut out = vec![T::zero(); b * nc * map];
    for bi in 0..b {
        for ci in 0..nc {
            let dst = &mut out[(bi * nc + ci) * map..(bi * nc + ci + 1) * map];
            for ni in 0..nw {
                let coef = selection.data()[(bi * nc + ci) * nw + ni];
                if coef == T::zero() {
                    continue;
                }
                let src = &words.data()[(bi * nw + ni) * map..(bi * nw + ni + 1) * map];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += coef * s;
                }
            }
        }
    }
    Tensor::new([b, nc * k, h, w], out).expect("route shape")
}

pub fn route_backward<T: Float>(
    words_shape: &[usize],
    selection: &Tensor<T>,
    dout: &Tensor<T>,
    k: usize,
) -> Tensor<T> {
    let (b, nk, h, w) = (
        words_shape[0],
        words_shape[1],
        words_shape[2],
        words_shape[3],
    );
    let (nc, nw) = (selection.shape()[1], selection.shape()[2]);
    let map = k * h * w;
    let mut dw = vec![T::zero(); b * nk * h * w];
    for bi in 0..b {
        for ci in 0..nc {
            let src = &dout.data()[(bi * nc + ci) * map..(bi * nc + ci + 1) * map];
            for ni in 0..nw {
                let coef = selection.data()[(bi * nc + ci) * nw + ni];
                if coef == T::zero() {
                    continue;
                }
                let dst = &mut dw[(bi * nw + ni) * map..(bi * nw + ni + 1) * map];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += coef * s;
                }
            }
        }
    }
    Tensor::new(words_shape.to_vec(), dw).expect("route grad shape")
}

pub fn sigmoid<T: Float>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
