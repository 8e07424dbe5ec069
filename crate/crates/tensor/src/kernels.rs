//! Forward/backward kernels on raw row-major buffers.

use crate::real::Real;

/// Geometry of one batched 2-D convolution.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub in_c: usize,
    pub h: usize,
    pub w: usize,
    pub out_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    fn patch(&self) -> usize {
        self.in_c * self.kh * self.kw
    }

    fn plane(&self) -> usize {
        self.ho * self.wo
    }

    fn cols(&self) -> usize {
        self.batch * self.plane()
    }
}

/// Unfolds the batch into a `[C·kh·kw, batch·Ho·Wo]` matrix.
pub(crate) fn im2col<T: Real>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let ncols = g.cols();
    let plane = g.plane();
    let mut cols = vec![T::zero(); g.patch() * ncols];
    for m in 0..g.batch {
        for c in 0..g.in_c {
            let img = &x[(m * g.in_c + c) * g.h * g.w..][..g.h * g.w];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let row = (c * g.kh + ky) * g.kw + kx;
                    let dst = &mut cols[row * ncols + m * plane..][..plane];
                    for oy in 0..g.ho {
                        let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let src_row = &img[iy as usize * g.w..][..g.w];
                        for ox in 0..g.wo {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.w as isize {
                                dst[oy * g.wo + ox] = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the input.
pub(crate) fn col2im<T: Real>(cols: &[T], g: &ConvGeom) -> Vec<T> {
    let ncols = g.cols();
    let plane = g.plane();
    let mut dx = vec![T::zero(); g.batch * g.in_c * g.h * g.w];
    for m in 0..g.batch {
        for c in 0..g.in_c {
            let img = &mut dx[(m * g.in_c + c) * g.h * g.w..][..g.h * g.w];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let row = (c * g.kh + ky) * g.kw + kx;
                    let src = &cols[row * ncols + m * plane..][..plane];
                    for oy in 0..g.ho {
                        let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let dst_row = &mut img[iy as usize * g.w..][..g.w];
                        for ox in 0..g.wo {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.w as isize {
                                dst_row[ix as usize] += src[oy * g.wo + ox];
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Returns the NCHW output and the unfolded input (kept for backward).
pub(crate) fn conv2d_forward<T: Real>(
    x: &[T],
    weight: &[T],
    bias: Option<&[T]>,
    g: &ConvGeom,
) -> (Vec<T>, Vec<T>) {
    let cols = im2col(x, g);
    let ncols = g.cols();
    let plane = g.plane();
    let mut y = vec![T::zero(); g.out_c * ncols];
    T::gemm(
        g.out_c,
        g.patch(),
        ncols,
        T::one(),
        weight,
        g.patch() as isize,
        1,
        &cols,
        ncols as isize,
        1,
        T::zero(),
        &mut y,
        ncols as isize,
        1,
    );
    let mut out = vec![T::zero(); g.batch * g.out_c * plane];
    for o in 0..g.out_c {
        let b = bias.map_or(T::zero(), |b| b[o]);
        for m in 0..g.batch {
            let src = &y[o * ncols + m * plane..][..plane];
            let dst = &mut out[(m * g.out_c + o) * plane..][..plane];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = s + b;
            }
        }
    }
    (out, cols)
}

pub(crate) struct ConvGrads<T> {
    pub input: Option<Vec<T>>,
    pub weight: Option<Vec<T>>,
    pub bias: Option<Vec<T>>,
}

pub(crate) fn conv2d_backward<T: Real>(
    dout: &[T],
    weight: &[T],
    cols: &[T],
    g: &ConvGeom,
    need: (bool, bool, bool),
) -> ConvGrads<T> {
    let ncols = g.cols();
    let plane = g.plane();
    let patch = g.patch();
    // [M, O, P] -> [O, M·P]
    let mut dy = vec![T::zero(); g.out_c * ncols];
    for m in 0..g.batch {
        for o in 0..g.out_c {
            dy[o * ncols + m * plane..][..plane]
                .copy_from_slice(&dout[(m * g.out_c + o) * plane..][..plane]);
        }
    }
    let weight_grad = need.1.then(|| {
        let mut dw = vec![T::zero(); g.out_c * patch];
        T::gemm(
            g.out_c,
            ncols,
            patch,
            T::one(),
            &dy,
            ncols as isize,
            1,
            cols,
            1,
            ncols as isize,
            T::zero(),
            &mut dw,
            patch as isize,
            1,
        );
        dw
    });
    let bias_grad = need
        .2
        .then(|| (0..g.out_c).map(|o| dy[o * ncols..][..ncols].iter().copied().sum()).collect());
    let input_grad = need.0.then(|| {
        let mut dcols = vec![T::zero(); patch * ncols];
        T::gemm(
            patch,
            g.out_c,
            ncols,
            T::one(),
            weight,
            1,
            patch as isize,
            &dy,
            ncols as isize,
            1,
            T::zero(),
            &mut dcols,
            ncols as isize,
            1,
        );
        col2im(&dcols, g)
    });
    ConvGrads {
        input: input_grad,
        weight: weight_grad,
        bias: bias_grad,
    }
}

/// `x[B,D]·w[D,K] + bias`.
pub(crate) fn linear_forward<T: Real>(
    x: &[T],
    w: &[T],
    bias: Option<&[T]>,
    b: usize,
    d: usize,
    k: usize,
) -> Vec<T> {
    let mut out = match bias {
        Some(bias) => {
            let mut o = Vec::with_capacity(b * k);
            for _ in 0..b {
                o.extend_from_slice(bias);
            }
            o
        }
        None => vec![T::zero(); b * k],
    };
    T::gemm(
        b,
        d,
        k,
        T::one(),
        x,
        d as isize,
        1,
        w,
        k as isize,
        1,
        T::one(),
        &mut out,
        k as isize,
        1,
    );
    out
}

pub(crate) fn linear_backward_input<T: Real>(dy: &[T], w: &[T], b: usize, d: usize, k: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); b * d];
    T::gemm(
        b,
        k,
        d,
        T::one(),
        dy,
        k as isize,
        1,
        w,
        1,
        k as isize,
        T::zero(),
        &mut dx,
        d as isize,
        1,
    );
    dx
}

pub(crate) fn linear_backward_weight<T: Real>(dy: &[T], x: &[T], b: usize, d: usize, k: usize) -> Vec<T> {
    let mut dw = vec![T::zero(); d * k];
    T::gemm(
        d,
        b,
        k,
        T::one(),
        x,
        1,
        d as isize,
        dy,
        k as isize,
        1,
        T::zero(),
        &mut dw,
        k as isize,
        1,
    );
    dw
}

/// Softmax over contiguous rows of length `k`, max-subtracted.
pub(crate) fn softmax_rows<T: Real>(x: &[T], k: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for (row, dst) in x.chunks_exact(k).zip(out.chunks_exact_mut(k)) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = (v - max).exp();
            total += *d;
        }
        for d in dst.iter_mut() {
            *d = *d / total;
        }
    }
    out
}

pub(crate) fn softmax_rows_backward<T: Real>(y: &[T], dy: &[T], k: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); y.len()];
    for ((yr, dyr), dxr) in y.chunks_exact(k).zip(dy.chunks_exact(k)).zip(dx.chunks_exact_mut(k)) {
        let dot: T = yr.iter().zip(dyr).map(|(&a, &b)| a * b).sum();
        for ((d, &yv), &g) in dxr.iter_mut().zip(yr).zip(dyr) {
            *d = yv * (g - dot);
        }
    }
    dx
}

pub(crate) fn avg_pool_forward<T: Real>(
    x: &[T],
    shape: &[usize],
    (kh, kw): (usize, usize),
    out_shape: &[usize],
) -> Vec<T> {
    let (h, w) = (shape[2], shape[3]);
    let (ho, wo) = (out_shape[2], out_shape[3]);
    let norm = T::of((kh * kw) as f64);
    let planes = shape[0] * shape[1];
    let mut out = vec![T::zero(); planes * ho * wo];
    for p in 0..planes {
        let src = &x[p * h * w..][..h * w];
        for oy in 0..ho {
            for ox in 0..wo {
                let mut s = T::zero();
                for y in oy * kh..oy * kh + kh {
                    for xx in ox * kw..ox * kw + kw {
                        s += src[y * w + xx];
                    }
                }
                out[(p * ho + oy) * wo + ox] = s / norm;
            }
        }
    }
    out
}

pub(crate) fn avg_pool_backward<T: Real>(
    dy: &[T],
    shape: &[usize],
    (kh, kw): (usize, usize),
    out_shape: &[usize],
) -> Vec<T> {
    let (h, w) = (shape[2], shape[3]);
    let (ho, wo) = (out_shape[2], out_shape[3]);
    let norm = T::of((kh * kw) as f64);
    let planes = shape[0] * shape[1];
    let mut dx = vec![T::zero(); planes * h * w];
    for p in 0..planes {
        let dst = &mut dx[p * h * w..][..h * w];
        for oy in 0..ho {
            for ox in 0..wo {
                let g = dy[(p * ho + oy) * wo + ox] / norm;
                for y in oy * kh..oy * kh + kh {
                    for xx in ox * kw..ox * kw + kw {
                        dst[y * w + xx] += g;
                    }
                }
            }
        }
    }
    dx
}

/// Splits a shape around `axis` into (outer, axis extent, inner).
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}
