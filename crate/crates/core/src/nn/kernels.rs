//! Forward and backward array kernels.
//!
//! Activations are NCHW. Convolution lowers each sample to a column matrix
//! (im2col) and multiplies with the flattened kernel, which keeps the hot
//! path inside the GEMM. Backward passes return gradients shaped like their
//! inputs. Everything takes views so callers can pass store-resident tensors
//! without copying.

use ndarray::linalg::general_mat_mul;
use ndarray::{
    s, Array1, Array2, Array4, ArrayView1, ArrayView2, ArrayView3, ArrayView4, Axis,
};

use super::Scalar;

/// Output extent of a strided window op along one axis.
pub fn conv_out(extent: usize, k: usize, stride: usize, pad: usize) -> usize {
    assert!(extent + 2 * pad >= k, "window larger than padded input");
    (extent + 2 * pad - k) / stride + 1
}

fn im2col<T: Scalar>(
    x: &ArrayView3<'_, T>,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Array2<T> {
    let (c, h, w) = x.dim();
    let mut col = Array2::zeros((c * kh * kw, oh * ow));
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ci * kh + ki) * kw + kj;
                let mut dst = col.row_mut(row);
                for oi in 0..oh {
                    let ii = oi * stride + ki;
                    if ii < pad || ii >= h + pad {
                        continue;
                    }
                    let src = x.slice(s![ci, ii - pad, ..]);
                    for oj in 0..ow {
                        let jj = oj * stride + kj;
                        if jj < pad || jj >= w + pad {
                            continue;
                        }
                        dst[oi * ow + oj] = src[jj - pad];
                    }
                }
            }
        }
    }
    col
}

fn col2im_add<T: Scalar>(
    dcol: &Array2<T>,
    dx: &mut ndarray::ArrayViewMut3<'_, T>,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) {
    let (c, h, w) = dx.dim();
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ci * kh + ki) * kw + kj;
                let src = dcol.row(row);
                for oi in 0..oh {
                    let ii = oi * stride + ki;
                    if ii < pad || ii >= h + pad {
                        continue;
                    }
                    let mut dst = dx.slice_mut(s![ci, ii - pad, ..]);
                    for oj in 0..ow {
                        let jj = oj * stride + kj;
                        if jj < pad || jj >= w + pad {
                            continue;
                        }
                        dst[jj - pad] = dst[jj - pad] + src[oi * ow + oj];
                    }
                }
            }
        }
    }
}

/// 2-D convolution, NCHW input against OIHW kernel.
pub fn conv2d<T: Scalar>(
    x: ArrayView4<'_, T>,
    w: ArrayView4<'_, T>,
    b: Option<ArrayView1<'_, T>>,
    stride: usize,
    pad: usize,
) -> Array4<T> {
    let (n, c, h, wd) = x.dim();
    let (o, ci, kh, kw) = w.dim();
    assert_eq!(c, ci, "channel mismatch between input and kernel");
    let oh = conv_out(h, kh, stride, pad);
    let ow = conv_out(wd, kw, stride, pad);
    let w2 = w
        .into_shape_with_order((o, c * kh * kw))
        .expect("kernel is contiguous");
    let mut y = Array4::zeros((n, o, oh, ow));
    for ni in 0..n {
        let col = im2col(&x.index_axis(Axis(0), ni), kh, kw, stride, pad, oh, ow);
        let mut yn = Array2::zeros((o, oh * ow));
        general_mat_mul(T::one(), &w2, &col, T::zero(), &mut yn);
        if let Some(b) = b {
            yn += &b.insert_axis(Axis(1));
        }
        y.index_axis_mut(Axis(0), ni).assign(
            &yn.into_shape_with_order((o, oh, ow))
                .expect("gemm output is contiguous"),
        );
    }
    y
}

/// Gradients of [`conv2d`] w.r.t. input, kernel and bias.
pub fn conv2d_backward<T: Scalar>(
    x: ArrayView4<'_, T>,
    w: ArrayView4<'_, T>,
    dy: ArrayView4<'_, T>,
    has_bias: bool,
    stride: usize,
    pad: usize,
) -> (Array4<T>, Array4<T>, Option<Array1<T>>) {
    let (n, c, h, wd) = x.dim();
    let (o, _, kh, kw) = w.dim();
    let (_, _, oh, ow) = dy.dim();
    let w2 = w
        .into_shape_with_order((o, c * kh * kw))
        .expect("kernel is contiguous");
    let mut dx = Array4::zeros((n, c, h, wd));
    let mut dw2 = Array2::<T>::zeros((o, c * kh * kw));
    for ni in 0..n {
        let col = im2col(&x.index_axis(Axis(0), ni), kh, kw, stride, pad, oh, ow);
        let dyn_ = dy
            .index_axis(Axis(0), ni)
            .into_shape_with_order((o, oh * ow))
            .expect("grad is contiguous");
        general_mat_mul(T::one(), &dyn_, &col.t(), T::one(), &mut dw2);
        let mut dcol = Array2::zeros((c * kh * kw, oh * ow));
        general_mat_mul(T::one(), &w2.t(), &dyn_, T::zero(), &mut dcol);
        col2im_add(
            &dcol,
            &mut dx.index_axis_mut(Axis(0), ni),
            kh,
            kw,
            stride,
            pad,
            oh,
            ow,
        );
    }
    let dw = dw2
        .into_shape_with_order((o, c, kh, kw))
        .expect("grad is contiguous");
    let db = has_bias.then(|| dy.sum_axis(Axis(3)).sum_axis(Axis(2)).sum_axis(Axis(0)));
    (dx, dw, db)
}

/// Max pooling. Returns the pooled map and, per output cell, the flat `i*w + j`
/// index of the winning input pixel for the backward scatter.
pub fn max_pool<T: Scalar>(
    x: ArrayView4<'_, T>,
    k: usize,
    stride: usize,
    pad: usize,
) -> (Array4<T>, Array4<u32>) {
    let (n, c, h, w) = x.dim();
    let oh = conv_out(h, k, stride, pad);
    let ow = conv_out(w, k, stride, pad);
    let mut y = Array4::zeros((n, c, oh, ow));
    let mut arg = Array4::<u32>::zeros((n, c, oh, ow));
    for ni in 0..n {
        for ci in 0..c {
            let plane = x.slice(s![ni, ci, .., ..]);
            for oi in 0..oh {
                for oj in 0..ow {
                    let mut best = T::neg_infinity();
                    let mut best_at = 0u32;
                    for ki in 0..k {
                        let ii = oi * stride + ki;
                        if ii < pad || ii >= h + pad {
                            continue;
                        }
                        for kj in 0..k {
                            let jj = oj * stride + kj;
                            if jj < pad || jj >= w + pad {
                                continue;
                            }
                            let v = plane[[ii - pad, jj - pad]];
                            if v > best {
                                best = v;
                                best_at = ((ii - pad) * w + (jj - pad)) as u32;
                            }
                        }
                    }
                    y[[ni, ci, oi, oj]] = best;
                    arg[[ni, ci, oi, oj]] = best_at;
                }
            }
        }
    }
    (y, arg)
}

pub fn max_pool_backward<T: Scalar>(
    arg: &Array4<u32>,
    dy: ArrayView4<'_, T>,
    h: usize,
    w: usize,
) -> Array4<T> {
    let (n, c, oh, ow) = dy.dim();
    let mut dx = Array4::zeros((n, c, h, w));
    for ni in 0..n {
        for ci in 0..c {
            for oi in 0..oh {
                for oj in 0..ow {
                    let flat = arg[[ni, ci, oi, oj]] as usize;
                    let (ii, jj) = (flat / w, flat % w);
                    dx[[ni, ci, ii, jj]] = dx[[ni, ci, ii, jj]] + dy[[ni, ci, oi, oj]];
                }
            }
        }
    }
    dx
}

/// Average pooling with a square window and stride equal to the window size.
/// Input extents must divide evenly.
pub fn avg_pool<T: Scalar>(x: ArrayView4<'_, T>, k: usize) -> Array4<T> {
    let (n, c, h, w) = x.dim();
    assert!(h % k == 0 && w % k == 0, "avg_pool input must tile evenly");
    let (oh, ow) = (h / k, w / k);
    let inv = T::from_f64(1.0 / (k * k) as f64);
    let mut y = Array4::zeros((n, c, oh, ow));
    for ni in 0..n {
        for ci in 0..c {
            for oi in 0..oh {
                for oj in 0..ow {
                    let win = x.slice(s![ni, ci, oi * k..oi * k + k, oj * k..oj * k + k]);
                    y[[ni, ci, oi, oj]] = win.sum() * inv;
                }
            }
        }
    }
    y
}

pub fn avg_pool_backward<T: Scalar>(dy: ArrayView4<'_, T>, k: usize) -> Array4<T> {
    let (n, c, oh, ow) = dy.dim();
    let inv = T::from_f64(1.0 / (k * k) as f64);
    let mut dx = Array4::zeros((n, c, oh * k, ow * k));
    for ni in 0..n {
        for ci in 0..c {
            for oi in 0..oh {
                for oj in 0..ow {
                    let g = dy[[ni, ci, oi, oj]] * inv;
                    dx.slice_mut(s![ni, ci, oi * k..oi * k + k, oj * k..oj * k + k])
                        .fill(g);
                }
            }
        }
    }
    dx
}

/// Collapse spatial extent to a per-channel mean, NCHW to NC.
pub fn global_avg_pool<T: Scalar>(x: ArrayView4<'_, T>) -> Array2<T> {
    let (_, _, h, w) = x.dim();
    let inv = T::from_f64(1.0 / (h * w) as f64);
    x.sum_axis(Axis(3)).sum_axis(Axis(2)).mapv_into(|v| v * inv)
}

pub fn global_avg_pool_backward<T: Scalar>(
    dy: ArrayView2<'_, T>,
    h: usize,
    w: usize,
) -> Array4<T> {
    let (n, c) = dy.dim();
    let inv = T::from_f64(1.0 / (h * w) as f64);
    let mut dx = Array4::zeros((n, c, h, w));
    for ni in 0..n {
        for ci in 0..c {
            dx.slice_mut(s![ni, ci, .., ..]).fill(dy[[ni, ci]] * inv);
        }
    }
    dx
}

/// Nearest-neighbour upsampling by 2 in both spatial axes.
pub fn upsample2<T: Scalar>(x: ArrayView4<'_, T>) -> Array4<T> {
    let (n, c, h, w) = x.dim();
    let mut y = Array4::zeros((n, c, h * 2, w * 2));
    for ni in 0..n {
        for ci in 0..c {
            for i in 0..h * 2 {
                for j in 0..w * 2 {
                    y[[ni, ci, i, j]] = x[[ni, ci, i / 2, j / 2]];
                }
            }
        }
    }
    y
}

pub fn upsample2_backward<T: Scalar>(dy: ArrayView4<'_, T>) -> Array4<T> {
    let (n, c, h2, w2) = dy.dim();
    let mut dx = Array4::zeros((n, c, h2 / 2, w2 / 2));
    for ni in 0..n {
        for ci in 0..c {
            for i in 0..h2 {
                for j in 0..w2 {
                    dx[[ni, ci, i / 2, j / 2]] = dx[[ni, ci, i / 2, j / 2]] + dy[[ni, ci, i, j]];
                }
            }
        }
    }
    dx
}

/// Concatenate along the channel axis.
pub fn concat_channels<T: Scalar>(xs: &[ArrayView4<'_, T>]) -> Array4<T> {
    ndarray::concatenate(Axis(1), xs).expect("stage shapes agree off the channel axis")
}

/// Per-channel statistics used by batch norm.
#[derive(Debug, Clone)]
pub struct BnStats<T> {
    pub mean: Array1<T>,
    pub var: Array1<T>,
    pub invstd: Array1<T>,
}

/// Batch statistics over the N, H, W axes. Variance is the biased estimate.
pub fn bn_batch_stats<T: Scalar>(x: ArrayView4<'_, T>, eps: T) -> BnStats<T> {
    let (n, c, h, w) = x.dim();
    let m = T::from_f64((n * h * w) as f64);
    let mut mean = Array1::zeros(c);
    let mut var = Array1::zeros(c);
    for ci in 0..c {
        let plane = x.slice(s![.., ci, .., ..]);
        let mu = plane.sum() / m;
        let mut acc = T::zero();
        for &v in plane.iter() {
            let d = v - mu;
            acc = acc + d * d;
        }
        mean[ci] = mu;
        var[ci] = acc / m;
    }
    let invstd = var.mapv(|v| T::one() / (v + eps).sqrt());
    BnStats { mean, var, invstd }
}

/// Stats from stored running estimates, for eval-mode normalization.
pub fn bn_running_stats<T: Scalar>(
    mean: ArrayView1<'_, T>,
    var: ArrayView1<'_, T>,
    eps: T,
) -> BnStats<T> {
    let invstd = var.mapv(|v| T::one() / (v + eps).sqrt());
    BnStats {
        mean: mean.to_owned(),
        var: var.to_owned(),
        invstd,
    }
}

/// Normalize with the given statistics and apply the affine pair.
/// Also returns `xhat`, which the backward pass reuses.
pub fn bn_apply<T: Scalar>(
    x: ArrayView4<'_, T>,
    stats: &BnStats<T>,
    gamma: ArrayView1<'_, T>,
    beta: ArrayView1<'_, T>,
) -> (Array4<T>, Array4<T>) {
    let (n, c, h, w) = x.dim();
    let mut xhat = Array4::zeros((n, c, h, w));
    let mut y = Array4::zeros((n, c, h, w));
    for ci in 0..c {
        let (mu, is, g, b) = (stats.mean[ci], stats.invstd[ci], gamma[ci], beta[ci]);
        for ni in 0..n {
            for i in 0..h {
                for j in 0..w {
                    let xh = (x[[ni, ci, i, j]] - mu) * is;
                    xhat[[ni, ci, i, j]] = xh;
                    y[[ni, ci, i, j]] = g * xh + b;
                }
            }
        }
    }
    (y, xhat)
}

/// Batch-norm backward for training mode, where the statistics were computed
/// from this batch and therefore carry gradient.
pub fn bn_backward_train<T: Scalar>(
    xhat: &Array4<T>,
    invstd: &Array1<T>,
    gamma: ArrayView1<'_, T>,
    dy: ArrayView4<'_, T>,
) -> (Array4<T>, Array1<T>, Array1<T>) {
    let (n, c, h, w) = dy.dim();
    let m = T::from_f64((n * h * w) as f64);
    let mut dgamma = Array1::zeros(c);
    let mut dbeta = Array1::zeros(c);
    for ci in 0..c {
        let mut dg = T::zero();
        let mut db = T::zero();
        for ni in 0..n {
            for i in 0..h {
                for j in 0..w {
                    let g = dy[[ni, ci, i, j]];
                    dg = dg + g * xhat[[ni, ci, i, j]];
                    db = db + g;
                }
            }
        }
        dgamma[ci] = dg;
        dbeta[ci] = db;
    }
    let mut dx = Array4::zeros((n, c, h, w));
    for ci in 0..c {
        let scale = gamma[ci] * invstd[ci] / m;
        for ni in 0..n {
            for i in 0..h {
                for j in 0..w {
                    let g = dy[[ni, ci, i, j]];
                    dx[[ni, ci, i, j]] =
                        scale * (m * g - dbeta[ci] - xhat[[ni, ci, i, j]] * dgamma[ci]);
                }
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// Batch-norm backward for eval mode, where mean and variance are constants.
pub fn bn_backward_eval<T: Scalar>(
    xhat: &Array4<T>,
    invstd: &Array1<T>,
    gamma: ArrayView1<'_, T>,
    dy: ArrayView4<'_, T>,
) -> (Array4<T>, Array1<T>, Array1<T>) {
    let (n, c, h, w) = dy.dim();
    let mut dgamma = Array1::zeros(c);
    let mut dbeta = Array1::zeros(c);
    let mut dx = Array4::zeros((n, c, h, w));
    for ci in 0..c {
        let scale = gamma[ci] * invstd[ci];
        let mut dg = T::zero();
        let mut db = T::zero();
        for ni in 0..n {
            for i in 0..h {
                for j in 0..w {
                    let g = dy[[ni, ci, i, j]];
                    dg = dg + g * xhat[[ni, ci, i, j]];
                    db = db + g;
                    dx[[ni, ci, i, j]] = g * scale;
                }
            }
        }
        dgamma[ci] = dg;
        dbeta[ci] = db;
    }
    (dx, dgamma, dbeta)
}

/// Affine layer on NC input; weight is (out, in).
pub fn linear<T: Scalar>(
    x: ArrayView2<'_, T>,
    w: ArrayView2<'_, T>,
    b: ArrayView1<'_, T>,
) -> Array2<T> {
    let mut y = x.dot(&w.t());
    y += &b.insert_axis(Axis(0));
    y
}

pub fn linear_backward<T: Scalar>(
    x: ArrayView2<'_, T>,
    w: ArrayView2<'_, T>,
    dy: ArrayView2<'_, T>,
) -> (Array2<T>, Array2<T>, Array1<T>) {
    let dx = dy.dot(&w);
    let dw = dy.t().dot(&x);
    let db = dy.sum_axis(Axis(0));
    (dx, dw, db)
}

/// Numerically stable mean binary cross-entropy on logits:
/// `max(z, 0) - z*t + ln(1 + exp(-|z|))`, averaged over every element.
pub fn bce_with_logits<T: Scalar>(z: ArrayView4<'_, T>, t: ArrayView4<'_, T>) -> T {
    assert_eq!(z.dim(), t.dim());
    let mut acc = T::zero();
    for (&zi, &ti) in z.iter().zip(t.iter()) {
        let pos = if zi > T::zero() { zi } else { T::zero() };
        acc = acc + pos - zi * ti + (T::one() + (-zi.abs()).exp()).ln();
    }
    acc / T::from_f64(z.len() as f64)
}

/// Gradient of [`bce_with_logits`] w.r.t. the logits: `(sigmoid(z) - t) / n`.
pub fn bce_with_logits_backward<T: Scalar>(
    z: ArrayView4<'_, T>,
    t: ArrayView4<'_, T>,
    upstream: T,
) -> Array4<T> {
    let n = T::from_f64(z.len() as f64);
    let mut dz = Array4::zeros(z.dim());
    for ((&zi, &ti), g) in z.iter().zip(t.iter()).zip(dz.iter_mut()) {
        *g = upstream * (sigmoid_scalar(zi) - ti) / n;
    }
    dz
}

pub fn sigmoid_scalar<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Mean softmax cross-entropy over rows of `z` against integer labels.
pub fn softmax_cross_entropy<T: Scalar>(z: ArrayView2<'_, T>, labels: &[usize]) -> T {
    let (n, _) = z.dim();
    assert_eq!(n, labels.len());
    let mut acc = T::zero();
    for (row, &lab) in z.outer_iter().zip(labels) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut lse = T::zero();
        for &v in row.iter() {
            lse = lse + (v - max).exp();
        }
        acc = acc + max + lse.ln() - row[lab];
    }
    acc / T::from_f64(n as f64)
}

pub fn softmax_cross_entropy_backward<T: Scalar>(
    z: ArrayView2<'_, T>,
    labels: &[usize],
    upstream: T,
) -> Array2<T> {
    let (n, k) = z.dim();
    let scale = upstream / T::from_f64(n as f64);
    let mut dz = Array2::zeros((n, k));
    for (ri, (row, &lab)) in z.outer_iter().zip(labels).enumerate() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut denom = T::zero();
        for &v in row.iter() {
            denom = denom + (v - max).exp();
        }
        for ci in 0..k {
            let p = (row[ci] - max).exp() / denom;
            let ind = if ci == lab { T::one() } else { T::zero() };
            dz[[ri, ci]] = scale * (p - ind);
        }
    }
    dz
}
