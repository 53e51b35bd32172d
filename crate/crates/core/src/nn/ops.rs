//! Forward and backward kernels over flat NCHW buffers.

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
    pub oh: usize,
    pub ow: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

/// Output positions `lo..hi` whose input coordinate `o*stride + koff - pad`
/// lands inside `0..extent`.
#[inline]
fn valid_range(koff: usize, pad: usize, stride: usize, extent: usize, out: usize) -> (usize, usize) {
    let lo = if pad > koff {
        (pad - koff).div_ceil(stride)
    } else {
        0
    };
    let hi = if extent + pad > koff {
        ((extent - 1 + pad - koff) / stride + 1).min(out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// Dense or depthwise convolution. For depthwise, `cin == cout` and each
/// output channel reads only its own input channel (weight shape `C×1×K×K`).
pub(crate) fn conv_forward<T: Scalar>(
    g: &ConvGeom,
    depthwise: bool,
    input: &[T],
    weight: &[T],
    bias: &[T],
) -> Vec<T> {
    let (ih, iw, oh, ow, k) = (g.h, g.w, g.oh, g.ow, g.k);
    let in_plane = ih * iw;
    let out_plane = oh * ow;
    let wcin = if depthwise { 1 } else { g.cin };
    let mut out = vec![T::zero(); g.n * g.cout * out_plane];
    for n in 0..g.n {
        for o in 0..g.cout {
            let dst = &mut out[(n * g.cout + o) * out_plane..][..out_plane];
            dst.iter_mut().for_each(|v| *v = bias[o]);
            for wi in 0..wcin {
                let ci = if depthwise { o } else { wi };
                let src = &input[(n * g.cin + ci) * in_plane..][..in_plane];
                for ky in 0..k {
                    let (ylo, yhi) = valid_range(ky, g.pad, g.stride, ih, oh);
                    for kx in 0..k {
                        let wv = weight[((o * wcin + wi) * k + ky) * k + kx];
                        let (xlo, xhi) = valid_range(kx, g.pad, g.stride, iw, ow);
                        for y in ylo..yhi {
                            let iy = y * g.stride + ky - g.pad;
                            let row = &src[iy * iw..][..iw];
                            let drow = &mut dst[y * ow..][..ow];
                            if g.stride == 1 {
                                let off = kx as isize - g.pad as isize;
                                for x in xlo..xhi {
                                    drow[x] = drow[x] + wv * row[(x as isize + off) as usize];
                                }
                            } else {
                                for x in xlo..xhi {
                                    drow[x] = drow[x] + wv * row[x * g.stride + kx - g.pad];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Returns (input grad, weight grad, bias grad).
pub(crate) fn conv_backward<T: Scalar>(
    g: &ConvGeom,
    depthwise: bool,
    input: &[T],
    weight: &[T],
    grad_out: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let (ih, iw, oh, ow, k) = (g.h, g.w, g.oh, g.ow, g.k);
    let in_plane = ih * iw;
    let out_plane = oh * ow;
    let wcin = if depthwise { 1 } else { g.cin };
    let mut gin = vec![T::zero(); input.len()];
    let mut gw = vec![T::zero(); weight.len()];
    let mut gb = vec![T::zero(); g.cout];
    for n in 0..g.n {
        for o in 0..g.cout {
            let go = &grad_out[(n * g.cout + o) * out_plane..][..out_plane];
            gb[o] = gb[o] + go.iter().copied().sum::<T>();
            for wi in 0..wcin {
                let ci = if depthwise { o } else { wi };
                let base = (n * g.cin + ci) * in_plane;
                for ky in 0..k {
                    let (ylo, yhi) = valid_range(ky, g.pad, g.stride, ih, oh);
                    for kx in 0..k {
                        let widx = ((o * wcin + wi) * k + ky) * k + kx;
                        let wv = weight[widx];
                        let (xlo, xhi) = valid_range(kx, g.pad, g.stride, iw, ow);
                        let mut acc = T::zero();
                        for y in ylo..yhi {
                            let iy = y * g.stride + ky - g.pad;
                            let grow = &go[y * ow..][..ow];
                            let src_row = base + iy * iw;
                            for x in xlo..xhi {
                                let ix = x * g.stride + kx - g.pad;
                                let gv = grow[x];
                                acc = acc + gv * input[src_row + ix];
                                gin[src_row + ix] = gin[src_row + ix] + wv * gv;
                            }
                        }
                        gw[widx] = gw[widx] + acc;
                    }
                }
            }
        }
    }
    (gin, gw, gb)
}

/// 1×1 convolution: `out[n,o,p] = b[o] + Σ_i w[o,i]·in[n,i,p]`.
pub(crate) fn pointwise_forward<T: Scalar>(
    n: usize,
    cin: usize,
    cout: usize,
    plane: usize,
    input: &[T],
    weight: &[T],
    bias: &[T],
) -> Vec<T> {
    let mut out = vec![T::zero(); n * cout * plane];
    for s in 0..n {
        for o in 0..cout {
            let dst = &mut out[(s * cout + o) * plane..][..plane];
            dst.iter_mut().for_each(|v| *v = bias[o]);
            for i in 0..cin {
                let wv = weight[o * cin + i];
                let src = &input[(s * cin + i) * plane..][..plane];
                for (d, &x) in dst.iter_mut().zip(src) {
                    *d = *d + wv * x;
                }
            }
        }
    }
    out
}

pub(crate) fn pointwise_backward<T: Scalar>(
    n: usize,
    cin: usize,
    cout: usize,
    plane: usize,
    input: &[T],
    weight: &[T],
    grad_out: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut gin = vec![T::zero(); input.len()];
    let mut gw = vec![T::zero(); weight.len()];
    let mut gb = vec![T::zero(); cout];
    for s in 0..n {
        for o in 0..cout {
            let go = &grad_out[(s * cout + o) * plane..][..plane];
            gb[o] = gb[o] + go.iter().copied().sum::<T>();
            for i in 0..cin {
                let src = &input[(s * cin + i) * plane..][..plane];
                let mut acc = T::zero();
                for (&gv, &x) in go.iter().zip(src) {
                    acc = acc + gv * x;
                }
                gw[o * cin + i] = gw[o * cin + i] + acc;
                let wv = weight[o * cin + i];
                let gdst = &mut gin[(s * cin + i) * plane..][..plane];
                for (d, &gv) in gdst.iter_mut().zip(go) {
                    *d = *d + wv * gv;
                }
            }
        }
    }
    (gin, gw, gb)
}

/// `y = x·Wᵀ + b` with `W` stored `out×in`.
pub(crate) fn dense_forward<T: Scalar>(
    n: usize,
    din: usize,
    dout: usize,
    input: &[T],
    weight: &[T],
    bias: &[T],
) -> Vec<T> {
    let mut out = vec![T::zero(); n * dout];
    for s in 0..n {
        let x = &input[s * din..][..din];
        for o in 0..dout {
            let w = &weight[o * din..][..din];
            let mut acc = bias[o];
            for (&a, &b) in w.iter().zip(x) {
                acc = acc + a * b;
            }
            out[s * dout + o] = acc;
        }
    }
    out
}

pub(crate) fn dense_backward<T: Scalar>(
    n: usize,
    din: usize,
    dout: usize,
    input: &[T],
    weight: &[T],
    grad_out: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut gin = vec![T::zero(); n * din];
    let mut gw = vec![T::zero(); dout * din];
    let mut gb = vec![T::zero(); dout];
    for s in 0..n {
        let x = &input[s * din..][..din];
        let gx = &mut gin[s * din..][..din];
        for o in 0..dout {
            let gv = grad_out[s * dout + o];
            gb[o] = gb[o] + gv;
            let w = &weight[o * din..][..din];
            let gwr = &mut gw[o * din..][..din];
            for j in 0..din {
                gwr[j] = gwr[j] + gv * x[j];
                gx[j] = gx[j] + gv * w[j];
            }
        }
    }
    (gin, gw, gb)
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub(crate) fn swish<T: Scalar>(x: T) -> T {
    x * sigmoid(x)
}

#[inline]
pub(crate) fn swish_grad<T: Scalar>(x: T) -> T {
    let s = sigmoid(x);
    s * (T::one() + x * (T::one() - s))
}

/// Batch-norm layout helper: `groups` outer blocks, `ch` channels, `inner`
/// contiguous elements per channel block (H·W for images, 1 for features).
#[derive(Debug, Clone, Copy)]
pub(crate) struct BnGeom {
    pub groups: usize,
    pub ch: usize,
    pub inner: usize,
}

impl BnGeom {
    #[inline]
    pub fn for_each_in_channel(&self, c: usize, mut f: impl FnMut(usize)) {
        for g in 0..self.groups {
            let base = (g * self.ch + c) * self.inner;
            for i in 0..self.inner {
                f(base + i);
            }
        }
    }

    pub fn count(&self) -> usize {
        self.groups * self.inner
    }
}

/// Per-channel mean and biased variance.
pub(crate) fn channel_stats<T: Scalar>(geom: &BnGeom, x: &[T]) -> (Vec<T>, Vec<T>) {
    let m = T::from_usize(geom.count()).unwrap();
    let mut mean = vec![T::zero(); geom.ch];
    let mut var = vec![T::zero(); geom.ch];
    for c in 0..geom.ch {
        let mut s = T::zero();
        geom.for_each_in_channel(c, |i| s = s + x[i]);
        let mu = s / m;
        let mut v = T::zero();
        geom.for_each_in_channel(c, |i| {
            let d = x[i] - mu;
            v = v + d * d
        });
        mean[c] = mu;
        var[c] = v / m;
    }
    (mean, var)
}

/// Training-mode batch-norm backward given normalized activations.
pub(crate) fn batch_norm_backward<T: Scalar>(
    geom: &BnGeom,
    xhat: &[T],
    inv_std: &[T],
    gamma: &[T],
    grad_out: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let m = T::from_usize(geom.count()).unwrap();
    let mut gin = vec![T::zero(); xhat.len()];
    let mut ggamma = vec![T::zero(); geom.ch];
    let mut gbeta = vec![T::zero(); geom.ch];
    for c in 0..geom.ch {
        let mut sum_g = T::zero();
        let mut sum_gx = T::zero();
        geom.for_each_in_channel(c, |i| {
            sum_g = sum_g + grad_out[i];
            sum_gx = sum_gx + grad_out[i] * xhat[i];
        });
        ggamma[c] = sum_gx;
        gbeta[c] = sum_g;
        let scale = gamma[c] * inv_std[c] / m;
        geom.for_each_in_channel(c, |i| {
            gin[i] = scale * (m * grad_out[i] - sum_g - xhat[i] * sum_gx);
        });
    }
    (gin, ggamma, gbeta)
}

/// Row-wise numerically stable softmax.
pub(crate) fn softmax_rows<T: Scalar>(n: usize, k: usize, x: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); n * k];
    for s in 0..n {
        let row = &x[s * k..][..k];
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let dst = &mut out[s * k..][..k];
        let mut sum = T::zero();
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = (v - max).exp();
            sum = sum + *d;
        }
        dst.iter_mut().for_each(|d| *d = *d / sum);
    }
    out
}

pub(crate) fn softmax_backward<T: Scalar>(n: usize, k: usize, probs: &[T], grad_out: &[T]) -> Vec<T> {
    let mut gin = vec![T::zero(); n * k];
    for s in 0..n {
        let p = &probs[s * k..][..k];
        let g = &grad_out[s * k..][..k];
        let dot: T = p.iter().zip(g).map(|(&a, &b)| a * b).sum();
        for j in 0..k {
            gin[s * k + j] = p[j] * (g[j] - dot);
        }
    }
    gin
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_range_matches_bruteforce() {
        for extent in 1..7 {
            for k in 1..4 {
                for stride in 1..3 {
                    for pad in 0..3 {
                        if extent + 2 * pad < k {
                            continue;
                        }
                        let out = (extent + 2 * pad - k) / stride + 1;
                        for koff in 0..k {
                            let (lo, hi) = valid_range(koff, pad, stride, extent, out);
                            let brute: Vec<usize> = (0..out)
                                .filter(|&o| {
                                    let c = (o * stride + koff) as isize - pad as isize;
                                    c >= 0 && (c as usize) < extent
                                })
                                .collect();
                            let got: Vec<usize> = (lo..hi).collect();
                            assert_eq!(got, brute, "e{extent} k{k} s{stride} p{pad} off{koff}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-1000.0f32), 0.0);
        assert_eq!(sigmoid(1000.0f32), 1.0);
        assert!((sigmoid(0.0f64) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = [1.0f32, 2.0, 3.0, -50.0, 0.0, 50.0];
        let p = softmax_rows(2, 3, &x);
        for r in p.chunks(3) {
            assert!((r.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        }
    }
}
