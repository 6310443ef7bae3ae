//! Functional forward/backward primitives for the denoiser.
//!
//! Every op comes as a pure forward plus an explicit backward that takes the
//! saved forward inputs, so the network layer above owns all activation
//! caches and parameters stay immutable during inference. All ops require
//! standard-layout (row-major contiguous) arrays — every producer in this
//! crate allocates fresh owned arrays — and are generic over the scalar so
//! gradient tests can run the identical code in f64.
//!
//! Parallel chunking always maps one output plane (or group block) to one
//! chunk with a fixed inner summation order, so results are bitwise
//! identical with and without the `parallel` feature.

use ndarray::{Array, Array1, Array2, Array4, Dimension};

use crate::exec::for_each_chunk_mut;
use crate::scalar::Scalar;

/// 2D convolution over a (N, Cin, H, W) batch with an (Cout, Cin, KH, KW)
/// kernel, zero padding `pad`, and square stride.
pub fn conv2d<F: Scalar>(
    x: &Array4<F>,
    w: &Array4<F>,
    b: &Array1<F>,
    stride: usize,
    pad: usize,
) -> Array4<F> {
    let (n, cin, h, wd) = x.dim();
    let (cout, cin_w, kh, kw) = w.dim();
    debug_assert_eq!(cin, cin_w, "kernel input channels");
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (wd + 2 * pad - kw) / stride + 1;
    let xs = x.as_slice().expect("standard layout");
    let ws = w.as_slice().expect("standard layout");

    let mut out = Array4::<F>::zeros((n, cout, ho, wo));
    let os = out.as_slice_mut().expect("owned is contiguous");
    for_each_chunk_mut(os, ho * wo, |plane, oplane| {
        let ni = plane / cout;
        let co = plane % cout;
        let bias = b[co];
        for v in oplane.iter_mut() {
            *v = bias;
        }
        for ci in 0..cin {
            let xbase = (ni * cin + ci) * h * wd;
            let wbase = (co * cin + ci) * kh * kw;
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = ws[wbase + ky * kw + kx];
                    for oy in 0..ho {
                        let iy = oy * stride + ky;
                        if iy < pad || iy - pad >= h {
                            continue;
                        }
                        let iy = iy - pad;
                        if stride == 1 {
                            // Unit stride: one shifted row accumulation.
                            let lo = pad.saturating_sub(kx);
                            let hi = (wd + pad - kx).min(wo);
                            if lo >= hi {
                                continue;
                            }
                            let orow = oy * wo;
                            let xrow = xbase + iy * wd + (lo + kx - pad);
                            let dst = &mut oplane[orow + lo..orow + hi];
                            let src = &xs[xrow..xrow + (hi - lo)];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += wv * *s;
                            }
                        } else {
                            for ox in 0..wo {
                                let ix = ox * stride + kx;
                                if ix < pad || ix - pad >= wd {
                                    continue;
                                }
                                oplane[oy * wo + ox] += wv * xs[xbase + iy * wd + (ix - pad)];
                            }
                        }
                    }
                }
            }
        }
    });
    out
}

/// Gradients of [`conv2d`]: returns dx and accumulates nothing — the caller
/// adds `dw`/`db` into its gradient store.
pub fn conv2d_backward<F: Scalar>(
    x: &Array4<F>,
    w: &Array4<F>,
    dy: &Array4<F>,
    stride: usize,
    pad: usize,
) -> (Array4<F>, Array4<F>, Array1<F>) {
    let (n, cin, h, wd) = x.dim();
    let (cout, _, kh, kw) = w.dim();
    let (_, _, ho, wo) = dy.dim();
    let xs = x.as_slice().expect("standard layout");
    let ws = w.as_slice().expect("standard layout");
    let dys = dy.as_slice().expect("standard layout");

    let mut dx = Array4::<F>::zeros((n, cin, h, wd));
    let dxs = dx.as_slice_mut().expect("owned is contiguous");
    for_each_chunk_mut(dxs, h * wd, |plane, dplane| {
        let ni = plane / cin;
        let ci = plane % cin;
        for co in 0..cout {
            let dybase = (ni * cout + co) * ho * wo;
            let wbase = (co * cin + ci) * kh * kw;
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = ws[wbase + ky * kw + kx];
                    for oy in 0..ho {
                        let iy = oy * stride + ky;
                        if iy < pad || iy - pad >= h {
                            continue;
                        }
                        let iy = iy - pad;
                        if stride == 1 {
                            let lo = pad.saturating_sub(kx);
                            let hi = (wd + pad - kx).min(wo);
                            if lo >= hi {
                                continue;
                            }
                            let xrow = iy * wd + (lo + kx - pad);
                            let dyrow = dybase + oy * wo;
                            let dst = &mut dplane[xrow..xrow + (hi - lo)];
                            let src = &dys[dyrow + lo..dyrow + hi];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += wv * *s;
                            }
                        } else {
                            for ox in 0..wo {
                                let ix = ox * stride + kx;
                                if ix < pad || ix - pad >= wd {
                                    continue;
                                }
                                dplane[iy * wd + (ix - pad)] += wv * dys[dybase + oy * wo + ox];
                            }
                        }
                    }
                }
            }
        }
    });

    let mut dw = Array4::<F>::zeros((cout, cin, kh, kw));
    let dws = dw.as_slice_mut().expect("owned is contiguous");
    for_each_chunk_mut(dws, kh * kw, |plane, dwplane| {
        let co = plane / cin;
        let ci = plane % cin;
        for ky in 0..kh {
            for kx in 0..kw {
                let mut acc = F::zero();
                for ni in 0..n {
                    let xbase = (ni * cin + ci) * h * wd;
                    let dybase = (ni * cout + co) * ho * wo;
                    for oy in 0..ho {
                        let iy = oy * stride + ky;
                        if iy < pad || iy - pad >= h {
                            continue;
                        }
                        let iy = iy - pad;
                        if stride == 1 {
                            let lo = pad.saturating_sub(kx);
                            let hi = (wd + pad - kx).min(wo);
                            if lo >= hi {
                                continue;
                            }
                            let xrow = xbase + iy * wd + (lo + kx - pad);
                            let dyrow = dybase + oy * wo;
                            let a = &xs[xrow..xrow + (hi - lo)];
                            let g = &dys[dyrow + lo..dyrow + hi];
                            for (xa, ga) in a.iter().zip(g) {
                                acc += *xa * *ga;
                            }
                        } else {
                            for ox in 0..wo {
                                let ix = ox * stride + kx;
                                if ix < pad || ix - pad >= wd {
                                    continue;
                                }
                                acc += xs[xbase + iy * wd + (ix - pad)]
                                    * dys[dybase + oy * wo + ox];
                            }
                        }
                    }
                }
                dwplane[ky * kw + kx] = acc;
            }
        }
    });

    let db = Array1::from_vec(crate::exec::map_indexed(cout, |co| {
        let mut acc = F::zero();
        for ni in 0..n {
            let base = (ni * cout + co) * ho * wo;
            for v in &dys[base..base + ho * wo] {
                acc += *v;
            }
        }
        acc
    }));

    (dx, dw, db)
}

/// Per-sample group normalization cache: normalized activations and the
/// reciprocal standard deviation per (sample, group).
pub struct GnCache<F> {
    pub xhat: Array4<F>,
    pub inv_std: Vec<F>,
}

/// Group normalization over (N, C, H, W): statistics per sample per channel
/// group, then a per-channel affine map. Never mixes samples, so condition
/// slices cannot leak into targets here.
pub fn group_norm<F: Scalar>(
    x: &Array4<F>,
    gamma: &Array1<F>,
    beta: &Array1<F>,
    groups: usize,
    eps: f64,
) -> (Array4<F>, GnCache<F>) {
    let (n, c, h, w) = x.dim();
    debug_assert_eq!(c % groups, 0, "groups divide channels");
    let block = (c / groups) * h * w;
    let xs = x.as_slice().expect("standard layout");

    let stats: Vec<(F, F)> = crate::exec::map_indexed(n * groups, |gi| {
        let base = gi * block;
        let mut sum = F::zero();
        for v in &xs[base..base + block] {
            sum += *v;
        }
        let mean = sum / F::from_f64(block as f64);
        let mut var = F::zero();
        for v in &xs[base..base + block] {
            let d = *v - mean;
            var += d * d;
        }
        var /= F::from_f64(block as f64);
        (mean, (var + F::from_f64(eps)).sqrt().recip())
    });

    let mut xhat = Array4::<F>::zeros((n, c, h, w));
    let xh = xhat.as_slice_mut().expect("owned is contiguous");
    for_each_chunk_mut(xh, block, |gi, chunk| {
        let (mean, inv) = stats[gi];
        let base = gi * block;
        for (o, v) in chunk.iter_mut().zip(&xs[base..base + block]) {
            *o = (*v - mean) * inv;
        }
    });

    let mut y = Array4::<F>::zeros((n, c, h, w));
    let ys = y.as_slice_mut().expect("owned is contiguous");
    let xh = xhat.as_slice().expect("standard layout");
    for_each_chunk_mut(ys, h * w, |plane, row| {
        let ci = plane % c;
        let (g, b) = (gamma[ci], beta[ci]);
        let base = plane * h * w;
        for (o, v) in row.iter_mut().zip(&xh[base..base + h * w]) {
            *o = g * *v + b;
        }
    });

    let inv_std = stats.into_iter().map(|(_, inv)| inv).collect();
    (y, GnCache { xhat, inv_std })
}

/// Gradients of [`group_norm`]: (dx, dgamma, dbeta).
pub fn group_norm_backward<F: Scalar>(
    dy: &Array4<F>,
    gamma: &Array1<F>,
    cache: &GnCache<F>,
    groups: usize,
) -> (Array4<F>, Array1<F>, Array1<F>) {
    let (n, c, h, w) = dy.dim();
    let block = (c / groups) * h * w;
    let dys = dy.as_slice().expect("standard layout");
    let xh = cache.xhat.as_slice().expect("standard layout");

    let dgamma = Array1::from_vec(crate::exec::map_indexed(c, |ci| {
        let mut acc = F::zero();
        for ni in 0..n {
            let base = (ni * c + ci) * h * w;
            for j in 0..h * w {
                acc += dys[base + j] * xh[base + j];
            }
        }
        acc
    }));
    let dbeta = Array1::from_vec(crate::exec::map_indexed(c, |ci| {
        let mut acc = F::zero();
        for ni in 0..n {
            let base = (ni * c + ci) * h * w;
            for v in &dys[base..base + h * w] {
                acc += *v;
            }
        }
        acc
    }));

    let cpg = c / groups;
    let plane = h * w;
    let mut dx = Array4::<F>::zeros((n, c, h, w));
    let dxs = dx.as_slice_mut().expect("owned is contiguous");
    for_each_chunk_mut(dxs, block, |gi, chunk| {
        let base = gi * block;
        let c0 = (gi % groups) * cpg;
        let inv = cache.inv_std[gi];
        let m = F::from_f64(block as f64);
        // dxhat = dy * gamma_c; two group reductions, then the classic
        // normalization backward.
        let mut s1 = F::zero();
        let mut s2 = F::zero();
        for j in 0..block {
            let g = gamma[c0 + j / plane];
            let dxh = dys[base + j] * g;
            s1 += dxh;
            s2 += dxh * xh[base + j];
        }
        let m1 = s1 / m;
        let m2 = s2 / m;
        for (j, o) in chunk.iter_mut().enumerate() {
            let g = gamma[c0 + j / plane];
            let dxh = dys[base + j] * g;
            *o = inv * (dxh - m1 - xh[base + j] * m2);
        }
    });
    (dx, dgamma, dbeta)
}

/// x · sigmoid(x), elementwise, any dimensionality.
pub fn silu<F: Scalar, D: Dimension>(x: &Array<F, D>) -> Array<F, D> {
    x.mapv(|v| v * sigmoid(v))
}

/// Backward of [`silu`] given its input.
pub fn silu_backward<F: Scalar, D: Dimension>(x: &Array<F, D>, dy: &Array<F, D>) -> Array<F, D> {
    let mut out = dy.clone();
    ndarray::Zip::from(&mut out).and(x).for_each(|d, &v| {
        let s = sigmoid(v);
        *d = *d * (s + v * s * (F::one() - s));
    });
    out
}

fn sigmoid<F: Scalar>(v: F) -> F {
    F::one() / (F::one() + (-v).exp())
}

/// Dense layer y = x·Wᵀ + b for x shaped (N, In), W shaped (Out, In).
pub fn linear<F: Scalar>(x: &Array2<F>, w: &Array2<F>, b: &Array1<F>) -> Array2<F> {
    let (n, input) = x.dim();
    let (out, _) = w.dim();
    let mut y = Array2::<F>::zeros((n, out));
    for ni in 0..n {
        for o in 0..out {
            let mut acc = b[o];
            for i in 0..input {
                acc += x[[ni, i]] * w[[o, i]];
            }
            y[[ni, o]] = acc;
        }
    }
    y
}

/// Gradients of [`linear`]: (dx, dw, db).
pub fn linear_backward<F: Scalar>(
    x: &Array2<F>,
    w: &Array2<F>,
    dy: &Array2<F>,
) -> (Array2<F>, Array2<F>, Array1<F>) {
    let (n, input) = x.dim();
    let (out, _) = w.dim();
    let mut dx = Array2::<F>::zeros((n, input));
    let mut dw = Array2::<F>::zeros((out, input));
    let mut db = Array1::<F>::zeros(out);
    for ni in 0..n {
        for o in 0..out {
            let g = dy[[ni, o]];
            db[o] += g;
            for i in 0..input {
                dx[[ni, i]] += g * w[[o, i]];
                dw[[o, i]] += g * x[[ni, i]];
            }
        }
    }
    (dx, dw, db)
}

/// Nearest-neighbor 2× spatial upsampling.
pub fn upsample2<F: Scalar>(x: &Array4<F>) -> Array4<F> {
    let (n, c, h, w) = x.dim();
    let mut y = Array4::<F>::zeros((n, c, 2 * h, 2 * w));
    let xs = x.as_slice().expect("standard layout");
    let ys = y.as_slice_mut().expect("owned is contiguous");
    for_each_chunk_mut(ys, 4 * h * w, |plane, dst| {
        let base = plane * h * w;
        for iy in 0..2 * h {
            for ix in 0..2 * w {
                dst[iy * 2 * w + ix] = xs[base + (iy / 2) * w + ix / 2];
            }
        }
    });
    y
}

/// Backward of [`upsample2`]: each input cell absorbs its 2×2 block.
pub fn upsample2_backward<F: Scalar>(dy: &Array4<F>) -> Array4<F> {
    let (n, c, h2, w2) = dy.dim();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut dx = Array4::<F>::zeros((n, c, h, w));
    let dys = dy.as_slice().expect("standard layout");
    let dxs = dx.as_slice_mut().expect("owned is contiguous");
    for_each_chunk_mut(dxs, h * w, |plane, dst| {
        let base = plane * h2 * w2;
        for iy in 0..h {
            for ix in 0..w {
                let mut acc = F::zero();
                for sy in 0..2 {
                    for sx in 0..2 {
                        acc += dys[base + (2 * iy + sy) * w2 + (2 * ix + sx)];
                    }
                }
                dst[iy * w + ix] = acc;
            }
        }
    });
    dx
}

/// Multi-head attention over the slice axis: at every spatial position the K
/// slices form K tokens of width C, heads split C, and softmax runs over
/// slices. Returns the mixed values and the attention weights shaped
/// (H·W, heads, K, K) for the backward pass.
pub fn slice_attention<F: Scalar>(
    q: &Array4<F>,
    k: &Array4<F>,
    v: &Array4<F>,
    heads: usize,
) -> (Array4<F>, ndarray::Array4<F>) {
    let (kn, c, h, w) = q.dim();
    let dh = c / heads;
    let scale = F::from_f64(1.0 / (dh as f64).sqrt());
    let (qs, ks) = (q.as_slice().unwrap(), k.as_slice().unwrap());
    let vs = v.as_slice().unwrap();
    let hw = h * w;
    let at = |slice: usize, ch: usize, p: usize| (slice * c + ch) * hw + p;

    let mut attn = Array4::<F>::zeros((hw, heads, kn, kn));
    let asl = attn.as_slice_mut().expect("owned is contiguous");
    for_each_chunk_mut(asl, heads * kn * kn, |p, block| {
        for hh in 0..heads {
            let c0 = hh * dh;
            for k1 in 0..kn {
                let row = &mut block[(hh * kn + k1) * kn..(hh * kn + k1 + 1) * kn];
                let mut maxv = F::neg_infinity();
                for (k2, r) in row.iter_mut().enumerate() {
                    let mut s = F::zero();
                    for d in 0..dh {
                        s += qs[at(k1, c0 + d, p)] * ks[at(k2, c0 + d, p)];
                    }
                    *r = s * scale;
                    if *r > maxv {
                        maxv = *r;
                    }
                }
                let mut total = F::zero();
                for r in row.iter_mut() {
                    *r = (*r - maxv).exp();
                    total += *r;
                }
                for r in row.iter_mut() {
                    *r /= total;
                }
            }
        }
    });

    let mut out = Array4::<F>::zeros((kn, c, h, w));
    let os = out.as_slice_mut().expect("owned is contiguous");
    let asl = attn.as_slice().unwrap();
    for_each_chunk_mut(os, hw, |plane, dst| {
        let k1 = plane / c;
        let ch = plane % c;
        let hh = ch / dh;
        for (p, o) in dst.iter_mut().enumerate() {
            let arow = ((p * heads + hh) * kn + k1) * kn;
            let mut acc = F::zero();
            for k2 in 0..kn {
                acc += asl[arow + k2] * vs[at(k2, ch, p)];
            }
            *o = acc;
        }
    });
    (out, attn)
}

/// Gradients of [`slice_attention`]: (dq, dk, dv).
pub fn slice_attention_backward<F: Scalar>(
    q: &Array4<F>,
    k: &Array4<F>,
    v: &Array4<F>,
    attn: &Array4<F>,
    dout: &Array4<F>,
    heads: usize,
) -> (Array4<F>, Array4<F>, Array4<F>) {
    let (kn, c, h, w) = q.dim();
    let dh = c / heads;
    let scale = F::from_f64(1.0 / (dh as f64).sqrt());
    let hw = h * w;
    let at = |slice: usize, ch: usize, p: usize| (slice * c + ch) * hw + p;
    let (qs, ks) = (q.as_slice().unwrap(), k.as_slice().unwrap());
    let vs = v.as_slice().unwrap();
    let asl = attn.as_slice().unwrap();
    let dos = dout.as_slice().unwrap();

    // dv[k2] = sum_k1 A[k1,k2] * dout[k1], per head/position.
    let mut dv = Array4::<F>::zeros((kn, c, h, w));
    let dvs = dv.as_slice_mut().expect("owned is contiguous");
    for_each_chunk_mut(dvs, hw, |plane, dst| {
        let k2 = plane / c;
        let ch = plane % c;
        let hh = ch / dh;
        for (p, o) in dst.iter_mut().enumerate() {
            let abase = (p * heads + hh) * kn * kn;
            let mut acc = F::zero();
            for k1 in 0..kn {
                acc += asl[abase + k1 * kn + k2] * dos[at(k1, ch, p)];
            }
            *o = acc;
        }
    });

    // dS via the softmax Jacobian, stored per position/head.
    let mut dscore = Array4::<F>::zeros((hw, heads, kn, kn));
    let dsl = dscore.as_slice_mut().expect("owned is contiguous");
    for_each_chunk_mut(dsl, heads * kn * kn, |p, block| {
        for hh in 0..heads {
            let c0 = hh * dh;
            for k1 in 0..kn {
                let arow = ((p * heads + hh) * kn + k1) * kn;
                let row = &mut block[(hh * kn + k1) * kn..(hh * kn + k1 + 1) * kn];
                // dA[k2] = sum_d dout[k1,d] * v[k2,d]
                let mut dot = F::zero();
                for (k2, r) in row.iter_mut().enumerate() {
                    let mut da = F::zero();
                    for d in 0..dh {
                        da += dos[at(k1, c0 + d, p)] * vs[at(k2, c0 + d, p)];
                    }
                    *r = da;
                    dot += da * asl[arow + k2];
                }
                for (k2, r) in row.iter_mut().enumerate() {
                    *r = asl[arow + k2] * (*r - dot);
                }
            }
        }
    });

    let dsl = dscore.as_slice().unwrap();
    let mut dq = Array4::<F>::zeros((kn, c, h, w));
    let dqs = dq.as_slice_mut().expect("owned is contiguous");
    for_each_chunk_mut(dqs, hw, |plane, dst| {
        let k1 = plane / c;
        let ch = plane % c;
        let hh = ch / dh;
        for (p, o) in dst.iter_mut().enumerate() {
            let srow = ((p * heads + hh) * kn + k1) * kn;
            let mut acc = F::zero();
            for k2 in 0..kn {
                acc += dsl[srow + k2] * ks[at(k2, ch, p)];
            }
            *o = acc * scale;
        }
    });

    let mut dk = Array4::<F>::zeros((kn, c, h, w));
    let dks = dk.as_slice_mut().expect("owned is contiguous");
    for_each_chunk_mut(dks, hw, |plane, dst| {
        let k2 = plane / c;
        let ch = plane % c;
        let hh = ch / dh;
        for (p, o) in dst.iter_mut().enumerate() {
            let sbase = (p * heads + hh) * kn * kn;
            let mut acc = F::zero();
            for k1 in 0..kn {
                acc += dsl[sbase + k1 * kn + k2] * qs[at(k1, ch, p)];
            }
            *o = acc * scale;
        }
    });

    (dq, dk, dv)
}
