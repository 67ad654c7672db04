//! Direct convolution kernels. Each batch item is processed independently
//! (in parallel when a rayon pool has spare workers); per-item weight
//! gradients are reduced in batch order so results never depend on the
//! thread count.

use rayon::prelude::*;

use super::{ConvSpec, Dims, Element, Padding, Tensor4};
use crate::error::{Error, Result};

fn to_f64_vec<T: Element>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64()).collect()
}

fn from_f64_vec<T: Element>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::from_f64(x)).collect()
}

/// Sums per-item partial gradients in batch order.
fn reduce_ordered(parts: Vec<Vec<f64>>, len: usize) -> Vec<f64> {
    let mut total = vec![0.0; len];
    for part in parts {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    total
}

fn check_weights(op: &'static str, input: Dims, w: Dims, f: usize) -> Result<()> {
    if w.n != f || w.h != f {
        return Err(Error::shape(op, format!("weights {w} are not {f}×{f}")));
    }
    if w.w != input.c {
        return Err(Error::shape(
            op,
            format!("input has {} channels, weights expect {}", input.c, w.w),
        ));
    }
    Ok(())
}

/// Zero-pads both spatial axes by `(f - 1) / 2` on each side.
pub fn pad_same<T: Element>(t: &Tensor4<T>, f: usize) -> Result<Tensor4<T>> {
    if f == 0 || f % 2 == 0 {
        return Err(Error::Geometry(format!(
            "same padding needs an odd kernel, got {f}"
        )));
    }
    let p = (f - 1) / 2;
    let d = t.dims();
    let out_dims = Dims::new(d.n, d.h + 2 * p, d.w + 2 * p, d.c);
    let mut out = vec![T::ZERO; out_dims.len()];
    for n in 0..d.n {
        for y in 0..d.h {
            let src = t.offset(n, y, 0, 0);
            let dst = ((n * out_dims.h + y + p) * out_dims.w + p) * d.c;
            out[dst..dst + d.w * d.c].copy_from_slice(&t.data()[src..src + d.w * d.c]);
        }
    }
    Tensor4::new(out_dims, out)
}

/// Crops the padded border back off a gradient.
pub fn pad_same_backward<T: Element>(grad: &Tensor4<T>, f: usize) -> Result<Tensor4<T>> {
    let p = (f - 1) / 2;
    let d = grad.dims();
    if d.h < 2 * p || d.w < 2 * p {
        return Err(Error::shape("pad_same_backward", format!("{d} too small")));
    }
    let in_dims = Dims::new(d.n, d.h - 2 * p, d.w - 2 * p, d.c);
    let mut out = Vec::with_capacity(in_dims.len());
    for n in 0..d.n {
        for y in 0..in_dims.h {
            let src = grad.offset(n, y + p, p, 0);
            out.extend_from_slice(&grad.data()[src..src + in_dims.w * d.c]);
        }
    }
    Tensor4::new(in_dims, out)
}

fn padded<'a, T: Element>(
    input: &'a Tensor4<T>,
    spec: ConvSpec,
) -> Result<std::borrow::Cow<'a, Tensor4<T>>> {
    spec.output_hw(input.dims().h, input.dims().w)?;
    Ok(match spec.padding {
        Padding::Valid => std::borrow::Cow::Borrowed(input),
        Padding::Same => std::borrow::Cow::Owned(pad_same(input, spec.kernel)?),
    })
}

/// Full convolution: weights `[f, f, c_in, c_out]`, one bias per output channel.
pub fn conv2d<T: Element>(
    input: &Tensor4<T>,
    weights: &Tensor4<T>,
    bias: &[T],
    spec: ConvSpec,
) -> Result<Tensor4<T>> {
    let f = spec.kernel;
    check_weights("conv2d", input.dims(), weights.dims(), f)?;
    let c_out = weights.dims().c;
    if bias.len() != c_out {
        return Err(Error::shape(
            "conv2d",
            format!("{} biases for {c_out} output channels", bias.len()),
        ));
    }
    let x = padded(input, spec)?;
    let d = x.dims();
    let s = spec.stride;
    let (oh, ow) = ConvSpec::valid(f, s).output_hw(d.h, d.w)?;
    let out_dims = Dims::new(d.n, oh, ow, c_out);
    let w64 = to_f64_vec(weights.data());
    let b64 = to_f64_vec(bias);
    let c_in = d.c;

    let mut out = vec![T::ZERO; out_dims.len()];
    out.par_chunks_mut(out_dims.sample_len().max(1))
        .enumerate()
        .for_each(|(n, out_n)| {
            let xn = x.sample(n);
            let mut acc = vec![0.0f64; c_out];
            for oy in 0..oh {
                for ox in 0..ow {
                    acc.copy_from_slice(&b64);
                    for ky in 0..f {
                        let row = ((oy * s + ky) * d.w + ox * s) * c_in;
                        for kx in 0..f {
                            let xrow = &xn[row + kx * c_in..row + (kx + 1) * c_in];
                            let wbase = (ky * f + kx) * c_in * c_out;
                            for (ci, &xv) in xrow.iter().enumerate() {
                                let xv = xv.to_f64();
                                if xv == 0.0 {
                                    continue;
                                }
                                let wr = &w64[wbase + ci * c_out..wbase + (ci + 1) * c_out];
                                for (a, &wv) in acc.iter_mut().zip(wr) {
                                    *a += xv * wv;
                                }
                            }
                        }
                    }
                    let o = (oy * ow + ox) * c_out;
                    for (dst, &a) in out_n[o..o + c_out].iter_mut().zip(&acc) {
                        *dst = T::from_f64(a);
                    }
                }
            }
        });
    Tensor4::new(out_dims, out)
}

/// Gradients of [`conv2d`] with respect to input, weights and bias.
pub fn conv2d_backward<T: Element>(
    input: &Tensor4<T>,
    weights: &Tensor4<T>,
    grad_out: &Tensor4<T>,
    spec: ConvSpec,
) -> Result<(Tensor4<T>, Tensor4<T>, Vec<T>)> {
    let f = spec.kernel;
    check_weights("conv2d_backward", input.dims(), weights.dims(), f)?;
    let x = padded(input, spec)?;
    let d = x.dims();
    let s = spec.stride;
    let c_in = d.c;
    let c_out = weights.dims().c;
    let (oh, ow) = ConvSpec::valid(f, s).output_hw(d.h, d.w)?;
    if grad_out.dims() != Dims::new(d.n, oh, ow, c_out) {
        return Err(Error::shape(
            "conv2d_backward",
            format!("gradient {} for output [{}, {oh}, {ow}, {c_out}]", grad_out.dims(), d.n),
        ));
    }
    let w64 = to_f64_vec(weights.data());
    let wlen = w64.len();

    let parts: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..d.n)
        .into_par_iter()
        .map(|n| {
            let xn = x.sample(n);
            let gn = grad_out.sample(n);
            let mut gin = vec![0.0f64; d.sample_len()];
            let mut gw = vec![0.0f64; wlen];
            let mut gb = vec![0.0f64; c_out];
            let mut g = vec![0.0f64; c_out];
            for oy in 0..oh {
                for ox in 0..ow {
                    let o = (oy * ow + ox) * c_out;
                    let mut any = false;
                    for (dst, &v) in g.iter_mut().zip(&gn[o..o + c_out]) {
                        *dst = v.to_f64();
                        any |= *dst != 0.0;
                    }
                    if !any {
                        continue;
                    }
                    for (b, &gv) in gb.iter_mut().zip(&g) {
                        *b += gv;
                    }
                    for ky in 0..f {
                        let row = ((oy * s + ky) * d.w + ox * s) * c_in;
                        for kx in 0..f {
                            let base = row + kx * c_in;
                            let wbase = (ky * f + kx) * c_in * c_out;
                            for ci in 0..c_in {
                                let wr = &w64[wbase + ci * c_out..wbase + (ci + 1) * c_out];
                                let mut dot = 0.0;
                                for (&wv, &gv) in wr.iter().zip(&g) {
                                    dot += wv * gv;
                                }
                                gin[base + ci] += dot;
                                let xv = xn[base + ci].to_f64();
                                if xv != 0.0 {
                                    let gwr = &mut gw[wbase + ci * c_out..wbase + (ci + 1) * c_out];
                                    for (dst, &gv) in gwr.iter_mut().zip(&g) {
                                        *dst += xv * gv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            (gin, gw, gb)
        })
        .collect();

    let mut gin_all = Vec::with_capacity(d.len());
    let mut gws = Vec::with_capacity(parts.len());
    let mut gbs = Vec::with_capacity(parts.len());
    for (gin, gw, gb) in parts {
        gin_all.extend(gin.into_iter().map(T::from_f64));
        gws.push(gw);
        gbs.push(gb);
    }
    let gw = reduce_ordered(gws, wlen);
    let gb = reduce_ordered(gbs, c_out);
    let mut grad_in = Tensor4::new(d, gin_all)?;
    if spec.padding == Padding::Same {
        grad_in = pad_same_backward(&grad_in, f)?;
    }
    Ok((
        grad_in,
        Tensor4::new(weights.dims(), from_f64_vec(&gw))?,
        from_f64_vec(&gb),
    ))
}

/// One spatial filter per channel: weights `[f, f, c, 1]`, no bias.
pub fn depthwise_conv2d<T: Element>(
    input: &Tensor4<T>,
    weights: &Tensor4<T>,
    spec: ConvSpec,
) -> Result<Tensor4<T>> {
    let f = spec.kernel;
    check_weights("depthwise_conv2d", input.dims(), weights.dims(), f)?;
    if weights.dims().c != 1 {
        return Err(Error::shape(
            "depthwise_conv2d",
            format!("weights {} must have a trailing 1", weights.dims()),
        ));
    }
    let x = padded(input, spec)?;
    let d = x.dims();
    let s = spec.stride;
    let c = d.c;
    let (oh, ow) = ConvSpec::valid(f, s).output_hw(d.h, d.w)?;
    let out_dims = Dims::new(d.n, oh, ow, c);
    let w64 = to_f64_vec(weights.data());

    let mut out = vec![T::ZERO; out_dims.len()];
    out.par_chunks_mut(out_dims.sample_len().max(1))
        .enumerate()
        .for_each(|(n, out_n)| {
            let xn = x.sample(n);
            let mut acc = vec![0.0f64; c];
            for oy in 0..oh {
                for ox in 0..ow {
                    acc.iter_mut().for_each(|a| *a = 0.0);
                    for ky in 0..f {
                        let row = ((oy * s + ky) * d.w + ox * s) * c;
                        for kx in 0..f {
                            let xrow = &xn[row + kx * c..row + (kx + 1) * c];
                            let wr = &w64[(ky * f + kx) * c..(ky * f + kx + 1) * c];
                            for ((a, &xv), &wv) in acc.iter_mut().zip(xrow).zip(wr) {
                                *a += xv.to_f64() * wv;
                            }
                        }
                    }
                    let o = (oy * ow + ox) * c;
                    for (dst, &a) in out_n[o..o + c].iter_mut().zip(&acc) {
                        *dst = T::from_f64(a);
                    }
                }
            }
        });
    Tensor4::new(out_dims, out)
}

/// Gradients of [`depthwise_conv2d`] with respect to input and weights.
pub fn depthwise_conv2d_backward<T: Element>(
    input: &Tensor4<T>,
    weights: &Tensor4<T>,
    grad_out: &Tensor4<T>,
    spec: ConvSpec,
) -> Result<(Tensor4<T>, Tensor4<T>)> {
    let f = spec.kernel;
    check_weights("depthwise_conv2d_backward", input.dims(), weights.dims(), f)?;
    let x = padded(input, spec)?;
    let d = x.dims();
    let s = spec.stride;
    let c = d.c;
    let (oh, ow) = ConvSpec::valid(f, s).output_hw(d.h, d.w)?;
    if grad_out.dims() != Dims::new(d.n, oh, ow, c) {
        return Err(Error::shape(
            "depthwise_conv2d_backward",
            format!("gradient {}", grad_out.dims()),
        ));
    }
    let w64 = to_f64_vec(weights.data());
    let wlen = w64.len();

    let parts: Vec<(Vec<f64>, Vec<f64>)> = (0..d.n)
        .into_par_iter()
        .map(|n| {
            let xn = x.sample(n);
            let gn = grad_out.sample(n);
            let mut gin = vec![0.0f64; d.sample_len()];
            let mut gw = vec![0.0f64; wlen];
            let mut g = vec![0.0f64; c];
            for oy in 0..oh {
                for ox in 0..ow {
                    let o = (oy * ow + ox) * c;
                    for (dst, &v) in g.iter_mut().zip(&gn[o..o + c]) {
                        *dst = v.to_f64();
                    }
                    for ky in 0..f {
                        let row = ((oy * s + ky) * d.w + ox * s) * c;
                        for kx in 0..f {
                            let base = row + kx * c;
                            let wb = (ky * f + kx) * c;
                            for ch in 0..c {
                                gin[base + ch] += w64[wb + ch] * g[ch];
                                gw[wb + ch] += xn[base + ch].to_f64() * g[ch];
                            }
                        }
                    }
                }
            }
            (gin, gw)
        })
        .collect();

    let mut gin_all = Vec::with_capacity(d.len());
    let mut gws = Vec::with_capacity(parts.len());
    for (gin, gw) in parts {
        gin_all.extend(gin.into_iter().map(T::from_f64));
        gws.push(gw);
    }
    let gw = reduce_ordered(gws, wlen);
    let mut grad_in = Tensor4::new(d, gin_all)?;
    if spec.padding == Padding::Same {
        grad_in = pad_same_backward(&grad_in, f)?;
    }
    Ok((grad_in, Tensor4::new(weights.dims(), from_f64_vec(&gw))?))
}

fn check_pointwise(op: &'static str, input: Dims, w: Dims, bias: usize) -> Result<()> {
    if w.n != 1 || w.h != 1 || w.w != input.c {
        return Err(Error::shape(
            op,
            format!("weights {w} for input with {} channels", input.c),
        ));
    }
    if bias != w.c {
        return Err(Error::shape(op, format!("{bias} biases for {} outputs", w.c)));
    }
    Ok(())
}

/// Per-pixel channel mixing: weights `[1, 1, c_in, c_out]`.
pub fn pointwise_conv2d<T: Element>(
    input: &Tensor4<T>,
    weights: &Tensor4<T>,
    bias: &[T],
) -> Result<Tensor4<T>> {
    let d = input.dims();
    check_pointwise("pointwise_conv2d", d, weights.dims(), bias.len())?;
    let c_in = d.c;
    let c_out = weights.dims().c;
    let out_dims = Dims::new(d.n, d.h, d.w, c_out);
    let w64 = to_f64_vec(weights.data());
    let b64 = to_f64_vec(bias);
    let pixels = d.h * d.w;

    let mut out = vec![T::ZERO; out_dims.len()];
    out.par_chunks_mut(out_dims.sample_len().max(1))
        .enumerate()
        .for_each(|(n, out_n)| {
            let xn = input.sample(n);
            let mut acc = vec![0.0f64; c_out];
            for p in 0..pixels {
                acc.copy_from_slice(&b64);
                for (ci, &xv) in xn[p * c_in..(p + 1) * c_in].iter().enumerate() {
                    let xv = xv.to_f64();
                    if xv == 0.0 {
                        continue;
                    }
                    for (a, &wv) in acc.iter_mut().zip(&w64[ci * c_out..(ci + 1) * c_out]) {
                        *a += xv * wv;
                    }
                }
                for (dst, &a) in out_n[p * c_out..(p + 1) * c_out].iter_mut().zip(&acc) {
                    *dst = T::from_f64(a);
                }
            }
        });
    Tensor4::new(out_dims, out)
}

/// Gradients of [`pointwise_conv2d`] with respect to input, weights and bias.
pub fn pointwise_conv2d_backward<T: Element>(
    input: &Tensor4<T>,
    weights: &Tensor4<T>,
    grad_out: &Tensor4<T>,
) -> Result<(Tensor4<T>, Tensor4<T>, Vec<T>)> {
    let d = input.dims();
    check_pointwise("pointwise_conv2d_backward", d, weights.dims(), weights.dims().c)?;
    let c_in = d.c;
    let c_out = weights.dims().c;
    if grad_out.dims() != Dims::new(d.n, d.h, d.w, c_out) {
        return Err(Error::shape(
            "pointwise_conv2d_backward",
            format!("gradient {}", grad_out.dims()),
        ));
    }
    let w64 = to_f64_vec(weights.data());
    let wlen = w64.len();
    let pixels = d.h * d.w;

    let parts: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..d.n)
        .into_par_iter()
        .map(|n| {
            let xn = input.sample(n);
            let gn = grad_out.sample(n);
            let mut gin = vec![0.0f64; d.sample_len()];
            let mut gw = vec![0.0f64; wlen];
            let mut gb = vec![0.0f64; c_out];
            let mut g = vec![0.0f64; c_out];
            for p in 0..pixels {
                for (dst, &v) in g.iter_mut().zip(&gn[p * c_out..(p + 1) * c_out]) {
                    *dst = v.to_f64();
                }
                for (b, &gv) in gb.iter_mut().zip(&g) {
                    *b += gv;
                }
                for ci in 0..c_in {
                    let wr = &w64[ci * c_out..(ci + 1) * c_out];
                    let mut dot = 0.0;
                    for (&wv, &gv) in wr.iter().zip(&g) {
                        dot += wv * gv;
                    }
                    gin[p * c_in + ci] = dot;
                    let xv = xn[p * c_in + ci].to_f64();
                    if xv != 0.0 {
                        for (dst, &gv) in gw[ci * c_out..(ci + 1) * c_out].iter_mut().zip(&g) {
                            *dst += xv * gv;
                        }
                    }
                }
            }
            (gin, gw, gb)
        })
        .collect();

    let mut gin_all = Vec::with_capacity(d.len());
    let mut gws = Vec::with_capacity(parts.len());
    let mut gbs = Vec::with_capacity(parts.len());
    for (gin, gw, gb) in parts {
        gin_all.extend(gin.into_iter().map(T::from_f64));
        gws.push(gw);
        gbs.push(gb);
    }
    Ok((
        Tensor4::new(d, gin_all)?,
        Tensor4::new(weights.dims(), from_f64_vec(&reduce_ordered(gws, wlen)))?,
        from_f64_vec(&reduce_ordered(gbs, c_out)),
    ))
}

/// Depthwise filter followed by a pointwise channel mix.
pub fn separable_conv<T: Element>(
    input: &Tensor4<T>,
    depthwise_weights: &Tensor4<T>,
    pointwise_weights: &Tensor4<T>,
    bias: &[T],
    spec: ConvSpec,
) -> Result<Tensor4<T>> {
    let mid = depthwise_conv2d(input, depthwise_weights, spec)?;
    pointwise_conv2d(&mid, pointwise_weights, bias)
}
