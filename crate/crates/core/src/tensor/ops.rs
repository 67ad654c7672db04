use super::{ConvSpec, Dims, Element, Tensor4};
use crate::error::{Error, Result};

pub fn relu<T: Element>(t: &Tensor4<T>) -> Tensor4<T> {
    t.map(|v| if v > T::ZERO { v } else { T::ZERO })
}

pub fn relu_backward<T: Element>(input: &Tensor4<T>, grad: &Tensor4<T>) -> Result<Tensor4<T>> {
    same_dims("relu_backward", input.dims(), grad.dims())?;
    let data = input
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&x, &g)| if x > T::ZERO { g } else { T::ZERO })
        .collect();
    Tensor4::new(input.dims(), data)
}

fn same_dims(op: &'static str, a: Dims, b: Dims) -> Result<()> {
    if a != b {
        return Err(Error::shape(op, format!("{a} vs {b}")));
    }
    Ok(())
}

pub fn add<T: Element>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    same_dims("add", a.dims(), b.dims())?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    Tensor4::new(a.dims(), data)
}

/// Max pooling over `window × window` patches (valid placements only).
pub fn max_pool2d<T: Element>(t: &Tensor4<T>, window: usize, stride: usize) -> Result<Tensor4<T>> {
    Ok(max_pool2d_with_indices(t, window, stride)?.0)
}

/// Max pooling that also returns, per output element, the flat input offset
/// of the first maximal element.
pub fn max_pool2d_with_indices<T: Element>(
    t: &Tensor4<T>,
    window: usize,
    stride: usize,
) -> Result<(Tensor4<T>, Vec<usize>)> {
    let d = t.dims();
    let (oh, ow) = ConvSpec::valid(window, stride).output_hw(d.h, d.w)?;
    let out_dims = Dims::new(d.n, oh, ow, d.c);
    let mut out = Vec::with_capacity(out_dims.len());
    let mut idx = Vec::with_capacity(out_dims.len());
    for n in 0..d.n {
        for oy in 0..oh {
            for ox in 0..ow {
                for c in 0..d.c {
                    let mut best = t.offset(n, oy * stride, ox * stride, c);
                    for ky in 0..window {
                        for kx in 0..window {
                            let o = t.offset(n, oy * stride + ky, ox * stride + kx, c);
                            if t.data()[o] > t.data()[best] {
                                best = o;
                            }
                        }
                    }
                    out.push(t.data()[best]);
                    idx.push(best);
                }
            }
        }
    }
    Ok((Tensor4::new(out_dims, out)?, idx))
}

pub fn max_pool2d_backward<T: Element>(
    input_dims: Dims,
    argmax: &[usize],
    grad: &Tensor4<T>,
) -> Result<Tensor4<T>> {
    if argmax.len() != grad.len() {
        return Err(Error::shape(
            "max_pool2d_backward",
            format!("{} indices for {} gradients", argmax.len(), grad.len()),
        ));
    }
    let mut out = vec![0.0f64; input_dims.len()];
    for (&i, &g) in argmax.iter().zip(grad.data()) {
        out[i] += g.to_f64();
    }
    Tensor4::new(input_dims, out.into_iter().map(T::from_f64).collect())
}

/// Spatial mean per channel: `[n, h, w, c] -> [n, 1, 1, c]`.
pub fn global_avg_pool<T: Element>(t: &Tensor4<T>) -> Tensor4<T> {
    let d = t.dims();
    let pixels = (d.h * d.w).max(1) as f64;
    let mut out = Vec::with_capacity(d.n * d.c);
    for n in 0..d.n {
        let mut acc = vec![0.0f64; d.c];
        for px in t.sample(n).chunks_exact(d.c.max(1)) {
            for (a, &v) in acc.iter_mut().zip(px) {
                *a += v.to_f64();
            }
        }
        out.extend(acc.into_iter().map(|a| T::from_f64(a / pixels)));
    }
    Tensor4 {
        dims: Dims::new(d.n, 1, 1, d.c),
        data: out,
    }
}

pub fn global_avg_pool_backward<T: Element>(input_dims: Dims, grad: &Tensor4<T>) -> Result<Tensor4<T>> {
    let d = input_dims;
    if grad.dims() != Dims::new(d.n, 1, 1, d.c) {
        return Err(Error::shape(
            "global_avg_pool_backward",
            format!("gradient {} for input {d}", grad.dims()),
        ));
    }
    let scale = 1.0 / (d.h * d.w) as f64;
    Ok(Tensor4::from_fn(d, |[n, _, _, c]| {
        T::from_f64(grad.at(n, 0, 0, c).to_f64() * scale)
    }))
}

fn check_dense(op: &'static str, d: Dims, w: Dims, bias: usize) -> Result<()> {
    let k = d.sample_len();
    if w.n != 1 || w.h != 1 || w.w != k || w.c != bias {
        return Err(Error::shape(
            op,
            format!("weights {w}, {bias} biases for {k} inputs per sample"),
        ));
    }
    Ok(())
}

/// Fully connected layer on each flattened sample; weights `[1, 1, k, c_out]`.
pub fn dense<T: Element>(t: &Tensor4<T>, weights: &Tensor4<T>, bias: &[T]) -> Result<Tensor4<T>> {
    let d = t.dims();
    check_dense("dense", d, weights.dims(), bias.len())?;
    let c_out = bias.len();
    let w = weights.data();
    let mut out = Vec::with_capacity(d.n * c_out);
    for n in 0..d.n {
        let mut acc: Vec<f64> = bias.iter().map(|b| b.to_f64()).collect();
        for (i, &x) in t.sample(n).iter().enumerate() {
            let x = x.to_f64();
            for (a, &wv) in acc.iter_mut().zip(&w[i * c_out..(i + 1) * c_out]) {
                *a += x * wv.to_f64();
            }
        }
        out.extend(acc.into_iter().map(T::from_f64));
    }
    Tensor4::new(Dims::new(d.n, 1, 1, c_out), out)
}

pub fn dense_backward<T: Element>(
    input: &Tensor4<T>,
    weights: &Tensor4<T>,
    grad: &Tensor4<T>,
) -> Result<(Tensor4<T>, Tensor4<T>, Vec<T>)> {
    let d = input.dims();
    let c_out = weights.dims().c;
    check_dense("dense_backward", d, weights.dims(), c_out)?;
    if grad.dims() != Dims::new(d.n, 1, 1, c_out) {
        return Err(Error::shape("dense_backward", format!("gradient {}", grad.dims())));
    }
    let k = d.sample_len();
    let w = weights.data();
    let mut gin = Vec::with_capacity(d.len());
    let mut gw = vec![0.0f64; k * c_out];
    let mut gb = vec![0.0f64; c_out];
    for n in 0..d.n {
        let g: Vec<f64> = grad.sample(n).iter().map(|v| v.to_f64()).collect();
        for (b, &gv) in gb.iter_mut().zip(&g) {
            *b += gv;
        }
        for (i, &x) in input.sample(n).iter().enumerate() {
            let row = &w[i * c_out..(i + 1) * c_out];
            let dot: f64 = row.iter().zip(&g).map(|(&wv, &gv)| wv.to_f64() * gv).sum();
            gin.push(T::from_f64(dot));
            let x = x.to_f64();
            for (dst, &gv) in gw[i * c_out..(i + 1) * c_out].iter_mut().zip(&g) {
                *dst += x * gv;
            }
        }
    }
    Ok((
        Tensor4::new(d, gin)?,
        Tensor4::new(weights.dims(), gw.into_iter().map(T::from_f64).collect())?,
        gb.into_iter().map(T::from_f64).collect(),
    ))
}

/// Softmax across the channel axis at every (n, y, x) position.
pub fn softmax<T: Element>(t: &Tensor4<T>) -> Tensor4<T> {
    let d = t.dims();
    let mut out = Vec::with_capacity(t.len());
    for row in t.data().chunks_exact(d.c.max(1)) {
        let max = row
            .iter()
            .map(|v| v.to_f64())
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v.to_f64() - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        out.extend(exps.into_iter().map(|e| T::from_f64(e / sum)));
    }
    Tensor4 { dims: d, data: out }
}

/// Vector-Jacobian product of softmax given its output `probs`.
pub fn softmax_backward<T: Element>(probs: &Tensor4<T>, grad: &Tensor4<T>) -> Result<Tensor4<T>> {
    same_dims("softmax_backward", probs.dims(), grad.dims())?;
    let c = probs.dims().c.max(1);
    let mut out = Vec::with_capacity(probs.len());
    for (p, g) in probs.data().chunks_exact(c).zip(grad.data().chunks_exact(c)) {
        let dot: f64 = p.iter().zip(g).map(|(&a, &b)| a.to_f64() * b.to_f64()).sum();
        out.extend(
            p.iter()
                .zip(g)
                .map(|(&pi, &gi)| T::from_f64(pi.to_f64() * (gi.to_f64() - dot))),
        );
    }
    Tensor4::new(probs.dims(), out)
}

/// Channel concatenation: `a`'s channels first, then `b`'s.
pub fn concat_channels<T: Element>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    let (da, db) = (a.dims(), b.dims());
    if (da.n, da.h, da.w) != (db.n, db.h, db.w) {
        return Err(Error::shape("concat_channels", format!("{da} vs {db}")));
    }
    let out_dims = Dims::new(da.n, da.h, da.w, da.c + db.c);
    let mut out = Vec::with_capacity(out_dims.len());
    for (pa, pb) in a
        .data()
        .chunks_exact(da.c.max(1))
        .zip(b.data().chunks_exact(db.c.max(1)))
    {
        out.extend_from_slice(pa);
        out.extend_from_slice(pb);
    }
    Tensor4::new(out_dims, out)
}

/// Splits a concatenated gradient into the `c_a` leading and remaining channels.
pub fn concat_channels_backward<T: Element>(
    grad: &Tensor4<T>,
    c_a: usize,
) -> Result<(Tensor4<T>, Tensor4<T>)> {
    let d = grad.dims();
    if c_a > d.c {
        return Err(Error::shape("concat_channels_backward", format!("{c_a} > {}", d.c)));
    }
    let c_b = d.c - c_a;
    let mut ga = Vec::with_capacity(d.n * d.h * d.w * c_a);
    let mut gb = Vec::with_capacity(d.n * d.h * d.w * c_b);
    for px in grad.data().chunks_exact(d.c.max(1)) {
        ga.extend_from_slice(&px[..c_a]);
        gb.extend_from_slice(&px[c_a..]);
    }
    Ok((
        Tensor4::new(Dims::new(d.n, d.h, d.w, c_a), ga)?,
        Tensor4::new(Dims::new(d.n, d.h, d.w, c_b), gb)?,
    ))
}
