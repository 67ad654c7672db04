use crate::tensor::{Dims, Tensor4};

/// Corner-aligned bilinear resize of every image and channel to
/// `target × target`. Output pixel `i` samples source position
/// `i * (src - 1) / (target - 1)`.
pub fn resize_bilinear(img: &Tensor4<f32>, target: usize) -> Tensor4<f32> {
    let d = img.dims();
    if d.h == target && d.w == target {
        return img.clone();
    }
    let axis = |src: usize| -> Vec<(usize, usize, f64)> {
        (0..target)
            .map(|i| {
                let pos = if target > 1 && src > 1 {
                    i as f64 * (src - 1) as f64 / (target - 1) as f64
                } else {
                    0.0
                };
                let lo = (pos.floor() as usize).min(src - 1);
                let hi = (lo + 1).min(src - 1);
                (lo, hi, pos - lo as f64)
            })
            .collect()
    };
    let ys = axis(d.h);
    let xs = axis(d.w);
    Tensor4::from_fn(Dims::new(d.n, target, target, d.c), |[n, y, x, c]| {
        let (y0, y1, ty) = ys[y];
        let (x0, x1, tx) = xs[x];
        let p = |yy, xx| img.at(n, yy, xx, c) as f64;
        let top = p(y0, x0) * (1.0 - tx) + p(y0, x1) * tx;
        let bottom = p(y1, x0) * (1.0 - tx) + p(y1, x1) * tx;
        (top * (1.0 - ty) + bottom * ty) as f32
    })
}
