//! Reference implementations used as test oracles. Everything here is
//! written with plain index arithmetic and shares no code with the kernels
//! under test.
#![allow(dead_code)]

use dualscope_core::autodiff::{Gradients, ParamStore};
use dualscope_core::eval::ConfusionMatrix;
use dualscope_core::labelfuse::{LobeClass, GLAND_CLASS_NAMES};
use dualscope_core::Tensor4;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, dims: [usize; 4], lo: f64, hi: f64) -> Tensor4<f64> {
    Tensor4::from_fn(dims, |_| rng.random_range(lo..hi))
}

/// Number of window placements along one axis, counted one by one.
pub fn placements(n: usize, f: usize, s: usize) -> usize {
    let mut count = 0;
    let mut start = 0;
    while start + f <= n {
        count += 1;
        start += s;
    }
    count
}

fn at(t: &Tensor4<f64>, n: usize, y: isize, x: isize, c: usize) -> f64 {
    let d = t.dims();
    if y < 0 || x < 0 || y as usize >= d.h || x as usize >= d.w {
        0.0
    } else {
        t.data()[((n * d.h + y as usize) * d.w + x as usize) * d.c + c]
    }
}

/// Cross-correlation with zero padding `pad` on every side.
pub fn naive_conv2d(x: &Tensor4<f64>, w: &Tensor4<f64>, b: &[f64], stride: usize, pad: usize) -> Tensor4<f64> {
    let d = x.dims();
    let wd = w.dims();
    let (f, cout) = (wd.h, wd.c);
    let oh = placements(d.h + 2 * pad, f, stride);
    let ow = placements(d.w + 2 * pad, f, stride);
    let mut out = vec![0.0; d.n * oh * ow * cout];
    for n in 0..d.n {
        for oy in 0..oh {
            for ox in 0..ow {
                for co in 0..cout {
                    let mut s = b[co];
                    for ky in 0..f {
                        for kx in 0..f {
                            for ci in 0..d.c {
                                let y = (oy * stride + ky) as isize - pad as isize;
                                let xx = (ox * stride + kx) as isize - pad as isize;
                                s += at(x, n, y, xx, ci) * w.data()[((ky * f + kx) * d.c + ci) * cout + co];
                            }
                        }
                    }
                    out[((n * oh + oy) * ow + ox) * cout + co] = s;
                }
            }
        }
    }
    Tensor4::new([d.n, oh, ow, cout], out).unwrap()
}

/// Per-channel spatial filter, weights `[f, f, c, 1]`.
pub fn naive_depthwise(x: &Tensor4<f64>, w: &Tensor4<f64>, stride: usize, pad: usize) -> Tensor4<f64> {
    let d = x.dims();
    let f = w.dims().h;
    let oh = placements(d.h + 2 * pad, f, stride);
    let ow = placements(d.w + 2 * pad, f, stride);
    let mut out = vec![0.0; d.n * oh * ow * d.c];
    for n in 0..d.n {
        for oy in 0..oh {
            for ox in 0..ow {
                for c in 0..d.c {
                    let mut s = 0.0;
                    for ky in 0..f {
                        for kx in 0..f {
                            let y = (oy * stride + ky) as isize - pad as isize;
                            let xx = (ox * stride + kx) as isize - pad as isize;
                            s += at(x, n, y, xx, c) * w.data()[(ky * f + kx) * d.c + c];
                        }
                    }
                    out[((n * oh + oy) * ow + ox) * d.c + c] = s;
                }
            }
        }
    }
    Tensor4::new([d.n, oh, ow, d.c], out).unwrap()
}

/// Channel mixing at every pixel, weights `[1, 1, c_in, c_out]`.
pub fn naive_pointwise(x: &Tensor4<f64>, w: &Tensor4<f64>, b: &[f64]) -> Tensor4<f64> {
    let d = x.dims();
    let cout = w.dims().c;
    let mut out = Vec::with_capacity(d.n * d.h * d.w * cout);
    for px in 0..d.n * d.h * d.w {
        for co in 0..cout {
            let mut s = b[co];
            for ci in 0..d.c {
                s += x.data()[px * d.c + ci] * w.data()[ci * cout + co];
            }
            out.push(s);
        }
    }
    Tensor4::new([d.n, d.h, d.w, cout], out).unwrap()
}

pub fn max_abs_diff(a: &Tensor4<f64>, b: &Tensor4<f64>) -> f64 {
    assert_eq!(a.dims(), b.dims());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Finite-difference step for single ops, whose inputs are kept away from
/// ReLU and max-pool kinks.
pub const FD_STEP: f64 = 1e-3;
/// Step for whole networks: with thousands of ReLU units a 1e-3 step
/// crosses activation boundaries and the difference quotient stops
/// estimating the derivative.
pub const FD_STEP_NETWORK: f64 = 1e-5;

/// Worst relative error between analytic gradients and central differences
/// for one parameter tensor.
#[derive(Debug)]
pub struct TensorCheck {
    pub name: String,
    pub len: usize,
    pub coords: usize,
    pub max_rel: f64,
}

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Compares `grads` against central differences of `loss` on `min_coords`
/// random coordinates of every tensor (all coordinates of smaller ones).
pub fn finite_difference_check(
    store: &ParamStore<f64>,
    grads: &Gradients<f64>,
    loss: impl Fn(&ParamStore<f64>) -> f64,
    h: f64,
    min_coords: usize,
    seed: u64,
) -> Vec<TensorCheck> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    for id in store.ids() {
        let p = store.get(id);
        let len = p.value.data().len();
        let coords: Vec<usize> = if len <= min_coords {
            (0..len).collect()
        } else {
            sample(&mut r, len, min_coords).into_vec()
        };
        let zero = Tensor4::zeros(p.value.dims());
        let analytic = grads.get(id).unwrap_or(&zero);
        let mut max_rel: f64 = 0.0;
        for &i in &coords {
            let mut plus = store.clone();
            let mut minus = store.clone();
            plus.get_mut(id).value.data_mut()[i] += h;
            minus.get_mut(id).value.data_mut()[i] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            max_rel = max_rel.max(rel_err(analytic.data()[i], numeric));
        }
        out.push(TensorCheck {
            name: p.name.clone(),
            len,
            coords: coords.len(),
            max_rel,
        });
    }
    out
}

/// Gland class code by the written fusion rules, located through the class
/// names rather than any code table.
pub fn fusion_oracle(left: LobeClass, right: LobeClass) -> usize {
    let name = if left == right || right == LobeClass::Normal {
        left.name().to_string()
    } else if left == LobeClass::Normal {
        right.name().to_string()
    } else {
        let (a, b) = if left.severity() < right.severity() { (left, right) } else { (right, left) };
        format!("{}+{}", a.name(), b.name())
    };
    GLAND_CLASS_NAMES.iter().position(|&n| n == name).expect("known class name")
}

/// Macro metrics by counting (truth, prediction) pairs directly.
#[derive(Debug)]
pub struct PairCountMetrics {
    pub accuracy: f64,
    pub ppv: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub npv: Option<f64>,
    pub f1: Option<f64>,
}

pub fn pair_count_metrics(truth: &[usize], pred: &[usize], classes: usize) -> PairCountMetrics {
    let n = truth.len();
    let mut sums = [0.0f64; 4];
    let mut defined = [0usize; 4];
    for c in 0..classes {
        if !truth.iter().chain(pred).any(|&v| v == c) {
            continue;
        }
        let (mut tp, mut tn, mut fp, mut fnn) = (0u64, 0u64, 0u64, 0u64);
        for (&t, &p) in truth.iter().zip(pred) {
            match (t == c, p == c) {
                (true, true) => tp += 1,
                (false, false) => tn += 1,
                (false, true) => fp += 1,
                (true, false) => fnn += 1,
            }
        }
        for (k, (num, den)) in [(tp, tp + fp), (tp, tp + fnn), (tn, tn + fp), (tn, tn + fnn)]
            .into_iter()
            .enumerate()
        {
            if den > 0 {
                sums[k] += num as f64 / den as f64;
                defined[k] += 1;
            }
        }
    }
    let avg = |k: usize| (defined[k] > 0).then(|| sums[k] / defined[k] as f64);
    let (ppv, sensitivity) = (avg(0), avg(1));
    let f1 = match (ppv, sensitivity) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    let correct = truth.iter().zip(pred).filter(|(t, p)| t == p).count();
    PairCountMetrics {
        accuracy: correct as f64 / n as f64,
        ppv,
        sensitivity,
        specificity: avg(2),
        npv: avg(3),
        f1,
    }
}

pub fn confusion_of(truth: &[usize], pred: &[usize], classes: usize) -> ConfusionMatrix {
    ConfusionMatrix::from_pairs(truth, pred, classes).unwrap()
}

/// Mean leave-one-out 5-nearest-neighbour accuracy on raw pixels.
pub fn knn_accuracy(features: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let mut correct = 0;
    for i in 0..features.len() {
        let mut d: Vec<(f64, usize)> = features
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(j, f)| (f.iter().zip(&features[i]).map(|(a, b)| (a - b) * (a - b)).sum(), labels[j]))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut votes = std::collections::BTreeMap::new();
        for &(_, l) in d.iter().take(k) {
            *votes.entry(l).or_insert(0usize) += 1;
        }
        let best = votes.iter().max_by_key(|&(l, v)| (*v, std::cmp::Reverse(*l))).map(|(l, _)| *l).unwrap();
        if best == labels[i] {
            correct += 1;
        }
    }
    correct as f64 / features.len() as f64
}
pub mod scenarios;
