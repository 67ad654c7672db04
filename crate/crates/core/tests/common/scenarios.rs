//! Check routines that both the unit-level integration tests and the
//! acceptance suite run.

use super::*;
use dualscope_core::autodiff::{cce_loss, ClassWeightMode, Graph, LossConfig, NodeId};
use dualscope_core::data::{synth_generate, SyntheticSpec};
use dualscope_core::eval::{fold_metrics, stratified_kfold};
use dualscope_core::labelfuse::{fuse_labels, fuse_probs, NUM_GLAND_CLASSES};
use dualscope_core::model::{LobeClassifier, ModelConfig};
use dualscope_core::tensor::{conv2d, out_extent};
use dualscope_core::{ConvSpec, Result};
use rand::seq::SliceRandom;

pub const GRAD_TOL: f64 = 1e-4;
pub const MIN_COORDS: usize = 20;

type Build = dyn Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>;

/// Registers `inputs` as parameters, reduces the op output to a scalar with
/// fixed random weights unless it already is one, and checks every input.
fn check_op(inputs: Vec<(&str, Tensor4<f64>)>, build: &Build, seed: u64) -> Vec<TensorCheck> {
    let mut store = ParamStore::new();
    let ids: Vec<_> = inputs.into_iter().map(|(n, t)| store.add(n, t)).collect();
    let forward = |s: &ParamStore<f64>, coeffs: Option<&Tensor4<f64>>| -> (Graph<f64>, NodeId) {
        let mut g = Graph::new();
        let nodes: Vec<NodeId> = ids.iter().map(|&id| g.param(s, id)).collect();
        let out = build(&mut g, &nodes).expect("op");
        let loss = match coeffs {
            Some(c) => g.weighted_sum(out, c.clone()).expect("probe"),
            None => out,
        };
        (g, loss)
    };
    let (g0, out0) = forward(&store, None);
    let out_dims = g0.value(out0).dims();
    let coeffs = (out_dims.len() > 1).then(|| random_tensor(&mut rng(seed ^ 0xC0EF), out_dims.as_array(), -1.0, 1.0));
    let (g, loss) = forward(&store, coeffs.as_ref());
    let grads = g.backward(loss).expect("backward");
    finite_difference_check(
        &store,
        &grads,
        |s| {
            let (g, l) = forward(s, coeffs.as_ref());
            g.value(l).data()[0]
        },
        FD_STEP,
        MIN_COORDS,
        seed,
    )
}

/// Values spread at least 0.02 apart and away from zero, so no ReLU kink or
/// max-pool tie sits within a finite-difference step.
fn separated(r: &mut ChaCha8Rng, dims: [usize; 4]) -> Tensor4<f64> {
    let len: usize = dims.iter().product();
    let mut v: Vec<f64> = (0..len)
        .map(|i| {
            let mag = 0.05 + 0.02 * i as f64;
            if i % 2 == 0 { mag } else { -mag }
        })
        .collect();
    v.shuffle(r);
    Tensor4::new(dims, v).unwrap()
}

/// Finite-difference checks for every differentiable op.
pub fn op_gradient_checks() -> Vec<(&'static str, Vec<TensorCheck>)> {
    let mut r = rng(41);
    let mut t = |d: [usize; 4]| random_tensor(&mut r, d, -1.0, 1.0);
    let mut out: Vec<(&'static str, Vec<TensorCheck>)> = Vec::new();

    let (x, w, b) = (t([2, 6, 6, 2]), t([3, 3, 2, 3]), t([1, 1, 1, 3]));
    out.push(("conv2d valid", check_op(vec![("x", x), ("w", w), ("b", b)], &|g, n| g.conv2d(n[0], n[1], n[2], ConvSpec::valid(3, 1)), 1)));
    let (x, w, b) = (t([1, 5, 5, 2]), t([5, 5, 2, 2]), t([1, 1, 1, 2]));
    out.push(("conv2d same", check_op(vec![("x", x), ("w", w), ("b", b)], &|g, n| g.conv2d(n[0], n[1], n[2], ConvSpec::same(5)), 2)));
    let (x, w, b) = (t([2, 7, 7, 1]), t([3, 3, 1, 2]), t([1, 1, 1, 2]));
    out.push(("conv2d stride 2", check_op(vec![("x", x), ("w", w), ("b", b)], &|g, n| g.conv2d(n[0], n[1], n[2], ConvSpec::valid(3, 2)), 3)));
    let (x, w) = (t([2, 5, 5, 3]), t([3, 3, 3, 1]));
    out.push(("depthwise same", check_op(vec![("x", x), ("w", w)], &|g, n| g.depthwise_conv2d(n[0], n[1], ConvSpec::same(3)), 4)));
    let (x, w) = (t([1, 7, 7, 2]), t([3, 3, 2, 1]));
    out.push(("depthwise stride 2", check_op(vec![("x", x), ("w", w)], &|g, n| g.depthwise_conv2d(n[0], n[1], ConvSpec::valid(3, 2)), 5)));
    let (x, w, b) = (t([2, 3, 3, 4]), t([1, 1, 4, 3]), t([1, 1, 1, 3]));
    out.push(("pointwise", check_op(vec![("x", x), ("w", w), ("b", b)], &|g, n| g.pointwise_conv2d(n[0], n[1], n[2]), 6)));
    let (x, dw, pw, b) = (t([1, 5, 5, 3]), t([3, 3, 3, 1]), t([1, 1, 3, 4]), t([1, 1, 1, 4]));
    out.push((
        "separable",
        check_op(vec![("x", x), ("dw", dw), ("pw", pw), ("b", b)], &|g, n| g.separable_conv(n[0], n[1], n[2], n[3], ConvSpec::same(3)), 7),
    ));
    let (x, w, b) = (t([2, 2, 2, 3]), t([1, 1, 12, 4]), t([1, 1, 1, 4]));
    out.push(("dense", check_op(vec![("x", x), ("w", w), ("b", b)], &|g, n| g.dense(n[0], n[1], n[2]), 8)));
    let (a, c) = (t([2, 3, 3, 2]), t([2, 3, 3, 2]));
    out.push(("add", check_op(vec![("a", a), ("b", c)], &|g, n| g.add(n[0], n[1]), 9)));
    let (a, c) = (t([2, 3, 3, 2]), t([2, 3, 3, 3]));
    out.push(("concat", check_op(vec![("a", a), ("b", c)], &|g, n| g.concat_channels(n[0], n[1]), 10)));
    let x = t([2, 3, 3, 2]);
    out.push(("affine", check_op(vec![("x", x)], &|g, n| Ok(g.affine(n[0], -1.5, 0.25)), 16)));
    let x = t([2, 4, 4, 3]);
    out.push(("global_avg_pool", check_op(vec![("x", x)], &|g, n| Ok(g.global_avg_pool(n[0])), 11)));
    let x = t([3, 1, 1, 6]).map(|v| 3.0 * v);
    out.push(("softmax", check_op(vec![("x", x)], &|g, n| Ok(g.softmax(n[0])), 12)));

    let mut r2 = rng(43);
    let x = separated(&mut r2, [2, 4, 4, 3]);
    out.push(("relu", check_op(vec![("x", x)], &|g, n| Ok(g.relu(n[0])), 13)));
    let x = separated(&mut r2, [2, 4, 6, 2]);
    out.push(("max_pool2d", check_op(vec![("x", x)], &|g, n| g.max_pool2d(n[0], 2, 2), 14)));

    let logits = random_tensor(&mut rng(44), [4, 1, 1, 6], -2.0, 2.0);
    let weights = LossConfig::from_counts(&[5, 1, 3, 2, 8, 4], ClassWeightMode::InverseFrequency);
    out.push((
        "weighted cce",
        check_op(vec![("logits", logits)], &move |g, n| g.cce_loss(n[0], &[0, 5, 2, 2], &weights), 15),
    ));
    out
}

pub fn small_dual_config() -> ModelConfig {
    ModelConfig {
        image_size: 16,
        entry_kernels: vec![1, 7],
        stem_channels: 4,
        middle_blocks: 1,
        ..ModelConfig::default()
    }
}

/// Finite-difference check of every parameter tensor of a dual-stem model
/// under the weighted cross-entropy loss.
pub fn model_gradient_checks() -> Vec<TensorCheck> {
    let model = LobeClassifier::<f64>::build(&small_dual_config(), 5).unwrap();
    let images = random_tensor(&mut rng(6), [2, 16, 16, 1], 0.0, 1.0);
    let labels = [1, 4];
    let weights = LossConfig::new(vec![1.0, 0.5, 1.0, 1.0, 2.0, 1.0]).unwrap();
    let loss_of = |m: &LobeClassifier<f64>| -> (Graph<f64>, NodeId) {
        let mut g = Graph::new();
        let x = g.input(images.clone());
        let logits = m.logits(&mut g, x).unwrap();
        let loss = g.cce_loss(logits, &labels, &weights).unwrap();
        (g, loss)
    };
    let (g, loss) = loss_of(&model);
    let grads = g.backward(loss).unwrap();
    finite_difference_check(
        model.params(),
        &grads,
        |s| {
            let m = model.clone().with_params(s.clone()).unwrap();
            let (g, l) = loss_of(&m);
            g.value(l).data()[0]
        },
        FD_STEP_NETWORK,
        MIN_COORDS,
        7,
    )
}

/// Runs a valid convolution over the whole sweep and lists every geometry
/// whose output extent differs from the closed form or from placement counting.
pub fn shape_sweep_mismatches() -> Vec<String> {
    let mut bad = Vec::new();
    for n in 7..=64usize {
        let x = Tensor4::<f32>::zeros([1, n, n, 1]);
        for f in [1usize, 3, 5, 7] {
            let w = Tensor4::<f32>::zeros([f, f, 1, 1]);
            for s in [1usize, 2] {
                let expected = (n - f) / s + 1;
                let y = conv2d(&x, &w, &[0.0], ConvSpec::valid(f, s)).unwrap();
                let formula = out_extent(n, f, s).unwrap();
                let d = y.dims();
                if d.h != expected || d.w != expected || formula != expected || placements(n, f, s) != expected {
                    bad.push(format!("n={n} f={f} s={s}: got {}x{}, formula {formula}, expected {expected}", d.h, d.w));
                }
            }
        }
    }
    bad
}

/// Every (left, right) pair: fused label against the written rules, symmetry,
/// one-hot probability fusion, plus surjectivity over the 16 classes.
pub fn fusion_mismatches() -> Vec<String> {
    let mut bad = Vec::new();
    let mut hit = [false; NUM_GLAND_CLASSES];
    for l in LobeClass::ALL {
        for r in LobeClass::ALL {
            let g = fuse_labels(l, r).code();
            hit[g] = true;
            if g != fusion_oracle(l, r) {
                bad.push(format!("{l}/{r}: {g} vs rule {}", fusion_oracle(l, r)));
            }
            if g != fuse_labels(r, l).code() {
                bad.push(format!("{l}/{r}: not symmetric"));
            }
            let mut pl = [0.0; 6];
            let mut pr = [0.0; 6];
            pl[l.code()] = 1.0;
            pr[r.code()] = 1.0;
            let q = fuse_probs(&pl, &pr).unwrap();
            let mut expected = [0.0; NUM_GLAND_CLASSES];
            expected[g] = 1.0;
            if q != expected {
                bad.push(format!("{l}/{r}: one-hot fusion {q:?}"));
            }
        }
    }
    if fuse_labels(LobeClass::Normal, LobeClass::Cancer) != dualscope_core::GlandClass::base(LobeClass::Cancer) {
        bad.push("normal/cancer is not cancer".into());
    }
    for (c, h) in hit.iter().enumerate() {
        if !h {
            bad.push(format!("class {c} unreachable"));
        }
    }
    bad
}

/// Uniform-logit loss and weight-doubling linearity: returns
/// (|loss - ln 6|, |2·loss(w) - loss(2w)|).
pub fn loss_oracle_errors() -> (f64, f64) {
    let uniform = Tensor4::<f64>::zeros([5, 1, 1, 6]);
    let labels = [0, 1, 2, 3, 5];
    let l = cce_loss(&uniform, &labels, &LossConfig::uniform(6)).unwrap();
    let logits = random_tensor(&mut rng(9), [5, 1, 1, 6], -3.0, 3.0);
    let w = vec![0.5, 1.25, 2.0, 0.75, 1.0, 3.0];
    let w2: Vec<f64> = w.iter().map(|v| 2.0 * v).collect();
    let a = cce_loss(&logits, &labels, &LossConfig::new(w).unwrap()).unwrap();
    let b = cce_loss(&logits, &labels, &LossConfig::new(w2).unwrap()).unwrap();
    ((l - 6f64.ln()).abs(), (2.0 * a - b).abs())
}

/// Largest disagreement between `fold_metrics` and pair counting over
/// `cases` random prediction vectors.
pub fn metrics_oracle_max_diff(cases: usize) -> f64 {
    let mut r = rng(12);
    let mut worst: f64 = 0.0;
    let cmp = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(x), Some(y)) => (x - y).abs(),
        (None, None) => 0.0,
        _ => f64::INFINITY,
    };
    for _ in 0..cases {
        let classes = r.random_range(2..=16usize);
        let n = r.random_range(1..=30usize);
        let truth: Vec<usize> = (0..n).map(|_| r.random_range(0..classes)).collect();
        let pred: Vec<usize> = truth
            .iter()
            .map(|&t| if r.random_bool(0.5) { t } else { r.random_range(0..classes) })
            .collect();
        let m = fold_metrics(&confusion_of(&truth, &pred, classes));
        let o = pair_count_metrics(&truth, &pred, classes);
        for d in [
            cmp(m.accuracy, Some(o.accuracy)),
            cmp(m.ppv, o.ppv),
            cmp(m.sensitivity, o.sensitivity),
            cmp(m.specificity, o.specificity),
            cmp(m.npv, o.npv),
            cmp(m.f1, o.f1),
        ] {
            worst = worst.max(d);
        }
    }
    worst
}

/// Largest per-class spread of fold counts for the imbalanced preset, k = 10.
pub fn imbalanced_fold_spread() -> usize {
    let samples = synth_generate(&SyntheticSpec::imbalanced(8, 3)).unwrap();
    let labels: Vec<usize> = samples.iter().map(|s| s.gland_label().code()).collect();
    let folds = stratified_kfold(&labels, 10, 21).unwrap();
    let mut worst = 0;
    for c in 0..NUM_GLAND_CLASSES {
        let counts: Vec<usize> = folds.folds.iter().map(|f| f.iter().filter(|&&i| labels[i] == c).count()).collect();
        worst = worst.max(counts.iter().max().unwrap() - counts.iter().min().unwrap());
    }
    worst
}
