mod common;

use common::*;
use dualscope_core::tensor::{
    concat_channels, conv2d, depthwise_conv2d, global_avg_pool, max_pool2d, pointwise_conv2d, separable_conv, softmax,
};
use dualscope_core::{ConvSpec, Padding, Tensor4};
use proptest::prelude::*;
use rand::Rng;

const TOL: f64 = 1e-10;

fn random_spec(r: &mut rand_chacha::ChaCha8Rng, n: usize) -> (ConvSpec, usize) {
    let f = [1, 3, 5, 7][r.random_range(0..4)];
    if f <= n && r.random_bool(0.5) {
        let s = r.random_range(1..=2);
        (ConvSpec::valid(f, s), 0)
    } else {
        (ConvSpec::same(f), f / 2)
    }
}

#[test]
fn conv2d_matches_naive_loops() {
    let mut r = rng(100);
    for case in 0..120 {
        let n = r.random_range(1..=3);
        let hw = r.random_range(3..=11);
        let (cin, cout) = (r.random_range(1..=4), r.random_range(1..=4));
        let (spec, pad) = random_spec(&mut r, hw);
        let f = spec.kernel;
        let x = random_tensor(&mut r, [n, hw, hw, cin], -1.0, 1.0);
        let w = random_tensor(&mut r, [f, f, cin, cout], -1.0, 1.0);
        let b: Vec<f64> = (0..cout).map(|_| r.random_range(-1.0..1.0)).collect();
        let got = conv2d(&x, &w, &b, spec).unwrap();
        let want = naive_conv2d(&x, &w, &b, spec.stride, pad);
        assert!(max_abs_diff(&got, &want) < TOL, "case {case}: {spec:?}");
    }
}

#[test]
fn depthwise_matches_naive_loops() {
    let mut r = rng(101);
    for case in 0..120 {
        let hw = r.random_range(3..=11);
        let c = r.random_range(1..=5);
        let (spec, pad) = random_spec(&mut r, hw);
        let f = spec.kernel;
        let x = random_tensor(&mut r, [2, hw, hw, c], -1.0, 1.0);
        let w = random_tensor(&mut r, [f, f, c, 1], -1.0, 1.0);
        let got = depthwise_conv2d(&x, &w, spec).unwrap();
        let want = naive_depthwise(&x, &w, spec.stride, pad);
        assert!(max_abs_diff(&got, &want) < TOL, "case {case}: {spec:?}");
    }
}

#[test]
fn pointwise_matches_naive_loops() {
    let mut r = rng(102);
    for case in 0..120 {
        let (n, hw) = (r.random_range(1..=3), r.random_range(1..=8));
        let (cin, cout) = (r.random_range(1..=6), r.random_range(1..=6));
        let x = random_tensor(&mut r, [n, hw, hw, cin], -1.0, 1.0);
        let w = random_tensor(&mut r, [1, 1, cin, cout], -1.0, 1.0);
        let b: Vec<f64> = (0..cout).map(|_| r.random_range(-1.0..1.0)).collect();
        let got = pointwise_conv2d(&x, &w, &b).unwrap();
        assert!(max_abs_diff(&got, &naive_pointwise(&x, &w, &b)) < TOL, "case {case}");
    }
}

#[test]
fn pointwise_agrees_with_unit_kernel_conv() {
    let mut r = rng(103);
    let x = random_tensor(&mut r, [2, 5, 4, 3], -1.0, 1.0);
    let w = random_tensor(&mut r, [1, 1, 3, 2], -1.0, 1.0);
    let a = pointwise_conv2d(&x, &w, &[0.1, -0.2]).unwrap();
    let b = conv2d(&x, &w, &[0.1, -0.2], ConvSpec::valid(1, 1)).unwrap();
    assert!(max_abs_diff(&a, &b) < TOL);
}

#[test]
fn separable_is_depthwise_then_pointwise() {
    let mut r = rng(104);
    for _ in 0..20 {
        let x = random_tensor(&mut r, [2, 7, 7, 3], -1.0, 1.0);
        let dw = random_tensor(&mut r, [3, 3, 3, 1], -1.0, 1.0);
        let pw = random_tensor(&mut r, [1, 1, 3, 5], -1.0, 1.0);
        let b = [0.5, 0.0, -0.5, 1.0, 0.25];
        let got = separable_conv(&x, &dw, &pw, &b, ConvSpec::same(3)).unwrap();
        let want = naive_pointwise(&naive_depthwise(&x, &dw, 1, 1), &pw, &b);
        assert!(max_abs_diff(&got, &want) < TOL);
    }
}

#[test]
fn same_padding_keeps_spatial_dims() {
    for f in [1, 3, 5, 7] {
        let x = Tensor4::<f32>::zeros([1, 9, 13, 2]);
        let w = Tensor4::<f32>::zeros([f, f, 2, 3]);
        let y = conv2d(&x, &w, &[0.0; 3], ConvSpec::same(f)).unwrap();
        assert_eq!(y.dims().as_array(), [1, 9, 13, 3]);
        assert_eq!(ConvSpec::same(f).padding, Padding::Same);
    }
}

#[test]
fn shape_sweep_matches_window_counting() {
    assert_eq!(common::scenarios::shape_sweep_mismatches(), Vec::<String>::new());
}

#[test]
fn max_pool_matches_window_scan() {
    let mut r = rng(105);
    let x = random_tensor(&mut r, [2, 6, 8, 3], -1.0, 1.0);
    let y = max_pool2d(&x, 2, 2).unwrap();
    for n in 0..2 {
        for oy in 0..3 {
            for ox in 0..4 {
                for c in 0..3 {
                    let m = (0..2)
                        .flat_map(|dy| (0..2).map(move |dx| (dy, dx)))
                        .map(|(dy, dx)| x.at(n, 2 * oy + dy, 2 * ox + dx, c))
                        .fold(f64::NEG_INFINITY, f64::max);
                    assert_eq!(y.at(n, oy, ox, c), m);
                }
            }
        }
    }
}

#[test]
fn global_avg_pool_is_the_spatial_mean() {
    let x = Tensor4::<f64>::from_fn([1, 2, 3, 2], |[_, y, x, c]| (y * 3 + x) as f64 + 10.0 * c as f64);
    assert_eq!(global_avg_pool(&x).data(), &[2.5, 12.5]);
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(v in proptest::collection::vec(-50.0f64..50.0, 6 * 3)) {
        let p = softmax(&Tensor4::new([3, 1, 1, 6], v.clone()).unwrap());
        for n in 0..3 {
            let row = p.sample(n);
            prop_assert!(row.iter().all(|&q| (0.0..=1.0).contains(&q)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let shifted: Vec<f64> = v[n * 6..n * 6 + 6].iter().map(|x| x + 7.5).collect();
            let q = softmax(&Tensor4::new([1, 1, 1, 6], shifted).unwrap());
            for (a, b) in row.iter().zip(q.data()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn concat_preserves_both_operands(ca in 1usize..4, cb in 1usize..4, seed in 0u64..1000) {
        let mut r = rng(seed);
        let a = random_tensor(&mut r, [2, 3, 2, ca], -1.0, 1.0);
        let b = random_tensor(&mut r, [2, 3, 2, cb], -1.0, 1.0);
        let y = concat_channels(&a, &b).unwrap();
        prop_assert_eq!(y.dims().c, ca + cb);
        for n in 0..2 {
            for yy in 0..3 {
                for x in 0..2 {
                    for c in 0..ca {
                        prop_assert_eq!(y.at(n, yy, x, c), a.at(n, yy, x, c));
                    }
                    for c in 0..cb {
                        prop_assert_eq!(y.at(n, yy, x, ca + c), b.at(n, yy, x, c));
                    }
                }
            }
        }
    }
}
