mod common;

use common::scenarios::fusion_mismatches;
use common::*;
use dualscope_core::labelfuse::{argmax_gland, fuse_labels, fuse_probs, GlandClass, LobeClass, NUM_GLAND_CLASSES};
use dualscope_core::model::{forward_gland, GlandModel, ModelConfig};
use proptest::prelude::*;
use rand::Rng;

fn distribution(r: &mut impl Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..6).map(|_| r.random_range(0.0..1.0f64).powi(3)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

/// Outer product of two lobe distributions, bucketed by the written rules.
fn bucket_oracle(pl: &[f64], pr: &[f64]) -> Vec<f64> {
    let mut q = vec![0.0; NUM_GLAND_CLASSES];
    for l in LobeClass::ALL {
        for r in LobeClass::ALL {
            q[fusion_oracle(l, r)] += pl[l.code()] * pr[r.code()];
        }
    }
    q
}

#[test]
fn all_label_pairs_follow_the_rules() {
    assert_eq!(fusion_mismatches(), Vec::<String>::new());
}

#[test]
fn named_examples() {
    use LobeClass::*;
    assert_eq!(fuse_labels(Normal, Cancer).name(), "cancer");
    assert_eq!(fuse_labels(Goiter, Adenoma).name(), "goiter+adenoma");
    assert_eq!(fuse_labels(Cystic, Cystic).name(), "cystic");
    assert_eq!(fuse_labels(Cancer, Thyroiditis).name(), "thyroiditis+cancer");
    let mut g = [0.0; 6];
    g[Goiter.code()] = 1.0;
    assert_eq!(argmax_gland(&fuse_probs(&g, &g).unwrap()).name(), "goiter");
}

#[test]
fn uniform_inputs_count_pairs() {
    let u = [1.0 / 6.0; 6];
    let q = fuse_probs(&u, &u).unwrap();
    assert!((q[LobeClass::Cancer.code()] - 3.0 / 36.0).abs() < 1e-15);
    assert!((q[0] - 1.0 / 36.0).abs() < 1e-15);
    for (g, &v) in q.iter().enumerate().skip(6) {
        assert!((v - 2.0 / 36.0).abs() < 1e-15, "class {g}");
    }
}

#[test]
fn random_distributions_match_the_bucket_oracle() {
    let mut r = rng(77);
    for _ in 0..200 {
        let (pl, pr) = (distribution(&mut r), distribution(&mut r));
        let q = fuse_probs(&pl, &pr).unwrap();
        for (a, b) in q.iter().zip(bucket_oracle(&pl, &pr)) {
            assert!((a - b).abs() < 1e-15);
        }
        let swapped = fuse_probs(&pr, &pl).unwrap();
        for (a, b) in q.iter().zip(swapped) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}

#[test]
fn model_gland_output_matches_the_bucket_oracle() {
    let cfg = ModelConfig {
        image_size: 16,
        stem_channels: 4,
        middle_blocks: 1,
        ..ModelConfig::default()
    };
    let m = GlandModel::<f64>::build(&cfg, 8).unwrap();
    let left = random_tensor(&mut rng(1), [3, 16, 16, 1], 0.0, 1.0);
    let right = random_tensor(&mut rng(2), [3, 16, 16, 1], 0.0, 1.0);
    let q = forward_gland(&m.left, m.right_classifier(), &left, &right).unwrap();
    assert_eq!(q, m.forward_gland(&left, &right).unwrap());
    let pl = m.left.forward_lobe(&left).unwrap();
    let pr = m.left.forward_lobe(&right).unwrap();
    for n in 0..3 {
        let want = bucket_oracle(pl.sample(n), pr.sample(n));
        let got = q.sample(n);
        assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn ties_resolve_to_the_lowest_code() {
    let mut q = [0.0; 16];
    q[3] = 0.5;
    q[9] = 0.5;
    assert_eq!(argmax_gland(&q), GlandClass::from_code(3).unwrap());
}

#[test]
fn unnormalized_inputs_are_rejected() {
    assert!(fuse_probs(&[0.5; 6], &[1.0 / 6.0; 6]).is_err());
    assert!(fuse_probs(&[1.2, -0.2, 0.0, 0.0, 0.0, 0.0], &[1.0 / 6.0; 6]).is_err());
}

proptest! {
    #[test]
    fn fusion_preserves_mass(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let (pl, pr) = (distribution(&mut r), distribution(&mut r));
        let q = fuse_probs(&pl, &pr).unwrap();
        let grid: f64 = pl.iter().flat_map(|a| pr.iter().map(move |b| a * b)).sum();
        prop_assert!((q.iter().sum::<f64>() - grid).abs() < 1e-12);
        let scan = (0..16).fold(0, |best, i| if q[i] > q[best] { i } else { best });
        prop_assert_eq!(argmax_gland(&q).code(), scan);
    }
}
