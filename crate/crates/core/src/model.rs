//! Single- and dual-kernel lobe classifiers on a small Xception-style
//! backbone, and the whole-gland forward pass.
//!
//! Layout: one entry stem per kernel size (conv `k×k` same-padded, ReLU,
//! 2×2 max pool), channel concatenation of the stems, `middle_blocks`
//! residual blocks of two separable convolutions, an exit separable
//! convolution that doubles the width, global average pooling and a dense
//! layer onto the six lobe classes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use std::io::{Read, Write};

use crate::autodiff::{read_checkpoint, write_checkpoint, Graph, NodeId, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::labelfuse::{fuse_probs, NUM_GLAND_CLASSES, NUM_LOBE_CLASSES};
use crate::tensor::{ConvSpec, Dims, Element, Tensor4};

pub const SUPPORTED_KERNELS: [usize; 4] = [1, 3, 5, 7];
const BLOCK_KERNEL: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub image_size: usize,
    /// One kernel (single-channel) or a smaller and a larger kernel.
    pub entry_kernels: Vec<usize>,
    pub stem_channels: usize,
    pub middle_blocks: usize,
    pub num_lobe_classes: usize,
    /// One classifier for both lobes instead of one per side.
    pub share_lobe_weights: bool,
    /// Mirror right-lobe images left to right before inference.
    pub mirror_right: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            image_size: 64,
            entry_kernels: vec![1, 7],
            stem_channels: 16,
            middle_blocks: 4,
            num_lobe_classes: NUM_LOBE_CLASSES,
            share_lobe_weights: true,
            mirror_right: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let k = &self.entry_kernels;
        if k.is_empty() || k.len() > 2 {
            return Err(Error::Config(format!(
                "entry_kernels needs one or two sizes, got {k:?}"
            )));
        }
        if let Some(&bad) = k.iter().find(|k| !SUPPORTED_KERNELS.contains(k)) {
            return Err(Error::Config(format!(
                "kernel size {bad} not supported (allowed: 1, 3, 5, 7)"
            )));
        }
        if k.len() == 2 && k[0] >= k[1] {
            return Err(Error::Config(format!(
                "dual-channel kernels must be (smaller, larger), got {k:?}"
            )));
        }
        if self.num_lobe_classes != NUM_LOBE_CLASSES {
            return Err(Error::Config(format!(
                "num_lobe_classes is fixed at {NUM_LOBE_CLASSES}"
            )));
        }
        if self.image_size < 2 {
            return Err(Error::Config(format!("image_size {} too small", self.image_size)));
        }
        if self.stem_channels == 0 {
            return Err(Error::Config("stem_channels must be positive".into()));
        }
        Ok(())
    }

    pub fn is_dual(&self) -> bool {
        self.entry_kernels.len() == 2
    }

    /// Channel count after the stems are merged.
    pub fn merged_channels(&self) -> usize {
        self.stem_channels * self.entry_kernels.len()
    }

    /// Row label in kernel notation: `"1 & 7"` or `"7 × 7"`.
    pub fn kernel_label(&self) -> String {
        kernel_label(&self.entry_kernels)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: ModelConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn kernel_label(kernels: &[usize]) -> String {
    match kernels {
        [k] => format!("{k} × {k}"),
        ks => ks.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" & "),
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Stem {
    kernel: usize,
    weight: ParamId,
    bias: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
struct Separable {
    depthwise: ParamId,
    pointwise: ParamId,
    bias: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
struct Block {
    first: Separable,
    second: Separable,
}

/// One lobe classifier: images `[n, s, s, 1]` to six class scores.
#[derive(Clone, Debug, PartialEq)]
pub struct LobeClassifier<T = f32> {
    config: ModelConfig,
    params: ParamStore<T>,
    stems: Vec<Stem>,
    blocks: Vec<Block>,
    exit: Separable,
    head_weight: ParamId,
    head_bias: ParamId,
}

const RESIDUAL_GAIN: f64 = 1.0;
/// Small head so an untrained classifier starts close to uniform.
const HEAD_GAIN: f64 = 0.05;

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    /// Fan-in scaled uniform: `U(-sqrt(3 gain / fan_in), sqrt(3 gain / fan_in))`,
    /// drawn in `f64`. Gain 2 (He) for maps feeding a ReLU, 1 for linear ones.
    fn uniform<T: Element>(&mut self, dims: [usize; 4], fan_in: usize, gain: f64) -> Tensor4<T> {
        let limit = (3.0 * gain / fan_in as f64).sqrt();
        Tensor4::from_fn(dims, |_| T::from_f64(self.rng.random_range(-limit..limit)))
    }
}

fn separable<T: Element>(
    params: &mut ParamStore<T>,
    init: &mut Init,
    name: &str,
    c_in: usize,
    c_out: usize,
    pointwise_gain: f64,
) -> Separable {
    let k = BLOCK_KERNEL;
    Separable {
        // no nonlinearity between the two halves, so only one carries the ReLU gain
        depthwise: params.add(format!("{name}.depthwise"), init.uniform([k, k, c_in, 1], k * k, 1.0)),
        pointwise: params.add(format!("{name}.pointwise"), init.uniform([1, 1, c_in, c_out], c_in, pointwise_gain)),
        bias: params.add(format!("{name}.bias"), Tensor4::zeros([1, 1, 1, c_out])),
    }
}

impl<T: Element> LobeClassifier<T> {
    /// Deterministic construction from `seed`.
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init = Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let mut params = ParamStore::new();
        let s = config.stem_channels;
        let stems = config
            .entry_kernels
            .iter()
            .map(|&k| Stem {
                kernel: k,
                weight: params.add(format!("stem{k}.weight"), init.uniform([k, k, 1, s], k * k, 2.0)),
                bias: params.add(format!("stem{k}.bias"), Tensor4::zeros([1, 1, 1, s])),
            })
            .collect();
        let width = config.merged_channels();
        // residual branches start scaled down so the identity path dominates
        let branch_gain = RESIDUAL_GAIN / config.middle_blocks.max(1) as f64;
        let blocks = (0..config.middle_blocks)
            .map(|i| Block {
                first: separable(&mut params, &mut init, &format!("block{i}.sep1"), width, width, 2.0),
                second: separable(&mut params, &mut init, &format!("block{i}.sep2"), width, width, branch_gain),
            })
            .collect();
        let exit = separable(&mut params, &mut init, "exit.sep", width, 2 * width, 2.0);
        let head_weight = params.add(
            "head.weight",
            init.uniform([1, 1, 2 * width, config.num_lobe_classes], 2 * width, HEAD_GAIN),
        );
        let head_bias = params.add("head.bias", Tensor4::zeros([1, 1, 1, config.num_lobe_classes]));
        Ok(LobeClassifier {
            config: config.clone(),
            params,
            stems,
            blocks,
            exit,
            head_weight,
            head_bias,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Same architecture with parameter values loaded from `store` by name.
    pub fn with_params(mut self, store: ParamStore<T>) -> Result<Self> {
        if store.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "{} tensors, model has {}",
                store.len(),
                self.params.len()
            )));
        }
        for (mine, theirs) in self.params.iter().zip(store.iter()) {
            if mine.name != theirs.name || mine.dims() != theirs.dims() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} {} does not match {} {}",
                    theirs.name,
                    theirs.dims(),
                    mine.name,
                    mine.dims()
                )));
            }
        }
        self.params = store;
        Ok(self)
    }

    /// Parameter ids of the entry stem with kernel size `k`.
    pub fn stem_params(&self, k: usize) -> Option<(ParamId, ParamId)> {
        self.stems
            .iter()
            .find(|s| s.kernel == k)
            .map(|s| (s.weight, s.bias))
    }

    fn check_input(&self, dims: Dims) -> Result<()> {
        let s = self.config.image_size;
        if dims.h != s || dims.w != s || dims.c != 1 || dims.n == 0 {
            return Err(Error::shape(
                "forward_lobe",
                format!("expected [n, {s}, {s}, 1] images, got {dims}"),
            ));
        }
        Ok(())
    }

    /// Runs the entry stems and returns the merged feature map.
    pub fn merged_features(&self, g: &mut Graph<T>, images: NodeId) -> Result<NodeId> {
        self.check_input(g.value(images).dims())?;
        // pixels arrive in [0, 1]; the stems see them centred on zero
        let images = g.affine(images, 2.0, -1.0);
        let mut merged: Option<NodeId> = None;
        for stem in &self.stems {
            let w = g.param(&self.params, stem.weight);
            let b = g.param(&self.params, stem.bias);
            let h = g.conv2d(images, w, b, ConvSpec::same(stem.kernel))?;
            let h = g.relu(h);
            let h = g.max_pool2d(h, 2, 2)?;
            merged = Some(match merged {
                None => h,
                Some(prev) => g.concat_channels(prev, h)?,
            });
        }
        Ok(merged.expect("at least one stem"))
    }

    fn separable(&self, g: &mut Graph<T>, x: NodeId, layer: &Separable) -> Result<NodeId> {
        let dw = g.param(&self.params, layer.depthwise);
        let pw = g.param(&self.params, layer.pointwise);
        let b = g.param(&self.params, layer.bias);
        g.separable_conv(x, dw, pw, b, ConvSpec::same(BLOCK_KERNEL))
    }

    /// Backbone and head on a merged feature map; returns class scores.
    pub fn head_logits(&self, g: &mut Graph<T>, merged: NodeId) -> Result<NodeId> {
        let mut x = merged;
        for block in &self.blocks {
            let h = self.separable(g, x, &block.first)?;
            let h = g.relu(h);
            let h = self.separable(g, h, &block.second)?;
            // blocks keep the width, so the skip path is the identity
            let sum = g.add(x, h)?;
            x = g.relu(sum);
        }
        let h = self.separable(g, x, &self.exit)?;
        let h = g.relu(h);
        let pooled = g.global_avg_pool(h);
        let w = g.param(&self.params, self.head_weight);
        let b = g.param(&self.params, self.head_bias);
        g.dense(pooled, w, b)
    }

    /// Class scores `[n, 1, 1, 6]` recorded on `g`.
    pub fn logits(&self, g: &mut Graph<T>, images: NodeId) -> Result<NodeId> {
        let merged = self.merged_features(g, images)?;
        self.head_logits(g, merged)
    }

    /// Six-class probabilities per image.
    pub fn forward_lobe(&self, images: &Tensor4<T>) -> Result<Tensor4<T>> {
        let mut g = Graph::new();
        let x = g.input(images.clone());
        let logits = self.logits(&mut g, x)?;
        let p = g.softmax(logits);
        Ok(g.value(p).clone())
    }
}

/// Gland classifier: one shared lobe classifier, or one per side.
#[derive(Clone, Debug, PartialEq)]
pub struct GlandModel<T = f32> {
    pub left: LobeClassifier<T>,
    pub right: Option<LobeClassifier<T>>,
}

impl<T: Element> GlandModel<T> {
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        let left = LobeClassifier::build(config, seed)?;
        let right = if config.share_lobe_weights {
            None
        } else {
            Some(LobeClassifier::build(config, seed ^ 0x5249_4748_5400_0000)?)
        };
        Ok(GlandModel { left, right })
    }

    pub fn config(&self) -> &ModelConfig {
        self.left.config()
    }

    pub fn right_classifier(&self) -> &LobeClassifier<T> {
        self.right.as_ref().unwrap_or(&self.left)
    }

    /// Right-lobe images as the classifier sees them.
    pub fn prepare_right(&self, right: &Tensor4<T>) -> Tensor4<T> {
        if self.config().mirror_right {
            right.flip_horizontal()
        } else {
            right.clone()
        }
    }

    pub fn scalar_count(&self) -> usize {
        self.left.params().scalar_count()
            + self.right.as_ref().map_or(0, |r| r.params().scalar_count())
    }

    /// Lobe probabilities for both sides.
    pub fn forward_lobes(&self, left: &Tensor4<T>, right: &Tensor4<T>) -> Result<(Tensor4<T>, Tensor4<T>)> {
        let right = self.prepare_right(right);
        Ok((
            self.left.forward_lobe(left)?,
            self.right_classifier().forward_lobe(&right)?,
        ))
    }

    pub fn forward_gland(&self, left: &Tensor4<T>, right: &Tensor4<T>) -> Result<Tensor4<T>> {
        forward_gland(&self.left, self.right_classifier(), left, &self.prepare_right(right))
    }
}

const RIGHT_PREFIX: &str = "right/";

impl GlandModel<f32> {
    /// Writes every parameter to one checkpoint. Tensors of a separate
    /// right-lobe classifier are stored under a `right/` prefix.
    pub fn write_checkpoint(&self, out: &mut impl Write) -> Result<()> {
        let mut store = self.left.params().clone();
        if let Some(right) = &self.right {
            for p in right.params().iter() {
                store.add(format!("{RIGHT_PREFIX}{}", p.name), p.value.clone());
            }
        }
        write_checkpoint(&store, out)
    }

    /// Rebuilds a model of architecture `config` from a checkpoint written
    /// by [`GlandModel::write_checkpoint`].
    pub fn read_checkpoint(config: &ModelConfig, inp: &mut impl Read) -> Result<Self> {
        let stored = read_checkpoint(inp)?;
        let template = GlandModel::build(config, 0)?;
        let (mut left, mut right) = (ParamStore::new(), ParamStore::new());
        for p in stored.iter() {
            match p.name.strip_prefix(RIGHT_PREFIX) {
                Some(name) => right.add(name, p.value.clone()),
                None => left.add(p.name.clone(), p.value.clone()),
            };
        }
        let right = match template.right {
            Some(r) => Some(r.with_params(right)?),
            None if right.is_empty() => None,
            None => {
                return Err(Error::Checkpoint(
                    "checkpoint holds a separate right-lobe model but the config shares weights".into(),
                ))
            }
        };
        Ok(GlandModel {
            left: template.left.with_params(left)?,
            right,
        })
    }
}

/// Sixteen-class gland probabilities `[n, 1, 1, 16]` from both lobes.
pub fn forward_gland<T: Element>(
    model_left: &LobeClassifier<T>,
    model_right: &LobeClassifier<T>,
    left: &Tensor4<T>,
    right: &Tensor4<T>,
) -> Result<Tensor4<T>> {
    if left.dims() != right.dims() {
        return Err(Error::shape(
            "forward_gland",
            format!("left {} vs right {}", left.dims(), right.dims()),
        ));
    }
    let pl = model_left.forward_lobe(left)?;
    let pr = model_right.forward_lobe(right)?;
    fuse_lobe_probs(&pl, &pr)
}

/// Applies [`fuse_probs`] per batch item of two `[n, 1, 1, 6]` tensors.
pub fn fuse_lobe_probs<T: Element>(pl: &Tensor4<T>, pr: &Tensor4<T>) -> Result<Tensor4<T>> {
    if pl.dims() != pr.dims() || pl.dims().c != NUM_LOBE_CLASSES {
        return Err(Error::shape(
            "fuse_lobe_probs",
            format!("{} vs {}", pl.dims(), pr.dims()),
        ));
    }
    let n = pl.dims().n;
    let mut out = Vec::with_capacity(n * NUM_GLAND_CLASSES);
    for b in 0..n {
        let l: Vec<f64> = pl.sample(b).iter().map(|v| v.to_f64()).collect();
        let r: Vec<f64> = pr.sample(b).iter().map(|v| v.to_f64()).collect();
        out.extend(fuse_probs(&l, &r)?.iter().map(|&q| T::from_f64(q)));
    }
    Tensor4::new([n, 1, 1, NUM_GLAND_CLASSES], out)
}
