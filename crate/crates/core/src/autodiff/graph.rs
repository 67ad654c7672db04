use std::collections::BTreeMap;

use super::loss::{cce_loss, cce_loss_grad, LossConfig};
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{self, ConvSpec, Dims, Element, Tensor4};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op<T> {
    Input,
    Param(ParamId),
    Conv2d { x: NodeId, w: NodeId, b: NodeId, spec: ConvSpec },
    Depthwise { x: NodeId, w: NodeId, spec: ConvSpec },
    Pointwise { x: NodeId, w: NodeId, b: NodeId },
    Affine { x: NodeId, scale: f64 },
    Relu(NodeId),
    MaxPool { x: NodeId, argmax: Vec<usize> },
    GlobalAvgPool(NodeId),
    Dense { x: NodeId, w: NodeId, b: NodeId },
    Add(NodeId, NodeId),
    Concat(NodeId, NodeId),
    Softmax(NodeId),
    Cce { logits: NodeId, labels: Vec<usize>, weights: LossConfig },
    WeightedSum { x: NodeId, coeffs: Tensor4<T> },
}

#[derive(Debug)]
struct Node<T> {
    op: Op<T>,
    value: Tensor4<T>,
}

/// A tape of forward values. Nodes are appended in evaluation order, so the
/// node list is already a topological order.
#[derive(Debug, Default)]
pub struct Graph<T = f32> {
    nodes: Vec<Node<T>>,
}

/// Parameter gradients produced by [`Graph::backward`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients<T = f32> {
    grads: BTreeMap<ParamId, Tensor4<T>>,
}

impl<T: Element> Gradients<T> {
    pub fn get(&self, id: ParamId) -> Option<&Tensor4<T>> {
        self.grads.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor4<T>)> {
        self.grads.iter().map(|(&id, g)| (id, g))
    }

    /// Writes into each parameter's gradient slot; parameters the loss does
    /// not reach get zeros.
    pub fn store_into(&self, params: &mut ParamStore<T>) {
        let ids: Vec<ParamId> = params.ids().collect();
        for id in ids {
            let p = params.get_mut(id);
            p.grad = match self.grads.get(&id) {
                Some(g) => g.clone(),
                None => Tensor4::zeros(p.dims()),
            };
        }
    }
}

fn accumulate<T: Element>(slot: &mut Option<Tensor4<T>>, g: Tensor4<T>) -> Result<()> {
    *slot = Some(match slot.take() {
        None => g,
        Some(prev) => tensor::add(&prev, &g)?,
    });
    Ok(())
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor4<T> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op<T>, value: Tensor4<T>) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    fn v(&self, id: NodeId) -> &Tensor4<T> {
        &self.nodes[id.0].value
    }

    pub fn input(&mut self, value: Tensor4<T>) -> NodeId {
        self.push(Op::Input, value)
    }

    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> NodeId {
        self.push(Op::Param(id), store.get(id).value.clone())
    }

    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: NodeId, spec: ConvSpec) -> Result<NodeId> {
        let out = tensor::conv2d(self.v(x), self.v(w), self.v(b).data(), spec)?;
        Ok(self.push(Op::Conv2d { x, w, b, spec }, out))
    }

    pub fn depthwise_conv2d(&mut self, x: NodeId, w: NodeId, spec: ConvSpec) -> Result<NodeId> {
        let out = tensor::depthwise_conv2d(self.v(x), self.v(w), spec)?;
        Ok(self.push(Op::Depthwise { x, w, spec }, out))
    }

    pub fn pointwise_conv2d(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let out = tensor::pointwise_conv2d(self.v(x), self.v(w), self.v(b).data())?;
        Ok(self.push(Op::Pointwise { x, w, b }, out))
    }

    pub fn separable_conv(
        &mut self,
        x: NodeId,
        depthwise: NodeId,
        pointwise: NodeId,
        bias: NodeId,
        spec: ConvSpec,
    ) -> Result<NodeId> {
        let mid = self.depthwise_conv2d(x, depthwise, spec)?;
        self.pointwise_conv2d(mid, pointwise, bias)
    }

    /// Elementwise `scale * x + shift`.
    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> NodeId {
        let out = self.v(x).map(|v| T::from_f64(scale * v.to_f64() + shift));
        self.push(Op::Affine { x, scale }, out)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let out = tensor::relu(self.v(x));
        self.push(Op::Relu(x), out)
    }

    pub fn max_pool2d(&mut self, x: NodeId, window: usize, stride: usize) -> Result<NodeId> {
        let (out, argmax) = tensor::max_pool2d_with_indices(self.v(x), window, stride)?;
        Ok(self.push(Op::MaxPool { x, argmax }, out))
    }

    pub fn global_avg_pool(&mut self, x: NodeId) -> NodeId {
        let out = tensor::global_avg_pool(self.v(x));
        self.push(Op::GlobalAvgPool(x), out)
    }

    pub fn dense(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let out = tensor::dense(self.v(x), self.v(w), self.v(b).data())?;
        Ok(self.push(Op::Dense { x, w, b }, out))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = tensor::add(self.v(a), self.v(b))?;
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn concat_channels(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = tensor::concat_channels(self.v(a), self.v(b))?;
        Ok(self.push(Op::Concat(a, b), out))
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let out = tensor::softmax(self.v(x));
        self.push(Op::Softmax(x), out)
    }

    /// Weighted categorical cross-entropy of `logits` against class indices.
    pub fn cce_loss(&mut self, logits: NodeId, labels: &[usize], weights: &LossConfig) -> Result<NodeId> {
        let loss = cce_loss(self.v(logits), labels, weights)?;
        Ok(self.push(
            Op::Cce {
                logits,
                labels: labels.to_vec(),
                weights: weights.clone(),
            },
            Tensor4::scalar(T::from_f64(loss)),
        ))
    }

    /// `Σ x ⊙ coeffs`, a scalar probe for differentiating arbitrary nodes.
    pub fn weighted_sum(&mut self, x: NodeId, coeffs: Tensor4<T>) -> Result<NodeId> {
        if coeffs.dims() != self.v(x).dims() {
            return Err(Error::shape(
                "weighted_sum",
                format!("{} vs {}", coeffs.dims(), self.v(x).dims()),
            ));
        }
        let s: f64 = self
            .v(x)
            .data()
            .iter()
            .zip(coeffs.data())
            .map(|(a, b)| a.to_f64() * b.to_f64())
            .sum();
        Ok(self.push(Op::WeightedSum { x, coeffs }, Tensor4::scalar(T::from_f64(s))))
    }

    /// Gradients of the scalar node `loss` with respect to every parameter
    /// node that feeds it.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        let Some(node) = self.nodes.get(loss.0) else {
            return Err(Error::Graph(format!(
                "node {} does not exist; run the forward pass first",
                loss.0
            )));
        };
        if node.value.dims() != Dims::new(1, 1, 1, 1) {
            return Err(Error::Graph(format!(
                "backward needs a scalar loss, node has dims {}",
                node.value.dims()
            )));
        }
        let mut grads: Vec<Option<Tensor4<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor4::scalar(T::ONE));
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Input => {}
                Op::Param(id) => {
                    let mut slot = out.grads.remove(id);
                    accumulate(&mut slot, g)?;
                    out.grads.insert(*id, slot.expect("just accumulated"));
                }
                Op::Conv2d { x, w, b, spec } => {
                    let (gx, gw, gb) = tensor::conv2d_backward(self.v(*x), self.v(*w), &g, *spec)?;
                    accumulate(&mut grads[x.0], gx)?;
                    accumulate(&mut grads[w.0], gw)?;
                    accumulate(&mut grads[b.0], Tensor4::new(self.v(*b).dims(), gb)?)?;
                }
                Op::Depthwise { x, w, spec } => {
                    let (gx, gw) = tensor::depthwise_conv2d_backward(self.v(*x), self.v(*w), &g, *spec)?;
                    accumulate(&mut grads[x.0], gx)?;
                    accumulate(&mut grads[w.0], gw)?;
                }
                Op::Pointwise { x, w, b } => {
                    let (gx, gw, gb) = tensor::pointwise_conv2d_backward(self.v(*x), self.v(*w), &g)?;
                    accumulate(&mut grads[x.0], gx)?;
                    accumulate(&mut grads[w.0], gw)?;
                    accumulate(&mut grads[b.0], Tensor4::new(self.v(*b).dims(), gb)?)?;
                }
                Op::Affine { x, scale } => {
                    let gx = g.map(|v| T::from_f64(scale * v.to_f64()));
                    accumulate(&mut grads[x.0], gx)?;
                }
                Op::Relu(x) => {
                    let gx = tensor::relu_backward(self.v(*x), &g)?;
                    accumulate(&mut grads[x.0], gx)?;
                }
                Op::MaxPool { x, argmax } => {
                    let gx = tensor::max_pool2d_backward(self.v(*x).dims(), argmax, &g)?;
                    accumulate(&mut grads[x.0], gx)?;
                }
                Op::GlobalAvgPool(x) => {
                    let gx = tensor::global_avg_pool_backward(self.v(*x).dims(), &g)?;
                    accumulate(&mut grads[x.0], gx)?;
                }
                Op::Dense { x, w, b } => {
                    let (gx, gw, gb) = tensor::dense_backward(self.v(*x), self.v(*w), &g)?;
                    accumulate(&mut grads[x.0], gx)?;
                    accumulate(&mut grads[w.0], gw)?;
                    accumulate(&mut grads[b.0], Tensor4::new(self.v(*b).dims(), gb)?)?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], g.clone())?;
                    accumulate(&mut grads[b.0], g)?;
                }
                Op::Concat(a, b) => {
                    let (ga, gb) = tensor::concat_channels_backward(&g, self.v(*a).dims().c)?;
                    accumulate(&mut grads[a.0], ga)?;
                    accumulate(&mut grads[b.0], gb)?;
                }
                Op::Softmax(x) => {
                    let gx = tensor::softmax_backward(&self.nodes[i].value, &g)?;
                    accumulate(&mut grads[x.0], gx)?;
                }
                Op::Cce {
                    logits,
                    labels,
                    weights,
                } => {
                    let upstream = g.data()[0].to_f64();
                    let gl = cce_loss_grad(self.v(*logits), labels, weights)?
                        .map(|v| T::from_f64(v.to_f64() * upstream));
                    accumulate(&mut grads[logits.0], gl)?;
                }
                Op::WeightedSum { x, coeffs } => {
                    let upstream = g.data()[0].to_f64();
                    let gx = coeffs.map(|c| T::from_f64(c.to_f64() * upstream));
                    accumulate(&mut grads[x.0], gx)?;
                }
            }
        }
        Ok(out)
    }
}
