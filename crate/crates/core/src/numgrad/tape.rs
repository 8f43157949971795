use super::ops::{self, UpsampleMode};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Index of a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: NodeId,
        kernel: NodeId,
    },
    Upsample {
        input: NodeId,
        mode: UpsampleMode,
    },
    InstanceNorm {
        input: NodeId,
        eps: f64,
    },
    ScaleChannels {
        input: NodeId,
        gains: NodeId,
    },
    LeakyRelu {
        input: NodeId,
        slope: f64,
    },
    MatVec {
        weight: NodeId,
        input: NodeId,
        bias: NodeId,
    },
    AddChannelBias {
        input: NodeId,
        bias: NodeId,
    },
    Clamp {
        input: NodeId,
        lo: f64,
        hi: f64,
    },
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op,
}

/// Records primitive applications so gradients can be replayed backward.
///
/// Node ids are handed out in recording order, and every op only consumes
/// already-recorded ids, so index order is a topological order.
#[derive(Clone, Debug, Default)]
pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
}

/// Gradient buffers produced by [`Tape::backward`].
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    visited: Vec<NodeId>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the seeded output w.r.t. `id`; `None` if `id` does not
    /// influence the output.
    pub fn get(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Like [`get`](Self::get) but returns zeros shaped like `like` when absent.
    pub fn get_or_zeros(&self, id: NodeId, like: &Tensor<T>) -> Tensor<T> {
        self.get(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.dims()))
    }

    /// Non-leaf nodes in the order their backward rules ran.
    pub fn visit_order(&self) -> &[NodeId] {
        &self.visited
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    fn push(&mut self, value: Tensor<T>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn conv2d(&mut self, input: NodeId, kernel: NodeId) -> Result<NodeId> {
        let v = ops::conv2d(self.value(input), self.value(kernel))?;
        Ok(self.push(v, Op::Conv2d { input, kernel }))
    }

    pub fn upsample(&mut self, input: NodeId, mode: UpsampleMode) -> Result<NodeId> {
        let v = ops::upsample(self.value(input), mode)?;
        Ok(self.push(v, Op::Upsample { input, mode }))
    }

    pub fn instance_norm(&mut self, input: NodeId, eps: f64) -> Result<NodeId> {
        let v = ops::instance_norm(self.value(input), eps)?;
        Ok(self.push(v, Op::InstanceNorm { input, eps }))
    }

    pub fn scale_channels(&mut self, input: NodeId, gains: NodeId) -> Result<NodeId> {
        let v = ops::scale_channels(self.value(input), self.value(gains))?;
        Ok(self.push(v, Op::ScaleChannels { input, gains }))
    }

    pub fn leaky_relu(&mut self, input: NodeId, slope: f64) -> Result<NodeId> {
        let v = ops::leaky_relu(self.value(input), slope)?;
        Ok(self.push(v, Op::LeakyRelu { input, slope }))
    }

    pub fn matvec(&mut self, weight: NodeId, input: NodeId, bias: NodeId) -> Result<NodeId> {
        let v = ops::matvec(self.value(weight), self.value(input), self.value(bias))?;
        Ok(self.push(
            v,
            Op::MatVec {
                weight,
                input,
                bias,
            },
        ))
    }

    pub fn add_channel_bias(&mut self, input: NodeId, bias: NodeId) -> Result<NodeId> {
        let v = ops::add_channel_bias(self.value(input), self.value(bias))?;
        Ok(self.push(v, Op::AddChannelBias { input, bias }))
    }

    pub fn clamp(&mut self, input: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        let v = ops::clamp(self.value(input), lo, hi);
        Ok(self.push(v, Op::Clamp { input, lo, hi }))
    }

    /// Reverse-mode sweep from `output`, seeded with `seed` (same dims as the
    /// output value). Nodes are visited in strictly decreasing id order.
    pub fn backward(&self, output: NodeId, seed: Tensor<T>) -> Result<Gradients<T>> {
        if output.0 >= self.nodes.len() {
            return Err(Error::InvalidArgument(format!(
                "backward: node {} not on tape",
                output.0
            )));
        }
        let out_dims = self.value(output).dims();
        if seed.dims() != out_dims {
            return Err(Error::Shape {
                op: "backward",
                axis: "seed",
                expected: self.value(output).len(),
                found: seed.len(),
            });
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(seed);
        let mut visited = Vec::new();

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !matches!(node.op, Op::Leaf) {
                visited.push(NodeId(idx));
            }
            let v = |id: NodeId| &self.nodes[id.0].value;
            match node.op {
                Op::Leaf => {}
                Op::Conv2d { input, kernel } => {
                    let (gx, gk) = ops::conv2d_backward(v(input), v(kernel), &g)?;
                    accumulate(&mut grads, input, gx)?;
                    accumulate(&mut grads, kernel, gk)?;
                }
                Op::Upsample { input, mode } => {
                    let gx = ops::upsample_backward(v(input).dims(), &g, mode)?;
                    accumulate(&mut grads, input, gx)?;
                }
                Op::InstanceNorm { input, eps } => {
                    let gx = ops::instance_norm_backward(v(input), eps, &g)?;
                    accumulate(&mut grads, input, gx)?;
                }
                Op::ScaleChannels { input, gains } => {
                    let (gx, gg) = ops::scale_channels_backward(v(input), v(gains), &g)?;
                    accumulate(&mut grads, input, gx)?;
                    accumulate(&mut grads, gains, gg)?;
                }
                Op::LeakyRelu { input, slope } => {
                    let gx = ops::leaky_relu_backward(v(input), slope, &g)?;
                    accumulate(&mut grads, input, gx)?;
                }
                Op::MatVec {
                    weight,
                    input,
                    bias,
                } => {
                    let (gw, gx, gb) = ops::matvec_backward(v(weight), v(input), v(bias), &g)?;
                    accumulate(&mut grads, weight, gw)?;
                    accumulate(&mut grads, input, gx)?;
                    accumulate(&mut grads, bias, gb)?;
                }
                Op::AddChannelBias { input, bias } => {
                    let (gx, gb) = ops::add_channel_bias_backward(v(input).dims(), &g)?;
                    accumulate(&mut grads, input, gx)?;
                    accumulate(&mut grads, bias, gb)?;
                }
                Op::Clamp { input, lo, hi } => {
                    let gx = ops::clamp_backward(v(input), lo, hi, &g)?;
                    accumulate(&mut grads, input, gx)?;
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads, visited })
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], id: NodeId, g: Tensor<T>) -> Result<()> {
    match &mut grads[id.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}
