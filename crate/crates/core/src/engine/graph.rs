//! Tape of recorded operations and reverse-mode differentiation over it.

use super::conv::{self, ConvGeometry, PoolGeometry};
use super::params::ParameterSet;
use super::real::Real;
use super::tensor::Tensor;
use super::EngineError;

/// Handle to a node of one [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dOptions {
    pub stride: [usize; 2],
    pub padding: [usize; 2],
}

impl Default for Conv2dOptions {
    fn default() -> Self {
        Self {
            stride: [1, 1],
            padding: [0, 0],
        }
    }
}

impl Conv2dOptions {
    pub fn stride(s: usize) -> Self {
        Self {
            stride: [s, s],
            ..Self::default()
        }
    }

    pub fn padded(mut self, p: usize) -> Self {
        self.padding = [p, p];
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv3dOptions {
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl Default for Conv3dOptions {
    fn default() -> Self {
        Self {
            stride: [1, 1, 1],
            padding: [0, 0, 0],
        }
    }
}

#[derive(Debug, Clone)]
enum Op<T: Real> {
    Input,
    Param(String),
    Conv {
        input: NodeId,
        kernel: NodeId,
        bias: NodeId,
        stride: [usize; 3],
        padding: [usize; 3],
        spatial_rank: usize,
        geom: Option<ConvGeometry>,
        cols: Vec<T>,
    },
    MaxPool {
        input: NodeId,
        window: [usize; 3],
        stride: [usize; 3],
        spatial_rank: usize,
        argmax: Vec<usize>,
    },
    Linear {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
    },
    Relu {
        input: NodeId,
    },
    Concat {
        inputs: Vec<NodeId>,
    },
    Reshape {
        input: NodeId,
        shape: Vec<usize>,
    },
    SoftmaxXent {
        logits: NodeId,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
}

impl<T: Real> Op<T> {
    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Input | Op::Param(_) => vec![],
            Op::Conv { input, kernel, bias, .. } => vec![*input, *kernel, *bias],
            Op::MaxPool { input, .. } | Op::Relu { input } | Op::Reshape { input, .. } => vec![*input],
            Op::Linear { input, weight, bias } => vec![*input, *weight, *bias],
            Op::Concat { inputs } => inputs.clone(),
            Op::SoftmaxXent { logits, .. } => vec![*logits],
        }
    }
}

#[derive(Debug, Clone)]
struct Node<T: Real> {
    op: Op<T>,
    value: Tensor<T>,
    requires_grad: bool,
}

/// Operation records in creation order, which is a topological order.
#[derive(Debug, Clone, Default)]
pub struct Graph<T: Real = f32> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

/// Pads a 2D shape `[N,C,H,W]` to the 5D layout `[N,C,1,H,W]`.
fn as_volume(shape: &[usize], spatial_rank: usize) -> Option<[usize; 5]> {
    match (spatial_rank, shape) {
        (2, &[n, c, h, w]) => Some([n, c, 1, h, w]),
        (3, &[n, c, t, h, w]) => Some([n, c, t, h, w]),
        _ => None,
    }
}

fn volume_shape(n: usize, c: usize, dims: [usize; 3], spatial_rank: usize) -> Vec<usize> {
    if spatial_rank == 2 {
        vec![n, c, dims[1], dims[2]]
    } else {
        vec![n, c, dims[0], dims[1], dims[2]]
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// All node handles in topological order.
    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    /// ReLU on/off states and max-pool winners of the recorded pass. Within a
    /// region where this pattern is constant the graph is smooth.
    pub fn switch_pattern(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu { input } => out.extend(
                    self.nodes[input.0]
                        .value
                        .values()
                        .iter()
                        .map(|&v| usize::from(v > T::zero())),
                ),
                Op::MaxPool { argmax, .. } => out.extend_from_slice(argmax),
                _ => {}
            }
        }
        out
    }

    /// Gradient of the last `backward` loss with respect to a node, if it
    /// was reached.
    pub fn grad(&self, id: NodeId) -> Option<&[T]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    /// Leaf holding data; differentiated only if the tensor requires grad.
    pub fn input(&mut self, tensor: Tensor<T>) -> NodeId {
        let requires_grad = tensor.requires_grad();
        self.push_node(Op::Input, tensor, requires_grad)
    }

    /// Leaf bound to a named parameter; its gradient lands in the set.
    pub fn param(&mut self, params: &ParameterSet<T>, name: &str) -> Result<NodeId, EngineError> {
        let mut value = params.require(name)?.clone();
        value.clear_grad();
        Ok(self.push_node(Op::Param(name.to_string()), value, true))
    }

    pub fn conv2d(
        &mut self,
        input: NodeId,
        kernel: NodeId,
        bias: NodeId,
        opts: Conv2dOptions,
    ) -> Result<NodeId, EngineError> {
        self.push(Op::Conv {
            input,
            kernel,
            bias,
            stride: [1, opts.stride[0], opts.stride[1]],
            padding: [0, opts.padding[0], opts.padding[1]],
            spatial_rank: 2,
            geom: None,
            cols: Vec::new(),
        })
    }

    pub fn conv3d(
        &mut self,
        input: NodeId,
        kernel: NodeId,
        bias: NodeId,
        opts: Conv3dOptions,
    ) -> Result<NodeId, EngineError> {
        self.push(Op::Conv {
            input,
            kernel,
            bias,
            stride: opts.stride,
            padding: opts.padding,
            spatial_rank: 3,
            geom: None,
            cols: Vec::new(),
        })
    }

    pub fn maxpool2d(&mut self, input: NodeId, window: [usize; 2], stride: [usize; 2]) -> Result<NodeId, EngineError> {
        self.push(Op::MaxPool {
            input,
            window: [1, window[0], window[1]],
            stride: [1, stride[0], stride[1]],
            spatial_rank: 2,
            argmax: Vec::new(),
        })
    }

    pub fn maxpool3d(&mut self, input: NodeId, window: [usize; 3], stride: [usize; 3]) -> Result<NodeId, EngineError> {
        self.push(Op::MaxPool {
            input,
            window,
            stride,
            spatial_rank: 3,
            argmax: Vec::new(),
        })
    }

    /// `input[N,D] · weight[D,K] + bias[K]`.
    pub fn linear(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId, EngineError> {
        self.push(Op::Linear { input, weight, bias })
    }

    pub fn relu(&mut self, input: NodeId) -> Result<NodeId, EngineError> {
        self.push(Op::Relu { input })
    }

    /// Feature-axis concatenation of `[N, Di]` inputs, in argument order.
    pub fn concat(&mut self, inputs: &[NodeId]) -> Result<NodeId, EngineError> {
        self.push(Op::Concat {
            inputs: inputs.to_vec(),
        })
    }

    pub fn reshape(&mut self, input: NodeId, shape: &[usize]) -> Result<NodeId, EngineError> {
        self.push(Op::Reshape {
            input,
            shape: shape.to_vec(),
        })
    }

    /// Collapses every axis after the first: `[N, ...] -> [N, D]`.
    pub fn flatten(&mut self, input: NodeId) -> Result<NodeId, EngineError> {
        let shape = self.value(input).shape();
        let n = shape[0];
        let d = shape[1..].iter().product::<usize>().max(1);
        self.reshape(input, &[n, d])
    }

    /// Mean softmax cross-entropy over the batch, as a one-element tensor.
    pub fn softmax_xent(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId, EngineError> {
        self.push(Op::SoftmaxXent {
            logits,
            labels: labels.to_vec(),
            probs: Vec::new(),
        })
    }

    fn push_node(&mut self, op: Op<T>, value: Tensor<T>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, mut op: Op<T>) -> Result<NodeId, EngineError> {
        let inputs = op.inputs();
        if let Some(bad) = inputs.iter().find(|id| id.0 >= self.nodes.len()) {
            return Err(EngineError::UnknownNode(bad.0));
        }
        let value = self.evaluate(&mut op)?;
        let requires_grad = inputs.iter().any(|id| self.nodes[id.0].requires_grad);
        Ok(self.push_node(op, value, requires_grad))
    }

    /// Recomputes every non-leaf node in order from the current leaf values.
    pub fn replay(&mut self) -> Result<(), EngineError> {
        for i in 0..self.nodes.len() {
            let mut op = self.nodes[i].op.clone();
            if matches!(op, Op::Input | Op::Param(_)) {
                continue;
            }
            let value = self.evaluate(&mut op)?;
            self.nodes[i].op = op;
            self.nodes[i].value = value;
        }
        Ok(())
    }

    fn evaluate(&self, op: &mut Op<T>) -> Result<Tensor<T>, EngineError> {
        let v = |id: &NodeId| &self.nodes[id.0].value;
        match op {
            Op::Input | Op::Param(_) => unreachable!("leaves are not evaluated"),
            Op::Conv {
                input,
                kernel,
                bias,
                stride,
                padding,
                spatial_rank,
                geom,
                cols,
            } => {
                let (x, k, b) = (v(input), v(kernel), v(bias));
                let xs = as_volume(x.shape(), *spatial_rank)
                    .ok_or_else(|| EngineError::shape("conv: input rank", x.shape(), k.shape()))?;
                let ks = as_volume(k.shape(), *spatial_rank)
                    .ok_or_else(|| EngineError::shape("conv: kernel rank", x.shape(), k.shape()))?;
                if b.shape() != [ks[0]] {
                    return Err(EngineError::shape("conv: bias length", k.shape(), b.shape()));
                }
                let g = ConvGeometry::new(&xs, &ks, *stride, *padding, (x.shape(), k.shape()))?;
                let (out, c) = conv::conv_forward(x.values(), k.values(), b.values(), &g);
                *cols = c;
                *geom = Some(g);
                Tensor::new(&volume_shape(g.batch, g.filters, g.out_dims, *spatial_rank), out)
            }
            Op::MaxPool {
                input,
                window,
                stride,
                spatial_rank,
                argmax,
            } => {
                let x = v(input);
                let xs = as_volume(x.shape(), *spatial_rank)
                    .ok_or_else(|| EngineError::shape("maxpool: input rank", x.shape(), &window[..]))?;
                let g = PoolGeometry::new(&xs, *window, *stride)?;
                let (out, arg) = conv::maxpool_forward(x.values(), &g);
                *argmax = arg;
                Tensor::new(&volume_shape(g.batch, g.channels, g.out_dims, *spatial_rank), out)
            }
            Op::Linear { input, weight, bias } => {
                let (x, w, b) = (v(input), v(weight), v(bias));
                let (&[n, d], &[dw, k]) = (x.shape(), w.shape()) else {
                    return Err(EngineError::shape("linear: rank", x.shape(), w.shape()));
                };
                if d != dw {
                    return Err(EngineError::shape("linear: inner dimension", x.shape(), w.shape()));
                }
                if b.shape() != [k] {
                    return Err(EngineError::shape("linear: bias length", w.shape(), b.shape()));
                }
                let mut out: Vec<T> = (0..n).flat_map(|_| b.values().iter().copied()).collect();
                T::gemm(n, d, k, T::one(), x.values(), d as isize, 1, w.values(), k as isize, 1, T::one(), &mut out, k as isize, 1);
                Tensor::new(&[n, k], out)
            }
            Op::Relu { input } => {
                let x = v(input);
                Tensor::new(
                    x.shape(),
                    x.values().iter().map(|&a| if a > T::zero() { a } else { T::zero() }).collect(),
                )
            }
            Op::Concat { inputs } => {
                let first = inputs.first().ok_or(EngineError::EmptyConcat)?;
                let n = v(first).shape()[0];
                let mut widths = Vec::with_capacity(inputs.len());
                for id in inputs.iter() {
                    let s = v(id).shape();
                    if s.len() != 2 || s[0] != n {
                        return Err(EngineError::shape("concat: batch size", v(first).shape(), s));
                    }
                    widths.push(s[1]);
                }
                let total: usize = widths.iter().sum();
                let mut out = Vec::with_capacity(n * total);
                for row in 0..n {
                    for (id, &w) in inputs.iter().zip(&widths) {
                        out.extend_from_slice(&v(id).values()[row * w..(row + 1) * w]);
                    }
                }
                Tensor::new(&[n, total], out)
            }
            Op::Reshape { input, shape } => {
                let x = v(input);
                if shape.iter().product::<usize>() != x.len() {
                    return Err(EngineError::shape("reshape", x.shape(), shape));
                }
                Tensor::new(shape, x.values().to_vec())
            }
            Op::SoftmaxXent { logits, labels, probs } => {
                let z = v(logits);
                let &[n, c] = z.shape() else {
                    return Err(EngineError::shape("softmax_xent: logits rank", z.shape(), &[labels.len()]));
                };
                if labels.len() != n {
                    return Err(EngineError::shape("softmax_xent: label count", z.shape(), &[labels.len()]));
                }
                if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
                    return Err(EngineError::LabelOutOfRange { label: bad, classes: c });
                }
                let mut p = Vec::with_capacity(n * c);
                let mut total = T::zero();
                for (row, &label) in z.values().chunks(c).zip(labels.iter()) {
                    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                    let sum: T = row.iter().map(|&a| (a - max).exp()).sum();
                    let log_sum = sum.ln();
                    total = total + (log_sum - (row[label] - max));
                    p.extend(row.iter().map(|&a| (a - max).exp() / sum));
                }
                *probs = p;
                Ok(Tensor::scalar(total / T::from_usize(n).expect("batch size")))
            }
        }
    }

    /// Reverse-mode pass from a one-element `loss` node.
    ///
    /// Parameter leaves add their gradient into `params`; other leaves that
    /// require grad keep theirs on the graph (see [`Graph::grad`]). Nodes the
    /// loss does not depend on are left untouched.
    pub fn backward(&mut self, loss: NodeId, params: &mut ParameterSet<T>) -> Result<(), EngineError> {
        let root = self.nodes.get(loss.0).ok_or(EngineError::UnknownNode(loss.0))?;
        if root.value.len() != 1 {
            return Err(EngineError::NonScalarLoss(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Param(name) => {
                    params
                        .get_mut(name)
                        .ok_or_else(|| EngineError::UnknownParameter(name.clone()))?
                        .accumulate_grad(&g);
                }
                op => {
                    for (id, delta) in self.input_grads(op, &node.value, &g) {
                        if !self.nodes[id.0].requires_grad {
                            continue;
                        }
                        match &mut grads[id.0] {
                            Some(acc) => acc.iter_mut().zip(&delta).for_each(|(a, d)| *a = *a + *d),
                            slot => *slot = Some(delta),
                        }
                    }
                }
            }
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn input_grads(&self, op: &Op<T>, out: &Tensor<T>, g: &[T]) -> Vec<(NodeId, Vec<T>)> {
        let v = |id: &NodeId| &self.nodes[id.0].value;
        let needs = |id: &NodeId| self.nodes[id.0].requires_grad;
        match op {
            Op::Input | Op::Param(_) => vec![],
            Op::Conv {
                input,
                kernel,
                bias,
                geom,
                cols,
                ..
            } => {
                let geom = geom.as_ref().expect("conv evaluated");
                let grads = conv::conv_backward(g, cols, v(kernel).values(), geom, needs(input));
                let mut out = vec![(*kernel, grads.kernel), (*bias, grads.bias)];
                if let Some(dx) = grads.input {
                    out.push((*input, dx));
                }
                out
            }
            Op::MaxPool { input, argmax, .. } => {
                let mut dx = vec![T::zero(); v(input).len()];
                for (&at, &d) in argmax.iter().zip(g) {
                    dx[at] = dx[at] + d;
                }
                vec![(*input, dx)]
            }
            Op::Linear { input, weight, bias } => {
                let (x, w) = (v(input), v(weight));
                let (n, d, k) = (x.shape()[0], x.shape()[1], w.shape()[1]);
                let mut db = vec![T::zero(); k];
                for row in g.chunks(k) {
                    db.iter_mut().zip(row).for_each(|(a, b)| *a = *a + *b);
                }
                // dW = xᵀ · g
                let mut dw = vec![T::zero(); d * k];
                T::gemm(d, n, k, T::one(), x.values(), 1, d as isize, g, k as isize, 1, T::zero(), &mut dw, k as isize, 1);
                let mut out = vec![(*weight, dw), (*bias, db)];
                if needs(input) {
                    // dx = g · Wᵀ
                    let mut dx = vec![T::zero(); n * d];
                    T::gemm(n, k, d, T::one(), g, k as isize, 1, w.values(), 1, k as isize, T::zero(), &mut dx, d as isize, 1);
                    out.push((*input, dx));
                }
                out
            }
            Op::Relu { input } => {
                let dx = out
                    .values()
                    .iter()
                    .zip(g)
                    .map(|(&y, &d)| if y > T::zero() { d } else { T::zero() })
                    .collect();
                vec![(*input, dx)]
            }
            Op::Concat { inputs } => {
                let total = out.shape()[1];
                let n = out.shape()[0];
                let mut offset = 0;
                let mut res = Vec::with_capacity(inputs.len());
                for id in inputs {
                    let w = v(id).shape()[1];
                    let mut dx = Vec::with_capacity(n * w);
                    for row in 0..n {
                        dx.extend_from_slice(&g[row * total + offset..row * total + offset + w]);
                    }
                    offset += w;
                    res.push((*id, dx));
                }
                res
            }
            Op::Reshape { input, .. } => vec![(*input, g.to_vec())],
            Op::SoftmaxXent { logits, labels, probs } => {
                let c = v(logits).shape()[1];
                let scale = g[0] / T::from_usize(labels.len()).expect("batch size");
                let mut dz: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                for (row, &label) in labels.iter().enumerate() {
                    dz[row * c + label] = dz[row * c + label] - scale;
                }
                vec![(*logits, dz)]
            }
        }
    }
}
