use std::collections::BTreeMap;

use super::kernels::{self, ConvGeom};
use crate::tensor::{Tensor, TensorError};

type Result<T> = std::result::Result<T, TensorError>;

/// Handle to a node in one [`Graph`]. Ids are dense and ordered: a node's
/// inputs always carry smaller ids than the node itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How `relu` nodes propagate gradients in [`Graph::gradient`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GradMode {
    #[default]
    Standard,
    /// Guided backpropagation: a relu passes gradient only where both its
    /// forward input and the incoming gradient are positive.
    Guided,
}

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    Constant,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Offset(NodeId, f64),
    Square(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    Softmax(NodeId),
    CrossEntropy {
        logits: NodeId,
        target: usize,
    },
    SoftCrossEntropy {
        logits: NodeId,
        target: Vec<f64>,
    },
    MatMul(NodeId, NodeId),
    Conv2d {
        input: NodeId,
        weight: NodeId,
        bias: Option<NodeId>,
        stride: usize,
        padding: usize,
    },
    MaxPool2(NodeId),
    UpsampleNearest2(NodeId),
    Reshape(NodeId, Vec<usize>),
    Select(NodeId, usize),
    Slice {
        input: NodeId,
        origin: [usize; 2],
        size: [usize; 2],
    },
    Assign {
        base: NodeId,
        patch: NodeId,
        origin: [usize; 2],
    },
}

impl Op {
    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf | Op::Constant => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MatMul(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Offset(a, _)
            | Op::Square(a)
            | Op::Tanh(a)
            | Op::Relu(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Softmax(a)
            | Op::MaxPool2(a)
            | Op::UpsampleNearest2(a)
            | Op::Reshape(a, _)
            | Op::Select(a, _) => vec![*a],
            Op::CrossEntropy { logits, .. } | Op::SoftCrossEntropy { logits, .. } => vec![*logits],
            Op::Conv2d {
                input, weight, bias, ..
            } => {
                let mut v = vec![*input, *weight];
                v.extend(bias);
                v
            }
            Op::Slice { input, .. } => vec![*input],
            Op::Assign { base, patch, .. } => vec![*base, *patch],
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Offset(..) => "offset",
            Op::Square(_) => "square",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Softmax(_) => "softmax",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::SoftCrossEntropy { .. } => "soft_cross_entropy",
            Op::MatMul(..) => "matmul",
            Op::Conv2d { .. } => "conv2d",
            Op::MaxPool2(_) => "max_pool2",
            Op::UpsampleNearest2(_) => "upsample_nearest2",
            Op::Reshape(..) => "reshape",
            Op::Select(..) => "select",
            Op::Slice { .. } => "slice",
            Op::Assign { .. } => "assign",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
    /// Depends on at least one leaf.
    needs_grad: bool,
}

/// Define-by-run expression graph with cached forward values.
///
/// Leaves are the only nodes gradients can be taken with respect to; their
/// values can be replaced with [`Graph::set_leaf`] followed by
/// [`Graph::recompute`], which replays every recorded op in order.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients keyed by leaf id; each has its leaf's exact shape.
#[derive(Clone, Debug, Default)]
pub struct GradientSet {
    grads: BTreeMap<NodeId, Tensor>,
}

impl GradientSet {
    pub fn get(&self, leaf: NodeId) -> Option<&Tensor> {
        self.grads.get(&leaf)
    }

    pub fn take(&mut self, leaf: NodeId) -> Option<Tensor> {
        self.grads.remove(&leaf)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Tensor)> {
        self.grads.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn invalid(op: &'static str, reason: impl Into<String>) -> TensorError {
    TensorError::InvalidArgument {
        op,
        reason: reason.into(),
    }
}

/// Elementwise binary op with scalar broadcasting only.
fn broadcast(op: &'static str, a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    if a.shape() == b.shape() {
        a.zip_map(b, f)
    } else if b.len() == 1 {
        let s = b.item();
        Ok(a.map(|v| f(v, s)))
    } else if a.len() == 1 {
        let s = a.item();
        Ok(b.map(|v| f(s, v)))
    } else {
        Err(mismatch(op, a, b))
    }
}

/// Reduces an upstream gradient to `target`'s shape when `target` was the
/// broadcast scalar side of a binary op.
fn unbroadcast(grad: Tensor, target: &Tensor) -> Tensor {
    if grad.shape() == target.shape() {
        grad
    } else {
        Tensor::from_parts(target.shape().to_vec(), vec![grad.sum()])
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, id: NodeId) -> Result<&Tensor> {
        self.nodes
            .get(id.0)
            .map(|n| &n.value)
            .ok_or(TensorError::DanglingNode(id.0))
    }

    /// Cached forward value of `id`.
    pub fn value(&self, id: NodeId) -> Result<&Tensor> {
        self.check(id)
    }

    /// Returns an owned copy of the cached forward value.
    pub fn evaluate(&self, id: NodeId) -> Result<Tensor> {
        self.check(id).cloned()
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        matches!(self.nodes.get(id.0).map(|n| &n.op), Some(Op::Leaf))
    }

    /// Registers a differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            needs_grad: true,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Registers a value that never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            op: Op::Constant,
            value,
            needs_grad: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op) -> Result<NodeId> {
        let value = self.forward(&op)?;
        let needs_grad = op.inputs().iter().any(|i| self.nodes[i.0].needs_grad);
        self.nodes.push(Node { op, value, needs_grad });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        self.push(Op::Scale(a, factor))
    }

    /// `a + offset` elementwise.
    pub fn offset(&mut self, a: NodeId, offset: f64) -> Result<NodeId> {
        self.push(Op::Offset(a, offset))
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Square(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Tanh(a))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Relu(a))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Mean(a))
    }

    /// Softmax over all elements of `a`.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Softmax(a))
    }

    /// `-log softmax(logits)[target]`.
    pub fn cross_entropy(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        self.push(Op::CrossEntropy { logits, target })
    }

    /// `-sum_i q_i log softmax(logits)_i` for a target distribution `q`.
    pub fn soft_cross_entropy(&mut self, logits: NodeId, target: Vec<f64>) -> Result<NodeId> {
        self.push(Op::SoftCrossEntropy { logits, target })
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::MatMul(a, b))
    }

    pub fn conv2d(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: Option<NodeId>,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        self.push(Op::Conv2d {
            input,
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn max_pool2(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::MaxPool2(a))
    }

    pub fn upsample_nearest2(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::UpsampleNearest2(a))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.push(Op::Reshape(a, shape.to_vec()))
    }

    /// Picks flat element `index` as a `[1]` tensor.
    pub fn select(&mut self, a: NodeId, index: usize) -> Result<NodeId> {
        self.push(Op::Select(a, index))
    }

    /// Spatial crop of a `[C, H, W]` tensor.
    pub fn slice(&mut self, input: NodeId, origin: [usize; 2], size: [usize; 2]) -> Result<NodeId> {
        self.push(Op::Slice {
            input,
            origin,
            size,
        })
    }

    /// Copy of `base` with `patch` written over the region at `origin`.
    pub fn assign(&mut self, base: NodeId, patch: NodeId, origin: [usize; 2]) -> Result<NodeId> {
        self.push(Op::Assign {
            base,
            patch,
            origin,
        })
    }

    /// Replaces a leaf's value. Dependent nodes are stale until [`Graph::recompute`].
    pub fn set_leaf(&mut self, id: NodeId, value: Tensor) -> Result<()> {
        let node = self.nodes.get_mut(id.0).ok_or(TensorError::DanglingNode(id.0))?;
        if !matches!(node.op, Op::Leaf) {
            return Err(TensorError::NotALeaf(id.0));
        }
        if node.value.shape() != value.shape() {
            return Err(mismatch("set_leaf", &node.value, &value));
        }
        node.value = value;
        Ok(())
    }

    /// Replays every recorded op in topological order.
    pub fn recompute(&mut self) -> Result<()> {
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf | Op::Constant) {
                continue;
            }
            let value = self.forward(&self.nodes[i].op)?;
            self.nodes[i].value = value;
        }
        Ok(())
    }

    fn forward(&self, op: &Op) -> Result<Tensor> {
        let name = op.name();
        let out = match op {
            Op::Leaf | Op::Constant => unreachable!("leaves carry their own value"),
            Op::Add(a, b) => broadcast(name, self.check(*a)?, self.check(*b)?, |x, y| x + y)?,
            Op::Sub(a, b) => broadcast(name, self.check(*a)?, self.check(*b)?, |x, y| x - y)?,
            Op::Mul(a, b) => broadcast(name, self.check(*a)?, self.check(*b)?, |x, y| x * y)?,
            Op::Scale(a, f) => self.check(*a)?.map(|x| x * f),
            Op::Offset(a, f) => self.check(*a)?.map(|x| x + f),
            Op::Square(a) => self.check(*a)?.map(|x| x * x),
            Op::Tanh(a) => self.check(*a)?.map(f64::tanh),
            Op::Relu(a) => self.check(*a)?.map(|x| x.max(0.0)),
            Op::Sum(a) => Tensor::scalar(self.check(*a)?.sum()),
            Op::Mean(a) => {
                let t = self.check(*a)?;
                Tensor::scalar(t.sum() / t.len() as f64)
            }
            Op::Softmax(a) => {
                let t = self.check(*a)?;
                Tensor::from_parts(t.shape().to_vec(), kernels::softmax(t.data()))
            }
            Op::CrossEntropy { logits, target } => {
                let t = self.check(*logits)?;
                if *target >= t.len() {
                    return Err(invalid(name, format!("target {target} out of {} classes", t.len())));
                }
                Tensor::scalar(kernels::log_sum_exp(t.data()) - t.data()[*target])
            }
            Op::SoftCrossEntropy { logits, target } => {
                let t = self.check(*logits)?;
                if target.len() != t.len() {
                    return Err(invalid(
                        name,
                        format!("target has {} entries, logits {}", target.len(), t.len()),
                    ));
                }
                let lse = kernels::log_sum_exp(t.data());
                Tensor::scalar(target.iter().zip(t.data()).map(|(q, z)| q * (lse - z)).sum())
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.check(*a)?, self.check(*b)?);
                match (ta.shape(), tb.shape()) {
                    (&[m, k], &[k2, n]) if k == k2 => {
                        Tensor::from_parts(vec![m, n], kernels::matmul(m, k, n, ta.data(), tb.data()))
                    }
                    _ => return Err(mismatch(name, ta, tb)),
                }
            }
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
            } => {
                let x = self.check(*input)?;
                let w = self.check(*weight)?;
                let g = self.conv_geom(name, x, w, *stride, *padding)?;
                let b = match bias {
                    Some(b) => {
                        let b = self.check(*b)?;
                        if b.shape() != [g.out_channels] {
                            return Err(mismatch(name, w, b));
                        }
                        Some(b.data())
                    }
                    None => None,
                };
                Tensor::from_parts(
                    vec![g.out_channels, g.out_height(), g.out_width()],
                    kernels::conv2d_forward(&g, x.data(), w.data(), b),
                )
            }
            Op::MaxPool2(a) => {
                let t = self.check(*a)?;
                let [c, h, w] = t.dims3(name)?;
                if h % 2 != 0 || w % 2 != 0 {
                    return Err(invalid(name, format!("odd spatial extent {h}x{w}")));
                }
                Tensor::from_parts(vec![c, h / 2, w / 2], kernels::maxpool2_forward(c, h, w, t.data()).0)
            }
            Op::UpsampleNearest2(a) => {
                let t = self.check(*a)?;
                let [c, h, w] = t.dims3(name)?;
                Tensor::from_parts(vec![c, 2 * h, 2 * w], kernels::upsample2_forward(c, h, w, t.data()))
            }
            Op::Reshape(a, shape) => self.check(*a)?.reshape(shape)?,
            Op::Select(a, index) => {
                let t = self.check(*a)?;
                let v = *t
                    .data()
                    .get(*index)
                    .ok_or_else(|| invalid(name, format!("index {index} out of {}", t.len())))?;
                Tensor::scalar(v)
            }
            Op::Slice {
                input,
                origin,
                size,
            } => {
                let t = self.check(*input)?;
                let [c, h, w] = t.dims3(name)?;
                check_region(name, [h, w], *origin, *size)?;
                let mut out = Vec::with_capacity(c * size[0] * size[1]);
                for ch in 0..c {
                    for r in origin[0]..origin[0] + size[0] {
                        let start = (ch * h + r) * w + origin[1];
                        out.extend_from_slice(&t.data()[start..start + size[1]]);
                    }
                }
                Tensor::from_parts(vec![c, size[0], size[1]], out)
            }
            Op::Assign {
                base,
                patch,
                origin,
            } => {
                let b = self.check(*base)?;
                let p = self.check(*patch)?;
                let [c, h, w] = b.dims3(name)?;
                let [pc, ph, pw] = p.dims3(name)?;
                if pc != c {
                    return Err(mismatch(name, b, p));
                }
                check_region(name, [h, w], *origin, [ph, pw])?;
                let mut out = b.clone();
                let od = out.data_mut();
                for ch in 0..c {
                    for r in 0..ph {
                        let dst = (ch * h + origin[0] + r) * w + origin[1];
                        let src = (ch * ph + r) * pw;
                        od[dst..dst + pw].copy_from_slice(&p.data()[src..src + pw]);
                    }
                }
                out
            }
        };
        if !out.is_finite() {
            return Err(TensorError::NonFiniteOutput { op: name });
        }
        Ok(out)
    }

    fn conv_geom(
        &self,
        name: &'static str,
        x: &Tensor,
        w: &Tensor,
        stride: usize,
        padding: usize,
    ) -> Result<ConvGeom> {
        let [c, h, wd] = x.dims3(name)?;
        let &[o, wc, kh, kw] = w.shape() else {
            return Err(mismatch(name, x, w));
        };
        if wc != c {
            return Err(mismatch(name, x, w));
        }
        if stride == 0 {
            return Err(invalid(name, "stride must be at least 1"));
        }
        if h + 2 * padding < kh || wd + 2 * padding < kw {
            return Err(mismatch(name, x, w));
        }
        Ok(ConvGeom {
            channels: c,
            height: h,
            width: wd,
            out_channels: o,
            kh,
            kw,
            stride,
            padding,
        })
    }

    /// Reverse-mode gradient of the scalar `root` with respect to `wrt`.
    pub fn gradient(&self, root: NodeId, wrt: &[NodeId], mode: GradMode) -> Result<GradientSet> {
        let root_value = self.check(root)?;
        if root_value.shape() != [1] {
            return Err(TensorError::NonScalarRoot(root_value.shape().to_vec()));
        }
        for &id in wrt {
            self.check(id)?;
            if !self.is_leaf(id) {
                return Err(TensorError::NotALeaf(id.0));
            }
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        adj[root.0] = Some(Tensor::scalar(1.0));
        for i in (0..=root.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(up) = adj[i].take() else { continue };
            if matches!(self.nodes[i].op, Op::Leaf) {
                adj[i] = Some(up);
                continue;
            }
            self.backward(i, up, mode, &mut adj)?;
        }
        let grads = wrt
            .iter()
            .map(|&id| {
                let g = adj
                    .get_mut(id.0)
                    .and_then(Option::take)
                    .unwrap_or_else(|| Tensor::zeros(self.nodes[id.0].value.shape()));
                (id, g)
            })
            .collect();
        Ok(GradientSet { grads })
    }

    fn backward(&self, i: usize, up: Tensor, mode: GradMode, adj: &mut [Option<Tensor>]) -> Result<()> {
        let mut acc = |id: NodeId, g: Tensor| {
            if !self.nodes[id.0].needs_grad {
                return;
            }
            match &mut adj[id.0] {
                Some(existing) => existing
                    .data_mut()
                    .iter_mut()
                    .zip(g.data())
                    .for_each(|(e, v)| *e += v),
                slot @ None => *slot = Some(g),
            }
        };
        let val = |id: NodeId| &self.nodes[id.0].value;
        let out = &self.nodes[i].value;
        match &self.nodes[i].op {
            Op::Leaf | Op::Constant => {}
            Op::Add(a, b) => {
                acc(*a, unbroadcast(up.clone(), val(*a)));
                acc(*b, unbroadcast(up, val(*b)));
            }
            Op::Sub(a, b) => {
                acc(*a, unbroadcast(up.clone(), val(*a)));
                acc(*b, unbroadcast(up.map(|v| -v), val(*b)));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let ga = broadcast("mul", &up, tb, |u, y| u * y)?;
                let gb = broadcast("mul", &up, ta, |u, x| u * x)?;
                acc(*a, unbroadcast(ga, ta));
                acc(*b, unbroadcast(gb, tb));
            }
            Op::Scale(a, f) => acc(*a, up.map(|u| u * f)),
            Op::Offset(a, _) => acc(*a, up),
            Op::Square(a) => acc(*a, up.zip_map(val(*a), |u, x| 2.0 * x * u)?),
            Op::Tanh(a) => acc(*a, up.zip_map(out, |u, y| u * (1.0 - y * y))?),
            Op::Relu(a) => {
                let g = match mode {
                    GradMode::Standard => up.zip_map(val(*a), |u, x| if x > 0.0 { u } else { 0.0 })?,
                    GradMode::Guided => {
                        up.zip_map(val(*a), |u, x| if x > 0.0 && u > 0.0 { u } else { 0.0 })?
                    }
                };
                acc(*a, g);
            }
            Op::Sum(a) => acc(*a, Tensor::full(val(*a).shape(), up.item())),
            Op::Mean(a) => {
                let t = val(*a);
                acc(*a, Tensor::full(t.shape(), up.item() / t.len() as f64));
            }
            Op::Softmax(a) => {
                let dot: f64 = up.data().iter().zip(out.data()).map(|(u, s)| u * s).sum();
                acc(*a, up.zip_map(out, |u, s| s * (u - dot))?);
            }
            Op::CrossEntropy { logits, target } => {
                let z = val(*logits);
                let mut g = kernels::softmax(z.data());
                g[*target] -= 1.0;
                let u = up.item();
                acc(*logits, Tensor::from_parts(z.shape().to_vec(), g.into_iter().map(|v| v * u).collect()));
            }
            Op::SoftCrossEntropy { logits, target } => {
                let z = val(*logits);
                let qsum: f64 = target.iter().sum();
                let u = up.item();
                let g = kernels::softmax(z.data())
                    .into_iter()
                    .zip(target)
                    .map(|(p, q)| u * (p * qsum - q))
                    .collect();
                acc(*logits, Tensor::from_parts(z.shape().to_vec(), g));
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if self.nodes[a.0].needs_grad {
                    acc(*a, Tensor::from_parts(vec![m, k], kernels::matmul_bt(m, n, k, up.data(), tb.data())));
                }
                if self.nodes[b.0].needs_grad {
                    acc(*b, Tensor::from_parts(vec![k, n], kernels::matmul_at(m, k, n, ta.data(), up.data())));
                }
            }
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
            } => {
                let (x, w) = (val(*input), val(*weight));
                let g = self.conv_geom("conv2d", x, w, *stride, *padding)?;
                let (dx, dw, db) = kernels::conv2d_backward(
                    &g,
                    x.data(),
                    w.data(),
                    up.data(),
                    self.nodes[input.0].needs_grad,
                    self.nodes[weight.0].needs_grad,
                );
                if let Some(dx) = dx {
                    acc(*input, Tensor::from_parts(x.shape().to_vec(), dx));
                }
                if let Some(dw) = dw {
                    acc(*weight, Tensor::from_parts(w.shape().to_vec(), dw));
                }
                if let Some(b) = bias {
                    acc(*b, Tensor::from_parts(vec![g.out_channels], db));
                }
            }
            Op::MaxPool2(a) => {
                let t = val(*a);
                let [c, h, w] = t.dims3("max_pool2")?;
                let (_, arg) = kernels::maxpool2_forward(c, h, w, t.data());
                let mut g = vec![0.0; t.len()];
                for (idx, u) in arg.into_iter().zip(up.data()) {
                    g[idx] += u;
                }
                acc(*a, Tensor::from_parts(t.shape().to_vec(), g));
            }
            Op::UpsampleNearest2(a) => {
                let t = val(*a);
                let [c, h, w] = t.dims3("upsample_nearest2")?;
                acc(*a, Tensor::from_parts(t.shape().to_vec(), kernels::upsample2_backward(c, h, w, up.data())));
            }
            Op::Reshape(a, _) => {
                let t = val(*a);
                acc(*a, Tensor::from_parts(t.shape().to_vec(), up.into_data()));
            }
            Op::Select(a, index) => {
                let t = val(*a);
                let mut g = vec![0.0; t.len()];
                g[*index] = up.item();
                acc(*a, Tensor::from_parts(t.shape().to_vec(), g));
            }
            Op::Slice { input, origin, size } => {
                let t = val(*input);
                let [c, h, w] = t.dims3("slice")?;
                let mut g = vec![0.0; t.len()];
                for ch in 0..c {
                    for r in 0..size[0] {
                        let dst = (ch * h + origin[0] + r) * w + origin[1];
                        let src = (ch * size[0] + r) * size[1];
                        g[dst..dst + size[1]].copy_from_slice(&up.data()[src..src + size[1]]);
                    }
                }
                acc(*input, Tensor::from_parts(t.shape().to_vec(), g));
            }
            Op::Assign { base, patch, origin } => {
                let p = val(*patch);
                let [c, ph, pw] = p.dims3("assign")?;
                let [_, h, w] = up.dims3("assign")?;
                let mut gb = up;
                let mut gp = Vec::with_capacity(p.len());
                let gbd = gb.data_mut();
                for ch in 0..c {
                    for r in 0..ph {
                        let start = (ch * h + origin[0] + r) * w + origin[1];
                        gp.extend_from_slice(&gbd[start..start + pw]);
                        gbd[start..start + pw].iter_mut().for_each(|v| *v = 0.0);
                    }
                }
                acc(*patch, Tensor::from_parts(p.shape().to_vec(), gp));
                acc(*base, gb);
            }
        }
        Ok(())
    }

    /// Snapshot of every piecewise-linear switch in the graph: relu input
    /// signs and max-pool winners. Two forward states with equal signatures
    /// lie on the same smooth piece.
    pub(crate) fn activation_signature(&self) -> Vec<usize> {
        let mut sig = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(a) => sig.extend(
                    self.nodes[a.0]
                        .value
                        .data()
                        .iter()
                        .map(|&x| usize::from(x > 0.0)),
                ),
                Op::MaxPool2(a) => {
                    let t = &self.nodes[a.0].value;
                    if let Ok([c, h, w]) = t.dims3("max_pool2") {
                        sig.extend(kernels::maxpool2_forward(c, h, w, t.data()).1);
                    }
                }
                _ => {}
            }
        }
        sig
    }
}

fn check_region(op: &'static str, extent: [usize; 2], origin: [usize; 2], size: [usize; 2]) -> Result<()> {
    if size[0] == 0
        || size[1] == 0
        || origin[0] + size[0] > extent[0]
        || origin[1] + size[1] > extent[1]
    {
        return Err(invalid(
            op,
            format!("region {size:?} at {origin:?} exceeds {}x{}", extent[0], extent[1]),
        ));
    }
    Ok(())
}
