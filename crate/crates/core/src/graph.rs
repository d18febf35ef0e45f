//! Reverse-mode automatic differentiation over a dynamic computation graph.
//!
//! A [`Graph`] records every primitive application made through it. Forward
//! values are computed eagerly; [`Graph::backward`] then walks the tape once
//! in reverse, accumulating `dL/d(node)` for every node that can reach a
//! trainable parameter. Graphs are rebuilt per forward pass, which keeps the
//! dual-step training schedule simple: each optimization step owns exactly
//! the ops it ran.
//!
//! The primitive set here is the plain numeric kernel: elementwise ops,
//! matrix product, activations, reductions and reshape. Structured neural
//! primitives (convolution, pooling, ...) live in [`crate::nn`] and plug into
//! the same [`Primitive`] trait.

use std::collections::BTreeMap;
use std::fmt;

use crate::tensor::{Tensor, TensorError};

/// Identifier of a node inside one [`Graph`]. Ids are not transferable
/// between graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Gradient of the loss with respect to each trainable parameter node.
/// Parameters with no path to the loss map to exact zero tensors.
pub type GradientMap = BTreeMap<NodeId, Tensor>;

/// A differentiable operation. Implementations hold their own attributes
/// (strides, shapes, ...), so one value fully describes an application.
pub trait Primitive: fmt::Debug {
    /// Stable name used in error messages and the named dispatcher.
    fn name(&self) -> &'static str;

    /// Output shape as a pure function of the input shapes. No numeric work.
    fn infer_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>, TensorError>;

    /// Forward value. Shapes have already been validated by `infer_shape`.
    fn forward(&self, inputs: &[&Tensor]) -> Tensor;

    /// Gradient contribution for each input slot, given the upstream
    /// gradient. Slots with `needs[i] == false` may return `None`.
    fn backward(
        &self,
        inputs: &[&Tensor],
        output: &Tensor,
        grad: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>>;
}

struct Node {
    prim: Option<Box<dyn Primitive>>,
    inputs: Vec<NodeId>,
    value: Tensor,
    requires_grad: bool,
    trainable: bool,
}

/// Record of primitive applications with reverse-mode gradient accumulation.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    dirty: bool,
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            dirty: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Insert a non-trainable leaf (network input, constant, mask...).
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(value, false)
    }

    /// Insert a trainable leaf. Its gradient appears in every `backward` result.
    pub fn parameter(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(value, true)
    }

    fn push_leaf(&mut self, value: Tensor, trainable: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            prim: None,
            inputs: Vec::new(),
            value,
            requires_grad: trainable,
            trainable,
        });
        id
    }

    /// Ids of all trainable leaves, in insertion order.
    pub fn parameters(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.trainable)
            .map(|(i, _)| NodeId(i))
            .collect()
    }

    /// All node ids in insertion (topological) order.
    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    /// Primitive name of a node, `None` for leaves.
    pub fn primitive_name(&self, id: NodeId) -> Option<&'static str> {
        self.nodes[id.0].prim.as_ref().map(|p| p.name())
    }

    /// Input node ids of a node.
    pub fn node_inputs(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].inputs
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    /// Replace a leaf's value. The graph becomes stale until [`Graph::refresh`].
    pub fn set_leaf(&mut self, id: NodeId, value: Tensor) -> Result<(), TensorError> {
        let len = self.nodes.len();
        let node = self
            .nodes
            .get_mut(id.0)
            .ok_or(TensorError::InvalidNode { id: id.0, len })?;
        assert!(node.prim.is_none(), "set_leaf on a non-leaf node");
        assert_eq!(
            node.value.shape(),
            value.shape(),
            "set_leaf must preserve the shape"
        );
        node.value = value;
        self.dirty = true;
        Ok(())
    }

    /// Recompute every non-leaf value in topological (insertion) order.
    pub fn refresh(&mut self) -> Result<(), TensorError> {
        for i in 0..self.nodes.len() {
            if self.nodes[i].prim.is_none() {
                continue;
            }
            let inputs: Vec<&Tensor> = self.nodes[i]
                .inputs
                .iter()
                .map(|id| &self.nodes[id.0].value)
                .collect();
            let prim = self.nodes[i].prim.as_ref().unwrap();
            let value = prim.forward(&inputs);
            check_finite(prim.name(), &value)?;
            self.nodes[i].value = value;
        }
        self.dirty = false;
        Ok(())
    }

    /// Record one primitive application and compute its forward value.
    ///
    /// The output shape is fixed by `infer_shape` before any numeric work;
    /// a NaN/Inf in the result is reported as a numeric fault.
    pub fn apply<P: Primitive + 'static>(
        &mut self,
        prim: P,
        inputs: &[NodeId],
    ) -> Result<NodeId, TensorError> {
        for id in inputs {
            if id.0 >= self.nodes.len() {
                return Err(TensorError::InvalidNode {
                    id: id.0,
                    len: self.nodes.len(),
                });
            }
        }
        let in_shapes: Vec<&[usize]> = inputs
            .iter()
            .map(|id| self.nodes[id.0].value.shape())
            .collect();
        let out_shape = prim.infer_shape(&in_shapes)?;
        let in_values: Vec<&Tensor> = inputs.iter().map(|id| &self.nodes[id.0].value).collect();
        let value = prim.forward(&in_values);
        debug_assert_eq!(value.shape(), &out_shape[..], "{} broke its shape contract", prim.name());
        check_finite(prim.name(), &value)?;
        let requires_grad = inputs.iter().any(|id| self.nodes[id.0].requires_grad);
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            prim: Some(Box::new(prim)),
            inputs: inputs.to_vec(),
            value,
            requires_grad,
            trainable: false,
        });
        Ok(id)
    }

    /// Apply a primitive of the core set by name, with an attribute record.
    /// Structured neural primitives are constructed through their typed
    /// builders in [`crate::nn`] instead.
    pub fn apply_named(
        &mut self,
        kind: &str,
        inputs: &[NodeId],
        attrs: &Attrs,
    ) -> Result<NodeId, TensorError> {
        match kind {
            "add" => self.apply(Add, inputs),
            "sub" => self.apply(Sub, inputs),
            "mul" => self.apply(Mul, inputs),
            "scale" => self.apply(Scale::new(attrs.float("factor")?), inputs),
            "add_bias" => self.apply(AddBias, inputs),
            "matmul" => self.apply(MatMul, inputs),
            "relu" => self.apply(Relu, inputs),
            "sigmoid" => self.apply(Sigmoid, inputs),
            "softmax" => self.apply(Softmax, inputs),
            "sum" => self.apply(Sum, inputs),
            "mean" => self.apply(Mean, inputs),
            "sum_squares" => self.apply(SumSquares, inputs),
            "reshape" => self.apply(Reshape::new(attrs.int_list("shape")?), inputs),
            other => Err(TensorError::UnknownPrimitive(other.to_string())),
        }
    }

    /// Reverse-mode gradient of a scalar loss with respect to every trainable
    /// parameter. Each node is visited exactly once, in reverse insertion
    /// order, so topological order is preserved by construction.
    pub fn backward(&self, loss: NodeId) -> Result<GradientMap, TensorError> {
        if loss.0 >= self.nodes.len() {
            return Err(TensorError::InvalidNode {
                id: loss.0,
                len: self.nodes.len(),
            });
        }
        if self.dirty {
            return Err(TensorError::UnevaluatedGraph);
        }
        let loss_node = &self.nodes[loss.0];
        if !loss_node.value.is_scalar() {
            return Err(TensorError::NonScalarLoss {
                shape: loss_node.value.shape().to_vec(),
            });
        }

        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(prim) = node.prim.as_ref() else {
                continue;
            };
            let Some(grad) = grads[i].take() else {
                continue;
            };
            let inputs: Vec<&Tensor> = node
                .inputs
                .iter()
                .map(|id| &self.nodes[id.0].value)
                .collect();
            let needs: Vec<bool> = node
                .inputs
                .iter()
                .map(|id| self.nodes[id.0].requires_grad)
                .collect();
            let contributions = prim.backward(&inputs, &node.value, &grad, &needs);
            debug_assert_eq!(contributions.len(), node.inputs.len());
            for (slot, contribution) in contributions.into_iter().enumerate() {
                let input_id = node.inputs[slot];
                if !self.nodes[input_id.0].requires_grad {
                    continue;
                }
                let contribution = contribution.unwrap_or_else(|| {
                    panic!(
                        "{} returned no gradient for needed input {}",
                        prim.name(),
                        slot
                    )
                });
                match &mut grads[input_id.0] {
                    Some(acc) => accumulate(acc, &contribution),
                    slot @ None => *slot = Some(contribution),
                }
            }
        }

        let mut map = GradientMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if node.trainable {
                let grad = grads[i]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(node.value.shape().to_vec()));
                map.insert(NodeId(i), grad);
            }
        }
        Ok(map)
    }

    // ── Convenience builders for the core primitives ────────────────────

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.apply(Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.apply(Sub, &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.apply(Mul, &[a, b])
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId, TensorError> {
        self.apply(Scale::new(factor), &[a])
    }

    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId, TensorError> {
        self.apply(AddBias, &[a, bias])
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.apply(MatMul, &[a, b])
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        self.apply(Relu, &[a])
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        self.apply(Sigmoid, &[a])
    }

    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        self.apply(Softmax, &[a])
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        self.apply(Sum, &[a])
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        self.apply(Mean, &[a])
    }

    pub fn sum_squares(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        self.apply(SumSquares, &[a])
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId, TensorError> {
        self.apply(Reshape::new(shape), &[a])
    }

    /// Reshape to 1-D.
    pub fn flatten(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let numel = self.nodes[a.0].value.numel();
        self.reshape(a, vec![numel])
    }

    /// Dot product of two equal-length vectors, as mul + sum.
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let prod = self.mul(a, b)?;
        self.sum(prod)
    }
}

fn accumulate(acc: &mut Tensor, contribution: &Tensor) {
    debug_assert_eq!(acc.shape(), contribution.shape());
    for (a, c) in acc.data_mut().iter_mut().zip(contribution.data()) {
        *a += c;
    }
}

fn check_finite(primitive: &'static str, value: &Tensor) -> Result<(), TensorError> {
    if let Some(idx) = value.first_non_finite() {
        return Err(TensorError::NumericFault {
            primitive,
            detail: format!("non-finite value {} at flat index {idx}", value.data()[idx]),
        });
    }
    Ok(())
}

fn same_shape(
    primitive: &'static str,
    a: &[usize],
    b: &[usize],
) -> Result<Vec<usize>, TensorError> {
    if a != b {
        return Err(TensorError::ShapeMismatch {
            primitive,
            detail: format!("operands {a:?} and {b:?} differ"),
        });
    }
    Ok(a.to_vec())
}

fn arity(primitive: &'static str, inputs: &[&[usize]], expected: usize) -> Result<(), TensorError> {
    if inputs.len() != expected {
        return Err(TensorError::ShapeMismatch {
            primitive,
            detail: format!("expected {expected} inputs, got {}", inputs.len()),
        });
    }
    Ok(())
}

// ── Attribute record for the named dispatcher ───────────────────────────

/// One attribute value of a primitive application.
#[derive(Debug, Clone, PartialEq)]
pub enum AttrValue {
    Float(f64),
    Int(i64),
    IntList(Vec<usize>),
}

/// Attribute record keyed by name.
#[derive(Debug, Clone, Default)]
pub struct Attrs(BTreeMap<String, AttrValue>);

impl Attrs {
    pub fn new() -> Self {
        Attrs(BTreeMap::new())
    }

    pub fn with_float(mut self, key: &str, value: f64) -> Self {
        self.0.insert(key.to_string(), AttrValue::Float(value));
        self
    }

    pub fn with_int_list(mut self, key: &str, value: Vec<usize>) -> Self {
        self.0.insert(key.to_string(), AttrValue::IntList(value));
        self
    }

    fn float(&self, key: &str) -> Result<f64, TensorError> {
        match self.0.get(key) {
            Some(AttrValue::Float(v)) => Ok(*v),
            Some(AttrValue::Int(v)) => Ok(*v as f64),
            _ => Err(TensorError::InvalidAttribute {
                primitive: "apply_named",
                detail: format!("missing float attribute `{key}`"),
            }),
        }
    }

    fn int_list(&self, key: &str) -> Result<Vec<usize>, TensorError> {
        match self.0.get(key) {
            Some(AttrValue::IntList(v)) => Ok(v.clone()),
            _ => Err(TensorError::InvalidAttribute {
                primitive: "apply_named",
                detail: format!("missing int-list attribute `{key}`"),
            }),
        }
    }
}

// ── Elementwise primitives ──────────────────────────────────────────────

#[derive(Debug)]
pub struct Add;

impl Primitive for Add {
    fn name(&self) -> &'static str {
        "add"
    }

    fn infer_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>, TensorError> {
        arity(self.name(), inputs, 2)?;
        same_shape(self.name(), inputs[0], inputs[1])
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        let data = inputs[0]
            .data()
            .iter()
            .zip(inputs[1].data())
            .map(|(a, b)| a + b)
            .collect();
        Tensor::new(inputs[0].shape().to_vec(), data)
    }

    fn backward(
        &self,
        _inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>> {
        vec![
            needs[0].then(|| grad.clone()),
            needs[1].then(|| grad.clone()),
        ]
    }
}

#[derive(Debug)]
pub struct Sub;

impl Primitive for Sub {
    fn name(&self) -> &'static str {
        "sub"
    }

    fn infer_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>, TensorError> {
        arity(self.name(), inputs, 2)?;
        same_shape(self.name(), inputs[0], inputs[1])
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        let data = inputs[0]
            .data()
            .iter()
            .zip(inputs[1].data())
            .map(|(a, b)| a - b)
            .collect();
        Tensor::new(inputs[0].shape().to_vec(), data)
    }

    fn backward(
        &self,
        _inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>> {
        let neg = needs[1].then(|| {
            Tensor::new(
                grad.shape().to_vec(),
                grad.data().iter().map(|g| -g).collect(),
            )
        });
        vec![needs[0].then(|| grad.clone()), neg]
    }
}

#[derive(Debug)]
pub struct Mul;

impl Primitive for Mul {
    fn name(&self) -> &'static str {
        "mul"
    }

    fn infer_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>, TensorError> {
        arity(self.name(), inputs, 2)?;
        same_shape(self.name(), inputs[0], inputs[1])
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        let data = inputs[0]
            .data()
            .iter()
            .zip(inputs[1].data())
            .map(|(a, b)| a * b)
            .collect();
        Tensor::new(inputs[0].shape().to_vec(), data)
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>> {
        let da = needs[0].then(|| {
            Tensor::new(
                grad.shape().to_vec(),
                grad.data()
                    .iter()
                    .zip(inputs[1].data())
                    .map(|(g, b)| g * b)
                    .collect(),
            )
        });
        let db = needs[1].then(|| {
            Tensor::new(
                grad.shape().to_vec(),
                grad.data()
                    .iter()
                    .zip(inputs[0].data())
                    .map(|(g, a)| g * a)
                    .collect(),
            )
        });
        vec![da, db]
    }
}

/// Multiply every entry by a fixed scalar attribute.
#[derive(Debug)]
pub struct Scale {
    pub factor: f64,
}

impl Scale {
    pub fn new(factor: f64) -> Self {
        Scale { factor }
    }
}

impl Primitive for Scale {
    fn name(&self) -> &'static str {
        "scale"
    }

    fn infer_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>, TensorError> {
        arity(self.name(), inputs, 1)?;
        Ok(inputs[0].to_vec())
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        Tensor::new(
            inputs[0].shape().to_vec(),
            inputs[0].data().iter().map(|v| v * self.factor).collect(),
        )
    }

    fn backward(
        &self,
        _inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>> {
        vec![needs[0].then(|| {
            Tensor::new(
                grad.shape().to_vec(),
                grad.data().iter().map(|g| g * self.factor).collect(),
            )
        })]
    }
}

/// Broadcast a rank-1 bias over the last axis of the input.
#[derive(Debug)]
pub struct AddBias;

impl Primitive for AddBias {
    fn name(&self) -> &'static str {
        "add_bias"
    }

    fn infer_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>, TensorError> {
        arity(self.name(), inputs, 2)?;
        let (input, bias) = (inputs[0], inputs[1]);
        if bias.len() != 1 || input.is_empty() || *input.last().unwrap() != bias[0] {
            return Err(TensorError::ShapeMismatch {
                primitive: self.name(),
                detail: format!("input {input:?} incompatible with bias {bias:?}"),
            });
        }
        Ok(input.to_vec())
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        let bias = inputs[1].data();
        let c = bias.len();
        let data = inputs[0]
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v + bias[i % c])
            .collect();
        Tensor::new(inputs[0].shape().to_vec(), data)
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>> {
        let d_input = needs[0].then(|| grad.clone());
        let d_bias = needs[1].then(|| {
            let c = inputs[1].numel();
            let mut acc = vec![0.0; c];
            for (i, g) in grad.data().iter().enumerate() {
                acc[i % c] += g;
            }
            Tensor::new(vec![c], acc)
        });
        vec![d_input, d_bias]
    }
}

// ── Matrix product ──────────────────────────────────────────────────────

#[derive(Debug)]
pub struct MatMul;

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let row = &b[p * n..(p + 1) * n];
            let dst = &mut out[i * n..(i + 1) * n];
            for (d, bv) in dst.iter_mut().zip(row) {
                *d += av * bv;
            }
        }
    }
    out
}

impl Primitive for MatMul {
    fn name(&self) -> &'static str {
        "matmul"
    }

    fn infer_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>, TensorError> {
        arity(self.name(), inputs, 2)?;
        let (a, b) = (inputs[0], inputs[1]);
        if a.len() != 2 || b.len() != 2 || a[1] != b[0] {
            return Err(TensorError::ShapeMismatch {
                primitive: self.name(),
                detail: format!("cannot multiply {a:?} by {b:?}"),
            });
        }
        Ok(vec![a[0], b[1]])
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        let (m, k) = (inputs[0].shape()[0], inputs[0].shape()[1]);
        let n = inputs[1].shape()[1];
        Tensor::new(
            vec![m, n],
            matmul_raw(inputs[0].data(), inputs[1].data(), m, k, n),
        )
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>> {
        let (m, k) = (inputs[0].shape()[0], inputs[0].shape()[1]);
        let n = inputs[1].shape()[1];
        let g = grad.data();
        // dA = G @ B^T
        let da = needs[0].then(|| {
            let b = inputs[1].data();
            let mut out = vec![0.0; m * k];
            for i in 0..m {
                for j in 0..n {
                    let gv = g[i * n + j];
                    if gv == 0.0 {
                        continue;
                    }
                    for p in 0..k {
                        out[i * k + p] += gv * b[p * n + j];
                    }
                }
            }
            Tensor::new(vec![m, k], out)
        });
        // dB = A^T @ G
        let db = needs[1].then(|| {
            let a = inputs[0].data();
            let mut out = vec![0.0; k * n];
            for i in 0..m {
                for p in 0..k {
                    let av = a[i * k + p];
                    if av == 0.0 {
                        continue;
                    }
                    let row = &g[i * n..(i + 1) * n];
                    let dst = &mut out[p * n..(p + 1) * n];
                    for (d, gv) in dst.iter_mut().zip(row) {
                        *d += av * gv;
                    }
                }
            }
            Tensor::new(vec![k, n], out)
        });
        vec![da, db]
    }
}

// ── Activations ─────────────────────────────────────────────────────────

#[derive(Debug)]
pub struct Relu;

impl Primitive for Relu {
    fn name(&self) -> &'static str {
        "relu"
    }

    fn infer_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>, TensorError> {
        arity(self.name(), inputs, 1)?;
        Ok(inputs[0].to_vec())
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        Tensor::new(
            inputs[0].shape().to_vec(),
            inputs[0].data().iter().map(|v| v.max(0.0)).collect(),
        )
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>> {
        // Subgradient at 0 is 0.
        vec![needs[0].then(|| {
            Tensor::new(
                grad.shape().to_vec(),
                grad.data()
                    .iter()
                    .zip(inputs[0].data())
                    .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                    .collect(),
            )
        })]
    }
}

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug)]
pub struct Sigmoid;

impl Primitive for Sigmoid {
    fn name(&self) -> &'static str {
        "sigmoid"
    }

    fn infer_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>, TensorError> {
        arity(self.name(), inputs, 1)?;
        Ok(inputs[0].to_vec())
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        Tensor::new(
            inputs[0].shape().to_vec(),
            inputs[0].data().iter().map(|&x| sigmoid_scalar(x)).collect(),
        )
    }

    fn backward(
        &self,
        _inputs: &[&Tensor],
        output: &Tensor,
        grad: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>> {
        vec![needs[0].then(|| {
            Tensor::new(
                grad.shape().to_vec(),
                grad.data()
                    .iter()
                    .zip(output.data())
                    .map(|(g, &s)| g * s * (1.0 - s))
                    .collect(),
            )
        })]
    }
}

/// Softmax over the last axis, stabilized by the row maximum.
#[derive(Debug)]
pub struct Softmax;

impl Primitive for Softmax {
    fn name(&self) -> &'static str {
        "softmax"
    }

    fn infer_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>, TensorError> {
        arity(self.name(), inputs, 1)?;
        if inputs[0].is_empty() {
            return Err(TensorError::ShapeMismatch {
                primitive: self.name(),
                detail: "softmax needs at least one axis".to_string(),
            });
        }
        Ok(inputs[0].to_vec())
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        let shape = inputs[0].shape().to_vec();
        let width = *shape.last().unwrap();
        let mut data = inputs[0].data().to_vec();
        for row in data.chunks_mut(width) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        Tensor::new(shape, data)
    }

    fn backward(
        &self,
        _inputs: &[&Tensor],
        output: &Tensor,
        grad: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>> {
        vec![needs[0].then(|| {
            let width = *output.shape().last().unwrap();
            let mut out = vec![0.0; output.numel()];
            for (row, (y, g)) in output
                .data()
                .chunks(width)
                .zip(grad.data().chunks(width))
                .enumerate()
            {
                let dot: f64 = y.iter().zip(g).map(|(yv, gv)| yv * gv).sum();
                let dst = &mut out[row * width..(row + 1) * width];
                for ((d, yv), gv) in dst.iter_mut().zip(y).zip(g) {
                    *d = yv * (gv - dot);
                }
            }
            Tensor::new(output.shape().to_vec(), out)
        })]
    }
}

// ── Reductions and reshape ──────────────────────────────────────────────

#[derive(Debug)]
pub struct Sum;

impl Primitive for Sum {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn infer_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>, TensorError> {
        arity(self.name(), inputs, 1)?;
        Ok(vec![1])
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        Tensor::scalar(inputs[0].data().iter().sum())
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>> {
        let g = grad.scalar_value();
        vec![needs[0].then(|| {
            Tensor::new(
                inputs[0].shape().to_vec(),
                vec![g; inputs[0].numel()],
            )
        })]
    }
}

#[derive(Debug)]
pub struct Mean;

impl Primitive for Mean {
    fn name(&self) -> &'static str {
        "mean"
    }

    fn infer_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>, TensorError> {
        arity(self.name(), inputs, 1)?;
        if inputs[0].iter().product::<usize>() == 0 {
            return Err(TensorError::ShapeMismatch {
                primitive: self.name(),
                detail: "mean of an empty tensor".to_string(),
            });
        }
        Ok(vec![1])
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        let n = inputs[0].numel() as f64;
        Tensor::scalar(inputs[0].data().iter().sum::<f64>() / n)
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>> {
        let n = inputs[0].numel() as f64;
        let g = grad.scalar_value() / n;
        vec![needs[0].then(|| {
            Tensor::new(
                inputs[0].shape().to_vec(),
                vec![g; inputs[0].numel()],
            )
        })]
    }
}

/// Sum of squared entries, the kernel of the l2 regularizer.
#[derive(Debug)]
pub struct SumSquares;

impl Primitive for SumSquares {
    fn name(&self) -> &'static str {
        "sum_squares"
    }

    fn infer_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>, TensorError> {
        arity(self.name(), inputs, 1)?;
        Ok(vec![1])
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        Tensor::scalar(inputs[0].data().iter().map(|v| v * v).sum())
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>> {
        let g = grad.scalar_value();
        vec![needs[0].then(|| {
            Tensor::new(
                inputs[0].shape().to_vec(),
                inputs[0].data().iter().map(|x| 2.0 * x * g).collect(),
            )
        })]
    }
}

#[derive(Debug)]
pub struct Reshape {
    pub shape: Vec<usize>,
}

impl Reshape {
    pub fn new(shape: Vec<usize>) -> Self {
        Reshape { shape }
    }
}

impl Primitive for Reshape {
    fn name(&self) -> &'static str {
        "reshape"
    }

    fn infer_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>, TensorError> {
        arity(self.name(), inputs, 1)?;
        let in_numel: usize = inputs[0].iter().product();
        let out_numel: usize = self.shape.iter().product();
        if in_numel != out_numel {
            return Err(TensorError::ShapeMismatch {
                primitive: self.name(),
                detail: format!("cannot view {:?} as {:?}", inputs[0], self.shape),
            });
        }
        Ok(self.shape.clone())
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        inputs[0].reshaped(self.shape.clone())
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>> {
        vec![needs[0].then(|| grad.reshaped(inputs[0].shape().to_vec()))]
    }
}
