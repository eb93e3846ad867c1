use std::cell::{Ref, RefCell};

use super::{Element, Shape, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// A user-supplied operation: the caller computes the forward value and the
/// op provides the vector-Jacobian product.
pub trait CustomOp<T: Element> {
    fn name(&self) -> &str;

    /// Gradients for each input, in input order.
    fn backward(&self, inputs: &[&Tensor<T>], output: &Tensor<T>, grad: &Tensor<T>) -> Vec<Tensor<T>>;
}

pub(crate) enum Op<T: Element> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Abs(Var),
    LeakyRelu(Var, T),
    Tanh(Var),
    Sigmoid(Var),
    LogClamped(Var, T),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    PadReplicate(Var, usize),
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
    },
    UpsampleNearest(Var, usize),
    AvgPool(Var, usize),
    ConcatChannels(Var, Var),
    SubPatches(Var),
    Custom(Vec<Var>, Box<dyn CustomOp<T>>),
}

pub(crate) struct Node<T: Element> {
    pub(crate) value: Tensor<T>,
    pub(crate) requires_grad: bool,
    pub(crate) op: Op<T>,
}

/// Ordered record of operations. Nodes are appended in evaluation order, so
/// every node's inputs precede it.
pub struct Graph<T: Element> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: RefCell::new(Vec::new()),
        }
    }

    /// Records an input tensor.
    pub fn leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn constant(&self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    pub fn value(&self, v: Var) -> Ref<'_, Tensor<T>> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes.borrow()[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    pub fn custom(&self, inputs: &[Var], output: Tensor<T>, op: Box<dyn CustomOp<T>>) -> Var {
        let rg = self.any_requires_grad(inputs);
        self.push(output, rg, Op::Custom(inputs.to_vec(), op))
    }

    pub(crate) fn push(&self, value: Tensor<T>, requires_grad: bool, op: Op<T>) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(nodes.len() - 1)
    }

    pub(crate) fn any_requires_grad(&self, vars: &[Var]) -> bool {
        let nodes = self.nodes.borrow();
        vars.iter().any(|v| nodes[v.0].requires_grad)
    }

    /// Reverse-mode sweep from a scalar `loss`. Each recorded operation up to
    /// `loss` is visited once, in reverse recording order.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        let shape = nodes[loss.0].value.shape();
        if shape.numel() != 1 {
            return Err(Error::Shape(format!("backward needs a scalar loss, got shape {shape}")));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        if !nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::full(shape, T::one()));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &nodes[idx];
            let contributions = super::ops::backward_rule(&nodes, node, &g);
            for (v, cg) in contributions {
                if !nodes[v.0].requires_grad {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => {
                        for (a, b) in acc.data_mut().iter_mut().zip(cg.data()) {
                            *a = *a + *b;
                        }
                    }
                    slot @ None => *slot = Some(cg),
                }
            }
            // only leaf gradients are reported
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients<T: Element> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Element> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }

    /// Gradient for `v`, or zeros of `shape` when nothing flowed into it.
    pub fn take_or_zeros(&mut self, v: Var, shape: Shape) -> Tensor<T> {
        self.take(v).unwrap_or_else(|| Tensor::zeros(shape))
    }
}
