//! Reverse-mode differentiation over the ops in this module.
//!
//! A [`Tape`] is built fresh for every forward pass. Parameters enter as
//! borrowed leaves, so recording a model costs no parameter copies.
//! [`Tape::backward`] walks the nodes in reverse creation order, which is a
//! valid topological order because every op only references earlier nodes.

use std::borrow::Cow;

use super::*;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Conv { input: Var, weight: Var, bias: Var, spec: ConvSpec },
    Linear { input: Var, weight: Var, bias: Var },
    Relu(Var),
    Sigmoid(Var),
    Dropout { input: Var, mask: Vec<T> },
    BatchNorm { input: Var, gamma: Var, beta: Var, cache: BatchNormCache<T> },
    Add(Var, Var),
    AvgPool(Var),
    Upsample(Var),
    Concat { a: Var, b: Var },
    Scale { feature: Var, weights: Var },
    Reshape(Var),
    SoftmaxXent { logits: Var, grad: Grid<T> },
    WeightedSum { input: Var, weights: Grid<T> },
}

struct Node<'p, T: Real> {
    value: Cow<'p, Grid<T>>,
    grad: Option<Grid<T>>,
    op: Op<T>,
}

pub struct Tape<'p, T: Real> {
    nodes: Vec<Node<'p, T>>,
    backward_done: bool,
}

impl<T: Real> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

fn scalar<T: Real>(v: T) -> Grid<T> {
    Grid::from_parts(Shape::new(1, 1, 1), vec![v])
}

impl<'p, T: Real> Tape<'p, T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            backward_done: false,
        }
    }

    fn push(&mut self, value: Cow<'p, Grid<T>>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, grad: None, op });
        Var(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Grid<T>) -> Var {
        self.push(Cow::Owned(value), Op::Leaf)
    }

    /// Leaf that borrows its value, e.g. a model parameter.
    pub fn leaf_ref(&mut self, value: &'p Grid<T>) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Grid<T> {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of the last backward target w.r.t. `v`;
    /// `Ok(None)` when `v` does not influence that target.
    pub fn grad(&self, v: Var) -> Result<Option<&Grid<T>>> {
        if !self.backward_done {
            return Err(Error::NoGradient);
        }
        Ok(self.nodes[v.0].grad.as_ref())
    }

    pub fn grad_or_zeros(&self, v: Var) -> Result<Grid<T>> {
        Ok(self
            .grad(v)?
            .cloned()
            .unwrap_or_else(|| Grid::zeros(self.value(v).shape())))
    }

    pub fn zero_grad(&mut self) {
        self.nodes.iter_mut().for_each(|n| n.grad = None);
        self.backward_done = false;
    }

    /// Batch statistics recorded by a batch-norm node.
    pub fn bn_cache(&self, v: Var) -> Option<&BatchNormCache<T>> {
        match &self.nodes[v.0].op {
            Op::BatchNorm { cache, .. } => Some(cache),
            _ => None,
        }
    }

    pub fn conv1d(&mut self, input: Var, weight: Var, bias: Var, spec: ConvSpec) -> Result<Var> {
        let y = conv1d(self.value(input), self.value(weight), self.value(bias), &spec)?;
        Ok(self.push(Cow::Owned(y), Op::Conv { input, weight, bias, spec }))
    }

    pub fn fully_connected(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let y = fully_connected(self.value(input), self.value(weight), self.value(bias))?;
        Ok(self.push(Cow::Owned(y), Op::Linear { input, weight, bias }))
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Var {
        match kind {
            Activation::Relu => {
                let y = relu(self.value(input));
                self.push(Cow::Owned(y), Op::Relu(input))
            }
            Activation::Sigmoid => {
                let y = sigmoid(self.value(input));
                self.push(Cow::Owned(y), Op::Sigmoid(input))
            }
        }
    }

    pub fn relu(&mut self, input: Var) -> Var {
        self.activation(input, Activation::Relu)
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        self.activation(input, Activation::Sigmoid)
    }

    pub fn dropout(&mut self, input: Var, p: f64, seed: u64, mode: Mode) -> Result<Var> {
        match dropout(self.value(input), p, seed, mode)? {
            (_, None) => Ok(input),
            (y, Some(mask)) => Ok(self.push(Cow::Owned(y), Op::Dropout { input, mask })),
        }
    }

    pub fn batch_norm(&mut self, input: Var, gamma: Var, beta: Var, mode: BnMode<'_, T>) -> Result<Var> {
        let (y, cache) = batch_norm1d(self.value(input), self.value(gamma), self.value(beta), mode)?;
        Ok(self.push(Cow::Owned(y), Op::BatchNorm { input, gamma, beta, cache }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = add(self.value(a), self.value(b))?;
        Ok(self.push(Cow::Owned(y), Op::Add(a, b)))
    }

    pub fn adaptive_avg_pool(&mut self, input: Var, target: usize) -> Result<Var> {
        let y = adaptive_avg_pool(self.value(input), target)?;
        Ok(self.push(Cow::Owned(y), Op::AvgPool(input)))
    }

    pub fn upsample2x(&mut self, input: Var) -> Var {
        let y = upsample2x(self.value(input));
        self.push(Cow::Owned(y), Op::Upsample(input))
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = concat_channels(self.value(a), self.value(b))?;
        Ok(self.push(Cow::Owned(y), Op::Concat { a, b }))
    }

    pub fn scale_channels(&mut self, feature: Var, weights: Var) -> Result<Var> {
        let y = scale_channels(self.value(feature), self.value(weights))?;
        Ok(self.push(Cow::Owned(y), Op::Scale { feature, weights }))
    }

    pub fn reshape(&mut self, input: Var, shape: Shape) -> Result<Var> {
        let y = self.value(input).clone().reshape(shape)?;
        Ok(self.push(Cow::Owned(y), Op::Reshape(input)))
    }

    pub fn flatten(&mut self, input: Var) -> Var {
        let s = self.value(input).shape();
        self.reshape(input, Shape::new(s.batch, 1, s.len * s.channels))
            .expect("flatten preserves element count")
    }

    /// Mean cross-entropy of the batch as a scalar node, plus the softmax probabilities.
    pub fn softmax_xent(&mut self, logits: Var, labels: &[usize]) -> Result<(Var, SoftmaxXent<T>)> {
        let r = softmax_xent(self.value(logits), labels)?;
        let v = self.push(
            Cow::Owned(scalar(r.loss)),
            Op::SoftmaxXent {
                logits,
                grad: r.grad.clone(),
            },
        );
        Ok((v, r))
    }

    /// Scalar `Σ weights ⊙ input`; its gradient w.r.t. `input` is `weights`.
    pub fn weighted_sum(&mut self, input: Var, weights: Grid<T>) -> Result<Var> {
        weights.expect_shape("weighted_sum", self.value(input).shape())?;
        let s = self
            .value(input)
            .data()
            .iter()
            .zip(weights.data())
            .map(|(&a, &b)| a * b)
            .sum();
        Ok(self.push(Cow::Owned(scalar(s)), Op::WeightedSum { input, weights }))
    }

    /// Back-propagates from the scalar node `target`.
    ///
    /// Leaf gradients accumulate across calls until [`Tape::zero_grad`];
    /// intermediate gradients are recomputed on every call.
    pub fn backward(&mut self, target: Var) -> Result<()> {
        let shape = self.value(target).shape();
        if shape.numel() != 1 {
            return Err(Error::shape("backward", "scalar target", shape));
        }
        for node in &mut self.nodes {
            if !matches!(node.op, Op::Leaf) {
                node.grad = None;
            }
        }
        self.nodes[target.0].grad = Some(Grid::filled(shape, T::one()));

        for idx in (0..=target.0).rev() {
            let Some(g) = self.nodes[idx].grad.take() else {
                continue;
            };
            let updates = self.input_grads(idx, &g)?;
            self.nodes[idx].grad = Some(g);
            for (var, grad) in updates {
                match &mut self.nodes[var.0].grad {
                    Some(acc) => acc.add_assign(&grad),
                    slot @ None => *slot = Some(grad),
                }
            }
        }
        self.backward_done = true;
        Ok(())
    }

    fn input_grads(&self, idx: usize, g: &Grid<T>) -> Result<Vec<(Var, Grid<T>)>> {
        let node = &self.nodes[idx];
        let out = match &node.op {
            Op::Leaf => vec![],
            Op::Conv { input, weight, bias, spec } => {
                let r = conv1d_backward(g, self.value(*input), self.value(*weight), spec)?;
                vec![(*input, r.input), (*weight, r.weights), (*bias, r.bias)]
            }
            Op::Linear { input, weight, bias } => {
                let r = fully_connected_backward(g, self.value(*input), self.value(*weight))?;
                vec![(*input, r.input), (*weight, r.weights), (*bias, r.bias)]
            }
            Op::Relu(x) => vec![(*x, relu_backward(g, self.value(*x)))],
            Op::Sigmoid(x) => vec![(*x, sigmoid_backward(g, &node.value))],
            Op::Dropout { input, mask } => {
                let d = g.data().iter().zip(mask).map(|(&a, &m)| a * m).collect();
                vec![(*input, Grid::from_parts(g.shape(), d))]
            }
            Op::BatchNorm { input, gamma, beta, cache } => {
                let r = batch_norm1d_backward(g, self.value(*gamma), cache)?;
                vec![(*input, r.input), (*gamma, r.gamma), (*beta, r.beta)]
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::AvgPool(x) => vec![(*x, adaptive_avg_pool_backward(g, self.value(*x).shape()))],
            Op::Upsample(x) => vec![(*x, upsample2x_backward(g))],
            Op::Concat { a, b } => {
                let (da, db) = concat_channels_backward(g, self.value(*a).channels());
                vec![(*a, da), (*b, db)]
            }
            Op::Scale { feature, weights } => {
                let (df, dw) = scale_channels_backward(g, self.value(*feature), self.value(*weights));
                vec![(*feature, df), (*weights, dw)]
            }
            Op::Reshape(x) => vec![(*x, g.clone().reshape(self.value(*x).shape())?)],
            Op::SoftmaxXent { logits, grad } => {
                let s = g.data()[0];
                vec![(*logits, grad.map(|v| v * s))]
            }
            Op::WeightedSum { input, weights } => {
                let s = g.data()[0];
                vec![(*input, weights.map(|v| v * s))]
            }
        };
        Ok(out)
    }
}
