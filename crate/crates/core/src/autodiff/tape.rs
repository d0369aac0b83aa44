use std::cell::{Cell, Ref, RefCell};
use std::fmt;

use crate::autodiff::broadcast::{broadcast_shape, IndexMap};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{numel, Tensor};

/// Pointwise operations. The first four are binary and broadcast on trailing dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    Div,
    Exp,
    Log,
    Tanh,
    Sigmoid,
    Softplus,
    Relu,
    Square,
    Negate,
}

impl ElementwiseOp {
    pub const ALL: [ElementwiseOp; 12] = [
        ElementwiseOp::Add,
        ElementwiseOp::Sub,
        ElementwiseOp::Mul,
        ElementwiseOp::Div,
        ElementwiseOp::Exp,
        ElementwiseOp::Log,
        ElementwiseOp::Tanh,
        ElementwiseOp::Sigmoid,
        ElementwiseOp::Softplus,
        ElementwiseOp::Relu,
        ElementwiseOp::Square,
        ElementwiseOp::Negate,
    ];

    pub fn is_binary(self) -> bool {
        matches!(
            self,
            ElementwiseOp::Add | ElementwiseOp::Sub | ElementwiseOp::Mul | ElementwiseOp::Div
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            ElementwiseOp::Add => "add",
            ElementwiseOp::Sub => "sub",
            ElementwiseOp::Mul => "mul",
            ElementwiseOp::Div => "div",
            ElementwiseOp::Exp => "exp",
            ElementwiseOp::Log => "log",
            ElementwiseOp::Tanh => "tanh",
            ElementwiseOp::Sigmoid => "sigmoid",
            ElementwiseOp::Softplus => "softplus",
            ElementwiseOp::Relu => "relu",
            ElementwiseOp::Square => "square",
            ElementwiseOp::Negate => "negate",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ReduceOp {
    Sum,
    Mean,
    Max,
}

impl ReduceOp {
    pub fn name(self) -> &'static str {
        match self {
            ReduceOp::Sum => "sum",
            ReduceOp::Mean => "mean",
            ReduceOp::Max => "max",
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Elementwise {
        kind: ElementwiseOp,
        a: usize,
        b: Option<usize>,
    },
    MatMul {
        a: usize,
        b: usize,
    },
    Reduce {
        kind: ReduceOp,
        a: usize,
        axis: Option<usize>,
        // flat input index of the winner for each output element (max only)
        argmax: Vec<usize>,
    },
    Concat {
        inputs: Vec<usize>,
        axis: usize,
    },
    Reshape {
        a: usize,
    },
    LogSoftmax {
        a: usize,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Elementwise { kind, .. } => kind.name(),
            Op::MatMul { .. } => "matmul",
            Op::Reduce { kind, .. } => kind.name(),
            Op::Concat { .. } => "concat",
            Op::Reshape { .. } => "reshape",
            Op::LogSoftmax { .. } => "log_softmax",
        }
    }
}

struct Node<S> {
    value: Tensor<S>,
    op: Op,
    requires_grad: bool,
}

/// Records operations in evaluation order and differentiates them in reverse.
///
/// A tape is rebuilt for every forward pass. After [`Tape::backward`] it must be
/// [`reset`](Tape::reset) before it can be differentiated again.
pub struct Tape<S: Real> {
    nodes: RefCell<Vec<Node<S>>>,
    check_finite: bool,
    consumed: Cell<bool>,
    fault: RefCell<Option<String>>,
}

impl<S: Real> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Real> fmt::Debug for Tape<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape")
            .field("nodes", &self.nodes.borrow().len())
            .field("check_finite", &self.check_finite)
            .finish()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, S: Real> {
    tape: &'t Tape<S>,
    id: usize,
}

impl<S: Real> fmt::Debug for Var<'_, S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients<S> {
    grads: Vec<Option<Tensor<S>>>,
    shapes: Vec<Vec<usize>>,
}

impl<S: Real> Gradients<S> {
    /// Gradient of `var`, or `None` when the loss does not depend on it.
    pub fn get(&self, var: Var<'_, S>) -> Option<&Tensor<S>> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Gradient of `var`, with zeros for unreachable nodes.
    pub fn wrt(&self, var: Var<'_, S>) -> Tensor<S> {
        match self.get(var) {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[var.id]),
        }
    }
}

impl<S: Real> Tape<S> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            check_finite: true,
            consumed: Cell::new(false),
            fault: RefCell::new(None),
        }
    }

    /// Enables or disables NaN/Inf and domain checks at every op boundary.
    pub fn with_finite_checks(mut self, enabled: bool) -> Self {
        self.check_finite = enabled;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops every recorded node so the tape can be reused.
    pub fn reset(&mut self) {
        self.nodes.get_mut().clear();
        self.consumed.set(false);
    }

    /// Scales the backward contribution of every op named `op` by two.
    /// Used by the self-check to prove that a broken derivative is caught.
    #[doc(hidden)]
    pub fn inject_gradient_fault(&self, op: &str) {
        *self.fault.borrow_mut() = Some(op.to_string());
    }

    fn push(&self, value: Tensor<S>, op: Op, requires_grad: bool) -> Var<'_, S> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value_ref(&self, id: usize) -> Ref<'_, Tensor<S>> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    fn requires(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    fn finish(&self, op: &'static str, value: &Tensor<S>) -> Result<()> {
        if self.check_finite && !value.all_finite() {
            return Err(Error::NonFinite { op });
        }
        Ok(())
    }

    /// A differentiable leaf.
    pub fn param(&self, value: Tensor<S>) -> Var<'_, S> {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor<S>) -> Var<'_, S> {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_, S> {
        self.constant(Tensor::scalar(S::lit(value)))
    }

    pub fn elementwise<'t>(
        &'t self,
        kind: ElementwiseOp,
        a: Var<'t, S>,
        b: Option<Var<'t, S>>,
    ) -> Result<Var<'t, S>> {
        match (kind.is_binary(), b) {
            (true, Some(b)) => self.binary(kind, a, b),
            (false, None) => self.unary(kind, a),
            (true, None) => Err(Error::invalid(format!("{} needs two operands", kind.name()))),
            (false, Some(_)) => Err(Error::invalid(format!("{} takes one operand", kind.name()))),
        }
    }

    fn binary<'t>(&'t self, kind: ElementwiseOp, a: Var<'t, S>, b: Var<'t, S>) -> Result<Var<'t, S>> {
        let (value, requires) = {
            let av = self.value_ref(a.id);
            let bv = self.value_ref(b.id);
            let shape = broadcast_shape(av.shape(), bv.shape()).ok_or_else(|| Error::ShapeMismatch {
                op: kind.name(),
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            })?;
            let ma = IndexMap::new(&shape, av.shape());
            let mb = IndexMap::new(&shape, bv.shape());
            let (ad, bd) = (av.data(), bv.data());
            let n = numel(&shape);
            if self.check_finite && kind == ElementwiseOp::Div && bd.iter().any(|v| v.is_zero()) {
                return Err(Error::Domain {
                    op: "div",
                    detail: "division by zero".into(),
                });
            }
            let f: fn(S, S) -> S = match kind {
                ElementwiseOp::Add => |x, y| x + y,
                ElementwiseOp::Sub => |x, y| x - y,
                ElementwiseOp::Mul => |x, y| x * y,
                ElementwiseOp::Div => |x, y| x / y,
                _ => unreachable!(),
            };
            let data: Vec<S> = match (&ma, &mb) {
                (IndexMap::Identity, IndexMap::Identity) => {
                    ad.iter().zip(bd).map(|(&x, &y)| f(x, y)).collect()
                }
                _ => (0..n).map(|i| f(ad[ma.get(i)], bd[mb.get(i)])).collect(),
            };
            (
                Tensor::new(shape, data)?,
                self.requires(a.id) || self.requires(b.id),
            )
        };
        self.finish(kind.name(), &value)?;
        Ok(self.push(
            value,
            Op::Elementwise {
                kind,
                a: a.id,
                b: Some(b.id),
            },
            requires,
        ))
    }

    fn unary<'t>(&'t self, kind: ElementwiseOp, a: Var<'t, S>) -> Result<Var<'t, S>> {
        let value = {
            let av = self.value_ref(a.id);
            if self.check_finite && kind == ElementwiseOp::Log {
                if let Some(v) = av.data().iter().find(|v| **v <= S::zero()) {
                    return Err(Error::Domain {
                        op: "log",
                        detail: format!("argument {v} is not positive"),
                    });
                }
            }
            let f: fn(S) -> S = match kind {
                ElementwiseOp::Exp => |x| x.exp(),
                ElementwiseOp::Log => |x| x.ln(),
                ElementwiseOp::Tanh => |x| x.tanh(),
                ElementwiseOp::Sigmoid => sigmoid,
                ElementwiseOp::Softplus => softplus,
                ElementwiseOp::Relu => |x| if x > S::zero() { x } else { S::zero() },
                ElementwiseOp::Square => |x| x * x,
                ElementwiseOp::Negate => |x| -x,
                _ => unreachable!(),
            };
            av.map(f)
        };
        self.finish(kind.name(), &value)?;
        let requires = self.requires(a.id);
        Ok(self.push(value, Op::Elementwise { kind, a: a.id, b: None }, requires))
    }

    pub fn matmul<'t>(&'t self, a: Var<'t, S>, b: Var<'t, S>) -> Result<Var<'t, S>> {
        let value = {
            let av = self.value_ref(a.id);
            let bv = self.value_ref(b.id);
            let (m, k, n) = match (av.shape(), bv.shape()) {
                (&[m, k], &[k2, n]) if k == k2 => (m, k, n),
                (l, r) => {
                    return Err(Error::ShapeMismatch {
                        op: "matmul",
                        left: l.to_vec(),
                        right: r.to_vec(),
                    })
                }
            };
            let mut out = vec![S::zero(); m * n];
            S::gemm(
                m,
                k,
                n,
                S::one(),
                av.data(),
                k as isize,
                1,
                bv.data(),
                n as isize,
                1,
                S::zero(),
                &mut out,
                n as isize,
                1,
            );
            Tensor::new(vec![m, n], out)?
        };
        self.finish("matmul", &value)?;
        let requires = self.requires(a.id) || self.requires(b.id);
        Ok(self.push(value, Op::MatMul { a: a.id, b: b.id }, requires))
    }

    /// Reduces over one axis (or every axis when `axis` is `None`).
    pub fn reduce<'t>(
        &'t self,
        kind: ReduceOp,
        a: Var<'t, S>,
        axis: Option<usize>,
        keepdim: bool,
    ) -> Result<Var<'t, S>> {
        let (value, argmax) = {
            let av = self.value_ref(a.id);
            let shape = av.shape();
            let (outer, len, inner, out_shape) = match axis {
                None => {
                    let s = if keepdim { vec![1; shape.len()] } else { Vec::new() };
                    (1, av.len(), 1, s)
                }
                Some(ax) => {
                    if ax >= shape.len() {
                        return Err(Error::InvalidAxis {
                            op: kind.name(),
                            axis: ax,
                            rank: shape.len(),
                        });
                    }
                    let mut s = shape.to_vec();
                    if keepdim {
                        s[ax] = 1;
                    } else {
                        s.remove(ax);
                    }
                    (
                        numel(&shape[..ax]),
                        shape[ax],
                        numel(&shape[ax + 1..]),
                        s,
                    )
                }
            };
            if len == 0 && kind != ReduceOp::Sum {
                return Err(Error::EmptyReduction { op: kind.name() });
            }
            let d = av.data();
            let mut out = vec![S::zero(); outer * inner];
            let mut argmax = Vec::new();
            if kind == ReduceOp::Max {
                argmax = vec![0; outer * inner];
            }
            for o in 0..outer {
                for j in 0..inner {
                    let slot = o * inner + j;
                    let at = |t: usize| (o * len + t) * inner + j;
                    match kind {
                        ReduceOp::Sum | ReduceOp::Mean => {
                            let mut acc = S::zero();
                            for t in 0..len {
                                acc = acc + d[at(t)];
                            }
                            if kind == ReduceOp::Mean {
                                acc = acc / S::lit(len as f64);
                            }
                            out[slot] = acc;
                        }
                        ReduceOp::Max => {
                            let mut best = at(0);
                            for t in 1..len {
                                if d[at(t)] > d[best] {
                                    best = at(t);
                                }
                            }
                            out[slot] = d[best];
                            argmax[slot] = best;
                        }
                    }
                }
            }
            (Tensor::new(out_shape, out)?, argmax)
        };
        self.finish(kind.name(), &value)?;
        let requires = self.requires(a.id);
        Ok(self.push(
            value,
            Op::Reduce {
                kind,
                a: a.id,
                axis,
                argmax,
            },
            requires,
        ))
    }

    pub fn concat<'t>(&'t self, parts: &[Var<'t, S>], axis: usize) -> Result<Var<'t, S>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat of zero tensors"))?;
        let value = {
            let base = self.value_ref(first.id).shape().to_vec();
            if axis >= base.len() {
                return Err(Error::InvalidAxis {
                    op: "concat",
                    axis,
                    rank: base.len(),
                });
            }
            let mut total = 0;
            for p in parts {
                let s = self.value_ref(p.id).shape().to_vec();
                let compatible = s.len() == base.len()
                    && s.iter()
                        .zip(&base)
                        .enumerate()
                        .all(|(i, (x, y))| i == axis || x == y);
                if !compatible {
                    return Err(Error::ShapeMismatch {
                        op: "concat",
                        left: base,
                        right: s,
                    });
                }
                total += s[axis];
            }
            let outer = numel(&base[..axis]);
            let inner = numel(&base[axis + 1..]);
            let mut data = Vec::with_capacity(outer * total * inner);
            let values: Vec<_> = parts.iter().map(|p| self.value_ref(p.id)).collect();
            for o in 0..outer {
                for v in &values {
                    let chunk = v.shape()[axis] * inner;
                    data.extend_from_slice(&v.data()[o * chunk..(o + 1) * chunk]);
                }
            }
            let mut shape = base;
            shape[axis] = total;
            Tensor::new(shape, data)?
        };
        let requires = parts.iter().any(|p| self.requires(p.id));
        Ok(self.push(
            value,
            Op::Concat {
                inputs: parts.iter().map(|p| p.id).collect(),
                axis,
            },
            requires,
        ))
    }

    pub fn reshape<'t>(&'t self, a: Var<'t, S>, shape: &[usize]) -> Result<Var<'t, S>> {
        let value = self.value_ref(a.id).clone().reshape(shape)?;
        let requires = self.requires(a.id);
        Ok(self.push(value, Op::Reshape { a: a.id }, requires))
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax<'t>(&'t self, a: Var<'t, S>) -> Result<Var<'t, S>> {
        let value = {
            let av = self.value_ref(a.id);
            let k = *av
                .shape()
                .last()
                .ok_or_else(|| Error::invalid("log_softmax of a rank-0 tensor"))?;
            if k == 0 {
                return Err(Error::EmptyReduction { op: "log_softmax" });
            }
            let mut out = av.data().to_vec();
            for row in out.chunks_mut(k) {
                let m = row.iter().copied().fold(S::neg_infinity(), S::max);
                let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<S>().ln();
                row.iter_mut().for_each(|v| *v = *v - lse);
            }
            Tensor::new(av.shape().to_vec(), out)?
        };
        self.finish("log_softmax", &value)?;
        let requires = self.requires(a.id);
        Ok(self.push(value, Op::LogSoftmax { a: a.id }, requires))
    }

    /// Copies the value into a new constant, blocking gradient flow.
    pub fn detach<'t>(&'t self, a: Var<'t, S>) -> Var<'t, S> {
        let value = self.value_ref(a.id).clone();
        self.constant(value)
    }

    pub fn backward(&self, loss: Var<'_, S>) -> Result<Gradients<S>> {
        if self.consumed.get() {
            return Err(Error::TapeConsumed);
        }
        let nodes = self.nodes.borrow();
        let loss_shape = nodes[loss.id].value.shape().to_vec();
        if numel(&loss_shape) != 1 {
            return Err(Error::NonScalarLoss { shape: loss_shape });
        }
        self.consumed.set(true);
        let fault = self.fault.borrow().clone();

        let mut grads: Vec<Option<Tensor<S>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::full(&loss_shape, S::one()));

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if node.requires_grad {
                let scale = match &fault {
                    Some(name) if name == node.op.name() => S::lit(2.0),
                    _ => S::one(),
                };
                let mut contributions = Vec::new();
                backprop_node(&nodes, node, &g, &mut contributions)?;
                for (input, mut grad) in contributions {
                    if scale != S::one() {
                        grad.data_mut().iter_mut().for_each(|v| *v = *v * scale);
                    }
                    accumulate(&mut grads[input], grad);
                }
            }
            grads[id] = Some(g);
        }

        Ok(Gradients {
            grads,
            shapes: nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }
}

fn accumulate<S: Real>(slot: &mut Option<Tensor<S>>, grad: Tensor<S>) {
    match slot {
        None => *slot = Some(grad),
        Some(acc) => acc
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .for_each(|(a, &b)| *a = *a + b),
    }
}

/// Sums `f(i)` over the broadcast output into an operand-shaped buffer.
fn unbroadcast<S: Real>(out_shape: &[usize], operand: &[usize], f: impl Fn(usize) -> S) -> Tensor<S> {
    let map = IndexMap::new(out_shape, operand);
    let n = numel(out_shape);
    let data = match map {
        IndexMap::Identity => (0..n).map(f).collect(),
        _ => {
            let mut acc = vec![S::zero(); numel(operand)];
            for i in 0..n {
                let j = map.get(i);
                acc[j] = acc[j] + f(i);
            }
            acc
        }
    };
    Tensor::new(operand.to_vec(), data).expect("operand-shaped gradient")
}

fn backprop_node<S: Real>(
    nodes: &[Node<S>],
    node: &Node<S>,
    g: &Tensor<S>,
    out: &mut Vec<(usize, Tensor<S>)>,
) -> Result<()> {
    let gd = g.data();
    let y = &node.value;
    let wants = |id: usize| nodes[id].requires_grad;
    match &node.op {
        Op::Leaf => {}
        Op::Elementwise { kind, a, b: Some(b) } => {
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            let shape = y.shape();
            let ma = IndexMap::new(shape, av.shape());
            let mb = IndexMap::new(shape, bv.shape());
            let (ad, bd) = (av.data(), bv.data());
            if wants(*a) {
                let ga = match kind {
                    ElementwiseOp::Add | ElementwiseOp::Sub => unbroadcast(shape, av.shape(), |i| gd[i]),
                    ElementwiseOp::Mul => unbroadcast(shape, av.shape(), |i| gd[i] * bd[mb.get(i)]),
                    ElementwiseOp::Div => unbroadcast(shape, av.shape(), |i| gd[i] / bd[mb.get(i)]),
                    _ => unreachable!(),
                };
                out.push((*a, ga));
            }
            if wants(*b) {
                let gb = match kind {
                    ElementwiseOp::Add => unbroadcast(shape, bv.shape(), |i| gd[i]),
                    ElementwiseOp::Sub => unbroadcast(shape, bv.shape(), |i| -gd[i]),
                    ElementwiseOp::Mul => unbroadcast(shape, bv.shape(), |i| gd[i] * ad[ma.get(i)]),
                    ElementwiseOp::Div => unbroadcast(shape, bv.shape(), |i| {
                        let d = bd[mb.get(i)];
                        -gd[i] * ad[ma.get(i)] / (d * d)
                    }),
                    _ => unreachable!(),
                };
                out.push((*b, gb));
            }
        }
        Op::Elementwise { kind, a, b: None } => {
            if wants(*a) {
                let x = nodes[*a].value.data();
                let yd = y.data();
                let two = S::lit(2.0);
                let data: Vec<S> = (0..gd.len())
                    .map(|i| {
                        let d = match kind {
                            ElementwiseOp::Exp => yd[i],
                            ElementwiseOp::Log => S::one() / x[i],
                            ElementwiseOp::Tanh => S::one() - yd[i] * yd[i],
                            ElementwiseOp::Sigmoid => yd[i] * (S::one() - yd[i]),
                            ElementwiseOp::Softplus => sigmoid(x[i]),
                            // subgradient 0 at the kink
                            ElementwiseOp::Relu => {
                                if x[i] > S::zero() {
                                    S::one()
                                } else {
                                    S::zero()
                                }
                            }
                            ElementwiseOp::Square => two * x[i],
                            ElementwiseOp::Negate => -S::one(),
                            _ => unreachable!(),
                        };
                        gd[i] * d
                    })
                    .collect();
                out.push((*a, Tensor::new(y.shape().to_vec(), data)?));
            }
        }
        Op::MatMul { a, b } => {
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
            if wants(*a) {
                // dA = G · Bᵀ
                let mut da = vec![S::zero(); m * k];
                S::gemm(
                    m,
                    n,
                    k,
                    S::one(),
                    gd,
                    n as isize,
                    1,
                    bv.data(),
                    1,
                    n as isize,
                    S::zero(),
                    &mut da,
                    k as isize,
                    1,
                );
                out.push((*a, Tensor::new(vec![m, k], da)?));
            }
            if wants(*b) {
                // dB = Aᵀ · G
                let mut db = vec![S::zero(); k * n];
                S::gemm(
                    k,
                    m,
                    n,
                    S::one(),
                    av.data(),
                    1,
                    k as isize,
                    gd,
                    n as isize,
                    1,
                    S::zero(),
                    &mut db,
                    n as isize,
                    1,
                );
                out.push((*b, Tensor::new(vec![k, n], db)?));
            }
        }
        Op::Reduce {
            kind,
            a,
            axis,
            argmax,
        } => {
            if wants(*a) {
                let shape = nodes[*a].value.shape();
                let (len, inner) = match axis {
                    None => (numel(shape), 1),
                    Some(ax) => (shape[*ax], numel(&shape[ax + 1..])),
                };
                let total = numel(shape);
                let mut data = vec![S::zero(); total];
                match kind {
                    ReduceOp::Sum | ReduceOp::Mean => {
                        let scale = if *kind == ReduceOp::Mean {
                            S::one() / S::lit(len as f64)
                        } else {
                            S::one()
                        };
                        for (i, v) in data.iter_mut().enumerate() {
                            let slot = (i / (len * inner)) * inner + i % inner;
                            *v = gd[slot] * scale;
                        }
                    }
                    ReduceOp::Max => {
                        for (slot, &winner) in argmax.iter().enumerate() {
                            data[winner] = data[winner] + gd[slot];
                        }
                    }
                }
                out.push((*a, Tensor::new(shape.to_vec(), data)?));
            }
        }
        Op::Concat { inputs, axis } => {
            let shape = y.shape();
            let outer = numel(&shape[..*axis]);
            let inner = numel(&shape[axis + 1..]);
            let row = shape[*axis] * inner;
            let mut offset = 0;
            for &id in inputs {
                let s = nodes[id].value.shape();
                let chunk = s[*axis] * inner;
                if wants(id) {
                    let mut data = Vec::with_capacity(outer * chunk);
                    for o in 0..outer {
                        data.extend_from_slice(&gd[o * row + offset..o * row + offset + chunk]);
                    }
                    out.push((id, Tensor::new(s.to_vec(), data)?));
                }
                offset += chunk;
            }
        }
        Op::Reshape { a } => {
            if wants(*a) {
                out.push((*a, g.clone().reshape(nodes[*a].value.shape())?));
            }
        }
        Op::LogSoftmax { a } => {
            if wants(*a) {
                let k = *y.shape().last().expect("rank >= 1");
                let mut data = vec![S::zero(); gd.len()];
                for ((dst, grow), yrow) in data.chunks_mut(k).zip(gd.chunks(k)).zip(y.data().chunks(k)) {
                    let total: S = grow.iter().copied().sum();
                    for i in 0..k {
                        dst[i] = grow[i] - yrow[i].exp() * total;
                    }
                }
                out.push((*a, Tensor::new(y.shape().to_vec(), data)?));
            }
        }
    }
    Ok(())
}

pub(crate) fn sigmoid<S: Real>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

pub(crate) fn softplus<S: Real>(x: S) -> S {
    if x > S::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl<'t, S: Real> Var<'t, S> {
    pub fn tape(&self) -> &'t Tape<S> {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Tensor<S> {
        self.tape.value_ref(self.id).clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.value_ref(self.id).shape().to_vec()
    }

    pub fn item(&self) -> Result<S> {
        self.tape.value_ref(self.id).item()
    }

    pub fn add(self, other: Var<'t, S>) -> Result<Self> {
        self.tape.binary(ElementwiseOp::Add, self, other)
    }

    pub fn sub(self, other: Var<'t, S>) -> Result<Self> {
        self.tape.binary(ElementwiseOp::Sub, self, other)
    }

    pub fn mul(self, other: Var<'t, S>) -> Result<Self> {
        self.tape.binary(ElementwiseOp::Mul, self, other)
    }

    pub fn div(self, other: Var<'t, S>) -> Result<Self> {
        self.tape.binary(ElementwiseOp::Div, self, other)
    }

    pub fn add_scalar(self, c: f64) -> Result<Self> {
        self.add(self.tape.scalar(c))
    }

    pub fn mul_scalar(self, c: f64) -> Result<Self> {
        self.mul(self.tape.scalar(c))
    }

    pub fn exp(self) -> Result<Self> {
        self.tape.unary(ElementwiseOp::Exp, self)
    }

    pub fn log(self) -> Result<Self> {
        self.tape.unary(ElementwiseOp::Log, self)
    }

    pub fn tanh(self) -> Result<Self> {
        self.tape.unary(ElementwiseOp::Tanh, self)
    }

    pub fn sigmoid(self) -> Result<Self> {
        self.tape.unary(ElementwiseOp::Sigmoid, self)
    }

    pub fn softplus(self) -> Result<Self> {
        self.tape.unary(ElementwiseOp::Softplus, self)
    }

    pub fn relu(self) -> Result<Self> {
        self.tape.unary(ElementwiseOp::Relu, self)
    }

    pub fn square(self) -> Result<Self> {
        self.tape.unary(ElementwiseOp::Square, self)
    }

    pub fn neg(self) -> Result<Self> {
        self.tape.unary(ElementwiseOp::Negate, self)
    }

    pub fn matmul(self, other: Var<'t, S>) -> Result<Self> {
        self.tape.matmul(self, other)
    }

    pub fn sum(self) -> Result<Self> {
        self.tape.reduce(ReduceOp::Sum, self, None, false)
    }

    pub fn mean(self) -> Result<Self> {
        self.tape.reduce(ReduceOp::Mean, self, None, false)
    }

    pub fn sum_axis(self, axis: usize, keepdim: bool) -> Result<Self> {
        self.tape.reduce(ReduceOp::Sum, self, Some(axis), keepdim)
    }

    pub fn mean_axis(self, axis: usize, keepdim: bool) -> Result<Self> {
        self.tape.reduce(ReduceOp::Mean, self, Some(axis), keepdim)
    }

    pub fn max_axis(self, axis: usize, keepdim: bool) -> Result<Self> {
        self.tape.reduce(ReduceOp::Max, self, Some(axis), keepdim)
    }

    /// Sum over the last axis, dropping it.
    pub fn sum_last(self) -> Result<Self> {
        let rank = self.shape().len();
        if rank == 0 {
            return Ok(self);
        }
        self.sum_axis(rank - 1, false)
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        self.tape.reshape(self, shape)
    }

    pub fn log_softmax(self) -> Result<Self> {
        self.tape.log_softmax(self)
    }

    pub fn softmax(self) -> Result<Self> {
        self.log_softmax()?.exp()
    }

    pub fn detach(self) -> Self {
        self.tape.detach(self)
    }
}
