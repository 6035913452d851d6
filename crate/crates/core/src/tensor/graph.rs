//! Tape of tensor ops recorded in forward order and replayed in reverse.

use std::borrow::Cow;

use super::ops::{self, LayerNormCache};
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

enum Op {
    Leaf,
    MatMul { a: NodeId, b: NodeId, ta: bool, tb: bool },
    Add { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Scale { a: NodeId, c: f32 },
    Gelu(NodeId),
    Tanh(NodeId),
    Softmax { a: NodeId, axis: usize },
    LayerNorm { x: NodeId, gamma: NodeId, beta: NodeId, cache: LayerNormCache },
    Embedding { table: NodeId, ids: Vec<u32> },
    Dropout { a: NodeId, mask: Vec<f32> },
    Reshape(NodeId),
    Permute { a: NodeId, perm: Vec<usize> },
    Sum(NodeId),
    Mean(NodeId),
    BinaryLoss { logits: NodeId, dlogits: Tensor },
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Records ops as they run. Values of leaves may borrow parameters for the
/// graph's lifetime, so inference never copies weights.
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
    backward_done: bool,
}

/// Gradients of the leaves that require them.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.0).and_then(Option::take)
    }
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            backward_done: false,
        }
    }

    fn push(&mut self, value: Cow<'a, Tensor>, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// A trainable leaf borrowing `t`.
    pub fn param(&mut self, t: &'a Tensor) -> NodeId {
        self.push(Cow::Borrowed(t), Op::Leaf, true)
    }

    /// A borrowed leaf that never receives a gradient.
    pub fn frozen(&mut self, t: &'a Tensor) -> NodeId {
        self.push(Cow::Borrowed(t), Op::Leaf, false)
    }

    pub fn leaf(&mut self, t: Tensor, requires_grad: bool) -> NodeId {
        self.push(Cow::Owned(t), Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.leaf(t, false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId, ta: bool, tb: bool) -> Result<NodeId> {
        let v = ops::matmul(self.value(a), self.value(b), ta, tb)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(Cow::Owned(v), Op::MatMul { a, b, ta, tb }, rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = ops::add(self.value(a), self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(Cow::Owned(v), Op::Add { a, b }, rg))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = ops::mul(self.value(a), self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(Cow::Owned(v), Op::Mul { a, b }, rg))
    }

    pub fn scale(&mut self, a: NodeId, c: f32) -> NodeId {
        let v = ops::scale(self.value(a), c);
        let rg = self.rg(&[a]);
        self.push(Cow::Owned(v), Op::Scale { a, c }, rg)
    }

    /// `x W + b` for a 2-D (or folded N-D) input.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let h = self.matmul(x, w, false, false)?;
        self.add(h, b)
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let v = ops::map(self.value(a), ops::gelu);
        let rg = self.rg(&[a]);
        self.push(Cow::Owned(v), Op::Gelu(a), rg)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = ops::map(self.value(a), f32::tanh);
        let rg = self.rg(&[a]);
        self.push(Cow::Owned(v), Op::Tanh(a), rg)
    }

    pub fn softmax(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        let v = ops::softmax(self.value(a), axis)?;
        let rg = self.rg(&[a]);
        Ok(self.push(Cow::Owned(v), Op::Softmax { a, axis }, rg))
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> Result<NodeId> {
        let (v, cache) = ops::layer_norm(self.value(x), self.value(gamma), self.value(beta))?;
        let rg = self.rg(&[x, gamma, beta]);
        Ok(self.push(Cow::Owned(v), Op::LayerNorm { x, gamma, beta, cache }, rg))
    }

    pub fn embedding(&mut self, table: NodeId, ids: Vec<u32>) -> Result<NodeId> {
        let v = ops::embedding(self.value(table), &ids)?;
        let rg = self.rg(&[table]);
        Ok(self.push(Cow::Owned(v), Op::Embedding { table, ids }, rg))
    }

    /// Identity unless `train` and `rate > 0`.
    pub fn dropout(&mut self, a: NodeId, rate: f32, train: bool, seed: u64) -> NodeId {
        if !train || rate <= 0.0 {
            return a;
        }
        let mask = ops::dropout_mask(self.value(a).numel(), rate, seed);
        let src = self.value(a);
        let v = Tensor {
            shape: src.shape.clone(),
            data: src.data.iter().zip(&mask).map(|(x, m)| x * m).collect(),
        };
        let rg = self.rg(&[a]);
        self.push(Cow::Owned(v), Op::Dropout { a, mask }, rg)
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.value(a).reshape(shape.to_vec()).map_err(|_| Error::Shape {
            op: "reshape",
            lhs: self.value(a).shape.clone(),
            rhs: shape.to_vec(),
        })?;
        let rg = self.rg(&[a]);
        Ok(self.push(Cow::Owned(v), Op::Reshape(a), rg))
    }

    pub fn permute(&mut self, a: NodeId, perm: &[usize]) -> Result<NodeId> {
        let v = ops::permute(self.value(a), perm)?;
        let rg = self.rg(&[a]);
        Ok(self.push(
            Cow::Owned(v),
            Op::Permute {
                a,
                perm: perm.to_vec(),
            },
            rg,
        ))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).data.iter().sum());
        let rg = self.rg(&[a]);
        self.push(Cow::Owned(v), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a);
        let v = Tensor::scalar(t.data.iter().sum::<f32>() / t.numel() as f32);
        let rg = self.rg(&[a]);
        self.push(Cow::Owned(v), Op::Mean(a), rg)
    }

    /// Scalar loss node whose value and gradient w.r.t. `logits` were
    /// computed by the caller.
    pub fn custom_loss(&mut self, logits: NodeId, value: f32, dlogits: Tensor) -> Result<NodeId> {
        if dlogits.shape != self.value(logits).shape {
            return Err(Error::Shape {
                op: "custom_loss",
                lhs: self.value(logits).shape.clone(),
                rhs: dlogits.shape.clone(),
            });
        }
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Cow::Owned(Tensor::scalar(value)),
            Op::BinaryLoss { logits, dlogits },
            rg,
        ))
    }

    /// Reverse pass from a scalar node. Runs at most once per graph.
    pub fn backward(&mut self, loss: NodeId) -> Result<Gradients> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::Shape {
                op: "backward",
                lhs: self.value(loss).shape.clone(),
                rhs: vec![],
            });
        }
        self.backward_done = true;
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape.clone(), 1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            for (input, dg) in self.input_grads(i, &g) {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => {
                        for (a, d) in acc.data.iter_mut().zip(&dg.data) {
                            *a += d;
                        }
                    }
                    slot @ None => *slot = Some(dg),
                }
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if !matches!(node.op, Op::Leaf) || !node.requires_grad {
                grads[i] = None;
            } else if grads[i].is_none() {
                grads[i] = Some(Tensor::zeros(node.value.shape.clone()));
            }
        }
        Ok(Gradients { grads })
    }

    fn input_grads(&self, i: usize, g: &Tensor) -> Vec<(NodeId, Tensor)> {
        let node = &self.nodes[i];
        let val = |id: NodeId| self.value(id);
        let rg = |id: NodeId| self.nodes[id.0].requires_grad;
        let mm = |x: &Tensor, y: &Tensor, tx, ty| ops::matmul(x, y, tx, ty).expect("shapes checked in forward");
        match &node.op {
            Op::Leaf => vec![],
            &Op::MatMul { a, b, ta, tb } => {
                let (av, bv) = (val(a), val(b));
                let mut out = Vec::with_capacity(2);
                if av.ndim() > 2 && bv.ndim() == 2 {
                    // Folded product: treat the left operand as one 2-D matrix.
                    let k = *av.shape.last().unwrap();
                    let a2 = Tensor {
                        shape: vec![av.numel() / k, k],
                        data: av.data.clone(),
                    };
                    let n_out = *g.shape.last().unwrap();
                    let g2 = Tensor {
                        shape: vec![g.numel() / n_out, n_out],
                        data: g.data.clone(),
                    };
                    if rg(a) {
                        let da = mm(&g2, bv, false, !tb);
                        out.push((a, Tensor { shape: av.shape.clone(), data: da.data }));
                    }
                    if rg(b) {
                        let db = if tb { mm(&g2, &a2, true, false) } else { mm(&a2, &g2, true, false) };
                        out.push((b, db));
                    }
                    return out;
                }
                if rg(a) {
                    let da = match (ta, tb) {
                        (false, false) => mm(g, bv, false, true),
                        (false, true) => mm(g, bv, false, false),
                        (true, false) => mm(bv, g, false, true),
                        (true, true) => mm(bv, g, true, true),
                    };
                    out.push((a, da));
                }
                if rg(b) {
                    let db = match (ta, tb) {
                        (false, false) => mm(av, g, true, false),
                        (false, true) => mm(g, av, true, false),
                        (true, false) => mm(av, g, false, false),
                        (true, true) => mm(g, av, true, true),
                    };
                    out.push((b, db));
                }
                out
            }
            &Op::Add { a, b } => vec![
                (a, ops::reduce_to(g, &val(a).shape)),
                (b, ops::reduce_to(g, &val(b).shape)),
            ],
            &Op::Mul { a, b } => {
                let ga = ops::mul(g, val(b)).expect("broadcast");
                let gb = ops::mul(g, val(a)).expect("broadcast");
                vec![
                    (a, ops::reduce_to(&ga, &val(a).shape)),
                    (b, ops::reduce_to(&gb, &val(b).shape)),
                ]
            }
            &Op::Scale { a, c } => vec![(a, ops::scale(g, c))],
            &Op::Gelu(a) => {
                let x = val(a);
                let data = x.data.iter().zip(&g.data).map(|(&x, &g)| g * ops::gelu_grad(x)).collect();
                vec![(a, Tensor { shape: x.shape.clone(), data })]
            }
            &Op::Tanh(a) => {
                let y = &node.value;
                let data = y.data.iter().zip(&g.data).map(|(&y, &g)| g * (1.0 - y * y)).collect();
                vec![(a, Tensor { shape: y.shape.clone(), data })]
            }
            &Op::Softmax { a, axis } => vec![(a, ops::softmax_backward(&node.value, g, axis))],
            Op::LayerNorm { x, gamma, beta, cache } => {
                let (dx, dg, db) = ops::layer_norm_backward(cache, val(*gamma), g);
                vec![(*x, dx), (*gamma, dg), (*beta, db)]
            }
            Op::Embedding { table, ids } => {
                if !rg(*table) {
                    return vec![];
                }
                vec![(*table, ops::embedding_backward(&val(*table).shape, ids, g))]
            }
            Op::Dropout { a, mask } => {
                let data = g.data.iter().zip(mask).map(|(g, m)| g * m).collect();
                vec![(*a, Tensor { shape: g.shape.clone(), data })]
            }
            &Op::Reshape(a) => vec![(
                a,
                Tensor {
                    shape: val(a).shape.clone(),
                    data: g.data.clone(),
                },
            )],
            Op::Permute { a, perm } => {
                let inv = ops::inverse_permutation(perm);
                vec![(*a, ops::permute(g, &inv).expect("valid permutation"))]
            }
            &Op::Sum(a) => vec![(a, Tensor::full(val(a).shape.clone(), g.item()))],
            &Op::Mean(a) => {
                let n = val(a).numel() as f32;
                vec![(a, Tensor::full(val(a).shape.clone(), g.item() / n))]
            }
            Op::BinaryLoss { logits, dlogits } => vec![(*logits, ops::scale(dlogits, g.item()))],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let w = Tensor::new([1, 1], vec![3.0]).unwrap();
        let mut g = Graph::new();
        let x = g.param(&w);
        let y = g.mul(x, x).unwrap();
        let l = g.sum(y);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn unreachable_param_gets_zero() {
        let (a, b) = (Tensor::full([2], 1.5), Tensor::full([3], 2.0));
        let mut g = Graph::new();
        let x = g.param(&a);
        let unused = g.param(&b);
        let l = g.sum(x);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(unused).unwrap().data(), &[0.0, 0.0, 0.0]);
        assert_eq!(grads.get(x).unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn second_backward_fails() {
        let a = Tensor::scalar(1.0);
        let mut g = Graph::new();
        let x = g.param(&a);
        let l = g.scale(x, 2.0);
        g.backward(l).unwrap();
        assert!(matches!(g.backward(l), Err(Error::BackwardTwice)));
    }

    #[test]
    fn backward_needs_scalar() {
        let a = Tensor::zeros([2]);
        let mut g = Graph::new();
        let x = g.param(&a);
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn shared_input_accumulates() {
        let a = Tensor::new([2, 2], vec![1., 2., 3., 4.]).unwrap();
        let mut g = Graph::new();
        let x = g.param(&a);
        let y = g.matmul(x, x, false, false).unwrap();
        let l = g.sum(y);
        let grads = g.backward(l).unwrap();
        // d/dX sum(X X) = 1 X^T + X^T 1: entry (i, j) is rowsum_j + colsum_i,
        // with row sums [3, 7] and column sums [4, 6].
        assert_eq!(grads.get(x).unwrap().data(), &[7., 11., 9., 13.]);
    }
}
