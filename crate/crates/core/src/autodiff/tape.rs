use std::cell::RefCell;
use std::rc::Rc;

use super::ops::{self, Op};
use crate::error::{DsbdError, Result};
use crate::tensor::Tensor;

struct Node {
    op: Op,
    value: Rc<Tensor>,
    requires_grad: bool,
}

/// Append-only record of a computation. Node ids are creation order, which is
/// also a valid topological order, so backward simply walks ids in reverse.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let [r, c] = self.shape();
        write!(f, "Var#{}({r}x{c})", self.id)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, op: Op, value: Tensor, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op,
            value: Rc::new(value),
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Differentiable input.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(Op::Leaf, value, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(Op::Const, value, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    fn value_of(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn record(&self, op: Op, shape: [usize; 2]) -> Var<'_> {
        let (ia, ib) = op.inputs();
        let (va, vb, rg) = {
            let nodes = self.nodes.borrow();
            let va = ia.map(|i| Rc::clone(&nodes[i].value));
            let vb = ib.map(|i| Rc::clone(&nodes[i].value));
            let rg = ia.is_some_and(|i| nodes[i].requires_grad)
                || ib.is_some_and(|i| nodes[i].requires_grad);
            (va, vb, rg)
        };
        let value = ops::forward(op, va.as_deref(), vb.as_deref(), shape);
        self.push(op, value, rg)
    }

    /// Reverse sweep from a scalar root; returns `d root / d node` for every
    /// node that depends on a leaf.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients> {
        self.check_owner(root)?;
        if root.shape() != [1, 1] {
            let [r, c] = root.shape();
            return Err(DsbdError::Contract(format!(
                "backward root must be scalar, got {r}x{c}"
            )));
        }
        self.backward_seeded(&[(root, Tensor::scalar(1.0))])
    }

    /// Reverse sweep with explicit output cotangents. Useful when part of a
    /// loss was differentiated on another tape.
    pub fn backward_seeded(&self, seeds: &[(Var<'_>, Tensor)]) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        let mut top = 0;
        for (var, g) in seeds {
            self.check_owner(*var)?;
            if var.shape() != g.shape() {
                return Err(DsbdError::dim("backward", "seed shape differs from node"));
            }
            accumulate(&mut grads[var.id], g.clone());
            top = top.max(var.id + 1);
        }
        for id in (0..top).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let (ia, ib) = node.op.inputs();
            let va = ia.map(|i| &*nodes[i].value);
            let vb = ib.map(|i| &*nodes[i].value);
            let (ga, gb) = ops::vjp(node.op, va, vb, &node.value, &g);
            if let (Some(i), Some(ga)) = (ia, ga) {
                if nodes[i].requires_grad {
                    accumulate(&mut grads[i], ga);
                }
            }
            if let (Some(i), Some(gb)) = (ib, gb) {
                if nodes[i].requires_grad {
                    accumulate(&mut grads[i], gb);
                }
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Gradient of a scalar `root` with respect to `wrt`, recorded as new tape
    /// nodes so the result can itself be differentiated. Inputs with no path
    /// from `root` get a zero constant.
    pub fn grad<'t>(&'t self, root: Var<'t>, wrt: &[Var<'t>]) -> Result<Vec<Var<'t>>> {
        self.check_owner(root)?;
        if root.shape() != [1, 1] {
            return Err(DsbdError::Contract("grad root must be scalar".into()));
        }
        let mut grads: Vec<Option<Var<'t>>> = vec![None; root.id + 1];
        grads[root.id] = Some(self.scalar(1.0));
        for id in (0..=root.id).rev() {
            let (op, requires) = {
                let n = &self.nodes.borrow()[id];
                (n.op, n.requires_grad)
            };
            if !requires {
                continue;
            }
            let Some(g) = grads[id] else { continue };
            let me = Var { tape: self, id };
            let (ia, ib) = op.inputs();
            let (ga, gb) = graph_vjp(op, me, g)?;
            for (i, gi) in [(ia, ga), (ib, gb)] {
                if let (Some(i), Some(gi)) = (i, gi) {
                    if self.nodes.borrow()[i].requires_grad {
                        grads[i] = Some(match grads[i] {
                            Some(prev) => prev.add(gi)?,
                            None => gi,
                        });
                    }
                }
            }
        }
        wrt.iter()
            .map(|w| {
                self.check_owner(*w)?;
                Ok(match grads.get(w.id).copied().flatten() {
                    Some(g) => g,
                    None => {
                        let [r, c] = w.shape();
                        self.constant(Tensor::zeros(r, c))
                    }
                })
            })
            .collect()
    }

    fn check_owner(&self, v: Var<'_>) -> Result<()> {
        if std::ptr::eq(self, v.tape) {
            Ok(())
        } else {
            Err(DsbdError::Contract("variable belongs to another tape".into()))
        }
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
}

/// Vector-Jacobian products expressed as tape operations.
fn graph_vjp<'t>(op: Op, out: Var<'t>, g: Var<'t>) -> Result<(Option<Var<'t>>, Option<Var<'t>>)> {
    use Op::*;
    let tape = out.tape;
    let v = |i: usize| Var { tape, id: i };
    Ok(match op {
        Leaf | Const => (None, None),
        MatMul(a, b) => (
            Some(g.matmul(v(b).t())?),
            Some(v(a).t().matmul(g)?),
        ),
        Transpose(_) => (Some(g.t()), None),
        Add(..) => (Some(g), Some(g)),
        Sub(..) => (Some(g), Some(g.scale(-1.0))),
        Mul(a, b) => (Some(g.mul(v(b))?), Some(g.mul(v(a))?)),
        Expand(a) => (Some(g.reduce_to(v(a).shape())), None),
        Scale(_, c) => (Some(g.scale(c)), None),
        AddConst(..) => (Some(g), None),
        Sigmoid(_) => {
            let slope = out.mul(out.scale(-1.0).add_scalar(1.0))?;
            (Some(g.mul(slope)?), None)
        }
        Relu(a) => {
            let mask = tape
                .value_of(a)
                .map(|x| if x > 0.0 { 1.0 } else { 0.0 });
            (Some(g.mul(tape.constant(mask))?), None)
        }
        Log(a) => (Some(g.mul(v(a).powf(-1.0))?), None),
        Exp(_) => (Some(g.mul(out)?), None),
        Square(a) => (Some(g.mul(v(a).scale(2.0))?), None),
        Pow(a, p) => (Some(g.mul(v(a).powf(p - 1.0).scale(p))?), None),
        Sum(a) | RowSums(a) | ColSums(a) => {
            let [r, c] = v(a).shape();
            (Some(g.expand(r, c)?), None)
        }
        TracePow3(a) => {
            let [r, c] = v(a).shape();
            let a2t = v(a).matmul(v(a))?.t().scale(3.0);
            (Some(a2t.mul(g.expand(r, c)?)?), None)
        }
    })
}

fn same_shape(op: &'static str, a: Var<'_>, b: Var<'_>) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(DsbdError::dim(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ))
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> [usize; 2] {
        self.tape.nodes.borrow()[self.id].value.shape()
    }

    /// Scalar value of a `1x1` node.
    pub fn item(&self) -> f64 {
        self.value().item()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    fn unary(self, op: Op, shape: [usize; 2]) -> Var<'t> {
        self.tape.record(op, shape)
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let [n, k] = self.shape();
        let [k2, m] = other.shape();
        if k != k2 {
            return Err(DsbdError::dim("matmul", format!("{n}x{k} times {k2}x{m}")));
        }
        Ok(self.tape.record(Op::MatMul(self.id, other.id), [n, m]))
    }

    pub fn t(self) -> Var<'t> {
        let [r, c] = self.shape();
        self.unary(Op::Transpose(self.id), [c, r])
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        same_shape("add", self, other)?;
        Ok(self.tape.record(Op::Add(self.id, other.id), self.shape()))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        same_shape("sub", self, other)?;
        Ok(self.tape.record(Op::Sub(self.id, other.id), self.shape()))
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        same_shape("mul", self, other)?;
        Ok(self.tape.record(Op::Mul(self.id, other.id), self.shape()))
    }

    /// Broadcast a scalar, row vector or column vector to `rows x cols`.
    pub fn expand(self, rows: usize, cols: usize) -> Result<Var<'t>> {
        match self.shape() {
            s if s == [rows, cols] => Ok(self),
            [1, 1] => Ok(self.unary(Op::Expand(self.id), [rows, cols])),
            [1, c] if c == cols => Ok(self.unary(Op::Expand(self.id), [rows, cols])),
            [r, 1] if r == rows => Ok(self.unary(Op::Expand(self.id), [rows, cols])),
            [r, c] => Err(DsbdError::dim(
                "expand",
                format!("cannot broadcast {r}x{c} to {rows}x{cols}"),
            )),
        }
    }

    fn reduce_to(self, shape: [usize; 2]) -> Var<'t> {
        match shape {
            s if s == self.shape() => self,
            [1, 1] => self.sum(),
            [1, _] => self.col_sums(),
            _ => self.row_sums(),
        }
    }

    /// `self + row` with `row` broadcast over rows (bias add).
    pub fn add_row(self, row: Var<'t>) -> Result<Var<'t>> {
        let [r, c] = self.shape();
        self.add(row.expand(r, c)?)
    }

    /// Multiply each row `i` by `col[i]`.
    pub fn scale_rows(self, col: Var<'t>) -> Result<Var<'t>> {
        let [r, c] = self.shape();
        if col.shape() != [r, 1] {
            return Err(DsbdError::dim("scale_rows", "expected an n x 1 column"));
        }
        self.mul(col.expand(r, c)?)
    }

    /// Multiply each column `j` by `col[j]` (given as an `m x 1` column).
    pub fn scale_cols(self, col: Var<'t>) -> Result<Var<'t>> {
        let [r, c] = self.shape();
        if col.shape() != [c, 1] {
            return Err(DsbdError::dim("scale_cols", "expected an m x 1 column"));
        }
        self.mul(col.t().expand(r, c)?)
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary(Op::Scale(self.id, c), self.shape())
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.unary(Op::AddConst(self.id, c), self.shape())
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(Op::Sigmoid(self.id), self.shape())
    }

    pub fn relu(self) -> Var<'t> {
        self.unary(Op::Relu(self.id), self.shape())
    }

    pub fn ln(self) -> Result<Var<'t>> {
        if let Some(bad) = self.value().data().iter().find(|&&x| x <= 0.0) {
            return Err(DsbdError::Domain {
                op: "log",
                detail: format!("non-positive entry {bad}"),
            });
        }
        Ok(self.unary(Op::Log(self.id), self.shape()))
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(Op::Exp(self.id), self.shape())
    }

    pub fn square(self) -> Var<'t> {
        self.unary(Op::Square(self.id), self.shape())
    }

    /// Elementwise power on the positive part; non-positive entries map to 0.
    pub fn powf(self, p: f64) -> Var<'t> {
        self.unary(Op::Pow(self.id, p), self.shape())
    }

    pub fn sqrt(self) -> Var<'t> {
        self.powf(0.5)
    }

    pub fn sum(self) -> Var<'t> {
        self.unary(Op::Sum(self.id), [1, 1])
    }

    pub fn mean(self) -> Var<'t> {
        let n = self.value().len().max(1) as f64;
        self.sum().scale(1.0 / n)
    }

    pub fn row_sums(self) -> Var<'t> {
        let [r, _] = self.shape();
        self.unary(Op::RowSums(self.id), [r, 1])
    }

    pub fn col_sums(self) -> Var<'t> {
        let [_, c] = self.shape();
        self.unary(Op::ColSums(self.id), [1, c])
    }

    /// `Tr(A^3)` for square `A`.
    pub fn trace_pow3(self) -> Result<Var<'t>> {
        let [r, c] = self.shape();
        if r != c {
            return Err(DsbdError::dim("trace_pow3", format!("{r}x{c} is not square")));
        }
        Ok(self.unary(Op::TracePow3(self.id), [1, 1]))
    }
}

/// Result of a numeric backward sweep.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(Option::as_ref)
    }

    /// Gradient for `v`, zero-filled when `v` is unreachable from the root.
    pub fn wrt(&self, v: Var<'_>) -> Tensor {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let [r, c] = v.shape();
                Tensor::zeros(r, c)
            }
        }
    }
}
