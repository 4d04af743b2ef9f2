use crate::tensor::Tensor;

/// Operation recorded for one tape node. Inputs are node ids on the same tape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Leaf,
    Const,
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// Broadcast a `1x1`, `1xm` or `nx1` tensor to `rows x cols`.
    Expand(usize),
    Scale(usize, f64),
    AddConst(usize, f64),
    Sigmoid(usize),
    Relu(usize),
    Log(usize),
    Exp(usize),
    Square(usize),
    /// `x^p` for `x > 0`, zero elsewhere (and zero derivative there).
    Pow(usize, f64),
    Sum(usize),
    RowSums(usize),
    ColSums(usize),
    TracePow3(usize),
}

impl Op {
    pub fn inputs(&self) -> (Option<usize>, Option<usize>) {
        use Op::*;
        match *self {
            Leaf | Const => (None, None),
            MatMul(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) => (Some(a), Some(b)),
            Transpose(a) | Expand(a) | Scale(a, _) | AddConst(a, _) | Sigmoid(a) | Relu(a)
            | Log(a) | Exp(a) | Square(a) | Pow(a, _) | Sum(a) | RowSums(a) | ColSums(a)
            | TracePow3(a) => (Some(a), None),
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn safe_pow(x: f64, p: f64) -> f64 {
    if x > 0.0 {
        x.powf(p)
    } else {
        0.0
    }
}

pub(crate) fn expand(t: &Tensor, rows: usize, cols: usize) -> Tensor {
    match t.shape() {
        [1, 1] => Tensor::full(rows, cols, t.item()),
        [1, c] if c == cols => Tensor::from_fn(rows, cols, |_, j| t.get(0, j)),
        [r, 1] if r == rows => Tensor::from_fn(rows, cols, |i, _| t.get(i, 0)),
        s if s == [rows, cols] => t.clone(),
        s => unreachable!("expand of {s:?} to {rows}x{cols} passed validation"),
    }
}

/// Sum `g` down to `shape`, the adjoint of [`expand`].
pub(crate) fn reduce_to(g: &Tensor, shape: [usize; 2]) -> Tensor {
    match shape {
        [1, 1] => Tensor::scalar(g.sum()),
        s if s == g.shape() => g.clone(),
        [1, _] => g.col_sums(),
        [_, 1] => g.row_sums(),
        s => unreachable!("reduce of {:?} to {s:?}", g.shape()),
    }
}

pub(crate) fn trace_pow3(a: &Tensor) -> f64 {
    // Tr(A^3) = sum_ij (A^2)_ij * A_ji
    let a2 = a.matmul(a);
    let n = a.rows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += a2.get(i, j) * a.get(j, i);
        }
    }
    acc
}

/// Forward evaluation given input values.
pub(crate) fn forward(op: Op, a: Option<&Tensor>, b: Option<&Tensor>, out_shape: [usize; 2]) -> Tensor {
    use Op::*;
    let a_ = || a.expect("unary input");
    let b_ = || b.expect("binary input");
    match op {
        Leaf | Const => unreachable!("leaves carry their own value"),
        MatMul(..) => a_().matmul(b_()),
        Transpose(_) => a_().transpose(),
        Add(..) => a_().zip_map(b_(), |x, y| x + y),
        Sub(..) => a_().zip_map(b_(), |x, y| x - y),
        Mul(..) => a_().zip_map(b_(), |x, y| x * y),
        Expand(_) => expand(a_(), out_shape[0], out_shape[1]),
        Scale(_, c) => a_().scale(c),
        AddConst(_, c) => a_().map(|x| x + c),
        Sigmoid(_) => a_().map(sigmoid),
        Relu(_) => a_().map(|x| x.max(0.0)),
        Log(_) => a_().map(f64::ln),
        Exp(_) => a_().map(f64::exp),
        Square(_) => a_().map(|x| x * x),
        Pow(_, p) => a_().map(|x| safe_pow(x, p)),
        Sum(_) => Tensor::scalar(a_().sum()),
        RowSums(_) => a_().row_sums(),
        ColSums(_) => a_().col_sums(),
        TracePow3(_) => Tensor::scalar(trace_pow3(a_())),
    }
}

/// Numeric vector-Jacobian products: cotangent `g` of the output mapped onto
/// each input. `out` is the node's own forward value.
pub(crate) fn vjp(
    op: Op,
    a: Option<&Tensor>,
    b: Option<&Tensor>,
    out: &Tensor,
    g: &Tensor,
) -> (Option<Tensor>, Option<Tensor>) {
    use Op::*;
    let a_ = || a.expect("unary input");
    let b_ = || b.expect("binary input");
    match op {
        Leaf | Const => (None, None),
        MatMul(..) => (
            Some(g.matmul(&b_().transpose())),
            Some(a_().transpose().matmul(g)),
        ),
        Transpose(_) => (Some(g.transpose()), None),
        Add(..) => (Some(g.clone()), Some(g.clone())),
        Sub(..) => (Some(g.clone()), Some(g.scale(-1.0))),
        Mul(..) => (
            Some(g.zip_map(b_(), |x, y| x * y)),
            Some(g.zip_map(a_(), |x, y| x * y)),
        ),
        Expand(_) => (Some(reduce_to(g, a_().shape())), None),
        Scale(_, c) => (Some(g.scale(c)), None),
        AddConst(..) => (Some(g.clone()), None),
        Sigmoid(_) => (Some(g.zip_map(out, |gv, y| gv * y * (1.0 - y))), None),
        Relu(_) => (
            Some(g.zip_map(a_(), |gv, x| if x > 0.0 { gv } else { 0.0 })),
            None,
        ),
        Log(_) => (Some(g.zip_map(a_(), |gv, x| gv / x)), None),
        Exp(_) => (Some(g.zip_map(out, |gv, y| gv * y)), None),
        Square(_) => (Some(g.zip_map(a_(), |gv, x| 2.0 * gv * x)), None),
        Pow(_, p) => (
            Some(g.zip_map(a_(), |gv, x| gv * p * safe_pow(x, p - 1.0))),
            None,
        ),
        Sum(_) => {
            let [r, c] = a_().shape();
            (Some(Tensor::full(r, c, g.item())), None)
        }
        RowSums(_) | ColSums(_) => {
            let [r, c] = a_().shape();
            (Some(expand(g, r, c)), None)
        }
        TracePow3(_) => {
            let a = a_();
            (Some(a.matmul(a).transpose().scale(3.0 * g.item())), None)
        }
    }
}
