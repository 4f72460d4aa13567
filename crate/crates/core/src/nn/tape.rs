//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Nodes are appended in evaluation order, so a node's inputs always have
//! smaller indices and the reverse sweep is a single backwards pass.

use std::cell::{Ref, RefCell};

use super::{NnError, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Below this log-variance the standard deviation is taken as exactly zero.
pub const LOGVAR_FLOOR: f64 = -40.0;

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    StdDev(Var),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    LogSoftmax(Var),
    Pick(Var, Vec<usize>),
    SumCols(Var),
    Sum(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::MulCol(..) => "mul_col",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Sigmoid(..) => "sigmoid",
            Op::Tanh(..) => "tanh",
            Op::Relu(..) => "relu",
            Op::Exp(..) => "exp",
            Op::StdDev(..) => "std_dev",
            Op::ConcatCols(..) => "concat_cols",
            Op::GatherRows(..) => "gather_rows",
            Op::LogSoftmax(..) => "log_softmax",
            Op::Pick(..) => "pick",
            Op::SumCols(..) => "sum_cols",
            Op::Sum(..) => "sum",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Constant | Op::Param(_) => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::AddRow(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MulCol(a, b) => {
                vec![*a, *b]
            }
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Relu(a)
            | Op::Exp(a)
            | Op::StdDev(a)
            | Op::GatherRows(a, _)
            | Op::LogSoftmax(a)
            | Op::Pick(a, _)
            | Op::SumCols(a)
            | Op::Sum(a) => vec![*a],
            Op::ConcatCols(v) => v.clone(),
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Records operations for one forward pass.
///
/// Every op checks its output for NaN/Inf; the first offending op is kept and
/// reported by [`Tape::check`]. Shape errors in individual ops are
/// programming errors and panic; the public layer functions validate shapes
/// up front and return [`NnError::ShapeMismatch`] instead.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    error: RefCell<Option<NnError>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op) -> Var {
        if !value.all_finite() {
            let mut err = self.error.borrow_mut();
            if err.is_none() {
                *err = Some(NnError::NonFinite { op: op.name() });
            }
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var(nodes.len() - 1)
    }

    /// First non-finite intermediate seen so far, if any.
    pub fn check(&self) -> Result<(), NnError> {
        match &*self.error.borrow() {
            Some(e) => Err(e.clone()),
            None => Ok(()),
        }
    }

    pub fn value(&self, v: Var) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = self.nodes.borrow();
        (n[v.0].value.rows(), n[v.0].value.cols())
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).item()
    }

    pub fn constant(&self, t: Tensor) -> Var {
        self.push(t, Op::Constant)
    }

    /// A learnable leaf whose gradient is accumulated into `slot`.
    pub fn param(&self, slot: usize, t: &Tensor) -> Var {
        self.push(t.clone(), Op::Param(slot))
    }

    fn unary(&self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let out = self.value(a).map(f);
        self.push(out, op)
    }

    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(&self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip(&self.value(b), |x, y| x + y);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip(&self.value(b), |x, y| x - y);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip(&self.value(b), |x, y| x * y);
        self.push(out, Op::Mul(a, b))
    }

    /// `a + row` with `row: [1, c]` broadcast over the rows of `a`.
    pub fn add_row(&self, a: Var, row: Var) -> Var {
        let out = {
            let (av, rv) = (self.value(a), self.value(row));
            assert_eq!(rv.rows(), 1, "add_row expects a row vector");
            assert_eq!(av.cols(), rv.cols(), "add_row width");
            let c = av.cols();
            let mut out = av.clone();
            for (i, v) in out.data_mut().iter_mut().enumerate() {
                *v += rv.data()[i % c];
            }
            out
        };
        self.push(out, Op::AddRow(a, row))
    }

    /// `a ⊙ col` with `col: [r, 1]` broadcast over the columns of `a`.
    pub fn mul_col(&self, a: Var, col: Var) -> Var {
        let out = {
            let (av, cv) = (self.value(a), self.value(col));
            assert_eq!(cv.cols(), 1, "mul_col expects a column vector");
            assert_eq!(av.rows(), cv.rows(), "mul_col height");
            let c = av.cols();
            let mut out = av.clone();
            for (i, v) in out.data_mut().iter_mut().enumerate() {
                *v *= cv.data()[i / c];
            }
            out
        };
        self.push(out, Op::MulCol(a, col))
    }

    pub fn scale(&self, a: Var, s: f64) -> Var {
        self.unary(a, Op::Scale(a, s), |x| x * s)
    }

    pub fn add_scalar(&self, a: Var, s: f64) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + s)
    }

    /// `1 - a`.
    pub fn one_minus(&self, a: Var) -> Var {
        let neg = self.scale(a, -1.0);
        self.add_scalar(neg, 1.0)
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn relu(&self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn exp(&self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    /// `exp(logvar / 2)`, exactly zero below [`LOGVAR_FLOOR`].
    pub fn std_dev(&self, logvar: Var) -> Var {
        self.unary(logvar, Op::StdDev(logvar), std_from_logvar)
    }

    pub fn concat_cols(&self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let out = {
            let vals: Vec<Ref<'_, Tensor>> = parts.iter().map(|&p| self.value(p)).collect();
            let rows = vals[0].rows();
            assert!(vals.iter().all(|v| v.rows() == rows), "concat_cols row mismatch");
            let cols: usize = vals.iter().map(|v| v.cols()).sum();
            let mut data = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for v in &vals {
                    data.extend_from_slice(v.row_slice(r));
                }
            }
            Tensor::matrix(rows, cols, data)
        };
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    /// Row `ids[i]` of `table` becomes row `i` of the output.
    pub fn gather_rows(&self, table: Var, ids: &[usize]) -> Var {
        let out = {
            let t = self.value(table);
            let c = t.cols();
            let mut data = Vec::with_capacity(ids.len() * c);
            for &id in ids {
                data.extend_from_slice(t.row_slice(id));
            }
            Tensor::matrix(ids.len(), c, data)
        };
        self.push(out, Op::GatherRows(table, ids.to_vec()))
    }

    /// Row-wise log-softmax with max subtraction.
    pub fn log_softmax(&self, a: Var) -> Var {
        let out = log_softmax_rows(&self.value(a));
        self.push(out, Op::LogSoftmax(a))
    }

    /// Element `idx[r]` of each row `r`, as an `[r, 1]` column.
    pub fn pick(&self, a: Var, idx: &[usize]) -> Var {
        let out = {
            let t = self.value(a);
            assert_eq!(t.rows(), idx.len(), "pick needs one index per row");
            Tensor::col(idx.iter().enumerate().map(|(r, &c)| t.get(r, c)).collect())
        };
        self.push(out, Op::Pick(a, idx.to_vec()))
    }

    /// Sum across columns: `[r, c] -> [r, 1]`.
    pub fn sum_cols(&self, a: Var) -> Var {
        let out = {
            let t = self.value(a);
            Tensor::col((0..t.rows()).map(|r| t.row_slice(r).iter().sum()).collect())
        };
        self.push(out, Op::SumCols(a))
    }

    /// Sum of all entries as a `[1, 1]` scalar.
    pub fn sum(&self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Reverse sweep from the scalar `loss`. Gradients of `Param` leaves are
    /// added into `grads[slot]`; slots never touched keep whatever they held.
    pub fn backward(&self, loss: Var, grads: &mut [Tensor]) -> Result<(), NnError> {
        self.check()?;
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[loss.0].value.len(), 1, "backward from a non-scalar");
        let mut adj: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &nodes[i];
            for inp in node.op.inputs() {
                if inp.0 >= i {
                    return Err(NnError::GraphCycle);
                }
            }
            let val = |v: Var| &nodes[v.0].value;
            let mut acc = |v: Var, t: Tensor| match &mut adj[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot => *slot = Some(t),
            };
            match &node.op {
                Op::Constant => {}
                Op::Param(slot) => {
                    if let Some(target) = grads.get_mut(*slot) {
                        target.add_assign(&g);
                    }
                }
                Op::MatMul(a, b) => {
                    acc(*a, g.matmul_t(val(*b)));
                    acc(*b, val(*a).t_matmul(&g));
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Sub(a, b) => {
                    acc(*b, g.map(|x| -x));
                    acc(*a, g);
                }
                Op::Mul(a, b) => {
                    acc(*a, g.zip(val(*b), |x, y| x * y));
                    acc(*b, g.zip(val(*a), |x, y| x * y));
                }
                Op::AddRow(a, row) => {
                    let c = g.cols();
                    let mut rg = vec![0.0; c];
                    for (k, v) in g.data().iter().enumerate() {
                        rg[k % c] += v;
                    }
                    acc(*row, Tensor::row(rg));
                    acc(*a, g);
                }
                Op::MulCol(a, col) => {
                    let (av, cv) = (val(*a), val(*col));
                    let c = g.cols();
                    let mut cg = vec![0.0; g.rows()];
                    let mut ag = g.clone();
                    for (k, v) in ag.data_mut().iter_mut().enumerate() {
                        cg[k / c] += *v * av.data()[k];
                        *v *= cv.data()[k / c];
                    }
                    acc(*col, Tensor::col(cg));
                    acc(*a, ag);
                }
                Op::Scale(a, s) => acc(*a, g.map(|x| x * s)),
                Op::AddScalar(a) => acc(*a, g),
                Op::Sigmoid(a) => acc(*a, g.zip(&node.value, |x, y| x * y * (1.0 - y))),
                Op::Tanh(a) => acc(*a, g.zip(&node.value, |x, y| x * (1.0 - y * y))),
                Op::Relu(a) => acc(*a, g.zip(val(*a), |x, z| if z > 0.0 { x } else { 0.0 })),
                Op::Exp(a) => acc(*a, g.zip(&node.value, |x, y| x * y)),
                Op::StdDev(a) => acc(*a, g.zip(&node.value, |x, y| 0.5 * x * y)),
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let pc = val(*p).cols();
                        let rows = g.rows();
                        let mut data = Vec::with_capacity(rows * pc);
                        for r in 0..rows {
                            data.extend_from_slice(&g.row_slice(r)[offset..offset + pc]);
                        }
                        offset += pc;
                        acc(*p, Tensor::matrix(rows, pc, data));
                    }
                }
                Op::GatherRows(table, ids) => {
                    let mut tg = val(*table).zeros_like();
                    let c = tg.cols();
                    for (r, &id) in ids.iter().enumerate() {
                        let dst = &mut tg.data_mut()[id * c..(id + 1) * c];
                        for (d, s) in dst.iter_mut().zip(g.row_slice(r)) {
                            *d += s;
                        }
                    }
                    acc(*table, tg);
                }
                Op::LogSoftmax(a) => {
                    let y = &node.value;
                    let c = y.cols();
                    let mut out = g.clone();
                    for r in 0..y.rows() {
                        let gs: f64 = g.row_slice(r).iter().sum();
                        for k in 0..c {
                            out.data_mut()[r * c + k] -= y.get(r, k).exp() * gs;
                        }
                    }
                    acc(*a, out);
                }
                Op::Pick(a, idx) => {
                    let mut out = val(*a).zeros_like();
                    for (r, &c) in idx.iter().enumerate() {
                        out.set(r, c, g.data()[r]);
                    }
                    acc(*a, out);
                }
                Op::SumCols(a) => {
                    let av = val(*a);
                    let c = av.cols();
                    let data = (0..av.len()).map(|k| g.data()[k / c]).collect();
                    acc(*a, Tensor::matrix(av.rows(), c, data));
                }
                Op::Sum(a) => {
                    let gv = g.item();
                    acc(*a, val(*a).map(|_| gv));
                }
            }
        }
        for (slot, g) in grads.iter().enumerate() {
            if !g.all_finite() {
                return Err(NnError::NonFiniteGradient { param: slot });
            }
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn std_from_logvar(lv: f64) -> f64 {
    if lv < LOGVAR_FLOOR {
        0.0
    } else {
        (0.5 * lv).exp()
    }
}

pub(crate) fn log_softmax_rows(t: &Tensor) -> Tensor {
    let c = t.cols();
    let mut out = t.clone();
    for r in 0..t.rows() {
        let row = &mut out.data_mut()[r * c..(r + 1) * c];
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}
