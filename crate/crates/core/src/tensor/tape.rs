//! Reverse-mode differentiation over a linear tape of matrix operations.
//!
//! Nodes are appended in evaluation order, so the tape is already a
//! topological order; `backward` walks it once in reverse. Constants never
//! receive gradients and subgraphs that depend only on constants are skipped.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::special::{digamma, ln_gamma, trigamma};
use crate::tensor::{CsrMatrix, Matrix};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Sparse propagation operator together with its transpose, used for the
/// backward product.
#[derive(Clone, Debug)]
pub struct Propagator {
    forward: Arc<CsrMatrix>,
    transposed: Arc<CsrMatrix>,
}

impl Propagator {
    pub fn new(matrix: CsrMatrix) -> Self {
        let transposed = if matrix.is_symmetric() {
            None
        } else {
            Some(matrix.transpose())
        };
        let forward = Arc::new(matrix);
        let transposed = transposed.map(Arc::new).unwrap_or_else(|| Arc::clone(&forward));
        Propagator { forward, transposed }
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.forward
    }
}

#[derive(Debug)]
enum Op {
    Constant,
    Param,
    MatMul(Var, Var),
    Propagate(Propagator, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Matrix),
    Shift(Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Log(Var),
    Exp(Var),
    Recip(Var),
    Log1mExp(Var),
    LnGamma(Var),
    Digamma(Var),
    Clamp(Var, f64, f64),
    MaskCols(Var, Var),
    Transpose(Var),
    RepeatCols(Var),
    SelectRow(Var, usize),
    CumSum(Var),
    Sum(Var),
    SoftmaxNll {
        logits: Var,
        rows: Vec<usize>,
        labels: Vec<usize>,
        probs: Matrix,
    },
    /// Scalar output with precomputed partial derivatives per input.
    ScalarFn { inputs: Vec<Var>, partials: Vec<Matrix> },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, or `None` if the loss does
    /// not depend on it.
    pub fn get(&self, var: Var) -> Option<&Matrix> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Matrix> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Clears all recorded nodes so the tape can be reused.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.consumed = false;
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Param, true)
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn unary(&mut self, x: Var, value: Matrix, op: Op) -> Var {
        let ng = self.needs(x);
        self.push(value, op, ng)
    }

    fn binary(&mut self, a: Var, b: Var, value: Matrix, op: Op) -> Var {
        let ng = self.needs(a) || self.needs(b);
        self.push(value, op, ng)
    }

    fn finite(value: Matrix, op: &'static str) -> Result<Matrix> {
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::domain(op, "result is not finite"))
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.binary(a, b, value, Op::MatMul(a, b)))
    }

    /// `P * x` for a constant sparse operator `P`.
    pub fn propagate(&mut self, p: &Propagator, x: Var) -> Result<Var> {
        let value = p.forward.spmm(self.value(x))?;
        Ok(self.unary(x, value, Op::Propagate(p.clone(), x)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.value(a).same_shape(self.value(b), "add")?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.binary(a, b, value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.value(a).same_shape(self.value(b), "sub")?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.binary(a, b, value, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.value(a).same_shape(self.value(b), "mul")?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.binary(a, b, value, Op::Mul(a, b)))
    }

    /// Elementwise product with a constant matrix (dropout masks).
    pub fn mul_const(&mut self, a: Var, c: Matrix) -> Result<Var> {
        self.value(a).same_shape(&c, "mul_const")?;
        let value = self.value(a).zip_map(&c, |x, y| x * y);
        Ok(self.unary(a, value, Op::MulConst(a, c)))
    }

    /// Elementwise sum with a constant matrix.
    pub fn add_const(&mut self, a: Var, c: &Matrix) -> Result<Var> {
        self.value(a).same_shape(c, "add_const")?;
        let value = self.value(a).zip_map(c, |x, y| x + y);
        Ok(self.unary(a, value, Op::Shift(a)))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x + s);
        self.unary(a, value, Op::Shift(a))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        self.unary(a, value, Op::Scale(a, s))
    }

    /// `1 - a`.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let neg = self.scale(a, -1.0);
        self.add_scalar(neg, 1.0)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.unary(a, value, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.unary(a, value, Op::Sigmoid(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).as_slice().iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::domain("log", format!("argument {bad} is not positive")));
        }
        let value = self.value(a).map(f64::ln);
        Ok(self.unary(a, value, Op::Log(a)))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let value = Self::finite(self.value(a).map(f64::exp), "exp")?;
        Ok(self.unary(a, value, Op::Exp(a)))
    }

    pub fn recip(&mut self, a: Var) -> Result<Var> {
        let value = Self::finite(self.value(a).map(|x| 1.0 / x), "recip")?;
        Ok(self.unary(a, value, Op::Recip(a)))
    }

    /// `ln(1 - exp(a))` for `a < 0`.
    pub fn log1m_exp(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).as_slice().iter().find(|&&x| !(x < 0.0)) {
            return Err(Error::domain("log1m_exp", format!("argument {bad} is not negative")));
        }
        let value = Self::finite(self.value(a).map(|x| (-x.exp_m1()).ln()), "log1m_exp")?;
        Ok(self.unary(a, value, Op::Log1mExp(a)))
    }

    pub fn ln_gamma(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).as_slice().iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::domain("ln_gamma", format!("argument {bad} is not positive")));
        }
        let value = self.value(a).map(ln_gamma);
        Ok(self.unary(a, value, Op::LnGamma(a)))
    }

    pub fn digamma(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).as_slice().iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::domain("digamma", format!("argument {bad} is not positive")));
        }
        let value = self.value(a).map(digamma);
        Ok(self.unary(a, value, Op::Digamma(a)))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(a).map(|x| x.clamp(lo, hi));
        self.unary(a, value, Op::Clamp(a, lo, hi))
    }

    /// Multiplies every row of `h` (N×O) elementwise by the row vector `z` (1×O).
    pub fn mask_cols(&mut self, h: Var, z: Var) -> Result<Var> {
        let (hv, zv) = (self.value(h), self.value(z));
        if zv.rows() != 1 || zv.cols() != hv.cols() {
            return Err(Error::Dimension {
                op: "mask_cols",
                left: hv.shape(),
                right: zv.shape(),
            });
        }
        let mut value = hv.clone();
        let zs = zv.as_slice();
        for r in 0..value.rows() {
            for (x, m) in value.row_mut(r).iter_mut().zip(zs) {
                *x *= m;
            }
        }
        Ok(self.binary(h, z, value, Op::MaskCols(h, z)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.unary(a, value, Op::Transpose(a))
    }

    /// Repeats a column vector (R×1) into R×`n`.
    pub fn repeat_cols(&mut self, a: Var, n: usize) -> Result<Var> {
        let av = self.value(a);
        if av.cols() != 1 {
            return Err(Error::Dimension {
                op: "repeat_cols",
                left: av.shape(),
                right: (av.rows(), 1),
            });
        }
        let mut value = Matrix::zeros(av.rows(), n);
        for r in 0..av.rows() {
            let x = av[(r, 0)];
            value.row_mut(r).fill(x);
        }
        Ok(self.unary(a, value, Op::RepeatCols(a)))
    }

    pub fn select_row(&mut self, a: Var, r: usize) -> Result<Var> {
        let av = self.value(a);
        if r >= av.rows() {
            return Err(Error::Precondition(format!("row {r} out of range for {} rows", av.rows())));
        }
        let value = Matrix::row_vector(av.row(r));
        Ok(self.unary(a, value, Op::SelectRow(a, r)))
    }

    /// Running sum along each row.
    pub fn cumsum(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for r in 0..value.rows() {
            let mut acc = 0.0;
            for x in value.row_mut(r) {
                acc += *x;
                *x = acc;
            }
        }
        self.unary(a, value, Op::CumSum(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        self.unary(a, value, Op::Sum(a))
    }

    /// Mean negative log-softmax likelihood over the rows listed in `rows`.
    pub fn softmax_nll(&mut self, logits: Var, rows: &[usize], labels: &[usize]) -> Result<Var> {
        if rows.is_empty() {
            return Err(Error::Precondition("softmax_nll over an empty node mask".into()));
        }
        let lv = self.value(logits);
        let classes = lv.cols();
        let mut probs = Matrix::zeros(rows.len(), classes);
        let mut total = 0.0;
        for (i, &r) in rows.iter().enumerate() {
            if r >= lv.rows() {
                return Err(Error::Precondition(format!("masked node {r} out of range")));
            }
            let y = labels[i];
            if y >= classes {
                return Err(Error::Precondition(format!(
                    "label {y} of node {r} outside [0, {classes})"
                )));
            }
            let row = lv.row(r);
            let lse = log_sum_exp(row);
            total += lse - row[y];
            for (p, &x) in probs.row_mut(i).iter_mut().zip(row) {
                *p = (x - lse).exp();
            }
        }
        let value = Self::finite(Matrix::scalar(total / rows.len() as f64), "softmax_nll")?;
        let op = Op::SoftmaxNll {
            logits,
            rows: rows.to_vec(),
            labels: labels.to_vec(),
            probs,
        };
        Ok(self.unary(logits, value, op))
    }

    /// Records a scalar function of `inputs` whose value and partials were
    /// computed outside the tape.
    pub fn scalar_fn(&mut self, inputs: &[Var], value: f64, partials: Vec<Matrix>) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::domain("scalar_fn", "value is not finite"));
        }
        for (v, p) in inputs.iter().zip(&partials) {
            self.value(*v).same_shape(p, "scalar_fn")?;
        }
        let ng = inputs.iter().any(|&v| self.needs(v));
        Ok(self.push(
            Matrix::scalar(value),
            Op::ScalarFn {
                inputs: inputs.to_vec(),
                partials,
            },
            ng,
        ))
    }

    /// Reverse pass from the scalar `loss`. A tape supports one backward pass;
    /// call [`Tape::reset`] before recording again.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::State("backward called twice on the same tape without reset".into()));
        }
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Precondition(format!(
                "backward needs a scalar loss, got {:?}",
                self.value(loss).shape()
            )));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        // Only leaves keep meaningful gradients for callers; intermediate ones
        // are retained as well since they are cheap to keep.
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, idx: usize, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        let node = &self.nodes[idx];
        let out = &node.value;
        let mut acc = |v: Var, delta: Matrix| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Constant | Op::Param => {}
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    acc(*a, g.matmul_t(self.value(*b))?);
                }
                if self.needs(*b) {
                    acc(*b, self.value(*a).t_matmul(g)?);
                }
            }
            Op::Propagate(p, x) => acc(*x, p.transposed.spmm(g)?),
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    acc(*a, g.zip_map(self.value(*b), |x, y| x * y));
                }
                if self.needs(*b) {
                    acc(*b, g.zip_map(self.value(*a), |x, y| x * y));
                }
            }
            Op::MulConst(a, c) => acc(*a, g.zip_map(c, |x, y| x * y)),
            Op::Shift(a) => acc(*a, g.clone()),
            Op::Scale(a, s) => acc(*a, g.scale(*s)),
            Op::Relu(a) => acc(*a, g.zip_map(self.value(*a), |x, y| if y > 0.0 { x } else { 0.0 })),
            Op::Sigmoid(a) => acc(*a, g.zip_map(out, |x, s| x * s * (1.0 - s))),
            Op::Log(a) => acc(*a, g.zip_map(self.value(*a), |x, y| x / y)),
            Op::Exp(a) => acc(*a, g.zip_map(out, |x, e| x * e)),
            Op::Recip(a) => acc(*a, g.zip_map(out, |x, r| -x * r * r)),
            Op::Log1mExp(a) => acc(*a, g.zip_map(self.value(*a), |x, y| x / (-y).exp_m1() * -1.0)),
            Op::LnGamma(a) => acc(*a, g.zip_map(self.value(*a), |x, y| x * digamma(y))),
            Op::Digamma(a) => acc(*a, g.zip_map(self.value(*a), |x, y| x * trigamma(y))),
            Op::Clamp(a, lo, hi) => acc(
                *a,
                g.zip_map(self.value(*a), |x, y| if y >= *lo && y <= *hi { x } else { 0.0 }),
            ),
            Op::MaskCols(h, z) => {
                let zv = self.value(*z).as_slice();
                if self.needs(*h) {
                    let mut dh = g.clone();
                    for r in 0..dh.rows() {
                        for (x, m) in dh.row_mut(r).iter_mut().zip(zv) {
                            *x *= m;
                        }
                    }
                    acc(*h, dh);
                }
                if self.needs(*z) {
                    let hv = self.value(*h);
                    let mut dz = Matrix::zeros(1, zv.len());
                    for r in 0..g.rows() {
                        for (c, (gx, hx)) in g.row(r).iter().zip(hv.row(r)).enumerate() {
                            dz[(0, c)] += gx * hx;
                        }
                    }
                    acc(*z, dz);
                }
            }
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::RepeatCols(a) => {
                let mut d = Matrix::zeros(g.rows(), 1);
                for r in 0..g.rows() {
                    d[(r, 0)] = g.row(r).iter().sum();
                }
                acc(*a, d);
            }
            Op::SelectRow(a, r) => {
                let (rows, cols) = self.shape(*a);
                let mut d = Matrix::zeros(rows, cols);
                d.row_mut(*r).copy_from_slice(g.as_slice());
                acc(*a, d);
            }
            Op::CumSum(a) => {
                let mut d = g.clone();
                for r in 0..d.rows() {
                    let mut running = 0.0;
                    for x in d.row_mut(r).iter_mut().rev() {
                        running += *x;
                        *x = running;
                    }
                }
                acc(*a, d);
            }
            Op::Sum(a) => {
                let (rows, cols) = self.shape(*a);
                acc(*a, Matrix::filled(rows, cols, g.item()));
            }
            Op::SoftmaxNll {
                logits,
                rows,
                labels,
                probs,
            } => {
                let (n, c) = self.shape(*logits);
                let mut d = Matrix::zeros(n, c);
                let w = g.item() / rows.len() as f64;
                for (i, &r) in rows.iter().enumerate() {
                    let drow = d.row_mut(r);
                    for (dx, p) in drow.iter_mut().zip(probs.row(i)) {
                        *dx += w * p;
                    }
                    drow[labels[i]] -= w;
                }
                acc(*logits, d);
            }
            Op::ScalarFn { inputs, partials } => {
                let s = g.item();
                for (v, p) in inputs.iter().zip(partials) {
                    acc(*v, p.scale(s));
                }
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

pub fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
