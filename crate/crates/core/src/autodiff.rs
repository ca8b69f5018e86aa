/*
Copyright 2026 The proxmetric Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

//! Reverse-mode differentiation tape.
//!
//! A [`Tape`] records every primitive applied to its [`Var`]s together with
//! the forward value. [`Tape::backward`] walks the record in reverse and
//! accumulates adjoints. Nodes are appended in evaluation order, so operands
//! always precede their consumers.
//!
//! Linear systems get two primitives: [`Var::factor`] (or the structured
//! [`Tape::factor_shifted`]) records an LU factorization once, and
//! [`Var::solve`] reuses it. Backward through a solve uses the adjoint system
//! `Kᵀ s = ḡ`, giving `b̄ += s` and `K̄ -= s wᵀ`.

use std::cell::RefCell;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::{Lu, Tensor};

#[derive(Debug)]
enum FactorSource {
    Dense(usize),
    /// `K = base + diag(shift)` on the leading `shift.len()` diagonal entries.
    ShiftedDiag(usize),
}

#[derive(Debug)]
enum Op {
    Leaf { param: bool },
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, f64),
    ScaleBy(usize, usize),
    Relu(usize),
    ClampTail(usize, usize),
    SigmoidScale(usize, f64, f64),
    Mse(usize, usize),
    Sum(usize),
    Slice(usize, usize),
    Concat(usize, usize),
    AddDiag(usize, usize),
    Factor(Box<Lu>, FactorSource),
    Solve(usize, usize),
}

#[derive(Debug)]
struct Node {
    value: Arc<Tensor>,
    op: Op,
}

/// Single-threaded record of primitive applications.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
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

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        self.push_arc(Arc::new(value), op)
    }

    fn push_arc(&self, value: Arc<Tensor>, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value(&self, id: usize) -> Arc<Tensor> {
        Arc::clone(&self.nodes.borrow()[id].value)
    }

    /// Differentiable leaf; always receives a gradient from `backward`.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf { param: true })
    }

    pub fn param_arc(&self, value: Arc<Tensor>) -> Var<'_> {
        self.push_arc(value, Op::Leaf { param: true })
    }

    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf { param: false })
    }

    pub fn constant_arc(&self, value: Arc<Tensor>) -> Var<'_> {
        self.push_arc(value, Op::Leaf { param: false })
    }

    /// Factorizes `base + diag(shift)` where `shift` covers the leading
    /// diagonal entries. Gradients flow only into `shift`; `base` is constant.
    pub fn factor_shifted<'t>(&'t self, base: &Tensor, shift: Var<'t>) -> Result<Var<'t>> {
        let s = shift.value();
        let n = base.rows();
        if base.cols() != n || s.cols() != 1 || s.rows() > n {
            return Err(Error::shape(
                "factor_shifted",
                format!("base {:?}, shift {:?}", base.shape(), s.shape()),
            ));
        }
        let mut k = base.clone();
        for (i, v) in s.data().iter().enumerate() {
            let kk = k.get(i, i) + v;
            k.set(i, i, kk);
        }
        let k = k.ensure_finite("factor_shifted")?;
        let lu = Lu::factor(&k)?;
        Ok(self.push(
            k,
            Op::Factor(Box::new(lu), FactorSource::ShiftedDiag(shift.id)),
        ))
    }

    /// Reverse traversal from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let seed = &nodes[loss.id].value;
        if seed.len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("seed must be scalar, got {:?}", seed.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor::new(seed.rows(), seed.cols(), vec![1.0])?);

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            let out = &node.value;
            match &node.op {
                Op::Leaf { .. } => {}
                Op::MatMul(a, b) => {
                    let av = &nodes[*a].value;
                    let bv = &nodes[*b].value;
                    accumulate(&mut grads, *a, g.matmul(&bv.transpose())?);
                    accumulate(&mut grads, *b, av.transpose().matmul(&g)?);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, map(&g, |x| -x));
                }
                Op::Mul(a, b) => {
                    let av = &nodes[*a].value;
                    let bv = &nodes[*b].value;
                    accumulate(&mut grads, *a, zip(&g, bv, |g, b| g * b));
                    accumulate(&mut grads, *b, zip(&g, av, |g, a| g * a));
                }
                Op::Div(a, b) => {
                    let av = &nodes[*a].value;
                    let bv = &nodes[*b].value;
                    accumulate(&mut grads, *a, zip(&g, bv, |g, b| g / b));
                    let mut gb = zip(&g, av, |g, a| g * a);
                    for (x, b) in gb.data_mut().iter_mut().zip(bv.data()) {
                        *x = -*x / (b * b);
                    }
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, map(&g, |x| x * c)),
                Op::ScaleBy(v, s) => {
                    let vv = &nodes[*v].value;
                    let sv = nodes[*s].value.data()[0];
                    accumulate(&mut grads, *v, map(&g, |x| x * sv));
                    let ds: f64 = g.data().iter().zip(vv.data()).map(|(g, v)| g * v).sum();
                    let shape = nodes[*s].value.shape();
                    accumulate(&mut grads, *s, Tensor::new(shape.0, shape.1, vec![ds])?);
                }
                Op::Relu(a) => {
                    let av = &nodes[*a].value;
                    accumulate(
                        &mut grads,
                        *a,
                        zip(&g, av, |g, v| if v > 0.0 { g } else { 0.0 }),
                    );
                }
                Op::ClampTail(a, start) => {
                    let av = &nodes[*a].value;
                    let mut ga = g.clone();
                    let cols = av.cols();
                    for (idx, (x, v)) in ga.data_mut().iter_mut().zip(av.data()).enumerate() {
                        if idx / cols >= *start && *v <= 0.0 {
                            *x = 0.0;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SigmoidScale(a, lo, hi) => {
                    let av = &nodes[*a].value;
                    let span = hi - lo;
                    accumulate(
                        &mut grads,
                        *a,
                        zip(&g, av, |g, v| {
                            let s = logistic(v);
                            g * span * s * (1.0 - s)
                        }),
                    );
                }
                Op::Mse(a, b) => {
                    let av = &nodes[*a].value;
                    let bv = &nodes[*b].value;
                    let scale = 2.0 * g.data()[0] / av.len() as f64;
                    let diff = zip(av, bv, |x, y| scale * (x - y));
                    accumulate(&mut grads, *b, map(&diff, |x| -x));
                    accumulate(&mut grads, *a, diff);
                }
                Op::Sum(a) => {
                    let shape = nodes[*a].value.shape();
                    let gv = g.data()[0];
                    accumulate(
                        &mut grads,
                        *a,
                        Tensor::new(shape.0, shape.1, vec![gv; shape.0 * shape.1])?,
                    );
                }
                Op::Slice(a, start) => {
                    let av = &nodes[*a].value;
                    let cols = av.cols();
                    let mut ga = Tensor::zeros(av.rows(), cols);
                    ga.data_mut()[start * cols..start * cols + g.len()].copy_from_slice(g.data());
                    accumulate(&mut grads, *a, ga);
                }
                Op::Concat(a, b) => {
                    let split = nodes[*a].value.len();
                    let (ra, ca) = nodes[*a].value.shape();
                    let (rb, cb) = nodes[*b].value.shape();
                    accumulate(
                        &mut grads,
                        *a,
                        Tensor::new(ra, ca, g.data()[..split].to_vec())?,
                    );
                    accumulate(
                        &mut grads,
                        *b,
                        Tensor::new(rb, cb, g.data()[split..].to_vec())?,
                    );
                }
                Op::AddDiag(m, v) => {
                    let len = nodes[*v].value.rows();
                    let diag: Vec<f64> = (0..len).map(|i| g.get(i, i)).collect();
                    accumulate(&mut grads, *m, g.clone());
                    accumulate(&mut grads, *v, Tensor::column(diag));
                }
                Op::Factor(_, source) => match source {
                    FactorSource::Dense(k) => accumulate(&mut grads, *k, g.clone()),
                    FactorSource::ShiftedDiag(s) => accumulate(&mut grads, *s, g.clone()),
                },
                Op::Solve(f, rhs) => {
                    let Op::Factor(lu, source) = &nodes[*f].op else {
                        unreachable!("solve operand is always a factor node");
                    };
                    let s = lu.solve_transpose_matrix(&g);
                    match source {
                        FactorSource::Dense(_) => {
                            // K̄ -= s wᵀ
                            let n = s.rows();
                            let mut gk = Tensor::zeros(n, n);
                            for j in 0..out.cols() {
                                for r in 0..n {
                                    let sr = s.get(r, j);
                                    if sr == 0.0 {
                                        continue;
                                    }
                                    for c in 0..n {
                                        let v = gk.get(r, c) - sr * out.get(c, j);
                                        gk.set(r, c, v);
                                    }
                                }
                            }
                            accumulate(&mut grads, *f, gk);
                        }
                        FactorSource::ShiftedDiag(shift) => {
                            let len = nodes[*shift].value.rows();
                            let diag: Vec<f64> = (0..len)
                                .map(|i| {
                                    -(0..out.cols())
                                        .map(|j| s.get(i, j) * out.get(i, j))
                                        .sum::<f64>()
                                })
                                .collect();
                            accumulate(&mut grads, *f, Tensor::column(diag));
                        }
                    }
                    accumulate(&mut grads, *rhs, s);
                }
            }
            grads[id] = Some(g);
        }

        for (id, node) in nodes.iter().enumerate() {
            if let Op::Leaf { param: true } = node.op {
                if grads[id].is_none() {
                    let (r, c) = node.value.shape();
                    grads[id] = Some(Tensor::zeros(r, c));
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: usize, g: Tensor) {
    match &mut grads[id] {
        Some(existing) => {
            for (e, x) in existing.data_mut().iter_mut().zip(g.data()) {
                *e += x;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let data = t.data().iter().map(|&x| f(x)).collect();
    Tensor::new(t.rows(), t.cols(), data).expect("same shape")
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.rows(), a.cols(), data).expect("same shape")
}

#[inline]
pub(crate) fn logistic(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `lo + (hi - lo) * logistic(v)`, kept strictly inside `(lo, hi)`.
#[inline]
pub(crate) fn sigmoid_scale_value(v: f64, lo: f64, hi: f64) -> f64 {
    let out = lo + (hi - lo) * logistic(v);
    if out >= hi {
        hi.next_down()
    } else if out <= lo {
        lo.next_up()
    } else {
        out
    }
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    /// Gradient of `var`, or zeros when the loss does not depend on it.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        match self.get(var) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = var.value().shape();
                Tensor::zeros(r, c)
            }
        }
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Arc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn scalar_value(&self) -> Option<f64> {
        self.value().as_scalar()
    }

    fn binary(
        self,
        other: Var<'t>,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var<'t>> {
        let a = self.value();
        let b = other.value();
        same_shape(name, &a, &b)?;
        let out = zip(&a, &b, f).ensure_finite(name)?;
        Ok(self.tape.push(out, op))
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let out = self.value().matmul(&other.value())?;
        Ok(self.tape.push(out, Op::MatMul(self.id, other.id)))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "add", |a, b| a + b, Op::Add(self.id, other.id))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "sub", |a, b| a - b, Op::Sub(self.id, other.id))
    }

    /// Elementwise product.
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "mul", |a, b| a * b, Op::Mul(self.id, other.id))
    }

    /// Elementwise quotient.
    pub fn div(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "div", |a, b| a / b, Op::Div(self.id, other.id))
    }

    pub fn scale(self, c: f64) -> Result<Var<'t>> {
        let out = map(&self.value(), |x| x * c).ensure_finite("scale")?;
        Ok(self.tape.push(out, Op::Scale(self.id, c)))
    }

    /// Multiplies every entry by the 1x1 node `s`.
    pub fn scale_by(self, s: Var<'t>) -> Result<Var<'t>> {
        let sv = s
            .scalar_value()
            .ok_or_else(|| Error::shape("scale_by", "factor must be 1x1"))?;
        let out = map(&self.value(), |x| x * sv).ensure_finite("scale_by")?;
        Ok(self.tape.push(out, Op::ScaleBy(self.id, s.id)))
    }

    /// Elementwise `max(0, v)`; the subgradient at 0 is taken as 0.
    pub fn relu(self) -> Result<Var<'t>> {
        let out = map(&self.value(), |x| if x > 0.0 { x } else { 0.0 });
        Ok(self.tape.push(out, Op::Relu(self.id)))
    }

    /// `max(0, v)` on rows `start..`, identity on the leading rows.
    pub fn clamp_tail(self, start: usize) -> Result<Var<'t>> {
        let v = self.value();
        let cols = v.cols();
        let mut out = (*v).clone();
        for (idx, x) in out.data_mut().iter_mut().enumerate() {
            if idx / cols >= start && *x <= 0.0 {
                *x = 0.0;
            }
        }
        Ok(self.tape.push(out, Op::ClampTail(self.id, start)))
    }

    pub fn sigmoid_scale(self, lo: f64, hi: f64) -> Result<Var<'t>> {
        if !(lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "sigmoid_scale bounds must satisfy lo < hi, got [{lo}, {hi}]"
            )));
        }
        let out = map(&self.value(), |v| sigmoid_scale_value(v, lo, hi));
        Ok(self.tape.push(out, Op::SigmoidScale(self.id, lo, hi)))
    }

    /// Mean of squared elementwise differences.
    pub fn mse(self, other: Var<'t>) -> Result<Var<'t>> {
        let a = self.value();
        let b = other.value();
        same_shape("mse", &a, &b)?;
        let n = a.len().max(1) as f64;
        let total: f64 = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let out = Tensor::scalar(total / n).ensure_finite("mse")?;
        Ok(self.tape.push(out, Op::Mse(self.id, other.id)))
    }

    pub fn sum(self) -> Result<Var<'t>> {
        let total: f64 = self.value().data().iter().sum();
        let out = Tensor::scalar(total).ensure_finite("sum")?;
        Ok(self.tape.push(out, Op::Sum(self.id)))
    }

    /// Rows `start..start + len`.
    pub fn slice(self, start: usize, len: usize) -> Result<Var<'t>> {
        let v = self.value();
        if start + len > v.rows() {
            return Err(Error::shape(
                "slice",
                format!("rows {}..{} of {:?}", start, start + len, v.shape()),
            ));
        }
        let cols = v.cols();
        let out = Tensor::new(
            len,
            cols,
            v.data()[start * cols..(start + len) * cols].to_vec(),
        )?;
        Ok(self.tape.push(out, Op::Slice(self.id, start)))
    }

    /// Vertical concatenation.
    pub fn concat(self, other: Var<'t>) -> Result<Var<'t>> {
        let a = self.value();
        let b = other.value();
        if a.cols() != b.cols() {
            return Err(Error::shape(
                "concat",
                format!("{:?} over {:?}", a.shape(), b.shape()),
            ));
        }
        let mut data = Vec::with_capacity(a.len() + b.len());
        data.extend_from_slice(a.data());
        data.extend_from_slice(b.data());
        let out = Tensor::new(a.rows() + b.rows(), a.cols(), data)?;
        Ok(self.tape.push(out, Op::Concat(self.id, other.id)))
    }

    /// Adds the column `v` onto the leading diagonal entries of this matrix.
    pub fn add_diag(self, v: Var<'t>) -> Result<Var<'t>> {
        let m = self.value();
        let d = v.value();
        if m.rows() != m.cols() || d.cols() != 1 || d.rows() > m.rows() {
            return Err(Error::shape(
                "add_diag",
                format!("{:?} + diag {:?}", m.shape(), d.shape()),
            ));
        }
        let mut out = (*m).clone();
        for (i, x) in d.data().iter().enumerate() {
            let kk = out.get(i, i) + x;
            out.set(i, i, kk);
        }
        let out = out.ensure_finite("add_diag")?;
        Ok(self.tape.push(out, Op::AddDiag(self.id, v.id)))
    }

    /// LU factorization of this square node, reusable across [`Var::solve`] calls.
    pub fn factor(self) -> Result<Var<'t>> {
        let k = self.value();
        let lu = Lu::factor(&k)?;
        Ok(self
            .tape
            .push_arc(k, Op::Factor(Box::new(lu), FactorSource::Dense(self.id))))
    }

    /// Solves `K w = rhs` where `self` is a factor node.
    pub fn solve(self, rhs: Var<'t>) -> Result<Var<'t>> {
        let out = {
            let nodes = self.tape.nodes.borrow();
            let Op::Factor(lu, _) = &nodes[self.id].op else {
                return Err(Error::InvalidArgument(
                    "solve requires a factor node; call factor() first".into(),
                ));
            };
            let b = &nodes[rhs.id].value;
            lu.solve_matrix(b)?
        };
        Ok(self.tape.push(out, Op::Solve(self.id, rhs.id)))
    }

    /// Solves `self · w = rhs` for a square nonsingular `self`.
    pub fn linear_solve(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.factor()?.solve(rhs)
    }
}

/// Max relative error between tape gradients and central differences of `f`
/// at `x0`: `|g - fd| / (|fd| + 1e-12)` over all coordinates.
pub fn grad_check<F>(f: F, x0: &Tensor, eps: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let x = tape.param(x0.clone());
    let y = f(&tape, x)?;
    let grad = tape.backward(y)?.wrt(x);

    let eval = |point: Tensor| -> Result<f64> {
        let tape = Tape::new();
        let x = tape.param(point);
        let y = f(&tape, x)?;
        y.scalar_value()
            .ok_or_else(|| Error::shape("grad_check", "function must return a scalar"))
    };

    let mut worst: f64 = 0.0;
    for i in 0..x0.len() {
        let mut plus = x0.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x0.clone();
        minus.data_mut()[i] -= eps;
        let fd = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let err = (grad.data()[i] - fd).abs() / (fd.abs() + 1e-12);
        worst = worst.max(err);
    }
    Ok(worst)
}
