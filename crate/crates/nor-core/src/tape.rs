//! Reverse-mode automatic differentiation over a flat scalar tape.
//!
//! Every operation pushes one node carrying its value and the local partial
//! derivatives with respect to its parents (a Wengert list in CSR layout).
//! [`Tape::backward`] walks the list once in reverse and accumulates
//! adjoints. Vector reductions (`dot`, `sum`) are fused into single wide
//! nodes so matrix-vector products cost one node per output scalar.
//!
//! The tape is built eagerly: a [`Var`] is a copyable handle `(tape, index)`
//! and arithmetic operators record as they compute. A tape can be [cleared]
//! and reused across training steps to keep its buffers warm.
//!
//! [cleared]: Tape::clear

use std::cell::RefCell;

use crate::error::{NorError, Result};

#[derive(Default)]
struct TapeInner {
    values: Vec<f64>,
    /// Exclusive end of each node's dependency range (CSR offsets).
    dep_end: Vec<u32>,
    dep_idx: Vec<u32>,
    dep_w: Vec<f64>,
}

/// Recording tape. Create [`Var`]s with [`Tape::leaf`] / [`Tape::constant`]
/// and combine them with ordinary operators.
#[derive(Default)]
pub struct Tape {
    inner: RefCell<TapeInner>,
}

/// A scalar value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Number of nodes currently recorded.
    pub fn len(&self) -> usize {
        self.inner.borrow().values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops all nodes but keeps allocated capacity.
    ///
    /// Any `Var` created before the call is invalidated; using one
    /// afterwards is a logic error.
    pub fn clear(&self) {
        let mut t = self.inner.borrow_mut();
        t.values.clear();
        t.dep_end.clear();
        t.dep_idx.clear();
        t.dep_w.clear();
    }

    fn push(&self, value: f64, deps: &[(u32, f64)]) -> Var<'_> {
        let mut t = self.inner.borrow_mut();
        for &(idx, w) in deps {
            t.dep_idx.push(idx);
            t.dep_w.push(w);
        }
        let end = t.dep_idx.len() as u32;
        t.dep_end.push(end);
        t.values.push(value);
        let idx = (t.values.len() - 1) as u32;
        Var { tape: self, idx }
    }

    /// A differentiable input node.
    pub fn leaf(&self, value: f64) -> Var<'_> {
        self.push(value, &[])
    }

    /// A node with no parents; identical to a leaf but named for intent.
    pub fn constant(&self, value: f64) -> Var<'_> {
        self.push(value, &[])
    }

    pub fn leaves<'t>(&'t self, values: &[f64]) -> Vec<Var<'t>> {
        values.iter().map(|&v| self.leaf(v)).collect()
    }

    /// `sum_j a_j * b_j` as a single node.
    pub fn dot<'t>(&'t self, a: &[Var<'t>], b: &[Var<'t>]) -> Var<'t> {
        assert_eq!(a.len(), b.len(), "dot operands must have equal length");
        let mut t = self.inner.borrow_mut();
        let mut value = 0.0;
        for (va, vb) in a.iter().zip(b) {
            let (xa, xb) = (t.values[va.idx as usize], t.values[vb.idx as usize]);
            value += xa * xb;
            t.dep_idx.push(va.idx);
            t.dep_w.push(xb);
            t.dep_idx.push(vb.idx);
            t.dep_w.push(xa);
        }
        let end = t.dep_idx.len() as u32;
        t.dep_end.push(end);
        t.values.push(value);
        let idx = (t.values.len() - 1) as u32;
        Var { tape: self, idx }
    }

    /// Dot product of variables against fixed coefficients.
    pub fn dot_vc<'t>(&'t self, vars: &[Var<'t>], coeffs: &[f64]) -> Var<'t> {
        assert_eq!(vars.len(), coeffs.len(), "dot operands must have equal length");
        let mut t = self.inner.borrow_mut();
        let mut value = 0.0;
        for (v, &c) in vars.iter().zip(coeffs) {
            value += t.values[v.idx as usize] * c;
            if c != 0.0 {
                t.dep_idx.push(v.idx);
                t.dep_w.push(c);
            }
        }
        let end = t.dep_idx.len() as u32;
        t.dep_end.push(end);
        t.values.push(value);
        let idx = (t.values.len() - 1) as u32;
        Var { tape: self, idx }
    }

    /// `sum_j a_j` as a single node.
    pub fn sum<'t>(&'t self, vars: &[Var<'t>]) -> Var<'t> {
        let mut t = self.inner.borrow_mut();
        let mut value = 0.0;
        for v in vars {
            value += t.values[v.idx as usize];
            t.dep_idx.push(v.idx);
            t.dep_w.push(1.0);
        }
        let end = t.dep_idx.len() as u32;
        t.dep_end.push(end);
        t.values.push(value);
        let idx = (t.values.len() - 1) as u32;
        Var { tape: self, idx }
    }

    /// Reverse pass from `loss`; returns one adjoint per node.
    pub fn backward(&self, loss: Var<'_>) -> Gradients {
        let t = self.inner.borrow();
        let n = t.values.len();
        let mut adj = vec![0.0; n];
        adj[loss.idx as usize] = 1.0;
        for i in (0..n).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let start = if i == 0 { 0 } else { t.dep_end[i - 1] as usize };
            let end = t.dep_end[i] as usize;
            for j in start..end {
                adj[t.dep_idx[j] as usize] += a * t.dep_w[j];
            }
        }
        Gradients { adj }
    }
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    adj: Vec<f64>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`.
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        self.adj[v.idx as usize]
    }

    /// Adjoints of the first `n` nodes. Losses push their parameter leaves
    /// first, so this is the gradient with respect to the parameter vector.
    pub fn leading(&self, n: usize) -> &[f64] {
        &self.adj[..n]
    }
}

pub fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn stable_softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Inverse of softplus: `x` such that `softplus(x) = y`, for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    // ln(e^y - 1) = y + ln(1 - e^{-y})
    y + crate::bounds::log1m_exp_neg(y)
}

impl<'t> Var<'t> {
    pub fn value(self) -> f64 {
        self.tape.inner.borrow().values[self.idx as usize]
    }

    fn unary(self, value: f64, dv: f64) -> Var<'t> {
        self.tape.push(value, &[(self.idx, dv)])
    }

    pub fn exp(self) -> Var<'t> {
        let e = self.value().exp();
        self.unary(e, e)
    }

    pub fn ln(self) -> Var<'t> {
        let x = self.value();
        self.unary(x.ln(), 1.0 / x)
    }

    pub fn sigmoid(self) -> Var<'t> {
        let s = stable_sigmoid(self.value());
        self.unary(s, s * (1.0 - s))
    }

    pub fn softplus(self) -> Var<'t> {
        let x = self.value();
        self.unary(stable_softplus(x), stable_sigmoid(x))
    }

    pub fn tanh(self) -> Var<'t> {
        let t = self.value().tanh();
        self.unary(t, 1.0 - t * t)
    }

    pub fn relu(self) -> Var<'t> {
        let x = self.value();
        if x > 0.0 {
            self.unary(x, 1.0)
        } else {
            self.unary(0.0, 0.0)
        }
    }

    /// `ln(1 - e^{-x})` for `x > 0`, with derivative `1/(e^x - 1)`.
    pub fn log1m_exp_neg(self) -> Var<'t> {
        let x = self.value();
        self.unary(crate::bounds::log1m_exp_neg(x), 1.0 / x.exp_m1())
    }

    /// `max(x, c)`; the derivative is zero on the clamped branch.
    pub fn max_const(self, c: f64) -> Var<'t> {
        let x = self.value();
        if x > c {
            self.unary(x, 1.0)
        } else {
            self.unary(c, 0.0)
        }
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary(self.value() * c, c)
    }

    pub fn add_const(self, c: f64) -> Var<'t> {
        self.unary(self.value() + c, 1.0)
    }
}

impl<'t> std::ops::Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.tape
            .push(self.value() + rhs.value(), &[(self.idx, 1.0), (rhs.idx, 1.0)])
    }
}

impl<'t> std::ops::Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.tape
            .push(self.value() - rhs.value(), &[(self.idx, 1.0), (rhs.idx, -1.0)])
    }
}

impl<'t> std::ops::Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        let (a, b) = (self.value(), rhs.value());
        self.tape.push(a * b, &[(self.idx, b), (rhs.idx, a)])
    }
}

impl<'t> std::ops::Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        let (a, b) = (self.value(), rhs.value());
        self.tape
            .push(a / b, &[(self.idx, 1.0 / b), (rhs.idx, -a / (b * b))])
    }
}

impl<'t> std::ops::Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }
}

impl<'t> std::ops::Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        self.add_const(rhs)
    }
}

impl<'t> std::ops::Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Var<'t> {
        self.add_const(-rhs)
    }
}

impl<'t> std::ops::Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self.scale(rhs)
    }
}

impl<'t> std::ops::Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        rhs.tape.push(self - rhs.value(), &[(rhs.idx, -1.0)])
    }
}

impl<'t> std::ops::Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        rhs.add_const(self)
    }
}

impl<'t> std::ops::Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        rhs.scale(self)
    }
}

/// A scalar loss that can report both its value and its gradient.
pub trait ScalarLoss {
    fn value(&self, p: &[f64]) -> f64;
    fn value_and_grad(&self, p: &[f64]) -> (f64, Vec<f64>);
}

/// Above this many coordinates, [`grad_check`] samples a random subset.
pub const GRAD_CHECK_FULL_LIMIT: usize = 512;
/// Size of the sampled subset for large parameter vectors.
pub const GRAD_CHECK_SUBSET: usize = 256;

/// Compares the engine gradient against central finite differences and
/// returns the maximum relative error, with denominator
/// `max(|g_i|, 1e-8)`.
///
/// All coordinates are checked when the vector is small; otherwise a
/// deterministic random subset of [`GRAD_CHECK_SUBSET`] coordinates.
pub fn grad_check<L: ScalarLoss>(loss: &L, p: &[f64], h: f64) -> Result<f64> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    let (v0, g) = loss.value_and_grad(p);
    if !v0.is_finite() {
        return Err(NorError::Numerical(format!(
            "loss is not finite at the checkpoint: {v0}"
        )));
    }
    let coords: Vec<usize> = if p.len() <= GRAD_CHECK_FULL_LIMIT {
        (0..p.len()).collect()
    } else {
        let mut all: Vec<usize> = (0..p.len()).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed_c0de);
        all.shuffle(&mut rng);
        all.truncate(GRAD_CHECK_SUBSET);
        all
    };
    let mut work = p.to_vec();
    let mut max_err = 0.0f64;
    for &i in &coords {
        let orig = work[i];
        work[i] = orig + h;
        let up = loss.value(&work);
        work[i] = orig - h;
        let down = loss.value(&work);
        work[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(NorError::Numerical(format!(
                "loss is not finite under perturbation of coordinate {i}"
            )));
        }
        let fd = (up - down) / (2.0 * h);
        let err = (g[i] - fd).abs() / g[i].abs().max(1e-8);
        max_err = max_err.max(err);
    }
    Ok(max_err)
}
