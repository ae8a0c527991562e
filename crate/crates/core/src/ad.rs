//! Reverse-mode automatic differentiation on a Wengert tape.
//!
//! Each recorded node stores the indices of its (at most two) parents and the
//! local partial derivatives with respect to them, computed during the forward
//! pass. The backward sweep is then a single reverse walk accumulating
//! adjoints, with no per-operation dispatch.
//!
//! Numeric kernels elsewhere in the crate are written against the [`Real`]
//! trait, so the same code evaluates as plain `f64` (fast value path) or as
//! [`Var`] (taped, differentiable). Constants enter expressions through the
//! mixed `f64` operators and never allocate tape nodes.
//!
//! A non-finite value produced by any primitive poisons the tape with the name
//! of the offending primitive; [`Tape::gradient`] reports it instead of
//! returning garbage adjoints.

use std::cell::{Cell, RefCell};
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Sentinel parent index marking an unused slot.
const NONE: u32 = u32::MAX;
/// Sentinel in `parent[0]` marking a fan-in node whose parents live in the
/// side pool (`parent[1]` = pool start, `partial[0]` = length).
const NARY: u32 = u32::MAX - 1;

#[derive(Clone, Copy)]
struct Node {
    parent: [u32; 2],
    partial: [f64; 2],
}

/// Recording tape. One tape per thread / evaluation block; cleared and reused
/// between evaluations to keep allocations stable.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    /// `(parent, partial)` pairs for fan-in nodes (dot products).
    pool: RefCell<Vec<(u32, f64)>>,
    poison: Cell<Option<&'static str>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            pool: RefCell::new(Vec::new()),
            poison: Cell::new(None),
        }
    }

    pub fn with_capacity(n: usize) -> Self {
        Tape {
            nodes: RefCell::new(Vec::with_capacity(n)),
            pool: RefCell::new(Vec::new()),
            poison: Cell::new(None),
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drop all nodes but keep the allocation.
    pub fn clear(&self) {
        self.nodes.borrow_mut().clear();
        self.pool.borrow_mut().clear();
        self.poison.set(None);
    }

    /// Name of the primitive that first produced a non-finite value, if any.
    pub fn poisoned(&self) -> Option<&'static str> {
        self.poison.get()
    }

    /// Record an input (leaf) variable.
    pub fn leaf(&self, value: f64) -> Var<'_> {
        self.push("leaf", value, NONE, 0.0, NONE, 0.0)
    }

    /// Record a batch of leaves, preserving order.
    pub fn leaves(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.leaf(v)).collect()
    }

    fn push(
        &self,
        op: &'static str,
        value: f64,
        p0: u32,
        d0: f64,
        p1: u32,
        d1: f64,
    ) -> Var<'_> {
        if !value.is_finite() && self.poison.get().is_none() {
            self.poison.set(Some(op));
        }
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len() as u32;
        nodes.push(Node {
            parent: [p0, p1],
            partial: [d0, d1],
        });
        Var {
            tape: self,
            idx,
            val: value,
        }
    }

    fn unary(&self, op: &'static str, value: f64, parent: u32, partial: f64) -> Var<'_> {
        self.push(op, value, parent, partial, NONE, 0.0)
    }

    /// Dot product of taped variables: one tape node with 2n pool entries.
    pub fn dot(&self, a: &[Var<'_>], b: &[Var<'_>]) -> Var<'_> {
        debug_assert_eq!(a.len(), b.len());
        let mut value = 0.0;
        let mut pool = self.pool.borrow_mut();
        let start = pool.len() as u32;
        for (x, y) in a.iter().zip(b) {
            value += x.val * y.val;
            pool.push((x.idx, y.val));
            pool.push((y.idx, x.val));
        }
        let len = pool.len() as u32 - start;
        drop(pool);
        self.push("dot", value, NARY, len as f64, start, 0.0)
    }

    /// Dot product of taped variables with plain coefficients.
    pub fn dot_mixed(&self, a: &[Var<'_>], coeff: &[f64]) -> Var<'_> {
        debug_assert_eq!(a.len(), coeff.len());
        let mut value = 0.0;
        let mut pool = self.pool.borrow_mut();
        let start = pool.len() as u32;
        for (x, &c) in a.iter().zip(coeff) {
            value += x.val * c;
            pool.push((x.idx, c));
        }
        let len = pool.len() as u32 - start;
        drop(pool);
        self.push("dot_mixed", value, NARY, len as f64, start, 0.0)
    }

    /// Adjoints of every node with respect to the scalar at `output`.
    ///
    /// The caller keeps track of which indices are its inputs (leaves pushed
    /// first come first). Errors if any primitive produced a non-finite value.
    pub fn gradient(&self, output: Var<'_>) -> Result<Vec<f64>> {
        let mut adj = vec![0.0; self.len()];
        self.backward_into(output.idx, &mut adj)?;
        Ok(adj)
    }

    /// Backward sweep from node `idx` into a caller-provided buffer (resized
    /// and zeroed here). Reusing the buffer avoids reallocation in loops that
    /// differentiate many outputs of one tape.
    pub fn backward_into(&self, idx: u32, adj: &mut Vec<f64>) -> Result<()> {
        if let Some(op) = self.poison.get() {
            return Err(Error::NonFinite { op });
        }
        let nodes = self.nodes.borrow();
        let pool = self.pool.borrow();
        adj.clear();
        adj.resize(nodes.len(), 0.0);
        adj[idx as usize] = 1.0;
        for i in (0..=idx as usize).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let n = nodes[i];
            if n.parent[0] == NARY {
                let start = n.parent[1] as usize;
                let len = n.partial[0] as usize;
                for &(p, d) in &pool[start..start + len] {
                    adj[p as usize] += a * d;
                }
            } else {
                if n.parent[0] != NONE {
                    adj[n.parent[0] as usize] += a * n.partial[0];
                }
                if n.parent[1] != NONE {
                    adj[n.parent[1] as usize] += a * n.partial[1];
                }
            }
        }
        Ok(())
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// A value recorded on a [`Tape`]. Copyable; caches its forward value.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
    val: f64,
}

impl<'t> Var<'t> {
    pub fn index(self) -> u32 {
        self.idx
    }
}

/// Scalar abstraction shared by the plain and taped evaluation paths.
///
/// Constants take part through the `f64`-mixed operators (`self + 2.0`) plus
/// [`Real::rsub`] / [`Real::rdiv`] for the non-commutative directions, so the
/// taped path never records nodes for constants.
pub trait Real:
    Copy
    + Add<Self, Output = Self>
    + Sub<Self, Output = Self>
    + Mul<Self, Output = Self>
    + Div<Self, Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// Current numeric value (forward value for taped variables).
    fn val(self) -> f64;
    /// `c - self`
    fn rsub(self, c: f64) -> Self;
    /// `c / self`
    fn rdiv(self, c: f64) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tan(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn abs(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn atan2(self, x: Self) -> Self;
    /// Dot product; non-empty, equal-length inputs.
    fn dot(a: &[Self], b: &[Self]) -> Self;
    /// Dot product against plain coefficients; non-empty, equal lengths.
    fn dot_mixed(a: &[Self], coeff: &[f64]) -> Self;
}

impl Real for f64 {
    #[inline]
    fn val(self) -> f64 {
        self
    }
    #[inline]
    fn rsub(self, c: f64) -> Self {
        c - self
    }
    #[inline]
    fn rdiv(self, c: f64) -> Self {
        c / self
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn tan(self) -> Self {
        f64::tan(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    #[inline]
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
    #[inline]
    fn dot(a: &[Self], b: &[Self]) -> Self {
        let mut acc = 0.0;
        for (x, y) in a.iter().zip(b) {
            acc += x * y;
        }
        acc
    }
    #[inline]
    fn dot_mixed(a: &[Self], coeff: &[f64]) -> Self {
        let mut acc = 0.0;
        for (x, c) in a.iter().zip(coeff) {
            acc += x * c;
        }
        acc
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Self) -> Self::Output {
        self.tape
            .push("add", self.val + rhs.val, self.idx, 1.0, rhs.idx, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Self) -> Self::Output {
        self.tape
            .push("sub", self.val - rhs.val, self.idx, 1.0, rhs.idx, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Self) -> Self::Output {
        self.tape
            .push("mul", self.val * rhs.val, self.idx, rhs.val, rhs.idx, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Self) -> Self::Output {
        let inv = 1.0 / rhs.val;
        let v = self.val * inv;
        self.tape
            .push("div", v, self.idx, inv, rhs.idx, -v * inv)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self::Output {
        self.tape.unary("neg", -self.val, self.idx, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, c: f64) -> Self::Output {
        self.tape.unary("add_c", self.val + c, self.idx, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, c: f64) -> Self::Output {
        self.tape.unary("sub_c", self.val - c, self.idx, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, c: f64) -> Self::Output {
        self.tape.unary("mul_c", self.val * c, self.idx, c)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, c: f64) -> Self::Output {
        let inv = 1.0 / c;
        self.tape.unary("div_c", self.val * inv, self.idx, inv)
    }
}

impl<'t> Real for Var<'t> {
    fn val(self) -> f64 {
        self.val
    }
    fn rsub(self, c: f64) -> Self {
        self.tape.unary("rsub", c - self.val, self.idx, -1.0)
    }
    fn rdiv(self, c: f64) -> Self {
        let v = c / self.val;
        self.tape.unary("rdiv", v, self.idx, -v / self.val)
    }
    fn sin(self) -> Self {
        self.tape
            .unary("sin", self.val.sin(), self.idx, self.val.cos())
    }
    fn cos(self) -> Self {
        self.tape
            .unary("cos", self.val.cos(), self.idx, -self.val.sin())
    }
    fn tan(self) -> Self {
        let t = self.val.tan();
        self.tape.unary("tan", t, self.idx, 1.0 + t * t)
    }
    fn exp(self) -> Self {
        let e = self.val.exp();
        self.tape.unary("exp", e, self.idx, e)
    }
    fn ln(self) -> Self {
        self.tape
            .unary("ln", self.val.ln(), self.idx, 1.0 / self.val)
    }
    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.tape.unary("sqrt", s, self.idx, 0.5 / s)
    }
    fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.tape.unary("tanh", t, self.idx, 1.0 - t * t)
    }
    fn abs(self) -> Self {
        let d = if self.val >= 0.0 { 1.0 } else { -1.0 };
        self.tape.unary("abs", self.val.abs(), self.idx, d)
    }
    fn powi(self, n: i32) -> Self {
        let v = self.val.powi(n);
        let d = f64::from(n) * self.val.powi(n - 1);
        self.tape.unary("powi", v, self.idx, d)
    }
    fn atan2(self, x: Self) -> Self {
        let denom = self.val * self.val + x.val * x.val;
        self.tape.push(
            "atan2",
            self.val.atan2(x.val),
            self.idx,
            x.val / denom,
            x.idx,
            -self.val / denom,
        )
    }
    fn dot(a: &[Self], b: &[Self]) -> Self {
        a[0].tape.dot(a, b)
    }
    fn dot_mixed(a: &[Self], coeff: &[f64]) -> Self {
        a[0].tape.dot_mixed(a, coeff)
    }
}

/// Evaluate `f` over leaves initialized from `at` and return the loss value
/// together with the gradient with respect to `at`.
///
/// `f` must express the loss purely through [`Real`] operations on the given
/// variables (plus constants), which is what makes the gradient exact.
pub fn value_and_grad<F>(at: &[f64], f: F) -> Result<(f64, Vec<f64>)>
where
    F: for<'t> FnOnce(&[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let vars = tape.leaves(at);
    let out = f(&vars);
    let adj = tape.gradient(out)?;
    Ok((out.val, adj[..at.len()].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Central finite difference of a scalar function of a vector.
    fn fd_grad(f: impl Fn(&[f64]) -> f64, at: &[f64], step: f64) -> Vec<f64> {
        let mut g = vec![0.0; at.len()];
        let mut x = at.to_vec();
        for i in 0..at.len() {
            let h = step * at[i].abs().max(1.0);
            x[i] = at[i] + h;
            let fp = f(&x);
            x[i] = at[i] - h;
            let fm = f(&x);
            x[i] = at[i];
            g[i] = (fp - fm) / (2.0 * h);
        }
        g
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn square_gradient_is_analytic() {
        let (v, g) = value_and_grad(&[3.0], |x| x[0] * x[0]).unwrap();
        assert_eq!(v, 9.0);
        assert_eq!(g[0], 6.0);
    }

    #[test]
    fn dead_parameter_has_zero_gradient() {
        let (_, g) = value_and_grad(&[2.0, 5.0], |x| x[0] * x[0] + 1.0).unwrap();
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn poison_reports_offending_primitive() {
        let err = value_and_grad(&[-1.0], |x| x[0].sqrt() + 1.0).unwrap_err();
        match err {
            Error::NonFinite { op } => assert_eq!(op, "sqrt"),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn composite_expression_matches_finite_differences() {
        let f = |x: &[f64]| (x[0].sin() * x[1] + (x[0] / x[1]).exp()).tanh() * 0.5 + x[1].ln();
        let at = [0.7, 1.3];
        let (_, g) = value_and_grad(&at, |x| {
            ((x[0].sin() * x[1] + (x[0] / x[1]).exp()).tanh() * 0.5) + x[1].ln()
        })
        .unwrap();
        let fd = fd_grad(f, &at, 1e-6);
        for i in 0..2 {
            assert!(rel_err(g[i], fd[i]) < 1e-7, "{} vs {}", g[i], fd[i]);
        }
    }

    #[test]
    fn backward_into_supports_multiple_outputs() {
        let tape = Tape::new();
        let x = tape.leaf(2.0);
        let y = tape.leaf(3.0);
        let a = x * y;
        let b = x + y * 2.0;
        let mut adj = Vec::new();
        tape.backward_into(a.index(), &mut adj).unwrap();
        assert_eq!(adj[0], 3.0);
        assert_eq!(adj[1], 2.0);
        tape.backward_into(b.index(), &mut adj).unwrap();
        assert_eq!(adj[0], 1.0);
        assert_eq!(adj[1], 2.0);
    }

    /// Per-primitive gradient checks against central finite differences.
    /// Inputs avoid the non-smooth points of |.| and the domain edges of
    /// ln/sqrt by construction.
    macro_rules! primitive_case {
        ($name:ident, $lo:expr, $hi:expr, $expr:expr, $f:expr) => {
            proptest! {
                #![proptest_config(ProptestConfig::with_cases(1000))]
                #[test]
                fn $name(x0 in ($lo)..($hi), x1 in 0.3f64..2.0) {
                    let f = $f;
                    let at = [x0, x1];
                    let (_, g) = value_and_grad(&at, $expr).unwrap();
                    let fd = fd_grad(f, &at, 1e-6);
                    for i in 0..2 {
                        prop_assert!(rel_err(g[i], fd[i]) < 1e-6,
                            "component {}: ad {} fd {}", i, g[i], fd[i]);
                    }
                }
            }
        };
    }

    primitive_case!(grad_add, -2.0, 2.0, |x| x[0] + x[1], |x: &[f64]| x[0] + x[1]);
    primitive_case!(grad_sub, -2.0, 2.0, |x| x[0] - x[1], |x: &[f64]| x[0] - x[1]);
    primitive_case!(grad_mul, -2.0, 2.0, |x| x[0] * x[1], |x: &[f64]| x[0] * x[1]);
    primitive_case!(grad_div, -2.0, 2.0, |x| x[0] / x[1], |x: &[f64]| x[0] / x[1]);
    primitive_case!(grad_sin, -3.0, 3.0, |x| x[0].sin() * x[1], |x: &[f64]| x[0]
        .sin()
        * x[1]);
    primitive_case!(grad_cos, -3.0, 3.0, |x| x[0].cos() * x[1], |x: &[f64]| x[0]
        .cos()
        * x[1]);
    primitive_case!(grad_tan, -1.2, 1.2, |x| x[0].tan() + x[1], |x: &[f64]| x[0]
        .tan()
        + x[1]);
    primitive_case!(grad_exp, -2.0, 2.0, |x| x[0].exp() / x[1], |x: &[f64]| x[0]
        .exp()
        / x[1]);
    primitive_case!(grad_ln, 0.1, 4.0, |x| x[0].ln() * x[1], |x: &[f64]| x[0]
        .ln()
        * x[1]);
    primitive_case!(grad_sqrt, 0.1, 4.0, |x| x[0].sqrt() + x[1], |x: &[f64]| {
        x[0].sqrt() + x[1]
    });
    primitive_case!(grad_tanh, -3.0, 3.0, |x| x[0].tanh() * x[1], |x: &[f64]| {
        x[0].tanh() * x[1]
    });
    primitive_case!(grad_powi, 0.2, 2.0, |x| x[0].powi(3) + x[1], |x: &[f64]| {
        x[0].powi(3) + x[1]
    });
    primitive_case!(grad_atan2, 0.2, 2.0, |x| x[0].atan2(x[1]), |x: &[f64]| {
        x[0].atan2(x[1])
    });
    primitive_case!(grad_rsub, -2.0, 2.0, |x| x[0].rsub(1.5) * x[1], |x: &[f64]| {
        (1.5 - x[0]) * x[1]
    });
    primitive_case!(grad_rdiv, 0.3, 2.0, |x| x[0].rdiv(1.5) + x[1], |x: &[f64]| {
        1.5 / x[0] + x[1]
    });

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn grad_abs_away_from_kink(x0 in prop::sample::select(vec![-1.7f64, -0.9, 0.4, 1.3]),
                                   x1 in 0.3f64..2.0) {
            let at = [x0, x1];
            let (_, g) = value_and_grad(&at, |x| x[0].abs() * x[1]).unwrap();
            let fd = fd_grad(|x: &[f64]| x[0].abs() * x[1], &at, 1e-6);
            for i in 0..2 {
                prop_assert!(rel_err(g[i], fd[i]) < 1e-6);
            }
        }
    }

    #[test]
    fn fused_dot_matches_unfused() {
        let a = [0.3, -1.2, 0.9, 2.2];
        let b = [1.1, 0.4, -0.7, 0.05];
        let coeff = [0.5, -0.25, 2.0, 1.5];
        let (v1, g1) = value_and_grad(&[a, b].concat(), |x| {
            let (xa, xb) = x.split_at(4);
            Var::dot(xa, xb)
        })
        .unwrap();
        let (v2, g2) = value_and_grad(&[a, b].concat(), |x| {
            let (xa, xb) = x.split_at(4);
            let mut acc = xa[0] * xb[0];
            for i in 1..4 {
                acc = acc + xa[i] * xb[i];
            }
            acc
        })
        .unwrap();
        assert_relative_eq!(v1, v2, epsilon = 1e-15);
        for (x, y) in g1.iter().zip(&g2) {
            assert_relative_eq!(x, y, epsilon = 1e-15);
        }

        let (v3, g3) = value_and_grad(&a, |x| Var::dot_mixed(x, &coeff)).unwrap();
        let expected: f64 = a.iter().zip(&coeff).map(|(x, c)| x * c).sum();
        assert_relative_eq!(v3, expected, epsilon = 1e-15);
        for (g, c) in g3.iter().zip(&coeff) {
            assert_relative_eq!(g, c, epsilon = 1e-15);
        }
    }

    #[test]
    fn gradient_is_deterministic() {
        fn f<'t>(x: &[Var<'t>]) -> Var<'t> {
            (x[0] * x[1]).sin() + (x[2] / x[0]).exp() * 0.25
        }
        let at = [1.1, 0.4, -0.3];
        let (v1, g1) = value_and_grad(&at, f).unwrap();
        let (v2, g2) = value_and_grad(&at, f).unwrap();
        assert_eq!(v1.to_bits(), v2.to_bits());
        for (a, b) in g1.iter().zip(&g2) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn tape_reuse_after_clear() {
        let tape = Tape::new();
        {
            let x = tape.leaf(2.0);
            let y = x * x;
            let g = tape.gradient(y).unwrap();
            assert_relative_eq!(g[0], 4.0);
        }
        tape.clear();
        let x = tape.leaf(3.0);
        let y = x * x * x;
        let g = tape.gradient(y).unwrap();
        assert_relative_eq!(g[0], 27.0, max_relative = 1e-12);
    }
}
