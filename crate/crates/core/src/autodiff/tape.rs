use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use thiserror::Error;

use crate::scalar::{logistic, Real, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("logarithm of non-positive value {0}")]
    NonPositiveLog(f64),
}

/// Provenance label of a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Leaf,
    Const,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Ln,
    Logistic,
    Abs,
    MaxConst,
    Clamp,
    Sum,
    Dot,
}

/// Opaque position on a tape, see [`Tape::checkpoint`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Checkpoint(usize);

#[derive(Default)]
struct Nodes<T> {
    values: Vec<T>,
    grads: Vec<T>,
    ops: Vec<Op>,
    // Parents of node i live in edges[edge_start[i]..edge_start[i + 1]].
    edge_start: Vec<usize>,
    edges: Vec<(usize, T)>,
}

impl<T: Scalar> Nodes<T> {
    fn push(&mut self, value: T, op: Op, parents: impl IntoIterator<Item = (usize, T)>) -> usize {
        let idx = self.values.len();
        self.values.push(value);
        self.grads.push(T::zero());
        self.ops.push(op);
        self.edges.extend(parents);
        self.edge_start.push(self.edges.len());
        idx
    }

    fn parents(&self, i: usize) -> &[(usize, T)] {
        let start = if i == 0 { 0 } else { self.edge_start[i - 1] };
        &self.edges[start..self.edge_start[i]]
    }

    fn truncate(&mut self, len: usize) {
        let edge_len = if len == 0 { 0 } else { self.edge_start[len - 1] };
        self.values.truncate(len);
        self.grads.truncate(len);
        self.ops.truncate(len);
        self.edge_start.truncate(len);
        self.edges.truncate(edge_len);
    }
}

/// Append-only record of scalar operations for reverse-mode
/// differentiation.
///
/// Node indices are topologically ordered by construction, so
/// [`Var::backward`] is a single reverse sweep. Truncating or clearing the
/// tape takes `&mut self`, which statically invalidates every outstanding
/// [`Var`].
pub struct Tape<T> {
    nodes: RefCell<Nodes<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Nodes {
                values: Vec::new(),
                grads: Vec::new(),
                ops: Vec::new(),
                edge_start: Vec::new(),
                edges: Vec::new(),
            }),
        }
    }

    /// A trainable leaf.
    pub fn var(&self, value: T) -> Var<'_, T> {
        self.push(value, Op::Leaf, [])
    }

    /// A constant; it still receives a gradient but has no parents.
    pub fn constant(&self, value: T) -> Var<'_, T> {
        self.push(value, Op::Const, [])
    }

    pub fn vars(&self, values: &[T]) -> Vec<Var<'_, T>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint(self.len())
    }

    /// Drops every node recorded after `cp`.
    pub fn truncate(&mut self, cp: Checkpoint) {
        self.nodes.get_mut().truncate(cp.0);
    }

    pub fn clear(&mut self) {
        self.truncate(Checkpoint(0));
    }

    pub fn zero_grad(&self) {
        let mut nodes = self.nodes.borrow_mut();
        nodes.grads.iter_mut().for_each(|g| *g = T::zero());
    }

    pub fn op(&self, v: Var<'_, T>) -> Op {
        self.nodes.borrow().ops[v.idx]
    }

    fn push(&self, value: T, op: Op, parents: impl IntoIterator<Item = (usize, T)>) -> Var<'_, T> {
        let idx = self.nodes.borrow_mut().push(value, op, parents);
        Var { tape: self, idx }
    }

    fn value_of(&self, idx: usize) -> T {
        self.nodes.borrow().values[idx]
    }

    fn backward_from(&self, root: usize) {
        let mut nodes = self.nodes.borrow_mut();
        let mut adjoint = vec![T::zero(); root + 1];
        adjoint[root] = T::one();
        for i in (0..=root).rev() {
            let a = adjoint[i];
            if a == T::zero() {
                continue;
            }
            for &(p, d) in nodes.parents(i) {
                adjoint[p] = adjoint[p] + a * d;
            }
        }
        for (g, a) in nodes.grads.iter_mut().zip(adjoint) {
            *g = *g + a;
        }
    }
}

/// Handle to one node of a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T> {
    tape: &'t Tape<T>,
    idx: usize,
}

impl<T: Scalar> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("idx", &self.idx)
            .field("value", &self.data())
            .field("grad", &self.grad())
            .finish()
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn data(&self) -> T {
        self.tape.value_of(self.idx)
    }

    /// Accumulated gradient of the most recent `backward` roots.
    pub fn grad(&self) -> T {
        self.tape.nodes.borrow().grads[self.idx]
    }

    pub fn index(&self) -> usize {
        self.idx
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    /// Propagates `d self / d node` into every node's gradient. Gradients
    /// accumulate across calls until [`Tape::zero_grad`].
    pub fn backward(&self) {
        self.tape.backward_from(self.idx);
    }

    fn unary(self, value: T, op: Op, d: T) -> Self {
        self.tape.push(value, op, [(self.idx, d)])
    }

    fn binary(self, rhs: Self, value: T, op: Op, da: T, db: T) -> Self {
        debug_assert!(std::ptr::eq(self.tape, rhs.tape), "operands on different tapes");
        self.tape.push(value, op, [(self.idx, da), (rhs.idx, db)])
    }
}

impl<'t, T: Scalar> Add for Var<'t, T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let v = self.data() + rhs.data();
        self.binary(rhs, v, Op::Add, T::one(), T::one())
    }
}

impl<'t, T: Scalar> Sub for Var<'t, T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let v = self.data() - rhs.data();
        self.binary(rhs, v, Op::Sub, T::one(), -T::one())
    }
}

impl<'t, T: Scalar> Mul for Var<'t, T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let (a, b) = (self.data(), rhs.data());
        self.binary(rhs, a * b, Op::Mul, b, a)
    }
}

impl<'t, T: Scalar> Div for Var<'t, T> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let (a, b) = (self.data(), rhs.data());
        self.binary(rhs, a / b, Op::Div, T::one() / b, -a / (b * b))
    }
}

impl<'t, T: Scalar> Neg for Var<'t, T> {
    type Output = Self;
    fn neg(self) -> Self {
        let v = -self.data();
        self.unary(v, Op::Neg, -T::one())
    }
}

impl<'t, T: Scalar> Add<T> for Var<'t, T> {
    type Output = Self;
    fn add(self, c: T) -> Self {
        let v = self.data() + c;
        self.unary(v, Op::Add, T::one())
    }
}

impl<'t, T: Scalar> Sub<T> for Var<'t, T> {
    type Output = Self;
    fn sub(self, c: T) -> Self {
        let v = self.data() - c;
        self.unary(v, Op::Sub, T::one())
    }
}

impl<'t, T: Scalar> Mul<T> for Var<'t, T> {
    type Output = Self;
    fn mul(self, c: T) -> Self {
        let v = self.data() * c;
        self.unary(v, Op::Mul, c)
    }
}

impl<'t, T: Scalar> Div<T> for Var<'t, T> {
    type Output = Self;
    fn div(self, c: T) -> Self {
        let v = self.data() / c;
        self.unary(v, Op::Div, T::one() / c)
    }
}

impl<'t, T: Scalar> Real for Var<'t, T> {
    type Base = T;

    fn value(&self) -> T {
        self.data()
    }

    fn lift(&self, c: T) -> Self {
        self.tape.constant(c)
    }

    fn exp(self) -> Self {
        let v = self.data().exp();
        self.unary(v, Op::Exp, v)
    }

    fn ln(self) -> Result<Self, DomainError> {
        let x = self.data();
        if x > T::zero() {
            Ok(self.unary(x.ln(), Op::Ln, T::one() / x))
        } else {
            Err(DomainError::NonPositiveLog(x.to_f64_lossy()))
        }
    }

    fn logistic(self) -> Self {
        let s = logistic(self.data());
        self.unary(s, Op::Logistic, s * (T::one() - s))
    }

    fn abs(self) -> Self {
        let x = self.data();
        let d = if x > T::zero() {
            T::one()
        } else if x < T::zero() {
            -T::one()
        } else {
            T::zero()
        };
        self.unary(x.abs(), Op::Abs, d)
    }

    fn max_const(self, c: T) -> Self {
        let x = self.data();
        if x > c {
            self.unary(x, Op::MaxConst, T::one())
        } else {
            self.unary(c, Op::MaxConst, T::zero())
        }
    }

    fn clamp_const(self, lo: T, hi: T) -> Self {
        let x = self.data();
        let (v, d) = if x < lo || x.is_nan() {
            (lo, T::zero())
        } else if x > hi {
            (hi, T::zero())
        } else {
            (x, T::one())
        };
        self.unary(v, Op::Clamp, d)
    }

    fn sum(xs: &[Self]) -> Option<Self> {
        let first = xs.first()?;
        let v = xs.iter().fold(T::zero(), |acc, x| acc + x.data());
        Some(first.tape.push(v, Op::Sum, xs.iter().map(|x| (x.idx, T::one()))))
    }

    fn dot(a: &[Self], b: &[Self]) -> Option<Self> {
        if a.len() != b.len() {
            return None;
        }
        let first = a.first()?;
        let av: Vec<T> = a.iter().map(|x| x.data()).collect();
        let bv: Vec<T> = b.iter().map(|x| x.data()).collect();
        let v = av.iter().zip(&bv).fold(T::zero(), |acc, (&x, &y)| acc + x * y);
        let parents = a
            .iter()
            .zip(&bv)
            .map(|(x, &d)| (x.idx, d))
            .chain(b.iter().zip(&av).map(|(y, &d)| (y.idx, d)))
            .collect::<Vec<_>>();
        Some(first.tape.push(v, Op::Dot, parents))
    }

    fn dot_const(a: &[Self], c: &[T]) -> Option<Self> {
        if a.len() != c.len() {
            return None;
        }
        let first = a.first()?;
        let v = a.iter().zip(c).fold(T::zero(), |acc, (x, &w)| acc + x.data() * w);
        Some(first.tape.push(v, Op::Dot, a.iter().zip(c).map(|(x, &w)| (x.idx, w))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let tape = Tape::<f64>::new();
        let x = tape.var(2.0);
        let y = tape.var(3.0);
        let z = x * y;
        z.backward();
        assert_eq!(x.grad(), 3.0);
        assert_eq!(y.grad(), 2.0);
        assert_eq!(tape.op(z), Op::Mul);
    }

    #[test]
    fn logistic_slope_at_origin() {
        let tape = Tape::<f64>::new();
        let x = tape.var(0.0);
        x.logistic().backward();
        assert_eq!(x.grad(), 0.25);
    }

    #[test]
    fn max_const_flat_branch() {
        let tape = Tape::<f64>::new();
        let x = tape.var(0.1);
        let y = x.max_const(0.2);
        y.backward();
        assert_eq!(y.data(), 0.2);
        assert_eq!(x.grad(), 0.0);

        let x2 = tape.var(0.3);
        x2.max_const(0.2).backward();
        assert_eq!(x2.grad(), 1.0);
    }

    #[test]
    fn exp_ln_identity() {
        let tape = Tape::<f64>::new();
        let x = tape.var(3.0);
        let y = x.ln().unwrap().exp();
        y.backward();
        assert!((y.data() - 3.0).abs() < 1e-15);
        assert!((x.grad() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ln_domain_error() {
        let tape = Tape::<f64>::new();
        assert_eq!(tape.var(0.0).ln().unwrap_err(), DomainError::NonPositiveLog(0.0));
        assert!(tape.var(-2.0).ln().is_err());
    }

    #[test]
    fn mean_of_copies_has_unit_gradient() {
        let tape = Tape::<f64>::new();
        let x = tape.var(1.7);
        let copies = vec![x; 7];
        let m = Real::mean(&copies).unwrap();
        m.backward();
        assert!((m.data() - 1.7).abs() < 1e-15);
        assert!((x.grad() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gradients_accumulate_until_zeroed() {
        let tape = Tape::<f64>::new();
        let x = tape.var(2.0);
        let y = x * x;
        y.backward();
        y.backward();
        assert_eq!(x.grad(), 8.0);
        tape.zero_grad();
        assert_eq!(x.grad(), 0.0);
        y.backward();
        assert_eq!(x.grad(), 4.0);
    }

    #[test]
    fn reused_node_sums_contributions() {
        // f = (x + 1) * x  ->  f' = 2x + 1
        let tape = Tape::<f64>::new();
        let x = tape.var(4.0);
        let f = (x + 1.0) * x;
        f.backward();
        assert_eq!(x.grad(), 9.0);
    }

    #[test]
    fn dot_and_dot_const_partials() {
        let tape = Tape::<f64>::new();
        let a = tape.vars(&[1.0, 2.0, 3.0]);
        let b = tape.vars(&[4.0, 5.0, 6.0]);
        let d = Real::dot(&a, &b).unwrap();
        assert_eq!(d.data(), 32.0);
        d.backward();
        assert_eq!(a[1].grad(), 5.0);
        assert_eq!(b[2].grad(), 3.0);

        tape.zero_grad();
        let dc = Real::dot_const(&a, &[0.5, -1.0, 2.0]).unwrap();
        dc.backward();
        assert_eq!(dc.data(), 0.5 - 2.0 + 6.0);
        assert_eq!(a[0].grad(), 0.5);
        assert_eq!(a[1].grad(), -1.0);
        assert!(Real::dot(&a, &b[..2]).is_none());
        assert!(<Var<f64> as Real>::sum(&[]).is_none());
    }

    #[test]
    fn clamp_and_abs_subgradients() {
        let tape = Tape::<f64>::new();
        let x = tape.var(-0.5);
        let c = x.clamp_const(0.0, 1.0);
        let a = x.abs();
        c.backward();
        assert_eq!(x.grad(), 0.0);
        tape.zero_grad();
        a.backward();
        assert_eq!(x.grad(), -1.0);
        tape.zero_grad();
        tape.var(0.0).abs().backward();
    }

    #[test]
    fn truncate_releases_nodes() {
        let mut tape = Tape::<f64>::new();
        let base = tape.checkpoint();
        {
            let x = tape.var(1.0);
            let y = (x * 2.0).exp() + x;
            y.backward();
            assert!(tape.len() >= 4);
        }
        tape.truncate(base);
        assert_eq!(tape.len(), 0);
        assert!(tape.is_empty());

        let keep = tape.var(5.0).data();
        let cp = tape.checkpoint();
        let _ = tape.var(1.0) * 3.0;
        tape.truncate(cp);
        assert_eq!(tape.len(), 1);
        assert_eq!(keep, 5.0);
        tape.clear();
        assert_eq!(tape.len(), 0);
    }

    #[test]
    fn division_partials() {
        let tape = Tape::<f64>::new();
        let a = tape.var(3.0);
        let b = tape.var(2.0);
        (a / b).backward();
        assert_eq!(a.grad(), 0.5);
        assert_eq!(b.grad(), -0.75);
    }
}
