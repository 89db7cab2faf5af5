//! Scalar reverse-mode automatic differentiation.
//!
//! Network code is written once against the [`Real`] trait and instantiated
//! either with plain `f64` (inference, finite differences) or with [`Var`]
//! (recorded on a [`Tape`] for exact parameter gradients).
//!
//! Each tape node stores the indices of its parents together with the local
//! partial derivatives, so the backward sweep is a single reverse pass over
//! the node list. Reductions such as dot products are recorded as one n-ary
//! node instead of a chain of binary adds.

use std::cell::RefCell;
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar type the network is generic over.
pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(v: f64) -> Self;
    fn val(&self) -> f64;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn cos(self) -> Self;

    /// `x * sigmoid(x)`.
    fn swish(self) -> Self;

    /// Euclidean norm with a zero subgradient at the origin.
    fn norm(xs: &[Self]) -> Self;

    /// `sum_k a_k * b_k`.
    fn dot(a: &[Self], b: &[Self]) -> Self;

    /// `sum_k w_k * x_k` with constant weights.
    fn lin(x: &[Self], w: &[f64]) -> Self;

    /// `sum_k c_k * a[ia_k] * b[ib_k]` over `(ia, ib, c)` triples.
    fn bilinear(a: &[Self], b: &[Self], terms: &[(u32, u32, f64)]) -> Self;

    fn sum(xs: &[Self]) -> Self {
        let mut acc = Self::cst(0.0);
        for &x in xs {
            acc = acc + x;
        }
        acc
    }

    fn zero() -> Self {
        Self::cst(0.0)
    }

    fn recip(self) -> Self {
        Self::cst(1.0) / self
    }

    fn square(self) -> Self {
        self * self
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn val(&self) -> f64 {
        *self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
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
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn swish(self) -> Self {
        self * sigmoid(self)
    }
    fn norm(xs: &[Self]) -> Self {
        xs.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
    #[inline]
    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let mut acc = 0.0;
        for (x, y) in a.iter().zip(b) {
            acc += x * y;
        }
        acc
    }
    #[inline]
    fn lin(x: &[Self], w: &[f64]) -> Self {
        Self::dot(x, w)
    }
    fn bilinear(a: &[Self], b: &[Self], terms: &[(u32, u32, f64)]) -> Self {
        let mut acc = 0.0;
        for &(i, j, c) in terms {
            acc += c * a[i as usize] * b[j as usize];
        }
        acc
    }
    fn sum(xs: &[Self]) -> Self {
        xs.iter().sum()
    }
}

#[derive(Clone, Copy, Debug)]
struct Node {
    start: u32,
    end: u32,
}

/// Recording of a computation for one reverse sweep.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    edges: RefCell<Vec<(u32, f64)>>,
}

const CONST: u32 = u32::MAX;

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

    /// New independent variable.
    pub fn var(&self, v: f64) -> Var<'_> {
        let idx = self.push(std::iter::empty());
        Var {
            tape: Some(self),
            idx,
            v,
        }
    }

    fn push(&self, parents: impl IntoIterator<Item = (u32, f64)>) -> u32 {
        let mut edges = self.edges.borrow_mut();
        let start = edges.len() as u32;
        edges.extend(parents.into_iter().filter(|&(p, _)| p != CONST));
        let end = edges.len() as u32;
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len();
        assert!(idx < CONST as usize, "tape overflow");
        nodes.push(Node { start, end });
        idx as u32
    }

    /// Adjoints of every node with respect to `output`.
    pub fn gradient(&self, output: Var<'_>) -> Gradient {
        let nodes = self.nodes.borrow();
        let edges = self.edges.borrow();
        let mut adj = vec![0.0; nodes.len()];
        if output.idx != CONST {
            adj[output.idx as usize] = 1.0;
            for i in (0..=output.idx as usize).rev() {
                let a = adj[i];
                if a == 0.0 {
                    continue;
                }
                let node = nodes[i];
                for &(p, d) in &edges[node.start as usize..node.end as usize] {
                    adj[p as usize] += a * d;
                }
            }
        }
        Gradient { adj }
    }
}

/// Result of a reverse sweep.
pub struct Gradient {
    adj: Vec<f64>,
}

impl Gradient {
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        if v.idx == CONST {
            0.0
        } else {
            self.adj[v.idx as usize]
        }
    }
}

/// A scalar that is either a constant or a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    idx: u32,
    v: f64,
}

impl Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({}, #{})", self.v, self.idx)
    }
}

impl<'t> Var<'t> {
    pub fn constant(v: f64) -> Self {
        Var {
            tape: None,
            idx: CONST,
            v,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.idx == CONST
    }

    fn unary(self, v: f64, d: f64) -> Self {
        match self.tape {
            Some(t) => Var {
                tape: Some(t),
                idx: t.push([(self.idx, d)]),
                v,
            },
            None => Var::constant(v),
        }
    }

    fn binary(self, other: Self, v: f64, da: f64, db: f64) -> Self {
        match self.tape.or(other.tape) {
            Some(t) => Var {
                tape: Some(t),
                idx: t.push([(self.idx, da), (other.idx, db)]),
                v,
            },
            None => Var::constant(v),
        }
    }

    fn nary(tape: Option<&'t Tape>, v: f64, parents: impl IntoIterator<Item = (u32, f64)>) -> Self {
        match tape {
            Some(t) => Var {
                tape: Some(t),
                idx: t.push(parents),
                v,
            },
            None => Var::constant(v),
        }
    }
}

fn find_tape<'t>(xs: &[Var<'t>]) -> Option<&'t Tape> {
    xs.iter().find_map(|x| x.tape)
}

impl Add for Var<'_> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        self.binary(o, self.v + o.v, 1.0, 1.0)
    }
}
impl Sub for Var<'_> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self.binary(o, self.v - o.v, 1.0, -1.0)
    }
}
impl Mul for Var<'_> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        self.binary(o, self.v * o.v, o.v, self.v)
    }
}
impl Div for Var<'_> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.v / o.v;
        self.binary(o, q, 1.0 / o.v, -q / o.v)
    }
}
impl Neg for Var<'_> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(-self.v, -1.0)
    }
}
impl Add<f64> for Var<'_> {
    type Output = Self;
    fn add(self, c: f64) -> Self {
        self.unary(self.v + c, 1.0)
    }
}
impl Sub<f64> for Var<'_> {
    type Output = Self;
    fn sub(self, c: f64) -> Self {
        self.unary(self.v - c, 1.0)
    }
}
impl Mul<f64> for Var<'_> {
    type Output = Self;
    fn mul(self, c: f64) -> Self {
        self.unary(self.v * c, c)
    }
}
impl Div<f64> for Var<'_> {
    type Output = Self;
    fn div(self, c: f64) -> Self {
        self.unary(self.v / c, 1.0 / c)
    }
}

impl Real for Var<'_> {
    fn cst(v: f64) -> Self {
        Var::constant(v)
    }
    fn val(&self) -> f64 {
        self.v
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.unary(s, 0.5 / s)
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.unary(e, e)
    }
    fn ln(self) -> Self {
        self.unary(self.v.ln(), 1.0 / self.v)
    }
    fn cos(self) -> Self {
        self.unary(self.v.cos(), -self.v.sin())
    }
    fn swish(self) -> Self {
        let s = sigmoid(self.v);
        self.unary(self.v * s, s + self.v * s * (1.0 - s))
    }
    fn norm(xs: &[Self]) -> Self {
        let n = xs.iter().map(|x| x.v * x.v).sum::<f64>().sqrt();
        let inv = if n > 0.0 { 1.0 / n } else { 0.0 };
        Var::nary(find_tape(xs), n, xs.iter().map(|x| (x.idx, x.v * inv)))
    }
    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let v = a.iter().zip(b).map(|(x, y)| x.v * y.v).sum();
        let tape = find_tape(a).or_else(|| find_tape(b));
        Var::nary(
            tape,
            v,
            a.iter()
                .zip(b)
                .flat_map(|(x, y)| [(x.idx, y.v), (y.idx, x.v)]),
        )
    }
    fn lin(x: &[Self], w: &[f64]) -> Self {
        debug_assert_eq!(x.len(), w.len());
        let v = x.iter().zip(w).map(|(x, w)| x.v * w).sum();
        Var::nary(find_tape(x), v, x.iter().zip(w).map(|(x, &w)| (x.idx, w)))
    }
    fn bilinear(a: &[Self], b: &[Self], terms: &[(u32, u32, f64)]) -> Self {
        let mut v = 0.0;
        let mut tape = None;
        for &(i, j, c) in terms {
            let (x, y) = (a[i as usize], b[j as usize]);
            v += c * x.v * y.v;
            tape = tape.or(x.tape).or(y.tape);
        }
        Var::nary(
            tape,
            v,
            terms.iter().flat_map(|&(i, j, c)| {
                let (x, y) = (a[i as usize], b[j as usize]);
                [(x.idx, c * y.v), (y.idx, c * x.v)]
            }),
        )
    }
    fn sum(xs: &[Self]) -> Self {
        let v = xs.iter().map(|x| x.v).sum();
        Var::nary(find_tape(xs), v, xs.iter().map(|x| (x.idx, 1.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], i: usize) -> f64 {
        let h = 1e-6;
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        (f(&xp) - f(&xm)) / (2.0 * h)
    }

    fn composite<R: Real>(x: &[R]) -> R {
        let a = x[0] * x[1] + x[2].exp() / (x[0] + 3.0);
        let b = R::dot(x, x).sqrt() + R::lin(x, &[0.5, -1.0, 2.0]).swish();
        let c = R::bilinear(x, x, &[(0, 1, 0.3), (2, 2, -1.5)]);
        let d = R::norm(&[x[0], x[2]]) + (x[1] * 2.0).cos() - (x[0].square() + 1.0).ln();
        a * b - c / (d + 4.0) + R::sum(x)
    }

    #[test]
    fn reverse_sweep_matches_finite_differences() {
        let x0 = [0.7, -0.4, 0.25];
        let tape = Tape::new();
        let xs: Vec<Var> = x0.iter().map(|&v| tape.var(v)).collect();
        let y = composite(&xs);
        assert!((y.val() - composite(&x0)).abs() < 1e-14);
        let g = tape.gradient(y);
        for i in 0..3 {
            let expected = fd(|x| composite(x), &x0, i);
            assert!((g.wrt(xs[i]) - expected).abs() < 1e-7, "component {i}");
        }
    }

    #[test]
    fn constants_stay_off_tape() {
        let tape = Tape::new();
        let a = Var::constant(2.0);
        let b = a * 3.0 + a.exp();
        assert!(b.is_constant());
        assert!(tape.is_empty());
    }

    #[test]
    fn norm_has_zero_gradient_at_origin() {
        let tape = Tape::new();
        let xs = [tape.var(0.0), tape.var(0.0)];
        let n = Var::norm(&xs);
        let g = tape.gradient(n);
        assert_eq!(n.val(), 0.0);
        assert_eq!(g.wrt(xs[0]), 0.0);
    }
}
