//! Reverse-mode differentiation over vector-valued nodes.
//!
//! Every operation appends a node holding its forward value. [`Tape::backward`]
//! walks the nodes in exact reverse order of creation, accumulating adjoints.
//! Shape mismatches inside the tape are programming errors and panic; the
//! public cell and model APIs validate dimensions before touching the tape.

use super::tensor::{floor_prob, softmax_unchecked, Real, Tensor, PROB_FLOOR};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Affine { w: usize, x: usize, b: Option<usize> },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    AddScalar(usize),
    OneMinus(usize),
    Min(usize, usize),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Sin(usize),
    Binarize { a: usize, straight_through: bool },
    Sum(usize),
    Mean(usize),
    Abs(usize),
    Concat(Vec<usize>),
    Softmax(usize),
    CrossEntropy { probs: usize, label: usize },
    Gate { p: usize },
    ScaleBy { x: usize, s: usize },
    BernoulliLogProb { p: usize, actions: Vec<bool>, mask: Vec<bool>, clamp: T },
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Recorded computation for one forward pass.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<T> {
    adj: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Adjoint of `v`, or `None` if nothing flowed into it (an all-zero adjoint).
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.adj.get(v.0).and_then(|a| a.as_deref())
    }

    /// Adjoint of `v` as a tensor of the given shape, zero-filled when unused.
    pub fn to_tensor(&self, v: Var, shape: &[usize]) -> Tensor<T> {
        match self.get(v) {
            Some(a) => Tensor::new(shape.to_vec(), a.to_vec()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }
}

fn slot<T: Real>(adj: &mut [Option<Vec<T>>], idx: usize, len: usize) -> &mut Vec<T> {
    adj[idx].get_or_insert_with(|| vec![T::zero(); len])
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value.item()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, i: usize) -> bool {
        self.nodes[i].needs_grad
    }

    fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    /// A differentiable leaf (a parameter).
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives an adjoint.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn unary(&mut self, a: Var, value: Vec<T>, op: Op<T>) -> Var {
        let shape = self.nodes[a.0].value.shape().to_vec();
        let needs = self.needs(a.0);
        self.push(Tensor::new(shape, value).expect("unary shape"), op, needs)
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Var {
        let (da, db) = (self.data(a), self.data(b));
        assert_eq!(da.len(), db.len(), "elementwise operands differ in length");
        let out: Vec<T> = da.iter().zip(db).map(|(&x, &y)| f(x, y)).collect();
        let needs = self.needs(a.0) || self.needs(b.0);
        let shape = self.nodes[a.0].value.shape().to_vec();
        self.push(Tensor::new(shape, out).expect("binary shape"), op, needs)
    }

    /// `w · x (+ b)` for a `[rows, cols]` matrix and a `cols` vector.
    pub fn affine(&mut self, w: Var, x: Var, b: Option<Var>) -> Var {
        let wt = &self.nodes[w.0].value;
        assert_eq!(wt.shape().len(), 2, "affine weight must be a matrix");
        let (rows, cols) = (wt.shape()[0], wt.shape()[1]);
        let xs = self.data(x);
        assert_eq!(xs.len(), cols, "affine input length");
        let wd = wt.data();
        let mut out = vec![T::zero(); rows];
        for (r, o) in out.iter_mut().enumerate() {
            let row = &wd[r * cols..(r + 1) * cols];
            *o = row.iter().zip(xs).fold(T::zero(), |acc, (&a, &c)| acc + a * c);
        }
        if let Some(b) = b {
            let bs = self.data(b);
            assert_eq!(bs.len(), rows, "affine bias length");
            for (o, &bv) in out.iter_mut().zip(bs) {
                *o = *o + bv;
            }
        }
        let needs = self.needs(w.0) || self.needs(x.0) || b.is_some_and(|b| self.needs(b.0));
        self.push(
            Tensor::vector(out),
            Op::Affine { w: w.0, x: x.0, b: b.map(|b| b.0) },
            needs,
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    /// Elementwise minimum; ties route the adjoint to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| if x <= y { x } else { y }, Op::Min(a.0, b.0))
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let v = self.data(a).iter().map(|&x| x * k).collect();
        self.unary(a, v, Op::Scale(a.0, k))
    }

    pub fn add_scalar(&mut self, a: Var, k: T) -> Var {
        let v = self.data(a).iter().map(|&x| x + k).collect();
        self.unary(a, v, Op::AddScalar(a.0))
    }

    /// `1 - a`.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let v = self.data(a).iter().map(|&x| T::one() - x).collect();
        self.unary(a, v, Op::OneMinus(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.data(a).iter().map(|&x| sigmoid(x)).collect();
        self.unary(a, v, Op::Sigmoid(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.data(a).iter().map(|&x| x.tanh()).collect();
        self.unary(a, v, Op::Tanh(a.0))
    }

    /// `max(x, 0)`, propagating NaN.
    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.data(a).iter().map(|&x| if x < T::zero() { T::zero() } else { x }).collect();
        self.unary(a, v, Op::Relu(a.0))
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let v = self.data(a).iter().map(|&x| x.sin()).collect();
        self.unary(a, v, Op::Sin(a.0))
    }

    /// Step function `v >= 0.5`. With `straight_through` the backward pass
    /// copies the adjoint unchanged; otherwise the (almost everywhere true)
    /// derivative zero is used.
    pub fn binarize(&mut self, a: Var, straight_through: bool) -> Var {
        let half = T::from_f64(0.5);
        let v = self
            .data(a)
            .iter()
            .map(|&x| if x >= half { T::one() } else { T::zero() })
            .collect();
        let shape = self.nodes[a.0].value.shape().to_vec();
        let needs = straight_through && self.needs(a.0);
        self.push(
            Tensor::new(shape, v).expect("binarize shape"),
            Op::Binarize { a: a.0, straight_through },
            needs,
        )
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: T = self.data(a).iter().copied().sum();
        let needs = self.needs(a.0);
        self.push(Tensor::scalar(s), Op::Sum(a.0), needs)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let d = self.data(a);
        assert!(!d.is_empty(), "mean of empty node");
        let s: T = d.iter().copied().sum::<T>() / T::from_f64(d.len() as f64);
        let needs = self.needs(a.0);
        self.push(Tensor::scalar(s), Op::Mean(a.0), needs)
    }

    /// `|a|` with subgradient 0 at the kink.
    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.data(a).iter().map(|&x| x.abs()).collect();
        self.unary(a, v, Op::Abs(a.0))
    }

    /// Concatenates nodes into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut out = Vec::new();
        let mut needs = false;
        for p in parts {
            out.extend_from_slice(self.data(*p));
            needs |= self.needs(p.0);
        }
        self.push(Tensor::vector(out), Op::Concat(parts.iter().map(|p| p.0).collect()), needs)
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let v = softmax_unchecked(self.data(a));
        self.unary(a, v, Op::Softmax(a.0))
    }

    /// `-ln(max(probs[label], 1e-12))`; the adjoint is zero where the floor is active.
    pub fn cross_entropy(&mut self, probs: Var, label: usize) -> Var {
        let p = floor_prob(self.data(probs)[label]);
        let needs = self.needs(probs.0);
        self.push(Tensor::scalar(-p.ln()), Op::CrossEntropy { probs: probs.0, label }, needs)
    }

    /// Straight-through gate on a scalar probability: forward value
    /// `1 + (p - anchor)`, adjoint copied to `p`. Passing the current value of
    /// `p` as the anchor makes the forward value exactly one.
    pub fn gate(&mut self, p: Var, anchor: T) -> Var {
        let pv = self.scalar(p);
        let needs = self.needs(p.0);
        self.push(Tensor::scalar(T::one() + (pv - anchor)), Op::Gate { p: p.0 }, needs)
    }

    /// Vector `x` times scalar node `s`.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Var {
        let k = self.scalar(s);
        let v = self.data(x).iter().map(|&e| e * k).collect();
        let needs = self.needs(x.0) || self.needs(s.0);
        let shape = self.nodes[x.0].value.shape().to_vec();
        self.push(Tensor::new(shape, v).expect("scale_by shape"), Op::ScaleBy { x: x.0, s: s.0 }, needs)
    }

    /// `Σ_{i: mask_i} ln(p_i Y_i + (1 - p_i)(1 - Y_i))` with `p` clamped to
    /// `[clamp, 1 - clamp]`.
    pub fn bernoulli_log_prob(&mut self, p: Var, actions: &[bool], mask: &[bool], clamp: T) -> Var {
        let pd = self.data(p);
        assert_eq!(pd.len(), actions.len(), "action count");
        assert_eq!(pd.len(), mask.len(), "mask length");
        let hi = T::one() - clamp;
        let mut total = T::zero();
        for ((&pi, &y), &m) in pd.iter().zip(actions).zip(mask) {
            if m {
                let pc = pi.max(clamp).min(hi);
                total = total + if y { pc.ln() } else { (T::one() - pc).ln() };
            }
        }
        let needs = self.needs(p.0);
        self.push(
            Tensor::scalar(total),
            Op::BernoulliLogProb { p: p.0, actions: actions.to_vec(), mask: mask.to_vec(), clamp },
            needs,
        )
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        self.backward_with(loss, |_| {})
    }

    /// Like [`Tape::backward`], reporting each visited node in visit order.
    pub fn backward_with(&self, loss: Var, mut visit: impl FnMut(Var)) -> Result<Gradients<T>> {
        let root = &self.nodes[loss.0];
        if root.value.len() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut adj: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            visit(Var(i));
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            let out = node.value.data();
            match &node.op {
                Op::Leaf => {
                    adj[i] = Some(g);
                }
                Op::Affine { w, x, b } => {
                    let wt = &self.nodes[*w].value;
                    let cols = wt.shape()[1];
                    let xd = self.nodes[*x].value.data();
                    if self.needs(*w) {
                        let dw = slot(&mut adj, *w, wt.len());
                        for (r, &gr) in g.iter().enumerate() {
                            if gr == T::zero() {
                                continue;
                            }
                            let row = &mut dw[r * cols..(r + 1) * cols];
                            for (d, &xv) in row.iter_mut().zip(xd) {
                                *d = *d + gr * xv;
                            }
                        }
                    }
                    if self.needs(*x) {
                        let wd = wt.data();
                        let dx = slot(&mut adj, *x, cols);
                        for (r, &gr) in g.iter().enumerate() {
                            if gr == T::zero() {
                                continue;
                            }
                            let row = &wd[r * cols..(r + 1) * cols];
                            for (d, &wv) in dx.iter_mut().zip(row) {
                                *d = *d + gr * wv;
                            }
                        }
                    }
                    if let Some(b) = b {
                        if self.needs(*b) {
                            add_into(slot(&mut adj, *b, g.len()), &g);
                        }
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        add_into(slot(&mut adj, *a, g.len()), &g);
                    }
                    if self.needs(*b) {
                        add_into(slot(&mut adj, *b, g.len()), &g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.needs(*a) {
                        add_into(slot(&mut adj, *a, g.len()), &g);
                    }
                    if self.needs(*b) {
                        let db = slot(&mut adj, *b, g.len());
                        for (d, &gv) in db.iter_mut().zip(&g) {
                            *d = *d - gv;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.nodes[*a].value.data(), self.nodes[*b].value.data());
                    if self.needs(*a) {
                        let da = slot(&mut adj, *a, g.len());
                        for ((d, &gv), &o) in da.iter_mut().zip(&g).zip(bv) {
                            *d = *d + gv * o;
                        }
                    }
                    if self.needs(*b) {
                        let db = slot(&mut adj, *b, g.len());
                        for ((d, &gv), &o) in db.iter_mut().zip(&g).zip(av) {
                            *d = *d + gv * o;
                        }
                    }
                }
                Op::Min(a, b) => {
                    let (av, bv) = (self.nodes[*a].value.data(), self.nodes[*b].value.data());
                    if self.needs(*a) {
                        let da = slot(&mut adj, *a, g.len());
                        for (k, d) in da.iter_mut().enumerate() {
                            if av[k] <= bv[k] {
                                *d = *d + g[k];
                            }
                        }
                    }
                    if self.needs(*b) {
                        let db = slot(&mut adj, *b, g.len());
                        for (k, d) in db.iter_mut().enumerate() {
                            if av[k] > bv[k] {
                                *d = *d + g[k];
                            }
                        }
                    }
                }
                Op::Scale(a, k) => {
                    let da = slot(&mut adj, *a, g.len());
                    for (d, &gv) in da.iter_mut().zip(&g) {
                        *d = *d + gv * *k;
                    }
                }
                Op::AddScalar(a) => add_into(slot(&mut adj, *a, g.len()), &g),
                Op::OneMinus(a) => {
                    let da = slot(&mut adj, *a, g.len());
                    for (d, &gv) in da.iter_mut().zip(&g) {
                        *d = *d - gv;
                    }
                }
                Op::Sigmoid(a) => {
                    let da = slot(&mut adj, *a, g.len());
                    for ((d, &gv), &y) in da.iter_mut().zip(&g).zip(out) {
                        *d = *d + gv * y * (T::one() - y);
                    }
                }
                Op::Tanh(a) => {
                    let da = slot(&mut adj, *a, g.len());
                    for ((d, &gv), &y) in da.iter_mut().zip(&g).zip(out) {
                        *d = *d + gv * (T::one() - y * y);
                    }
                }
                Op::Relu(a) => {
                    let da = slot(&mut adj, *a, g.len());
                    for ((d, &gv), &y) in da.iter_mut().zip(&g).zip(out) {
                        if y > T::zero() {
                            *d = *d + gv;
                        }
                    }
                }
                Op::Sin(a) => {
                    let av = self.nodes[*a].value.data();
                    let da = slot(&mut adj, *a, g.len());
                    for ((d, &gv), &x) in da.iter_mut().zip(&g).zip(av) {
                        *d = *d + gv * x.cos();
                    }
                }
                Op::Binarize { a, straight_through } => {
                    if *straight_through {
                        add_into(slot(&mut adj, *a, g.len()), &g);
                    }
                }
                Op::Sum(a) => {
                    let n = self.nodes[*a].value.len();
                    let da = slot(&mut adj, *a, n);
                    for d in da.iter_mut() {
                        *d = *d + g[0];
                    }
                }
                Op::Mean(a) => {
                    let n = self.nodes[*a].value.len();
                    let share = g[0] / T::from_f64(n as f64);
                    let da = slot(&mut adj, *a, n);
                    for d in da.iter_mut() {
                        *d = *d + share;
                    }
                }
                Op::Abs(a) => {
                    let av = self.nodes[*a].value.data();
                    let da = slot(&mut adj, *a, g.len());
                    for ((d, &gv), &x) in da.iter_mut().zip(&g).zip(av) {
                        if x > T::zero() {
                            *d = *d + gv;
                        } else if x < T::zero() {
                            *d = *d - gv;
                        }
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.nodes[p].value.len();
                        if self.needs(p) {
                            add_into(slot(&mut adj, p, n), &g[offset..offset + n]);
                        }
                        offset += n;
                    }
                }
                Op::Softmax(a) => {
                    let dot = g.iter().zip(out).fold(T::zero(), |acc, (&gv, &y)| acc + gv * y);
                    let da = slot(&mut adj, *a, g.len());
                    for ((d, &gv), &y) in da.iter_mut().zip(&g).zip(out) {
                        *d = *d + y * (gv - dot);
                    }
                }
                Op::CrossEntropy { probs, label } => {
                    let pv = self.nodes[*probs].value.data();
                    let n = pv.len();
                    let p = pv[*label];
                    if p > T::from_f64(PROB_FLOOR) {
                        let dp = slot(&mut adj, *probs, n);
                        dp[*label] = dp[*label] - g[0] / p;
                    }
                }
                Op::Gate { p } => add_into(slot(&mut adj, *p, 1), &g),
                Op::ScaleBy { x, s } => {
                    let k = self.nodes[*s].value.item();
                    if self.needs(*x) {
                        let dx = slot(&mut adj, *x, g.len());
                        for (d, &gv) in dx.iter_mut().zip(&g) {
                            *d = *d + gv * k;
                        }
                    }
                    if self.needs(*s) {
                        let xv = self.nodes[*x].value.data();
                        let ds = g.iter().zip(xv).fold(T::zero(), |acc, (&gv, &e)| acc + gv * e);
                        let d = slot(&mut adj, *s, 1);
                        d[0] = d[0] + ds;
                    }
                }
                Op::BernoulliLogProb { p, actions, mask, clamp } => {
                    let pv = self.nodes[*p].value.data();
                    let hi = T::one() - *clamp;
                    let dp = slot(&mut adj, *p, pv.len());
                    for (k, d) in dp.iter_mut().enumerate() {
                        let pi = pv[k];
                        if !mask[k] || pi < *clamp || pi > hi {
                            continue;
                        }
                        let local = if actions[k] { T::one() / pi } else { -T::one() / (T::one() - pi) };
                        *d = *d + g[0] * local;
                    }
                }
            }
        }
        Ok(Gradients { adj })
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_propagates_nan() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::vector(vec![-1.0, f64::NAN, 2.0]));
        let r = tape.relu(a);
        let v = tape.value(r).data();
        assert_eq!(v[0], 0.0);
        assert!(v[1].is_nan());
        assert_eq!(v[2], 2.0);
    }

    #[test]
    fn backward_visits_in_reverse_creation_order() {
        let mut tape = Tape::<f64>::new();
        let a = tape.param(Tensor::vector(vec![1.0, 2.0]));
        let b = tape.param(Tensor::vector(vec![3.0, 4.0]));
        let c = tape.mul(a, b);
        let d = tape.sigmoid(c);
        let loss = tape.sum(d);
        let mut order = Vec::new();
        tape.backward_with(loss, |v| order.push(v.index())).unwrap();
        assert_eq!(order, vec![4, 3, 2, 1, 0]);
    }

    #[test]
    fn unused_node_has_zero_adjoint() {
        let mut tape = Tape::<f64>::new();
        let a = tape.param(Tensor::vector(vec![1.0, 2.0]));
        let unused = tape.param(Tensor::vector(vec![5.0]));
        let loss = tape.sum(a);
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(unused).is_none());
        assert_eq!(grads.to_tensor(unused, &[1]).data(), &[0.0]);
        assert_eq!(grads.get(a).unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::<f64>::new();
        let a = tape.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(tape.backward(a).is_err());
    }

    #[test]
    fn affine_gradients() {
        let mut tape = Tape::<f64>::new();
        let w = tape.param(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let x = tape.param(Tensor::vector(vec![1.0, -1.0, 2.0]));
        let b = tape.param(Tensor::vector(vec![0.5, -0.5]));
        let y = tape.affine(w, x, Some(b));
        assert_eq!(tape.value(y).data(), &[5.5, 10.5]);
        let loss = tape.sum(y);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap(), &[1.0, -1.0, 2.0, 1.0, -1.0, 2.0]);
        assert_eq!(g.get(x).unwrap(), &[5.0, 7.0, 9.0]);
        assert_eq!(g.get(b).unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn straight_through_binarize_passes_adjoint() {
        let mut tape = Tape::<f64>::new();
        let a = tape.param(Tensor::vector(vec![0.49, 0.5]));
        let b = tape.binarize(a, true);
        assert_eq!(tape.value(b).data(), &[0.0, 1.0]);
        let s = tape.scale(b, 0.7);
        let loss = tape.sum(s);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(a).unwrap(), &[0.7, 0.7]);

        let mut tape = Tape::<f64>::new();
        let a = tape.param(Tensor::vector(vec![0.8]));
        let b = tape.binarize(a, false);
        let loss = tape.sum(b);
        assert!(tape.backward(loss).unwrap().get(a).is_none());
    }

    #[test]
    fn gate_forward_is_exactly_one() {
        let mut tape = Tape::<f32>::new();
        let p = tape.param(Tensor::scalar(0.731_f32));
        let g = tape.gate(p, 0.731);
        assert_eq!(tape.scalar(g), 1.0);
        let x = tape.constant(Tensor::vector(vec![0.3, -7.25, 1e-7]));
        let y = tape.scale_by(x, g);
        assert_eq!(tape.value(y).data(), tape.value(x).data());
    }

    #[test]
    fn abs_subgradient_is_zero_at_kink() {
        let mut tape = Tape::<f64>::new();
        let a = tape.param(Tensor::vector(vec![0.0, -2.0, 3.0]));
        let b = tape.abs(a);
        let loss = tape.sum(b);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(a).unwrap(), &[0.0, -1.0, 1.0]);
    }
}
