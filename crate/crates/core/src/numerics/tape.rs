//! Array-valued reverse-mode differentiation.
//!
//! A [`Tape`] records every operation of a forward pass together with its
//! value. [`Tape::gradients`] then sweeps the record backwards once and
//! returns the adjoint of each designated parameter leaf. Values are computed
//! eagerly, so the tape doubles as the forward evaluator; [`Tape::replay`]
//! re-executes the record from its leaves through the same kernels.
//!
//! Operations are vector/matrix granular rather than scalar granular, and the
//! hot kernels of the model (distance logits, log-softmax, the RK4 update) are
//! fused into single nodes. Domain kernels outside this module plug in through
//! [`CustomOp`].

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::sync::Arc;

use crate::error::{FancError, Result};
use crate::numerics::array::{logistic_scalar, RealArray};
use crate::numerics::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A differentiable kernel defined outside the tape.
///
/// `backward` must *add* the vector-Jacobian product into `input_adjoints`,
/// which are zero-initialised buffers shaped like the inputs.
pub trait CustomOp<T: Scalar>: Debug + Send + Sync {
    fn name(&self) -> &'static str;
    fn forward(&self, inputs: &[&RealArray<T>]) -> Result<RealArray<T>>;
    fn backward(
        &self,
        inputs: &[&RealArray<T>],
        output_adjoint: &[T],
        input_adjoints: &mut [Vec<T>],
    ) -> Result<()>;
}

#[derive(Clone, Debug)]
enum Op<T: Scalar> {
    Leaf,
    MatVec(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    /// `y + alpha * x`
    Axpy(Var, T, Var),
    /// `y + h/6 (k1 + 2 k2 + 2 k3 + k4)`
    Rk4Update { y: Var, k: [Var; 4], h: T },
    Logistic(Var),
    Tanh(Var),
    /// `g ⊙ a + (1 − g) ⊙ b`
    Lerp { gate: Var, a: Var, b: Var },
    Slice { src: Var, start: usize, len: usize },
    Concat(Var, Var),
    Row { table: Var, index: usize },
    /// `−‖q − row_i‖²` for every row of a matrix.
    NegSqDist { query: Var, table: Var },
    /// `x_t − logsumexp(x)`
    LogSoftmaxAt { logits: Var, target: usize },
    Sum(Vec<Var>),
    Custom { op: Arc<dyn CustomOp<T>>, inputs: Vec<Var> },
}

#[derive(Clone, Debug)]
struct Node<T: Scalar> {
    op: Op<T>,
    value: RealArray<T>,
}

/// Record of a forward computation.
#[derive(Clone, Debug, Default)]
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    params: Vec<(String, Var)>,
}

/// Adjoints of the parameter leaves of a tape, keyed by parameter name.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    by_name: BTreeMap<String, RealArray<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, name: &str) -> Option<&RealArray<T>> {
        self.by_name.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &RealArray<T>)> {
        self.by_name.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn all_finite(&self) -> bool {
        self.by_name.values().all(|g| g.all_finite())
    }

    /// Adds `other` into `self` entry by entry; both must cover the same names.
    pub fn accumulate(&mut self, other: &Gradients<T>) -> Result<()> {
        if self.by_name.len() != other.by_name.len() {
            return Err(FancError::contract("accumulate", "gradient sets differ"));
        }
        for (name, g) in &mut self.by_name {
            let o = other
                .by_name
                .get(name)
                .filter(|o| o.shape() == g.shape())
                .ok_or_else(|| FancError::contract("accumulate", format!("`{name}` missing or misshapen")))?;
            for (a, &b) in g.as_mut_slice().iter_mut().zip(o.as_slice()) {
                *a += b;
            }
        }
        Ok(())
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &RealArray<T> {
        &self.nodes[v.0].value
    }

    pub fn values(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.as_slice()
    }

    /// Value of a one-element node.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value.as_slice()[0]
    }

    /// Designated parameter leaf; its gradient is reported by name.
    pub fn param(&mut self, name: impl Into<String>, value: RealArray<T>) -> Var {
        let v = self.push_node(Op::Leaf, value);
        self.params.push((name.into(), v));
        v
    }

    /// Non-differentiated input.
    pub fn constant(&mut self, value: RealArray<T>) -> Var {
        self.push_node(Op::Leaf, value)
    }

    pub fn constant_vec(&mut self, value: Vec<T>) -> Var {
        self.constant(RealArray::vector(value))
    }

    pub fn zeros(&mut self, n: usize) -> Var {
        self.constant(RealArray::zeros(&[n]))
    }

    pub fn params(&self) -> &[(String, Var)] {
        &self.params
    }

    fn push_node(&mut self, op: Op<T>, value: RealArray<T>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, op: Op<T>) -> Result<Var> {
        let value = {
            let nodes = &self.nodes;
            eval_op(&op, |v: Var| &nodes[v.0].value)?
        };
        Ok(self.push_node(op, value))
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        self.record(Op::MatVec(w, x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Result<Var> {
        self.record(Op::Scale(a, factor))
    }

    pub fn axpy(&mut self, y: Var, alpha: T, x: Var) -> Result<Var> {
        self.record(Op::Axpy(y, alpha, x))
    }

    pub fn rk4_update(&mut self, y: Var, k: [Var; 4], h: T) -> Result<Var> {
        self.record(Op::Rk4Update { y, k, h })
    }

    pub fn logistic(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Logistic(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Tanh(a))
    }

    pub fn lerp(&mut self, gate: Var, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Lerp { gate, a, b })
    }

    pub fn slice(&mut self, src: Var, start: usize, len: usize) -> Result<Var> {
        self.record(Op::Slice { src, start, len })
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Concat(a, b))
    }

    pub fn row(&mut self, table: Var, index: usize) -> Result<Var> {
        self.record(Op::Row { table, index })
    }

    pub fn neg_sq_dist(&mut self, query: Var, table: Var) -> Result<Var> {
        self.record(Op::NegSqDist { query, table })
    }

    pub fn log_softmax_at(&mut self, logits: Var, target: usize) -> Result<Var> {
        self.record(Op::LogSoftmaxAt { logits, target })
    }

    pub fn sum(&mut self, terms: &[Var]) -> Result<Var> {
        self.record(Op::Sum(terms.to_vec()))
    }

    pub fn custom(&mut self, op: Arc<dyn CustomOp<T>>, inputs: &[Var]) -> Result<Var> {
        self.record(Op::Custom {
            op,
            inputs: inputs.to_vec(),
        })
    }

    /// Re-executes the record from its leaves and returns every node value.
    pub fn replay(&self) -> Result<Vec<RealArray<T>>> {
        self.replay_with(&[])
    }

    /// Like [`replay`](Self::replay) with some leaf values replaced.
    pub fn replay_with(&self, overrides: &[(Var, RealArray<T>)]) -> Result<Vec<RealArray<T>>> {
        let mut values: Vec<RealArray<T>> = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let value = match &node.op {
                Op::Leaf => overrides
                    .iter()
                    .find(|(v, _)| v.0 == i)
                    .map(|(_, a)| a.clone())
                    .unwrap_or_else(|| node.value.clone()),
                op => eval_op(op, |v: Var| &values[v.0])?,
            };
            values.push(value);
        }
        Ok(values)
    }

    /// Reverse sweep from a scalar node. Returns the adjoint of every
    /// parameter leaf (zeros for leaves the output does not depend on).
    pub fn gradients(&self, output: Var) -> Result<Gradients<T>> {
        let out_len = self.nodes[output.0].value.len();
        if out_len != 1 {
            return Err(FancError::contract(
                "reverse_gradients",
                format!("output must be a scalar, got {out_len} values"),
            ));
        }
        let mut adj: Vec<Vec<T>> = vec![Vec::new(); output.0 + 1];
        adj[output.0] = vec![T::one()];

        for i in (0..=output.0).rev() {
            if adj[i].is_empty() {
                continue;
            }
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let g = std::mem::take(&mut adj[i]);
            self.backprop(&node.op, &node.value, &g, &mut adj)?;
        }

        let by_name = self
            .params
            .iter()
            .map(|(name, v)| {
                let shape = self.nodes[v.0].value.shape();
                let grad = match adj.get(v.0) {
                    Some(a) if !a.is_empty() => RealArray::from_shape(shape, a.clone())?,
                    _ => RealArray::zeros(shape),
                };
                Ok((name.clone(), grad))
            })
            .collect::<Result<_>>()?;
        Ok(Gradients { by_name })
    }

    fn backprop(&self, op: &Op<T>, out: &RealArray<T>, g: &[T], adj: &mut [Vec<T>]) -> Result<()> {
        let val = |v: Var| self.nodes[v.0].value.as_slice();
        match op {
            Op::Leaf => {}
            Op::MatVec(w, x) => {
                let wa = &self.nodes[w.0].value;
                let (m, n) = (wa.rows(), wa.cols());
                let xv = val(*x);
                {
                    let gw = slot(adj, *w, m * n);
                    for r in 0..m {
                        for c in 0..n {
                            gw[r * n + c] += g[r] * xv[c];
                        }
                    }
                }
                let gx = slot(adj, *x, n);
                for r in 0..m {
                    let row = wa.row(r);
                    for c in 0..n {
                        gx[c] += row[c] * g[r];
                    }
                }
            }
            Op::Add(a, b) => {
                add_into(slot(adj, *a, g.len()), g, T::one());
                add_into(slot(adj, *b, g.len()), g, T::one());
            }
            Op::Sub(a, b) => {
                add_into(slot(adj, *a, g.len()), g, T::one());
                add_into(slot(adj, *b, g.len()), g, -T::one());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a).to_vec(), val(*b).to_vec());
                let ga = slot(adj, *a, g.len());
                for i in 0..g.len() {
                    ga[i] += g[i] * bv[i];
                }
                let gb = slot(adj, *b, g.len());
                for i in 0..g.len() {
                    gb[i] += g[i] * av[i];
                }
            }
            Op::Scale(a, f) => add_into(slot(adj, *a, g.len()), g, *f),
            Op::Axpy(y, alpha, x) => {
                add_into(slot(adj, *y, g.len()), g, T::one());
                add_into(slot(adj, *x, g.len()), g, *alpha);
            }
            Op::Rk4Update { y, k, h } => {
                let h6 = *h / T::lit(6.0);
                let two = T::lit(2.0);
                add_into(slot(adj, *y, g.len()), g, T::one());
                add_into(slot(adj, k[0], g.len()), g, h6);
                add_into(slot(adj, k[1], g.len()), g, two * h6);
                add_into(slot(adj, k[2], g.len()), g, two * h6);
                add_into(slot(adj, k[3], g.len()), g, h6);
            }
            Op::Logistic(a) => {
                let s = out.as_slice();
                let ga = slot(adj, *a, g.len());
                for i in 0..g.len() {
                    ga[i] += g[i] * s[i] * (T::one() - s[i]);
                }
            }
            Op::Tanh(a) => {
                let t = out.as_slice();
                let ga = slot(adj, *a, g.len());
                for i in 0..g.len() {
                    ga[i] += g[i] * (T::one() - t[i] * t[i]);
                }
            }
            Op::Lerp { gate, a, b } => {
                let (gv, av, bv) = (val(*gate).to_vec(), val(*a).to_vec(), val(*b).to_vec());
                let n = g.len();
                let gg = slot(adj, *gate, n);
                for i in 0..n {
                    gg[i] += g[i] * (av[i] - bv[i]);
                }
                let ga = slot(adj, *a, n);
                for i in 0..n {
                    ga[i] += g[i] * gv[i];
                }
                let gb = slot(adj, *b, n);
                for i in 0..n {
                    gb[i] += g[i] * (T::one() - gv[i]);
                }
            }
            Op::Slice { src, start, len } => {
                let n = self.nodes[src.0].value.len();
                let gs = slot(adj, *src, n);
                for i in 0..*len {
                    gs[start + i] += g[i];
                }
            }
            Op::Concat(a, b) => {
                let na = self.nodes[a.0].value.len();
                add_into(slot(adj, *a, na), &g[..na], T::one());
                add_into(slot(adj, *b, g.len() - na), &g[na..], T::one());
            }
            Op::Row { table, index } => {
                let t = &self.nodes[table.0].value;
                let c = t.cols();
                let gt = slot(adj, *table, t.len());
                for j in 0..c {
                    gt[index * c + j] += g[j];
                }
            }
            Op::NegSqDist { query, table } => {
                let t = &self.nodes[table.0].value;
                let q = val(*query).to_vec();
                let (n, d) = (t.rows(), t.cols());
                let mut gq = vec![T::zero(); d];
                {
                    let gt = slot(adj, *table, n * d);
                    let two = T::lit(2.0);
                    for i in 0..n {
                        let row = t.row(i);
                        for j in 0..d {
                            let diff = q[j] - row[j];
                            gq[j] -= two * g[i] * diff;
                            gt[i * d + j] += two * g[i] * diff;
                        }
                    }
                }
                add_into(slot(adj, *query, d), &gq, T::one());
            }
            Op::LogSoftmaxAt { logits, target } => {
                let x = val(*logits).to_vec();
                let lse = log_sum_exp(&x);
                let gx = slot(adj, *logits, x.len());
                for (j, xj) in x.iter().enumerate() {
                    let p = (*xj - lse).exp();
                    let ind = if j == *target { T::one() } else { T::zero() };
                    gx[j] += g[0] * (ind - p);
                }
            }
            Op::Sum(terms) => {
                for t in terms {
                    add_into(slot(adj, *t, g.len()), g, T::one());
                }
            }
            Op::Custom { op, inputs } => {
                let ins: Vec<&RealArray<T>> =
                    inputs.iter().map(|v| &self.nodes[v.0].value).collect();
                let mut bufs: Vec<Vec<T>> =
                    ins.iter().map(|a| vec![T::zero(); a.len()]).collect();
                op.backward(&ins, g, &mut bufs)?;
                for (v, buf) in inputs.iter().zip(&bufs) {
                    add_into(slot(adj, *v, buf.len()), buf, T::one());
                }
            }
        }
        Ok(())
    }
}

/// Exact gradients of the recorded computation with respect to every parameter leaf.
pub fn reverse_gradients<T: Scalar>(tape: &Tape<T>, output: Var) -> Result<Gradients<T>> {
    tape.gradients(output)
}

fn slot<T: Scalar>(adj: &mut [Vec<T>], v: Var, n: usize) -> &mut [T] {
    let a = &mut adj[v.0];
    if a.is_empty() {
        *a = vec![T::zero(); n];
    }
    a
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T], factor: T) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += factor * s;
    }
}

pub(crate) fn log_sum_exp<T: Scalar>(x: &[T]) -> T {
    let m = x.iter().copied().fold(T::neg_infinity(), T::max);
    let s = x.iter().fold(T::zero(), |acc, &v| acc + (v - m).exp());
    m + s.ln()
}

fn same_len<T: Scalar>(op: &'static str, a: &RealArray<T>, b: &RealArray<T>) -> Result<()> {
    if a.len() != b.len() {
        return Err(FancError::contract(
            op,
            format!("operand lengths differ: {} vs {}", a.len(), b.len()),
        ));
    }
    Ok(())
}

fn zip_map<T: Scalar>(a: &RealArray<T>, b: &RealArray<T>, f: impl Fn(T, T) -> T) -> RealArray<T> {
    RealArray::vector(
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(&x, &y)| f(x, y))
            .collect(),
    )
}

/// Single forward kernel shared by recording and replay.
fn eval_op<'a, T: Scalar>(
    op: &Op<T>,
    get: impl Fn(Var) -> &'a RealArray<T>,
) -> Result<RealArray<T>> {
    Ok(match op {
        Op::Leaf => unreachable!("leaves carry their own value"),
        Op::MatVec(w, x) => {
            RealArray::vector(crate::numerics::array::affine(get(*w), get(*x).as_slice())?)
        }
        Op::Add(a, b) => {
            same_len("add", get(*a), get(*b))?;
            zip_map(get(*a), get(*b), |x, y| x + y)
        }
        Op::Sub(a, b) => {
            same_len("sub", get(*a), get(*b))?;
            zip_map(get(*a), get(*b), |x, y| x - y)
        }
        Op::Mul(a, b) => {
            same_len("mul", get(*a), get(*b))?;
            zip_map(get(*a), get(*b), |x, y| x * y)
        }
        Op::Scale(a, f) => RealArray::vector(get(*a).as_slice().iter().map(|&x| x * *f).collect()),
        Op::Axpy(y, alpha, x) => {
            same_len("axpy", get(*y), get(*x))?;
            zip_map(get(*y), get(*x), |yv, xv| yv + *alpha * xv)
        }
        Op::Rk4Update { y, k, h } => {
            let yv = get(*y);
            for ki in k {
                same_len("rk4_update", yv, get(*ki))?;
            }
            let (k1, k2, k3, k4) = (
                get(k[0]).as_slice(),
                get(k[1]).as_slice(),
                get(k[2]).as_slice(),
                get(k[3]).as_slice(),
            );
            let h6 = *h / T::lit(6.0);
            let two = T::lit(2.0);
            RealArray::vector(
                yv.as_slice()
                    .iter()
                    .enumerate()
                    .map(|(i, &y0)| y0 + h6 * (k1[i] + two * k2[i] + two * k3[i] + k4[i]))
                    .collect(),
            )
        }
        Op::Logistic(a) => get(*a).map(logistic_scalar),
        Op::Tanh(a) => get(*a).map(|x| x.tanh()),
        Op::Lerp { gate, a, b } => {
            let (g, av, bv) = (get(*gate), get(*a), get(*b));
            same_len("lerp", g, av)?;
            same_len("lerp", g, bv)?;
            RealArray::vector(
                g.as_slice()
                    .iter()
                    .zip(av.as_slice())
                    .zip(bv.as_slice())
                    .map(|((&gi, &ai), &bi)| gi * ai + (T::one() - gi) * bi)
                    .collect(),
            )
        }
        Op::Slice { src, start, len } => {
            let s = get(*src).as_slice();
            if start + len > s.len() {
                return Err(FancError::contract(
                    "slice",
                    format!("range {start}..{} exceeds length {}", start + len, s.len()),
                ));
            }
            RealArray::vector(s[*start..start + len].to_vec())
        }
        Op::Concat(a, b) => {
            let mut v = get(*a).as_slice().to_vec();
            v.extend_from_slice(get(*b).as_slice());
            RealArray::vector(v)
        }
        Op::Row { table, index } => {
            let t = get(*table);
            if !t.is_matrix() || *index >= t.rows() {
                return Err(FancError::contract(
                    "row",
                    format!("row {index} out of range for {:?}", t.shape()),
                ));
            }
            RealArray::vector(t.row(*index).to_vec())
        }
        Op::NegSqDist { query, table } => {
            let (q, t) = (get(*query).as_slice(), get(*table));
            if !t.is_matrix() || t.cols() != q.len() {
                return Err(FancError::contract(
                    "neg_sq_dist",
                    format!("table {:?} vs query of length {}", t.shape(), q.len()),
                ));
            }
            RealArray::vector(
                (0..t.rows())
                    .map(|i| -crate::numerics::array::squared_distance(q, t.row(i)))
                    .collect(),
            )
        }
        Op::LogSoftmaxAt { logits, target } => {
            let x = get(*logits).as_slice();
            if *target >= x.len() {
                return Err(FancError::contract(
                    "log_softmax_at",
                    format!("target {target} out of range for {} logits", x.len()),
                ));
            }
            RealArray::vector(vec![x[*target] - log_sum_exp(x)])
        }
        Op::Sum(terms) => {
            let first = terms
                .first()
                .ok_or_else(|| FancError::contract("sum", "no terms"))?;
            let mut acc = get(*first).as_slice().to_vec();
            for t in &terms[1..] {
                let tv = get(*t);
                if tv.len() != acc.len() {
                    return Err(FancError::contract("sum", "terms differ in length"));
                }
                for (a, &x) in acc.iter_mut().zip(tv.as_slice()) {
                    *a += x;
                }
            }
            RealArray::vector(acc)
        }
        Op::Custom { op, inputs } => {
            let ins: Vec<&RealArray<T>> = inputs.iter().map(|v| get(*v)).collect();
            op.forward(&ins)?
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_has_gradient_six_at_three() {
        let mut t = Tape::<f64>::new();
        let x = t.param("x", RealArray::vector(vec![3.0]));
        let y = t.mul(x, x).unwrap();
        assert_eq!(t.scalar(y), 9.0);
        let g = t.gradients(y).unwrap();
        assert_eq!(g.get("x").unwrap().as_slice(), &[6.0]);
    }

    #[test]
    fn constant_output_has_zero_gradient() {
        let mut t = Tape::<f64>::new();
        let _x = t.param("x", RealArray::vector(vec![3.0, 1.0]));
        let c = t.constant_vec(vec![5.0]);
        let g = t.gradients(c).unwrap();
        assert_eq!(g.get("x").unwrap().as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn non_scalar_output_is_rejected() {
        let mut t = Tape::<f64>::new();
        let x = t.param("x", RealArray::vector(vec![1.0, 2.0]));
        assert!(matches!(
            t.gradients(x),
            Err(FancError::Contract { op: "reverse_gradients", .. })
        ));
    }

    #[test]
    fn matvec_gradient_is_outer_product() {
        let mut t = Tape::<f64>::new();
        let w = t.param("w", RealArray::matrix(2, 2, vec![1.0, 2.0, 0.0, 1.0]).unwrap());
        let x = t.param("x", RealArray::vector(vec![1.0, 1.0]));
        let y = t.matvec(w, x).unwrap();
        assert_eq!(t.values(y), &[3.0, 1.0]);
        // loss = y0 + 2 y1
        let y0 = t.slice(y, 0, 1).unwrap();
        let y1 = t.slice(y, 1, 1).unwrap();
        let l = t.axpy(y0, 2.0, y1).unwrap();
        let g = t.gradients(l).unwrap();
        assert_eq!(g.get("w").unwrap().as_slice(), &[1.0, 1.0, 2.0, 2.0]);
        assert_eq!(g.get("x").unwrap().as_slice(), &[1.0, 4.0]);
    }

    #[test]
    fn log_softmax_at_matches_direct_formula() {
        let mut t = Tape::<f64>::new();
        let x = t.param("x", RealArray::vector(vec![0.0, -1.0]));
        let l = t.log_softmax_at(x, 1).unwrap();
        let p1 = (-1.0f64).exp() / (1.0 + (-1.0f64).exp());
        assert!((t.scalar(l) - p1.ln()).abs() < 1e-15);
        let g = t.gradients(l).unwrap();
        let gx = g.get("x").unwrap().as_slice();
        assert!((gx[0] + (1.0 - p1)).abs() < 1e-15);
        assert!((gx[1] - (1.0 - p1)).abs() < 1e-15);
    }

    #[test]
    fn replay_is_bit_identical() {
        let mut t = Tape::<f64>::new();
        let w = t.param("w", RealArray::matrix(2, 3, vec![0.3, -1.1, 0.7, 2.0, 0.1, -0.4]).unwrap());
        let x = t.param("x", RealArray::vector(vec![0.9, -0.2, 0.5]));
        let h = t.matvec(w, x).unwrap();
        let s = t.logistic(h).unwrap();
        let th = t.tanh(h).unwrap();
        let m = t.lerp(s, th, h).unwrap();
        let table = t.constant(RealArray::matrix(3, 2, vec![0.0, 1.0, -1.0, 0.5, 2.0, 2.0]).unwrap());
        let logits = t.neg_sq_dist(m, table).unwrap();
        let _ = t.log_softmax_at(logits, 2).unwrap();
        let first = t.replay().unwrap();
        let second = t.replay().unwrap();
        for (i, (a, b)) in first.iter().zip(&second).enumerate() {
            let bits = |v: &RealArray<f64>| v.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
            assert_eq!(bits(a), bits(t.value(Var(i))));
        }
    }

    #[test]
    fn replay_with_override_recomputes_downstream() {
        let mut t = Tape::<f64>::new();
        let x = t.param("x", RealArray::vector(vec![2.0]));
        let y = t.mul(x, x).unwrap();
        let vals = t.replay_with(&[(x, RealArray::vector(vec![5.0]))]).unwrap();
        assert_eq!(vals[y.index()].as_slice(), &[25.0]);
    }
}
