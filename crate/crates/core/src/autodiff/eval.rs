use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::{Graph, NodeId, Op, VarId};
use crate::{Error, Result};

/// Values for the variables of one graph, indexed by [`VarId`].
#[derive(Clone, Debug, Default)]
pub struct Bindings {
    values: Vec<Option<Vec<f64>>>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    /// Binds `var`, reusing the existing allocation when one exists.
    pub fn set(&mut self, var: VarId, values: &[f64]) {
        if self.values.len() <= var.0 {
            self.values.resize(var.0 + 1, None);
        }
        match &mut self.values[var.0] {
            Some(v) => {
                v.clear();
                v.extend_from_slice(values);
            }
            slot => *slot = Some(values.to_vec()),
        }
    }

    pub fn with(mut self, var: VarId, values: &[f64]) -> Self {
        self.set(var, values);
        self
    }

    pub fn get(&self, var: VarId) -> Option<&[f64]> {
        self.values.get(var.0).and_then(|v| v.as_deref())
    }

    pub fn unset(&mut self, var: VarId) {
        if let Some(slot) = self.values.get_mut(var.0) {
            *slot = None;
        }
    }
}

/// Reusable evaluation state for a fixed set of root nodes.
///
/// Only nodes reachable from the roots are computed. The value buffer is owned
/// by the evaluator, never by the graph, so independent evaluators over the same
/// graph can run concurrently.
#[derive(Clone, Debug)]
pub struct Evaluator {
    roots: Vec<NodeId>,
    steps: Vec<usize>,
    offsets: Vec<usize>,
    lens: Vec<usize>,
    buf: Vec<f64>,
    graph_len: usize,
}

const UNUSED: usize = usize::MAX;

impl Evaluator {
    pub fn new(graph: &Graph, roots: &[NodeId]) -> Self {
        let n = roots.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        let mut needed = vec![false; n];
        for r in roots {
            needed[r.0] = true;
        }
        for i in (0..n).rev() {
            if needed[i] {
                for j in graph.nodes[i].op.inputs() {
                    needed[j.0] = true;
                }
            }
        }
        let mut offsets = vec![UNUSED; n];
        let mut lens = vec![0; n];
        let mut steps = Vec::new();
        let mut total = 0;
        for i in 0..n {
            if !needed[i] {
                continue;
            }
            let len = graph.nodes[i].shape.len();
            offsets[i] = total;
            lens[i] = len;
            total += len;
            if !matches!(graph.nodes[i].op, Op::Const(_)) {
                steps.push(i);
            }
        }
        let mut buf = vec![0.0; total];
        for i in 0..n {
            if let (true, Op::Const(c)) = (needed[i], &graph.nodes[i].op) {
                buf[offsets[i]..offsets[i] + lens[i]].copy_from_slice(&graph.consts[*c]);
            }
        }
        Self { roots: roots.to_vec(), steps, offsets, lens, buf, graph_len: graph.len() }
    }

    pub fn roots(&self) -> &[NodeId] {
        &self.roots
    }

    /// Evaluates every root under `bindings`.
    pub fn run(&mut self, graph: &Graph, bindings: &Bindings) -> Result<()> {
        debug_assert!(graph.len() >= self.graph_len, "evaluator used with a different graph");
        for &i in &self.steps {
            let node = &graph.nodes[i];
            let off = self.offsets[i];
            let len = self.lens[i];
            let (prev, rest) = self.buf.split_at_mut(off);
            let out = &mut rest[..len];
            match &node.op {
                Op::Var(v) => {
                    let info = &graph.vars[v.0];
                    let value = bindings.get(*v).ok_or_else(|| Error::UnboundVariable(info.name.clone()))?;
                    if value.len() != len {
                        return Err(Error::ShapeMismatch(format!(
                            "variable `{}` expects {len} values, bound to {}",
                            info.name,
                            value.len()
                        )));
                    }
                    out.copy_from_slice(value);
                    continue;
                }
                op => {
                    let offsets = &self.offsets;
                    let lens = &self.lens;
                    let prev: &[f64] = prev;
                    compute(op, &|id: NodeId| &prev[offsets[id.0]..offsets[id.0] + lens[id.0]], out);
                }
            }
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteIntermediate { node: i, op: node.op.name() });
            }
        }
        Ok(())
    }

    /// Value of a root (or any node the roots depend on) after [`run`](Self::run).
    pub fn value(&self, id: NodeId) -> &[f64] {
        let off = self.offsets[id.0];
        assert!(off != UNUSED, "node {} is not evaluated by this plan", id.0);
        &self.buf[off..off + self.lens[id.0]]
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.value(id)[0]
    }
}

impl Graph {
    /// One-shot evaluation of `root`.
    pub fn eval(&self, root: NodeId, bindings: &Bindings) -> Result<Vec<f64>> {
        if root.0 >= self.nodes.len() {
            return Err(Error::ShapeMismatch(format!("node {} does not exist", root.0)));
        }
        let mut ev = Evaluator::new(self, &[root]);
        ev.run(self, bindings)?;
        Ok(ev.value(root).to_vec())
    }

    pub fn eval_scalar(&self, root: NodeId, bindings: &Bindings) -> Result<f64> {
        let v = self.eval(root, bindings)?;
        if v.len() != 1 || !self.shape(root).is_scalar() {
            return Err(Error::ShapeMismatch("expected a scalar root".into()));
        }
        Ok(v[0])
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

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Computes one op from already-evaluated inputs.
pub(crate) fn compute<'a>(op: &Op, input: &dyn Fn(NodeId) -> &'a [f64], out: &mut [f64]) {
    fn unary(x: &[f64], out: &mut [f64], f: impl Fn(f64) -> f64) {
        for (o, &v) in out.iter_mut().zip(x) {
            *o = f(v);
        }
    }
    fn binary(a: &[f64], b: &[f64], out: &mut [f64], f: impl Fn(f64, f64) -> f64) {
        for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
            *o = f(x, y);
        }
    }
    match op {
        Op::Const(_) | Op::Var(_) => unreachable!("leaves are not computed"),
        Op::Add(a, b) => binary(input(*a), input(*b), out, |x, y| x + y),
        Op::Sub(a, b) => binary(input(*a), input(*b), out, |x, y| x - y),
        Op::Mul(a, b) => binary(input(*a), input(*b), out, |x, y| x * y),
        Op::Neg(x) => unary(input(*x), out, |v| -v),
        Op::Recip(x) => unary(input(*x), out, |v| 1.0 / v),
        Op::Exp(x) => unary(input(*x), out, Float::exp),
        Op::Log(x) => unary(input(*x), out, |v| if v > 0.0 { v.ln() } else { f64::NAN }),
        Op::Tanh(x) => unary(input(*x), out, Float::tanh),
        Op::Relu(x) => unary(input(*x), out, |v| if v > 0.0 { v } else { 0.0 }),
        Op::Sigmoid(x) => unary(input(*x), out, sigmoid),
        Op::Softplus(x) => unary(input(*x), out, softplus),
        Op::Square(x) => unary(input(*x), out, |v| v * v),
        Op::Sqrt(x) => unary(input(*x), out, |v| if v >= 0.0 { v.sqrt() } else { f64::NAN }),
        Op::Dot(a, b) => {
            out[0] = input(*a).iter().zip(input(*b)).map(|(x, y)| x * y).sum();
        }
        Op::MatVec { w, x, rows, cols } => {
            let (w, x) = (input(*w), input(*x));
            for r in 0..*rows {
                let row = &w[r * cols..(r + 1) * cols];
                out[r] = row.iter().zip(x).map(|(a, b)| a * b).sum();
            }
        }
        Op::MatTVec { w, y, rows, cols } => {
            let (w, y) = (input(*w), input(*y));
            out.iter_mut().for_each(|o| *o = 0.0);
            for r in 0..*rows {
                let yr = y[r];
                if yr == 0.0 {
                    continue;
                }
                for (o, &a) in out.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
                    *o += a * yr;
                }
            }
        }
        Op::Outer(a, b) => {
            let (a, b) = (input(*a), input(*b));
            let cols = b.len();
            for (i, &ai) in a.iter().enumerate() {
                for (o, &bj) in out[i * cols..(i + 1) * cols].iter_mut().zip(b) {
                    *o = ai * bj;
                }
            }
        }
        Op::Sum(x) => out[0] = input(*x).iter().sum(),
        Op::Broadcast(x, _) => {
            let v = input(*x)[0];
            out.iter_mut().for_each(|o| *o = v);
        }
        Op::Index(x, i) => out[0] = input(*x)[*i],
        Op::OneHot { x, index, .. } => {
            out.iter_mut().for_each(|o| *o = 0.0);
            out[*index] = input(*x)[0];
        }
        Op::Slice { x, start, len } => out.copy_from_slice(&input(*x)[*start..start + len]),
        Op::Embed { x, start, .. } => {
            let x = input(*x);
            out.iter_mut().for_each(|o| *o = 0.0);
            out[*start..start + x.len()].copy_from_slice(x);
        }
        Op::Concat(parts) => {
            let mut at = 0;
            for p in parts {
                let v = input(*p);
                out[at..at + v.len()].copy_from_slice(v);
                at += v.len();
            }
        }
        Op::Select { cond, a, b } => {
            let (c, a, b) = (input(*cond), input(*a), input(*b));
            for i in 0..out.len() {
                out[i] = if c[i] > 0.0 { a[i] } else { b[i] };
            }
        }
    }
}
