//! Expression graphs over `f64` scalars and fixed-length vectors.
//!
//! A [`Graph`] is an append-only, topologically ordered list of nodes. Builder
//! methods check shapes, fold constants and share structurally identical nodes.
//! Differentiation ([`Graph::grad`], [`Graph::grads`], [`Graph::divergence`])
//! appends the derivative as ordinary nodes, so derivatives of derivatives are
//! legal. Evaluation ([`Evaluator`]) keeps its value buffer outside the graph.
//!
//! Matrices are stored as flat row-major vectors and carry their dimensions in
//! the op (`MatVec`, `MatTVec`, `Outer`). `affine` and `clip_norm` are built
//! from the primitive ops.

pub mod check;
mod diff;
mod eval;
mod params;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

pub(crate) use eval::softplus;
pub use eval::{Bindings, Evaluator};
pub use params::ParamSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Scalar,
    Vector(usize),
}

impl Shape {
    pub fn len(self) -> usize {
        match self {
            Shape::Scalar => 1,
            Shape::Vector(n) => n,
        }
    }

    pub fn is_scalar(self) -> bool {
        matches!(self, Shape::Scalar)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    /// Data, noise and sample slots.
    Input,
    /// Trainable parameters.
    Param,
}

#[derive(Clone, Debug)]
pub struct VarInfo {
    pub name: String,
    pub shape: Shape,
    pub kind: VarKind,
    pub node: NodeId,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Op {
    Const(usize),
    Var(VarId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Neg(NodeId),
    Recip(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Softplus(NodeId),
    Square(NodeId),
    Sqrt(NodeId),
    Dot(NodeId, NodeId),
    /// `W x` with `W` a `rows × cols` row-major matrix.
    MatVec {
        w: NodeId,
        x: NodeId,
        rows: usize,
        cols: usize,
    },
    /// `Wᵀ y` with `W` a `rows × cols` row-major matrix.
    MatTVec {
        w: NodeId,
        y: NodeId,
        rows: usize,
        cols: usize,
    },
    /// `a bᵀ` flattened row-major.
    Outer(NodeId, NodeId),
    Sum(NodeId),
    Broadcast(NodeId, usize),
    Index(NodeId, usize),
    /// Scalar placed at `index` of a zero vector of length `len`.
    OneHot {
        x: NodeId,
        index: usize,
        len: usize,
    },
    Slice {
        x: NodeId,
        start: usize,
        len: usize,
    },
    /// Vector placed at `start` of a zero vector of length `len`.
    Embed {
        x: NodeId,
        start: usize,
        len: usize,
    },
    Concat(Vec<NodeId>),
    /// Elementwise `if cond > 0 { a } else { b }`; `cond` is not differentiated.
    Select {
        cond: NodeId,
        a: NodeId,
        b: NodeId,
    },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Const(_) => "const",
            Op::Var(_) => "var",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Neg(_) => "neg",
            Op::Recip(_) => "reciprocal",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Softplus(_) => "softplus",
            Op::Square(_) => "square",
            Op::Sqrt(_) => "sqrt",
            Op::Dot(..) => "dot",
            Op::MatVec { .. } => "matvec",
            Op::MatTVec { .. } => "mattvec",
            Op::Outer(..) => "outer",
            Op::Sum(_) => "sum",
            Op::Broadcast(..) => "broadcast",
            Op::Index(..) => "index",
            Op::OneHot { .. } => "one-hot",
            Op::Slice { .. } => "slice",
            Op::Embed { .. } => "embed",
            Op::Concat(_) => "concat",
            Op::Select { .. } => "select",
        }
    }

    pub fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Const(_) | Op::Var(_) => Vec::new(),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Dot(a, b) | Op::Outer(a, b) => {
                vec![*a, *b]
            }
            Op::Neg(x)
            | Op::Recip(x)
            | Op::Exp(x)
            | Op::Log(x)
            | Op::Tanh(x)
            | Op::Relu(x)
            | Op::Sigmoid(x)
            | Op::Softplus(x)
            | Op::Square(x)
            | Op::Sqrt(x)
            | Op::Sum(x)
            | Op::Broadcast(x, _)
            | Op::Index(x, _)
            | Op::OneHot { x, .. }
            | Op::Slice { x, .. }
            | Op::Embed { x, .. } => vec![*x],
            Op::MatVec { w, x, .. } => vec![*w, *x],
            Op::MatTVec { w, y, .. } => vec![*w, *y],
            Op::Concat(parts) => parts.clone(),
            Op::Select { cond, a, b } => vec![*cond, *a, *b],
        }
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub op: Op,
    pub shape: Shape,
}

#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    consts: Vec<Vec<f64>>,
    vars: Vec<VarInfo>,
    var_names: BTreeMap<String, VarId>,
    shared: BTreeMap<Op, NodeId>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn shape(&self, id: NodeId) -> Shape {
        self.nodes[id.0].shape
    }

    pub fn vars(&self) -> &[VarInfo] {
        &self.vars
    }

    pub fn var(&self, id: VarId) -> &VarInfo {
        &self.vars[id.0]
    }

    pub fn var_id(&self, name: &str) -> Option<VarId> {
        self.var_names.get(name).copied()
    }

    pub fn var_node(&self, id: VarId) -> NodeId {
        self.vars[id.0].node
    }

    pub(crate) fn const_value(&self, id: NodeId) -> Option<&[f64]> {
        match self.nodes[id.0].op {
            Op::Const(c) => Some(&self.consts[c]),
            _ => None,
        }
    }

    fn is_const_all(&self, id: NodeId, value: f64) -> bool {
        self.const_value(id).is_some_and(|v| v.iter().all(|&x| x == value))
    }

    pub(crate) fn is_zero(&self, id: NodeId) -> bool {
        self.is_const_all(id, 0.0)
    }

    fn is_one(&self, id: NodeId) -> bool {
        self.is_const_all(id, 1.0)
    }

    // ---- leaves ------------------------------------------------------------

    /// Declares (or returns the existing) variable called `name`.
    pub fn variable(&mut self, name: &str, shape: Shape, kind: VarKind) -> Result<NodeId> {
        if let Some(&id) = self.var_names.get(name) {
            let info = &self.vars[id.0];
            if info.shape != shape {
                return Err(Error::ShapeMismatch(format!(
                    "variable `{name}` redeclared as {shape:?}, was {:?}",
                    info.shape
                )));
            }
            return Ok(info.node);
        }
        let var = VarId(self.vars.len());
        let node = NodeId(self.nodes.len());
        self.nodes.push(Node { op: Op::Var(var), shape });
        self.vars.push(VarInfo { name: name.to_string(), shape, kind, node });
        self.var_names.insert(name.to_string(), var);
        Ok(node)
    }

    pub fn input(&mut self, name: &str, shape: Shape) -> Result<NodeId> {
        self.variable(name, shape, VarKind::Input)
    }

    pub fn param(&mut self, name: &str, shape: Shape) -> Result<NodeId> {
        self.variable(name, shape, VarKind::Param)
    }

    pub fn constant(&mut self, shape: Shape, values: Vec<f64>) -> Result<NodeId> {
        if values.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!("constant of shape {shape:?} given {} values", values.len())));
        }
        let c = self.consts.len();
        self.consts.push(values);
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op: Op::Const(c), shape });
        Ok(id)
    }

    pub fn scalar(&mut self, value: f64) -> NodeId {
        self.constant(Shape::Scalar, vec![value]).expect("scalar shape")
    }

    pub fn vector(&mut self, values: Vec<f64>) -> NodeId {
        let n = values.len();
        self.constant(Shape::Vector(n), values).expect("vector shape")
    }

    pub fn filled(&mut self, shape: Shape, value: f64) -> NodeId {
        self.constant(shape, vec![value; shape.len()]).expect("filled shape")
    }

    pub fn zeros(&mut self, shape: Shape) -> NodeId {
        self.filled(shape, 0.0)
    }

    // ---- core insertion ----------------------------------------------------

    fn infer(&self, op: &Op) -> Result<Shape> {
        let sh = |id: NodeId| -> Result<Shape> {
            self.nodes
                .get(id.0)
                .map(|n| n.shape)
                .ok_or_else(|| Error::ShapeMismatch(format!("node {} does not exist", id.0)))
        };
        let mismatch = |what: &str| Error::ShapeMismatch(format!("{}: {what}", op.name()));
        let vec_len = |id: NodeId| -> Result<usize> {
            match sh(id)? {
                Shape::Vector(n) => Ok(n),
                Shape::Scalar => Err(mismatch("expected a vector operand")),
            }
        };
        Ok(match op {
            Op::Const(_) | Op::Var(_) => unreachable!("leaves are inserted directly"),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                let (sa, sb) = (sh(*a)?, sh(*b)?);
                if sa != sb {
                    return Err(mismatch(&format!("{sa:?} vs {sb:?}")));
                }
                sa
            }
            Op::Neg(x)
            | Op::Recip(x)
            | Op::Exp(x)
            | Op::Log(x)
            | Op::Tanh(x)
            | Op::Relu(x)
            | Op::Sigmoid(x)
            | Op::Softplus(x)
            | Op::Square(x)
            | Op::Sqrt(x) => sh(*x)?,
            Op::Dot(a, b) => {
                if sh(*a)? != sh(*b)? {
                    return Err(mismatch("operands differ in shape"));
                }
                Shape::Scalar
            }
            Op::MatVec { w, x, rows, cols } => {
                if vec_len(*w)? != rows * cols || sh(*x)?.len() != *cols {
                    return Err(mismatch("matrix/vector sizes"));
                }
                Shape::Vector(*rows)
            }
            Op::MatTVec { w, y, rows, cols } => {
                if vec_len(*w)? != rows * cols || sh(*y)?.len() != *rows {
                    return Err(mismatch("matrix/vector sizes"));
                }
                Shape::Vector(*cols)
            }
            Op::Outer(a, b) => Shape::Vector(sh(*a)?.len() * sh(*b)?.len()),
            Op::Sum(x) => {
                sh(*x)?;
                Shape::Scalar
            }
            Op::Broadcast(x, n) => {
                if !sh(*x)?.is_scalar() {
                    return Err(mismatch("broadcast source must be scalar"));
                }
                Shape::Vector(*n)
            }
            Op::Index(x, i) => {
                if *i >= sh(*x)?.len() {
                    return Err(mismatch("index out of range"));
                }
                Shape::Scalar
            }
            Op::OneHot { x, index, len } => {
                if !sh(*x)?.is_scalar() || index >= len {
                    return Err(mismatch("one-hot of a scalar within range"));
                }
                Shape::Vector(*len)
            }
            Op::Slice { x, start, len } => {
                if start + len > sh(*x)?.len() {
                    return Err(mismatch("slice out of range"));
                }
                Shape::Vector(*len)
            }
            Op::Embed { x, start, len } => {
                if start + sh(*x)?.len() > *len {
                    return Err(mismatch("embed out of range"));
                }
                Shape::Vector(*len)
            }
            Op::Concat(parts) => {
                let mut n = 0;
                for p in parts {
                    n += sh(*p)?.len();
                }
                Shape::Vector(n)
            }
            Op::Select { cond, a, b } => {
                let s = sh(*a)?;
                if sh(*b)? != s || sh(*cond)? != s {
                    return Err(mismatch("condition and branches must share a shape"));
                }
                s
            }
        })
    }

    fn push(&mut self, op: Op) -> Result<NodeId> {
        let shape = self.infer(&op)?;
        let inputs = op.inputs();
        if !inputs.is_empty() && inputs.iter().all(|&i| self.const_value(i).is_some()) {
            let mut out = vec![0.0; shape.len()];
            let consts = &self.consts;
            let nodes = &self.nodes;
            eval::compute(
                &op,
                &|id: NodeId| match nodes[id.0].op {
                    Op::Const(c) => &consts[c][..],
                    _ => unreachable!(),
                },
                &mut out,
            );
            return self.constant(shape, out);
        }
        if let Some(&id) = self.shared.get(&op) {
            return Ok(id);
        }
        let id = NodeId(self.nodes.len());
        self.shared.insert(op.clone(), id);
        self.nodes.push(Node { op, shape });
        Ok(id)
    }

    // ---- arithmetic ----------------------------------------------------------

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.is_zero(a) && self.shape(a) == self.shape(b) {
            return Ok(b);
        }
        if self.is_zero(b) && self.shape(a) == self.shape(b) {
            return Ok(a);
        }
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.is_zero(b) && self.shape(a) == self.shape(b) {
            return Ok(a);
        }
        if self.is_zero(a) && self.shape(a) == self.shape(b) {
            return self.neg(b);
        }
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let same = self.shape(a) == self.shape(b);
        if same && (self.is_zero(a) || self.is_zero(b)) {
            return Ok(self.zeros(self.shape(a)));
        }
        if same && self.is_one(a) {
            return Ok(b);
        }
        if same && self.is_one(b) {
            return Ok(a);
        }
        self.push(Op::Mul(a, b))
    }

    pub fn neg(&mut self, x: NodeId) -> Result<NodeId> {
        if let Op::Neg(inner) = self.nodes[x.0].op {
            return Ok(inner);
        }
        self.push(Op::Neg(x))
    }

    pub fn recip(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Recip(x))
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Exp(x))
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Log(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Tanh(x))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Sigmoid(x))
    }

    pub fn softplus(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Softplus(x))
    }

    pub fn square(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Square(x))
    }

    pub fn sqrt(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Sqrt(x))
    }

    /// `log σ(x) = −softplus(−x)`, finite for all finite `x`.
    pub fn log_sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let nx = self.neg(x)?;
        let sp = self.softplus(nx)?;
        self.neg(sp)
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.is_zero(a) || self.is_zero(b) {
            self.infer(&Op::Dot(a, b))?;
            return Ok(self.scalar(0.0));
        }
        self.push(Op::Dot(a, b))
    }

    pub fn matvec(&mut self, w: NodeId, x: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        let op = Op::MatVec { w, x, rows, cols };
        if self.is_zero(w) || self.is_zero(x) {
            let s = self.infer(&op)?;
            return Ok(self.zeros(s));
        }
        self.push(op)
    }

    pub fn mattvec(&mut self, w: NodeId, y: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        let op = Op::MatTVec { w, y, rows, cols };
        if self.is_zero(w) || self.is_zero(y) {
            let s = self.infer(&op)?;
            return Ok(self.zeros(s));
        }
        self.push(op)
    }

    pub fn outer(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let op = Op::Outer(a, b);
        if self.is_zero(a) || self.is_zero(b) {
            let s = self.infer(&op)?;
            return Ok(self.zeros(s));
        }
        self.push(op)
    }

    /// `W x + b` for a `rows × cols` row-major `W`.
    pub fn affine(&mut self, w: NodeId, x: NodeId, b: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        let wx = self.matvec(w, x, rows, cols)?;
        self.add(wx, b)
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        if self.shape(x).is_scalar() {
            return Ok(x);
        }
        self.push(Op::Sum(x))
    }

    pub fn broadcast(&mut self, x: NodeId, len: usize) -> Result<NodeId> {
        self.push(Op::Broadcast(x, len))
    }

    /// Scalar times any-shaped node.
    pub fn scale(&mut self, s: NodeId, x: NodeId) -> Result<NodeId> {
        if !self.shape(s).is_scalar() {
            return Err(Error::ShapeMismatch("scale factor must be a scalar".into()));
        }
        match self.shape(x) {
            Shape::Scalar => self.mul(s, x),
            Shape::Vector(n) => {
                let b = self.broadcast(s, n)?;
                self.mul(b, x)
            }
        }
    }

    pub fn scale_by(&mut self, s: f64, x: NodeId) -> Result<NodeId> {
        let c = self.filled(self.shape(x), s);
        self.mul(c, x)
    }

    /// Element `i` of a vector; scalars pass through at index 0.
    pub fn index(&mut self, x: NodeId, i: usize) -> Result<NodeId> {
        if self.shape(x).is_scalar() && i == 0 {
            return Ok(x);
        }
        match &self.nodes[x.0].op {
            Op::Concat(parts) => {
                // Peek through concatenations of scalars.
                let parts = parts.clone();
                let mut offset = 0;
                for p in parts {
                    let n = self.shape(p).len();
                    if i < offset + n {
                        return self.index(p, i - offset);
                    }
                    offset += n;
                }
            }
            Op::OneHot { x: inner, index, .. } => {
                let inner = *inner;
                return if i == *index { Ok(inner) } else { Ok(self.scalar(0.0)) };
            }
            _ => {}
        }
        self.push(Op::Index(x, i))
    }

    pub fn one_hot(&mut self, x: NodeId, index: usize, len: usize) -> Result<NodeId> {
        self.push(Op::OneHot { x, index, len })
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        if start == 0 && self.shape(x) == Shape::Vector(len) {
            return Ok(x);
        }
        self.push(Op::Slice { x, start, len })
    }

    pub fn embed(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        if start == 0 && self.shape(x) == Shape::Vector(len) {
            return Ok(x);
        }
        self.push(Op::Embed { x, start, len })
    }

    /// Concatenates scalars and vectors into one vector.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.len() == 1 && !self.shape(parts[0]).is_scalar() {
            return Ok(parts[0]);
        }
        self.push(Op::Concat(parts.to_vec()))
    }

    pub fn select(&mut self, cond: NodeId, a: NodeId, b: NodeId) -> Result<NodeId> {
        if a == b {
            self.infer(&Op::Select { cond, a, b })?;
            return Ok(a);
        }
        self.push(Op::Select { cond, a, b })
    }

    /// Elementwise maximum; the derivative follows the larger argument.
    pub fn max(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let d = self.sub(a, b)?;
        self.select(d, a, b)
    }

    /// `log(exp(a) + exp(b))` for scalars, shifted by the maximum so that
    /// neither exponential overflows or underflows to a zero sum.
    pub fn log_add_exp(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let m = self.max(a, b)?;
        let da = self.sub(a, m)?;
        let db = self.sub(b, m)?;
        let ea = self.exp(da)?;
        let eb = self.exp(db)?;
        let s = self.add(ea, eb)?;
        let l = self.log(s)?;
        self.add(m, l)
    }

    /// Rescales `h` onto the ℓ₂ ball of radius `bound` when it lies outside.
    ///
    /// Built as `h · bound / sqrt(max(‖h‖², bound²))`, which stays finite (with
    /// finite derivatives of every order) at `h = 0`.
    pub fn clip_norm(&mut self, h: NodeId, bound: f64) -> Result<NodeId> {
        let sq = self.dot(h, h)?;
        let b2 = self.scalar(bound * bound);
        let m = self.max(sq, b2)?;
        let r = self.sqrt(m)?;
        let inv = self.recip(r)?;
        let factor = self.scale_by(bound, inv)?;
        self.scale(factor, h)
    }

    /// Clamps every element of `h` to `[-bound, bound]`.
    pub fn clamp(&mut self, h: NodeId, bound: f64) -> Result<NodeId> {
        let shape = self.shape(h);
        let hi = self.filled(shape, bound);
        let lo = self.filled(shape, -bound);
        let over = self.sub(h, hi)?;
        let upper = self.select(over, hi, h)?;
        let under = self.sub(lo, h)?;
        self.select(under, lo, upper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_checked_at_construction() {
        let mut g = Graph::new();
        let a = g.input("a", Shape::Vector(3)).unwrap();
        let b = g.input("b", Shape::Vector(2)).unwrap();
        assert!(matches!(g.add(a, b), Err(Error::ShapeMismatch(_))));
        assert!(matches!(g.index(a, 3), Err(Error::ShapeMismatch(_))));
        assert!(g.input("a", Shape::Scalar).is_err());
    }

    #[test]
    fn constants_fold_and_nodes_are_shared() {
        let mut g = Graph::new();
        let two = g.scalar(2.0);
        let three = g.scalar(3.0);
        let six = g.mul(two, three).unwrap();
        assert_eq!(g.const_value(six), Some(&[6.0][..]));

        let x = g.input("x", Shape::Scalar).unwrap();
        let e1 = g.exp(x).unwrap();
        let e2 = g.exp(x).unwrap();
        assert_eq!(e1, e2);
    }

    #[test]
    fn topological_order() {
        let mut g = Graph::new();
        let x = g.input("x", Shape::Vector(2)).unwrap();
        let t = g.tanh(x).unwrap();
        let s = g.sum(t).unwrap();
        let _ = g.grad(s, x).unwrap();
        for (i, n) in g.nodes.iter().enumerate() {
            assert!(n.op.inputs().iter().all(|j| j.0 < i));
        }
    }
}
