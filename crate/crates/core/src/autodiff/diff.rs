use alloc::vec;
use alloc::vec::Vec;

use super::{Graph, NodeId, Op, Shape, VarId};
use crate::{Error, Result};

impl Graph {
    /// Derivative of the scalar `root` with respect to the node `wrt`.
    ///
    /// `wrt` may be any node, not only a variable: the result is the partial
    /// derivative treating `wrt` as an independent leaf, which is what the
    /// chain rule needs when `wrt` is itself computed from parameters.
    pub fn grad(&mut self, root: NodeId, wrt: NodeId) -> Result<NodeId> {
        Ok(self.grads(root, &[wrt])?[0])
    }

    pub fn grad_var(&mut self, root: NodeId, wrt: VarId) -> Result<NodeId> {
        if wrt.0 >= self.vars.len() {
            return Err(Error::UnknownVariable(alloc::format!("#{}", wrt.0)));
        }
        let node = self.vars[wrt.0].node;
        self.grad(root, node)
    }

    /// Gradients of `root` with respect to several nodes from a single reverse
    /// sweep. The returned nodes have the shapes of the corresponding `wrt`.
    pub fn grads(&mut self, root: NodeId, wrt: &[NodeId]) -> Result<Vec<NodeId>> {
        if root.0 >= self.nodes.len() {
            return Err(Error::UnknownVariable(alloc::format!("node {}", root.0)));
        }
        if !self.shape(root).is_scalar() {
            return Err(Error::NonScalarRoot);
        }
        for w in wrt {
            if w.0 >= self.nodes.len() {
                return Err(Error::UnknownVariable(alloc::format!("node {}", w.0)));
            }
        }
        let n = root.0 + 1;

        // Nodes that vary with some target, and nodes the root depends on.
        let mut varies = vec![false; n];
        for w in wrt {
            if w.0 < n {
                varies[w.0] = true;
            }
        }
        for i in 0..n {
            if !varies[i] {
                varies[i] = self.nodes[i].op.inputs().iter().any(|j| varies[j.0]);
            }
        }
        let mut needed = vec![false; n];
        needed[root.0] = true;
        for i in (0..n).rev() {
            if needed[i] {
                for j in self.nodes[i].op.inputs() {
                    needed[j.0] = true;
                }
            }
        }

        let mut adj: Vec<Option<NodeId>> = vec![None; n];
        adj[root.0] = Some(self.scalar(1.0));
        for i in (0..n).rev() {
            if !(needed[i] && varies[i]) {
                continue;
            }
            let Some(g) = adj[i] else { continue };
            let op = self.nodes[i].op.clone();
            let y = NodeId(i);
            for (slot, input) in op.inputs().into_iter().enumerate() {
                if !varies[input.0] {
                    continue;
                }
                if let Some(c) = self.vjp(&op, y, slot, g)? {
                    adj[input.0] = Some(match adj[input.0] {
                        Some(acc) => self.add(acc, c)?,
                        None => c,
                    });
                }
            }
        }

        wrt.iter()
            .map(|w| match adj.get(w.0).copied().flatten() {
                Some(g) => Ok(g),
                None => Ok(self.zeros(self.shape(*w))),
            })
            .collect()
    }

    /// `Σᵢ ∂fᵢ/∂zᵢ` for a vector field `f` of the node `z`, as a scalar graph.
    pub fn divergence(&mut self, f: NodeId, z: NodeId) -> Result<NodeId> {
        let (fs, zs) = (self.shape(f), self.shape(z));
        if fs.len() != zs.len() {
            return Err(Error::DimensionMismatch { expected: zs.len(), found: fs.len() });
        }
        if fs.is_scalar() {
            return self.grad(f, z);
        }
        let mut total = self.scalar(0.0);
        for i in 0..fs.len() {
            let fi = self.index(f, i)?;
            let gi = self.grad(fi, z)?;
            let d = self.index(gi, i)?;
            total = self.add(total, d)?;
        }
        Ok(total)
    }

    /// Contribution to the adjoint of input `slot` of `op` (whose output is `y`)
    /// given the output adjoint `g`. `None` means no contribution.
    fn vjp(&mut self, op: &Op, y: NodeId, slot: usize, g: NodeId) -> Result<Option<NodeId>> {
        let shape_of = |graph: &Graph, id: NodeId| graph.shape(id);
        Ok(Some(match *op {
            Op::Const(_) | Op::Var(_) => return Ok(None),
            Op::Add(..) => g,
            Op::Sub(..) => {
                if slot == 0 {
                    g
                } else {
                    self.neg(g)?
                }
            }
            Op::Mul(a, b) => {
                let other = if slot == 0 { b } else { a };
                self.mul(g, other)?
            }
            Op::Neg(_) => self.neg(g)?,
            Op::Recip(_) => {
                let y2 = self.square(y)?;
                let t = self.mul(g, y2)?;
                self.neg(t)?
            }
            Op::Exp(_) => self.mul(g, y)?,
            Op::Log(x) => {
                let r = self.recip(x)?;
                self.mul(g, r)?
            }
            Op::Tanh(_) => {
                let shape = shape_of(self, y);
                let one = self.filled(shape, 1.0);
                let y2 = self.square(y)?;
                let d = self.sub(one, y2)?;
                self.mul(g, d)?
            }
            Op::Relu(x) => {
                let shape = shape_of(self, x);
                let one = self.filled(shape, 1.0);
                let zero = self.zeros(shape);
                let step = self.select(x, one, zero)?;
                self.mul(g, step)?
            }
            Op::Sigmoid(_) => {
                let shape = shape_of(self, y);
                let one = self.filled(shape, 1.0);
                let c = self.sub(one, y)?;
                let d = self.mul(y, c)?;
                self.mul(g, d)?
            }
            Op::Softplus(x) => {
                let s = self.sigmoid(x)?;
                self.mul(g, s)?
            }
            Op::Square(x) => {
                let two_x = self.add(x, x)?;
                self.mul(g, two_x)?
            }
            Op::Sqrt(_) => {
                let two_y = self.add(y, y)?;
                let r = self.recip(two_y)?;
                self.mul(g, r)?
            }
            Op::Dot(a, b) => {
                let other = if slot == 0 { b } else { a };
                self.scale(g, other)?
            }
            Op::MatVec { w, x, rows, cols } => {
                if slot == 0 {
                    self.outer(g, x)?
                } else {
                    self.mattvec(w, g, rows, cols)?
                }
            }
            Op::MatTVec { w, y: v, rows, cols } => {
                if slot == 0 {
                    self.outer(v, g)?
                } else {
                    self.matvec(w, g, rows, cols)?
                }
            }
            Op::Outer(a, b) => {
                let (rows, cols) = (self.shape(a).len(), self.shape(b).len());
                let r = if slot == 0 { self.matvec(g, b, rows, cols)? } else { self.mattvec(g, a, rows, cols)? };
                // Scalars enter outer products as length-one vectors.
                let target = if slot == 0 { a } else { b };
                if self.shape(target).is_scalar() {
                    self.index(r, 0)?
                } else {
                    r
                }
            }
            Op::Sum(x) => match self.shape(x) {
                Shape::Scalar => g,
                Shape::Vector(n) => self.broadcast(g, n)?,
            },
            Op::Broadcast(..) => self.sum(g)?,
            Op::Index(x, i) => match self.shape(x) {
                Shape::Scalar => g,
                Shape::Vector(n) => self.one_hot(g, i, n)?,
            },
            Op::OneHot { index, .. } => self.index(g, index)?,
            Op::Slice { x, start, .. } => {
                let n = self.shape(x).len();
                self.embed(g, start, n)?
            }
            Op::Embed { x, start, .. } => {
                let n = self.shape(x).len();
                self.slice(g, start, n)?
            }
            Op::Concat(ref parts) => {
                let offset: usize = parts[..slot].iter().map(|p| self.shape(*p).len()).sum();
                let part = parts[slot];
                match self.shape(part) {
                    Shape::Scalar => self.index(g, offset)?,
                    Shape::Vector(n) => self.slice(g, offset, n)?,
                }
            }
            Op::Select { cond, .. } => {
                if slot == 0 {
                    return Ok(None);
                }
                let zero = self.zeros(self.shape(g));
                if slot == 1 {
                    self.select(cond, g, zero)?
                } else {
                    self.select(cond, zero, g)?
                }
            }
        }))
    }
}
