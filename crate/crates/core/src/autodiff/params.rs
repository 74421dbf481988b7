use alloc::string::String;
use alloc::vec::Vec;

use super::{Bindings, Graph, NodeId, Shape, VarId};
use crate::{Error, Result};

#[derive(Clone, Debug)]
struct Block {
    name: String,
    var: VarId,
    node: NodeId,
    offset: usize,
    len: usize,
}

/// A flat parameter vector split over several graph variables.
///
/// Families and test functions declare their weights as named blocks; the
/// optimizer only ever sees the concatenated vector.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    blocks: Vec<Block>,
    total: usize,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a parameter block of `len` values and returns its node.
    pub fn declare(&mut self, g: &mut Graph, name: &str, len: usize) -> Result<NodeId> {
        let node = g.param(name, Shape::Vector(len))?;
        let var = g.var_id(name).expect("declared above");
        self.blocks.push(Block { name: name.into(), var, node, offset: self.total, len });
        self.total += len;
        Ok(node)
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn nodes(&self) -> Vec<NodeId> {
        self.blocks.iter().map(|b| b.node).collect()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.blocks.iter().map(|b| b.name.as_str())
    }

    pub fn bind(&self, bindings: &mut Bindings, flat: &[f64]) -> Result<()> {
        if flat.len() != self.total {
            return Err(Error::DimensionMismatch { expected: self.total, found: flat.len() });
        }
        for b in &self.blocks {
            bindings.set(b.var, &flat[b.offset..b.offset + b.len]);
        }
        Ok(())
    }

    /// Gradient of `root` with respect to the whole flat vector.
    pub fn gradient(&self, g: &mut Graph, root: NodeId) -> Result<NodeId> {
        if self.blocks.is_empty() {
            return Ok(g.zeros(Shape::Vector(0)));
        }
        let grads = g.grads(root, &self.nodes())?;
        g.concat(&grads)
    }
}
