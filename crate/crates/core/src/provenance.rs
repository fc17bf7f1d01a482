//! Provenance graph of the canvas/generation feedback loop, unrolled in
//! time: snapshots condition candidates, candidates are imported as layers,
//! layers are composited into later snapshots.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layers::LayerId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum NodeRef {
    Snapshot(u64),
    Candidate(u64),
    Layer(LayerId),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EdgeKind {
    /// snapshot -> candidate, with the influence weight used.
    ConditionedOn { weight: f64 },
    /// candidate -> layer
    ImportedAs,
    /// layer -> snapshot
    CompositedInto,
}

impl EdgeKind {
    fn admits(&self, from: NodeRef, to: NodeRef) -> bool {
        matches!(
            (self, from, to),
            (EdgeKind::ConditionedOn { .. }, NodeRef::Snapshot(_), NodeRef::Candidate(_))
                | (EdgeKind::ImportedAs, NodeRef::Candidate(_), NodeRef::Layer(_))
                | (EdgeKind::CompositedInto, NodeRef::Layer(_), NodeRef::Snapshot(_))
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: NodeRef,
    pub to: NodeRef,
    pub kind: EdgeKind,
}

#[derive(Debug, Error, PartialEq)]
pub enum ProvenanceError {
    #[error("node {0:?} already recorded")]
    DuplicateNode(NodeRef),
    #[error("node {0:?} not recorded")]
    UnknownNode(NodeRef),
    #[error("edge {from:?} -> {to:?} is not time-ordered")]
    NotTimeOrdered { from: NodeRef, to: NodeRef },
    #[error("edge kind {kind:?} cannot join {from:?} -> {to:?}")]
    WrongEndpoints { from: NodeRef, to: NodeRef, kind: EdgeKind },
    #[error("layer {0} has {1} inbound import edges")]
    ImportCount(LayerId, usize),
}

/// Nodes are numbered in creation order; an edge must point from an older
/// node to a strictly newer one, which keeps the graph acyclic.
#[derive(Clone, Debug, Default)]
pub struct ProvenanceGraph {
    nodes: Vec<NodeRef>,
    order: HashMap<NodeRef, usize>,
    edges: Vec<Edge>,
}

impl ProvenanceGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nodes(&self) -> &[NodeRef] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn contains(&self, node: NodeRef) -> bool {
        self.order.contains_key(&node)
    }

    pub fn add_node(&mut self, node: NodeRef) -> Result<(), ProvenanceError> {
        if self.order.contains_key(&node) {
            return Err(ProvenanceError::DuplicateNode(node));
        }
        self.order.insert(node, self.nodes.len());
        self.nodes.push(node);
        Ok(())
    }

    pub fn add_edge(&mut self, from: NodeRef, to: NodeRef, kind: EdgeKind) -> Result<(), ProvenanceError> {
        let f = *self.order.get(&from).ok_or(ProvenanceError::UnknownNode(from))?;
        let t = *self.order.get(&to).ok_or(ProvenanceError::UnknownNode(to))?;
        if !kind.admits(from, to) {
            return Err(ProvenanceError::WrongEndpoints { from, to, kind });
        }
        if t <= f {
            return Err(ProvenanceError::NotTimeOrdered { from, to });
        }
        self.edges.push(Edge { from, to, kind });
        Ok(())
    }

    /// Edge count of the longest path; 0 for a graph without edges.
    pub fn depth(&self) -> usize {
        let mut outgoing: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            outgoing[self.order[&e.from]].push(self.order[&e.to]);
        }
        // Creation order is a topological order.
        let mut longest = vec![0usize; self.nodes.len()];
        for i in (0..self.nodes.len()).rev() {
            longest[i] = outgoing[i].iter().map(|&j| longest[j] + 1).max().unwrap_or(0);
        }
        longest.into_iter().max().unwrap_or(0)
    }

    /// Checks that every imported layer has exactly one inbound import edge.
    pub fn validate_imports(&self, imported_layers: impl IntoIterator<Item = LayerId>) -> Result<(), ProvenanceError> {
        for layer in imported_layers {
            let n = self
                .edges
                .iter()
                .filter(|e| e.kind == EdgeKind::ImportedAs && e.to == NodeRef::Layer(layer))
                .count();
            if n != 1 {
                return Err(ProvenanceError::ImportCount(layer, n));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force longest path by enumerating every path with DFS.
    fn brute_depth(g: &ProvenanceGraph) -> usize {
        fn walk(g: &ProvenanceGraph, at: NodeRef) -> usize {
            g.edges()
                .iter()
                .filter(|e| e.from == at)
                .map(|e| 1 + walk(g, e.to))
                .max()
                .unwrap_or(0)
        }
        g.nodes().iter().map(|&n| walk(g, n)).max().unwrap_or(0)
    }

    fn cycle(g: &mut ProvenanceGraph, snap: u64, cand: u64, layer: u64, next_snap: u64) {
        let (s, c, l, s2) = (
            NodeRef::Snapshot(snap),
            NodeRef::Candidate(cand),
            NodeRef::Layer(LayerId(layer)),
            NodeRef::Snapshot(next_snap),
        );
        if !g.contains(s) {
            g.add_node(s).unwrap();
        }
        g.add_node(c).unwrap();
        g.add_edge(s, c, EdgeKind::ConditionedOn { weight: 0.5 }).unwrap();
        g.add_node(l).unwrap();
        g.add_edge(c, l, EdgeKind::ImportedAs).unwrap();
        g.add_node(s2).unwrap();
        g.add_edge(l, s2, EdgeKind::CompositedInto).unwrap();
    }

    #[test]
    fn empty_graph_has_depth_zero() {
        assert_eq!(ProvenanceGraph::new().depth(), 0);
    }

    #[test]
    fn conditioning_only_is_depth_one() {
        let mut g = ProvenanceGraph::new();
        g.add_node(NodeRef::Snapshot(1)).unwrap();
        g.add_node(NodeRef::Candidate(1)).unwrap();
        assert_eq!(g.depth(), 0);
        g.add_edge(NodeRef::Snapshot(1), NodeRef::Candidate(1), EdgeKind::ConditionedOn { weight: 1.0 }).unwrap();
        assert_eq!(g.depth(), 1);
    }

    #[test]
    fn one_and_two_cycles() {
        let mut g = ProvenanceGraph::new();
        cycle(&mut g, 1, 1, 1, 2);
        assert_eq!(g.depth(), 3);
        assert_eq!(brute_depth(&g), 3);
        cycle(&mut g, 2, 2, 2, 3);
        assert_eq!(g.depth(), 6);
        assert_eq!(brute_depth(&g), 6);
        g.validate_imports([LayerId(1), LayerId(2)]).unwrap();
    }

    #[test]
    fn rejects_backward_and_malformed_edges() {
        let mut g = ProvenanceGraph::new();
        g.add_node(NodeRef::Candidate(1)).unwrap();
        g.add_node(NodeRef::Snapshot(1)).unwrap();
        assert!(matches!(
            g.add_edge(NodeRef::Snapshot(1), NodeRef::Candidate(1), EdgeKind::ConditionedOn { weight: 0.0 }),
            Err(ProvenanceError::NotTimeOrdered { .. })
        ));
        assert!(matches!(
            g.add_edge(NodeRef::Candidate(1), NodeRef::Snapshot(1), EdgeKind::ImportedAs),
            Err(ProvenanceError::WrongEndpoints { .. })
        ));
        assert_eq!(g.add_node(NodeRef::Candidate(1)), Err(ProvenanceError::DuplicateNode(NodeRef::Candidate(1))));
        assert!(g.validate_imports([LayerId(7)]).is_err());
    }
}
