//! Table-version lineage graph.
//!
//! Nodes are rendered table versions; an edge `from -> to` labelled with a
//! function name means the call read `from` and wrote `to`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::interp::Effect;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProvenanceError {
    #[error("unknown table version {0}")]
    UnknownNode(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceGraph {
    nodes: BTreeSet<String>,
    edges: BTreeSet<Edge>,
}

impl ProvenanceGraph {
    pub fn new() -> ProvenanceGraph {
        ProvenanceGraph::default()
    }

    pub fn add_node(&mut self, name: impl Into<String>) {
        self.nodes.insert(name.into());
    }

    /// Adds one edge per (input, output) pair of every executed effect.
    /// Skipped effects add nothing; inputs of delete and test calls are kept
    /// as nodes.
    pub fn record_effects(&mut self, effects: &[Effect]) {
        for e in effects.iter().filter(|e| !e.skipped) {
            for i in &e.inputs {
                self.nodes.insert(i.clone());
                for o in &e.outputs {
                    self.nodes.insert(o.clone());
                    self.edges.insert(Edge { from: i.clone(), to: o.clone(), label: e.function.name().into() });
                }
            }
            for o in &e.outputs {
                self.nodes.insert(o.clone());
            }
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(String::as_str)
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn contains(&self, node: &str) -> bool {
        self.nodes.contains(node)
    }

    /// Every ancestor of `node`.
    pub fn lineage(&self, node: &str) -> Result<BTreeSet<String>, ProvenanceError> {
        if !self.contains(node) {
            return Err(ProvenanceError::UnknownNode(node.into()));
        }
        let mut parents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for e in &self.edges {
            parents.entry(e.to.as_str()).or_default().push(e.from.as_str());
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            for &p in parents.get(n).into_iter().flatten() {
                if seen.insert(p.to_string()) {
                    stack.push(p);
                }
            }
        }
        Ok(seen)
    }

    /// Nodes ordered so every edge points forward; ties go to the smaller
    /// name.
    pub fn topological_order(&self) -> Vec<String> {
        let mut indegree: BTreeMap<&str, usize> = self.nodes.iter().map(|n| (n.as_str(), 0)).collect();
        let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for e in &self.edges {
            *indegree.get_mut(e.to.as_str()).expect("edge endpoints are nodes") += 1;
            children.entry(e.from.as_str()).or_default().push(e.to.as_str());
        }
        let mut ready: BTreeSet<&str> = indegree.iter().filter(|(_, d)| **d == 0).map(|(n, _)| *n).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(n) = ready.pop_first() {
            order.push(n.to_string());
            for &c in children.get(n).into_iter().flatten() {
                let d = indegree.get_mut(c).expect("known node");
                *d -= 1;
                if *d == 0 {
                    ready.insert(c);
                }
            }
        }
        assert_eq!(order.len(), self.nodes.len(), "provenance graph must be acyclic");
        order
    }

    /// `{nodes: [...], edges: [{from, to, label}]}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "nodes": self.topological_order(),
            "edges": self.edges.iter().collect::<Vec<_>>(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::DslFunction;

    fn effect(f: DslFunction, inputs: &[&str], outputs: &[&str]) -> Effect {
        Effect {
            call_index: 0,
            function: f,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            skipped: false,
        }
    }

    #[test]
    fn merge_has_two_incoming_edges() {
        let mut g = ProvenanceGraph::new();
        g.record_effects(&[effect(DslFunction::Merge, &["a_v0.csv", "b_v0.csv"], &["merged_v0.csv"])]);
        assert_eq!(g.edges().count(), 2);
        assert_eq!(g.lineage("merged_v0.csv").unwrap().len(), 2);
        assert!(g.lineage("a_v0.csv").unwrap().is_empty());
    }

    #[test]
    fn skipped_effects_add_nothing() {
        let mut g = ProvenanceGraph::new();
        let mut e = effect(DslFunction::Drop, &["a_v0.csv"], &[]);
        e.skipped = true;
        g.record_effects(&[e]);
        assert_eq!(g.nodes().count(), 0);
    }

    #[test]
    fn order_interleaves_by_name() {
        let mut g = ProvenanceGraph::new();
        g.record_effects(&[
            effect(DslFunction::Transpose, &["b_v0.csv"], &["b_v1.csv"]),
            effect(DslFunction::Transpose, &["a_v0.csv"], &["a_v1.csv"]),
        ]);
        assert_eq!(g.topological_order(), vec!["a_v0.csv", "a_v1.csv", "b_v0.csv", "b_v1.csv"]);
        assert!(matches!(g.lineage("zzz"), Err(ProvenanceError::UnknownNode(_))));
    }
}
