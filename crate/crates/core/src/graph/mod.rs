//! Causal DAGs over decision, target and external nodes.
//!
//! d-separation is answered on the moralized ancestral graph, which is linear
//! in the size of the graph. The back-door test removes the edges leaving the
//! decision set and asks for d-separation in what remains.

mod bayesnet;
mod format;
pub mod random;

pub use bayesnet::DiscreteBayesNet;
pub use format::{parse_dag, write_dag};

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeSet = BTreeSet<usize>;

/// Role of a variable in the predictive optimization pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeClass {
    /// Decision variable (a price) that the optimizer intervenes on.
    Decision,
    /// Target variable (a demand) to be predicted.
    Target,
    /// External feature observed before the decision is made.
    External,
}

impl NodeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeClass::Decision => "decision",
            NodeClass::Target => "target",
            NodeClass::External => "external",
        }
    }
}

impl fmt::Display for NodeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeId {
    pub index: usize,
    pub class: NodeClass,
    pub label: String,
}

/// A directed acyclic graph whose nodes carry a [`NodeClass`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalDag {
    nodes: Vec<NodeId>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    order: Vec<usize>,
}

/// Source, sink and conditioning sets of a d-separation query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathQuery {
    pub source: NodeSet,
    pub sink: NodeSet,
    pub conditioning: NodeSet,
}

impl PathQuery {
    pub fn new(source: &[usize], sink: &[usize], conditioning: &[usize]) -> Result<Self> {
        let source: NodeSet = source.iter().copied().collect();
        let sink: NodeSet = sink.iter().copied().collect();
        let conditioning: NodeSet = conditioning.iter().copied().collect();
        if !source.is_disjoint(&sink)
            || !source.is_disjoint(&conditioning)
            || !sink.is_disjoint(&conditioning)
        {
            return Err(Error::OverlappingSets);
        }
        Ok(PathQuery {
            source,
            sink,
            conditioning,
        })
    }
}

impl CausalDag {
    /// Builds a DAG from `(class, label)` node descriptions and `(parent, child)` edges.
    /// Duplicate edges are collapsed.
    pub fn new(nodes: Vec<(NodeClass, String)>, edges: &[(usize, usize)]) -> Result<Self> {
        let n = nodes.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for &(p, c) in edges {
            if p >= n {
                return Err(Error::UnknownNode(p));
            }
            if c >= n {
                return Err(Error::UnknownNode(c));
            }
            if p == c {
                return Err(Error::SelfLoop(p));
            }
            if !parents[c].contains(&p) {
                parents[c].push(p);
                children[p].push(c);
            }
        }
        for list in parents.iter_mut().chain(children.iter_mut()) {
            list.sort_unstable();
        }
        let order = topological_order(&parents, &children).ok_or(Error::Cycle)?;
        let nodes = nodes
            .into_iter()
            .enumerate()
            .map(|(index, (class, label))| NodeId {
                index,
                class,
                label,
            })
            .collect();
        Ok(CausalDag {
            nodes,
            parents,
            children,
            order,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn node(&self, index: usize) -> Result<&NodeId> {
        self.nodes.get(index).ok_or(Error::UnknownNode(index))
    }

    /// Index of the node with the given label.
    pub fn find(&self, label: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.label == label)
    }

    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    /// Parents-before-children ordering of all nodes.
    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    pub fn has_edge(&self, parent: usize, child: usize) -> bool {
        self.children
            .get(parent)
            .is_some_and(|c| c.binary_search(&child).is_ok())
    }

    /// All edges as sorted `(parent, child)` pairs.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.children
            .iter()
            .enumerate()
            .flat_map(|(p, cs)| cs.iter().map(move |&c| (p, c)))
            .collect()
    }

    pub fn nodes_of(&self, class: NodeClass) -> Vec<usize> {
        self.nodes
            .iter()
            .filter(|n| n.class == class)
            .map(|n| n.index)
            .collect()
    }

    fn check_nodes(&self, s: &[usize]) -> Result<()> {
        match s.iter().find(|&&v| v >= self.len()) {
            Some(&v) => Err(Error::UnknownNode(v)),
            None => Ok(()),
        }
    }

    fn reach(&self, start: &[usize], forward: bool) -> NodeSet {
        let mut seen = NodeSet::new();
        let mut stack: Vec<usize> = start.to_vec();
        while let Some(v) = stack.pop() {
            let next = if forward {
                &self.children[v]
            } else {
                &self.parents[v]
            };
            for &w in next {
                if seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        seen
    }

    /// Nodes reachable from `s` by a directed path of length at least one.
    pub fn descendants(&self, s: &[usize]) -> Result<NodeSet> {
        self.check_nodes(s)?;
        Ok(self.reach(s, true))
    }

    /// Nodes with a directed path of length at least one into `s`.
    pub fn ancestors(&self, s: &[usize]) -> Result<NodeSet> {
        self.check_nodes(s)?;
        Ok(self.reach(s, false))
    }

    /// True iff every path between the source and sink sets is blocked by the
    /// conditioning set.
    ///
    /// A path is blocked when it has a noncollider in the conditioning set, or
    /// a collider that is neither in the conditioning set nor an ancestor of a
    /// node in it.
    pub fn is_d_separated(&self, q: &PathQuery) -> Result<bool> {
        let all: Vec<usize> = q
            .source
            .iter()
            .chain(&q.sink)
            .chain(&q.conditioning)
            .copied()
            .collect();
        self.check_nodes(&all)?;
        if q.source.is_empty() || q.sink.is_empty() {
            return Ok(true);
        }

        let mut relevant = self.reach(&all, false);
        relevant.extend(all.iter().copied());

        // moral graph of the ancestral set
        let n = self.len();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &v in &relevant {
            let pa = &self.parents[v];
            for (i, &p) in pa.iter().enumerate() {
                adj[v].push(p);
                adj[p].push(v);
                for &p2 in &pa[i + 1..] {
                    adj[p].push(p2);
                    adj[p2].push(p);
                }
            }
        }

        let mut seen = vec![false; n];
        let mut queue = VecDeque::new();
        for &s in &q.source {
            seen[s] = true;
            queue.push_back(s);
        }
        while let Some(v) = queue.pop_front() {
            if q.sink.contains(&v) {
                return Ok(false);
            }
            for &w in &adj[v] {
                if !seen[w] && !q.conditioning.contains(&w) {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        Ok(true)
    }

    /// Copy of the graph with every edge leaving a node of `x` removed.
    fn without_edges_out_of(&self, x: &NodeSet) -> CausalDag {
        let nodes: Vec<(NodeClass, String)> = self
            .nodes
            .iter()
            .map(|n| (n.class, n.label.clone()))
            .collect();
        let edges: Vec<(usize, usize)> = self
            .edges()
            .into_iter()
            .filter(|(p, _)| !x.contains(p))
            .collect();
        CausalDag::new(nodes, &edges).expect("edge removal preserves acyclicity")
    }

    /// Back-door criterion relative to `(x, y)`: no node of `s` descends from
    /// `x`, and `s` blocks every path from `x` to `y` that enters `x` through
    /// an incoming edge.
    ///
    /// For sets of decision nodes the path condition is evaluated as
    /// d-separation after deleting the edges leaving `x`.
    pub fn satisfies_backdoor(&self, x: &[usize], y: &[usize], s: &[usize]) -> Result<bool> {
        let q = PathQuery::new(x, y, s)?;
        self.check_nodes(x)?;
        self.check_nodes(y)?;
        self.check_nodes(s)?;
        let desc = self.descendants(x)?;
        if s.iter().any(|v| desc.contains(v)) {
            return Ok(false);
        }
        self.without_edges_out_of(&q.source).is_d_separated(&q)
    }

    /// No decision or external node descends from a target node.
    pub fn check_temporal_assumption(&self) -> bool {
        let targets = self.nodes_of(NodeClass::Target);
        self.reach(&targets, true)
            .iter()
            .all(|&v| self.nodes[v].class == NodeClass::Target)
    }

    /// Structural part of the assumption behind the extended adjustment
    /// criterion: no external node descends from a decision node, and the
    /// full external set satisfies the back-door criterion.
    pub fn check_external_admissible(&self) -> bool {
        let x = self.nodes_of(NodeClass::Decision);
        let y = self.nodes_of(NodeClass::Target);
        let z = self.nodes_of(NodeClass::External);
        let desc = self.reach(&x, true);
        if z.iter().any(|v| desc.contains(v)) {
            return false;
        }
        self.satisfies_backdoor(&x, &y, &z).unwrap_or(false)
    }

    /// Graph-level check that the decision nodes are d-separated from the
    /// unselected external nodes given the selected ones.
    ///
    /// Under the Markov property this implies the conditional independence
    /// that makes `kappa` an adjustment set; without faithfulness it is
    /// sufficient but not necessary.
    pub fn check_thm10_premise(&self, kappa: &[usize]) -> Result<bool> {
        self.check_nodes(kappa)?;
        if let Some(&v) = kappa
            .iter()
            .find(|&&v| self.nodes[v].class != NodeClass::External)
        {
            return Err(Error::InvalidInput(format!(
                "node {} is not an external node",
                self.nodes[v].label
            )));
        }
        let x = self.nodes_of(NodeClass::Decision);
        let rest: Vec<usize> = self
            .nodes_of(NodeClass::External)
            .into_iter()
            .filter(|v| !kappa.contains(v))
            .collect();
        let q = PathQuery::new(&x, &rest, kappa)?;
        self.is_d_separated(&q)
    }
}

fn topological_order(parents: &[Vec<usize>], children: &[Vec<usize>]) -> Option<Vec<usize>> {
    let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut ready: Vec<usize> = (0..indeg.len()).filter(|&v| indeg[v] == 0).rev().collect();
    let mut order = Vec::with_capacity(indeg.len());
    while let Some(v) = ready.pop() {
        order.push(v);
        for &c in children[v].iter().rev() {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                ready.push(c);
            }
        }
    }
    (order.len() == indeg.len()).then_some(order)
}
