//! In-memory directed labeled knowledge graph.
//!
//! Nodes and edges are stored densely in insertion order. Adjacency is kept
//! in two per-node lists (outgoing and incoming) that reference edge slots,
//! so every neighbor query is ordered by the insertion order of the edges
//! that contribute to it.
//!
//! A [`KnowledgeGraph`] is immutable once built; construct it through a
//! [`GraphBuilder`].

use std::borrow::Borrow;
use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Node type assigned when a record declares none.
pub const UNKNOWN_TYPE: &str = "unknown";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node id must be non-empty")]
    EmptyNodeId,
    #[error("node `{0}` has an empty name")]
    EmptyName(String),
    #[error("relation label must be non-empty")]
    EmptyLabel,
    #[error("node `{0}` declared twice")]
    DuplicateNode(String),
    #[error("edge {from} -[{label}]-> {to} already present")]
    DuplicateEdge { from: String, to: String, label: String },
}

/// Opaque node identifier (Wikidata Q-id, Hetionet `Kind::identifier`, ...).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(value: impl Into<String>) -> Result<Self, GraphError> {
        let value = value.into();
        if value.is_empty() {
            return Err(GraphError::EmptyNodeId);
        }
        Ok(NodeId(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Borrow<str> for NodeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl AsRef<str> for NodeId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub name: String,
    pub node_type: String,
}

impl Node {
    pub fn new(
        id: impl Into<String>,
        name: impl Into<String>,
        node_type: impl Into<String>,
    ) -> Result<Self, GraphError> {
        let id = NodeId::new(id)?;
        let name = name.into();
        if name.is_empty() {
            return Err(GraphError::EmptyName(id.0));
        }
        let mut node_type = node_type.into();
        if node_type.is_empty() {
            node_type = UNKNOWN_TYPE.to_string();
        }
        Ok(Node { id, name, node_type })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationLabel(String);

impl RelationLabel {
    pub fn new(value: impl Into<String>) -> Result<Self, GraphError> {
        let value = value.into();
        if value.is_empty() {
            return Err(GraphError::EmptyLabel);
        }
        Ok(RelationLabel(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Borrow<str> for RelationLabel {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Orientation of a stored edge relative to the node a query started from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// The query node is the edge source.
    Out,
    /// The query node is the edge target.
    In,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub source: NodeId,
    pub target: NodeId,
    pub label: RelationLabel,
}

/// Which stored edges count as adjacency for neighbor queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionPolicy {
    #[default]
    Undirected,
    OutOnly,
    InOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct EdgeSlot {
    source: u32,
    target: u32,
    label: u32,
}

/// Incident edge as seen from one endpoint: the other endpoint and the edge slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Incidence {
    other: u32,
    edge: u32,
}

/// Accumulates nodes and edges, rejecting dangling endpoints and exact duplicates.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    nodes: IndexMap<NodeId, Node>,
    labels: IndexMap<RelationLabel, ()>,
    edges: Vec<EdgeSlot>,
    seen: HashSet<EdgeSlot>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn contains_node(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn add_node(&mut self, node: Node) -> Result<(), GraphError> {
        if self.nodes.contains_key(&node.id) {
            return Err(GraphError::DuplicateNode(node.id.0));
        }
        self.nodes.insert(node.id.clone(), node);
        Ok(())
    }

    /// Adds a directed edge. Fails on a dangling endpoint or an exact
    /// `(source, target, label)` duplicate; the builder is unchanged on error.
    pub fn add_edge(&mut self, source: &str, target: &str, label: &str) -> Result<(), GraphError> {
        let s = self.nodes.get_index_of(source).ok_or_else(|| GraphError::UnknownNode(source.to_string()))?;
        let t = self.nodes.get_index_of(target).ok_or_else(|| GraphError::UnknownNode(target.to_string()))?;
        if label.is_empty() {
            return Err(GraphError::EmptyLabel);
        }
        let l = match self.labels.get_index_of(label) {
            Some(i) => i,
            None => self.labels.insert_full(RelationLabel(label.to_string()), ()).0,
        };
        let slot = EdgeSlot { source: s as u32, target: t as u32, label: l as u32 };
        if !self.seen.insert(slot) {
            return Err(GraphError::DuplicateEdge {
                from: source.to_string(),
                to: target.to_string(),
                label: label.to_string(),
            });
        }
        self.edges.push(slot);
        Ok(())
    }

    pub fn build(self) -> KnowledgeGraph {
        let nodes: Vec<Node> = self.nodes.into_values().collect();
        let labels: Vec<RelationLabel> = self.labels.into_keys().collect();
        let mut ids = HashMap::with_capacity(nodes.len());
        let mut types: Vec<String> = Vec::new();
        for (i, node) in nodes.iter().enumerate() {
            ids.insert(node.id.clone(), i as u32);
            if !types.contains(&node.node_type) {
                types.push(node.node_type.clone());
            }
        }
        let (out_index, in_index) = build_indexes(nodes.len(), &self.edges);
        KnowledgeGraph { nodes, ids, labels, edges: self.edges, out_index, in_index, node_types: types }
    }
}

fn build_indexes(node_count: usize, edges: &[EdgeSlot]) -> (Vec<Vec<Incidence>>, Vec<Vec<Incidence>>) {
    let mut out_index = vec![Vec::new(); node_count];
    let mut in_index = vec![Vec::new(); node_count];
    for (i, e) in edges.iter().enumerate() {
        out_index[e.source as usize].push(Incidence { other: e.target, edge: i as u32 });
        in_index[e.target as usize].push(Incidence { other: e.source, edge: i as u32 });
    }
    (out_index, in_index)
}

/// Directed labeled graph with adjacency indexes. Immutable after construction.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    nodes: Vec<Node>,
    ids: HashMap<NodeId, u32>,
    labels: Vec<RelationLabel>,
    edges: Vec<EdgeSlot>,
    out_index: Vec<Vec<Incidence>>,
    in_index: Vec<Vec<Incidence>>,
    node_types: Vec<String>,
}

impl KnowledgeGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Nodes in insertion order.
    pub fn nodes(&self) -> impl ExactSizeIterator<Item = &Node> + '_ {
        self.nodes.iter()
    }

    /// Edges in insertion order.
    pub fn edges(&self) -> impl ExactSizeIterator<Item = Edge> + '_ {
        self.edges.iter().map(move |e| self.edge_at(e))
    }

    /// Declared node types, in order of first appearance.
    pub fn node_types(&self) -> &[String] {
        &self.node_types
    }

    pub fn node(&self, id: &str) -> Result<&Node, GraphError> {
        self.index_of(id).map(|i| &self.nodes[i as usize])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.ids.contains_key(id)
    }

    fn index_of(&self, id: &str) -> Result<u32, GraphError> {
        self.ids.get(id).copied().ok_or_else(|| GraphError::UnknownNode(id.to_string()))
    }

    fn edge_at(&self, e: &EdgeSlot) -> Edge {
        Edge {
            source: self.nodes[e.source as usize].id.clone(),
            target: self.nodes[e.target as usize].id.clone(),
            label: self.labels[e.label as usize].clone(),
        }
    }

    /// Outgoing adjacency of `id`: `(target, label)` in edge insertion order.
    pub fn out_edges(&self, id: &str) -> Result<Vec<(&Node, &RelationLabel)>, GraphError> {
        let i = self.index_of(id)?;
        Ok(self.out_index[i as usize]
            .iter()
            .map(|inc| (&self.nodes[inc.other as usize], &self.labels[self.edges[inc.edge as usize].label as usize]))
            .collect())
    }

    /// Incoming adjacency of `id`: `(source, label)` in edge insertion order.
    pub fn in_edges(&self, id: &str) -> Result<Vec<(&Node, &RelationLabel)>, GraphError> {
        let i = self.index_of(id)?;
        Ok(self.in_index[i as usize]
            .iter()
            .map(|inc| (&self.nodes[inc.other as usize], &self.labels[self.edges[inc.edge as usize].label as usize]))
            .collect())
    }

    /// Incident edges of node `i` admitted by `policy`, merged by edge slot.
    fn incident(&self, i: u32, policy: DirectionPolicy) -> Vec<Incidence> {
        let out = &self.out_index[i as usize];
        let inc = &self.in_index[i as usize];
        match policy {
            DirectionPolicy::OutOnly => out.clone(),
            DirectionPolicy::InOnly => inc.clone(),
            DirectionPolicy::Undirected => {
                // both lists are sorted by edge slot; merge them
                let mut merged = Vec::with_capacity(out.len() + inc.len());
                let (mut a, mut b) = (0, 0);
                while a < out.len() || b < inc.len() {
                    let take_out = b >= inc.len() || (a < out.len() && out[a].edge <= inc[b].edge);
                    if take_out {
                        merged.push(out[a]);
                        a += 1;
                    } else {
                        merged.push(inc[b]);
                        b += 1;
                    }
                }
                merged
            }
        }
    }

    /// Neighbor slots of node `i`, deduplicated, self excluded, ordered by
    /// the first contributing edge.
    pub(crate) fn neighbor_indices(&self, i: u32, policy: DirectionPolicy) -> Vec<u32> {
        let mut seen = HashSet::new();
        self.incident(i, policy)
            .into_iter()
            .filter(|inc| inc.other != i && seen.insert(inc.other))
            .map(|inc| inc.other)
            .collect()
    }

    pub(crate) fn slot(&self, id: &str) -> Result<u32, GraphError> {
        self.index_of(id)
    }

    pub(crate) fn node_at(&self, i: u32) -> &Node {
        &self.nodes[i as usize]
    }

    /// Every node sharing an admitted edge with `x`. Self-loops do not make a
    /// node its own neighbor.
    pub fn neighbors(&self, x: &str, policy: DirectionPolicy) -> Result<Vec<&Node>, GraphError> {
        let i = self.index_of(x)?;
        Ok(self.neighbor_indices(i, policy).into_iter().map(|j| &self.nodes[j as usize]).collect())
    }

    /// Breadth-first distance partition around `x`: element `h - 1` holds the
    /// nodes at exactly `h` hops, each list in discovery order.
    pub fn k_hop_neighbors(&self, x: &str, k: usize, policy: DirectionPolicy) -> Result<Vec<Vec<&Node>>, GraphError> {
        let start = self.index_of(x)?;
        let mut hops: Vec<Vec<&Node>> = Vec::with_capacity(k);
        let mut visited: HashSet<u32> = HashSet::from([start]);
        let mut frontier = vec![start];
        for _ in 0..k {
            let mut next = Vec::new();
            for &u in &frontier {
                for v in self.neighbor_indices(u, policy) {
                    if visited.insert(v) {
                        next.push(v);
                    }
                }
            }
            hops.push(next.iter().map(|&j| &self.nodes[j as usize]).collect());
            frontier = next;
        }
        Ok(hops)
    }

    /// Hop distances from `x` over undirected adjacency, up to `limit` hops.
    pub(crate) fn distances_within(&self, x: u32, limit: usize) -> HashMap<u32, usize> {
        let mut dist = HashMap::from([(x, 0usize)]);
        let mut queue = VecDeque::from([x]);
        while let Some(u) = queue.pop_front() {
            let d = dist[&u];
            if d == limit {
                continue;
            }
            for v in self.neighbor_indices(u, DirectionPolicy::Undirected) {
                dist.entry(v).or_insert_with(|| {
                    queue.push_back(v);
                    d + 1
                });
            }
        }
        dist
    }

    /// True iff an edge `x -> y` or `y -> x` exists.
    pub fn has_direct_edge(&self, x: &str, y: &str) -> Result<bool, GraphError> {
        let (i, j) = (self.index_of(x)?, self.index_of(y)?);
        Ok(self.out_index[i as usize].iter().any(|inc| inc.other == j)
            || self.out_index[j as usize].iter().any(|inc| inc.other == i))
    }

    /// Labels on all edges joining `x` and `y`, in edge insertion order.
    /// [`Direction::Out`] marks an edge stored as `x -> y`.
    pub fn relation_labels_between(&self, x: &str, y: &str) -> Result<Vec<(RelationLabel, Direction)>, GraphError> {
        let (i, j) = (self.index_of(x)?, self.index_of(y)?);
        Ok(self
            .edges_between(i, j)
            .into_iter()
            .map(|(label, dir)| (self.labels[label as usize].clone(), dir))
            .collect())
    }

    pub(crate) fn edges_between(&self, i: u32, j: u32) -> Vec<(u32, Direction)> {
        let mut found: Vec<(u32, u32, Direction)> = self.out_index[i as usize]
            .iter()
            .filter(|inc| inc.other == j)
            .map(|inc| (inc.edge, self.edges[inc.edge as usize].label, Direction::Out))
            .collect();
        if i != j {
            found.extend(
                self.in_index[i as usize]
                    .iter()
                    .filter(|inc| inc.other == j)
                    .map(|inc| (inc.edge, self.edges[inc.edge as usize].label, Direction::In)),
            );
        }
        found.sort_by_key(|(edge, _, _)| *edge);
        found.into_iter().map(|(_, l, d)| (l, d)).collect()
    }

    pub(crate) fn label_at(&self, l: u32) -> &RelationLabel {
        &self.labels[l as usize]
    }

    /// Rebuilds adjacency from the edge list and compares with the stored indexes.
    pub fn indexes_consistent(&self) -> bool {
        let (out_index, in_index) = build_indexes(self.nodes.len(), &self.edges);
        out_index == self.out_index && in_index == self.in_index
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(nodes: &[&str], edges: &[(&str, &str, &str)]) -> KnowledgeGraph {
        let mut b = GraphBuilder::new();
        for n in nodes {
            b.add_node(Node::new(*n, *n, "thing").unwrap()).unwrap();
        }
        for (s, t, l) in edges {
            b.add_edge(s, t, l).unwrap();
        }
        b.build()
    }

    fn names(nodes: &[&Node]) -> Vec<String> {
        nodes.iter().map(|n| n.name.clone()).collect()
    }

    #[test]
    fn isolated_node_has_no_neighbors() {
        let g = graph(&["a", "b"], &[]);
        assert!(g.neighbors("a", DirectionPolicy::Undirected).unwrap().is_empty());
    }

    #[test]
    fn single_edge_is_symmetric_when_undirected() {
        let g = graph(&["a", "b"], &[("a", "b", "r")]);
        assert_eq!(names(&g.neighbors("a", DirectionPolicy::Undirected).unwrap()), ["b"]);
        assert_eq!(names(&g.neighbors("b", DirectionPolicy::Undirected).unwrap()), ["a"]);
        assert_eq!(names(&g.neighbors("a", DirectionPolicy::OutOnly).unwrap()), ["b"]);
        assert!(g.neighbors("a", DirectionPolicy::InOnly).unwrap().is_empty());
        assert!(g.neighbors("b", DirectionPolicy::OutOnly).unwrap().is_empty());
    }

    #[test]
    fn neighbors_ordered_by_first_contributing_edge() {
        let g = graph(&["x", "a", "b", "c"], &[("c", "x", "r"), ("x", "a", "r"), ("b", "x", "r"), ("x", "c", "s")]);
        assert_eq!(names(&g.neighbors("x", DirectionPolicy::Undirected).unwrap()), ["c", "a", "b"]);
    }

    #[test]
    fn chain_hops() {
        let g = graph(&["a", "b", "c"], &[("a", "b", "r"), ("b", "c", "r")]);
        let hops = g.k_hop_neighbors("a", 2, DirectionPolicy::Undirected).unwrap();
        let hops: Vec<Vec<String>> = hops.iter().map(|h| names(h)).collect();
        assert_eq!(hops, vec![vec!["b".to_string()], vec!["c".to_string()]]);
    }

    #[test]
    fn unknown_node_errors() {
        let g = graph(&["a"], &[]);
        assert_eq!(g.neighbors("zz", DirectionPolicy::Undirected).unwrap_err(), GraphError::UnknownNode("zz".into()));
        assert!(g.has_direct_edge("a", "zz").is_err());
        assert!(g.relation_labels_between("zz", "a").is_err());
        assert!(g.k_hop_neighbors("zz", 1, DirectionPolicy::Undirected).is_err());
    }

    #[test]
    fn direct_edge_both_orientations() {
        let g = graph(&["a", "b", "c"], &[("a", "b", "r")]);
        assert!(g.has_direct_edge("a", "b").unwrap());
        assert!(g.has_direct_edge("b", "a").unwrap());
        assert!(!g.has_direct_edge("a", "c").unwrap());
    }

    #[test]
    fn parallel_labels_in_insertion_order() {
        let g = graph(&["a", "b"], &[("a", "b", "first"), ("b", "a", "second"), ("a", "b", "third")]);
        let labels = g.relation_labels_between("a", "b").unwrap();
        let got: Vec<(&str, Direction)> = labels.iter().map(|(l, d)| (l.as_str(), *d)).collect();
        assert_eq!(got, [("first", Direction::Out), ("second", Direction::In), ("third", Direction::Out)]);
        assert!(g.relation_labels_between("a", "a").unwrap().is_empty());
    }

    #[test]
    fn duplicate_edges_and_dangling_endpoints_rejected() {
        let mut b = GraphBuilder::new();
        b.add_node(Node::new("a", "a", "t").unwrap()).unwrap();
        b.add_node(Node::new("b", "b", "t").unwrap()).unwrap();
        b.add_edge("a", "b", "r").unwrap();
        assert!(matches!(b.add_edge("a", "b", "r"), Err(GraphError::DuplicateEdge { .. })));
        b.add_edge("a", "b", "other").unwrap();
        assert_eq!(b.add_edge("a", "c", "r"), Err(GraphError::UnknownNode("c".into())));
        assert!(matches!(b.add_node(Node::new("a", "again", "t").unwrap()), Err(GraphError::DuplicateNode(_))));
        let g = b.build();
        assert_eq!(g.edge_count(), 2);
        assert!(g.indexes_consistent());
    }

    #[test]
    fn node_validation() {
        assert_eq!(Node::new("", "n", "t"), Err(GraphError::EmptyNodeId));
        assert!(matches!(Node::new("id", "", "t"), Err(GraphError::EmptyName(_))));
        assert_eq!(Node::new("id", "n", "").unwrap().node_type, UNKNOWN_TYPE);
    }

    #[test]
    fn self_loop_is_not_a_neighbor() {
        let g = graph(&["a", "b"], &[("a", "a", "r"), ("a", "b", "r")]);
        assert_eq!(names(&g.neighbors("a", DirectionPolicy::Undirected).unwrap()), ["b"]);
        assert!(g.has_direct_edge("a", "a").unwrap());
    }
}
