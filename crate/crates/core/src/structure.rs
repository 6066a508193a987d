//! Extraction of the three graph structures used as prompt context:
//! neighbor nodes, common neighbor nodes and metapaths between a pair.
//!
//! Every extractor computes the full structure first and then keeps a
//! seeded random subset of it (see [`select_subset`]). The generator for a
//! given extraction is derived from `(seed, kind, pair)`, so extractions
//! can run in any order or in parallel without changing results.

use std::collections::HashSet;

use log::warn;
use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Direction, DirectionPolicy, GraphError, KnowledgeGraph, Node, NodeId, RelationLabel};
use crate::seeding::{derive_seed, rng};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StructureError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("pair endpoints are the same node `{0}`")]
    SamePairNode(String),
    #[error("invalid extraction limits: {0}")]
    InvalidLimits(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StructureKind {
    NN,
    CNN,
    MP,
}

impl StructureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StructureKind::NN => "NN",
            StructureKind::CNN => "CNN",
            StructureKind::MP => "MP",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionLimits {
    pub max_neighbors: usize,
    pub max_common_neighbors: usize,
    /// Number of metapaths kept per pair.
    pub max_metapaths: usize,
    pub max_hops: usize,
    /// Enumeration stops after this many metapaths.
    pub path_ceiling: usize,
    pub policy: DirectionPolicy,
}

impl Default for ExtractionLimits {
    fn default() -> Self {
        ExtractionLimits {
            max_neighbors: 4,
            max_common_neighbors: 5,
            max_metapaths: 1,
            max_hops: 4,
            path_ceiling: 10_000,
            policy: DirectionPolicy::Undirected,
        }
    }
}

impl ExtractionLimits {
    /// Defaults for a remotely queried graph, which is only ever one hop deep.
    pub fn remote() -> Self {
        ExtractionLimits { max_hops: 1, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), StructureError> {
        if self.max_hops < 1 {
            return Err(StructureError::InvalidLimits("max_hops must be at least 1".into()));
        }
        if self.path_ceiling < 1 {
            return Err(StructureError::InvalidLimits("path_ceiling must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborEntry {
    pub node: Node,
    /// Labels of the edges joining the anchor and this neighbor; `Out` means
    /// the edge is stored anchor -> neighbor.
    pub relations: Vec<(RelationLabel, Direction)>,
}

/// One step of a metapath. `Out` means the edge is stored in walk order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStep {
    pub label: RelationLabel,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metapath {
    pub nodes: Vec<Node>,
    pub steps: Vec<PathStep>,
}

impl Metapath {
    /// Number of nodes on the path.
    pub fn length(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_types(&self) -> Vec<&str> {
        self.nodes.iter().map(|n| n.node_type.as_str()).collect()
    }

    pub fn node_ids(&self) -> Vec<&str> {
        self.nodes.iter().map(|n| n.id.as_str()).collect()
    }

    /// Checks the metapath invariants against `kg`: at least three nodes, no
    /// repeats, and every step backed by a stored edge with that label and
    /// orientation.
    pub fn is_valid_in(&self, kg: &KnowledgeGraph) -> bool {
        if self.nodes.len() < 3 || self.steps.len() + 1 != self.nodes.len() {
            return false;
        }
        let mut seen = HashSet::new();
        if !self.nodes.iter().all(|n| seen.insert(&n.id)) {
            return false;
        }
        self.nodes.windows(2).zip(&self.steps).all(|(pair, step)| {
            let (a, b) = (pair[0].id.as_str(), pair[1].id.as_str());
            kg.edges().any(|e| {
                e.label == step.label
                    && match step.direction {
                        Direction::Out => e.source.as_str() == a && e.target.as_str() == b,
                        Direction::In => e.source.as_str() == b && e.target.as_str() == a,
                    }
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Payload {
    NN {
        neighbors: Vec<NeighborEntry>,
        total: usize,
    },
    CNN {
        common: Vec<Node>,
        /// Size of the full intersection before subsetting.
        total: usize,
    },
    MP {
        paths: Vec<Metapath>,
        /// Number of metapaths enumerated before subsetting.
        total: usize,
        /// Enumeration hit the path ceiling.
        truncated: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureBundle {
    pub anchor: NodeId,
    /// Second pair member; absent for single-node neighbor bundles.
    pub partner: Option<NodeId>,
    pub payload: Payload,
    pub selection_seed: u64,
}

impl StructureBundle {
    pub fn kind(&self) -> StructureKind {
        match self.payload {
            Payload::NN { .. } => StructureKind::NN,
            Payload::CNN { .. } => StructureKind::CNN,
            Payload::MP { .. } => StructureKind::MP,
        }
    }

    /// Number of selected items in the payload.
    pub fn len(&self) -> usize {
        match &self.payload {
            Payload::NN { neighbors, .. } => neighbors.len(),
            Payload::CNN { common, .. } => common.len(),
            Payload::MP { paths, .. } => paths.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True when the selected payload respects `limits`.
    pub fn within(&self, limits: &ExtractionLimits) -> bool {
        match &self.payload {
            Payload::NN { neighbors, .. } => neighbors.len() <= limits.max_neighbors,
            Payload::CNN { common, .. } => common.len() <= limits.max_common_neighbors,
            Payload::MP { paths, .. } => {
                paths.len() <= limits.max_metapaths && paths.iter().all(|p| p.length() <= limits.max_hops + 1)
            }
        }
    }
}

/// Keeps a uniformly random `m`-subset of `items` in original relative
/// order; returns `items` unchanged when it has at most `m` elements.
pub fn select_subset<T: Clone>(items: &[T], m: usize, seed: u64) -> Vec<T> {
    if items.len() <= m {
        return items.to_vec();
    }
    let mut picked = index::sample(&mut rng(seed), items.len(), m).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| items[i].clone()).collect()
}

fn relations_for(
    kg: &KnowledgeGraph,
    anchor: u32,
    other: u32,
    policy: DirectionPolicy,
) -> Vec<(RelationLabel, Direction)> {
    kg.edges_between(anchor, other)
        .into_iter()
        .filter(|(_, d)| match policy {
            DirectionPolicy::Undirected => true,
            DirectionPolicy::OutOnly => *d == Direction::Out,
            DirectionPolicy::InOnly => *d == Direction::In,
        })
        .map(|(l, d)| (kg.label_at(l).clone(), d))
        .collect()
}

/// Up to `limits.max_neighbors` one-hop neighbors of `x`, with their edge labels.
pub fn extract_neighbors(
    kg: &KnowledgeGraph,
    x: &str,
    limits: &ExtractionLimits,
    seed: u64,
) -> Result<StructureBundle, StructureError> {
    let xi = kg.slot(x)?;
    let all = kg.neighbor_indices(xi, limits.policy);
    let total = all.len();
    let chosen = select_subset(&all, limits.max_neighbors, derive_seed(seed, &["NN", x]));
    let neighbors = chosen
        .into_iter()
        .map(|j| NeighborEntry { node: kg.node_at(j).clone(), relations: relations_for(kg, xi, j, limits.policy) })
        .collect();
    Ok(StructureBundle {
        anchor: kg.node_at(xi).id.clone(),
        partner: None,
        payload: Payload::NN { neighbors, total },
        selection_seed: seed,
    })
}

fn distinct_pair(kg: &KnowledgeGraph, x: &str, y: &str) -> Result<(u32, u32), StructureError> {
    let (xi, yi) = (kg.slot(x)?, kg.slot(y)?);
    if xi == yi {
        return Err(StructureError::SamePairNode(x.to_string()));
    }
    Ok((xi, yi))
}

/// The full common-neighbor set `N(x) ∩ N(y)`, ordered as in `N(x)`.
pub fn common_neighbors<'g>(
    kg: &'g KnowledgeGraph,
    x: &str,
    y: &str,
    policy: DirectionPolicy,
) -> Result<Vec<&'g Node>, StructureError> {
    let (xi, yi) = distinct_pair(kg, x, y)?;
    Ok(common_indices(kg, xi, yi, policy).into_iter().map(|i| kg.node_at(i)).collect())
}

fn common_indices(kg: &KnowledgeGraph, xi: u32, yi: u32, policy: DirectionPolicy) -> Vec<u32> {
    let ny: HashSet<u32> = kg.neighbor_indices(yi, policy).into_iter().collect();
    kg.neighbor_indices(xi, policy).into_iter().filter(|n| ny.contains(n)).collect()
}

/// Up to `limits.max_common_neighbors` of the pair's common neighbors; the
/// full intersection size is recorded as `total`.
pub fn extract_common_neighbors(
    kg: &KnowledgeGraph,
    x: &str,
    y: &str,
    limits: &ExtractionLimits,
    seed: u64,
) -> Result<StructureBundle, StructureError> {
    let (xi, yi) = distinct_pair(kg, x, y)?;
    let all = common_indices(kg, xi, yi, limits.policy);
    let total = all.len();
    let chosen = select_subset(&all, limits.max_common_neighbors, derive_seed(seed, &["CNN", x, y]));
    Ok(StructureBundle {
        anchor: kg.node_at(xi).id.clone(),
        partner: Some(kg.node_at(yi).id.clone()),
        payload: Payload::CNN { common: chosen.into_iter().map(|i| kg.node_at(i).clone()).collect(), total },
        selection_seed: seed,
    })
}

/// Result of an exhaustive metapath enumeration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathEnumeration {
    pub paths: Vec<Metapath>,
    pub truncated: bool,
}

/// Enumerates every simple undirected path from `x` to `y` with between 3
/// and `max_hops + 1` nodes, in depth-first order. The two-node path is
/// never produced, whether or not `x` and `y` are adjacent.
pub fn all_metapaths(
    kg: &KnowledgeGraph,
    x: &str,
    y: &str,
    max_hops: usize,
    ceiling: usize,
) -> Result<PathEnumeration, StructureError> {
    let (xi, yi) = distinct_pair(kg, x, y)?;
    let mut out = Vec::new();
    let mut truncated = false;
    if max_hops >= 2 {
        // nodes that can still reach y within the remaining budget
        let to_target = kg.distances_within(yi, max_hops - 1);
        let mut walker = Walker {
            kg,
            target: yi,
            max_hops,
            ceiling,
            to_target: &to_target,
            path: vec![xi],
            on_path: HashSet::from([xi]),
            found: &mut out,
            truncated: &mut truncated,
        };
        walker.descend(xi);
    }
    if truncated {
        warn!("metapath enumeration for ({x}, {y}) stopped at the ceiling of {ceiling} paths");
    }
    let paths = out.into_iter().map(|p| materialize(kg, &p)).collect();
    Ok(PathEnumeration { paths, truncated })
}

struct Walker<'a> {
    kg: &'a KnowledgeGraph,
    target: u32,
    max_hops: usize,
    ceiling: usize,
    to_target: &'a std::collections::HashMap<u32, usize>,
    path: Vec<u32>,
    on_path: HashSet<u32>,
    found: &'a mut Vec<Vec<u32>>,
    truncated: &'a mut bool,
}

impl Walker<'_> {
    fn descend(&mut self, u: u32) {
        let depth = self.path.len() - 1;
        for v in self.kg.neighbor_indices(u, DirectionPolicy::Undirected) {
            if *self.truncated {
                return;
            }
            if v == self.target {
                if depth >= 1 {
                    if self.found.len() == self.ceiling {
                        *self.truncated = true;
                        return;
                    }
                    let mut p = self.path.clone();
                    p.push(v);
                    self.found.push(p);
                }
                continue;
            }
            if self.on_path.contains(&v) {
                continue;
            }
            let budget = self.max_hops - depth - 1;
            if self.to_target.get(&v).is_some_and(|&d| d <= budget) {
                self.path.push(v);
                self.on_path.insert(v);
                self.descend(v);
                self.on_path.remove(&v);
                self.path.pop();
            }
        }
    }
}

fn materialize(kg: &KnowledgeGraph, path: &[u32]) -> Metapath {
    let steps = path
        .windows(2)
        .map(|w| {
            let (label, direction) = kg.edges_between(w[0], w[1])[0];
            PathStep { label: kg.label_at(label).clone(), direction }
        })
        .collect();
    Metapath { nodes: path.iter().map(|&i| kg.node_at(i).clone()).collect(), steps }
}

/// Enumerates metapaths between `x` and `y` and keeps `limits.max_metapaths`
/// of them at random.
pub fn enumerate_metapaths(
    kg: &KnowledgeGraph,
    x: &str,
    y: &str,
    limits: &ExtractionLimits,
    seed: u64,
) -> Result<StructureBundle, StructureError> {
    if limits.max_hops < 2 {
        return Err(StructureError::InvalidLimits("metapaths need max_hops of at least 2".into()));
    }
    let found = all_metapaths(kg, x, y, limits.max_hops, limits.path_ceiling)?;
    let total = found.paths.len();
    let paths = select_subset(&found.paths, limits.max_metapaths, derive_seed(seed, &["MP", x, y]));
    Ok(StructureBundle {
        anchor: kg.node(x)?.id.clone(),
        partner: Some(kg.node(y)?.id.clone()),
        payload: Payload::MP { paths, total, truncated: found.truncated },
        selection_seed: seed,
    })
}
