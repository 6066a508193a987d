//! Linking the entity mentions of each instance to knowledge-graph nodes.
//!
//! Each mention is tried as an exact node name, then under [`normalize`],
//! then against the override table. Mentions that fail all three stay
//! unresolved and later get an empty graph context.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use kgprompt_core::data::Instance;
use kgprompt_core::{KnowledgeGraph, NodeId};
use kgprompt_remote::{resolve_entity, RemoteClient, RemoteError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("override for `{name}` maps to both `{first}` and `{second}`")]
    OverrideConflict { name: String, first: String, second: String },
    #[error("override for `{name}` targets `{node}`, which is not in the graph")]
    UnknownOverrideTarget { name: String, node: String },
    #[error("overrides file: {0}")]
    OverridesFile(String),
    #[error(transparent)]
    Remote(#[from] RemoteError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkMethod {
    Exact,
    Normalized,
    ManualOverride,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityLink {
    pub mention: String,
    /// `None` marks an unresolved mention.
    pub node: Option<NodeId>,
    pub method: Option<LinkMethod>,
}

impl EntityLink {
    pub fn is_resolved(&self) -> bool {
        self.node.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairLinkage {
    pub instance_id: String,
    pub e1: EntityLink,
    pub e2: EntityLink,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkReport {
    pub mentions: usize,
    pub by_method: BTreeMap<LinkMethod, usize>,
    pub unresolved: usize,
    pub unresolved_mentions: BTreeSet<String>,
}

/// Lowercases, turns every non-alphanumeric run into one space and trims.
pub fn normalize(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut gap = false;
    for c in name.chars() {
        if c.is_alphanumeric() {
            if gap && !out.is_empty() {
                out.push(' ');
            }
            gap = false;
            out.extend(c.to_lowercase().filter(|l| l.is_alphanumeric()));
        } else {
            gap = true;
        }
    }
    out
}

/// Looks mention strings up in some graph.
pub trait NameResolver {
    fn exact(&mut self, name: &str) -> Result<Option<NodeId>, LinkError>;
    fn normalized(&mut self, name: &str) -> Result<Option<NodeId>, LinkError>;
    fn contains(&mut self, id: &str) -> Result<bool, LinkError>;
}

/// Name index over a loaded graph. When several nodes share a name the
/// first in graph order wins.
pub struct LocalResolver<'g> {
    kg: &'g KnowledgeGraph,
    exact: HashMap<&'g str, &'g NodeId>,
    normalized: HashMap<String, &'g NodeId>,
}

impl<'g> LocalResolver<'g> {
    pub fn new(kg: &'g KnowledgeGraph) -> Self {
        let mut exact = HashMap::new();
        let mut normalized = HashMap::new();
        for n in kg.nodes() {
            exact.entry(n.name.as_str()).or_insert(&n.id);
            normalized.entry(normalize(&n.name)).or_insert(&n.id);
        }
        LocalResolver { kg, exact, normalized }
    }
}

impl NameResolver for LocalResolver<'_> {
    fn exact(&mut self, name: &str) -> Result<Option<NodeId>, LinkError> {
        Ok(self.exact.get(name).map(|id| (*id).clone()))
    }

    fn normalized(&mut self, name: &str) -> Result<Option<NodeId>, LinkError> {
        Ok(self.normalized.get(&normalize(name)).map(|id| (*id).clone()))
    }

    fn contains(&mut self, id: &str) -> Result<bool, LinkError> {
        Ok(self.kg.contains(id))
    }
}

/// Resolves mentions through the Wikibase search API: the first search hit
/// whose label matches (exactly, then normalized) is taken.
pub struct RemoteResolver<'c> {
    client: &'c RemoteClient,
    hits: HashMap<String, Vec<(String, String)>>,
}

impl<'c> RemoteResolver<'c> {
    pub fn new(client: &'c RemoteClient) -> Self {
        RemoteResolver { client, hits: HashMap::new() }
    }

    fn search(&mut self, name: &str) -> Result<&[(String, String)], LinkError> {
        if !self.hits.contains_key(name) {
            let found = resolve_entity(self.client, name, 10)?.into_iter().map(|c| (c.id, c.label)).collect();
            self.hits.insert(name.to_string(), found);
        }
        Ok(&self.hits[name])
    }

    fn first_match(&mut self, name: &str, same: impl Fn(&str) -> bool) -> Result<Option<NodeId>, LinkError> {
        if name.trim().is_empty() {
            return Ok(None);
        }
        Ok(self.search(name)?.iter().find(|(_, label)| same(label)).and_then(|(id, _)| NodeId::new(id.clone()).ok()))
    }
}

impl NameResolver for RemoteResolver<'_> {
    fn exact(&mut self, name: &str) -> Result<Option<NodeId>, LinkError> {
        self.first_match(name, |label| label == name)
    }

    fn normalized(&mut self, name: &str) -> Result<Option<NodeId>, LinkError> {
        let want = normalize(name);
        self.first_match(name, |label| normalize(label) == want)
    }

    fn contains(&mut self, id: &str) -> Result<bool, LinkError> {
        match kgprompt_remote::entity_label(self.client, id) {
            Ok(_) => Ok(true),
            Err(RemoteError::UnknownEntity(_) | RemoteError::InvalidInput(_)) => Ok(false),
            Err(e) => Err(e.into()),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OverrideEntry {
    name: String,
    node: String,
}

/// Manual mention-to-node table, keyed by normalized mention.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Overrides {
    map: BTreeMap<String, String>,
}

impl Overrides {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self, LinkError> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (name, node) in pairs {
            let key = normalize(name);
            match map.get(&key) {
                Some(prev) if prev != node => {
                    return Err(LinkError::OverrideConflict {
                        name: name.to_string(),
                        first: prev.clone(),
                        second: node.to_string(),
                    })
                }
                Some(_) => {}
                None => {
                    map.insert(key, node.to_string());
                }
            }
        }
        Ok(Overrides { map })
    }

    pub fn load(path: &Path) -> Result<Self, LinkError> {
        let raw = fs::read_to_string(path).map_err(|e| LinkError::OverridesFile(format!("{}: {e}", path.display())))?;
        let entries: Vec<OverrideEntry> =
            serde_json::from_str(&raw).map_err(|e| LinkError::OverridesFile(format!("{}: {e}", path.display())))?;
        Self::from_pairs(entries.iter().map(|e| (e.name.as_str(), e.node.as_str())))
    }

    pub fn get(&self, mention: &str) -> Option<&str> {
        self.map.get(&normalize(mention)).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

fn link_one(mention: &str, resolver: &mut dyn NameResolver, overrides: &Overrides) -> Result<EntityLink, LinkError> {
    let found = if let Some(id) = resolver.exact(mention)? {
        Some((id, LinkMethod::Exact))
    } else if let Some(id) = resolver.normalized(mention)? {
        Some((id, LinkMethod::Normalized))
    } else if let Some(node) = overrides.get(mention) {
        if !resolver.contains(node)? {
            return Err(LinkError::UnknownOverrideTarget { name: mention.to_string(), node: node.to_string() });
        }
        let id = NodeId::new(node).map_err(|e| LinkError::OverridesFile(e.to_string()))?;
        Some((id, LinkMethod::ManualOverride))
    } else {
        None
    };
    Ok(EntityLink {
        mention: mention.to_string(),
        node: found.as_ref().map(|(id, _)| id.clone()),
        method: found.map(|(_, m)| m),
    })
}

/// Links both mentions of every instance, in dataset order.
pub fn link_pairs(
    instances: &[Instance],
    resolver: &mut dyn NameResolver,
    overrides: &Overrides,
) -> Result<(Vec<PairLinkage>, LinkReport), LinkError> {
    let mut memo: HashMap<String, EntityLink> = HashMap::new();
    let mut report = LinkReport::default();
    let mut out = Vec::with_capacity(instances.len());
    for inst in instances {
        let mut pair = Vec::with_capacity(2);
        for mention in [inst.e1(), inst.e2()] {
            let link = match memo.get(&mention) {
                Some(l) => l.clone(),
                None => {
                    let l = link_one(&mention, resolver, overrides)?;
                    memo.insert(mention.clone(), l.clone());
                    l
                }
            };
            report.mentions += 1;
            match link.method {
                Some(m) => *report.by_method.entry(m).or_default() += 1,
                None => {
                    report.unresolved += 1;
                    report.unresolved_mentions.insert(mention);
                }
            }
            pair.push(link);
        }
        let e2 = pair.pop().expect("two mentions");
        let e1 = pair.pop().expect("two mentions");
        out.push(PairLinkage { instance_id: inst.instance_id.clone(), e1, e2 });
    }
    Ok((out, report))
}
