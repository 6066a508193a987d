//! Rendering of structure bundles into natural-language graph contexts.
//!
//! A [`GraphContext`] keeps the inputs it was rendered from, so prompt
//! truncation can drop items from the end of its list and re-render instead
//! of cutting the sentence mid-way.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Direction, Node, NodeId, RelationLabel};
use crate::structure::{Metapath, NeighborEntry, Payload, StructureBundle, StructureKind};

#[derive(Debug, Error)]
pub enum VerbalizeError {
    #[error("expected a {expected:?} bundle, got {found:?}")]
    KindMismatch { expected: StructureKind, found: StructureKind },
    #[error("neighbor `{0}` carries no relation label")]
    MissingLabel(String),
    #[error("template field `{0}` must be non-empty")]
    EmptyTemplateField(&'static str),
    #[error("cannot read template file: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid template file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Connective words used by the renderers. Every field is a literal that
/// appears verbatim in the output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplateSet {
    pub nn_connective: String,
    pub nn_labeled_pre: String,
    pub nn_labeled_post: String,
    /// Used instead of `nn_labeled_post` for every label group after the first.
    pub nn_labeled_post_continued: String,
    pub cnn_prefix: String,
    pub cnn_suffix: String,
    pub mp_connective: String,
    pub mp_path_intro: String,
    pub list_separator: String,
    pub final_conjunction: String,
    /// Separates consecutive metapaths.
    pub path_separator: String,
    /// Joins the sentences of a combined context (e.g. both pair members' neighbors).
    pub context_separator: String,
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet {
            nn_connective: "is connected to".into(),
            nn_labeled_pre: "has".into(),
            nn_labeled_post: "relation with".into(),
            nn_labeled_post_continued: "with".into(),
            cnn_prefix: "Common neighbor nodes of".into(),
            cnn_suffix: "are:".into(),
            mp_connective: "is connected to".into(),
            mp_path_intro: "via the following paths:".into(),
            list_separator: ", ".into(),
            final_conjunction: "and".into(),
            path_separator: "; ".into(),
            context_separator: ". ".into(),
        }
    }
}

impl TemplateSet {
    pub fn validate(&self) -> Result<(), VerbalizeError> {
        let fields: [(&'static str, &str); 12] = [
            ("nn_connective", &self.nn_connective),
            ("nn_labeled_pre", &self.nn_labeled_pre),
            ("nn_labeled_post", &self.nn_labeled_post),
            ("nn_labeled_post_continued", &self.nn_labeled_post_continued),
            ("cnn_prefix", &self.cnn_prefix),
            ("cnn_suffix", &self.cnn_suffix),
            ("mp_connective", &self.mp_connective),
            ("mp_path_intro", &self.mp_path_intro),
            ("list_separator", &self.list_separator),
            ("final_conjunction", &self.final_conjunction),
            ("path_separator", &self.path_separator),
            ("context_separator", &self.context_separator),
        ];
        match fields.iter().find(|(_, v)| v.is_empty()) {
            Some((name, _)) => Err(VerbalizeError::EmptyTemplateField(name)),
            None => Ok(()),
        }
    }

    /// Loads a template set from JSON; missing keys keep their defaults.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, VerbalizeError> {
        let t: TemplateSet = serde_json::from_str(&fs::read_to_string(path)?)?;
        t.validate()?;
        Ok(t)
    }
}

/// Rendering input for one sentence of a graph context.
#[derive(Debug, Clone, PartialEq, Eq)]
enum ContextPart {
    Neighbors { anchor: Node, entries: Vec<NeighborEntry>, labeled: bool },
    Common { x: Node, y: Node, common: Vec<Node> },
    Metapaths { x: Node, y: Node, paths: Vec<Metapath> },
}

impl ContextPart {
    fn item_count(&self) -> usize {
        match self {
            ContextPart::Neighbors { entries, .. } => entries.len(),
            ContextPart::Common { common, .. } => common.len(),
            ContextPart::Metapaths { paths, .. } => paths.len(),
        }
    }

    fn truncate_items(&mut self, keep: usize) {
        match self {
            ContextPart::Neighbors { entries, .. } => entries.truncate(keep),
            ContextPart::Common { common, .. } => common.truncate(keep),
            ContextPart::Metapaths { paths, .. } => paths.truncate(keep),
        }
    }

    fn source_nodes(&self) -> Vec<NodeId> {
        match self {
            ContextPart::Neighbors { entries, .. } => entries.iter().map(|e| e.node.id.clone()).collect(),
            ContextPart::Common { common, .. } => common.iter().map(|n| n.id.clone()).collect(),
            ContextPart::Metapaths { paths, .. } => {
                paths.iter().flat_map(|p| p.nodes.iter().map(|n| n.id.clone())).collect()
            }
        }
    }

    fn render(&self, t: &TemplateSet) -> String {
        if self.item_count() == 0 {
            return String::new();
        }
        match self {
            ContextPart::Neighbors { anchor, entries, labeled: false } => {
                let names: Vec<&str> = entries.iter().map(|e| e.node.name.as_str()).collect();
                format!("{} {} {}", anchor.name, t.nn_connective, names.join(&t.list_separator))
            }
            ContextPart::Neighbors { anchor, entries, labeled: true } => {
                let groups: Vec<String> = label_groups(entries)
                    .into_iter()
                    .enumerate()
                    .map(|(i, (label, names))| {
                        let post = if i == 0 { &t.nn_labeled_post } else { &t.nn_labeled_post_continued };
                        format!("{} {} {} {}", t.nn_labeled_pre, label, post, conjoin(&names, t))
                    })
                    .collect();
                format!("{} {}", anchor.name, groups.join(&t.list_separator))
            }
            ContextPart::Common { x, y, common } => {
                let names: Vec<&str> = common.iter().map(|n| n.name.as_str()).collect();
                format!(
                    "{} {} {} {} {} {}",
                    t.cnn_prefix,
                    x.name,
                    t.final_conjunction,
                    y.name,
                    t.cnn_suffix,
                    names.join(&t.list_separator)
                )
            }
            ContextPart::Metapaths { x, y, paths } => {
                let rendered: Vec<String> = paths.iter().map(|p| path_clauses(p, t)).collect();
                format!(
                    "{} {} {} {} {}",
                    x.name,
                    t.mp_connective,
                    y.name,
                    t.mp_path_intro,
                    rendered.join(&t.path_separator)
                )
            }
        }
    }
}

/// Groups neighbor names by relation label, labels in first-appearance order.
fn label_groups(entries: &[NeighborEntry]) -> Vec<(&RelationLabel, Vec<&str>)> {
    let mut groups: Vec<(&RelationLabel, Vec<&str>)> = Vec::new();
    for e in entries {
        for (label, _) in &e.relations {
            match groups.iter_mut().find(|(l, _)| *l == label) {
                Some((_, names)) => {
                    if !names.contains(&e.node.name.as_str()) {
                        names.push(&e.node.name)
                    }
                }
                None => groups.push((label, vec![&e.node.name])),
            }
        }
    }
    groups
}

/// `a`, `a and b`, `a, b and c`.
fn conjoin(names: &[&str], t: &TemplateSet) -> String {
    match names {
        [] => String::new(),
        [one] => one.to_string(),
        [init @ .., last] => format!("{} {} {}", init.join(&t.list_separator), t.final_conjunction, last),
    }
}

/// One clause per step, each naming the stored edge's source first.
fn path_clauses(path: &Metapath, t: &TemplateSet) -> String {
    path.nodes
        .windows(2)
        .zip(&path.steps)
        .map(|(w, step)| {
            let (src, dst) = match step.direction {
                Direction::Out => (&w[0], &w[1]),
                Direction::In => (&w[1], &w[0]),
            };
            format!("{} {} {}", src.name, step.label, dst.name)
        })
        .collect::<Vec<_>>()
        .join(&t.list_separator)
}

/// Natural-language description of a graph structure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GraphContext {
    pub kind: StructureKind,
    pub text: String,
    pub source_nodes: Vec<NodeId>,
    pub empty: bool,
    #[serde(skip)]
    parts: Vec<ContextPart>,
    #[serde(skip)]
    templates: TemplateSet,
}

impl GraphContext {
    fn from_parts(kind: StructureKind, parts: Vec<ContextPart>, templates: TemplateSet) -> Self {
        let sentences: Vec<String> = parts.iter().map(|p| p.render(&templates)).filter(|s| !s.is_empty()).collect();
        let text = sentences.join(&templates.context_separator);
        let source_nodes = parts.iter().flat_map(ContextPart::source_nodes).collect();
        GraphContext { kind, empty: text.is_empty(), text, source_nodes, parts, templates }
    }

    /// A context with no structure, e.g. for a pair that could not be linked.
    pub fn empty(kind: StructureKind) -> Self {
        Self::from_parts(kind, Vec::new(), TemplateSet::default())
    }

    /// Joins several contexts of the same kind into one, sentence by sentence.
    pub fn combine(kind: StructureKind, contexts: Vec<GraphContext>, templates: &TemplateSet) -> Self {
        let parts = contexts.into_iter().flat_map(|c| c.parts).collect();
        Self::from_parts(kind, parts, templates.clone())
    }

    /// Number of droppable list items (neighbors, common neighbors or paths).
    pub fn item_count(&self) -> usize {
        self.parts.iter().map(ContextPart::item_count).sum()
    }

    /// Re-renders with the last `n` items removed, starting from the last sentence.
    pub fn drop_last_items(&self, n: usize) -> Self {
        let mut parts = self.parts.clone();
        let mut remaining = n;
        for part in parts.iter_mut().rev() {
            if remaining == 0 {
                break;
            }
            let count = part.item_count();
            let drop = remaining.min(count);
            part.truncate_items(count - drop);
            remaining -= drop;
        }
        Self::from_parts(self.kind, parts, self.templates.clone())
    }
}

fn expect_kind(bundle: &StructureBundle, expected: StructureKind) -> Result<(), VerbalizeError> {
    let found = bundle.kind();
    if found != expected {
        return Err(VerbalizeError::KindMismatch { expected, found });
    }
    Ok(())
}

/// `<x> is connected to <n1>, <n2>, ...`
pub fn verbalize_neighbors(
    x: &Node,
    bundle: &StructureBundle,
    t: &TemplateSet,
) -> Result<GraphContext, VerbalizeError> {
    expect_kind(bundle, StructureKind::NN)?;
    let Payload::NN { neighbors, .. } = &bundle.payload else { unreachable!() };
    let part = ContextPart::Neighbors { anchor: x.clone(), entries: neighbors.clone(), labeled: false };
    Ok(GraphContext::from_parts(StructureKind::NN, vec![part], t.clone()))
}

/// `<x> has <L1> relation with <a and b>, has <L2> with <c>`
pub fn verbalize_neighbors_labeled(
    x: &Node,
    bundle: &StructureBundle,
    t: &TemplateSet,
) -> Result<GraphContext, VerbalizeError> {
    expect_kind(bundle, StructureKind::NN)?;
    let Payload::NN { neighbors, .. } = &bundle.payload else { unreachable!() };
    if let Some(e) = neighbors.iter().find(|e| e.relations.is_empty()) {
        return Err(VerbalizeError::MissingLabel(e.node.name.clone()));
    }
    let part = ContextPart::Neighbors { anchor: x.clone(), entries: neighbors.clone(), labeled: true };
    Ok(GraphContext::from_parts(StructureKind::NN, vec![part], t.clone()))
}

/// `Common neighbor nodes of <x> and <y> are: <n1>, <n2>, ...`
pub fn verbalize_common_neighbors(
    x: &Node,
    y: &Node,
    bundle: &StructureBundle,
    t: &TemplateSet,
) -> Result<GraphContext, VerbalizeError> {
    expect_kind(bundle, StructureKind::CNN)?;
    let Payload::CNN { common, .. } = &bundle.payload else { unreachable!() };
    let part = ContextPart::Common { x: x.clone(), y: y.clone(), common: common.clone() };
    Ok(GraphContext::from_parts(StructureKind::CNN, vec![part], t.clone()))
}

/// `<x> is connected to <y> via the following paths: <a r b>, <c s b>, ...`
pub fn verbalize_metapath(
    x: &Node,
    y: &Node,
    bundle: &StructureBundle,
    t: &TemplateSet,
) -> Result<GraphContext, VerbalizeError> {
    expect_kind(bundle, StructureKind::MP)?;
    let Payload::MP { paths, .. } = &bundle.payload else { unreachable!() };
    let part = ContextPart::Metapaths { x: x.clone(), y: y.clone(), paths: paths.clone() };
    Ok(GraphContext::from_parts(StructureKind::MP, vec![part], t.clone()))
}
