//! Loaders that turn local dump files into a [`KnowledgeGraph`].
//!
//! Two formats are understood:
//!
//! - the published Hetionet JSON dump (`nodes` with `kind`/`identifier`/`name`,
//!   `edges` with `source_id`/`target_id`/`kind`/`direction`), optionally
//!   bzip2-compressed;
//! - a neutral line-delimited edge list where every line is either
//!   `{"node": {"id", "name", "type"}}` or `{"edge": {"source", "target", "label"}}`.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphBuilder, GraphError, KnowledgeGraph, Node, UNKNOWN_TYPE};

/// Stored warning lines are capped; the counters stay exact.
const MAX_WARNINGS: usize = 100;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("schema error in {location}: {message}")]
    Schema { location: String, message: String },
}

impl IngestError {
    fn schema(location: impl Into<String>, message: impl Into<String>) -> Self {
        IngestError::Schema { location: location.into(), message: message.into() }
    }

    fn missing(location: impl Into<String>, field: &str) -> Self {
        Self::schema(location, format!("missing field `{field}`"))
    }

    fn from_json(err: serde_json::Error, line_offset: usize) -> Self {
        IngestError::Parse { line: err.line() + line_offset, column: err.column(), message: err.to_string() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub nodes_loaded: usize,
    /// Edge records accepted from the source file.
    pub edges_loaded: usize,
    /// Directed edges in the resulting graph (two-way records count twice).
    pub directed_edges: usize,
    pub duplicates_rejected: usize,
    pub warnings: Vec<String>,
}

impl IngestReport {
    fn warn(&mut self, message: String) {
        if self.warnings.len() < MAX_WARNINGS {
            self.warnings.push(message);
        } else if self.warnings.len() == MAX_WARNINGS {
            self.warnings.push("further warnings suppressed".to_string());
        }
    }
}

fn open(path: &Path) -> Result<Box<dyn Read>, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io { path: path.to_path_buf(), source })?;
    let reader = BufReader::with_capacity(1 << 20, file);
    if path.extension().is_some_and(|e| e == "bz2") {
        Ok(Box::new(BufReader::new(bzip2::read::MultiBzDecoder::new(reader))))
    } else {
        Ok(Box::new(reader))
    }
}

/// Hetionet identifiers are integers for some kinds (genes) and strings for others.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum HetIdentifier {
    Int(i64),
    Str(String),
}

impl HetIdentifier {
    fn render(&self) -> String {
        match self {
            HetIdentifier::Int(i) => i.to_string(),
            HetIdentifier::Str(s) => s.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct HetNode {
    kind: Option<String>,
    identifier: Option<HetIdentifier>,
    name: Option<String>,
}

#[derive(Debug, Deserialize)]
struct HetEdge {
    source_id: Option<(String, HetIdentifier)>,
    target_id: Option<(String, HetIdentifier)>,
    kind: Option<String>,
    direction: Option<String>,
}

#[derive(Debug, Deserialize)]
struct HetDump {
    nodes: Option<Vec<HetNode>>,
    edges: Option<Vec<HetEdge>>,
}

/// Hetionet node ids follow the `Kind::identifier` convention of the hetnet tooling.
pub fn hetionet_node_id(kind: &str, identifier: &str) -> String {
    format!("{kind}::{identifier}")
}

/// Loads a Hetionet JSON dump (`.json` or `.json.bz2`).
///
/// Records marked `both` become two directed edges, `forward` keeps the
/// stored orientation and `backward` reverses it.
pub fn load_hetionet_json(path: impl AsRef<Path>) -> Result<(KnowledgeGraph, IngestReport), IngestError> {
    let reader = open(path.as_ref())?;
    let dump: HetDump = serde_json::from_reader(reader).map_err(|e| {
        if e.is_io() {
            IngestError::Io { path: path.as_ref().to_path_buf(), source: io::Error::other(e.to_string()) }
        } else {
            IngestError::from_json(e, 0)
        }
    })?;
    let nodes = dump.nodes.ok_or_else(|| IngestError::missing("dump", "nodes"))?;
    let edges = dump.edges.ok_or_else(|| IngestError::missing("dump", "edges"))?;

    let mut builder = GraphBuilder::new();
    let mut report = IngestReport::default();
    for (i, rec) in nodes.into_iter().enumerate() {
        let loc = format!("nodes[{i}]");
        let kind = rec.kind.ok_or_else(|| IngestError::missing(&loc, "kind"))?;
        let identifier = rec.identifier.ok_or_else(|| IngestError::missing(&loc, "identifier"))?.render();
        let name = rec.name.ok_or_else(|| IngestError::missing(&loc, "name"))?;
        let node = Node::new(hetionet_node_id(&kind, &identifier), name, kind)
            .map_err(|e| IngestError::schema(&loc, e.to_string()))?;
        builder.add_node(node).map_err(|e| IngestError::schema(&loc, e.to_string()))?;
    }
    report.nodes_loaded = builder.node_count();

    for (i, rec) in edges.into_iter().enumerate() {
        let loc = format!("edges[{i}]");
        let (skind, sid) = rec.source_id.ok_or_else(|| IngestError::missing(&loc, "source_id"))?;
        let (tkind, tid) = rec.target_id.ok_or_else(|| IngestError::missing(&loc, "target_id"))?;
        let kind = rec.kind.ok_or_else(|| IngestError::missing(&loc, "kind"))?;
        let direction = rec.direction.ok_or_else(|| IngestError::missing(&loc, "direction"))?;
        let source = hetionet_node_id(&skind, &sid.render());
        let target = hetionet_node_id(&tkind, &tid.render());
        for id in [&source, &target] {
            if !builder.contains_node(id) {
                return Err(IngestError::schema(&loc, format!("edge references unknown node id `{id}`")));
            }
        }
        let orientations: Vec<(&str, &str)> = match direction.as_str() {
            "both" => vec![(&source, &target), (&target, &source)],
            "forward" => vec![(&source, &target)],
            "backward" => vec![(&target, &source)],
            other => return Err(IngestError::schema(&loc, format!("unknown direction marker `{other}`"))),
        };
        let mut added = 0;
        for (s, t) in orientations {
            match builder.add_edge(s, t, &kind) {
                Ok(()) => added += 1,
                Err(GraphError::DuplicateEdge { .. }) => {
                    report.duplicates_rejected += 1;
                    report.warn(format!("{loc}: duplicate edge {s} -[{kind}]-> {t} skipped"));
                }
                Err(e) => return Err(IngestError::schema(&loc, e.to_string())),
            }
        }
        if added > 0 {
            report.edges_loaded += 1;
        }
    }
    let graph = builder.build();
    report.directed_edges = graph.edge_count();
    Ok((graph, report))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonlLine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    node: Option<JsonlNode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edge: Option<JsonlEdge>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonlNode {
    id: Option<String>,
    name: Option<String>,
    #[serde(rename = "type")]
    node_type: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonlEdge {
    source: Option<String>,
    target: Option<String>,
    label: Option<String>,
}

/// Loads the line-delimited edge-list format. Blank lines are skipped.
pub fn load_edge_list_jsonl(path: impl AsRef<Path>) -> Result<(KnowledgeGraph, IngestReport), IngestError> {
    let path = path.as_ref();
    let reader = BufReader::new(open(path)?);
    read_edge_list_jsonl(reader).map_err(|e| match e {
        IngestError::Io { source, .. } => IngestError::Io { path: path.to_path_buf(), source },
        other => other,
    })
}

pub fn read_edge_list_jsonl(reader: impl BufRead) -> Result<(KnowledgeGraph, IngestReport), IngestError> {
    let mut builder = GraphBuilder::new();
    let mut report = IngestReport::default();
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|source| IngestError::Io { path: PathBuf::new(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let loc = format!("line {lineno}");
        let rec: JsonlLine = serde_json::from_str(&line).map_err(|e| IngestError::from_json(e, n))?;
        match (rec.node, rec.edge) {
            (Some(_), Some(_)) => return Err(IngestError::schema(loc, "record has both `node` and `edge` keys")),
            (None, None) => return Err(IngestError::schema(loc, "record needs a `node` or `edge` key")),
            (Some(node), None) => {
                let id = node.id.ok_or_else(|| IngestError::missing(&loc, "node.id"))?;
                let name = node.name.ok_or_else(|| IngestError::missing(&loc, "node.name"))?;
                let node_type = node.node_type.unwrap_or_else(|| UNKNOWN_TYPE.to_string());
                let node = Node::new(id, name, node_type).map_err(|e| IngestError::schema(&loc, e.to_string()))?;
                builder.add_node(node).map_err(|e| IngestError::schema(&loc, e.to_string()))?;
            }
            (None, Some(edge)) => {
                let source = edge.source.ok_or_else(|| IngestError::missing(&loc, "edge.source"))?;
                let target = edge.target.ok_or_else(|| IngestError::missing(&loc, "edge.target"))?;
                let label = edge.label.ok_or_else(|| IngestError::missing(&loc, "edge.label"))?;
                match builder.add_edge(&source, &target, &label) {
                    Ok(()) => report.edges_loaded += 1,
                    Err(GraphError::DuplicateEdge { .. }) => {
                        report.duplicates_rejected += 1;
                        report.warn(format!("{loc}: duplicate edge {source} -[{label}]-> {target} skipped"));
                    }
                    Err(GraphError::UnknownNode(id)) => {
                        return Err(IngestError::schema(loc, format!("edge references unknown node id `{id}`")))
                    }
                    Err(e) => return Err(IngestError::schema(loc, e.to_string())),
                }
            }
        }
    }
    let graph = builder.build();
    report.nodes_loaded = graph.node_count();
    report.directed_edges = graph.edge_count();
    Ok((graph, report))
}

/// Writes `graph` in the edge-list format: all nodes, then all edges, in
/// insertion order.
pub fn write_edge_list_jsonl(graph: &KnowledgeGraph, writer: impl Write) -> io::Result<()> {
    let mut w = BufWriter::new(writer);
    for node in graph.nodes() {
        let line = JsonlLine {
            node: Some(JsonlNode {
                id: Some(node.id.to_string()),
                name: Some(node.name.clone()),
                node_type: Some(node.node_type.clone()),
            }),
            edge: None,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    for edge in graph.edges() {
        let line = JsonlLine {
            node: None,
            edge: Some(JsonlEdge {
                source: Some(edge.source.to_string()),
                target: Some(edge.target.to_string()),
                label: Some(edge.label.to_string()),
            }),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn export_edge_list_jsonl(graph: &KnowledgeGraph, path: impl AsRef<Path>) -> Result<(), IngestError> {
    let path = path.as_ref();
    let io_err = |source| IngestError::Io { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(io_err)?;
    write_edge_list_jsonl(graph, file).map_err(io_err)
}
