//! Entity resolution and one-hop neighborhoods from a Wikibase SPARQL
//! endpoint and entity API, served through [`QueryCache`].

use std::collections::BTreeSet;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use kgprompt_core::graph::{Direction, GraphBuilder, GraphError, KnowledgeGraph, Node, RelationLabel};
use log::info;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use url::Url;

use crate::cache::{CachePolicy, QueryCache};
use crate::transport::{agent, exchange, RetryPolicy};

/// Environment variable that replaces the configured SPARQL URL.
pub const SPARQL_URL_ENV: &str = "KGPROMPT_SPARQL_URL";
/// Environment variable that replaces the configured entity API URL.
pub const ENTITY_API_URL_ENV: &str = "KGPROMPT_ENTITY_API_URL";

const ENTITY_PREFIX: &str = "http://www.wikidata.org/entity/";
const NEIGHBOR_TYPE: &str = "item";

pub const QUERY_OUT: &str = include_str!("../queries/neighbors_out.rq");
pub const QUERY_IN: &str = include_str!("../queries/neighbors_in.rq");
pub const QUERY_LABEL: &str = include_str!("../queries/label.rq");

#[derive(Debug, Error)]
pub enum RemoteError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("network error: {0}")]
    Network(String),
    #[error("rate limited{}", retry_after.map(|d| format!(", retry after {}s", d.as_secs())).unwrap_or_default())]
    RateLimited { retry_after: Option<Duration> },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("not in cache and the cache is read-only: {0}")]
    CacheMiss(String),
    #[error("cache error: {0}")]
    Cache(#[from] std::io::Error),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteEndpoint {
    pub sparql_url: String,
    pub entity_api_url: String,
    pub user_agent: String,
    /// Per-request timeout in seconds.
    pub timeout: f64,
    pub max_retries: u32,
    /// Base backoff in seconds.
    pub backoff: f64,
    /// Minimum spacing between requests, in seconds.
    pub politeness_delay: f64,
}

impl Default for RemoteEndpoint {
    fn default() -> Self {
        RemoteEndpoint {
            sparql_url: "https://query.wikidata.org/sparql".into(),
            entity_api_url: "https://www.wikidata.org/w/api.php".into(),
            user_agent: concat!("kgprompt/", env!("CARGO_PKG_VERSION")).into(),
            timeout: 60.0,
            max_retries: 3,
            backoff: 1.0,
            politeness_delay: 1.0,
        }
    }
}

fn check_url(field: &str, raw: &str) -> Result<(), RemoteError> {
    let url = Url::parse(raw).map_err(|e| RemoteError::InvalidInput(format!("{field} `{raw}`: {e}")))?;
    if !matches!(url.scheme(), "http" | "https") || url.host().is_none() {
        return Err(RemoteError::InvalidInput(format!("{field} `{raw}` must be an http(s) URL")));
    }
    Ok(())
}

impl RemoteEndpoint {
    /// Applies the URL override environment variables, if set.
    pub fn with_env_overrides(mut self) -> Self {
        if let Ok(url) = std::env::var(SPARQL_URL_ENV) {
            self.sparql_url = url;
        }
        if let Ok(url) = std::env::var(ENTITY_API_URL_ENV) {
            self.entity_api_url = url;
        }
        self
    }

    pub fn validate(&self) -> Result<(), RemoteError> {
        check_url("sparql_url", &self.sparql_url)?;
        check_url("entity_api_url", &self.entity_api_url)?;
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return Err(RemoteError::InvalidInput("timeout must be positive".into()));
        }
        if !(self.backoff >= 0.0 && self.politeness_delay >= 0.0) {
            return Err(RemoteError::InvalidInput("backoff and politeness_delay must be non-negative".into()));
        }
        Ok(())
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy { max_retries: self.max_retries, backoff: self.backoff, ..RetryPolicy::default() }
    }
}

/// A search hit or entity record from the entity API.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityCandidate {
    pub id: String,
    pub label: String,
    pub description: String,
}

/// One statement-based neighbor of a remote entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteNeighbor {
    pub node: Node,
    pub property: String,
    pub label: RelationLabel,
    /// `Out` when the queried entity is the statement subject.
    pub direction: Direction,
}

/// Sequential client for one endpoint. Every response passes through the cache.
pub struct RemoteClient {
    endpoint: RemoteEndpoint,
    cache: QueryCache,
    agent: ureq::Agent,
    last_request: Mutex<Option<Instant>>,
}

impl RemoteClient {
    pub fn new(endpoint: RemoteEndpoint, cache: QueryCache) -> Result<Self, RemoteError> {
        endpoint.validate()?;
        let agent = agent(Duration::from_secs_f64(endpoint.timeout), &endpoint.user_agent);
        Ok(RemoteClient { endpoint, cache, agent, last_request: Mutex::new(None) })
    }

    pub fn endpoint(&self) -> &RemoteEndpoint {
        &self.endpoint
    }

    pub fn cache(&self) -> &QueryCache {
        &self.cache
    }

    fn pace(&self) {
        let mut last = self.last_request.lock().expect("pacing lock");
        let gap = Duration::from_secs_f64(self.endpoint.politeness_delay);
        if let Some(t) = *last {
            let since = t.elapsed();
            if since < gap {
                std::thread::sleep(gap - since);
            }
        }
        *last = Some(Instant::now());
    }

    fn cached(&self, key: &str, fetch: impl FnOnce() -> Result<Value, RemoteError>) -> Result<Value, RemoteError> {
        if let Some(entry) = self.cache.get(key)? {
            return Ok(entry.response);
        }
        if self.cache.policy == CachePolicy::ReadOnly {
            let first = key.lines().find(|l| !l.starts_with('#')).unwrap_or(key);
            return Err(RemoteError::CacheMiss(first.chars().take(120).collect()));
        }
        let value = fetch()?;
        self.cache.put(key, &value)?;
        Ok(value)
    }

    fn finish(&self, what: &str, reply: Result<crate::transport::Reply, String>) -> Result<Value, RemoteError> {
        let reply = reply.map_err(RemoteError::Network)?;
        match reply.status {
            200..=299 => {
                serde_json::from_str(&reply.body).map_err(|e| RemoteError::MalformedResponse(format!("{what}: {e}")))
            }
            429 => Err(RemoteError::RateLimited { retry_after: reply.retry_after }),
            s if s >= 500 => Err(RemoteError::Network(format!("{what}: HTTP {s} after retries"))),
            status => Err(RemoteError::Http { status, body: reply.body.chars().take(500).collect() }),
        }
    }

    /// Runs a SELECT query and returns the JSON result document.
    pub fn sparql(&self, query: &str) -> Result<Value, RemoteError> {
        self.cached(query, || {
            let policy = self.endpoint.retry_policy();
            let reply = exchange(&policy, "sparql", || {
                self.pace();
                self.agent
                    .post(&self.endpoint.sparql_url)
                    .header("Accept", "application/sparql-results+json")
                    .send_form([("query", query)])
            });
            self.finish("sparql", reply)
        })
    }

    /// Calls the entity API with `params`; `format=json` is added.
    pub fn entity_api(&self, params: &[(&str, &str)]) -> Result<Value, RemoteError> {
        let mut sorted: Vec<(&str, &str)> = params.to_vec();
        sorted.push(("format", "json"));
        sorted.sort();
        self.cached(&entity_api_key(&sorted), || {
            let policy = self.endpoint.retry_policy();
            let reply = exchange(&policy, "entity api", || {
                self.pace();
                self.agent.get(&self.endpoint.entity_api_url).query_pairs(sorted.iter().copied()).call()
            });
            self.finish("entity api", reply)
        })
    }
}

/// Canonical cache text of an entity API call: sorted `key=value` pairs.
pub fn entity_api_key(params: &[(&str, &str)]) -> String {
    let mut sorted = params.to_vec();
    sorted.sort();
    let canonical = sorted.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join("&");
    format!("entity-api?{canonical}")
}

/// Checks that `id` looks like an item id (`Q` followed by digits).
pub fn validate_entity_id(id: &str) -> Result<(), RemoteError> {
    let ok = id.len() > 1 && id.starts_with('Q') && id[1..].bytes().all(|b| b.is_ascii_digit());
    if ok {
        Ok(())
    } else {
        Err(RemoteError::InvalidInput(format!("`{id}` is not an entity id")))
    }
}

/// Fills the `{{ENTITY}}` placeholder of a query template.
pub fn render_query(template: &str, id: &str) -> Result<String, RemoteError> {
    validate_entity_id(id)?;
    Ok(template.replace("{{ENTITY}}", id))
}

fn api_error(v: &Value) -> Option<String> {
    v.get("error").map(|e| {
        let code = e.get("code").and_then(Value::as_str).unwrap_or("unknown");
        let info = e.get("info").and_then(Value::as_str).unwrap_or("");
        format!("{code}: {info}")
    })
}

fn str_field(v: &Value, key: &str) -> String {
    v.get(key).and_then(Value::as_str).unwrap_or_default().to_string()
}

/// Ranked candidates for a free-text name, in endpoint order.
pub fn resolve_entity(client: &RemoteClient, name: &str, limit: usize) -> Result<Vec<EntityCandidate>, RemoteError> {
    let name = name.trim();
    if name.is_empty() {
        return Err(RemoteError::InvalidInput("entity name must be non-empty".into()));
    }
    let limit = limit.clamp(1, 50).to_string();
    let v = client.entity_api(&[
        ("action", "wbsearchentities"),
        ("search", name),
        ("language", "en"),
        ("type", "item"),
        ("limit", &limit),
    ])?;
    if let Some(err) = api_error(&v) {
        return Err(RemoteError::MalformedResponse(err));
    }
    let hits = v
        .get("search")
        .and_then(Value::as_array)
        .ok_or_else(|| RemoteError::MalformedResponse("missing `search` array".into()))?;
    hits.iter()
        .map(|h| {
            let id = h
                .get("id")
                .and_then(Value::as_str)
                .ok_or_else(|| RemoteError::MalformedResponse("search hit without `id`".into()))?;
            Ok(EntityCandidate {
                id: id.to_string(),
                label: str_field(h, "label"),
                description: str_field(h, "description"),
            })
        })
        .collect()
}

/// English labels and descriptions for `ids`, in input order; ids the
/// endpoint reports missing are skipped.
pub fn get_entities(client: &RemoteClient, ids: &[&str]) -> Result<Vec<EntityCandidate>, RemoteError> {
    for id in ids {
        validate_entity_id(id)?;
    }
    if ids.is_empty() {
        return Ok(Vec::new());
    }
    let joined = ids.join("|");
    let v = client.entity_api(&[
        ("action", "wbgetentities"),
        ("ids", &joined),
        ("props", "labels|descriptions"),
        ("languages", "en"),
    ])?;
    if let Some(err) = api_error(&v) {
        return Err(RemoteError::MalformedResponse(err));
    }
    let entities = v
        .get("entities")
        .and_then(Value::as_object)
        .ok_or_else(|| RemoteError::MalformedResponse("missing `entities` object".into()))?;
    let text = |e: &Value, key: &str| -> String {
        e.get(key)
            .and_then(|m| m.get("en"))
            .and_then(|m| m.get("value"))
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string()
    };
    Ok(ids
        .iter()
        .filter_map(|id| entities.get(*id))
        .filter(|e| e.get("missing").is_none())
        .map(|e| EntityCandidate {
            id: str_field(e, "id"),
            label: text(e, "labels"),
            description: text(e, "descriptions"),
        })
        .collect())
}

fn bindings(doc: &Value) -> Result<&Vec<Value>, RemoteError> {
    doc.get("results")
        .and_then(|r| r.get("bindings"))
        .and_then(Value::as_array)
        .ok_or_else(|| RemoteError::MalformedResponse("missing `results.bindings`".into()))
}

fn binding<'a>(row: &'a Value, var: &str) -> Option<(&'a str, &'a str)> {
    let b = row.get(var)?;
    Some((b.get("type")?.as_str()?, b.get("value")?.as_str()?))
}

fn entity_suffix(uri: &str) -> Option<&str> {
    uri.strip_prefix(ENTITY_PREFIX)
}

/// Label and description of `id`, or `UnknownEntity` if it has no label.
pub fn entity_label(client: &RemoteClient, id: &str) -> Result<EntityCandidate, RemoteError> {
    let doc = client.sparql(&render_query(QUERY_LABEL, id)?)?;
    let row = bindings(&doc)?.first().ok_or_else(|| RemoteError::UnknownEntity(id.to_string()))?;
    let label = binding(row, "label")
        .map(|(_, v)| v.to_string())
        .ok_or_else(|| RemoteError::MalformedResponse("label row without `label`".into()))?;
    Ok(EntityCandidate {
        id: id.to_string(),
        label,
        description: binding(row, "description").map(|(_, v)| v.to_string()).unwrap_or_default(),
    })
}

fn numeric(id: &str) -> u64 {
    id[1..].parse().unwrap_or(u64::MAX)
}

fn parse_neighbors(doc: &Value, direction: Direction) -> Result<Vec<RemoteNeighbor>, RemoteError> {
    let mut out = Vec::new();
    for row in bindings(doc)? {
        let (Some((_, prop_uri)), Some((kind, neighbor_uri))) = (binding(row, "prop"), binding(row, "neighbor")) else {
            return Err(RemoteError::MalformedResponse("neighbor row without `prop` or `neighbor`".into()));
        };
        if kind != "uri" {
            continue;
        }
        let (Some(property), Some(neighbor)) = (entity_suffix(prop_uri), entity_suffix(neighbor_uri)) else {
            continue;
        };
        if validate_entity_id(neighbor).is_err() {
            continue;
        }
        let prop_label = binding(row, "propLabel").map_or(property, |(_, v)| v);
        let name = binding(row, "neighborLabel").map_or(neighbor, |(_, v)| v);
        out.push(RemoteNeighbor {
            node: Node::new(neighbor, name, NEIGHBOR_TYPE)?,
            property: property.to_string(),
            label: RelationLabel::new(prop_label)?,
            direction,
        });
    }
    Ok(out)
}

/// All entity-valued one-hop neighbors of `x`, both directions, sorted by
/// property id, then neighbor id, then direction.
pub fn fetch_neighbors_remote(client: &RemoteClient, x: &str) -> Result<Vec<RemoteNeighbor>, RemoteError> {
    entity_label(client, x)?;
    let mut all = parse_neighbors(&client.sparql(&render_query(QUERY_OUT, x)?)?, Direction::Out)?;
    all.extend(parse_neighbors(&client.sparql(&render_query(QUERY_IN, x)?)?, Direction::In)?);
    all.retain(|n| n.node.id.as_str() != x);
    all.sort_by(|a, b| {
        (numeric(&a.property), numeric(a.node.id.as_str()), a.direction == Direction::In).cmp(&(
            numeric(&b.property),
            numeric(b.node.id.as_str()),
            b.direction == Direction::In,
        ))
    });
    let mut seen = BTreeSet::new();
    all.retain(|n| seen.insert((n.property.clone(), n.node.id.clone(), n.direction == Direction::In)));
    Ok(all)
}

/// Builds a graph from the one-hop neighborhoods of `ids`. Anchors come
/// first, then neighbors in fetch order.
pub fn remote_subgraph(client: &RemoteClient, ids: &[&str]) -> Result<KnowledgeGraph, RemoteError> {
    let mut builder = GraphBuilder::new();
    let mut fetched = Vec::new();
    for id in ids {
        if builder.contains_node(id) {
            continue;
        }
        let info = entity_label(client, id)?;
        builder.add_node(Node::new(*id, info.label, NEIGHBOR_TYPE)?)?;
        fetched.push((*id, fetch_neighbors_remote(client, id)?));
    }
    for (id, neighbors) in &fetched {
        for n in neighbors {
            if !builder.contains_node(n.node.id.as_str()) {
                builder.add_node(n.node.clone())?;
            }
            let (s, t) = match n.direction {
                Direction::Out => (*id, n.node.id.as_str()),
                Direction::In => (n.node.id.as_str(), *id),
            };
            match builder.add_edge(s, t, n.label.as_str()) {
                Ok(()) | Err(GraphError::DuplicateEdge { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    let kg = builder.build();
    info!("remote subgraph: {} nodes, {} edges", kg.node_count(), kg.edge_count());
    Ok(kg)
}
