//! Network-facing pieces: a cached client for Wikibase SPARQL and entity
//! APIs, an HTTP inference backend, and a stub server for exercising both
//! without the network.

pub mod cache;
pub mod http_backend;
pub mod stub;
pub mod transport;
pub mod wikidata;

pub use cache::{CachePolicy, QueryCache};
pub use http_backend::{predict_http, HttpBackend, HttpEndpoint};
pub use transport::RetryPolicy;
pub use wikidata::{
    entity_label, fetch_neighbors_remote, get_entities, remote_subgraph, render_query, resolve_entity, EntityCandidate,
    RemoteClient, RemoteEndpoint, RemoteError, RemoteNeighbor,
};
