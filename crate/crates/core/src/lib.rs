//! Knowledge-graph structures as prompt context for pairwise causal
//! relation classification.
//!
//! The pipeline runs bottom-up through these modules:
//!
//! - [`graph`]: the in-memory directed labeled graph and its adjacency queries
//! - [`ingest`]: loaders for the Hetionet JSON dump and a JSONL edge list
//! - [`structure`]: neighbor, common-neighbor and metapath extraction
//! - [`verbalize`]: rendering of structures into graph-context sentences
//! - [`prompts`]: cloze and generative prompt assembly, label mapping, truncation
//! - [`data`]: datasets, fold plans and few-shot sampling
//! - [`backend`]: inference wire types, response decoding and a mock backend
//! - [`eval`]: precision/recall/F1 and fold aggregation

pub mod backend;
pub mod data;
pub mod eval;
pub mod graph;
pub mod ingest;
pub mod prompts;
pub mod seeding;
pub mod structure;
pub mod task;
pub mod verbalize;

pub use graph::{Direction, DirectionPolicy, GraphBuilder, KnowledgeGraph, Node, NodeId, RelationLabel};
pub use structure::StructureKind;
pub use task::ClassLabel;
