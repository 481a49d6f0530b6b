//! Few-shot document-level relation extraction with generative language models.
//!
//! The pipeline asks a model for one relation type at a time, verifies the
//! parsed output (defect pruning, LOF outliers over explanation embeddings,
//! missing query pairs), and re-prompts every missing pair with the full
//! relation list plus an association sub-graph of already extracted triplets.

pub mod corpus;
pub mod extract;
pub mod gog;
pub mod icl;
pub mod llm;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod prompts;
pub mod relmeta;
pub mod verifier;

pub use corpus::{Corpus, DensityGroup, Document, Entity, EntityType, GoldRelation, Mention, QueryPair, Split};
pub use relmeta::{RelationRegistry, RelationType};
