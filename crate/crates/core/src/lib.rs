//! Dual deduplication: a client-side deletion transform paired with a
//! cloud-side bracket/Huffman codec and a base forest, plus the metrics and
//! information-theoretic privacy analysis around them.

pub mod alphabet;
pub mod bracket;
pub mod client;
pub mod corpus;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod forest;
pub mod huffman;
pub mod instrument;
pub mod metrics;
pub mod privacy;
pub mod prng;
pub mod swap;

pub use alphabet::{FileId, Policy, Symbol, SymbolDistribution, SystemConfig};
pub use engine::{CloudEngine, StoredRecord};
pub use error::{Error, Result};
