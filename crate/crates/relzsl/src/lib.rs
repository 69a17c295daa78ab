//! Relation-preserving zero-shot learning.
//!
//! The library trains an encoder-decoder network that maps class
//! embeddings into visual feature space so that unseen classes can be
//! recognized by nearest-cosine matching. Modules are layered: `numkit`
//! holds the numeric primitives, `relations`/`model`/`objectives`/`miner`
//! implement the learning machinery, and `data`/`trainer`/`evaluator`/
//! `inference` wire it into a usable pipeline driven by `cli`.

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod evaluator;
pub mod inference;
pub mod miner;
pub mod model;
pub mod numkit;
pub mod objectives;
pub mod relations;
pub mod trainer;

pub use error::{Error, Result};
