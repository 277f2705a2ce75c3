//! Preprocessing, storage and analysis for brain plasticity simulation ensembles.
//!
//! Raw per-neuron monitor output is transposed into per-timestep frames
//! ([`ingest`]), stored as Parquet ([`store`]), and served to clients as
//! compact binary payloads ([`payload`]) alongside chart statistics
//! ([`stats`]). [`collab`] holds the replicated view state that keeps several
//! devices looking at the same thing.

pub mod aggregate;
pub mod collab;
pub mod error;
pub mod ingest;
pub mod model;
pub mod payload;
pub mod pipeline;
pub mod stats;
pub mod store;

pub use error::{Error, Result};
pub use model::*;
