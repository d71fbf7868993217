//! Cold-start recommendation engine.
//!
//! Pipeline: [`enrichment`] turns sparse item metadata into semantic profiles,
//! [`graph`] stores items, entities and users in a weighted multi-relational
//! graph, [`profiling`] and [`cognition`] describe the user and the session,
//! [`recommender`] retrieves and ranks candidates, and [`adaptation`] explains,
//! presents and learns from feedback. [`eval`] reproduces the offline
//! MovieLens protocol.

pub mod adaptation;
pub mod cognition;
pub mod config;
pub mod embed;
pub mod engine;
pub mod enrichment;
pub mod eval;
pub mod graph;
pub mod profiling;
pub mod provider;
pub mod recommender;
pub mod vark;
