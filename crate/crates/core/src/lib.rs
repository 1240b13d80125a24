//! Generate racetracks that elicit a target arousal trace.
//!
//! The pipeline: a designer proposes a genome, [`track::decode`] lays out the
//! tiles, [`closure::close_circuit`] turns it into a circuit, [`sim::simulate`]
//! drives an evaluator car around it, [`knn::KnnModel`] maps each pair of
//! telemetry windows to an arousal change, and [`eval::reward`] scores the
//! resulting trace against the target.

pub mod closure;
pub mod config;
pub mod corpus;
pub mod designers;
pub mod eval;
pub mod harness;
pub mod knn;
pub mod render;
pub mod sim;
pub mod track;
