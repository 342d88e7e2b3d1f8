//! Optimal rendezvous plans for multi-robot exploration under limited
//! communication, and a deterministic grid simulator in which robots follow
//! those plans.

pub mod harness;
mod keys;
pub mod model;
pub mod plan;
pub mod policy;
pub mod sim;
pub mod solver;
pub mod world;
