//! Event-triggered decentralized composite optimization.
//!
//! Agents on an undirected graph jointly minimize `Σ_i f_i(θ) + g_i(θ)` with a
//! linearized augmented Lagrangian iteration. Each agent re-broadcasts its
//! iterate only when it has drifted past a time-varying threshold from the
//! copy its neighbors hold.

pub mod cli;
pub mod engine;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod objective;
pub mod reference;
pub mod trigger;

pub use error::{Error, Result};
