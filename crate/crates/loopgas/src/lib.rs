//! Exact and Bethe free energies of binary factor-graph models, the loop-sum
//! identity, and the polymer expansion built on it.
//!
//! Spins are `s = (-1)^x`; a set bit in a local mask means `s = -1`. All
//! messages are stored as `tanh` values.

pub mod activity;
pub mod bethe;
pub mod bounds;
pub mod bp;
pub mod channel;
pub mod ensemble;
pub mod error;
pub mod exact;
pub mod experiments;
pub mod expander;
pub mod expansion;
pub mod graph;
pub mod loops;
pub mod rate;

pub use error::{Error, Result};
pub use graph::{ChannelParams, FactorGraph, ModelKind, Node, WeightSpec};
