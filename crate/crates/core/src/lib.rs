//! Graph-native cognitive memory engine.
//!
//! Items own immutable revision chains; tags are the only mutable layer and
//! define what is believed. Belief change, hybrid retrieval, traversal,
//! consolidation and working-memory sessions all sit on one in-process
//! [`store::Graph`].

pub mod agm_suite;
pub mod belief;
pub mod clock;
pub mod dream;
pub mod engine;
pub mod kref;
pub mod retrieval;
pub mod session;
pub mod store;
pub mod traversal;

pub use kref::{Kref, KrefError};
pub use store::{Graph, RevisionRef};
