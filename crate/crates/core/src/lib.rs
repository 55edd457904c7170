//! Routing for multi-layer satellite / airplane / ship networks.

pub mod distributed;
pub mod error;
pub mod geo;
pub mod graph;
pub mod harness;
pub mod linkmodel;
pub mod mobility;
pub mod neural;
pub mod routing;

pub use error::{Error, Result};
