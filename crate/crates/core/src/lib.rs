//! Tests for network dependence in node-attribute data, simulators for
//! network-dependent values, and estimators that either ignore or account
//! for that dependence.
//!
//! ```
//! use netdep::{graph::{Network, WeightMatrix}, deptest::{morans_i, NodeValues}};
//!
//! let w = WeightMatrix::adjacency(&Network::path(4)).unwrap();
//! let y = NodeValues::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
//! assert!((morans_i(&y, &w).unwrap() - 1.0 / 3.0).abs() < 1e-12);
//! ```

pub mod deptest;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod inference;
pub mod io;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
