//! Distributed solvers for `Ax = b` where each agent knows a block of rows
//! and talks only to its in-neighbors in a changing directed graph.
//!
//! Each agent keeps a state satisfying its own equations and repeatedly
//! moves it toward the average of its neighbors' states, projected onto the
//! kernel of its own coefficient block.

pub mod analysis;
pub mod async_engine;
pub mod error;
pub mod experiment;
pub mod graphs;
pub mod linalg;
pub mod lsq;
pub mod rng;
pub mod sync_engine;
pub mod trace;
pub mod tracking;

pub use error::{Error, Result};
