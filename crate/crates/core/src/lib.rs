//! Colored digraphon mean field games.
//!
//! A colored digraphon assigns each ordered pair of graphon indices a
//! probability distribution over `k` edge colors. Agents indexed by
//! `alpha in [0, 1]` interact through color-weighted neighborhood
//! distributions of their in- and out-neighbors. This crate provides
//!
//! - [`digraphon`]: builtin k-digraphons, graph sampling, step digraphons and
//!   cut-norm diagnostics,
//! - [`environments`]: SIS epidemics, Beach and Systemic Risk games,
//! - [`meanfield`]: discretized mean-field / policy ensembles and the forward map,
//! - [`solver`]: dynamic programming, exploitability and online mirror descent,
//! - [`finite_sim`]: N-agent simulation on sampled graphs,
//! - [`export`]: CSV schemas shared with the command line tool.

pub mod digraphon;
pub mod environments;
mod error;
pub mod export;
pub mod finite_sim;
pub mod meanfield;
pub mod rng;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
