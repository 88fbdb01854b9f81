//! Simulation laboratory for an anisotropic finite-range percolation model
//! and its scaling-limit companions.
//!
//! The lattice has horizontal edges of range `N` (open with probability
//! `1/(2N)`) and nearest-neighbour vertical edges (open with probability
//! `min(1, kappa * N^{-b})`). The crate provides:
//!
//! - quenched, hash-keyed edge randomness and lazy cluster exploration
//!   ([`percolation`]),
//! - the critical branching random walk that envelopes the horizontal
//!   growth ([`envelope`]),
//! - the {0,1}-valued horizontal process with attrition, its killed
//!   variant and good-configuration tooling ([`attrition`]),
//! - windowed approximate densities and weighted sup norms ([`density`]),
//! - the exact law of the uniform-step random walk and its Gaussian
//!   comparison ([`kernel`]),
//! - numerical references for the limiting stochastic PDEs ([`spde`]),
//! - the renormalized block construction and oriented percolation
//!   ([`renorm`]),
//! - batch experiment drivers with CSV/SVG reporting ([`experiments`],
//!   [`report`]).

pub mod attrition;
pub mod coins;
pub mod config;
pub mod density;
pub mod envelope;
pub mod experiments;
pub mod kernel;
pub mod percolation;
pub mod renorm;
pub mod report;
pub mod spde;
pub mod stats;

mod error;

pub use config::{Caps, EdgeProbs, LatticeConfig};
pub use error::Error;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;
