//! Core algorithms of a federated learning simulator that studies how client
//! selection affects the energy spent to reach a target accuracy.
//!
//! The crate is `no_std` (it needs `alloc`) and performs no IO. It contains
//!
//! * label distributions and the symmetrized KL divergence ([`distributions`]),
//! * the `(alpha, rho)` Dirichlet data partitioner ([`partition`]),
//! * similarity and repulsive clustering plus the adjusted Rand index
//!   ([`clustering`]),
//! * a Gaussian mechanism on label distributions ([`privacy`]),
//! * per-round client selection strategies ([`selection`]),
//! * a small from-scratch FedAvg engine ([`model`]),
//! * the energy ledger and its formulas ([`energy`]),
//! * the round loop that ties everything together ([`runner`]).
//!
//! Every random draw is taken from a named ChaCha stream derived from the run
//! seed (see [`rng`]), so identical configurations reproduce bit for bit.

#![no_std]

extern crate alloc;

pub mod clustering;
pub mod distributions;
pub mod energy;
mod error;
pub mod model;
pub mod partition;
pub mod privacy;
pub mod rng;
pub mod runner;
pub mod selection;

pub use error::{Error, Result};
