//! Energy-minimal mission planning for a ground vehicle that collects data
//! from backscatter IoT tags.
//!
//! The vehicle chooses which stopping points to visit, drives the shortest
//! closed tour through them, and splits the remaining time budget between
//! users at the stops. The total energy is motion energy plus the energy
//! radiated by the RF source. The planning problem is decomposed into
//!
//! * an exact travelling-salesman problem over the selected stops
//!   ([`mobility::solve_tsp`]),
//! * a convex time/energy allocation for the fixed selection
//!   ([`allocation::solve_allocation`]),
//! * a successive local search over the binary selection vector
//!   ([`planner::sls_optimize`]).
//!
//! The crate is `no_std` and needs only `alloc`. All transcendental functions
//! go through `libm`, so results are bit-identical across platforms. Enable
//! the `serde` feature for serializable parameter and result types.
//!
//! Vertex indices are zero-based; vertex `0` is the depot where every tour
//! starts and ends.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod allocation;
mod error;
pub mod matrix;
pub mod mobility;
mod num;
pub mod planner;
pub mod scenario;

pub use error::{Error, Result};
pub use matrix::Matrix;
