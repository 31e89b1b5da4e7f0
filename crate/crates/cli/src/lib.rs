//! File formats, experiment harness and command-line plumbing for
//! [`ugv_plan_core`].
//!
//! * [`scenario_io`]: versioned JSON scenario documents.
//! * [`report`]: single solves, result documents, trace and geometry CSVs.
//! * [`experiment`]: seeded Monte-Carlo sweeps over the noise power.

pub mod document;
pub mod experiment;
pub mod real;
pub mod report;
pub mod scenario_io;

pub use document::FileError;
