//! Solver and verification toolkit for a combinatorial auction over
//! substitutable and complementary resources.
//!
//! Resources are partitioned into groups: resources within a group are
//! substitutable (a per-user discount factor penalizes stacking them),
//! resources across groups are complementary (a premium factor rewards
//! complete bundles). The seller knows each buyer's type distribution and
//! picks the allocation that maximizes hazard-adjusted (virtual) surplus;
//! costs are charged by the envelope rule so that truthful reporting is a
//! best response and the lowest type is left with zero utility.
//!
//! Modules:
//! - [`model`]: catalogs, type distributions, valuation families, profiles,
//!   allocations, type grids, and discretized mechanism tables.
//! - [`valuation`]: valuation/derivative evaluation and virtual valuations.
//! - [`utility`]: premium/discount surplus and truthful/misreport utilities.
//! - [`solver`]: revenue-optimal mechanism computation.
//! - [`verification`]: numerical IR/IC/envelope/monotonicity certification.
//! - [`scenario`]: scenario files, built-in presets, batch runs and sweeps.

pub mod error;
pub mod model;
pub mod scenario;
pub mod solver;
pub mod utility;
pub mod valuation;
pub mod verification;

pub use error::{Error, Result};
