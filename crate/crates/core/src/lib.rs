//! Joint spectrum and power allocation for cooperative downlink FDMA.
//!
//! The crate minimizes the total transmit power ratio of several base
//! stations (BSs) that may jointly serve user equipment (UEs) over a shared
//! band. It is organised bottom-up:
//!
//! - [`model`]: normalized instances, allocations and constraint checks.
//! - [`association`]: pairwise SNR-ratio orders, cooperation vectors and the
//!   UE-BS association they induce.
//! - [`solver`]: the convex power and bandwidth solve for a fixed association.
//! - [`jspa`]: the search over associations with interval pruning.
//! - [`oracle`]: exhaustive search, shift cycles and optimality certificates.
//! - [`harness`]: Monte-Carlo simulation of the cellular scenario.

pub mod association;
pub mod error;
pub mod harness;
pub mod jspa;
pub mod model;
pub mod oracle;
mod roots;
pub mod solver;

pub use association::{associate, enumerate_cc, Association, CcEntry, CcVector, PairOrders};
pub use error::{Error, Result};
pub use model::{evaluate, normalize, required_power, Allocation, Instance, PhysicalProblem, Tolerances};
pub use solver::{solve_fixed, BudgetKind, DualState, FixedAssocProblem};
