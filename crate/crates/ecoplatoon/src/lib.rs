//! Closed-loop simulation and control for a four-truck heavy-duty platoon.
//!
//! The lead truck follows ordinary traffic (a passenger vehicle whose speed
//! trace comes from a drive cycle) under a fuel-optimal nonlinear MPC that
//! treats the allowed gap range as a cushion.  The three trailing trucks run
//! a serial distributed MPC: each one receives the predicted acceleration
//! sequence of the truck ahead, solves a constrained tracking problem about
//! the constant-gap equilibrium, and passes its own prediction down the
//! chain.  Short gaps reduce aerodynamic drag, so close formation plus a
//! calm leader is where the fuel savings come from.
//!
//! The crate also ships two baselines (a gap-tracking MPC leader and an IDM
//! car-following platoon), a drive-cycle toolkit, and a scenario runner that
//! produces per-step trip logs, fuel totals, and string-stability metrics.

// tolerance checks are written as `!(x <= tol)` so a NaN counts as failure,
// and the numeric code indexes several parallel arrays per loop
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]
#![allow(clippy::manual_range_contains)]
#![allow(clippy::too_many_arguments)]
#![allow(clippy::type_complexity)]

pub mod baselines;
pub mod cycle;
pub mod dmpc;
pub mod dynamics;
pub mod eco;
pub mod error;
pub mod fuel;
pub mod horizon;
pub mod qp;
pub mod report;
pub mod selfcheck;
pub mod sim;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
