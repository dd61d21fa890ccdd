//! Coalitional model-predictive control for fleets fishing shared regions.
//!
//! Boats choose how to spread their effort over regions with linear stock dynamics.
//! Coalitions of boats plan jointly over a receding horizon, negotiate merges and
//! splits every decision epoch, and optionally share their catch by the ratios agreed
//! when they merged. A clustering heuristic offers a cheaper route to a structure.

pub mod coalition;
pub mod error;
pub mod heuristic;
pub mod model;
pub mod mpc;
pub mod sim;

pub use error::{Error, Result};
