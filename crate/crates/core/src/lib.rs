//! Multi-cell massive MIMO uplink: how many users to schedule.
//!
//! The crate evaluates closed-form uplink SINR/SE expressions for maximum
//! ratio combining and pilot-based zero-forcing over an infinite hexagonal
//! grid with fractional pilot reuse, sweeps the number of scheduled users
//! and the reuse factor for each antenna count, and cross-checks the closed
//! forms with a link-level Monte Carlo simulator.

pub mod cli;
pub mod error;
pub mod hexgeo;
pub mod moments;
pub mod netmodel;
pub mod optimizer;
pub mod oracle;
pub mod pilotplan;
pub mod rng;
pub mod se_analytic;

pub use error::{Error, Result};
pub use hexgeo::{CellIndex, Point2D};
pub use moments::{MomentEntry, MomentTable, TierPolicy};
pub use netmodel::{InterferenceMode, NetworkConfig, Scheme};
pub use pilotplan::PilotPlan;
