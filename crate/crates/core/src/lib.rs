//! Player-side machinery for uncoupled bandit learning in bilinear games:
//! convex action sets behind linear oracles, exploration spanners,
//! ellipsoidal regularizers, set-induced norms, phase estimation, and the
//! optimistic FTRL loop with its RVU audit.
//!
//! Nothing in this crate knows about payoff matrices, opponents, or the
//! referee — that lives in `saddlesim-sim`. Keeping the crate boundary here
//! makes the uncoupling contract structural.

pub mod error;
pub mod estimator;
pub mod geometry;
mod lp;
pub mod norms;
pub mod oftrl;
pub mod player;
pub mod rng;
pub mod rounding;
pub mod spanner;

pub use error::{CoreError, Result};
pub use geometry::{ConvexSet, SetKind};
pub use player::{PhaseReport, PlayerParams, PlayerState};
