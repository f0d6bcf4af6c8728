//! Referee-side simulation harness: the zero-sum game instance with payoff
//! normalization, the lockstep round loop driving two uncoupled players,
//! ground-truth metrics (duality gaps, concentration events, utility
//! increments), and CSV/JSON/SVG trace output.

pub mod dynamics;
pub mod error;
pub mod game;
pub mod metrics;
pub mod svg;
pub mod trace;

pub use dynamics::{run, RunConfig};
pub use error::{Result, SimError};
pub use game::{payoff_scale, GameInstance};
pub use trace::Trace;
