//! Desk-scale simulator of occupant-centric HVAC setpoint control.
//!
//! The crate closes the loop between a synthetic occupant population, a
//! personal thermal-comfort classifier retrained online, a query-by-committee
//! active learner that decides which occupant votes are worth collecting, a
//! comfort-profile aggregator that turns per-occupant predictions into one
//! zone setpoint, and a first-order thermal zone with a cooling-energy model.
//! Strategies (active learning, label-everything, random subsampling, fixed
//! baseline) are compared on labelling effort, occupant acceptability and
//! cooling energy. Every run is deterministic for a fixed seed.

pub mod active;
pub mod config;
pub mod control;
pub mod error;
pub mod featsel;
pub mod gbt;
pub mod metrics;
pub mod occupant;
pub mod output;
pub mod profiles;
pub mod rng;
pub mod weather;
pub mod zone;

pub use error::{Result, SimError};
