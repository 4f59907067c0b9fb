//! Energy-optimal transmission scheduling for bursty, deadline-constrained
//! data under non-ideal circuit power.

pub mod bench;
pub mod error;
pub mod heuristics;
pub mod io;
pub mod model;
pub mod online;
pub mod power;
pub mod schedule;
pub mod taut_fading;
pub mod taut_static;
pub mod verify;
mod tautening;
