//! Angular-margin loss laboratory.
//!
//! Pure computation only: every loss here comes with its analytic gradient,
//! the margin schedules are plain functions of stage or chunk width, and the
//! toy trainer is a deterministic function of its configuration and seed.
//! File formats and the command line live in the `marginlab` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
pub mod loss;
pub mod math;
pub mod metrics;
pub mod schedule;
pub mod train;

pub use error::{Error, Result};
pub use loss::{GradPair, LossSpec, LossVariant, SimilarityState};
pub use metrics::{DcfSpec, TrialScore};
pub use schedule::{ChunkMarginSpec, MarginSchedule, StageSchedule};
