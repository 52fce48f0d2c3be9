//! Bandwidth requirements of interactive video-on-demand sessions.
//!
//! - [`model`]: multinomial mode distributions and the mixed session weight.
//! - [`geometry`]: ball and capped-simplex volumes, conditional mode
//!   probability.
//! - [`allocation`]: trunk channel allocation with a FIFO proxy queue.
//! - [`sim`]: the tick-driven traffic-load simulator and demand sweeps.
//! - [`config`], [`report`], [`verify`]: config files, CSV output and the
//!   oracle cross-check battery used by the CLI.

pub mod allocation;
pub mod config;
pub mod error;
pub mod geometry;
pub mod model;
pub mod report;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
