//! Buffer-level adaptive bitrate control laboratory.
//!
//! The client buffer is treated as a flat output of the download/playback
//! dynamics. A smooth reference trajectory is inverted into a nominal bitrate
//! (feedforward), an intelligent proportional (iP) loop built on an
//! ultra-local model closes the loop, and a closed-form windowed integral
//! estimates the channel capacity from the buffer itself. The estimate drives
//! an online replanning of the reference that trades buffer excursions for
//! fewer bitrate switches.
//!
//! Modules:
//!
//! - [`trajectory`]: the eighth-degree smooth-step reference and its
//!   derivatives, plus the replanned additive correction.
//! - [`estimation`]: exact-kernel windowed estimators for the capacity and
//!   for the lumped ultra-local term.
//! - [`controller`]: bitrate ladder, feedforward inversion, iP law,
//!   quantization and the chunk-cadence decision.
//! - [`plant`]: the buffer ODE, channel scenarios and full episodes.
//! - [`metrics`]: QoE metrics and batch tables.
//! - [`config`]: the run configuration shared by the CLI and the tests.

#![forbid(unsafe_code)]

pub mod config;
pub mod controller;
mod error;
pub mod estimation;
pub mod metrics;
pub mod plant;
pub mod trajectory;

pub use config::RunConfig;
pub use controller::{BitrateLadder, ControllerConfig, ControllerState};
pub use error::{Error, Result};
pub use estimation::{BandwidthEstimate, SampleWindow};
pub use metrics::{QoEReport, TableRow};
pub use plant::{ChannelTrace, EpisodeConfig, EpisodeLog, PlantParams, Regime, SimState};
pub use trajectory::{BezierProfile, Direction, ReplanState};
