//! Client buffer dynamics, channel traces and full episodes.
//!
//! Before the startup delay, or while less than one chunk is buffered, the
//! buffer only fills: `dx/dt = C/R`. Otherwise playback drains it:
//! `dx/dt = C/R - 1`. The state is advanced by explicit Euler steps and the
//! regime is re-evaluated after every step.

mod episode;
mod trace;

pub use episode::{run_episode, run_scenario, ChunkRecord, EpisodeConfig, EpisodeLog, ReplanConfig, StepRecord};
pub use trace::{build_scenario, ChannelTrace, ScenarioParams, SegmentSpec};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantParams {
    pub delta_startup: f64,
    pub chunk_duration: f64,
    pub te: f64,
    pub duration: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            delta_startup: 5.0,
            chunk_duration: 2.0,
            te: 0.1,
            duration: 600.0,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_startup.is_finite() && self.delta_startup >= 0.0) {
            return Err(Error::invalid("delta_startup", format!("must be >= 0, got {}", self.delta_startup)));
        }
        if !(self.chunk_duration.is_finite() && self.chunk_duration > 0.0) {
            return Err(Error::invalid("chunk_duration", format!("must be > 0, got {}", self.chunk_duration)));
        }
        if !(self.te.is_finite() && self.te > 0.0) {
            return Err(Error::invalid("te", format!("must be > 0, got {}", self.te)));
        }
        if steps_in(self.chunk_duration, self.te).is_none() {
            return Err(Error::invalid(
                "te",
                format!("must divide chunk_duration = {} (got {})", self.chunk_duration, self.te),
            ));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(Error::invalid("duration", format!("must be >= 0, got {}", self.duration)));
        }
        Ok(())
    }

    /// Number of Euler steps in the episode.
    pub fn steps(&self) -> usize {
        (self.duration / self.te).round() as usize
    }

    pub fn playing_guard(&self, t: f64, x: f64) -> Regime {
        if t >= self.delta_startup && x >= self.chunk_duration {
            Regime::Playing
        } else {
            Regime::Filling
        }
    }
}

/// `Some(n)` when `span` is `n` whole periods of `te` within rounding.
pub(crate) fn steps_in(span: f64, te: f64) -> Option<usize> {
    let n = (span / te).round();
    if n >= 1.0 && (n * te - span).abs() <= 1e-9 * span.max(te) {
        Some(n as usize)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Filling,
    Playing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    /// Step index; `t = k * Te` is recomputed rather than accumulated.
    pub k: usize,
    pub t: f64,
    pub x: f64,
    pub regime: Regime,
    pub stalled: bool,
}

impl SimState {
    pub fn new(x0: f64, params: &PlantParams) -> Result<Self> {
        if !(x0.is_finite() && x0 >= 0.0) {
            return Err(Error::invalid("x0", format!("must be >= 0, got {x0}")));
        }
        Ok(Self {
            k: 0,
            t: 0.0,
            x: x0,
            regime: params.playing_guard(0.0, x0),
            stalled: 0.0 >= params.delta_startup && x0 < params.chunk_duration,
        })
    }
}

/// One Euler step at bitrate `r` and true capacity `c`.
pub fn step(state: &SimState, r: f64, c: f64, params: &PlantParams) -> Result<SimState> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::contract("plant_step", format!("R must be > 0, got {r}")));
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::contract("plant_step", format!("C must be > 0, got {c}")));
    }
    let drain = match params.playing_guard(state.t, state.x) {
        Regime::Playing => 1.0,
        Regime::Filling => 0.0,
    };
    let x = (state.x + params.te * (c / r - drain)).max(0.0);
    let k = state.k + 1;
    let t = k as f64 * params.te;
    Ok(SimState {
        k,
        t,
        x,
        regime: params.playing_guard(t, x),
        stalled: t >= params.delta_startup && x < params.chunk_duration,
    })
}
