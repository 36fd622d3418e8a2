use std::io::Write;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::trace::{build_scenario, ChannelTrace, ScenarioParams};
use super::{step, steps_in, PlantParams, Regime, SimState};
use crate::controller::{decide_bitrate, BitrateLadder, ControllerConfig, ControllerState, DecisionInputs};
use crate::estimation::{estimate_f, BandwidthEstimator, BufferSample, KernelWeights, SampleWindow};
use crate::trajectory::{reference_at, BezierProfile, ReplanState};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplanConfig {
    pub enabled: bool,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub plant: PlantParams,
    pub profile: BezierProfile,
    pub ladder: BitrateLadder,
    pub controller: ControllerConfig,
    pub replan: ReplanConfig,
    /// Half-width of the uniform additive noise on the measured buffer, s.
    pub buffer_noise: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        let plant = PlantParams::default();
        let profile = BezierProfile::new(0.0, 10.0, 0.0, 4.0).expect("default profile is valid");
        Self {
            replan: ReplanConfig {
                enabled: false,
                lower_bound: plant.chunk_duration + 1.0,
                upper_bound: profile.xf() + 1.0,
            },
            plant,
            profile,
            ladder: BitrateLadder::default(),
            controller: ControllerConfig::default(),
            buffer_noise: 0.0,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.controller.validate()?;
        if steps_in(self.controller.decision_interval, self.plant.te).is_none() {
            return Err(Error::invalid(
                "decision_interval",
                format!(
                    "must be a whole number of sampling periods (got {} with Te = {})",
                    self.controller.decision_interval, self.plant.te
                ),
            ));
        }
        SampleWindow::<f64>::new(self.controller.tau, self.plant.te)?;
        if !(self.profile.x0() >= 0.0) {
            return Err(Error::invalid("x0", format!("must be >= 0, got {}", self.profile.x0())));
        }
        let (lo, hi) = (self.replan.lower_bound, self.replan.upper_bound);
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(
                "replan.lower_bound",
                format!("must be below replan.upper_bound ({lo} >= {hi})"),
            ));
        }
        if !(self.buffer_noise.is_finite() && self.buffer_noise >= 0.0) {
            return Err(Error::invalid("buffer_noise", format!("must be >= 0, got {}", self.buffer_noise)));
        }
        Ok(())
    }
}

/// One plant step: the state at `t` and the inputs applied over `[t, t + Te)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: f64,
    pub x: f64,
    pub x_meas: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub c_true: f64,
    /// Held capacity estimate, empty before the first valid one.
    pub c_est: Option<f64>,
    pub u: f64,
    #[serde(rename = "ref")]
    pub reference: f64,
    pub regime: Regime,
    pub stalled: bool,
    #[serde(skip)]
    pub r_feedforward: f64,
    #[serde(skip)]
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChunkRecord {
    pub t: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub scenario_id: Option<u8>,
    pub seed: u64,
    pub replan_enabled: bool,
    pub delta_startup: f64,
    pub chunk_duration: f64,
    /// Buffer level after the last step.
    pub final_x: f64,
    pub steps: Vec<StepRecord>,
    pub chunks: Vec<ChunkRecord>,
}

impl EpisodeLog {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        if self.steps.is_empty() {
            out.write_record(["t", "x", "x_meas", "R", "c_true", "c_est", "u", "ref", "regime", "stalled"])?;
        }
        for s in &self.steps {
            out.serialize(s)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Largest measured tracking error over the episode.
    pub fn max_abs_error(&self) -> f64 {
        self.steps.iter().map(|s| s.error.abs()).fold(0.0, f64::max)
    }
}

/// Builds the scenario trace and runs one episode on it.
pub fn run_scenario(cfg: &EpisodeConfig, scen: &ScenarioParams, id: u8, seed: u64) -> Result<EpisodeLog> {
    let trace = build_scenario(id, seed, scen, &cfg.plant)?;
    run_episode(cfg, &trace)
}

/// Runs the closed loop over `trace`: measure, estimate, decide at the
/// chunk cadence, then step the plant with the true capacity.
pub fn run_episode(cfg: &EpisodeConfig, trace: &ChannelTrace) -> Result<EpisodeLog> {
    cfg.validate()?;
    trace.check_covers(&cfg.plant)?;
    let p = &cfg.plant;
    let n = p.steps();
    let te = p.te;

    let mut estimator = BandwidthEstimator::new(cfg.controller.tau, te, p.delta_startup, p.chunk_duration)?;
    let mut f_window = SampleWindow::new(cfg.controller.tau, te)?;
    let f_weights = KernelWeights::for_window(&f_window);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(trace.seed ^ 0xB0FF_E12E_D5EE_D000);
    let noise = Uniform::new_inclusive(-cfg.buffer_noise, cfg.buffer_noise);

    let mut state = SimState::new(cfg.profile.x0(), p)?;
    let mut ctrl = ControllerState::default();
    let mut replan: Option<ReplanState> = None;
    let mut prev_rate: Option<f64> = None;
    let mut prev_playing = false;

    let mut steps = Vec::with_capacity(n);
    let mut chunks = Vec::new();
    for k in 0..n {
        let t = state.t;
        let x_meas = if cfg.buffer_noise > 0.0 {
            (state.x + noise.sample(&mut noise_rng)).max(0.0)
        } else {
            state.x
        };
        let c_meas = trace.c_meas[k];

        let fresh = estimator.update(
            BufferSample { x: x_meas, rate: prev_rate, playing: prev_playing },
            prev_rate,
            t,
        );
        let c_nominal = estimator.held().unwrap_or(c_meas);

        let base = cfg.profile.eval(t);
        if cfg.replan.enabled && t >= cfg.profile.tf() {
            let current = match replan {
                Some(s) => s,
                None => ReplanState::new(c_nominal, &cfg.ladder, cfg.replan.lower_bound, cfg.replan.upper_bound)?,
            };
            let mut next = current.step(x_meas, c_nominal, &cfg.ladder, te)?;
            if next.dir != current.dir {
                // a new leg starts from the measured buffer, without the feedback memory of the last one
                next = next.reanchored(x_meas, base);
                f_window.clear();
                ctrl.reset_feedback();
            } else if !fresh.valid {
                // direction and rung follow the held estimate; the correction waits for a fresh one
                next.y_ad = current.y_ad;
            }
            replan = Some(next.confined(base));
        }
        let reference = reference_at(&cfg.profile, replan.as_ref(), k, te, cfg.controller.feed_correction_rate);

        if ctrl.due(t, &cfg.controller) {
            let inputs = DecisionInputs {
                reference,
                x_meas,
                f_est: estimate_f(&f_window, &f_weights, cfg.controller.alpha),
                c_nominal,
                startup: t < p.delta_startup,
            };
            ctrl = decide_bitrate(&ctrl, t, &inputs, &cfg.ladder, &cfg.controller)?;
            chunks.push(ChunkRecord { t, r: ctrl.current_r.expect("decided"), x: state.x });
        }
        // the F window sees the continuous iP output; the quantization residual is treated as disturbance
        f_window.push((x_meas - base, ctrl.u_continuous));

        let r = ctrl.current_r.expect("first step is a decision");
        steps.push(StepRecord {
            t,
            x: state.x,
            x_meas,
            r,
            c_true: trace.c_true[k],
            c_est: estimator.held(),
            u: ctrl.u_applied,
            reference: reference.value,
            regime: state.regime,
            stalled: state.stalled,
            r_feedforward: ctrl.r_feedforward,
            error: x_meas - reference.value,
        });

        prev_playing = p.playing_guard(t, state.x) == Regime::Playing;
        prev_rate = Some(r);
        state = step(&state, r, trace.c_true[k], p)?;
    }

    Ok(EpisodeLog {
        scenario_id: trace.scenario_id,
        seed: trace.seed,
        replan_enabled: cfg.replan.enabled,
        delta_startup: p.delta_startup,
        chunk_duration: p.chunk_duration,
        final_x: state.x,
        steps,
        chunks,
    })
}
