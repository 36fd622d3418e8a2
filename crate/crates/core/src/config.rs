//! Run configuration: TOML file with optional sections, every key optional.
//!
//! ```toml
//! scenario = 2
//! replan = true
//! seeds = [1, 2, 3]
//!
//! [controller]
//! kp = 0.5
//!
//! [channel.scenario3]
//! segment_length = 20.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::{BitrateLadder, ControllerConfig};
use crate::plant::{EpisodeConfig, PlantParams, ReplanConfig, ScenarioParams, SegmentSpec};
use crate::trajectory::BezierProfile;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emit {
    Log,
    Qoe,
    Table,
    Plotdata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: u8,
    pub replan: bool,
    pub seeds: Vec<u64>,
    /// Replaces the generated scenario channel.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    pub out: PathBuf,
    pub emit: Vec<Emit>,
    /// Count chunks before the startup delay in the rebuffering metric.
    pub count_startup_rebuffers: bool,
    pub trajectory: TrajectorySection,
    pub controller: ControllerSection,
    pub ladder: LadderSection,
    pub plant: PlantSection,
    pub replan_bounds: ReplanSection,
    pub channel: ChannelSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: 1,
            replan: false,
            seeds: vec![0],
            trace: None,
            out: PathBuf::from("out"),
            emit: vec![Emit::Log, Emit::Qoe, Emit::Table],
            count_startup_rebuffers: false,
            trajectory: TrajectorySection::default(),
            controller: ControllerSection::default(),
            ladder: LadderSection::default(),
            plant: PlantSection::default(),
            replan_bounds: ReplanSection::default(),
            channel: ChannelSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySection {
    pub t0: f64,
    pub tf: f64,
    pub x0: f64,
    pub xf: f64,
}

impl Default for TrajectorySection {
    fn default() -> Self {
        Self { t0: 0.0, tf: 10.0, x0: 0.0, xf: 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub alpha: f64,
    pub kp: f64,
    pub tau: f64,
    pub decision_interval: f64,
    pub feed_correction_rate: bool,
}

impl Default for ControllerSection {
    fn default() -> Self {
        let c = ControllerConfig::default();
        Self {
            alpha: c.alpha,
            kp: c.kp,
            tau: c.tau,
            decision_interval: c.decision_interval,
            feed_correction_rate: c.feed_correction_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LadderSection {
    pub rates: Vec<f64>,
}

impl Default for LadderSection {
    fn default() -> Self {
        Self { rates: BitrateLadder::default().rates().to_vec() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantSection {
    pub delta_startup: f64,
    pub chunk_duration: f64,
    pub te: f64,
    pub duration: f64,
    pub buffer_noise: f64,
}

impl Default for PlantSection {
    fn default() -> Self {
        let p = PlantParams::default();
        Self {
            delta_startup: p.delta_startup,
            chunk_duration: p.chunk_duration,
            te: p.te,
            duration: p.duration,
            buffer_noise: 0.0,
        }
    }
}

/// Unset bounds follow the chunk duration and final reference level.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplanSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

/// Channel generator overrides; unset keys keep the scenario defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    pub scenario2: SegmentSection,
    pub scenario3: SegmentSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segment_length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub force_below: Option<f64>,
}

impl SegmentSection {
    fn apply(&self, base: SegmentSpec) -> SegmentSpec {
        SegmentSpec {
            segment_length: self.segment_length.unwrap_or(base.segment_length),
            level_min: self.level_min.unwrap_or(base.level_min),
            level_max: self.level_max.unwrap_or(base.level_max),
            noise: self.noise.unwrap_or(base.noise),
            force_below: self.force_below.unwrap_or(base.force_below),
        }
    }
}

impl RunConfig {
    pub fn scenario_params(&self) -> ScenarioParams {
        let base = ScenarioParams::default();
        ScenarioParams {
            c0: self.channel.c0.unwrap_or(base.c0),
            scenario2: self.channel.scenario2.apply(base.scenario2),
            scenario3: self.channel.scenario3.apply(base.scenario3),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn lower_bound(&self) -> f64 {
        self.replan_bounds.lower.unwrap_or(self.plant.chunk_duration + 1.0)
    }

    pub fn upper_bound(&self) -> f64 {
        self.replan_bounds.upper.unwrap_or(self.trajectory.xf + 1.0)
    }

    /// Builds and validates the episode configuration.
    pub fn episode_config(&self) -> Result<EpisodeConfig> {
        let t = &self.trajectory;
        let c = &self.controller;
        let p = &self.plant;
        let cfg = EpisodeConfig {
            plant: PlantParams {
                delta_startup: p.delta_startup,
                chunk_duration: p.chunk_duration,
                te: p.te,
                duration: p.duration,
            },
            profile: BezierProfile::new(t.t0, t.tf, t.x0, t.xf)?,
            ladder: BitrateLadder::new(self.ladder.rates.clone())?,
            controller: ControllerConfig {
                alpha: c.alpha,
                kp: c.kp,
                decision_interval: c.decision_interval,
                tau: c.tau,
                feed_correction_rate: c.feed_correction_rate,
            },
            replan: ReplanConfig {
                enabled: self.replan,
                lower_bound: self.lower_bound(),
                upper_bound: self.upper_bound(),
            },
            buffer_noise: p.buffer_noise,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trace.is_none() && !(1..=3).contains(&self.scenario) {
            return Err(Error::UnknownScenario(self.scenario));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("seeds", "must list at least one seed"));
        }
        self.scenario_params().validate()?;
        self.episode_config().map(|_| ())
    }
}

/// Parses `a..b` (inclusive), comma lists, or a mix: `1..3,7`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = |detail: String| Error::invalid("seeds", detail);
    let mut seeds = Vec::new();
    for part in s.split(',').map(str::trim) {
        if part.is_empty() {
            return Err(bad(format!("empty entry in `{s}`")));
        }
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| bad(format!("bad range start in `{part}`")))?;
            let b: u64 = b.trim().parse().map_err(|_| bad(format!("bad range end in `{part}`")))?;
            if a > b {
                return Err(bad(format!("range `{part}` is empty")));
            }
            seeds.extend(a..=b);
        } else {
            seeds.push(part.parse().map_err(|_| bad(format!("`{part}` is not a seed")))?);
        }
    }
    Ok(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let e = c.episode_config().unwrap();
        assert_eq!(e, EpisodeConfig::default());
        assert_eq!(e.ladder.rates(), &[0.35, 0.6, 1.0, 2.0, 3.0, 5.0]);
        assert_eq!(e.controller.alpha, -10.0);
        assert_eq!(e.controller.kp, 0.25);
        assert_eq!(e.controller.tau, 1.0);
        assert_eq!(e.plant.duration, 600.0);
        assert_eq!(e.plant.delta_startup, 5.0);
        assert_eq!(e.plant.chunk_duration, 2.0);
        assert_eq!(e.plant.te, 0.1);
        assert_eq!((e.profile.t0(), e.profile.tf(), e.profile.x0(), e.profile.xf()), (0.0, 10.0, 0.0, 4.0));
        assert_eq!(c.scenario_params(), ScenarioParams::default());
        assert_eq!(c.scenario_params().c0, 0.7);
        assert_eq!((e.replan.lower_bound, e.replan.upper_bound), (3.0, 5.0));
    }

    #[test]
    fn empty_file_is_default() {
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn dotted_keys_and_sections() {
        let c = RunConfig::from_toml_str("scenario = 3\ncontroller.kp = 0.5\n[channel.scenario3]\nsegment_length = 20.0\n").unwrap();
        assert_eq!(c.scenario, 3);
        assert_eq!(c.controller.kp, 0.5);
        assert_eq!(c.controller.alpha, -10.0);
        let s = c.scenario_params();
        assert_eq!(s.scenario3.segment_length, 20.0);
        assert_eq!(s.scenario3.noise, 0.3);
        assert_eq!(s.scenario3.force_below, 0.35);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml_str("bogus = 1").is_err());
        assert!(RunConfig::from_toml_str("[controller]\nki = 1.0").is_err());
    }

    #[test]
    fn validation_names_field() {
        let mut c = RunConfig::default();
        c.controller.kp = -1.0;
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("kp") && err.contains("> 0"), "{err}");
        let mut c = RunConfig::default();
        c.scenario = 4;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.ladder.rates = vec![1.0, 0.5];
        assert!(c.validate().unwrap_err().to_string().contains("ladder"));
    }

    #[test]
    fn bounds_follow_overrides() {
        let mut c = RunConfig::default();
        c.plant.chunk_duration = 4.0;
        c.trajectory.xf = 8.0;
        assert_eq!((c.lower_bound(), c.upper_bound()), (5.0, 9.0));
        c.replan_bounds.lower = Some(2.5);
        assert_eq!(c.lower_bound(), 2.5);
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::default();
        c.scenario = 2;
        c.replan = true;
        c.seeds = vec![1, 5, 9];
        c.controller.alpha = -7.5;
        c.replan_bounds.upper = Some(6.0);
        c.emit = vec![Emit::Plotdata];
        c.trace = Some(PathBuf::from("trace.csv"));
        c.channel.scenario2.noise = Some(0.1);
        c.channel.c0 = Some(0.9);
        let text = c.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), c);
        let d = RunConfig::default();
        assert_eq!(RunConfig::from_toml_str(&d.to_toml_string().unwrap()).unwrap(), d);
    }

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("1..4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_seeds("3, 1,2").unwrap(), vec![3, 1, 2]);
        assert_eq!(parse_seeds("1..2,7").unwrap(), vec![1, 2, 7]);
        assert_eq!(parse_seeds("1..100").unwrap().len(), 100);
        assert!(parse_seeds("5..1").is_err());
        assert!(parse_seeds("a").is_err());
        assert!(parse_seeds("1,,2").is_err());
    }
}
