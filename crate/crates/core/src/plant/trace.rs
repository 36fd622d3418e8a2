use std::io::{Read, Write};
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PlantParams;
use crate::{Error, Result};

/// Piecewise-constant capacity with multiplicative measurement noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentSpec {
    pub segment_length: f64,
    pub level_min: f64,
    pub level_max: f64,
    /// Half-width of the uniform relative noise on measured capacity.
    pub noise: f64,
    /// If no segment after the first falls below this level, one is
    /// redrawn below it. Zero disables.
    pub force_below: f64,
}

impl SegmentSpec {
    fn validate(&self, section: &'static str) -> Result<()> {
        if !(self.segment_length.is_finite() && self.segment_length > 0.0) {
            return Err(Error::invalid(section, format!("segment_length must be > 0, got {}", self.segment_length)));
        }
        if !(self.level_min > 0.0 && self.level_min <= self.level_max && self.level_max.is_finite()) {
            return Err(Error::invalid(
                section,
                format!("need 0 < level_min <= level_max, got [{}, {}]", self.level_min, self.level_max),
            ));
        }
        if !(self.noise >= 0.0 && self.noise < 1.0) {
            return Err(Error::invalid(section, format!("noise must be in [0, 1), got {}", self.noise)));
        }
        let b = self.force_below;
        if b != 0.0 && !(b > self.level_min && b.is_finite()) {
            return Err(Error::invalid(
                section,
                format!("force_below = {b} must be 0 or exceed level_min = {}", self.level_min),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioParams {
    pub c0: f64,
    pub scenario2: SegmentSpec,
    pub scenario3: SegmentSpec,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            c0: 0.7,
            scenario2: SegmentSpec {
                segment_length: 60.0,
                level_min: 0.5,
                level_max: 2.5,
                noise: 0.2,
                force_below: 0.0,
            },
            scenario3: SegmentSpec {
                segment_length: 40.0,
                level_min: 0.25,
                level_max: 1.5,
                noise: 0.3,
                force_below: 0.35,
            },
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c0.is_finite() && self.c0 > 0.0) {
            return Err(Error::invalid("c0", format!("must be > 0, got {}", self.c0)));
        }
        self.scenario2.validate("scenario2")?;
        self.scenario3.validate("scenario3")
    }
}

/// True and measured capacity sampled once per plant step.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTrace {
    /// `None` for imported traces.
    pub scenario_id: Option<u8>,
    pub seed: u64,
    pub te: f64,
    pub c_true: Vec<f64>,
    pub c_meas: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    t: f64,
    c_true: f64,
    c_meas: f64,
}

impl ChannelTrace {
    pub fn len(&self) -> usize {
        self.c_true.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c_true.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for (k, (&c_true, &c_meas)) in self.c_true.iter().zip(&self.c_meas).enumerate() {
            out.serialize(TraceRow { t: k as f64 * self.te, c_true, c_meas })?;
        }
        if self.is_empty() {
            out.write_record(["t", "c_true", "c_meas"])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads a uniformly sampled `t,c_true,c_meas` trace starting at `t = 0`.
    pub fn read_csv<R: Read>(r: R, origin: &Path) -> Result<Self> {
        let bad = |detail: String| Error::Trace { path: origin.to_path_buf(), detail };
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t", "c_true", "c_meas"] {
            return Err(bad(format!("expected header t,c_true,c_meas, got {}", headers.iter().collect::<Vec<_>>().join(","))));
        }
        let rows: Vec<TraceRow> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        if rows.len() < 2 {
            return Err(bad("need at least two samples".into()));
        }
        let te = rows[1].t - rows[0].t;
        if rows[0].t != 0.0 || !(te > 0.0) {
            return Err(bad("samples must start at t = 0 and increase".into()));
        }
        for (k, row) in rows.iter().enumerate() {
            if (row.t - k as f64 * te).abs() > 1e-6 * te {
                return Err(bad(format!("row {} at t = {} breaks the uniform spacing {te}", k + 1, row.t)));
            }
            if !(row.c_true > 0.0 && row.c_meas > 0.0) {
                return Err(bad(format!("row {}: capacities must be > 0", k + 1)));
            }
        }
        Ok(Self {
            scenario_id: None,
            seed: 0,
            te,
            c_true: rows.iter().map(|r| r.c_true).collect(),
            c_meas: rows.iter().map(|r| r.c_meas).collect(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, path)
    }

    /// Checks the trace covers an episode with `params`.
    pub fn check_covers(&self, params: &PlantParams) -> Result<()> {
        if (self.te - params.te).abs() > 1e-9 * params.te {
            return Err(Error::contract(
                "run_episode",
                format!("trace sampled at {} but plant steps at {}", self.te, params.te),
            ));
        }
        if self.len() < params.steps() {
            return Err(Error::contract(
                "run_episode",
                format!("trace has {} samples, episode needs {}", self.len(), params.steps()),
            ));
        }
        Ok(())
    }
}

fn scenario_rng(id: u8, seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Deterministic channel for scenario `id` and `seed`, one sample per plant step.
pub fn build_scenario(id: u8, seed: u64, scen: &ScenarioParams, params: &PlantParams) -> Result<ChannelTrace> {
    scen.validate()?;
    params.validate()?;
    let n = params.steps();
    let (c_true, c_meas) = match id {
        1 => (vec![scen.c0; n], vec![scen.c0; n]),
        2 => segmented(&scen.scenario2, scenario_rng(id, seed), n, params.te),
        3 => segmented(&scen.scenario3, scenario_rng(id, seed), n, params.te),
        other => return Err(Error::UnknownScenario(other)),
    };
    Ok(ChannelTrace {
        scenario_id: Some(id),
        seed,
        te: params.te,
        c_true,
        c_meas,
    })
}

fn segmented(spec: &SegmentSpec, mut rng: ChaCha8Rng, n: usize, te: f64) -> (Vec<f64>, Vec<f64>) {
    let duration = n as f64 * te;
    let segments = ((duration / spec.segment_length).ceil() as usize).max(1);
    let levels_dist = Uniform::new_inclusive(spec.level_min, spec.level_max);
    let mut levels: Vec<f64> = (0..segments).map(|_| levels_dist.sample(&mut rng)).collect();
    let bound = spec.force_below;
    if bound > 0.0 && segments > 1 && !levels[1..].iter().any(|&c| c < bound) {
        let i = rng.gen_range(1..segments);
        levels[i] = rng.gen_range(spec.level_min..bound);
    }
    let noise = Uniform::new_inclusive(-spec.noise, spec.noise);
    let mut c_true = Vec::with_capacity(n);
    let mut c_meas = Vec::with_capacity(n);
    for k in 0..n {
        let seg = (((k as f64 * te) / spec.segment_length).floor() as usize).min(segments - 1);
        let c = levels[seg];
        c_true.push(c);
        c_meas.push(c * (1.0 + noise.sample(&mut rng)));
    }
    (c_true, c_meas)
}
