//! Bitrate selection: flat feedforward, iP feedback and ladder quantization.

use crate::trajectory::Reference;
use crate::{Error, Result};

/// Relative slack when comparing distances to two rungs, so that a
/// mathematical tie (0.8 between 0.6 and 1) is not decided by rounding.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct BitrateLadder {
    rates: Vec<f64>,
}

impl Default for BitrateLadder {
    fn default() -> Self {
        Self {
            rates: vec![0.35, 0.6, 1.0, 2.0, 3.0, 5.0],
        }
    }
}

impl BitrateLadder {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::invalid("ladder", "must not be empty"));
        }
        if rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::invalid("ladder", "rates must be finite and > 0"));
        }
        if rates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("ladder", "rates must be strictly increasing"));
        }
        Ok(Self { rates })
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn min(&self) -> f64 {
        self.rates[0]
    }

    pub fn max(&self) -> f64 {
        self.rates[self.rates.len() - 1]
    }

    pub fn contains(&self, r: f64) -> bool {
        self.rates.contains(&r)
    }

    /// Largest rung not above `c`, or the lowest rung when `c` is below all of them.
    pub fn floor(&self, c: f64) -> f64 {
        self.rates
            .iter()
            .rev()
            .copied()
            .find(|&r| r <= c)
            .unwrap_or(self.min())
    }

    /// Smallest rung not below `c`, or the highest rung when `c` is above all of them.
    pub fn ceil(&self, c: f64) -> f64 {
        self.rates
            .iter()
            .copied()
            .find(|&r| r >= c)
            .unwrap_or(self.max())
    }

    /// Half the widest gap between neighbouring rungs; bounds the
    /// quantization residual inside the ladder range.
    pub fn half_max_gap(&self) -> f64 {
        self.rates
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
            / 2.0
    }

    /// Nearest rung, ties to the lower one. Out-of-range input clamps.
    pub fn quantize(&self, r_desired: f64) -> Quantized {
        let mut best = self.rates[0];
        let mut best_dist = (best - r_desired).abs();
        for &r in &self.rates[1..] {
            let d = (r - r_desired).abs();
            if d < best_dist - TIE_EPS * best_dist.max(d).max(1.0) {
                best = r;
                best_dist = d;
            }
        }
        Quantized {
            rate: best,
            epsilon: best - r_desired,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantized {
    pub rate: f64,
    /// `rate - r_desired`.
    pub epsilon: f64,
}

pub fn quantize(r_desired: f64, ladder: &BitrateLadder) -> Quantized {
    ladder.quantize(r_desired)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub alpha: f64,
    pub kp: f64,
    pub decision_interval: f64,
    pub tau: f64,
    /// Feed the analytic correction rate into the iP law and feedforward.
    pub feed_correction_rate: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            alpha: -10.0,
            kp: 0.25,
            decision_interval: 2.0,
            tau: 1.0,
            feed_correction_rate: true,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kp.is_finite() && self.kp > 0.0) {
            return Err(Error::invalid("kp", format!("must be > 0, got {}", self.kp)));
        }
        if !(self.alpha.is_finite() && self.alpha != 0.0) {
            return Err(Error::invalid("alpha", format!("must be finite and nonzero, got {}", self.alpha)));
        }
        if !(self.decision_interval.is_finite() && self.decision_interval > 0.0) {
            return Err(Error::invalid(
                "decision_interval",
                format!("must be > 0, got {}", self.decision_interval),
            ));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::invalid("tau", format!("must be > 0, got {}", self.tau)));
        }
        Ok(())
    }
}

/// Nominal bitrate that makes the buffer follow a reference of slope
/// `ref_rate` at capacity `c_nominal`.
///
/// In playback `R = C/(dx*/dt + 1)`. During startup nothing is played, so
/// `R = C/(dx*/dt)`, capped at `cap` (and equal to `cap` on a flat reference).
pub fn feedforward(c_nominal: f64, ref_rate: f64, startup: bool, cap: f64) -> Result<f64> {
    if !(c_nominal.is_finite() && c_nominal > 0.0) {
        return Err(Error::contract("feedforward", format!("c_nominal must be > 0, got {c_nominal}")));
    }
    if startup {
        if ref_rate <= c_nominal / cap {
            return Ok(cap);
        }
        return Ok(c_nominal / ref_rate);
    }
    if ref_rate <= -1.0 {
        return Err(Error::contract(
            "feedforward",
            format!("reference slope {ref_rate} drains faster than playback"),
        ));
    }
    Ok(c_nominal / (ref_rate + 1.0))
}

/// The iP law `u = -(F_est - ref_rate + Kp e)/alpha`.
pub fn ip_control(f_est: f64, ref_rate: f64, e: f64, cfg: &ControllerConfig) -> f64 {
    -(f_est - ref_rate + cfg.kp * e) / cfg.alpha
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControllerState {
    /// `None` until the first decision.
    pub current_r: Option<f64>,
    pub r_feedforward: f64,
    /// Continuous iP output of the last decision.
    pub u_continuous: f64,
    /// Applied correction, `current_r - r_feedforward`.
    pub u_applied: f64,
    pub quant_residual: f64,
    pub last_decision_time: Option<f64>,
}

/// Measurements and estimates available to one decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionInputs {
    pub reference: Reference,
    pub x_meas: f64,
    /// `None` while the estimator window is filling.
    pub f_est: Option<f64>,
    pub c_nominal: f64,
    pub startup: bool,
}

impl ControllerState {
    /// Forgets the continuous iP output; the next decision starts from the feedforward.
    pub fn reset_feedback(&mut self) {
        self.u_continuous = 0.0;
    }

    pub fn due(&self, now: f64, cfg: &ControllerConfig) -> bool {
        match self.last_decision_time {
            None => true,
            Some(last) => now - last >= cfg.decision_interval * (1.0 - 1e-9),
        }
    }
}

pub fn decide_bitrate(
    state: &ControllerState,
    now: f64,
    inputs: &DecisionInputs,
    ladder: &BitrateLadder,
    cfg: &ControllerConfig,
) -> Result<ControllerState> {
    if !(now.is_finite() && now >= 0.0) {
        return Err(Error::contract("decide_bitrate", format!("now must be >= 0, got {now}")));
    }
    if !state.due(now, cfg) {
        return Ok(*state);
    }
    let r = inputs.reference;
    let ff = feedforward(inputs.c_nominal, r.rate, inputs.startup, ladder.max())?;
    let e = inputs.x_meas - r.value;
    let u = match inputs.f_est {
        Some(f) => ip_control(f, r.correction_rate, e, cfg),
        None => 0.0,
    };
    let q = ladder.quantize(ff + u);
    Ok(ControllerState {
        current_r: Some(q.rate),
        r_feedforward: ff,
        u_continuous: u,
        u_applied: q.rate - ff,
        quant_residual: q.epsilon,
        last_decision_time: Some(now),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flat(value: f64) -> Reference {
        Reference {
            value,
            rate: 0.0,
            correction_rate: 0.0,
        }
    }

    #[test]
    fn ladder_validation() {
        assert!(BitrateLadder::new(vec![]).is_err());
        assert!(BitrateLadder::new(vec![1.0, 1.0]).is_err());
        assert!(BitrateLadder::new(vec![2.0, 1.0]).is_err());
        assert!(BitrateLadder::new(vec![0.0, 1.0]).is_err());
        let l = BitrateLadder::default();
        assert_eq!(l.rates(), &[0.35, 0.6, 1.0, 2.0, 3.0, 5.0]);
        assert_eq!(l.half_max_gap(), 1.0);
    }

    #[test]
    fn floor_and_ceil() {
        let l = BitrateLadder::default();
        assert_eq!(l.floor(0.7), 0.6);
        assert_eq!(l.floor(1.0), 1.0);
        assert_eq!(l.floor(0.1), 0.35);
        assert_eq!(l.ceil(0.7), 1.0);
        assert_eq!(l.ceil(3.0), 3.0);
        assert_eq!(l.ceil(8.0), 5.0);
    }

    #[test]
    fn quantize_examples() {
        let l = BitrateLadder::default();
        assert_eq!(quantize(0.7, &l).rate, 0.6);
        let q = quantize(2.0, &l);
        assert_eq!((q.rate, q.epsilon), (2.0, 0.0));
        assert_eq!(quantize(0.8, &l).rate, 0.6);
        assert_eq!(quantize(0.6 + 0.2, &l).rate, 0.6);
        assert_eq!(quantize(4.0, &l).rate, 3.0);
        assert_eq!(quantize(0.81, &l).rate, 1.0);
        assert_eq!(quantize(-3.0, &l).rate, 0.35);
        assert_eq!(quantize(12.0, &l).rate, 5.0);
    }

    #[test]
    fn feedforward_examples() {
        assert_eq!(feedforward(0.7, 0.0, false, 5.0).unwrap(), 0.7);
        assert_eq!(feedforward(2.0, 1.0, false, 5.0).unwrap(), 1.0);
        assert_eq!(feedforward(1.0, -0.5, false, 5.0).unwrap(), 2.0);
        assert!(feedforward(1.0, -1.0, false, 5.0).is_err());
        assert!(feedforward(0.0, 0.0, false, 5.0).is_err());
        // startup: nothing is played back
        assert_eq!(feedforward(0.7, 0.0, true, 5.0).unwrap(), 5.0);
        assert!((feedforward(0.7, 0.875, true, 5.0).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(feedforward(0.7, 0.1, true, 5.0).unwrap(), 5.0);
    }

    #[test]
    fn ip_examples() {
        let cfg = ControllerConfig::default();
        assert_eq!(ip_control(0.0, 0.0, 0.0, &cfg), 0.0);
        assert!((ip_control(0.0, 0.0, 1.0, &cfg) - 0.025).abs() < 1e-15);
        // du/de = -Kp/alpha
        let d = ip_control(0.0, 0.0, 2.0, &cfg) - ip_control(0.0, 0.0, 1.0, &cfg);
        assert!((d - 0.025).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(ControllerConfig::default().validate().is_ok());
        let bad = ControllerConfig { kp: -1.0, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::InvalidParameter { field: "kp", .. })));
        let bad = ControllerConfig { alpha: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn decision_cadence_and_pure_feedforward() {
        let l = BitrateLadder::default();
        let cfg = ControllerConfig::default();
        let inputs = DecisionInputs {
            reference: flat(4.0),
            x_meas: 4.0,
            f_est: Some(0.0),
            c_nominal: 0.7,
            startup: false,
        };
        let s = decide_bitrate(&ControllerState::default(), 10.0, &inputs, &l, &cfg).unwrap();
        assert_eq!(s.current_r, Some(0.6));
        assert!((s.quant_residual + 0.1).abs() < 1e-12);
        let moved = DecisionInputs { x_meas: 9.0, ..inputs };
        let held = decide_bitrate(&s, 11.0, &moved, &l, &cfg).unwrap();
        assert_eq!(held, s);
        let next = decide_bitrate(&s, 12.0, &moved, &l, &cfg).unwrap();
        assert!((next.u_continuous - 0.125).abs() < 1e-12);
        // warm-up: no F estimate, pure feedforward
        let cold = DecisionInputs { f_est: None, x_meas: 9.0, ..inputs };
        let s = decide_bitrate(&ControllerState::default(), 10.0, &cold, &l, &cfg).unwrap();
        assert_eq!(s.u_continuous, 0.0);
        assert!(decide_bitrate(&s, -1.0, &cold, &l, &cfg).is_err());
    }

    proptest! {
        #[test]
        fn quantize_idempotent(r in -10.0f64..20.0) {
            let l = BitrateLadder::default();
            let q = l.quantize(r).rate;
            prop_assert!(l.contains(q));
            prop_assert_eq!(l.quantize(q).rate, q);
        }

        #[test]
        fn residual_bounded_in_range(r in 0.35f64..=5.0) {
            let l = BitrateLadder::default();
            prop_assert!(l.quantize(r).epsilon.abs() <= l.half_max_gap() + 1e-12);
        }

        #[test]
        fn quantize_is_nearest(r in 0.0f64..6.0) {
            let l = BitrateLadder::default();
            let q = l.quantize(r);
            for &c in l.rates() {
                prop_assert!((q.rate - r).abs() <= (c - r).abs() + 1e-12);
            }
        }
    }
}
