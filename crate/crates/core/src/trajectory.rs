//! Smooth-step buffer reference and its online replanning.
//!
//! The base reference moves the buffer from `x0` to `xf` over `[t0, tf]`
//! with the eighth-degree profile
//! `x0 + (xf - x0) T^4 (70 - 224T + 280T^2 - 160T^3 + 35T^4)`,
//! `T = (t - t0)/(tf - t0)`, and is held constant outside that interval.
//! The first three derivatives vanish at both ends.
//!
//! Replanning adds a correction `y_ad` that integrates `c_est/coef - 1`,
//! where `coef` is the ladder rung just below (filling) or just above
//! (draining) the capacity estimate, so the corrected reference always
//! describes a buffer trajectory that a single ladder rate can realize.

use crate::controller::BitrateLadder;
use crate::{Error, Result};

/// Coefficients of the normalized profile p(T), lowest degree first.
const PROFILE: [f64; 9] = [0.0, 0.0, 0.0, 0.0, 70.0, -224.0, 280.0, -160.0, 35.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BezierProfile {
    t0: f64,
    tf: f64,
    x0: f64,
    xf: f64,
}

impl BezierProfile {
    pub fn new(t0: f64, tf: f64, x0: f64, xf: f64) -> Result<Self> {
        if !(t0.is_finite() && t0 >= 0.0) {
            return Err(Error::invalid("t0", format!("must be finite and >= 0, got {t0}")));
        }
        if !(tf.is_finite() && tf > t0) {
            return Err(Error::invalid("tf", format!("must be finite and > t0 = {t0}, got {tf}")));
        }
        if !(x0.is_finite() && xf.is_finite()) {
            return Err(Error::invalid("x0/xf", "must be finite"));
        }
        Ok(Self { t0, tf, x0, xf })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn tf(&self) -> f64 {
        self.tf
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn xf(&self) -> f64 {
        self.xf
    }

    /// Reference buffer level at time `t`. Total: clamps outside `[t0, tf]`.
    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.t0 {
            return self.x0;
        }
        if t >= self.tf {
            return self.xf;
        }
        let big_t = (t - self.t0) / (self.tf - self.t0);
        self.x0 + (self.xf - self.x0) * horner(&PROFILE, big_t)
    }

    /// First time derivative, the common case in the control loop.
    pub fn rate(&self, t: f64) -> f64 {
        self.nth_derivative(t, 1)
    }

    /// Derivative of order 1, 2 or 3 with respect to time.
    pub fn derivative(&self, t: f64, order: u8) -> Result<f64> {
        match order {
            1..=3 => Ok(self.nth_derivative(t, order as usize)),
            _ => Err(Error::contract(
                "bezier_derivative",
                format!("order must be 1, 2 or 3, got {order}"),
            )),
        }
    }

    fn nth_derivative(&self, t: f64, order: usize) -> f64 {
        if t <= self.t0 || t >= self.tf {
            return 0.0;
        }
        let span = self.tf - self.t0;
        let big_t = (t - self.t0) / span;
        let mut coeffs = PROFILE.to_vec();
        for _ in 0..order {
            coeffs = differentiate(&coeffs);
        }
        (self.xf - self.x0) * horner(&coeffs, big_t) / span.powi(order as i32)
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn differentiate(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| k as f64 * c)
        .collect()
}

/// Whether the replanned buffer is currently being driven up or down.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Filling,
    Draining,
}

impl Direction {
    pub fn sign(self) -> i8 {
        match self {
            Direction::Filling => 1,
            Direction::Draining => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplanState {
    pub dir: Direction,
    /// Cumulative correction added to the base reference, seconds of buffer.
    pub y_ad: f64,
    /// Ladder rung the corrected reference is built around.
    pub coef: f64,
    /// Last increment rate `c_est/coef - 1`.
    pub rate: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

impl ReplanState {
    /// Starts in the filling direction with no correction, `coef` set to the
    /// rung just below the first capacity estimate.
    pub fn new(c_est: f64, ladder: &BitrateLadder, lower_bound: f64, upper_bound: f64) -> Result<Self> {
        if !(lower_bound.is_finite() && upper_bound.is_finite() && lower_bound < upper_bound) {
            return Err(Error::invalid(
                "replan.lower_bound",
                format!("must be finite and below upper_bound ({lower_bound} >= {upper_bound})"),
            ));
        }
        check_rate("replan_step", c_est)?;
        let coef = ladder.floor(c_est);
        Ok(Self {
            dir: Direction::Filling,
            y_ad: 0.0,
            coef,
            rate: c_est / coef - 1.0,
            lower_bound,
            upper_bound,
        })
    }

    /// One sampling period of the replanning recursion.
    pub fn step(&self, x_meas: f64, c_est: f64, ladder: &BitrateLadder, te: f64) -> Result<Self> {
        check_rate("replan_step", c_est)?;
        if !(te.is_finite() && te > 0.0) {
            return Err(Error::contract("replan_step", format!("Te must be > 0, got {te}")));
        }
        let dir = match self.dir {
            Direction::Filling if x_meas > self.upper_bound => Direction::Draining,
            Direction::Draining if x_meas < self.lower_bound => Direction::Filling,
            d => d,
        };
        let coef = match dir {
            Direction::Filling => ladder.floor(c_est),
            Direction::Draining => ladder.ceil(c_est),
        };
        let rate = c_est / coef - 1.0;
        Ok(Self {
            dir,
            y_ad: self.y_ad + rate * te,
            coef,
            rate,
            ..*self
        })
    }

    /// Moves the corrected reference onto the measured buffer.
    pub fn reanchored(mut self, x_meas: f64, base: f64) -> Self {
        self.y_ad = x_meas - base;
        self
    }

    /// Keeps the corrected reference `base + y_ad` inside the replanning
    /// band. Without this the correction integrates away from the buffer
    /// whenever the buffer cannot follow (capacity below the lowest rung,
    /// stalls).
    pub fn confined(mut self, base: f64) -> Self {
        self.y_ad = self
            .y_ad
            .clamp(self.lower_bound - base, self.upper_bound - base);
        self
    }
}

fn check_rate(op: &'static str, c: f64) -> Result<()> {
    if c.is_finite() && c > 0.0 {
        Ok(())
    } else {
        Err(Error::contract(op, format!("capacity estimate must be > 0, got {c}")))
    }
}

/// Reference value and slope seen by the controller at one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference {
    /// `x*(kTe) + y_ad`.
    pub value: f64,
    /// Slope of the whole reference: base slope plus correction rate.
    pub rate: f64,
    /// Slope of the correction alone (`dy*/dt` in the iP law).
    pub correction_rate: f64,
}

/// Combined reference at sample `k`. `replan` is `None` while replanning
/// is disabled or not yet engaged. `feed_rate` selects whether the
/// analytic correction rate is fed forward.
pub fn reference_at(
    profile: &BezierProfile,
    replan: Option<&ReplanState>,
    k: usize,
    te: f64,
    feed_rate: bool,
) -> Reference {
    let t = k as f64 * te;
    let base = profile.eval(t);
    let base_rate = profile.rate(t);
    match replan {
        Some(state) => {
            let correction_rate = if feed_rate { state.rate } else { 0.0 };
            Reference {
                value: base + state.y_ad,
                rate: base_rate + correction_rate,
                correction_rate,
            }
        }
        None => Reference {
            value: base,
            rate: base_rate,
            correction_rate: 0.0,
        },
    }
}
