//! Windowed integral estimators.
//!
//! Both estimators integrate the trailing window `[t - tau, t]` against
//! fixed polynomial kernels in the window-local variable `s in [0, tau]`:
//!
//! - capacity: `C_est = R (1 - 6/tau^3 * int (tau - 2s) x(t - tau + s) ds)`,
//!   valid while the playback dynamics `dx/dt = C/R - 1` hold with `C` and
//!   `R` constant over the window;
//! - ultra-local term: `F_est = -6/tau^3 * int [(tau - 2s) y + alpha s (tau - s) u] ds`.
//!
//! The integrals are evaluated with weights that are exact for the
//! piecewise-linear interpolant of the samples, so both formulas invert
//! affine data to machine precision.

use std::collections::VecDeque;

use crate::{Error, Result};

/// Fixed-length trailing window of uniformly spaced samples, oldest first.
#[derive(Debug, Clone)]
pub struct SampleWindow<T> {
    te: f64,
    intervals: usize,
    buf: VecDeque<T>,
}

impl<T> SampleWindow<T> {
    pub fn new(tau: f64, te: f64) -> Result<Self> {
        if !(te.is_finite() && te > 0.0) {
            return Err(Error::invalid("te", format!("must be > 0, got {te}")));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::invalid("tau", format!("must be > 0, got {tau}")));
        }
        if tau < 2.0 * te * (1.0 - 1e-9) {
            return Err(Error::invalid(
                "tau",
                format!("must span at least two sampling periods (tau = {tau}, Te = {te})"),
            ));
        }
        let intervals = (tau / te).round() as usize;
        Ok(Self {
            te,
            intervals,
            buf: VecDeque::with_capacity(intervals + 1),
        })
    }

    pub fn capacity(&self) -> usize {
        self.intervals + 1
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.buf.len() == self.capacity()
    }

    /// Effective window length, `round(tau/Te) * Te`.
    pub fn span(&self) -> f64 {
        self.intervals as f64 * self.te
    }

    pub fn te(&self) -> f64 {
        self.te
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn push(&mut self, sample: T) {
        if self.buf.len() == self.capacity() {
            self.buf.pop_front();
        }
        self.buf.push_back(sample);
    }

    pub fn clear(&mut self) {
        self.buf.clear();
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &T> + '_ {
        self.buf.iter()
    }
}

/// Exact integrals of the two estimator kernels against the hat functions
/// of a uniform grid: `lin[i] = int phi_i(s) (tau - 2s) ds` and
/// `quad[i] = int phi_i(s) s (tau - s) ds`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelWeights {
    pub lin: Vec<f64>,
    pub quad: Vec<f64>,
    span: f64,
}

impl KernelWeights {
    pub fn new(intervals: usize, te: f64) -> Self {
        let span = intervals as f64 * te;
        let lin_k = |s: f64| span - 2.0 * s;
        let quad_k = |s: f64| s * (span - s);
        let mut lin = vec![0.0; intervals + 1];
        let mut quad = vec![0.0; intervals + 1];
        for i in 0..intervals {
            let a = i as f64 * te;
            let b = a + te;
            // kernel * hat is at most cubic on each cell: Simpson is exact
            for (w, k) in [(&mut lin, &lin_k as &dyn Fn(f64) -> f64), (&mut quad, &quad_k)] {
                let (left, right) = simpson_hat_pair(k, a, b);
                w[i] += left;
                w[i + 1] += right;
            }
        }
        Self { lin, quad, span }
    }

    pub fn for_window<T>(window: &SampleWindow<T>) -> Self {
        Self::new(window.intervals(), window.te())
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    fn scale(&self) -> f64 {
        6.0 / self.span.powi(3)
    }
}

/// Simpson integrals of `k * (b - s)/h` and `k * (s - a)/h` over `[a, b]`.
fn simpson_hat_pair(k: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let h = b - a;
    let m = 0.5 * (a + b);
    let (ka, km, kb) = (k(a), k(m), k(b));
    // hats take the values (1, 1/2, 0) and (0, 1/2, 1) at (a, m, b)
    let left = h / 6.0 * (ka + 4.0 * km * 0.5);
    let right = h / 6.0 * (4.0 * km * 0.5 + kb);
    (left, right)
}

/// One buffer sample for the capacity estimator, together with the
/// bitrate and regime applied over the sampling interval that ends at it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BufferSample {
    pub x: f64,
    pub rate: Option<f64>,
    pub playing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthEstimate {
    pub value: f64,
    pub at_time: f64,
    pub valid: bool,
}

impl BandwidthEstimate {
    fn invalid(at_time: f64) -> Self {
        Self {
            value: f64::NAN,
            at_time,
            valid: false,
        }
    }
}

/// Conditions under which the capacity formula applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Applicability {
    /// `delta + tau`: estimates before this time are rejected.
    pub earliest: f64,
    /// Chunk duration: every buffer sample in the window must exceed it.
    pub buffer_floor: f64,
}

/// Capacity estimate from the trailing buffer window at the current
/// bitrate `r`. Invalid when the window is not full, when any sample is
/// outside the playback regime or at or below the buffer floor, or when
/// the bitrate changed inside the window.
pub fn estimate_bandwidth(
    window: &SampleWindow<BufferSample>,
    weights: &KernelWeights,
    r: f64,
    at_time: f64,
    applies: Applicability,
) -> BandwidthEstimate {
    if !window.is_full() || at_time <= applies.earliest || !(r > 0.0) {
        return BandwidthEstimate::invalid(at_time);
    }
    // the oldest sample closes an interval outside the window; only its level matters
    let consistent = window.iter().enumerate().all(|(i, s)| {
        s.x > applies.buffer_floor && (i == 0 || (s.playing && s.rate == Some(r)))
    });
    if !consistent {
        return BandwidthEstimate::invalid(at_time);
    }
    let moment: f64 = window.iter().zip(&weights.lin).map(|(s, w)| w * s.x).sum();
    BandwidthEstimate {
        value: r * (1.0 - weights.scale() * moment),
        at_time,
        valid: true,
    }
}

/// Ultra-local `F` estimate from `(y, u)` pairs; `None` until the window is full.
pub fn estimate_f(window: &SampleWindow<(f64, f64)>, weights: &KernelWeights, alpha: f64) -> Option<f64> {
    if !window.is_full() {
        return None;
    }
    let integral: f64 = window
        .iter()
        .zip(weights.lin.iter().zip(&weights.quad))
        .map(|(&(y, u), (wl, wq))| wl * y + alpha * wq * u)
        .sum();
    Some(-weights.scale() * integral)
}

/// Capacity estimator with the hold-last-valid policy: while the formula
/// does not apply, the last valid value is reported.
#[derive(Debug, Clone)]
pub struct BandwidthEstimator {
    window: SampleWindow<BufferSample>,
    weights: KernelWeights,
    applies: Applicability,
    last_valid: Option<f64>,
}

impl BandwidthEstimator {
    pub fn new(tau: f64, te: f64, delta_startup: f64, chunk_duration: f64) -> Result<Self> {
        let window = SampleWindow::new(tau, te)?;
        let weights = KernelWeights::for_window(&window);
        let earliest = delta_startup + window.span();
        Ok(Self {
            window,
            weights,
            applies: Applicability {
                earliest,
                buffer_floor: chunk_duration,
            },
            last_valid: None,
        })
    }

    /// Adds the sample taken at `at_time` and returns the fresh estimate
    /// for the current bitrate `r` (which may be invalid).
    pub fn update(&mut self, sample: BufferSample, r: Option<f64>, at_time: f64) -> BandwidthEstimate {
        self.window.push(sample);
        let est = match r {
            Some(r) => estimate_bandwidth(&self.window, &self.weights, r, at_time, self.applies),
            None => BandwidthEstimate::invalid(at_time),
        };
        if est.valid {
            self.last_valid = Some(est.value);
        }
        est
    }

    pub fn held(&self) -> Option<f64> {
        self.last_valid
    }
}
