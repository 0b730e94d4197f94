use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// First-order high-pass `s / (s + ω_c)`, discretized with the bilinear
/// transform prewarped so the 3 dB point lands exactly on `cutoff_hz`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HighPassFilter {
    cutoff_hz: f64,
    dt_s: f64,
    a: f64,
    b: f64,
    state: Option<(f64, f64)>,
}

impl HighPassFilter {
    pub fn new(cutoff_hz: f64, dt_s: f64) -> Result<Self> {
        if !(dt_s > 0.0 && cutoff_hz > 0.0 && cutoff_hz < 0.5 / dt_s) {
            return Err(Error::Argument(format!(
                "cutoff {cutoff_hz} Hz must lie in (0, {}) for dt = {dt_s} s",
                0.5 / dt_s
            )));
        }
        let wc = 2.0 * PI * cutoff_hz;
        let k = wc / (wc * dt_s / 2.0).tan();
        Ok(Self {
            cutoff_hz,
            dt_s,
            a: k / (k + wc),
            b: (k - wc) / (k + wc),
            state: None,
        })
    }

    pub fn cutoff_hz(&self) -> f64 {
        self.cutoff_hz
    }

    pub fn dt_s(&self) -> f64 {
        self.dt_s
    }

    /// Steady-state gain at `f_hz`.
    pub fn gain_at(&self, f_hz: f64) -> f64 {
        let w = 2.0 * PI * f_hz * self.dt_s;
        // |a (1 - z^-1) / (1 - b z^-1)| on the unit circle
        let num = self.a * (2.0 - 2.0 * w.cos()).sqrt();
        let den = (1.0 + self.b * self.b - 2.0 * self.b * w.cos()).sqrt();
        num / den
    }

    /// The first sample only primes the filter and yields 0.
    pub fn step(&mut self, x: f64) -> f64 {
        let y = match self.state {
            None => 0.0,
            Some((x_prev, y_prev)) => self.a * (x - x_prev) + self.b * y_prev,
        };
        self.state = Some((x, y));
        y
    }

    pub fn reset(&mut self) {
        self.state = None;
    }

    /// Filters a whole sequence from a fresh state.
    pub fn apply(&self, xs: &[f64]) -> Vec<f64> {
        let mut f = *self;
        f.reset();
        xs.iter().map(|&x| f.step(x)).collect()
    }
}

pub fn highpass_step(f: &mut HighPassFilter, x: f64) -> f64 {
    f.step(x)
}
