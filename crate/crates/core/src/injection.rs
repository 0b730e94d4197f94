//! Sinusoidal battery-current injection with half-period constant offsets.
//!
//! Inside a window the pack current is `I_ex·cos(2π f T_s k) + i_c(j)` where
//! `k` counts samples from the window start and `j = ⌊k T_s / T_p⌋` indexes
//! half-period blocks.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::battery::PackParams;
use crate::error::{Error, Result};

const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectionPlan {
    pub i_ex_a: f64,
    pub f_hz: f64,
    pub t_s_s: f64,
    pub duration_s: f64,
    /// Window start, seconds from the beginning of the run.
    #[serde(default)]
    pub start_s: f64,
}

fn integer_ratio(num: f64, den: f64) -> Option<usize> {
    let r = num / den;
    let n = r.round();
    ((r - n).abs() < GRID_TOL * r.abs().max(1.0) && n >= 1.0).then_some(n as usize)
}

impl InjectionPlan {
    pub fn new(i_ex_a: f64, f_hz: f64, t_s_s: f64, duration_s: f64, start_s: f64) -> Result<Self> {
        let plan = Self {
            i_ex_a,
            f_hz,
            t_s_s,
            duration_s,
            start_s,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// 0.5 Hz at 0.2 s over the first 200 s.
    pub fn high_frequency(i_ex_a: f64) -> Self {
        Self {
            i_ex_a,
            f_hz: 0.5,
            t_s_s: 0.2,
            duration_s: 200.0,
            start_s: 0.0,
        }
    }

    /// 0.05 Hz at 1 s over 500 s starting at `start_s`.
    pub fn medium_frequency(i_ex_a: f64, start_s: f64) -> Self {
        Self {
            i_ex_a,
            f_hz: 0.05,
            t_s_s: 1.0,
            duration_s: 500.0,
            start_s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.i_ex_a >= 0.0 && self.i_ex_a.is_finite()) {
            return Err(Error::Argument(format!("amplitude must be >= 0, got {}", self.i_ex_a)));
        }
        if !(self.f_hz > 0.0 && self.t_s_s > 0.0 && self.duration_s > 0.0 && self.start_s >= 0.0) {
            return Err(Error::Argument("frequency, sample time and duration must be positive".into()));
        }
        if integer_ratio(self.half_period_s(), self.t_s_s).is_none() {
            return Err(Error::Argument(format!(
                "sample time {} s does not divide the half period {} s",
                self.t_s_s,
                self.half_period_s()
            )));
        }
        if integer_ratio(self.duration_s, self.half_period_s()).is_none() {
            return Err(Error::Argument(format!(
                "duration {} s is not a multiple of the half period {} s",
                self.duration_s,
                self.half_period_s()
            )));
        }
        Ok(())
    }

    pub fn half_period_s(&self) -> f64 {
        1.0 / (2.0 * self.f_hz)
    }

    pub fn samples_per_block(&self) -> usize {
        integer_ratio(self.half_period_s(), self.t_s_s).expect("validated plan")
    }

    pub fn n_blocks(&self) -> usize {
        integer_ratio(self.duration_s, self.half_period_s()).expect("validated plan")
    }

    pub fn n_samples(&self) -> usize {
        self.n_blocks() * self.samples_per_block()
    }

    pub fn end_s(&self) -> f64 {
        self.start_s + self.duration_s
    }

    /// Same plan with a different sample time (e.g. to run on a finer trace).
    pub fn with_sample_time(&self, t_s_s: f64) -> Result<Self> {
        Self::new(self.i_ex_a, self.f_hz, t_s_s, self.duration_s, self.start_s)
    }
}

/// Sinusoidal component at window sample `k`; zero once the window has ended.
pub fn excitation(plan: &InjectionPlan, k: usize) -> f64 {
    if k >= plan.n_samples() {
        return 0.0;
    }
    plan.i_ex_a * (2.0 * PI * plan.f_hz * plan.t_s_s * k as f64).cos()
}

/// Tightest interval for the constant offset of block `j` that keeps the
/// composed current within the pack limits at every sample of the block.
pub fn ic_bounds(plan: &InjectionPlan, pack: &PackParams, j: usize) -> Result<(f64, f64)> {
    if j >= plan.n_blocks() {
        return Err(Error::Argument(format!(
            "block {j} outside the injection window ({} blocks)",
            plan.n_blocks()
        )));
    }
    let n = plan.samples_per_block();
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in j * n..(j + 1) * n {
        let e = excitation(plan, k);
        lo = lo.max(pack.i_b_min_a - e);
        hi = hi.min(pack.i_b_max_a - e);
    }
    if lo > hi {
        return Err(Error::InfeasibleInjection {
            block: j,
            i_c_min: lo,
            i_c_max: hi,
        });
    }
    Ok((lo, hi))
}

pub fn ic_bounds_all(plan: &InjectionPlan, pack: &PackParams) -> Result<Vec<(f64, f64)>> {
    (0..plan.n_blocks()).map(|j| ic_bounds(plan, pack, j)).collect()
}

/// Total pack current at window sample `k` for per-block offsets `i_c_blocks`.
pub fn compose(plan: &InjectionPlan, i_c_blocks: &[f64], k: usize) -> Result<f64> {
    let j = k / plan.samples_per_block();
    let i_c = i_c_blocks.get(j).ok_or_else(|| {
        Error::Argument(format!("sample {k} falls in block {j}, only {} given", i_c_blocks.len()))
    })?;
    Ok(excitation(plan, k) + i_c)
}
