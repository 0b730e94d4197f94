//! Backward-induction dynamic programming for the series-HEV power split.
//!
//! Two problem families share one solver:
//!
//! * the baseline, where every sample is a decision epoch and the control is
//!   the generator power on a uniform grid;
//! * the injected problem, where inside each injection window the decision
//!   epoch is one half-period block and the control is the block's constant
//!   current offset `i_c(j)`. Outside the windows the baseline stage applies.
//!
//! The state is pack SOC on a uniform grid over `[soc_min, soc_max]`; the
//! cost-to-go is interpolated linearly in SOC (or snapped to the nearest node,
//! see [`SocInterp`]). Fuel is in grams, SOC in `[0, 1]`.

mod oracle;
mod solver;
mod trajectory;

use serde::{Deserialize, Serialize};

pub use oracle::enumerate_oracle;
pub use solver::{Candidate, DpSolver, EpochKind, INFEASIBLE_COST};
pub use trajectory::{InjectionRecord, PowerSplitTrajectory};

use crate::battery::PackParams;
use crate::error::Result;
use crate::injection::InjectionPlan;
use crate::maps::{FuelRateCurve, MotorEffMap};
use crate::vehicle::PowerDemandTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalMode {
    /// `γ·max(0, SOC(1) − SOC(N))`: deficits cost, surpluses are free.
    PenaltyAsymmetric,
    /// `γ·(SOC(1) − SOC(N))`: surpluses earn a credit.
    PenaltySigned,
}

/// How the cost-to-go is read between SOC grid nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SocInterp {
    /// Piecewise-linear interpolation; the SOC itself stays continuous.
    Linear,
    /// SOC is rounded to the nearest grid node after every epoch.
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpConfig {
    pub soc_grid_points: usize,
    pub p_gen_grid_points: usize,
    pub i_c_grid_points: usize,
    pub gamma: f64,
    pub terminal_mode: TerminalMode,
    pub soc_interp: SocInterp,
    /// Evaluate SOC nodes of a stage on the rayon pool.
    pub parallel: bool,
}

impl Default for DpConfig {
    fn default() -> Self {
        Self {
            soc_grid_points: 201,
            p_gen_grid_points: 101,
            i_c_grid_points: 81,
            gamma: 350.0,
            terminal_mode: TerminalMode::PenaltyAsymmetric,
            soc_interp: SocInterp::Linear,
            parallel: true,
        }
    }
}

impl DpConfig {
    pub fn validate(&self) -> Result<()> {
        use crate::error::Error;
        if self.soc_grid_points < 2 || self.p_gen_grid_points < 2 || self.i_c_grid_points < 2 {
            return Err(Error::Argument("every DP grid needs at least 2 points".into()));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Argument(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        Ok(())
    }

    pub fn terminal_cost(&self, soc_initial: f64, soc_final: f64) -> f64 {
        let deficit = soc_initial - soc_final;
        match self.terminal_mode {
            TerminalMode::PenaltyAsymmetric => self.gamma * deficit.max(0.0),
            TerminalMode::PenaltySigned => self.gamma * deficit,
        }
    }
}

/// Everything the solver needs besides the injection plans.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub trace: &'a PowerDemandTrace,
    pub pack: &'a PackParams,
    pub fuel: &'a FuelRateCurve,
    pub eff: &'a MotorEffMap,
    pub cfg: &'a DpConfig,
}

/// DP− : generator power is the control at every sample.
pub fn solve_baseline(
    trace: &PowerDemandTrace,
    pack: &PackParams,
    fuel: &FuelRateCurve,
    eff: &MotorEffMap,
    cfg: &DpConfig,
    soc0: f64,
) -> Result<PowerSplitTrajectory> {
    let problem = Problem {
        trace,
        pack,
        fuel,
        eff,
        cfg,
    };
    DpSolver::new(problem, &[], soc0)?.solve()
}

/// DP+ : inside each window of `plans` the pack current follows the injected
/// cosine plus a per-block constant chosen by the DP.
pub fn solve_injected(
    trace: &PowerDemandTrace,
    pack: &PackParams,
    fuel: &FuelRateCurve,
    eff: &MotorEffMap,
    plans: &[InjectionPlan],
    cfg: &DpConfig,
    soc0: f64,
) -> Result<PowerSplitTrajectory> {
    let problem = Problem {
        trace,
        pack,
        fuel,
        eff,
        cfg,
    };
    DpSolver::new(problem, plans, soc0)?.solve()
}
