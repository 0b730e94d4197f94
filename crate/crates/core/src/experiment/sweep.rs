use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{median, prepare, Inputs};
use crate::dp::{solve_baseline, solve_injected};
use crate::error::{Error, Result};
use crate::estimation::{measure, run_step1, NoiseConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRecord {
    pub i_ex_a: f64,
    pub seed: u64,
    pub feasible: bool,
    pub fuel_total_g: f64,
    pub fuel_delta_pct: f64,
    /// RMS of the R_s error over the high-frequency window.
    pub rms_r_s: f64,
}

/// Per-amplitude medians over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub i_ex_a: f64,
    pub feasible: bool,
    pub fuel_delta_pct: f64,
    pub median_rms_r_s: f64,
}

/// DP+ with the high-frequency window at every amplitude, then step-1
/// estimation per seed. Infeasible amplitudes yield rows marked as such.
pub fn tradeoff_sweep(cfg: &ExperimentConfig) -> Result<Vec<TradeoffRecord>> {
    let dt = cfg.dt();
    let inputs = prepare(cfg, dt)?;
    let Inputs { trace, fuel, eff } = &inputs;
    let base = solve_baseline(trace, &cfg.pack, fuel, eff, &cfg.dp, cfg.soc0).map_err(|e| e.in_stage("dp baseline"))?;
    let w = cfg.injection.high;
    let rows: Vec<Vec<TradeoffRecord>> = cfg
        .sweep_amplitudes
        .par_iter()
        .map(|&amp| -> Result<Vec<TradeoffRecord>> {
            let infeasible = || {
                cfg.seeds
                    .iter()
                    .map(|&seed| TradeoffRecord {
                        i_ex_a: amp,
                        seed,
                        feasible: false,
                        fuel_total_g: f64::NAN,
                        fuel_delta_pct: f64::NAN,
                        rms_r_s: f64::NAN,
                    })
                    .collect()
            };
            let plan = cfg.injection.plan(&w, amp, dt)?;
            let inj = match solve_injected(trace, &cfg.pack, fuel, eff, &[plan], &cfg.dp, cfg.soc0) {
                Ok(t) => t,
                Err(Error::InfeasibleInjection { .. } | Error::Infeasible(_)) => return Ok(infeasible()),
                Err(e) => return Err(e.in_stage("dp injected")),
            };
            let delta = 100.0 * (inj.fuel_total_g / base.fuel_total_g - 1.0);
            cfg.seeds
                .iter()
                .map(|&seed| {
                    let noise = NoiseConfig { seed, ..cfg.noise };
                    let meas = measure(&inj, &cfg.pack, &cfg.cell, &cfg.ocv, &noise)?;
                    let s = run_step1(&meas, (plan.start_s, plan.end_s()), &cfg.estimation, &noise)
                        .map_err(|e| e.in_stage("estimation"))?;
                    Ok(TradeoffRecord {
                        i_ex_a: amp,
                        seed,
                        feasible: true,
                        fuel_total_g: inj.fuel_total_g,
                        fuel_delta_pct: delta,
                        rms_r_s: s.rms_over(dt, plan.start_s, plan.end_s()),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

pub fn summarize(records: &[TradeoffRecord]) -> Vec<TradeoffPoint> {
    let mut amps: Vec<f64> = records.iter().map(|r| r.i_ex_a).collect();
    amps.sort_by(f64::total_cmp);
    amps.dedup();
    amps.into_iter()
        .map(|a| {
            let rows: Vec<&TradeoffRecord> = records.iter().filter(|r| r.i_ex_a == a).collect();
            let feasible = rows.iter().all(|r| r.feasible);
            TradeoffPoint {
                i_ex_a: a,
                feasible,
                fuel_delta_pct: median(rows.iter().map(|r| r.fuel_delta_pct).collect()),
                median_rms_r_s: median(rows.iter().map(|r| r.rms_r_s).collect()),
            }
        })
        .collect()
}
