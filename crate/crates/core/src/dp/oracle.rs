//! Exhaustive search over generator-power sequences for tiny baseline problems.
//!
//! The stage model is written out again here, directly on top of the battery
//! and vehicle functions, so that the DP's candidate pruning and value table
//! are checked against something that shares none of that machinery.

use super::{DpConfig, PowerSplitTrajectory, SocInterp};
use crate::battery::{rint_current_from_power, rint_power_from_current, PackParams};
use crate::error::{Error, Result};
use crate::maps::{FuelRateCurve, MotorEffMap};
use crate::vehicle::{electrical_demand, motor_efficiency_at, PowerDemandTrace};

pub const MAX_STEPS: usize = 8;
pub const MAX_CONTROLS: usize = 5;

struct Outcome {
    soc_next: f64,
    fuel_g: f64,
    p_gen: f64,
    p_bat: f64,
    i_b: f64,
}

/// Global optimum of the baseline problem on the nearest-node SOC grid,
/// found by trying every control sequence.
pub fn enumerate_oracle(
    trace: &PowerDemandTrace,
    pack: &PackParams,
    fuel: &FuelRateCurve,
    eff: &MotorEffMap,
    cfg: &DpConfig,
    soc0: f64,
) -> Result<PowerSplitTrajectory> {
    let n = trace.len();
    if n > MAX_STEPS || cfg.p_gen_grid_points > MAX_CONTROLS {
        return Err(Error::TooLarge(format!(
            "{n} steps x {} controls (limit {MAX_STEPS} x {MAX_CONTROLS})",
            cfg.p_gen_grid_points
        )));
    }
    if cfg.soc_interp != SocInterp::Nearest {
        return Err(Error::Argument("the enumeration oracle works on the nearest-node SOC grid".into()));
    }
    cfg.validate()?;
    if !(soc0 >= pack.soc_min && soc0 <= pack.soc_max) {
        return Err(Error::Argument(format!("initial SOC {soc0} out of range")));
    }

    let nodes = cfg.soc_grid_points;
    let h = (pack.soc_max - pack.soc_min) / (nodes - 1) as f64;
    let snap = |soc: f64| -> f64 {
        let i = (((soc - pack.soc_min) / h).round().max(0.0) as usize).min(nodes - 1);
        if i == nodes - 1 {
            pack.soc_max
        } else {
            pack.soc_min + h * i as f64
        }
    };
    let controls: Vec<f64> = (0..cfg.p_gen_grid_points)
        .map(|i| {
            let p_max = fuel.p_gen_max_w();
            if i == cfg.p_gen_grid_points - 1 {
                p_max
            } else {
                p_max * i as f64 / (cfg.p_gen_grid_points - 1) as f64
            }
        })
        .collect();
    let mut p_elec = Vec::with_capacity(n);
    let mut motor_eff = Vec::with_capacity(n);
    for k in 0..n {
        let e = motor_efficiency_at(trace, k, eff)?.eff;
        motor_eff.push(e);
        p_elec.push(electrical_demand(trace.p_dem_w[k], e));
    }

    let dt = trace.dt;
    let charge_as = 3600.0 * pack.q_pack_ah;
    let stage = |k: usize, soc: f64, p_gen: f64| -> Option<Outcome> {
        let demand = p_elec[k];
        let braking = demand < 0.0;
        let mut p_bat = demand - p_gen;
        if braking {
            let floor = pack.p_bat_min_w.max(rint_power_from_current(pack, pack.i_b_min_a).ok()?);
            p_bat = p_bat.max(floor);
            if p_gen + p_bat > 0.0 {
                return None;
            }
        }
        if p_bat < pack.p_bat_min_w || p_bat > pack.p_bat_max_w {
            return None;
        }
        let mut i_b = rint_current_from_power(pack, p_bat).ok()?;
        if i_b < pack.i_b_min_a - 1e-9 || i_b > pack.i_b_max_a + 1e-9 {
            return None;
        }
        let mut soc_next = soc + (-i_b * dt / charge_as);
        if soc_next < pack.soc_min - 1e-12 {
            return None;
        }
        if soc_next > pack.soc_max + 1e-12 {
            if !braking {
                return None;
            }
            i_b = -(pack.soc_max - soc).max(0.0) * charge_as / dt;
            p_bat = pack.v_nom_v * i_b - i_b * i_b * pack.r_pack_ohm;
            if p_gen + p_bat > 0.0 {
                return None;
            }
            soc_next = pack.soc_max;
        }
        Some(Outcome {
            soc_next: snap(soc_next.clamp(pack.soc_min, pack.soc_max)),
            fuel_g: fuel.rate_gps(p_gen) * dt,
            p_gen,
            p_bat,
            i_b,
        })
    };

    let soc_start = snap(soc0);
    let m = controls.len();
    let total_sequences = m.pow(n as u32);
    let mut best: Option<(f64, Vec<Outcome>)> = None;
    let mut seq = vec![0usize; n];
    for _ in 0..total_sequences {
        let mut soc = soc_start;
        let mut path = Vec::with_capacity(n);
        for (k, &u) in seq.iter().enumerate() {
            match stage(k, soc, controls[u]) {
                Some(o) => {
                    soc = o.soc_next;
                    path.push(o);
                }
                None => break,
            }
        }
        if path.len() == n {
            // same association order as the Bellman recursion
            let cost = path
                .iter()
                .rev()
                .fold(cfg.terminal_cost(soc_start, soc), |acc, o| o.fuel_g + acc);
            if best.as_ref().map_or(true, |(b, _)| cost < *b) {
                best = Some((cost, path));
            }
        }
        for digit in seq.iter_mut().rev() {
            *digit += 1;
            if *digit < m {
                break;
            }
            *digit = 0;
        }
    }

    let (cost, path) = best.ok_or_else(|| Error::Infeasible("every control sequence violates a constraint".into()))?;
    let mut soc = vec![soc_start];
    soc.extend(path.iter().map(|o| o.soc_next));
    let soc_final = *soc.last().unwrap();
    let fuel_g: Vec<f64> = path.iter().map(|o| o.fuel_g).collect();
    let fuel_total_g = fuel_g.iter().sum();
    let p_gen: Vec<f64> = path.iter().map(|o| o.p_gen).collect();
    let p_bat: Vec<f64> = path.iter().map(|o| o.p_bat).collect();
    let p_brake = (0..n)
        .map(|k| if p_elec[k] < 0.0 { p_elec[k] - p_gen[k] - p_bat[k] } else { 0.0 })
        .collect();
    let terminal_cost = cfg.terminal_cost(soc_start, soc_final);
    Ok(PowerSplitTrajectory {
        dt,
        p_dem_w: trace.p_dem_w.clone(),
        p_elec_w: p_elec,
        motor_eff,
        p_gen_w: p_gen,
        p_bat_w: p_bat,
        p_brake_w: p_brake,
        i_b_a: path.iter().map(|o| o.i_b).collect(),
        soc,
        fuel_g,
        fuel_total_g,
        soc_initial: soc_start,
        soc_final,
        terminal_cost,
        objective: cost,
        dp_value: cost,
        injections: Vec::new(),
        eff_clamped_steps: 0,
    })
}
