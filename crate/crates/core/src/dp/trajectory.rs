use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::injection::InjectionPlan;

/// Where an injection window sits in the trajectory and which offsets the DP picked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionRecord {
    pub plan: InjectionPlan,
    /// Index of the window's first sample.
    pub k_start: usize,
    pub i_c_blocks: Vec<f64>,
}

/// Per-step power split. Step `k` lasts `dt`; `soc[k]` is the SOC at the start
/// of step `k`, so `soc` has one more entry than the per-step columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSplitTrajectory {
    pub dt: f64,
    pub p_dem_w: Vec<f64>,
    /// Bus-side demand after motor/inverter losses.
    pub p_elec_w: Vec<f64>,
    pub motor_eff: Vec<f64>,
    pub p_gen_w: Vec<f64>,
    pub p_bat_w: Vec<f64>,
    /// Regenerative power dissipated by the friction brakes (≤ 0).
    pub p_brake_w: Vec<f64>,
    pub i_b_a: Vec<f64>,
    pub soc: Vec<f64>,
    pub fuel_g: Vec<f64>,
    pub fuel_total_g: f64,
    pub soc_initial: f64,
    pub soc_final: f64,
    pub terminal_cost: f64,
    /// Realised objective: total fuel plus terminal cost.
    pub objective: f64,
    /// Optimal cost-to-go the backward pass assigned to the initial SOC.
    pub dp_value: f64,
    pub injections: Vec<InjectionRecord>,
    /// Steps whose motor operating point fell outside the efficiency map.
    pub eff_clamped_steps: usize,
}

impl PowerSplitTrajectory {
    pub fn len(&self) -> usize {
        self.p_gen_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_gen_w.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 * self.dt
    }

    pub fn terminal_deficit(&self) -> f64 {
        (self.soc_initial - self.soc_final).max(0.0)
    }

    /// Writes `k,t_s,p_dem_w,p_gen_w,p_bat_w,i_b_a,soc,fuel_g`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "t_s", "p_dem_w", "p_gen_w", "p_bat_w", "i_b_a", "soc", "fuel_g"])?;
        for k in 0..self.len() {
            out.write_record(&[
                k.to_string(),
                format!("{}", self.time(k)),
                format!("{}", self.p_dem_w[k]),
                format!("{}", self.p_gen_w[k]),
                format!("{}", self.p_bat_w[k]),
                format!("{}", self.i_b_a[k]),
                format!("{}", self.soc[k]),
                format!("{}", self.fuel_g[k]),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<trajectory csv>", e))?;
        Ok(())
    }

    /// Pack current over `[t_start, t_start + duration)`.
    pub fn current_window(&self, t_start: f64, duration: f64) -> &[f64] {
        let k0 = ((t_start / self.dt).round() as usize).min(self.len());
        let k1 = (((t_start + duration) / self.dt).round() as usize).min(self.len());
        &self.i_b_a[k0..k1]
    }
}
