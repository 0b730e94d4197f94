//! Battery models: the Rint pack model used for power management and the
//! first-order RC equivalent-circuit cell model used as plant truth.
//!
//! Current is positive when discharging.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PackParams {
    pub v_nom_v: f64,
    pub q_pack_ah: f64,
    pub r_pack_ohm: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub p_bat_min_w: f64,
    pub p_bat_max_w: f64,
    pub i_b_min_a: f64,
    pub i_b_max_a: f64,
}

impl Default for PackParams {
    fn default() -> Self {
        Self {
            v_nom_v: 201.6,
            q_pack_ah: 6.5,
            r_pack_ohm: 0.5,
            soc_min: 0.2,
            soc_max: 0.9,
            p_bat_min_w: -6_500.0,
            p_bat_max_w: 6_500.0,
            i_b_min_a: -30.0,
            i_b_max_a: 30.0,
        }
    }
}

impl PackParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_nom_v > 0.0 && self.q_pack_ah > 0.0 && self.r_pack_ohm > 0.0) {
            return Err(Error::Argument("pack voltage, capacity and resistance must be positive".into()));
        }
        if !(0.0 <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
            return Err(Error::Argument(format!(
                "invalid SOC window [{}, {}]",
                self.soc_min, self.soc_max
            )));
        }
        if !(self.i_b_min_a < 0.0 && 0.0 < self.i_b_max_a) {
            return Err(Error::Argument("current bounds must straddle zero".into()));
        }
        if !(self.p_bat_min_w < 0.0 && 0.0 < self.p_bat_max_w) {
            return Err(Error::Argument("power bounds must straddle zero".into()));
        }
        Ok(())
    }

    /// SOC change over `dt` seconds at constant pack current (no coulombic loss).
    pub fn soc_delta(&self, i_b: f64, dt: f64) -> f64 {
        -i_b * dt / (3600.0 * self.q_pack_ah)
    }

    /// Largest power the Rint model can deliver (the apex of the quadratic).
    pub fn max_deliverable_power(&self) -> f64 {
        self.v_nom_v * self.v_nom_v / (4.0 * self.r_pack_ohm)
    }
}

/// Terminal power for pack current `i_b` under the Rint model.
pub fn rint_power_from_current(pack: &PackParams, i_b: f64) -> Result<f64> {
    if !(i_b >= pack.i_b_min_a && i_b <= pack.i_b_max_a) {
        return Err(Error::Constraint(format!(
            "pack current {i_b} A outside [{}, {}] A",
            pack.i_b_min_a, pack.i_b_max_a
        )));
    }
    Ok(rint_power(pack, i_b))
}

#[inline]
pub(crate) fn rint_power(pack: &PackParams, i_b: f64) -> f64 {
    pack.v_nom_v * i_b - i_b * i_b * pack.r_pack_ohm
}

/// Inverse of the Rint power law, taking the smaller-magnitude root.
pub fn rint_current_from_power(pack: &PackParams, p_bat: f64) -> Result<f64> {
    rint_current(pack, p_bat).ok_or(Error::InfeasiblePower {
        p_bat_w: p_bat,
        p_max_w: pack.max_deliverable_power(),
    })
}

#[inline]
pub(crate) fn rint_current(pack: &PackParams, p_bat: f64) -> Option<f64> {
    let v = pack.v_nom_v;
    let r = pack.r_pack_ohm;
    let disc = v * v - 4.0 * r * p_bat;
    if disc < 0.0 {
        return None;
    }
    // (v - sqrt(disc)) / 2r rewritten to avoid cancellation near p = 0
    Some(2.0 * p_bat / (v + disc.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CellParams {
    pub q_cell_ah: f64,
    pub r_s_ohm: f64,
    pub r_t_ohm: f64,
    pub tau_s: f64,
    pub eta_coulomb: f64,
    pub sigma_v_volts: f64,
}

impl Default for CellParams {
    fn default() -> Self {
        Self {
            q_cell_ah: 2.47,
            r_s_ohm: 0.1,
            r_t_ohm: 0.03,
            tau_s: 15.0,
            eta_coulomb: 0.98,
            sigma_v_volts: 0.020,
        }
    }
}

impl CellParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [self.q_cell_ah, self.r_s_ohm, self.r_t_ohm, self.tau_s];
        if fields.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Argument("cell parameters must be positive".into()));
        }
        if !(self.eta_coulomb > 0.0 && self.eta_coulomb <= 1.0) {
            return Err(Error::Argument("coulomb efficiency must lie in (0, 1]".into()));
        }
        if self.sigma_v_volts < 0.0 {
            return Err(Error::Argument("sigma_v must be non-negative".into()));
        }
        Ok(())
    }

    /// RC-pair capacitance `τ / R_t` in farads.
    pub fn c_t_farad(&self) -> f64 {
        self.tau_s / self.r_t_ohm
    }
}

/// OCV–SOC curve `K0 − K1/z − K2·z + K3·ln z + K4·ln(1−z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OcvCurve {
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub z_valid: (f64, f64),
}

impl Default for OcvCurve {
    fn default() -> Self {
        Self {
            k0: 2.6995,
            k1: 0.0574,
            k2: -1.3967,
            k3: -0.55018,
            k4: -0.0377,
            z_valid: (0.01, 0.99),
        }
    }
}

impl OcvCurve {
    pub fn in_domain(&self, z: f64) -> bool {
        z >= self.z_valid.0 && z <= self.z_valid.1
    }

    pub fn clamp(&self, z: f64) -> f64 {
        z.clamp(self.z_valid.0, self.z_valid.1)
    }

    fn check(&self, z: f64) -> Result<()> {
        if self.in_domain(z) {
            Ok(())
        } else {
            Err(Error::Domain {
                value: z,
                domain: format!("[{}, {}]", self.z_valid.0, self.z_valid.1),
            })
        }
    }

    pub(crate) fn eval(&self, z: f64) -> f64 {
        self.k0 - self.k1 / z - self.k2 * z + self.k3 * z.ln() + self.k4 * (1.0 - z).ln()
    }

    pub(crate) fn slope(&self, z: f64) -> f64 {
        self.k1 / (z * z) - self.k2 + self.k3 / z - self.k4 / (1.0 - z)
    }

    pub fn ocv(&self, z: f64) -> Result<f64> {
        self.check(z)?;
        Ok(self.eval(z))
    }

    /// dV_OC/dz.
    pub fn docv_dz(&self, z: f64) -> Result<f64> {
        self.check(z)?;
        Ok(self.slope(z))
    }
}

pub fn ocv(curve: &OcvCurve, z: f64) -> Result<f64> {
    curve.ocv(z)
}

/// Least-squares line `V_OC ≈ a·z + b` over 100 uniform points on `[z_lo, z_hi]`.
pub fn linearize_ocv(curve: &OcvCurve, z_lo: f64, z_hi: f64) -> Result<(f64, f64)> {
    if !(z_lo < z_hi) {
        return Err(Error::Argument(format!("empty range [{z_lo}, {z_hi}]")));
    }
    curve.check(z_lo)?;
    curve.check(z_hi)?;
    const N: usize = 100;
    let zs: Vec<f64> = (0..N)
        .map(|i| z_lo + (z_hi - z_lo) * i as f64 / (N - 1) as f64)
        .collect();
    let n = N as f64;
    let mean_z = zs.iter().sum::<f64>() / n;
    let vs: Vec<f64> = zs.iter().map(|&z| curve.eval(z)).collect();
    let mean_v = vs.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (z, v) in zs.iter().zip(&vs) {
        sxy += (z - mean_z) * (v - mean_v);
        sxx += (z - mean_z) * (z - mean_z);
    }
    let a = sxy / sxx;
    Ok((a, mean_v - a * mean_z))
}

/// Plant-truth cell state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcmState {
    pub v_c_volts: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EcmStep {
    pub state: EcmState,
    pub v_b: f64,
    /// SOC left the OCV domain and was clamped.
    pub saturated: bool,
}

/// Advances the RC branch and SOC over `dt` with the current held constant
/// (exact zero-order-hold discretization) and returns the terminal voltage.
pub fn ecm_step(cell: &CellParams, curve: &OcvCurve, state: EcmState, i_cell: f64, dt: f64) -> Result<EcmStep> {
    if !(dt > 0.0) {
        return Err(Error::Argument(format!("dt must be positive, got {dt}")));
    }
    let decay = (-dt / cell.tau_s).exp();
    let v_c = decay * state.v_c_volts + cell.r_t_ohm * (1.0 - decay) * i_cell;
    let z_raw = state.z - cell.eta_coulomb * dt * i_cell / (3600.0 * cell.q_cell_ah);
    let z = curve.clamp(z_raw);
    let v_b = curve.eval(z) - cell.r_s_ohm * i_cell - v_c;
    Ok(EcmStep {
        state: EcmState { v_c_volts: v_c, z },
        v_b,
        saturated: z != z_raw,
    })
}

/// Number of cells in parallel implied by the capacity ratio.
pub fn parallel_cells(pack: &PackParams, cell: &CellParams) -> f64 {
    pack.q_pack_ah / cell.q_cell_ah
}

pub fn pack_to_cell_current(pack: &PackParams, cell: &CellParams, i_pack: f64) -> f64 {
    i_pack / parallel_cells(pack, cell)
}
