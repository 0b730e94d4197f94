//! Longitudinal vehicle dynamics: drive cycle to power demand at the motor shaft.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::drive_cycle::DriveCycle;
use crate::error::{Error, Result};
use crate::maps::{EffLookup, MotorEffMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    pub mass_kg: f64,
    pub wheel_radius_m: f64,
    pub frontal_area_m2: f64,
    pub drag_coeff: f64,
    pub rolling_coeff: f64,
    pub trans_eff: f64,
    pub regen_eff: f64,
    pub final_ratio: f64,
    pub gravity_mps2: f64,
    pub air_density_kgpm3: f64,
    pub grade_rad: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass_kg: 1254.0,
            wheel_radius_m: 0.287,
            frontal_area_m2: 2.52,
            drag_coeff: 0.3,
            rolling_coeff: 0.015,
            trans_eff: 0.9,
            regen_eff: 0.25,
            final_ratio: 4.113,
            gravity_mps2: 9.81,
            air_density_kgpm3: 1.2,
            grade_rad: 0.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass_kg", self.mass_kg),
            ("wheel_radius_m", self.wheel_radius_m),
            ("frontal_area_m2", self.frontal_area_m2),
            ("drag_coeff", self.drag_coeff),
            ("rolling_coeff", self.rolling_coeff),
            ("final_ratio", self.final_ratio),
            ("gravity_mps2", self.gravity_mps2),
            ("air_density_kgpm3", self.air_density_kgpm3),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Argument(format!("{name} must be positive, got {v}")));
        }
        for (name, eta) in [("trans_eff", self.trans_eff), ("regen_eff", self.regen_eff)] {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::Argument(format!("{name} must lie in (0, 1], got {eta}")));
            }
        }
        if !self.grade_rad.is_finite() {
            return Err(Error::Argument("grade_rad must be finite".into()));
        }
        Ok(())
    }

    /// Road-load power at the wheels for speed `v` and acceleration `accel`.
    pub fn road_load_power(&self, v: f64, accel: f64) -> f64 {
        let m = self.mass_kg;
        let g = self.gravity_mps2;
        let (sin_a, cos_a) = self.grade_rad.sin_cos();
        m * g * self.rolling_coeff * v * cos_a
            + 0.5 * self.drag_coeff * self.air_density_kgpm3 * self.frontal_area_m2 * v.powi(3)
            + m * v * accel
            + m * g * v * sin_a
    }

    /// Traction divides by the transmission efficiency; braking recovers only
    /// the regenerative fraction.
    pub fn demand_from_road_load(&self, p_road: f64) -> f64 {
        if p_road >= 0.0 {
            p_road / self.trans_eff
        } else {
            p_road * self.regen_eff
        }
    }

    pub fn motor_speed(&self, v: f64) -> f64 {
        v * self.final_ratio / self.wheel_radius_m
    }
}

/// Per-step mechanical power demand and motor speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerDemandTrace {
    pub dt: f64,
    pub speed_mps: Vec<f64>,
    pub p_dem_w: Vec<f64>,
    pub motor_speed_radps: Vec<f64>,
}

impl PowerDemandTrace {
    pub fn new(dt: f64, speed_mps: Vec<f64>, p_dem_w: Vec<f64>, motor_speed_radps: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Argument("dt must be positive".into()));
        }
        if speed_mps.len() != p_dem_w.len() || p_dem_w.len() != motor_speed_radps.len() {
            return Err(Error::Data("trace columns have different lengths".into()));
        }
        if p_dem_w.iter().chain(&motor_speed_radps).any(|v| !v.is_finite()) {
            return Err(Error::Data("trace contains non-finite values".into()));
        }
        Ok(Self {
            dt,
            speed_mps,
            p_dem_w,
            motor_speed_radps,
        })
    }

    /// Demand with only the given values; speeds are zero. Handy for toy problems.
    pub fn from_demand(dt: f64, p_dem_w: Vec<f64>) -> Result<Self> {
        let n = p_dem_w.len();
        Self::new(dt, vec![0.0; n], p_dem_w, vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.p_dem_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_dem_w.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t_s", "v_mps", "p_dem_w", "motor_speed_radps"])?;
        for k in 0..self.len() {
            out.write_record(&[
                format!("{}", self.time(k)),
                format!("{}", self.speed_mps[k]),
                format!("{}", self.p_dem_w[k]),
                format!("{}", self.motor_speed_radps[k]),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<trace csv>", e))?;
        Ok(())
    }
}

/// Power demand at the motor shaft, using forward-difference acceleration
/// (zero on the final sample).
pub fn power_demand(cycle: &DriveCycle, params: &VehicleParams) -> Result<PowerDemandTrace> {
    params.validate()?;
    let v = cycle.speeds();
    let dt = cycle.dt();
    let n = v.len();
    let mut p_dem = Vec::with_capacity(n);
    let mut omega = Vec::with_capacity(n);
    for k in 0..n {
        let accel = if k + 1 < n { (v[k + 1] - v[k]) / dt } else { 0.0 };
        p_dem.push(params.demand_from_road_load(params.road_load_power(v[k], accel)));
        omega.push(params.motor_speed(v[k]));
    }
    PowerDemandTrace::new(dt, v.to_vec(), p_dem, omega)
}

/// Motor/inverter efficiency at step `k`; torque is `P_dem / ω`.
pub fn motor_efficiency_at(trace: &PowerDemandTrace, k: usize, map: &MotorEffMap) -> Result<EffLookup> {
    if k >= trace.len() {
        return Err(Error::Argument(format!("step {k} outside trace of length {}", trace.len())));
    }
    let omega = trace.motor_speed_radps[k];
    if omega.abs() < 1e-9 {
        return Ok(map.lookup(0.0, 0.0));
    }
    Ok(map.lookup(omega, trace.p_dem_w[k] / omega))
}

/// Electrical power the DC bus must deliver for a mechanical demand `p_dem`.
///
/// Motoring draws `p_dem / eff`; when generating, the bus receives `p_dem · eff`.
pub fn electrical_demand(p_dem: f64, eff: f64) -> f64 {
    if p_dem >= 0.0 {
        p_dem / eff
    } else {
        p_dem * eff
    }
}
