//! Engine fuel-rate curve along the optimal operating line and the
//! motor/inverter efficiency surface.
//!
//! Both default maps are parametric stand-ins; tabulated maps can be loaded
//! from CSV to replace them.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quadratic fuel rate with an idle offset: `idle + slope·P + curvature·P²` g/s
/// whenever the engine is on (`P > 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadraticFuel {
    pub idle_rate_gps: f64,
    pub slope_gpj: f64,
    pub curvature_gpj2: f64,
    pub p_gen_max_w: f64,
}

impl Default for QuadraticFuel {
    fn default() -> Self {
        // slope tuned so that DP- on UDDS x5 (1 s, SOC 0.6) burns 1795 g; idle rate
        // picked so the DP- current spectrum stays near 2 A
        Self {
            idle_rate_gps: 0.05,
            slope_gpj: 5.33e-5,
            curvature_gpj2: 2.0e-10,
            p_gen_max_w: 45_000.0,
        }
    }
}

/// Piecewise-linear fuel rate through `(p_gen_w, fuel_gps)` knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuelTable {
    pub p_gen_w: Vec<f64>,
    pub fuel_gps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FuelRateCurve {
    Quadratic(QuadraticFuel),
    Table(FuelTable),
}

impl Default for FuelRateCurve {
    fn default() -> Self {
        FuelRateCurve::Quadratic(QuadraticFuel::default())
    }
}

impl FuelRateCurve {
    pub fn quadratic(idle_rate_gps: f64, slope_gpj: f64, curvature_gpj2: f64, p_gen_max_w: f64) -> Result<Self> {
        let curve = FuelRateCurve::Quadratic(QuadraticFuel {
            idle_rate_gps,
            slope_gpj,
            curvature_gpj2,
            p_gen_max_w,
        });
        curve.validate()?;
        Ok(curve)
    }

    pub fn table(p_gen_w: Vec<f64>, fuel_gps: Vec<f64>) -> Result<Self> {
        let curve = FuelRateCurve::Table(FuelTable { p_gen_w, fuel_gps });
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FuelRateCurve::Quadratic(q) => {
                if !(q.idle_rate_gps >= 0.0 && q.slope_gpj >= 0.0 && q.curvature_gpj2 >= 0.0) {
                    return Err(Error::Argument("fuel curve coefficients must be non-negative".into()));
                }
                if q.slope_gpj == 0.0 && q.curvature_gpj2 == 0.0 {
                    return Err(Error::Argument("fuel curve must be strictly increasing".into()));
                }
                if !(q.p_gen_max_w > 0.0) {
                    return Err(Error::Argument("p_gen_max_w must be positive".into()));
                }
            }
            FuelRateCurve::Table(t) => {
                if t.p_gen_w.len() != t.fuel_gps.len() || t.p_gen_w.len() < 2 {
                    return Err(Error::Data("fuel table needs >= 2 matching rows".into()));
                }
                if t.p_gen_w[0] != 0.0 {
                    return Err(Error::Data("fuel table must start at p_gen_w = 0".into()));
                }
                if t.fuel_gps[0] < 0.0 {
                    return Err(Error::Data("fuel rates must be non-negative".into()));
                }
                for w in t.p_gen_w.windows(2).zip(t.fuel_gps.windows(2)) {
                    if !(w.0[1] > w.0[0] && w.1[1] > w.1[0]) {
                        return Err(Error::Data("fuel table must be strictly increasing".into()));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn p_gen_min_w(&self) -> f64 {
        0.0
    }

    pub fn p_gen_max_w(&self) -> f64 {
        match self {
            FuelRateCurve::Quadratic(q) => q.p_gen_max_w,
            FuelRateCurve::Table(t) => *t.p_gen_w.last().unwrap(),
        }
    }

    /// Fuel rate in g/s with the engine on. Callers must ensure `p_gen_w` is in range.
    pub fn rate_gps(&self, p_gen_w: f64) -> f64 {
        if p_gen_w == 0.0 {
            return 0.0;
        }
        match self {
            FuelRateCurve::Quadratic(q) => {
                q.idle_rate_gps + q.slope_gpj * p_gen_w + q.curvature_gpj2 * p_gen_w * p_gen_w
            }
            FuelRateCurve::Table(t) => interp1(&t.p_gen_w, &t.fuel_gps, p_gen_w),
        }
    }

    /// Fuel burnt in grams while producing `p_gen_w` for `dt` seconds.
    pub fn fuel_mass(&self, p_gen_w: f64, dt: f64) -> Result<f64> {
        if !(p_gen_w >= 0.0 && p_gen_w <= self.p_gen_max_w()) {
            return Err(Error::Constraint(format!(
                "generator power {p_gen_w} W outside [0, {}] W",
                self.p_gen_max_w()
            )));
        }
        Ok(self.rate_gps(p_gen_w) * dt)
    }

    /// Loads `p_gen_w,fuel_gps` rows (header optional).
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let rows = read_numeric_rows(file, 2)?;
        let (p, f) = rows.into_iter().map(|r| (r[0], r[1])).unzip();
        Self::table(p, f)
    }
}

fn interp1(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let last = xs.len() - 1;
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[last] {
        return ys[last];
    }
    let i = xs.partition_point(|&v| v <= x) - 1;
    let frac = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + frac * (ys[i + 1] - ys[i])
}

fn read_numeric_rows<R: Read>(reader: R, cols: usize) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() < cols {
            return Err(Error::Format(format!("row {row}: expected {cols} columns")));
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            rec.iter().take(cols).map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => out.push(v),
            Err(_) if row == 0 => continue,
            Err(e) => return Err(Error::Format(format!("row {row}: {e}"))),
        }
    }
    Ok(out)
}

/// Result of an efficiency lookup; `clamped` is set when the operating point
/// lay outside the map envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffLookup {
    pub eff: f64,
    pub clamped: bool,
}

/// Motor/inverter efficiency on a regular `(speed, |torque|)` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotorEffMap {
    speeds_radps: Vec<f64>,
    torques_nm: Vec<f64>,
    /// Row-major: `eff[i * torques.len() + j]` for speed `i`, torque `j`.
    eff: Vec<f64>,
    idle_eff: f64,
}

/// Constants of the default synthetic efficiency surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticEffParams {
    pub peak_eff: f64,
    pub floor_eff: f64,
    pub peak_speed_radps: f64,
    pub peak_torque_nm: f64,
    pub max_speed_radps: f64,
    pub max_torque_nm: f64,
    pub idle_eff: f64,
    pub speed_points: usize,
    pub torque_points: usize,
}

impl Default for SyntheticEffParams {
    fn default() -> Self {
        Self {
            peak_eff: 0.93,
            floor_eff: 0.60,
            peak_speed_radps: 300.0,
            peak_torque_nm: 100.0,
            max_speed_radps: 700.0,
            max_torque_nm: 300.0,
            idle_eff: 0.85,
            speed_points: 29,
            torque_points: 31,
        }
    }
}

impl Default for MotorEffMap {
    fn default() -> Self {
        Self::synthetic(&SyntheticEffParams::default()).expect("default surface is valid")
    }
}

impl MotorEffMap {
    pub fn new(speeds_radps: Vec<f64>, torques_nm: Vec<f64>, eff: Vec<f64>, idle_eff: f64) -> Result<Self> {
        let ascending = |v: &[f64]| v.len() >= 2 && v.windows(2).all(|w| w[1] > w[0]);
        if !ascending(&speeds_radps) || !ascending(&torques_nm) {
            return Err(Error::Data("efficiency grid axes must be strictly ascending with >= 2 knots".into()));
        }
        if speeds_radps[0] < 0.0 || torques_nm[0] < 0.0 {
            return Err(Error::Data("efficiency grid axes must be non-negative".into()));
        }
        if eff.len() != speeds_radps.len() * torques_nm.len() {
            return Err(Error::Data("efficiency grid size mismatch".into()));
        }
        if let Some(bad) = eff.iter().chain(std::iter::once(&idle_eff)).find(|e| !(**e > 0.0 && **e <= 1.0)) {
            return Err(Error::Data(format!("efficiency {bad} outside (0, 1]")));
        }
        Ok(Self {
            speeds_radps,
            torques_nm,
            eff,
            idle_eff,
        })
    }

    /// Smooth unimodal surface: peak at `(peak_speed, peak_torque)` falling
    /// quadratically to `floor_eff` at the envelope edge.
    pub fn synthetic(p: &SyntheticEffParams) -> Result<Self> {
        if p.speed_points < 2 || p.torque_points < 2 {
            return Err(Error::Argument("synthetic map needs >= 2 knots per axis".into()));
        }
        let axis = |max: f64, n: usize| -> Vec<f64> {
            (0..n).map(|i| max * i as f64 / (n - 1) as f64).collect()
        };
        let speeds = axis(p.max_speed_radps, p.speed_points);
        let torques = axis(p.max_torque_nm, p.torque_points);
        let half_w = (p.max_speed_radps - p.peak_speed_radps).max(p.peak_speed_radps);
        let half_t = (p.max_torque_nm - p.peak_torque_nm).max(p.peak_torque_nm);
        let mut eff = Vec::with_capacity(speeds.len() * torques.len());
        for &w in &speeds {
            for &t in &torques {
                let r2 = ((w - p.peak_speed_radps) / half_w).powi(2)
                    + ((t - p.peak_torque_nm) / half_t).powi(2);
                eff.push((p.peak_eff - (p.peak_eff - p.floor_eff) * r2).max(p.floor_eff));
            }
        }
        Self::new(speeds, torques, eff, p.idle_eff)
    }

    /// Loads `speed_radps,torque_nm,eff` rows describing a full grid.
    pub fn load_csv(path: impl AsRef<Path>, idle_eff: f64) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let rows = read_numeric_rows(file, 3)?;
        let mut speeds: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let mut torques: Vec<f64> = rows.iter().map(|r| r[1]).collect();
        for axis in [&mut speeds, &mut torques] {
            axis.sort_by(f64::total_cmp);
            axis.dedup();
        }
        let mut eff = vec![f64::NAN; speeds.len() * torques.len()];
        for r in &rows {
            let i = speeds.partition_point(|&v| v < r[0]);
            let j = torques.partition_point(|&v| v < r[1]);
            eff[i * torques.len() + j] = r[2];
        }
        if eff.iter().any(|e| e.is_nan()) {
            return Err(Error::Data("efficiency CSV does not cover a full grid".into()));
        }
        Self::new(speeds, torques, eff, idle_eff)
    }

    pub fn idle_eff(&self) -> f64 {
        self.idle_eff
    }

    pub fn max_eff(&self) -> f64 {
        self.eff.iter().copied().fold(f64::MIN, f64::max)
    }

    pub fn min_eff(&self) -> f64 {
        self.eff.iter().copied().fold(f64::MAX, f64::min)
    }

    fn node(&self, i: usize, j: usize) -> f64 {
        self.eff[i * self.torques_nm.len() + j]
    }

    /// Bilinear lookup; torque sign is ignored.
    pub fn lookup(&self, speed_radps: f64, torque_nm: f64) -> EffLookup {
        if speed_radps.abs() < 1e-9 {
            return EffLookup {
                eff: self.idle_eff,
                clamped: false,
            };
        }
        let (w, cw) = clamp_axis(&self.speeds_radps, speed_radps.abs());
        let (t, ct) = clamp_axis(&self.torques_nm, torque_nm.abs());
        let (i, fw) = locate(&self.speeds_radps, w);
        let (j, ft) = locate(&self.torques_nm, t);
        let e00 = self.node(i, j);
        let e01 = self.node(i, j + 1);
        let e10 = self.node(i + 1, j);
        let e11 = self.node(i + 1, j + 1);
        let lo = e00 + ft * (e01 - e00);
        let hi = e10 + ft * (e11 - e10);
        EffLookup {
            eff: lo + fw * (hi - lo),
            clamped: cw || ct,
        }
    }

    pub fn motor_eff(&self, speed_radps: f64, torque_nm: f64) -> f64 {
        self.lookup(speed_radps, torque_nm).eff
    }
}

fn clamp_axis(axis: &[f64], x: f64) -> (f64, bool) {
    let (lo, hi) = (axis[0], axis[axis.len() - 1]);
    if x < lo {
        (lo, true)
    } else if x > hi {
        (hi, true)
    } else {
        (x, false)
    }
}

fn locate(axis: &[f64], x: f64) -> (usize, f64) {
    let i = (axis.partition_point(|&v| v <= x).max(1) - 1).min(axis.len() - 2);
    let frac = (x - axis[i]) / (axis[i + 1] - axis[i]);
    (i, frac)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn engine_off_is_free() {
        let c = FuelRateCurve::default();
        assert_eq!(c.fuel_mass(0.0, 1.0).unwrap(), 0.0);
        assert!(c.fuel_mass(1e-6, 1.0).unwrap() > 0.0);
    }

    #[test]
    fn fuel_is_linear_in_dt() {
        let c = FuelRateCurve::default();
        let one = c.fuel_mass(12_345.0, 1.0).unwrap();
        assert_eq!(c.fuel_mass(12_345.0, 2.0).unwrap(), 2.0 * one);
    }

    #[test]
    fn fuel_out_of_range() {
        let c = FuelRateCurve::default();
        assert!(matches!(c.fuel_mass(-1.0, 1.0), Err(Error::Constraint(_))));
        assert!(matches!(c.fuel_mass(c.p_gen_max_w() + 1.0, 1.0), Err(Error::Constraint(_))));
    }

    #[test]
    fn fuel_increasing_and_convex() {
        let c = FuelRateCurve::default();
        let pts: Vec<f64> = (1..=450).map(|i| c.rate_gps(i as f64 * 100.0)).collect();
        assert!(pts.windows(2).all(|w| w[1] > w[0]));
        assert!(pts.windows(3).all(|w| w[2] - 2.0 * w[1] + w[0] >= -1e-12));
    }

    #[test]
    fn fuel_table_interpolates() {
        let t = FuelRateCurve::table(vec![0.0, 10_000.0, 20_000.0], vec![0.2, 1.0, 2.2]).unwrap();
        assert_eq!(t.rate_gps(0.0), 0.0);
        assert!((t.rate_gps(15_000.0) - 1.6).abs() < 1e-12);
        assert_eq!(t.p_gen_max_w(), 20_000.0);
        assert!(FuelRateCurve::table(vec![0.0, 1.0], vec![1.0, 0.5]).is_err());
    }

    #[test]
    fn eff_knot_and_constant_patch() {
        let map = MotorEffMap::new(
            vec![0.0, 100.0, 200.0],
            vec![0.0, 50.0],
            vec![0.8, 0.8, 0.8, 0.8, 0.9, 0.7],
            0.85,
        )
        .unwrap();
        assert_eq!(map.motor_eff(100.0, 50.0), 0.8);
        assert_eq!(map.motor_eff(200.0, 0.0), 0.9);
        assert!((map.motor_eff(50.0, 25.0) - 0.8).abs() < 1e-15);
        assert_eq!(map.motor_eff(0.0, 0.0), 0.85);
    }

    #[test]
    fn default_surface_range() {
        let map = MotorEffMap::default();
        assert!((map.max_eff() - 0.93).abs() < 1e-12);
        assert!((map.min_eff() - 0.60).abs() < 1e-12);
        assert_eq!(map.motor_eff(300.0, 100.0), 0.93);
        assert_eq!(map.motor_eff(300.0, -100.0), 0.93);
        assert_eq!(map.motor_eff(700.0, 100.0), 0.60);
    }

    #[test]
    fn clamping_is_flagged() {
        let map = MotorEffMap::default();
        let l = map.lookup(1_000.0, 50.0);
        assert!(l.clamped);
        assert_eq!(l.eff, map.lookup(700.0, 50.0).eff);
        assert!(!map.lookup(200.0, 50.0).clamped);
    }

    #[test]
    fn interpolation_never_overshoots() {
        let map = MotorEffMap::default();
        for i in 0..200 {
            for j in 0..60 {
                let e = map.motor_eff(1.0 + 3.5 * i as f64, -300.0 + 10.0 * j as f64);
                assert!(e >= 0.60 - 1e-12 && e <= 0.93 + 1e-12);
            }
        }
    }

    #[test]
    fn csv_loaders() {
        let dir = tempfile::tempdir().unwrap();
        let fuel = dir.path().join("fuel.csv");
        std::fs::write(&fuel, "p_gen_w,fuel_gps\n0,0.1\n1000,0.3\n").unwrap();
        let c = FuelRateCurve::load_csv(&fuel).unwrap();
        assert!((c.rate_gps(500.0) - 0.2).abs() < 1e-12);

        let eff = dir.path().join("eff.csv");
        std::fs::write(&eff, "speed_radps,torque_nm,eff\n0,0,0.7\n0,10,0.8\n10,0,0.9\n10,10,0.95\n").unwrap();
        let m = MotorEffMap::load_csv(&eff, 0.85).unwrap();
        assert_eq!(m.motor_eff(10.0, 10.0), 0.95);
        std::fs::write(&eff, "0,0,0.7\n10,10,0.95\n").unwrap();
        assert!(MotorEffMap::load_csv(&eff, 0.85).is_err());
    }
}
