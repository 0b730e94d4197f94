//! Vehicle speed schedules: loading, repetition and resampling.

use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MPH_TO_MPS: f64 = 0.44704;

/// Bundled Urban Dynamometer Driving Schedule, `time_s,speed_mph` at 1 Hz.
pub const UDDS_CSV: &str = include_str!("../assets/udds.csv");

const UNIFORM_TOL_S: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeedUnit {
    Mps,
    Mph,
}

impl SpeedUnit {
    fn to_mps(self, v: f64) -> f64 {
        match self {
            SpeedUnit::Mps => v,
            SpeedUnit::Mph => v * MPH_TO_MPS,
        }
    }
}

impl FromStr for SpeedUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mps" | "m/s" => Ok(SpeedUnit::Mps),
            "mph" => Ok(SpeedUnit::Mph),
            other => Err(Error::Argument(format!("unknown speed unit `{other}`"))),
        }
    }
}

/// A uniformly sampled speed trace in m/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveCycle {
    name: String,
    dt: f64,
    speeds: Vec<f64>,
}

impl DriveCycle {
    pub fn new(name: impl Into<String>, dt: f64, speeds: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Argument(format!("sample time must be positive, got {dt}")));
        }
        if speeds.len() < 2 {
            return Err(Error::Data(format!(
                "a drive cycle needs at least 2 samples, got {}",
                speeds.len()
            )));
        }
        if let Some((k, v)) = speeds
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::Data(format!("invalid speed {v} at sample {k}")));
        }
        Ok(Self {
            name: name.into(),
            dt,
            speeds,
        })
    }

    /// The bundled UDDS schedule at 1 Hz (1370 s).
    pub fn udds() -> Self {
        parse_cycle(UDDS_CSV.as_bytes(), SpeedUnit::Mph, "udds")
            .expect("bundled UDDS asset is well formed")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    pub fn len(&self) -> usize {
        self.speeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speeds.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.dt * (self.speeds.len() - 1) as f64
    }

    pub fn max_speed(&self) -> f64 {
        self.speeds.iter().copied().fold(0.0, f64::max)
    }

    /// Trapezoidal distance in metres.
    pub fn distance(&self) -> f64 {
        self.speeds
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]) * self.dt)
            .sum()
    }

    /// Linear interpolation of the speed at time `t` (clamped to the cycle).
    pub fn speed_at(&self, t: f64) -> f64 {
        let last = self.speeds.len() - 1;
        let s = (t / self.dt).clamp(0.0, last as f64);
        let nearest = s.round();
        if (s - nearest).abs() < 1e-9 {
            return self.speeds[nearest as usize];
        }
        let i = (s.floor() as usize).min(last - 1);
        let frac = s - i as f64;
        self.speeds[i] + frac * (self.speeds[i + 1] - self.speeds[i])
    }
}

/// Loads a `time_s,speed` CSV (header row optional).
pub fn load_cycle(path: impl AsRef<Path>, unit: SpeedUnit) -> Result<DriveCycle> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "cycle".to_owned());
    parse_cycle(file, unit, &name)
}

pub fn parse_cycle<R: Read>(reader: R, unit: SpeedUnit, name: &str) -> Result<DriveCycle> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);

    let mut times = Vec::new();
    let mut speeds = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(Error::Format(format!("row {row}: expected 2 columns, got {}", rec.len())));
        }
        let (t, v) = match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
            (Ok(t), Ok(v)) => (t, v),
            // a non-numeric first row is the header
            _ if row == 0 => continue,
            _ => {
                return Err(Error::Format(format!(
                    "row {row}: cannot parse `{}`,`{}`",
                    &rec[0], &rec[1]
                )))
            }
        };
        if v < 0.0 {
            return Err(Error::Data(format!("row {row}: negative speed {v}")));
        }
        times.push(t);
        speeds.push(unit.to_mps(v));
    }

    if times.len() < 2 {
        return Err(Error::Format(format!("need at least 2 samples, found {}", times.len())));
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(Error::Format("timestamps must be strictly increasing".into()));
    }
    for (k, w) in times.windows(2).enumerate() {
        let step = w[1] - w[0];
        if !(step > 0.0) {
            return Err(Error::Format(format!("timestamps not increasing at row {}", k + 1)));
        }
        if (step - dt).abs() > UNIFORM_TOL_S {
            return Err(Error::Format(format!(
                "non-uniform sampling at row {}: step {step} s vs {dt} s",
                k + 1
            )));
        }
    }
    DriveCycle::new(name, dt, speeds)
}

/// Concatenates `n_cycles` copies of `cycle` and resamples the result at `dt_out`
/// by linear interpolation.
pub fn repeat_and_resample(cycle: &DriveCycle, n_cycles: usize, dt_out: f64) -> Result<DriveCycle> {
    if n_cycles == 0 {
        return Err(Error::Argument("n_cycles must be at least 1".into()));
    }
    if !(dt_out > 0.0 && dt_out.is_finite()) {
        return Err(Error::Argument(format!("dt_out must be positive, got {dt_out}")));
    }
    let period = cycle.duration();
    if dt_out > period {
        return Err(Error::Argument(format!(
            "dt_out {dt_out} s exceeds the cycle duration {period} s"
        )));
    }

    let total = period * n_cycles as f64;
    let ratio = total / dt_out;
    let steps = if (ratio - ratio.round()).abs() < 1e-6 {
        ratio.round() as usize
    } else {
        ratio.floor() as usize
    };

    let speeds = (0..=steps)
        .map(|k| {
            let t = k as f64 * dt_out;
            // junction samples belong to the start of the next copy
            let rep = ((t / period + 1e-12).floor() as usize).min(n_cycles - 1);
            let local = (t - rep as f64 * period).max(0.0);
            cycle.speed_at(local)
        })
        .collect();

    let name = if n_cycles == 1 {
        cycle.name.clone()
    } else {
        format!("{}x{}", cycle.name, n_cycles)
    };
    DriveCycle::new(name, dt_out, speeds)
}
