use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative band that counts as converged.
pub const CONVERGENCE_BAND: f64 = 0.05;

/// One estimated quantity on the run's time base (`t = k·dt`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSeries {
    pub quantity: String,
    pub estimate: Vec<f64>,
    pub truth: Vec<f64>,
    /// When the estimator for this quantity starts; before that the
    /// estimate holds the initial guess.
    pub start_s: f64,
    /// RMS error from `start_s` to the end of the run.
    pub rms: f64,
    pub converge_time_s: Option<f64>,
}

impl EstimateSeries {
    pub fn new(quantity: &str, dt: f64, start_s: f64, estimate: Vec<f64>, truth: Vec<f64>) -> Self {
        let mut s = Self {
            quantity: quantity.to_string(),
            estimate,
            truth,
            start_s,
            rms: f64::NAN,
            converge_time_s: None,
        };
        s.rms = s.rms_over(dt, start_s, f64::INFINITY);
        s.converge_time_s = s.converge_time(dt);
        s
    }

    fn index_range(&self, dt: f64, t0: f64, t1: f64) -> std::ops::Range<usize> {
        let n = self.estimate.len();
        let k0 = ((t0 / dt - 1e-9).ceil().max(0.0) as usize).min(n);
        let k1 = if t1.is_finite() { ((t1 / dt - 1e-9).ceil().max(0.0) as usize).min(n) } else { n };
        k0..k1.max(k0)
    }

    /// RMS of `estimate − truth` over samples with `t0 ≤ k·dt < t1`.
    pub fn rms_over(&self, dt: f64, t0: f64, t1: f64) -> f64 {
        let r = self.index_range(dt, t0, t1);
        if r.is_empty() {
            return f64::NAN;
        }
        let len = r.len() as f64;
        let ss: f64 = r.map(|k| (self.estimate[k] - self.truth[k]).powi(2)).sum();
        (ss / len).sqrt()
    }

    pub fn relative_error_at(&self, k: usize) -> f64 {
        ((self.estimate[k] - self.truth[k]) / self.truth[k]).abs()
    }

    pub fn final_relative_error(&self) -> f64 {
        self.relative_error_at(self.estimate.len() - 1)
    }

    /// First time from which the estimate stays inside the band for good.
    pub fn converge_time(&self, dt: f64) -> Option<f64> {
        let r = self.index_range(dt, self.start_s, f64::INFINITY);
        let mut first = None;
        for k in r {
            if self.relative_error_at(k) <= CONVERGENCE_BAND {
                first.get_or_insert(k);
            } else {
                first = None;
            }
        }
        first.map(|k| k as f64 * dt)
    }

    /// Whether the estimate is inside the band at time `t` and stays there.
    pub fn converged_by(&self, dt: f64, t: f64) -> bool {
        self.converge_time(dt).is_some_and(|c| c <= t + 1e-9)
    }

    pub fn value_at(&self, dt: f64, t: f64) -> f64 {
        let k = ((t / dt).round() as usize).min(self.estimate.len() - 1);
        self.estimate[k]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub dt: f64,
    pub series: Vec<EstimateSeries>,
    /// Set when an estimator diverged; series after that point hold the last
    /// finite estimate.
    pub failure: Option<String>,
}

impl EstimationReport {
    pub fn get(&self, quantity: &str) -> Option<&EstimateSeries> {
        self.series.iter().find(|s| s.quantity == quantity)
    }

    pub fn series(&self, quantity: &str) -> Result<&EstimateSeries> {
        self.get(quantity)
            .ok_or_else(|| Error::Argument(format!("report has no series `{quantity}`")))
    }

    pub fn rms_over(&self, quantity: &str, t0: f64, t1: f64) -> Result<f64> {
        Ok(self.series(quantity)?.rms_over(self.dt, t0, t1))
    }

    /// One `<prefix><quantity>.csv` per series with `t_s,estimate,truth`.
    pub fn write_series_csv(&self, dir: &Path, prefix: &str) -> Result<()> {
        for s in &self.series {
            let path = dir.join(format!("{prefix}{}.csv", s.quantity));
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["t_s", "estimate", "truth"])?;
            for (k, (e, t)) in s.estimate.iter().zip(&s.truth).enumerate() {
                w.write_record(&[format!("{}", k as f64 * self.dt), format!("{e}"), format!("{t}")])?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    /// `quantity,rms,converge_time_s`; an empty time means never converged.
    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["quantity", "rms", "converge_time_s"])?;
        for s in &self.series {
            w.write_record(&[
                s.quantity.clone(),
                format!("{}", s.rms),
                s.converge_time_s.map(|t| format!("{t}")).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Reads back a `t_s,estimate,truth` file.
pub fn read_series_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let (mut t, mut e, mut tr) = (Vec::new(), Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Format(format!("bad row in {}", path.display())))
        };
        t.push(f(0)?);
        e.push(f(1)?);
        tr.push(f(2)?);
    }
    Ok((t, e, tr))
}
