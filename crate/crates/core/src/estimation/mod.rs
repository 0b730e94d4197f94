//! Battery identification: high-pass filters, a parameter EKF, a dual EKF,
//! the three-step sequential pipeline and the concurrent-DEKF baseline.

mod ekf;
mod filter;
mod models;
mod report;
mod sequential;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use ekf::{dekf_step, ekf_param_step, Dekf, DekfNoise, DualModel, GaussianBelief, PSD_TOL};
pub use filter::{highpass_step, HighPassFilter};
pub use models::{BranchCurrent, CapacityModel, FullCellModel};
pub use report::{read_series_csv, EstimateSeries, EstimationReport, CONVERGENCE_BAND};
pub use sequential::{
    estimate_capacity, estimate_r_s, estimate_rt_tau, measure, run_concurrent_dekf, run_sequential,
    run_step1, ConcurrentTuning, Measurements, SequentialConfig, Step1Tuning, Step2Tuning, Step3Tuning,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Standard deviation of the white noise added to the terminal voltage.
    pub sigma_v_volts: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma_v_volts: 0.010,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_v_volts >= 0.0 && self.sigma_v_volts.is_finite()) {
            return Err(Error::Argument(format!("sigma_v must be >= 0, got {}", self.sigma_v_volts)));
        }
        Ok(())
    }

    /// `n` samples of N(0, σ²) from ChaCha8 seeded with `seed`.
    pub fn samples(&self, n: usize) -> Result<Vec<f64>> {
        self.validate()?;
        if self.sigma_v_volts == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let normal = Normal::new(0.0, self.sigma_v_volts).map_err(|e| Error::Argument(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok((0..n).map(|_| normal.sample(&mut rng)).collect())
    }
}
