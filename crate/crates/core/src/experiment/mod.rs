//! End-to-end scenarios, the amplitude tradeoff sweep, FFT diagnostics and
//! artifact output.

mod config;
mod fft;
mod run;
mod sweep;

pub use config::{ExperimentConfig, InjectionConfig, Scenario, WindowConfig};
pub use fft::{dominant_peak, fft_spectrum, read_current_csv, MIN_FFT_LEN};
pub use run::{
    median, prepare, read_summary, run_scenario, verify_run, write_atomic, Inputs, ManifestFile, RunManifest, RunSummary,
};
pub use sweep::{summarize, tradeoff_sweep, TradeoffPoint, TradeoffRecord};
