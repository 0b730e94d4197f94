//! Simultaneous identification and control for a series hybrid electric
//! vehicle: dynamic-programming power management with optional sinusoidal
//! battery-current injection, and a sequential EKF/DEKF pipeline that
//! identifies the battery's parameters, SOC and capacity from the resulting
//! current profile.

pub mod battery;
pub mod dp;
pub mod drive_cycle;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod injection;
pub mod maps;
pub mod vehicle;

pub use error::{Error, Result};
