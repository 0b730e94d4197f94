use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::battery::{CellParams, OcvCurve, PackParams};
use crate::dp::DpConfig;
use crate::drive_cycle::SpeedUnit;
use crate::error::{Error, Result};
use crate::estimation::{NoiseConfig, SequentialConfig};
use crate::injection::InjectionPlan;
use crate::maps::{FuelRateCurve, SyntheticEffParams};
use crate::vehicle::VehicleParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Baseline,
    #[serde(rename = "inject_05hz")]
    Inject05hz,
    #[serde(rename = "inject_005hz")]
    Inject005hz,
    FullSequential,
    Sweep,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Baseline => "baseline",
            Scenario::Inject05hz => "inject_05hz",
            Scenario::Inject005hz => "inject_005hz",
            Scenario::FullSequential => "full_sequential",
            Scenario::Sweep => "sweep",
        }
    }

    /// Trace step each scenario runs at unless overridden.
    pub fn default_dt(self) -> f64 {
        match self {
            Scenario::Baseline | Scenario::Inject005hz => 1.0,
            Scenario::Inject05hz | Scenario::FullSequential | Scenario::Sweep => 0.2,
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "baseline" => Scenario::Baseline,
            "inject_05hz" => Scenario::Inject05hz,
            "inject_005hz" => Scenario::Inject005hz,
            "full_sequential" => Scenario::FullSequential,
            "sweep" => Scenario::Sweep,
            other => return Err(Error::Config(format!("unknown scenario `{other}`"))),
        })
    }
}

/// One injection window; the sample time always follows the trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub f_hz: f64,
    pub duration_s: f64,
    pub start_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InjectionConfig {
    pub i_ex_a: f64,
    pub high: WindowConfig,
    pub medium: WindowConfig,
}

impl Default for InjectionConfig {
    fn default() -> Self {
        Self {
            i_ex_a: 6.0,
            high: WindowConfig {
                f_hz: 0.5,
                duration_s: 200.0,
                start_s: 0.0,
            },
            medium: WindowConfig {
                f_hz: 0.05,
                duration_s: 500.0,
                start_s: 200.0,
            },
        }
    }
}

impl InjectionConfig {
    pub fn plan(&self, w: &WindowConfig, i_ex_a: f64, dt: f64) -> Result<InjectionPlan> {
        InjectionPlan::new(i_ex_a, w.f_hz, dt, w.duration_s, w.start_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Speed trace; the bundled UDDS when absent.
    pub cycle_path: Option<PathBuf>,
    pub cycle_unit: SpeedUnit,
    pub cycle_repeats: usize,
    /// Trace step; the scenario's default when absent.
    pub dt_s: Option<f64>,
    pub fuel_table_path: Option<PathBuf>,
    pub motor_map_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub soc0: f64,
    pub vehicle: VehicleParams,
    pub pack: PackParams,
    pub cell: CellParams,
    pub ocv: OcvCurve,
    pub fuel: FuelRateCurve,
    pub motor_map: SyntheticEffParams,
    pub dp: DpConfig,
    pub injection: InjectionConfig,
    pub estimation: SequentialConfig,
    pub noise: NoiseConfig,
    pub sweep_amplitudes: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Baseline,
            cycle_path: None,
            cycle_unit: SpeedUnit::Mph,
            cycle_repeats: 5,
            dt_s: None,
            fuel_table_path: None,
            motor_map_path: None,
            out_dir: PathBuf::from("out"),
            soc0: 0.6,
            vehicle: VehicleParams::default(),
            pack: PackParams::default(),
            cell: CellParams::default(),
            ocv: OcvCurve::default(),
            fuel: FuelRateCurve::default(),
            motor_map: SyntheticEffParams::default(),
            dp: DpConfig::default(),
            injection: InjectionConfig::default(),
            estimation: SequentialConfig::default(),
            noise: NoiseConfig::default(),
            sweep_amplitudes: (1..=20).map(|i| 0.5 * i as f64).collect(),
            seeds: (0..10).collect(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let input: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let cfg: Self = toml::Value::Table(input.clone())
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.reject_unknown(&input)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Keys serde skipped silently show up as paths missing after a round trip.
    fn reject_unknown(&self, input: &toml::Table) -> Result<()> {
        fn walk(input: &toml::Table, known: &toml::Table, prefix: &str, out: &mut Vec<String>) {
            for (k, v) in input {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                match (v, known.get(k)) {
                    (_, None) => out.push(path),
                    (toml::Value::Table(a), Some(toml::Value::Table(b))) => walk(a, b, &path, out),
                    _ => {}
                }
            }
        }
        let known = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        let mut unknown = Vec::new();
        walk(input, &known, "", &mut unknown);
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))))
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn dt(&self) -> f64 {
        self.dt_s.unwrap_or(self.scenario.default_dt())
    }

    pub fn validate(&self) -> Result<()> {
        self.vehicle.validate()?;
        self.pack.validate()?;
        self.cell.validate()?;
        self.fuel.validate()?;
        self.dp.validate()?;
        self.estimation.validate()?;
        self.noise.validate()?;
        if self.cycle_repeats == 0 {
            return Err(Error::Config("cycle_repeats must be >= 1".into()));
        }
        if !(self.dt() > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt())));
        }
        if self.scenario == Scenario::Sweep && (self.sweep_amplitudes.is_empty() || self.seeds.is_empty()) {
            return Err(Error::Config("sweep needs amplitudes and seeds".into()));
        }
        Ok(())
    }

    /// Applies `dotted.key=value`; the value is read as a TOML literal and
    /// falls back to a plain string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        let key = key.trim();
        let raw = raw.trim();
        let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut root = toml::Value::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let mut assigned = toml::Table::new();
        let mut slot = &mut assigned;
        let parts: Vec<&str> = key.split('.').collect();
        for part in &parts[..parts.len() - 1] {
            slot = slot
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .expect("fresh table");
        }
        slot.insert(parts[parts.len() - 1].to_string(), value.clone());
        let mut node = &mut root;
        for (i, part) in parts.iter().enumerate() {
            let table = node
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("`{}` is not a table", parts[..i].join("."))))?;
            if i + 1 == parts.len() {
                table.insert(part.to_string(), value.clone());
                break;
            }
            node = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        }
        let updated: Self = root
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("override `{assignment}`: {e}")))?;
        updated.reject_unknown(&assigned)?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }
}
