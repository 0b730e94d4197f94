use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, Scenario};
use super::fft::{dominant_peak, fft_spectrum};
use super::sweep::{summarize, tradeoff_sweep};
use crate::dp::{solve_baseline, solve_injected, PowerSplitTrajectory};
use crate::drive_cycle::{load_cycle, repeat_and_resample, DriveCycle};
use crate::error::{Error, Result};
use crate::estimation::{run_concurrent_dekf, run_sequential, EstimationReport};
use crate::injection::InjectionPlan;
use crate::maps::{FuelRateCurve, MotorEffMap};
use crate::vehicle::{power_demand, PowerDemandTrace};

pub fn median(mut v: Vec<f64>) -> f64 {
    v.retain(|x| !x.is_nan());
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub struct Inputs {
    pub trace: PowerDemandTrace,
    pub fuel: FuelRateCurve,
    pub eff: MotorEffMap,
}

/// Cycle → repeated, resampled trace → power demand, plus the maps.
pub fn prepare(cfg: &ExperimentConfig, dt: f64) -> Result<Inputs> {
    let cycle = match &cfg.cycle_path {
        Some(p) => load_cycle(p, cfg.cycle_unit),
        None => Ok(DriveCycle::udds()),
    }
    .map_err(|e| e.in_stage("drive cycle"))?;
    let cycle = repeat_and_resample(&cycle, cfg.cycle_repeats, dt).map_err(|e| e.in_stage("drive cycle"))?;
    let trace = power_demand(&cycle, &cfg.vehicle).map_err(|e| e.in_stage("vehicle"))?;
    let fuel = match &cfg.fuel_table_path {
        Some(p) => FuelRateCurve::load_csv(p),
        None => Ok(cfg.fuel.clone()),
    }
    .map_err(|e| e.in_stage("maps"))?;
    let eff = match &cfg.motor_map_path {
        Some(p) => MotorEffMap::load_csv(p, cfg.motor_map.idle_eff),
        None => MotorEffMap::synthetic(&cfg.motor_map),
    }
    .map_err(|e| e.in_stage("maps"))?;
    Ok(Inputs { trace, fuel, eff })
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes through a temporary sibling and renames into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    pub crate_version: String,
    pub config_sha256: String,
    /// Full resolved configuration; rerunning it reproduces every file.
    pub config_toml: String,
    pub seeds: Vec<u64>,
    pub files: Vec<ManifestFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: Scenario,
    pub out_dir: PathBuf,
    pub metrics: BTreeMap<String, f64>,
    pub files: Vec<String>,
}

struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn trajectory(&mut self, name: &str, t: &PowerSplitTrajectory) -> Result<()> {
        let mut buf = Vec::new();
        t.write_csv(&mut buf)?;
        self.put(name, &buf)
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        self.put(name, &bytes)
    }

    fn report(&mut self, prefix: &str, r: &EstimationReport) -> Result<()> {
        for s in &r.series {
            let rows: Vec<Vec<String>> = s
                .estimate
                .iter()
                .zip(&s.truth)
                .enumerate()
                .map(|(k, (e, t))| vec![format!("{}", k as f64 * r.dt), format!("{e}"), format!("{t}")])
                .collect();
            self.csv(&format!("{prefix}{}.csv", s.quantity), &["t_s", "estimate", "truth"], &rows)?;
        }
        let rows: Vec<Vec<String>> = r
            .series
            .iter()
            .map(|s| {
                vec![
                    s.quantity.clone(),
                    format!("{}", s.rms),
                    s.converge_time_s.map(|t| format!("{t}")).unwrap_or_default(),
                ]
            })
            .collect();
        self.csv(&format!("{prefix}summary.csv"), &["quantity", "rms", "converge_time_s"], &rows)
    }
}

fn spectrum_metrics(
    w: &mut Writer,
    metrics: &mut BTreeMap<String, f64>,
    tag: &str,
    traj: &PowerSplitTrajectory,
    plan: &InjectionPlan,
) -> Result<()> {
    let current = traj.current_window(plan.start_s, plan.duration_s);
    let spec = fft_spectrum(current, traj.dt)?;
    if let Some((f, a)) = dominant_peak(&spec) {
        metrics.insert(format!("{tag}_peak_hz"), f);
        metrics.insert(format!("{tag}_peak_a"), a);
    }
    let rows: Vec<Vec<String>> = spec.iter().map(|(f, a)| vec![format!("{f}"), format!("{a}")]).collect();
    w.csv(&format!("{tag}_spectrum.csv"), &["freq_hz", "amplitude_a"], &rows)
}

fn trajectory_metrics(metrics: &mut BTreeMap<String, f64>, tag: &str, t: &PowerSplitTrajectory) {
    let (lo, hi) = t.soc.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| (a.min(s), b.max(s)));
    metrics.insert(format!("{tag}_fuel_total_g"), t.fuel_total_g);
    metrics.insert(format!("{tag}_soc_initial"), t.soc_initial);
    metrics.insert(format!("{tag}_soc_final"), t.soc_final);
    metrics.insert(format!("{tag}_soc_min"), lo);
    metrics.insert(format!("{tag}_soc_max"), hi);
}

/// Loads `manifest.json` from a run directory and checks every listed file
/// against its recorded hash.
pub fn verify_run(dir: &Path) -> Result<RunManifest> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    for f in &manifest.files {
        let p = dir.join(&f.name);
        let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
        if sha256_hex(&bytes) != f.sha256 {
            return Err(Error::Data(format!("{} does not match its manifest hash", p.display())));
        }
    }
    Ok(manifest)
}

/// `metric,value` rows of a run's summary.csv.
pub fn read_summary(dir: &Path) -> Result<BTreeMap<String, f64>> {
    let path = dir.join("summary.csv");
    let mut r = csv::Reader::from_path(&path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let v = rec[1].parse::<f64>().map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        out.insert(rec[0].to_string(), v);
    }
    Ok(out)
}

/// Runs one scenario end to end and writes its artifacts to `cfg.out_dir`.
pub fn run_scenario(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let mut w = Writer {
        dir: cfg.out_dir.clone(),
        files: Vec::new(),
    };
    let mut metrics = BTreeMap::new();
    let dt = cfg.dt();

    if cfg.scenario == Scenario::Sweep {
        let records = tradeoff_sweep(cfg)?;
        let rows: Vec<Vec<String>> = records
            .iter()
            .map(|r| {
                vec![
                    format!("{}", r.i_ex_a),
                    r.seed.to_string(),
                    r.feasible.to_string(),
                    format!("{}", r.fuel_total_g),
                    format!("{}", r.fuel_delta_pct),
                    format!("{}", r.rms_r_s),
                ]
            })
            .collect();
        w.csv(
            "sweep.csv",
            &["i_ex_a", "seed", "feasible", "fuel_total_g", "fuel_delta_pct", "rms_r_s"],
            &rows,
        )?;
        let points = summarize(&records);
        let rows: Vec<Vec<String>> = points
            .iter()
            .map(|p| {
                vec![
                    format!("{}", p.i_ex_a),
                    p.feasible.to_string(),
                    format!("{}", p.fuel_delta_pct),
                    format!("{}", p.median_rms_r_s),
                ]
            })
            .collect();
        w.csv(
            "sweep_summary.csv",
            &["i_ex_a", "feasible", "fuel_delta_pct", "median_rms_r_s"],
            &rows,
        )?;
        metrics.insert("sweep_points".into(), points.len() as f64);
    } else {
        let inputs = prepare(cfg, dt)?;
        let Inputs { trace, fuel, eff } = &inputs;
        let started = Instant::now();
        let base = solve_baseline(trace, &cfg.pack, fuel, eff, &cfg.dp, cfg.soc0).map_err(|e| e.in_stage("dp baseline"))?;
        metrics.insert("baseline_runtime_s".into(), started.elapsed().as_secs_f64());
        trajectory_metrics(&mut metrics, "baseline", &base);
        let inj_cfg = &cfg.injection;
        let plans: Vec<InjectionPlan> = match cfg.scenario {
            Scenario::Baseline => Vec::new(),
            Scenario::Inject05hz => vec![inj_cfg.plan(&inj_cfg.high, inj_cfg.i_ex_a, dt)?],
            Scenario::Inject005hz => vec![inj_cfg.plan(&inj_cfg.medium, inj_cfg.i_ex_a, dt)?],
            Scenario::FullSequential => vec![
                inj_cfg.plan(&inj_cfg.high, inj_cfg.i_ex_a, dt)?,
                inj_cfg.plan(&inj_cfg.medium, inj_cfg.i_ex_a, dt)?,
            ],
            Scenario::Sweep => unreachable!(),
        };
        if plans.is_empty() {
            w.trajectory("trajectory.csv", &base)?;
            let window = base.current_window(0.0, base.duration());
            let spec = fft_spectrum(window, dt)?;
            if let Some((f, a)) = dominant_peak(&spec) {
                metrics.insert("baseline_peak_hz".into(), f);
                metrics.insert("baseline_peak_a".into(), a);
            }
        } else {
            w.trajectory("baseline_trajectory.csv", &base)?;
            let started = Instant::now();
            let inj = solve_injected(trace, &cfg.pack, fuel, eff, &plans, &cfg.dp, cfg.soc0)
                .map_err(|e| e.in_stage("dp injected"))?;
            metrics.insert("injected_runtime_s".into(), started.elapsed().as_secs_f64());
            w.trajectory("trajectory.csv", &inj)?;
            trajectory_metrics(&mut metrics, "injected", &inj);
            metrics.insert("fuel_delta_pct".into(), 100.0 * (inj.fuel_total_g / base.fuel_total_g - 1.0));
            for (i, plan) in plans.iter().enumerate() {
                let tag = format!("window{i}");
                let k0 = (plan.start_s / dt).round() as usize;
                let k1 = (plan.end_s() / dt).round() as usize;
                metrics.insert(format!("{tag}_soc_change"), inj.soc[k1] - inj.soc[k0]);
                spectrum_metrics(&mut w, &mut metrics, &tag, &inj, plan)?;
                let base_tag = format!("baseline_window{i}");
                spectrum_metrics(&mut w, &mut metrics, &base_tag, &base, plan)?;
            }
            if cfg.scenario == Scenario::FullSequential {
                let seq = run_sequential(&inj, &cfg.pack, &cfg.cell, &cfg.ocv, &cfg.estimation, &cfg.noise)
                    .map_err(|e| e.in_stage("sequential estimation"))?;
                let conc = run_concurrent_dekf(&base, &cfg.pack, &cfg.cell, &cfg.ocv, &cfg.estimation, &cfg.noise)
                    .map_err(|e| e.in_stage("concurrent estimation"))?;
                w.report("est_seq_", &seq)?;
                w.report("est_conc_", &conc)?;
                for s in &seq.series {
                    let q = &s.quantity;
                    metrics.insert(format!("seq_{q}_rms"), s.rms);
                    metrics.insert(format!("seq_{q}_final_rel_err"), s.final_relative_error());
                    let c = conc.series(q)?;
                    metrics.insert(format!("conc_{q}_rms"), c.rms_over(conc.dt, s.start_s, f64::INFINITY));
                    metrics.insert(format!("conc_{q}_final_rel_err"), c.final_relative_error());
                }
                if let Some(f) = seq.failure.as_ref().or(conc.failure.as_ref()) {
                    return Err(Error::Numerical(f.clone()).in_stage("estimation"));
                }
            }
        }
    }

    let rows: Vec<Vec<String>> = metrics.iter().map(|(k, v)| vec![k.clone(), format!("{v}")]).collect();
    w.csv("summary.csv", &["metric", "value"], &rows)?;

    let config_toml = cfg.to_toml()?;
    let files = w
        .files
        .iter()
        .map(|name| {
            let bytes = fs::read(w.dir.join(name)).map_err(|e| Error::io(w.dir.join(name), e))?;
            Ok(ManifestFile {
                name: name.clone(),
                sha256: sha256_hex(&bytes),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        scenario: cfg.scenario.name().to_string(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: sha256_hex(config_toml.as_bytes()),
        config_toml,
        seeds: if cfg.scenario == Scenario::Sweep { cfg.seeds.clone() } else { vec![cfg.noise.seed] },
        files,
    };
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(&cfg.out_dir.join("manifest.json"), &json)?;
    let mut files = w.files;
    files.push("manifest.json".into());
    Ok(RunSummary {
        scenario: cfg.scenario,
        out_dir: cfg.out_dir.clone(),
        metrics,
        files,
    })
}
