use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ekf::{ekf_param_step, Dekf, DekfNoise, GaussianBelief};
use super::filter::HighPassFilter;
use super::models::{BranchCurrent, CapacityModel, FullCellModel};
use super::report::{EstimateSeries, EstimationReport};
use super::NoiseConfig;
use crate::battery::{ecm_step, pack_to_cell_current, CellParams, EcmState, OcvCurve, PackParams};
use crate::dp::PowerSplitTrajectory;
use crate::error::{Error, Result};

/// The filters never assume less than 10 mV of voltage noise: keeps the
/// innovation invertible on clean data and stops the EKFs chasing the
/// unmodelled OCV and RC terms.
const MEAS_VAR_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Step1Tuning {
    pub p0: f64,
    pub sigma_r: f64,
}

impl Default for Step1Tuning {
    fn default() -> Self {
        Self { p0: 1e-2, sigma_r: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Step2Tuning {
    /// Diagonal over `[R_t, τ]`.
    pub p0: [f64; 2],
    pub sigma_r: [f64; 2],
}

impl Default for Step2Tuning {
    fn default() -> Self {
        Self {
            p0: [1e-3, 100.0],
            sigma_r: [1e-12, 1e-7],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Step3Tuning {
    /// Diagonal over `[V_C, z]`.
    pub state_p0: [f64; 2],
    pub sigma_w: [f64; 2],
    pub q_p0: f64,
    pub q_sigma_r: f64,
}

impl Default for Step3Tuning {
    fn default() -> Self {
        Self {
            state_p0: [1e-4, 4e-2],
            sigma_w: [1e-8, 1e-10],
            q_p0: 0.1,
            q_sigma_r: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConcurrentTuning {
    /// Diagonal over `[R_s, R_t, τ, Q_b]`.
    pub param_p0: [f64; 4],
    pub param_sigma_r: [f64; 4],
    pub state_p0: [f64; 2],
    pub sigma_w: [f64; 2],
    /// State updates per parameter update.
    pub multi_scale_ratio: usize,
}

impl Default for ConcurrentTuning {
    fn default() -> Self {
        Self {
            param_p0: [1e-2, 1e-3, 100.0, 0.1],
            param_sigma_r: [1e-10, 1e-12, 1e-7, 1e-10],
            state_p0: [1e-4, 4e-2],
            sigma_w: [1e-8, 1e-10],
            multi_scale_ratio: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SequentialConfig {
    /// `[R_s, R_t, τ, Q_b, SOC]`
    pub initial_guesses: [f64; 5],
    pub step2_start_s: f64,
    pub step1_cutoff_hz: f64,
    pub step2_cutoff_hz: f64,
    pub step1: Step1Tuning,
    pub step2: Step2Tuning,
    pub step3: Step3Tuning,
    pub concurrent: ConcurrentTuning,
}

impl Default for SequentialConfig {
    fn default() -> Self {
        Self {
            initial_guesses: [0.02, 0.01, 10.0, 2.0, 0.5],
            step2_start_s: 300.0,
            step1_cutoff_hz: 0.2,
            step2_cutoff_hz: 0.02,
            step1: Step1Tuning::default(),
            step2: Step2Tuning::default(),
            step3: Step3Tuning::default(),
            concurrent: ConcurrentTuning::default(),
        }
    }
}

impl SequentialConfig {
    pub fn validate(&self) -> Result<()> {
        let g = self.initial_guesses;
        if g[..4].iter().any(|v| !(*v > 0.0)) || !(g[4] > 0.0 && g[4] < 1.0) {
            return Err(Error::Argument(format!("initial guesses {g:?} are not physical")));
        }
        if self.concurrent.multi_scale_ratio == 0 {
            return Err(Error::Argument("multi-scale ratio must be >= 1".into()));
        }
        Ok(())
    }
}

/// Simulated cell data: truth from the equivalent-circuit model driven by
/// the cell-scale share of the pack current, plus noisy voltage.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    pub dt: f64,
    pub i_cell: Vec<f64>,
    pub v_meas: Vec<f64>,
    pub v_true: Vec<f64>,
    pub z_true: Vec<f64>,
    pub cell: CellParams,
    pub curve: OcvCurve,
}

impl Measurements {
    pub fn len(&self) -> usize {
        self.i_cell.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i_cell.is_empty()
    }

    fn index(&self, t: f64) -> usize {
        ((t / self.dt).round().max(0.0) as usize).min(self.len())
    }

    fn meas_var(&self, noise_sigma: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, (noise_sigma * noise_sigma).max(MEAS_VAR_FLOOR))
    }
}

/// Current `i(k)` is held over `[k·dt, (k+1)·dt)`; voltage sample `k` is
/// taken at the start of that interval, so only `R_s` responds to `i(k)`
/// within the same sample.
pub fn measure(
    traj: &PowerSplitTrajectory,
    pack: &PackParams,
    cell: &CellParams,
    curve: &OcvCurve,
    noise: &NoiseConfig,
) -> Result<Measurements> {
    cell.validate()?;
    let n = traj.len();
    let noise_v = noise.samples(n)?;
    let i_cell: Vec<f64> = traj.i_b_a.iter().map(|&i| pack_to_cell_current(pack, cell, i)).collect();
    let mut state = EcmState {
        v_c_volts: 0.0,
        z: traj.soc_initial,
    };
    let (mut v_true, mut z_true) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for &i in &i_cell {
        v_true.push(curve.eval(state.z) - cell.r_s_ohm * i - state.v_c_volts);
        z_true.push(state.z);
        state = ecm_step(cell, curve, state, i, traj.dt)?.state;
    }
    let v_meas = v_true.iter().zip(&noise_v).map(|(v, e)| v + e).collect();
    Ok(Measurements {
        dt: traj.dt,
        i_cell,
        v_meas,
        v_true,
        z_true,
        cell: *cell,
        curve: *curve,
    })
}

fn scalar(v: f64) -> DVector<f64> {
    DVector::from_element(1, v)
}

fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(v))
}

/// Step 1: `V_bf = −R_s·i_bf` on high-passed data over samples `[k0, k1)`.
/// Returns the estimate after each sample.
pub fn estimate_r_s(meas: &Measurements, k0: usize, k1: usize, cfg: &SequentialConfig, noise: &NoiseConfig) -> Result<Vec<f64>> {
    let hp = HighPassFilter::new(cfg.step1_cutoff_hz, meas.dt)?;
    let i_bf = hp.apply(&meas.i_cell[..k1]);
    let v_bf = hp.apply(&meas.v_meas[..k1]);
    let mut b = GaussianBelief::from_diag(&[cfg.initial_guesses[0]], &[cfg.step1.p0])?;
    let sigma_r = DMatrix::from_element(1, 1, cfg.step1.sigma_r);
    let r = meas.meas_var(noise.sigma_v_volts);
    let mut out = Vec::with_capacity(k1 - k0);
    for k in k0..k1 {
        let i = i_bf[k];
        b = ekf_param_step(&b, &scalar(v_bf[k]), |t| scalar(-t[0] * i), |_| DMatrix::from_element(1, 1, -i), &sigma_r, &r)?;
        b.mean[0] = b.mean[0].max(1e-4);
        out.push(b.mean[0]);
    }
    Ok(out)
}

/// Step 2: `[R_t, τ]` from `V_bf + R_s·i_bf = −R_t·i_2` on high-passed data.
/// The branch recursion runs from `k_warm`; the filter updates over `[k0, k1)`.
pub fn estimate_rt_tau(
    meas: &Measurements,
    k_warm: usize,
    k0: usize,
    k1: usize,
    r_s: f64,
    cfg: &SequentialConfig,
    noise: &NoiseConfig,
) -> Result<Vec<[f64; 2]>> {
    let hp = HighPassFilter::new(cfg.step2_cutoff_hz, meas.dt)?;
    let i_bf = hp.apply(&meas.i_cell[..k1]);
    let v_bf = hp.apply(&meas.v_meas[..k1]);
    let g = cfg.initial_guesses;
    let mut b = GaussianBelief::from_diag(&[g[1], g[2]], &cfg.step2.p0)?;
    let sigma_r = diag(&cfg.step2.sigma_r);
    let r = meas.meas_var(noise.sigma_v_volts);
    let mut branch = BranchCurrent {
        i_prev: if k_warm > 0 { i_bf[k_warm - 1] } else { 0.0 },
        ..Default::default()
    };
    let mut out = Vec::with_capacity(k1 - k0);
    for k in k_warm..k1 {
        branch.advance(i_bf[k], meas.dt, b.mean[1]);
        if k < k0 {
            continue;
        }
        let (i2, s) = (branch.i2, branch.di2_dtau);
        let y = scalar(v_bf[k] + r_s * i_bf[k]);
        b = ekf_param_step(
            &b,
            &y,
            |t| scalar(-t[0] * i2),
            |t| DMatrix::from_row_slice(1, 2, &[-i2, -t[0] * s]),
            &sigma_r,
            &r,
        )?;
        b.mean[0] = b.mean[0].max(1e-4);
        b.mean[1] = b.mean[1].max(meas.dt);
        out.push([b.mean[0], b.mean[1]]);
    }
    Ok(out)
}

/// Step 3: DEKF over `[V_C, z]` with `Q_b` as parameter on raw data over
/// `[k0, len)`. Returns `(Q_b, z)` after each sample.
pub fn estimate_capacity(
    meas: &Measurements,
    k0: usize,
    r_s: f64,
    r_t: f64,
    tau: f64,
    cfg: &SequentialConfig,
    noise: &NoiseConfig,
) -> Result<Vec<[f64; 2]>> {
    let t = cfg.step3;
    let model = CapacityModel {
        curve: meas.curve,
        dt: meas.dt,
        eta: meas.cell.eta_coulomb,
        r_s,
        r_t,
        tau,
    };
    let g = cfg.initial_guesses;
    let mut f = Dekf::new(
        GaussianBelief::from_diag(&[g[3]], &[t.q_p0])?,
        GaussianBelief::from_diag(&[0.0, g[4]], &t.state_p0)?,
    );
    let dn = DekfNoise {
        sigma_r: DMatrix::from_element(1, 1, t.q_sigma_r),
        sigma_w: diag(&t.sigma_w),
        sigma_v: meas.meas_var(noise.sigma_v_volts),
    };
    let mut out = Vec::with_capacity(meas.len() - k0);
    for k in k0..meas.len() {
        let u_prev = if k > 0 { meas.i_cell[k - 1] } else { 0.0 };
        f.step(&model, u_prev, meas.i_cell[k], &scalar(meas.v_meas[k]), &dn, true)?;
        out.push([f.params.mean[0], f.state.mean[1]]);
    }
    Ok(out)
}

fn hold(n: usize, k0: usize, init: f64, values: &[f64]) -> Vec<f64> {
    let mut v = vec![init; n];
    let mut last = init;
    for k in k0..n {
        if let Some(x) = values.get(k - k0) {
            last = *x;
        }
        v[k] = last;
    }
    v
}

fn windows(traj: &PowerSplitTrajectory) -> Result<((f64, f64), (f64, f64))> {
    let mut w: Vec<_> = traj.injections.iter().map(|r| r.plan).collect();
    if w.len() < 2 {
        return Err(Error::Config(format!(
            "sequential estimation needs two injection windows, trajectory has {}",
            w.len()
        )));
    }
    w.sort_by(|a, b| b.f_hz.total_cmp(&a.f_hz));
    Ok(((w[0].start_s, w[0].end_s()), (w[w.len() - 1].start_s, w[w.len() - 1].end_s())))
}

fn diverged(e: Error, stage: &str) -> Result<String> {
    match e {
        Error::Numerical(msg) => Ok(format!("{stage}: {msg}")),
        other => Err(other),
    }
}

/// Step 1 only, over the highest-frequency injection window.
pub fn run_step1(meas: &Measurements, window: (f64, f64), cfg: &SequentialConfig, noise: &NoiseConfig) -> Result<EstimateSeries> {
    cfg.validate()?;
    let (k0, k1) = (meas.index(window.0), meas.index(window.1));
    let r_s = estimate_r_s(meas, k0, k1, cfg, noise)?;
    let n = k1;
    Ok(EstimateSeries::new(
        "r_s",
        meas.dt,
        window.0,
        hold(n, k0, cfg.initial_guesses[0], &r_s),
        vec![meas.cell.r_s_ohm; n],
    ))
}

/// The three-step pipeline on a trajectory carrying two injection windows.
pub fn run_sequential(
    traj: &PowerSplitTrajectory,
    pack: &PackParams,
    cell: &CellParams,
    curve: &OcvCurve,
    cfg: &SequentialConfig,
    noise: &NoiseConfig,
) -> Result<EstimationReport> {
    cfg.validate()?;
    let (w1, w2) = windows(traj)?;
    let meas = measure(traj, pack, cell, curve, noise)?;
    let n = meas.len();
    let g = cfg.initial_guesses;
    let (k10, k11) = (meas.index(w1.0), meas.index(w1.1));
    let t2 = cfg.step2_start_s.max(w2.0);
    if t2 >= w2.1 {
        return Err(Error::Config(format!("step 2 start {t2} s is past its window end {} s", w2.1)));
    }
    let (k2w, k20, k21) = (meas.index(w2.0), meas.index(t2), meas.index(w2.1));
    let mut failure = None;

    let r_s = match estimate_r_s(&meas, k10, k11, cfg, noise) {
        Ok(v) => v,
        Err(e) => {
            failure = Some(diverged(e, "step 1")?);
            Vec::new()
        }
    };
    let r_s_hat = r_s.last().copied().unwrap_or(g[0]);

    let mut rt_tau = Vec::new();
    if failure.is_none() {
        match estimate_rt_tau(&meas, k2w, k20, k21, r_s_hat, cfg, noise) {
            Ok(v) => rt_tau = v,
            Err(e) => failure = Some(diverged(e, "step 2")?),
        }
    }
    let (r_t_hat, tau_hat) = rt_tau.last().map_or((g[1], g[2]), |v| (v[0], v[1]));

    let mut cap = Vec::new();
    if failure.is_none() {
        match estimate_capacity(&meas, k21, r_s_hat, r_t_hat, tau_hat, cfg, noise) {
            Ok(v) => cap = v,
            Err(e) => failure = Some(diverged(e, "step 3")?),
        }
    }

    let dt = meas.dt;
    let col = |v: &[[f64; 2]], j: usize| v.iter().map(|x| x[j]).collect::<Vec<_>>();
    let series = vec![
        EstimateSeries::new("r_s", dt, w1.0, hold(n, k10, g[0], &r_s), vec![cell.r_s_ohm; n]),
        EstimateSeries::new("r_t", dt, t2, hold(n, k20, g[1], &col(&rt_tau, 0)), vec![cell.r_t_ohm; n]),
        EstimateSeries::new("tau", dt, t2, hold(n, k20, g[2], &col(&rt_tau, 1)), vec![cell.tau_s; n]),
        EstimateSeries::new("q_b", dt, w2.1, hold(n, k21, g[3], &col(&cap, 0)), vec![cell.q_cell_ah; n]),
        EstimateSeries::new("soc", dt, w2.1, hold(n, k21, g[4], &col(&cap, 1)), meas.z_true.clone()),
    ];
    Ok(EstimationReport { dt, series, failure })
}

/// One DEKF estimating `[R_s, R_t, τ, Q_b]` and `[V_C, z]` together on raw
/// data, parameters updated every `multi_scale_ratio` samples.
pub fn run_concurrent_dekf(
    traj: &PowerSplitTrajectory,
    pack: &PackParams,
    cell: &CellParams,
    curve: &OcvCurve,
    cfg: &SequentialConfig,
    noise: &NoiseConfig,
) -> Result<EstimationReport> {
    cfg.validate()?;
    let meas = measure(traj, pack, cell, curve, noise)?;
    let t = cfg.concurrent;
    let g = cfg.initial_guesses;
    let model = FullCellModel {
        curve: *curve,
        dt: meas.dt,
        eta: cell.eta_coulomb,
    };
    let mut f = Dekf::new(
        GaussianBelief::from_diag(&g[..4], &t.param_p0)?,
        GaussianBelief::from_diag(&[0.0, g[4]], &t.state_p0)?,
    );
    let dn = DekfNoise {
        sigma_r: diag(&t.param_sigma_r),
        sigma_w: diag(&t.sigma_w),
        sigma_v: meas.meas_var(noise.sigma_v_volts),
    };
    let mut est: Vec<[f64; 5]> = Vec::with_capacity(meas.len());
    let mut failure = None;
    for k in 0..meas.len() {
        let u_prev = if k > 0 { meas.i_cell[k - 1] } else { 0.0 };
        let update = (k + 1) % t.multi_scale_ratio == 0;
        if let Err(e) = f.step(&model, u_prev, meas.i_cell[k], &scalar(meas.v_meas[k]), &dn, update) {
            failure = Some(diverged(e, "concurrent DEKF")?);
            break;
        }
        let p = &f.params.mean;
        est.push([p[0], p[1], p[2], p[3], f.state.mean[1]]);
    }
    let n = meas.len();
    let dt = meas.dt;
    let col = |j: usize| hold(n, 0, g[j], &est.iter().map(|x| x[j]).collect::<Vec<_>>());
    let series = vec![
        EstimateSeries::new("r_s", dt, 0.0, col(0), vec![cell.r_s_ohm; n]),
        EstimateSeries::new("r_t", dt, 0.0, col(1), vec![cell.r_t_ohm; n]),
        EstimateSeries::new("tau", dt, 0.0, col(2), vec![cell.tau_s; n]),
        EstimateSeries::new("q_b", dt, 0.0, col(3), vec![cell.q_cell_ah; n]),
        EstimateSeries::new("soc", dt, 0.0, col(4), meas.z_true.clone()),
    ];
    Ok(EstimationReport { dt, series, failure })
}
