#![allow(dead_code)]

pub mod kf;

use std::f64::consts::PI;

use hev_sic::battery::PackParams;
use hev_sic::dp::{DpConfig, PowerSplitTrajectory, SocInterp};
use hev_sic::experiment::{prepare, ExperimentConfig, Inputs};
use hev_sic::maps::{FuelRateCurve, MotorEffMap};
use hev_sic::vehicle::PowerDemandTrace;
use rand::Rng;

pub const SOC_TOL: f64 = 1e-9;
pub const CURRENT_TOL: f64 = 1e-9;
pub const POWER_TOL_W: f64 = 1e-6;
pub const FUEL_TOL_G: f64 = 1e-9;

pub fn udds(dt: f64) -> (ExperimentConfig, Inputs) {
    let cfg = ExperimentConfig::default();
    let inputs = prepare(&cfg, dt).unwrap();
    (cfg, inputs)
}

pub struct Toy {
    pub trace: PowerDemandTrace,
    pub pack: PackParams,
    pub fuel: FuelRateCurve,
    pub eff: MotorEffMap,
    pub cfg: DpConfig,
    pub soc0: f64,
}

/// Tiny baseline instance: N <= 6 steps, <= 5-point grids, a pack small enough
/// that one step moves the SOC across grid cells.
pub fn toy(rng: &mut impl Rng) -> Toy {
    let n = rng.gen_range(2..=6);
    let p_dem: Vec<f64> = (0..n).map(|_| rng.gen_range(-6_000.0..8_000.0)).collect();
    let pack = PackParams {
        q_pack_ah: rng.gen_range(0.004..0.02),
        ..PackParams::default()
    };
    let fuel = FuelRateCurve::quadratic(
        rng.gen_range(0.0..0.3),
        rng.gen_range(4e-5..8e-5),
        rng.gen_range(0.0..2e-9),
        rng.gen_range(6_000.0..15_000.0),
    )
    .unwrap();
    let cfg = DpConfig {
        soc_grid_points: rng.gen_range(3..=5),
        p_gen_grid_points: rng.gen_range(2..=5),
        gamma: rng.gen_range(0.0..50.0),
        soc_interp: SocInterp::Nearest,
        parallel: false,
        ..DpConfig::default()
    };
    Toy {
        trace: PowerDemandTrace::from_demand(1.0, p_dem).unwrap(),
        pack,
        fuel,
        eff: MotorEffMap::default(),
        cfg,
        soc0: [0.2, 0.375, 0.55, 0.725, 0.9][rng.gen_range(0..5)],
    }
}

/// Checks a trajectory against the problem constraints from first principles.
/// Returns one message per violated condition (empty when all hold).
pub fn violations(t: &PowerSplitTrajectory, pack: &PackParams, fuel: &FuelRateCurve, cfg: &DpConfig) -> Vec<String> {
    let mut bad = Vec::new();
    let n = t.p_dem_w.len();
    let cols = [
        t.p_elec_w.len(),
        t.motor_eff.len(),
        t.p_gen_w.len(),
        t.p_bat_w.len(),
        t.p_brake_w.len(),
        t.i_b_a.len(),
        t.fuel_g.len(),
    ];
    if cols.iter().any(|&c| c != n) || t.soc.len() != n + 1 {
        bad.push("column lengths disagree".into());
        return bad;
    }
    let mut push = |k: usize, what: &str| {
        if bad.len() < 20 {
            bad.push(format!("k={k}: {what}"));
        }
    };
    if t.soc[0] != t.soc_initial || t.soc[n] != t.soc_final {
        push(0, "soc endpoints do not match soc_initial/soc_final");
    }
    for k in 0..=n {
        if t.soc[k] < pack.soc_min - SOC_TOL || t.soc[k] > pack.soc_max + SOC_TOL {
            push(k, &format!("SOC {} outside [{}, {}]", t.soc[k], pack.soc_min, pack.soc_max));
        }
    }
    for k in 0..n {
        let (pd, pe, pg, pb, pbr, ib) = (t.p_dem_w[k], t.p_elec_w[k], t.p_gen_w[k], t.p_bat_w[k], t.p_brake_w[k], t.i_b_a[k]);
        let eta = t.motor_eff[k];
        let pe_expect = if pd >= 0.0 { pd / eta } else { pd * eta };
        if (pe - pe_expect).abs() > POWER_TOL_W {
            push(k, "electrical demand inconsistent with motor efficiency");
        }
        if (pe - (pg + pb + pbr)).abs() > POWER_TOL_W {
            push(k, &format!("power balance {pe} != {pg} + {pb} + {pbr}"));
        }
        if pbr > POWER_TOL_W || (pbr < -POWER_TOL_W && (pe >= 0.0 || pb > POWER_TOL_W)) {
            push(k, &format!("friction brake {pbr} W with demand {pe} W and battery {pb} W"));
        }
        if pg < -POWER_TOL_W || pg > fuel.p_gen_max_w() + POWER_TOL_W {
            push(k, &format!("generator power {pg} out of range"));
        }
        if pb < pack.p_bat_min_w - POWER_TOL_W || pb > pack.p_bat_max_w + POWER_TOL_W {
            push(k, &format!("battery power {pb} out of range"));
        }
        if ib < pack.i_b_min_a - CURRENT_TOL || ib > pack.i_b_max_a + CURRENT_TOL {
            push(k, &format!("battery current {ib} out of range"));
        }
        if (pb - (pack.v_nom_v * ib - pack.r_pack_ohm * ib * ib)).abs() > POWER_TOL_W {
            push(k, "battery power and current break the Rint law");
        }
        if (t.fuel_g[k] - fuel.rate_gps(pg) * t.dt).abs() > FUEL_TOL_G {
            push(k, "fuel mass does not match the fuel-rate curve");
        }
        if cfg.soc_interp == SocInterp::Linear {
            let ds = -ib * t.dt / (3600.0 * pack.q_pack_ah);
            if (t.soc[k + 1] - t.soc[k] - ds).abs() > SOC_TOL {
                push(k, &format!("SOC step {} != coulomb count {ds}", t.soc[k + 1] - t.soc[k]));
            }
        }
    }
    let total: f64 = t.fuel_g.iter().sum();
    if (total - t.fuel_total_g).abs() > 1e-6 {
        push(n, "fuel total is not the sum of per-step fuel");
    }
    let deficit = t.soc_initial - t.soc_final;
    let terminal = match cfg.terminal_mode {
        hev_sic::dp::TerminalMode::PenaltyAsymmetric => cfg.gamma * deficit.max(0.0),
        hev_sic::dp::TerminalMode::PenaltySigned => cfg.gamma * deficit,
    };
    if (t.terminal_cost - terminal).abs() > 1e-9 || (t.objective - total - terminal).abs() > 1e-6 {
        push(n, "terminal cost or objective inconsistent");
    }
    for rec in &t.injections {
        let p = &rec.plan;
        let per = (1.0 / (2.0 * p.f_hz * p.t_s_s)).round() as usize;
        let n_blocks = (p.duration_s * 2.0 * p.f_hz).round() as usize;
        if rec.i_c_blocks.len() != n_blocks {
            push(rec.k_start, "wrong number of i_c blocks");
            continue;
        }
        for (j, &ic) in rec.i_c_blocks.iter().enumerate() {
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for m in 0..per {
                let local = j * per + m;
                let e = p.i_ex_a * (2.0 * PI * p.f_hz * p.t_s_s * local as f64).cos();
                lo = lo.max(pack.i_b_min_a - e);
                hi = hi.min(pack.i_b_max_a - e);
                let k = rec.k_start + local;
                if (t.i_b_a[k] - (e + ic)).abs() > CURRENT_TOL {
                    push(k, &format!("injected current {} != cosine + i_c {}", t.i_b_a[k], e + ic));
                }
            }
            if ic < lo - CURRENT_TOL || ic > hi + CURRENT_TOL {
                push(rec.k_start + j * per, &format!("i_c {ic} outside [{lo}, {hi}]"));
            }
        }
    }
    bad
}
