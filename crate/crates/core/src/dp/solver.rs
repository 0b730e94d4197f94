use rayon::prelude::*;

use super::trajectory::{InjectionRecord, PowerSplitTrajectory};
use super::{Problem, SocInterp};
use crate::battery::{rint_current, rint_power};
use crate::error::{Error, Result};
use crate::injection::{excitation, ic_bounds_all, InjectionPlan};
use crate::vehicle::{electrical_demand, motor_efficiency_at};

const SOC_TOL: f64 = 1e-12;

/// Cost carried by SOC nodes with no admissible control. Finite so that linear
/// interpolation moves the infeasible region at the rate the SOC actually moves;
/// any value at or above half of it means no feasible continuation exists.
pub const INFEASIBLE_COST: f64 = 1e6;
const CURRENT_TOL: f64 = 1e-9;
const DT_TOL: f64 = 1e-9;

/// One decision epoch of the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochKind {
    /// A single sample with generator power as the control.
    Step { k: usize },
    /// A half-period block of an injection window with `i_c` as the control.
    Block {
        window: usize,
        block: usize,
        k_start: usize,
        len: usize,
    },
}

impl EpochKind {
    pub fn first_step(&self) -> usize {
        match *self {
            EpochKind::Step { k } => k,
            EpochKind::Block { k_start, .. } => k_start,
        }
    }

    pub fn len(&self) -> usize {
        match *self {
            EpochKind::Step { .. } => 1,
            EpochKind::Block { len, .. } => len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A control admissible at an epoch regardless of the starting SOC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    /// Generator power (steps) or constant current offset (blocks).
    pub control: f64,
    pub fuel_g: f64,
    /// SOC change over the epoch.
    pub dsoc: f64,
    /// Extremes of the running SOC change inside the epoch.
    pub dsoc_min: f64,
    pub dsoc_max: f64,
    /// Smaller is preferred among equal-cost controls.
    pub tie_key: f64,
    /// Braking step: surplus charge can be shed to the friction brakes.
    pub regen: bool,
    pub p_gen_w: f64,
    pub p_bat_w: f64,
    pub i_b_a: f64,
}

#[derive(Debug, Clone, Copy)]
struct Settled {
    soc_next: f64,
    p_bat_w: f64,
    i_b_a: f64,
}

#[derive(Debug, Clone, Copy)]
struct Choice {
    index: usize,
    total: f64,
    settled: Settled,
}

/// Backward-induction solver holding the value table.
pub struct DpSolver<'a> {
    problem: Problem<'a>,
    plans: Vec<InjectionPlan>,
    window_starts: Vec<usize>,
    ic_bounds: Vec<Vec<(f64, f64)>>,
    soc0: f64,
    soc_grid: Vec<f64>,
    soc_step: f64,
    p_gen_grid: Vec<f64>,
    fuel_rate_grid: Vec<f64>,
    p_elec: Vec<f64>,
    motor_eff: Vec<f64>,
    eff_clamped: usize,
    epochs: Vec<EpochKind>,
    value: Vec<Vec<f64>>,
}

impl<'a> DpSolver<'a> {
    pub fn new(problem: Problem<'a>, plans: &[InjectionPlan], soc0: f64) -> Result<Self> {
        let Problem {
            trace,
            pack,
            fuel,
            eff,
            cfg,
        } = problem;
        cfg.validate()?;
        pack.validate()?;
        fuel.validate()?;
        if trace.is_empty() {
            return Err(Error::Argument("empty power-demand trace".into()));
        }
        if !(soc0 >= pack.soc_min && soc0 <= pack.soc_max) {
            return Err(Error::Argument(format!(
                "initial SOC {soc0} outside [{}, {}]",
                pack.soc_min, pack.soc_max
            )));
        }

        let n = trace.len();
        let dt = trace.dt;
        let mut motor_eff = Vec::with_capacity(n);
        let mut eff_clamped = 0;
        for k in 0..n {
            let l = motor_efficiency_at(trace, k, eff)?;
            eff_clamped += usize::from(l.clamped);
            motor_eff.push(l.eff);
        }
        let p_elec: Vec<f64> = trace
            .p_dem_w
            .iter()
            .zip(&motor_eff)
            .map(|(&p, &e)| electrical_demand(p, e))
            .collect();

        // windows sorted by start, non-overlapping, aligned with the trace grid
        let mut order: Vec<usize> = (0..plans.len()).collect();
        order.sort_by(|&a, &b| plans[a].start_s.total_cmp(&plans[b].start_s));
        let plans: Vec<InjectionPlan> = order.iter().map(|&i| plans[i]).collect();
        let mut window_starts = Vec::with_capacity(plans.len());
        let mut ic_bounds = Vec::with_capacity(plans.len());
        let mut next_free = 0usize;
        for plan in &plans {
            plan.validate()?;
            if (plan.t_s_s - dt).abs() > DT_TOL {
                return Err(Error::Argument(format!(
                    "injection sample time {} s differs from the trace step {dt} s",
                    plan.t_s_s
                )));
            }
            let start = plan.start_s / dt;
            if (start - start.round()).abs() > 1e-6 {
                return Err(Error::Argument(format!(
                    "injection start {} s is not on the trace grid",
                    plan.start_s
                )));
            }
            let k_start = start.round() as usize;
            if k_start < next_free {
                return Err(Error::Argument("injection windows overlap".into()));
            }
            if k_start + plan.n_samples() > n {
                return Err(Error::Argument(format!(
                    "injection window ending at {} s exceeds the trace ({} s)",
                    plan.end_s(),
                    n as f64 * dt
                )));
            }
            next_free = k_start + plan.n_samples();
            window_starts.push(k_start);
            ic_bounds.push(ic_bounds_all(plan, pack)?);
        }

        let mut epochs = Vec::new();
        let mut k = 0;
        let mut w = 0;
        while k < n {
            if w < plans.len() && k == window_starts[w] {
                let len = plans[w].samples_per_block();
                for block in 0..plans[w].n_blocks() {
                    epochs.push(EpochKind::Block {
                        window: w,
                        block,
                        k_start: k + block * len,
                        len,
                    });
                }
                k += plans[w].n_samples();
                w += 1;
            } else {
                epochs.push(EpochKind::Step { k });
                k += 1;
            }
        }

        let ns = cfg.soc_grid_points;
        let soc_step = (pack.soc_max - pack.soc_min) / (ns - 1) as f64;
        let soc_grid: Vec<f64> = (0..ns)
            .map(|i| if i == ns - 1 { pack.soc_max } else { pack.soc_min + soc_step * i as f64 })
            .collect();
        let np = cfg.p_gen_grid_points;
        let p_max = fuel.p_gen_max_w();
        let p_gen_grid: Vec<f64> = (0..np)
            .map(|i| if i == np - 1 { p_max } else { p_max * i as f64 / (np - 1) as f64 })
            .collect();
        let fuel_rate_grid = p_gen_grid.iter().map(|&p| fuel.rate_gps(p)).collect();

        let mut solver = Self {
            problem,
            plans,
            window_starts,
            ic_bounds,
            soc0,
            soc_grid,
            soc_step,
            p_gen_grid,
            fuel_rate_grid,
            p_elec,
            motor_eff,
            eff_clamped,
            epochs,
            value: Vec::new(),
        };
        if cfg.soc_interp == SocInterp::Nearest {
            solver.soc0 = solver.soc_grid[solver.nearest_node(soc0)];
        }
        Ok(solver)
    }

    pub fn soc_grid(&self) -> &[f64] {
        &self.soc_grid
    }

    pub fn epochs(&self) -> &[EpochKind] {
        &self.epochs
    }

    /// Cost-to-go at each SOC node, one row per epoch plus the terminal row.
    pub fn value_table(&self) -> &[Vec<f64>] {
        &self.value
    }

    pub fn initial_soc(&self) -> f64 {
        self.soc0
    }

    fn nearest_node(&self, soc: f64) -> usize {
        let pos = ((soc - self.soc_grid[0]) / self.soc_step).round();
        (pos.max(0.0) as usize).min(self.soc_grid.len() - 1)
    }

    /// Cost-to-go row `row` read at an arbitrary SOC.
    pub fn value_at(&self, row: usize, soc: f64) -> f64 {
        interpolate(&self.value[row], self.soc_grid[0], self.soc_step, soc)
    }

    /// Controls admissible at epoch `e` independently of the SOC.
    pub fn candidates(&self, e: usize) -> Vec<Candidate> {
        match self.epochs[e] {
            EpochKind::Step { k } => self.step_candidates(k),
            EpochKind::Block { window, block, .. } => self.block_candidates(window, block),
        }
    }

    fn step_candidates(&self, k: usize) -> Vec<Candidate> {
        let pack = self.problem.pack;
        let dt = self.problem.trace.dt;
        let p_elec = self.p_elec[k];
        let regen = p_elec < 0.0;
        let p_floor = pack.p_bat_min_w.max(rint_power(pack, pack.i_b_min_a));
        let mut out = Vec::with_capacity(self.p_gen_grid.len());
        for (&p_gen, &rate) in self.p_gen_grid.iter().zip(&self.fuel_rate_grid) {
            let requested = p_elec - p_gen;
            let p_bat = if regen { requested.max(p_floor) } else { requested };
            if p_bat < pack.p_bat_min_w || p_bat > pack.p_bat_max_w {
                continue;
            }
            // braking surplus may go to the friction brakes, never battery discharge
            if regen && p_gen + p_bat > 0.0 {
                continue;
            }
            let Some(i_b) = rint_current(pack, p_bat) else {
                continue;
            };
            if i_b < pack.i_b_min_a - CURRENT_TOL || i_b > pack.i_b_max_a + CURRENT_TOL {
                continue;
            }
            let dsoc = pack.soc_delta(i_b, dt);
            out.push(Candidate {
                control: p_gen,
                fuel_g: rate * dt,
                dsoc,
                dsoc_min: dsoc.min(0.0),
                dsoc_max: dsoc.max(0.0),
                tie_key: p_bat.abs(),
                regen,
                p_gen_w: p_gen,
                p_bat_w: p_bat,
                i_b_a: i_b,
            });
        }
        out
    }

    fn block_candidates(&self, window: usize, block: usize) -> Vec<Candidate> {
        let cfg = self.problem.cfg;
        let (lo, hi) = self.ic_bounds[window][block];
        let n = cfg.i_c_grid_points;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let i_c = if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 };
            if let Some(c) = self.evaluate_block(window, block, i_c, |_| {}) {
                out.push(c);
            }
            if lo == hi {
                break;
            }
        }
        out
    }

    /// Simulates one block for offset `i_c`, reporting every sample to `sink`
    /// as `(p_gen, p_bat, i_b, fuel)`.
    fn evaluate_block(
        &self,
        window: usize,
        block: usize,
        i_c: f64,
        mut sink: impl FnMut((f64, f64, f64, f64)),
    ) -> Option<Candidate> {
        let pack = self.problem.pack;
        let fuel = self.problem.fuel;
        let dt = self.problem.trace.dt;
        let plan = &self.plans[window];
        let len = plan.samples_per_block();
        let p_gen_max = fuel.p_gen_max_w();

        let (mut fuel_g, mut cum, mut cum_min, mut cum_max) = (0.0, 0.0, 0.0f64, 0.0f64);
        for m in 0..len {
            let local = block * len + m;
            let k = self.window_starts[window] + local;
            let i_b = excitation(plan, local) + i_c;
            let p_bat = rint_power(pack, i_b);
            if p_bat < pack.p_bat_min_w || p_bat > pack.p_bat_max_w {
                return None;
            }
            let p_elec = self.p_elec[k];
            let mut p_gen = p_elec - p_bat;
            if p_gen < 0.0 {
                // only braking energy can be shed, and only while the pack charges
                if p_elec < 0.0 && p_bat <= 0.0 {
                    p_gen = 0.0;
                } else {
                    return None;
                }
            }
            if p_gen > p_gen_max {
                return None;
            }
            let f = fuel.rate_gps(p_gen) * dt;
            fuel_g += f;
            cum += pack.soc_delta(i_b, dt);
            cum_min = cum_min.min(cum);
            cum_max = cum_max.max(cum);
            sink((p_gen, p_bat, i_b, f));
        }
        Some(Candidate {
            control: i_c,
            fuel_g,
            dsoc: cum,
            dsoc_min: cum_min,
            dsoc_max: cum_max,
            tie_key: i_c.abs(),
            regen: false,
            p_gen_w: f64::NAN,
            p_bat_w: f64::NAN,
            i_b_a: f64::NAN,
        })
    }

    fn settle(&self, c: &Candidate, soc: f64) -> Option<Settled> {
        let pack = self.problem.pack;
        if soc + c.dsoc_min < pack.soc_min - SOC_TOL {
            return None;
        }
        let mut s = Settled {
            soc_next: soc + c.dsoc,
            p_bat_w: c.p_bat_w,
            i_b_a: c.i_b_a,
        };
        if soc + c.dsoc_max > pack.soc_max + SOC_TOL {
            if !c.regen {
                return None;
            }
            // charge only up to the ceiling; the brakes take the rest
            let dt = self.problem.trace.dt;
            let i_b = -(pack.soc_max - soc).max(0.0) * 3600.0 * pack.q_pack_ah / dt;
            let p_bat = rint_power(pack, i_b);
            if c.p_gen_w + p_bat > 0.0 {
                return None;
            }
            s = Settled {
                soc_next: pack.soc_max,
                p_bat_w: p_bat,
                i_b_a: i_b,
            };
        }
        s.soc_next = s.soc_next.clamp(pack.soc_min, pack.soc_max);
        if self.problem.cfg.soc_interp == SocInterp::Nearest {
            s.soc_next = self.soc_grid[self.nearest_node(s.soc_next)];
        }
        Some(s)
    }

    fn best(&self, cands: &[Candidate], soc: f64, next: &[f64]) -> Option<Choice> {
        let mut best: Option<(Choice, f64)> = None;
        for (index, c) in cands.iter().enumerate() {
            let Some(settled) = self.settle(c, soc) else {
                continue;
            };
            let total = c.fuel_g + interpolate(next, self.soc_grid[0], self.soc_step, settled.soc_next);
            let better = match &best {
                None => true,
                Some((b, key)) => total < b.total || (total == b.total && c.tie_key < *key),
            };
            if better {
                best = Some((Choice { index, total, settled }, c.tie_key));
            }
        }
        best.map(|(c, _)| c)
    }

    /// Fills the value table from the terminal row backwards.
    pub fn backward(&mut self) {
        let cfg = self.problem.cfg;
        let terminal: Vec<f64> = self
            .soc_grid
            .iter()
            .map(|&s| cfg.terminal_cost(self.soc0, s))
            .collect();
        let n_epochs = self.epochs.len();
        let mut value = vec![Vec::new(); n_epochs + 1];
        value[n_epochs] = terminal;
        for e in (0..n_epochs).rev() {
            let cands = self.candidates(e);
            let next = &value[e + 1];
            let node_value = |&soc: &f64| {
                self.best(&cands, soc, next)
                    .map_or(INFEASIBLE_COST, |c| c.total.min(INFEASIBLE_COST))
            };
            value[e] = if cfg.parallel {
                self.soc_grid.par_iter().map(node_value).collect()
            } else {
                self.soc_grid.iter().map(node_value).collect()
            };
        }
        self.value = value;
    }

    /// Rolls the optimal policy forward from the initial SOC.
    pub fn forward(&self) -> Result<PowerSplitTrajectory> {
        let trace = self.problem.trace;
        let cfg = self.problem.cfg;
        let n = trace.len();
        let dp_value = self.value_at(0, self.soc0);
        if dp_value >= 0.5 * INFEASIBLE_COST {
            return Err(Error::Infeasible(format!(
                "no admissible control sequence from SOC {}",
                self.soc0
            )));
        }

        let mut p_gen = vec![0.0; n];
        let mut p_bat = vec![0.0; n];
        let mut i_b = vec![0.0; n];
        let mut fuel_g = vec![0.0; n];
        let mut soc = Vec::with_capacity(n + 1);
        let mut injections: Vec<InjectionRecord> = self
            .plans
            .iter()
            .zip(&self.window_starts)
            .map(|(plan, &k_start)| InjectionRecord {
                plan: *plan,
                k_start,
                i_c_blocks: Vec::with_capacity(plan.n_blocks()),
            })
            .collect();

        let mut s = self.soc0;
        soc.push(s);
        for (e, epoch) in self.epochs.iter().enumerate() {
            let cands = self.candidates(e);
            let choice = self.best(&cands, s, &self.value[e + 1]).ok_or_else(|| {
                Error::Infeasible(format!(
                    "forward pass stuck at step {} with SOC {s}",
                    epoch.first_step()
                ))
            })?;
            let c = &cands[choice.index];
            match *epoch {
                EpochKind::Step { k } => {
                    p_gen[k] = c.p_gen_w;
                    p_bat[k] = choice.settled.p_bat_w;
                    i_b[k] = choice.settled.i_b_a;
                    fuel_g[k] = c.fuel_g;
                    s = choice.settled.soc_next;
                    soc.push(s);
                }
                EpochKind::Block {
                    window,
                    block,
                    k_start,
                    ..
                } => {
                    let mut k = k_start;
                    let mut running = s;
                    let dt = trace.dt;
                    let pack = self.problem.pack;
                    self.evaluate_block(window, block, c.control, |(pg, pb, ib, f)| {
                        p_gen[k] = pg;
                        p_bat[k] = pb;
                        i_b[k] = ib;
                        fuel_g[k] = f;
                        running += pack.soc_delta(ib, dt);
                        soc.push(running);
                        k += 1;
                    });
                    s = choice.settled.soc_next;
                    *soc.last_mut().expect("block has samples") = s;
                    injections[window].i_c_blocks.push(c.control);
                }
            }
        }

        let p_brake: Vec<f64> = (0..n)
            .map(|k| {
                let b = self.p_elec[k] - p_gen[k] - p_bat[k];
                if self.p_elec[k] < 0.0 {
                    b
                } else {
                    0.0
                }
            })
            .collect();
        let fuel_total_g: f64 = fuel_g.iter().sum();
        let soc_final = s;
        let terminal_cost = cfg.terminal_cost(self.soc0, soc_final);
        Ok(PowerSplitTrajectory {
            dt: trace.dt,
            p_dem_w: trace.p_dem_w.clone(),
            p_elec_w: self.p_elec.clone(),
            motor_eff: self.motor_eff.clone(),
            p_gen_w: p_gen,
            p_bat_w: p_bat,
            p_brake_w: p_brake,
            i_b_a: i_b,
            soc,
            fuel_g,
            fuel_total_g,
            soc_initial: self.soc0,
            soc_final,
            terminal_cost,
            objective: fuel_total_g + terminal_cost,
            dp_value,
            injections,
            eff_clamped_steps: self.eff_clamped,
        })
    }

    pub fn solve(mut self) -> Result<PowerSplitTrajectory> {
        self.backward();
        self.forward()
    }
}

/// Linear interpolation on a uniform grid, clamped at the ends.
fn interpolate(row: &[f64], origin: f64, step: f64, x: f64) -> f64 {
    let last = row.len() - 1;
    let pos = ((x - origin) / step).clamp(0.0, last as f64);
    let i = (pos.floor() as usize).min(last - 1);
    let w = pos - i as f64;
    if w <= 1e-12 {
        return row[i];
    }
    if w >= 1.0 - 1e-12 {
        return row[i + 1];
    }
    row[i] + w * (row[i + 1] - row[i])
}
