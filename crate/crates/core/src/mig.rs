//! Mode-insertion-gradient baseline.
//!
//! Starting from mode 0 over the whole horizon, each iteration simulates
//! forward, integrates the costate backward, scans a grid of candidate
//! times for the insertion with the most negative first-order sensitivity
//! `d(t, k) = ⟨p, f_k − f_q⟩ + ℓ_k − ℓ_q`, and inserts a pulse of mode `k`
//! whose length comes from a golden-section search on the simulated cost.
//!
//! All switching times live on the `dt` grid, so the schedule is kept as
//! one mode per step.

use serde::Serialize;

use crate::encoding::ModeIndex;
use crate::error::{Error, Result};
use crate::ode::hermite;
use crate::problem::{simulate_schedule, Simulation, StepRule, SwitchSchedule, SwitchedProblem};

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MigConfig {
    /// Simulation and costate step; rounded so the horizon holds a whole
    /// number of steps.
    pub dt: f64,
    /// Candidate insertion times per iteration.
    pub grid_count: usize,
    pub max_insertions: usize,
    /// Longest pulse as a fraction of the horizon.
    pub max_duration_fraction: f64,
    /// Stop once `min d > −descent_tol`.
    pub descent_tol: f64,
    /// Candidates tried, most negative `d` first, before giving up on an
    /// iteration.
    pub candidates_per_iteration: usize,
}

impl Default for MigConfig {
    fn default() -> Self {
        MigConfig {
            dt: 0.01,
            grid_count: 100,
            max_insertions: 500,
            max_duration_fraction: 0.1,
            descent_tol: 1e-6,
            candidates_per_iteration: 5,
        }
    }
}

impl MigConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.grid_count < 2 {
            return Err(Error::Config("grid_count must be at least 2".into()));
        }
        if !(self.max_duration_fraction > 0.0 && self.max_duration_fraction <= 1.0) {
            return Err(Error::Config("max_duration_fraction must lie in (0, 1]".into()));
        }
        if !(self.descent_tol >= 0.0) {
            return Err(Error::Config("descent_tol must be ≥ 0".into()));
        }
        if self.candidates_per_iteration == 0 {
            return Err(Error::Config("candidates_per_iteration must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// One accepted iterate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MigRecord {
    pub iteration: usize,
    pub cost: f64,
    /// Most negative insertion gradient found at this iterate.
    pub min_gradient: f64,
    /// `(time, mode, duration)` of the insertion that produced this iterate.
    pub inserted: Option<(f64, usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct MigResult {
    pub schedule: SwitchSchedule,
    pub cost: f64,
    pub trace: Vec<MigRecord>,
    /// The step actually used.
    pub dt: f64,
}

impl MigResult {
    pub fn insertions(&self) -> usize {
        self.trace.len() - 1
    }
}

/// Backward RK4 for `ṗ = −f_xᵀ p − ℓ_x` on the grid of `sim`, from
/// `p(t_f) = ∇K`. States at step midpoints come from cubic Hermite
/// interpolation. Returns `p` at every grid time.
pub fn costate_backward(
    problem: &SwitchedProblem,
    schedule: &SwitchSchedule,
    sim: &Simulation,
) -> Result<Vec<Vec<f64>>> {
    let n = problem.state_dim();
    let steps = sim.times.len() - 1;
    let mut p = vec![vec![0.0; n]; steps + 1];
    problem.terminal_cost().gradient(
        problem.t0(),
        problem.x0(),
        problem.tf(),
        sim.final_state(),
        &mut p[steps],
    );
    let mut a = vec![0.0; n * n];
    let mut fx0 = vec![0.0; n];
    let mut fx1 = vec![0.0; n];
    let mut xm = vec![0.0; n];
    let mut lx = vec![0.0; n];
    let mut stage = vec![0.0; n];
    let mut k = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];

    for i in (0..steps).rev() {
        let (t0, t1) = (sim.times[i], sim.times[i + 1]);
        let h = t1 - t0;
        let tm = 0.5 * (t0 + t1);
        let k_idx = segment_of(schedule, tm);
        let mode = problem.mode(schedule.modes()[k_idx].value());
        let u = &schedule.controls()[k_idx];
        let (x0, x1) = (&sim.states[i], &sim.states[i + 1]);
        mode.dynamics(t0, x0, u, &mut fx0);
        mode.dynamics(t1, x1, u, &mut fx1);
        hermite(x0, &fx0, x1, &fx1, h, 0.5, &mut xm);

        // k_j = −A(t, x)ᵀ p − ℓ_x evaluated backwards from t1.
        let mut rhs = |t: f64, x: &[f64], p: &[f64], out: &mut [f64]| {
            let mut du = vec![0.0; n * u.len()];
            let mut lu = vec![0.0; u.len()];
            mode.dynamics_jacobian(t, x, u, &mut a, &mut du);
            mode.cost_gradient(t, x, u, &mut lx, &mut lu);
            for c in 0..n {
                out[c] = -lx[c] - (0..n).map(|r| a[r * n + c] * p[r]).sum::<f64>();
            }
        };
        let p1 = p[i + 1].clone();
        rhs(t1, x1, &p1, &mut k[0]);
        for c in 0..n {
            stage[c] = p1[c] - 0.5 * h * k[0][c];
        }
        rhs(tm, &xm, &stage, &mut k[1]);
        for c in 0..n {
            stage[c] = p1[c] - 0.5 * h * k[1][c];
        }
        rhs(tm, &xm, &stage, &mut k[2]);
        for c in 0..n {
            stage[c] = p1[c] - h * k[2][c];
        }
        rhs(t0, x0, &stage, &mut k[3]);
        for c in 0..n {
            p[i][c] = p1[c] - h / 6.0 * (k[0][c] + 2.0 * k[1][c] + 2.0 * k[2][c] + k[3][c]);
        }
        if p[i].iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                time: t0,
                detail: "non-finite costate".into(),
            });
        }
    }
    Ok(p)
}

fn segment_of(schedule: &SwitchSchedule, t: f64) -> usize {
    let times = schedule.times();
    times[1..times.len() - 1].partition_point(|&tau| tau <= t)
}

/// First-order change in cost per unit duration of inserting mode `k` at
/// `t` into an interval running mode `q`. Both modes use the empty control.
pub fn insertion_gradient(problem: &SwitchedProblem, q: usize, k: usize, t: f64, x: &[f64], p: &[f64]) -> f64 {
    if k == q {
        return 0.0;
    }
    let n = problem.state_dim();
    let u = vec![0.0; problem.control_dim()];
    let mut fk = vec![0.0; n];
    let mut fq = vec![0.0; n];
    problem.mode(k).dynamics(t, x, &u, &mut fk);
    problem.mode(q).dynamics(t, x, &u, &mut fq);
    let dot: f64 = (0..n).map(|i| p[i] * (fk[i] - fq[i])).sum();
    dot + problem.mode(k).cost(t, x, &u) - problem.mode(q).cost(t, x, &u)
}

/// Mode per grid step, with the step length.
struct StepModes {
    modes: Vec<usize>,
    t0: f64,
    dt: f64,
}

impl StepModes {
    fn schedule(&self) -> SwitchSchedule {
        let mut modes = vec![ModeIndex::new_unchecked(self.modes[0])];
        let mut times = vec![self.t0];
        for (i, w) in self.modes.windows(2).enumerate() {
            if w[0] != w[1] {
                times.push(self.t0 + (i + 1) as f64 * self.dt);
                modes.push(ModeIndex::new_unchecked(w[1]));
            }
        }
        times.push(self.t0 + self.modes.len() as f64 * self.dt);
        SwitchSchedule::from_modes(modes, times).expect("increasing grid times")
    }

    /// Copy with steps `start..end` set to `k`.
    fn with_pulse(&self, start: usize, end: usize, k: usize) -> StepModes {
        let mut modes = self.modes.clone();
        modes[start..end].iter_mut().for_each(|m| *m = k);
        StepModes {
            modes,
            t0: self.t0,
            dt: self.dt,
        }
    }
}

/// Steps `[start, end)` of a pulse of `len` steps centred on step `centre`.
fn pulse_range(centre: usize, len: usize, total: usize) -> (usize, usize) {
    let start = centre.saturating_sub(len / 2).min(total - len.min(total));
    (start, (start + len).min(total))
}

fn simulate(problem: &SwitchedProblem, steps: &StepModes) -> Result<(SwitchSchedule, Simulation)> {
    let schedule = steps.schedule();
    let sim = simulate_schedule(problem, &schedule, StepRule::MaxStep(steps.dt * (1.0 + 1e-9)))?;
    Ok((schedule, sim))
}

/// Golden-section search over integer pulse lengths in `1..=max_len`;
/// returns the best `(len, cost)` evaluated.
fn best_duration(mut cost: impl FnMut(usize) -> Result<f64>, max_len: usize) -> Result<(usize, f64)> {
    const INV_PHI: f64 = 0.618_033_988_749_895;
    let mut seen: Vec<(usize, f64)> = Vec::new();
    let mut eval = |len: usize, seen: &mut Vec<(usize, f64)>| -> Result<f64> {
        if let Some(&(_, c)) = seen.iter().find(|(l, _)| *l == len) {
            return Ok(c);
        }
        let c = cost(len)?;
        seen.push((len, c));
        Ok(c)
    };
    let (mut a, mut b) = (1.0f64, max_len as f64);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c.round() as usize, &mut seen)?;
    let mut fd = eval(d.round() as usize, &mut seen)?;
    while b - a > 1.0 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c.round() as usize, &mut seen)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d.round() as usize, &mut seen)?;
        }
    }
    for len in [a.floor() as usize, b.ceil() as usize] {
        eval(len.clamp(1, max_len), &mut seen)?;
    }
    Ok(seen
        .into_iter()
        .fold((0, f64::INFINITY), |best, e| if e.1 < best.1 { e } else { best }))
}

pub fn mig_solve(problem: &SwitchedProblem, cfg: &MigConfig) -> Result<MigResult> {
    cfg.check()?;
    problem.ensure_valid()?;
    if problem.control_dim() > 0 {
        return Err(Error::Config(
            "mode insertion handles problems without continuous controls only".into(),
        ));
    }
    let horizon = problem.tf() - problem.t0();
    let total = (horizon / cfg.dt).round().max(1.0) as usize;
    let dt = horizon / total as f64;
    let max_len = ((cfg.max_duration_fraction * horizon / dt).floor() as usize).clamp(1, total);
    let mut steps = StepModes {
        modes: vec![0; total],
        t0: problem.t0(),
        dt,
    };
    let (mut schedule, mut sim) = simulate(problem, &steps)?;
    let mut cost = sim.cost();
    let mut trace = Vec::new();
    let mut inserted = None;

    for iteration in 0..=cfg.max_insertions {
        let p = costate_backward(problem, &schedule, &sim)?;
        // Candidate grid nodes, evenly spread over the step grid.
        let mut candidates = Vec::new();
        for g in 0..cfg.grid_count {
            let node = ((g as f64 + 0.5) * total as f64 / cfg.grid_count as f64) as usize;
            let node = node.min(total - 1);
            let t = sim.times[node];
            let q = steps.modes[node];
            for k in 0..problem.mode_count() {
                if k != q {
                    let d = insertion_gradient(problem, q, k, t, &sim.states[node], &p[node]);
                    candidates.push((d, node, k));
                }
            }
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let min_gradient = candidates.first().map_or(0.0, |c| c.0);
        trace.push(MigRecord {
            iteration,
            cost,
            min_gradient,
            inserted,
        });
        if iteration == cfg.max_insertions || !(min_gradient < -cfg.descent_tol) {
            break;
        }
        let mut accepted = None;
        for &(d, node, k) in candidates.iter().take(cfg.candidates_per_iteration) {
            if !(d < -cfg.descent_tol) {
                break;
            }
            let (len, c) = best_duration(
                |len| {
                    let (s, e) = pulse_range(node, len, total);
                    Ok(simulate(problem, &steps.with_pulse(s, e, k))?.1.cost())
                },
                max_len,
            )?;
            if c < cost - 1e-12 * (1.0 + cost.abs()) {
                accepted = Some((node, k, len, c));
                break;
            }
        }
        let Some((node, k, len, c)) = accepted else {
            break;
        };
        let (s, e) = pulse_range(node, len, total);
        steps = steps.with_pulse(s, e, k);
        (schedule, sim) = simulate(problem, &steps)?;
        debug_assert!((sim.cost() - c).abs() <= 1e-9 * (1.0 + c.abs()));
        cost = sim.cost();
        inserted = Some((problem.t0() + s as f64 * dt, k, (e - s) as f64 * dt));
    }
    Ok(MigResult {
        schedule,
        cost,
        trace,
        dt,
    })
}
