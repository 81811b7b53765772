//! Switched optimal control problems and switching schedules.
//!
//! A [`SwitchedProblem`] bundles `M` modes, each with a vector field
//! `f_k(t, x, u)` and running cost `ℓ_k(t, x, u)`, a terminal cost
//! `K(t0, x0, tf, xf)`, a fixed horizon and initial state, and box bounds on
//! the per-mode control and (optionally) the state.

use std::fmt;
use std::sync::Arc;

use crate::encoding::ModeIndex;
use crate::error::{Error, Result};
use crate::ode::{rk4_step, Rk4Workspace};

pub type DynamicsFn = dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync;
/// Writes `∂f/∂x` (`n×n`, row-major) and `∂f/∂u` (`n×m`, row-major).
pub type DynamicsJacobianFn = dyn Fn(f64, &[f64], &[f64], &mut [f64], &mut [f64]) + Send + Sync;
pub type CostFn = dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync;
/// Writes `∂ℓ/∂x` (length `n`) and `∂ℓ/∂u` (length `m`).
pub type CostGradientFn = dyn Fn(f64, &[f64], &[f64], &mut [f64], &mut [f64]) + Send + Sync;
pub type TerminalFn = dyn Fn(f64, &[f64], f64, &[f64]) -> f64 + Send + Sync;
/// Writes `∇_{xf} K`.
pub type TerminalGradientFn = dyn Fn(f64, &[f64], f64, &[f64], &mut [f64]) + Send + Sync;

/// Relative central-difference step used when analytic derivatives are absent.
pub const FD_STEP: f64 = 1e-6;

fn fd_step(x: f64) -> f64 {
    FD_STEP * (1.0 + x.abs())
}

/// One subsystem: vector field, running cost and optional analytic derivatives.
#[derive(Clone)]
pub struct Mode {
    dynamics: Arc<DynamicsFn>,
    dynamics_jacobian: Option<Arc<DynamicsJacobianFn>>,
    cost: Arc<CostFn>,
    cost_gradient: Option<Arc<CostGradientFn>>,
}

impl fmt::Debug for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Mode")
            .field("analytic_dynamics_jacobian", &self.dynamics_jacobian.is_some())
            .field("analytic_cost_gradient", &self.cost_gradient.is_some())
            .finish()
    }
}

impl Mode {
    pub fn new<F, L>(dynamics: F, cost: L) -> Self
    where
        F: Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        L: Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        Mode {
            dynamics: Arc::new(dynamics),
            dynamics_jacobian: None,
            cost: Arc::new(cost),
            cost_gradient: None,
        }
    }

    pub fn with_dynamics_jacobian<J>(mut self, jac: J) -> Self
    where
        J: Fn(f64, &[f64], &[f64], &mut [f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.dynamics_jacobian = Some(Arc::new(jac));
        self
    }

    pub fn with_cost_gradient<G>(mut self, grad: G) -> Self
    where
        G: Fn(f64, &[f64], &[f64], &mut [f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.cost_gradient = Some(Arc::new(grad));
        self
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.dynamics_jacobian.is_some()
    }

    pub fn has_analytic_cost_gradient(&self) -> bool {
        self.cost_gradient.is_some()
    }

    #[inline]
    pub fn dynamics(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        (self.dynamics)(t, x, u, out)
    }

    #[inline]
    pub fn cost(&self, t: f64, x: &[f64], u: &[f64]) -> f64 {
        (self.cost)(t, x, u)
    }

    /// `∂f/∂x` and `∂f/∂u`, analytic when available, central differences otherwise.
    pub fn dynamics_jacobian(&self, t: f64, x: &[f64], u: &[f64], dfdx: &mut [f64], dfdu: &mut [f64]) {
        if let Some(jac) = &self.dynamics_jacobian {
            jac(t, x, u, dfdx, dfdu);
            return;
        }
        let n = x.len();
        let m = u.len();
        let mut xp = x.to_vec();
        let mut up = u.to_vec();
        let mut fp = vec![0.0; n];
        let mut fm = vec![0.0; n];
        for j in 0..n {
            let h = fd_step(x[j]);
            xp[j] = x[j] + h;
            self.dynamics(t, &xp, u, &mut fp);
            xp[j] = x[j] - h;
            self.dynamics(t, &xp, u, &mut fm);
            xp[j] = x[j];
            for i in 0..n {
                dfdx[i * n + j] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        for j in 0..m {
            let h = fd_step(u[j]);
            up[j] = u[j] + h;
            self.dynamics(t, x, &up, &mut fp);
            up[j] = u[j] - h;
            self.dynamics(t, x, &up, &mut fm);
            up[j] = u[j];
            for i in 0..n {
                dfdu[i * m + j] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
    }

    pub fn cost_gradient(&self, t: f64, x: &[f64], u: &[f64], dldx: &mut [f64], dldu: &mut [f64]) {
        if let Some(g) = &self.cost_gradient {
            g(t, x, u, dldx, dldu);
            return;
        }
        let mut xp = x.to_vec();
        for j in 0..x.len() {
            let h = fd_step(x[j]);
            xp[j] = x[j] + h;
            let p = self.cost(t, &xp, u);
            xp[j] = x[j] - h;
            let m = self.cost(t, &xp, u);
            xp[j] = x[j];
            dldx[j] = (p - m) / (2.0 * h);
        }
        let mut up = u.to_vec();
        for j in 0..u.len() {
            let h = fd_step(u[j]);
            up[j] = u[j] + h;
            let p = self.cost(t, x, &up);
            up[j] = u[j] - h;
            let m = self.cost(t, x, &up);
            up[j] = u[j];
            dldu[j] = (p - m) / (2.0 * h);
        }
    }
}

/// Terminal cost `K(t0, x0, tf, xf)`.
#[derive(Clone)]
pub struct TerminalCost {
    value: Option<Arc<TerminalFn>>,
    gradient: Option<Arc<TerminalGradientFn>>,
}

impl fmt::Debug for TerminalCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TerminalCost")
            .field("zero", &self.value.is_none())
            .finish()
    }
}

impl TerminalCost {
    pub fn zero() -> Self {
        TerminalCost {
            value: None,
            gradient: None,
        }
    }

    pub fn new<K>(value: K) -> Self
    where
        K: Fn(f64, &[f64], f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        TerminalCost {
            value: Some(Arc::new(value)),
            gradient: None,
        }
    }

    pub fn with_gradient<G>(mut self, grad: G) -> Self
    where
        G: Fn(f64, &[f64], f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(grad));
        self
    }

    pub fn is_zero(&self) -> bool {
        self.value.is_none()
    }

    pub fn value(&self, t0: f64, x0: &[f64], tf: f64, xf: &[f64]) -> f64 {
        match &self.value {
            Some(k) => k(t0, x0, tf, xf),
            None => 0.0,
        }
    }

    /// `∇_{xf} K`.
    pub fn gradient(&self, t0: f64, x0: &[f64], tf: f64, xf: &[f64], out: &mut [f64]) {
        let Some(k) = &self.value else {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        };
        if let Some(g) = &self.gradient {
            g(t0, x0, tf, xf, out);
            return;
        }
        let mut xp = xf.to_vec();
        for j in 0..xf.len() {
            let h = fd_step(xf[j]);
            xp[j] = xf[j] + h;
            let p = k(t0, x0, tf, &xp);
            xp[j] = xf[j] - h;
            let m = k(t0, x0, tf, &xp);
            xp[j] = xf[j];
            out[j] = (p - m) / (2.0 * h);
        }
    }
}

/// Componentwise `[lower, upper]` box.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Bounds { lower, upper }
    }

    pub fn symmetric(half_width: f64, dim: usize) -> Self {
        Bounds {
            lower: vec![-half_width; dim],
            upper: vec![half_width; dim],
        }
    }

    pub fn unbounded(dim: usize) -> Self {
        Bounds {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&lo, &hi))| v >= lo - tol && v <= hi + tol)
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo,
                (false, true) => hi,
                (false, false) => 0.0,
            })
            .collect()
    }
}

/// A switched optimal control problem with fixed endpoints in time and a fixed
/// initial state.
#[derive(Clone, Debug)]
pub struct SwitchedProblem {
    name: String,
    state_dim: usize,
    control_dim: usize,
    modes: Vec<Mode>,
    terminal: TerminalCost,
    t0: f64,
    tf: f64,
    x0: Vec<f64>,
    control_bounds: Bounds,
    state_bounds: Option<Bounds>,
}

/// Builder for [`SwitchedProblem`]. Construction never fails; call
/// [`SwitchedProblem::validate`] for diagnostics.
#[derive(Debug)]
pub struct ProblemBuilder {
    inner: SwitchedProblem,
}

impl ProblemBuilder {
    pub fn name(mut self, name: impl Into<String>) -> Self {
        self.inner.name = name.into();
        self
    }

    pub fn mode(mut self, mode: Mode) -> Self {
        self.inner.modes.push(mode);
        self
    }

    pub fn modes(mut self, modes: impl IntoIterator<Item = Mode>) -> Self {
        self.inner.modes.extend(modes);
        self
    }

    pub fn terminal_cost(mut self, k: TerminalCost) -> Self {
        self.inner.terminal = k;
        self
    }

    pub fn horizon(mut self, t0: f64, tf: f64) -> Self {
        self.inner.t0 = t0;
        self.inner.tf = tf;
        self
    }

    pub fn initial_state(mut self, x0: Vec<f64>) -> Self {
        self.inner.x0 = x0;
        self
    }

    pub fn control_bounds(mut self, b: Bounds) -> Self {
        self.inner.control_bounds = b;
        self
    }

    pub fn state_bounds(mut self, b: Bounds) -> Self {
        self.inner.state_bounds = Some(b);
        self
    }

    pub fn build(self) -> SwitchedProblem {
        self.inner
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    TooFewModes,
    DegenerateHorizon,
    NonFiniteData,
    DimensionMismatch,
    InitialStateOutOfBounds,
    InvertedBounds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl SwitchedProblem {
    pub fn builder(state_dim: usize, control_dim: usize) -> ProblemBuilder {
        ProblemBuilder {
            inner: SwitchedProblem {
                name: String::from("custom"),
                state_dim,
                control_dim,
                modes: Vec::new(),
                terminal: TerminalCost::zero(),
                t0: 0.0,
                tf: 1.0,
                x0: vec![0.0; state_dim],
                control_bounds: Bounds::unbounded(control_dim),
                state_bounds: None,
            },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn mode(&self, k: usize) -> &Mode {
        &self.modes[k]
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn terminal_cost(&self) -> &TerminalCost {
        &self.terminal
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn tf(&self) -> f64 {
        self.tf
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn control_bounds(&self) -> &Bounds {
        &self.control_bounds
    }

    pub fn state_bounds(&self) -> Option<&Bounds> {
        self.state_bounds.as_ref()
    }

    pub fn terminal_value(&self, xf: &[f64]) -> f64 {
        self.terminal.value(self.t0, &self.x0, self.tf, xf)
    }

    /// Every violated invariant; empty when the problem is well formed.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut push = |kind, message: String| out.push(Diagnostic { kind, message });
        if self.modes.len() < 2 {
            push(
                DiagnosticKind::TooFewModes,
                format!("need at least two modes, got {}", self.modes.len()),
            );
        }
        if !(self.t0.is_finite() && self.tf.is_finite()) {
            push(DiagnosticKind::NonFiniteData, "horizon endpoints must be finite".into());
        } else if self.t0 >= self.tf {
            push(
                DiagnosticKind::DegenerateHorizon,
                format!("degenerate horizon: t0 = {} must be < tf = {}", self.t0, self.tf),
            );
        }
        if self.state_dim == 0 {
            push(
                DiagnosticKind::DimensionMismatch,
                "state dimension must be positive".into(),
            );
        }
        if self.x0.len() != self.state_dim {
            push(
                DiagnosticKind::DimensionMismatch,
                format!("x0 has length {}, state dimension is {}", self.x0.len(), self.state_dim),
            );
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            push(DiagnosticKind::NonFiniteData, "x0 has non-finite components".into());
        }
        let cb = &self.control_bounds;
        if cb.lower.len() != self.control_dim || cb.upper.len() != self.control_dim {
            push(
                DiagnosticKind::DimensionMismatch,
                format!("control bounds must have length {}", self.control_dim),
            );
        } else if cb.lower.iter().zip(&cb.upper).any(|(lo, hi)| lo > hi) {
            push(
                DiagnosticKind::InvertedBounds,
                "control bounds have lower > upper".into(),
            );
        }
        if let Some(sb) = &self.state_bounds {
            if sb.lower.len() != self.state_dim || sb.upper.len() != self.state_dim {
                push(
                    DiagnosticKind::DimensionMismatch,
                    format!("state bounds must have length {}", self.state_dim),
                );
            } else if sb.lower.iter().zip(&sb.upper).any(|(lo, hi)| lo > hi) {
                push(DiagnosticKind::InvertedBounds, "state bounds have lower > upper".into());
            } else if self.x0.len() == self.state_dim && !sb.contains(&self.x0, 0.0) {
                push(
                    DiagnosticKind::InitialStateOutOfBounds,
                    "x0 lies outside the state bounds".into(),
                );
            }
        }
        out
    }

    /// `Err` carrying all diagnostics joined, `Ok` when valid.
    pub fn ensure_valid(&self) -> Result<()> {
        let d = self.validate();
        if d.is_empty() {
            Ok(())
        } else {
            let msg: Vec<String> = d.iter().map(|d| d.message.clone()).collect();
            Err(Error::InvalidProblem(msg.join("; ")))
        }
    }
}

/// A switching sequence `{q_k}` with times `τ_0 < … < τ_N` and a constant
/// control per interval.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchSchedule {
    modes: Vec<ModeIndex>,
    times: Vec<f64>,
    controls: Vec<Vec<f64>>,
}

impl SwitchSchedule {
    pub fn new(modes: Vec<ModeIndex>, times: Vec<f64>, controls: Vec<Vec<f64>>) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::Domain("schedule needs at least one interval".into()));
        }
        if times.len() != modes.len() + 1 {
            return Err(Error::Domain(format!(
                "{} intervals need {} switching times, got {}",
                modes.len(),
                modes.len() + 1,
                times.len()
            )));
        }
        if controls.len() != modes.len() {
            return Err(Error::Domain("one control vector per interval required".into()));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Domain("switching times must be strictly increasing".into()));
        }
        Ok(SwitchSchedule { modes, times, controls })
    }

    /// Single-interval schedule with no control (`m = 0`).
    pub fn constant(mode: ModeIndex, t0: f64, tf: f64) -> Result<Self> {
        Self::new(vec![mode], vec![t0, tf], vec![Vec::new()])
    }

    /// Piecewise-constant modes with no control.
    pub fn from_modes(modes: Vec<ModeIndex>, times: Vec<f64>) -> Result<Self> {
        let controls = vec![Vec::new(); modes.len()];
        Self::new(modes, times, controls)
    }

    pub fn modes(&self) -> &[ModeIndex] {
        &self.modes
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn controls(&self) -> &[Vec<f64>] {
        &self.controls
    }

    pub fn interval_count(&self) -> usize {
        self.modes.len()
    }

    pub fn switch_count(&self) -> usize {
        self.modes.len() - 1
    }

    /// Active mode at `t`; intervals are closed on the left.
    pub fn mode_at(&self, t: f64) -> ModeIndex {
        let idx = self.times[1..self.times.len() - 1].partition_point(|&tau| tau <= t);
        self.modes[idx]
    }

    /// Merges neighbouring intervals that share mode and control.
    pub fn merged(&self) -> SwitchSchedule {
        let mut modes = vec![self.modes[0]];
        let mut times = vec![self.times[0]];
        let mut controls = vec![self.controls[0].clone()];
        for k in 1..self.modes.len() {
            let last = modes.len() - 1;
            if self.modes[k] == modes[last] && self.controls[k] == controls[last] {
                continue;
            }
            times.push(self.times[k]);
            modes.push(self.modes[k]);
            controls.push(self.controls[k].clone());
        }
        times.push(*self.times.last().unwrap());
        SwitchSchedule { modes, times, controls }
    }

    /// Checks that the schedule matches the problem's horizon, mode set and
    /// control shape.
    pub fn check_against(&self, problem: &SwitchedProblem) -> Result<()> {
        let tol = 1e-12 * (1.0 + problem.tf().abs());
        if (self.times[0] - problem.t0()).abs() > tol || (self.times.last().unwrap() - problem.tf()).abs() > tol {
            return Err(Error::Domain("schedule does not span the problem horizon".into()));
        }
        if let Some(q) = self.modes.iter().find(|q| q.value() >= problem.mode_count()) {
            return Err(Error::Domain(format!("schedule uses invalid mode {q}")));
        }
        if self.controls.iter().any(|u| u.len() != problem.control_dim()) {
            return Err(Error::Domain("schedule control has wrong dimension".into()));
        }
        Ok(())
    }
}

/// How [`simulate_schedule`] chooses integration steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// Fixed number of equal RK4 steps per switching interval.
    PerInterval(usize),
    /// Equal steps per interval, as many as needed to keep each `≤ h`.
    MaxStep(f64),
}

/// Result of integrating a schedule forward.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub running_cost: f64,
    pub terminal_cost: f64,
}

impl Simulation {
    pub fn cost(&self) -> f64 {
        self.running_cost + self.terminal_cost
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().unwrap()
    }
}

/// Integrates the switched dynamics under `schedule` with RK4 and accumulates
/// the running cost by the trapezoidal rule on the same grid.
pub fn simulate_schedule(problem: &SwitchedProblem, schedule: &SwitchSchedule, rule: StepRule) -> Result<Simulation> {
    schedule.check_against(problem)?;
    let schedule = schedule.merged();
    let n = problem.state_dim();
    let mut x = problem.x0().to_vec();
    let mut next = vec![0.0; n];
    let mut ws = Rk4Workspace::new(n);
    let mut times = vec![problem.t0()];
    let mut states = vec![x.clone()];
    let mut running = 0.0;

    for (k, q) in schedule.modes().iter().enumerate() {
        let mode = problem.mode(q.value());
        let u = &schedule.controls()[k];
        let (a, b) = (schedule.times()[k], schedule.times()[k + 1]);
        let steps = match rule {
            StepRule::PerInterval(s) => s.max(1),
            StepRule::MaxStep(h) => ((b - a) / h - 1e-9).ceil().max(1.0) as usize,
        };
        let h = (b - a) / steps as f64;
        let mut l_prev = mode.cost(a, &x, u);
        for s in 0..steps {
            let t = a + s as f64 * h;
            rk4_step(|t, x, dx| mode.dynamics(t, x, u, dx), t, &x, h, &mut next, &mut ws);
            let t_next = if s + 1 == steps { b } else { a + (s + 1) as f64 * h };
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    time: t_next,
                    detail: format!("non-finite state under mode {q}"),
                });
            }
            std::mem::swap(&mut x, &mut next);
            let l_next = mode.cost(t_next, &x, u);
            running += 0.5 * h * (l_prev + l_next);
            l_prev = l_next;
            times.push(t_next);
            states.push(x.clone());
        }
    }
    if !running.is_finite() {
        return Err(Error::Divergence {
            time: problem.tf(),
            detail: "non-finite running cost".into(),
        });
    }
    let terminal = problem.terminal_value(&x);
    Ok(Simulation {
        times,
        states,
        running_cost: running,
        terminal_cost: terminal,
    })
}

/// Switched cost `J` of `schedule`, using `steps_per_interval` RK4 steps per
/// switching interval.
pub fn evaluate_schedule_cost(
    problem: &SwitchedProblem,
    schedule: &SwitchSchedule,
    steps_per_interval: usize,
) -> Result<f64> {
    Ok(simulate_schedule(problem, schedule, StepRule::PerInterval(steps_per_interval))?.cost())
}
