//! Box-constrained, equality-constrained NLP solver.
//!
//! Outer loop: augmented Lagrangian on the equality constraints,
//! `φ(z) = f(z) + λᵀc(z) + ρ/2 ‖c(z)‖²`, with first-order multiplier updates
//! `λ ← λ + ρ c` and a tenfold penalty increase whenever the constraint norm
//! fails to drop by the reduction factor. Inequalities `g(z) ≤ 0`, when an
//! NLP has them, enter in the Powell–Hestenes–Rockafellar form
//! `(max(0, λ + ρg)² − λ²) / 2ρ` with `λ ← max(0, λ + ρg)`. Inner loop: projected gradient on
//! the box. Each step first tries a truncated-Newton direction on the free
//! variables, with conjugate gradients on finite-difference Hessian-vector
//! products of `φ`, and falls back to a Barzilai–Borwein gradient step.
//! Both use monotone Armijo backtracking along the projection arc.

use crate::error::{Error, Result};
use crate::linalg::{dot, norm_inf};

/// A smooth NLP `min f(z)` s.t. `c(z) = 0`, `lo ≤ z ≤ hi`. Constraints
/// from index [`Nlp::equality_count`] on are inequalities `c_k(z) ≤ 0`.
pub trait Nlp {
    fn dim(&self) -> usize;
    fn constraint_count(&self) -> usize;
    fn equality_count(&self) -> usize {
        self.constraint_count()
    }
    fn lower_bounds(&self) -> &[f64];
    fn upper_bounds(&self) -> &[f64];
    /// Objective value; writes the constraint values into `c`.
    fn values(&self, z: &[f64], c: &mut [f64]) -> Result<f64>;
    /// `∇f(z) + J(z)ᵀ y`.
    fn lagrangian_gradient(&self, z: &[f64], y: &[f64], grad: &mut [f64]) -> Result<()>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub outer_iters_max: usize,
    pub inner_iters_max: usize,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    /// Penalty grows unless `‖c‖∞` shrinks below this fraction of its previous value.
    pub reduction_factor: f64,
    pub max_penalty: f64,
    /// `‖c‖∞` tolerance.
    pub defect_tol: f64,
    /// Projected-gradient `∞`-norm tolerance.
    pub stationarity_tol: f64,
    pub armijo_c1: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    /// Conjugate-gradient iterations per truncated-Newton direction on the
    /// free variables; `0` keeps plain projected gradient steps.
    pub newton_cg_iters: usize,
    /// Keep every accepted merit value (tests and diagnostics).
    pub record_merit: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            outer_iters_max: 30,
            inner_iters_max: 500,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            reduction_factor: 0.25,
            max_penalty: 1e9,
            defect_tol: 1e-6,
            stationarity_tol: 1e-5,
            armijo_c1: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 40,
            newton_cg_iters: 20,
            record_merit: false,
        }
    }
}

impl SolverConfig {
    pub fn check(&self) -> Result<()> {
        let positive = [
            ("initial_penalty", self.initial_penalty),
            ("defect_tol", self.defect_tol),
            ("stationarity_tol", self.stationarity_tol),
            ("armijo_c1", self.armijo_c1),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.penalty_growth > 1.0) {
            return Err(Error::Config("penalty_growth must be > 1".into()));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::Config("backtrack_factor must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIters,
    LineSearchFailure,
    Diverged,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIters => "max-iters",
            SolveStatus::LineSearchFailure => "line-search-failure",
            SolveStatus::Diverged => "diverged",
        })
    }
}

/// One line of the outer-iteration trace.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct OuterRecord {
    pub outer: usize,
    pub objective: f64,
    pub defect_norm: f64,
    pub stationarity: f64,
    pub penalty: f64,
    pub inner_iters: usize,
}

impl std::fmt::Display for OuterRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "outer {:3}  f = {:.10e}  |c| = {:.3e}  |pg| = {:.3e}  rho = {:.1e}  inner = {}",
            self.outer, self.objective, self.defect_norm, self.stationarity, self.penalty, self.inner_iters
        )
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub z: Vec<f64>,
    pub objective: f64,
    pub defect_norm: f64,
    pub stationarity: f64,
    pub status: SolveStatus,
    pub trace: Vec<OuterRecord>,
    pub multipliers: Vec<f64>,
    pub penalty: f64,
    pub inner_iters: usize,
    /// Accepted inner merit values per outer iteration, when recorded.
    pub merit_history: Vec<Vec<f64>>,
}

/// Multiplier estimate and penalty carried between solves.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub multipliers: Vec<f64>,
    pub penalty: f64,
}

/// Componentwise clamp of `z` into `[lo, hi]`.
pub fn project_box(z: &[f64], lo: &[f64], hi: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = (0..lo.len()).find(|&i| lo[i] > hi[i]) {
        return Err(Error::Config(format!(
            "bound {i} has lower {} > upper {}",
            lo[i], hi[i]
        )));
    }
    Ok(z.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&v, (&l, &h))| v.max(l).min(h))
        .collect())
}

fn project_into(z: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, &l), &h) in z.iter_mut().zip(lo).zip(hi) {
        *v = v.max(l).min(h);
    }
}

/// `‖P(z - g) - z‖∞`.
fn projected_gradient_norm(z: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    z.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .fold(0.0f64, |m, ((&zi, &gi), (&l, &h))| {
            m.max(((zi - gi).max(l).min(h) - zi).abs())
        })
}

pub fn solve<P: Nlp + ?Sized>(nlp: &P, cfg: &SolverConfig, z_init: &[f64]) -> SolveResult {
    solve_with(nlp, cfg, z_init, None, None)
}

struct Merit<'a, P: Nlp + ?Sized> {
    nlp: &'a P,
    lambda: &'a [f64],
    rho: f64,
    eq: usize,
    c: Vec<f64>,
    y: Vec<f64>,
}

impl<P: Nlp + ?Sized> Merit<'_, P> {
    /// Returns `(φ, f)` and leaves `c(z)` in `self.c`.
    fn value(&mut self, z: &[f64]) -> Result<(f64, f64)> {
        let f = self.nlp.values(z, &mut self.c)?;
        let (ce, ci) = self.c.split_at(self.eq);
        let (le, li) = self.lambda.split_at(self.eq);
        let mut phi = f + dot(le, ce) + 0.5 * self.rho * dot(ce, ce);
        for (&g, &l) in ci.iter().zip(li) {
            let s = (l + self.rho * g).max(0.0);
            phi += (s * s - l * l) / (2.0 * self.rho);
        }
        Ok((phi, f))
    }

    /// Gradient of `φ` at `z`; `self.c` must hold `c(z)`.
    fn gradient(&mut self, z: &[f64], g: &mut [f64]) -> Result<()> {
        for i in 0..self.c.len() {
            self.y[i] = self.lambda[i] + self.rho * self.c[i];
            if i >= self.eq {
                self.y[i] = self.y[i].max(0.0);
            }
        }
        self.nlp.lagrangian_gradient(z, &self.y, g)
    }
}

/// `‖(c_eq, min(−g, λ/ρ))‖∞` with the updated multipliers.
fn violation(c: &[f64], lambda: &[f64], rho: f64, eq: usize) -> f64 {
    let mut v = norm_inf(&c[..eq]);
    for (g, l) in c[eq..].iter().zip(&lambda[eq..]) {
        v = v.max((-g).min(l / rho).abs());
    }
    v
}

enum InnerExit {
    Stationary,
    IterLimit,
    LineSearch,
    Diverged,
}

struct InnerOutcome {
    exit: InnerExit,
    iters: usize,
    objective: f64,
    stationarity: f64,
    merits: Vec<f64>,
}

/// Truncated-Newton direction on the variables strictly inside their
/// bounds. Returns `None` if no descent direction was found.
fn newton_direction<P: Nlp + ?Sized>(
    merit: &mut Merit<'_, P>,
    cfg: &SolverConfig,
    z: &[f64],
    g: &[f64],
) -> Option<Vec<f64>> {
    let (lo, hi) = (merit.nlp.lower_bounds(), merit.nlp.upper_bounds());
    let dim = z.len();
    let pg = projected_gradient_norm(z, g, lo, hi);
    let free: Vec<bool> = (0..dim)
        .map(|i| {
            let eps = pg.min(1e-3 * (hi[i] - lo[i]).min(1.0));
            z[i] > lo[i] + eps && z[i] < hi[i] - eps
        })
        .collect();
    let mut r: Vec<f64> = (0..dim).map(|i| if free[i] { -g[i] } else { 0.0 }).collect();
    let mut rr = dot(&r, &r);
    if rr == 0.0 {
        return None;
    }
    let stop = rr.sqrt().min(0.5) * rr.sqrt();
    let zscale = 1.0 + norm_inf(z);
    let mut p = r.clone();
    let mut d = vec![0.0; dim];
    let mut zp = vec![0.0; dim];
    let mut gp = vec![0.0; dim];
    for _ in 0..cfg.newton_cg_iters {
        let sigma = 1e-7 * zscale / norm_inf(&p);
        for i in 0..dim {
            zp[i] = z[i] + sigma * p[i];
        }
        merit.value(&zp).ok()?;
        merit.gradient(&zp, &mut gp).ok()?;
        let hp: Vec<f64> = (0..dim)
            .map(|i| if free[i] { (gp[i] - g[i]) / sigma } else { 0.0 })
            .collect();
        let php = dot(&p, &hp);
        if !php.is_finite() || php <= 1e-12 * dot(&p, &p) {
            break;
        }
        let a = rr / php;
        for i in 0..dim {
            d[i] += a * p[i];
            r[i] -= a * hp[i];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= stop {
            break;
        }
        let b = rr_new / rr;
        for i in 0..dim {
            p[i] = r[i] + b * p[i];
        }
        rr = rr_new;
    }
    (dot(g, &d) < 0.0).then_some(d)
}

/// Arc search from `z` along the truncated-Newton direction. On success
/// `trial` holds the new point and `(φ, f)` there is returned.
fn newton_step<P: Nlp + ?Sized>(
    merit: &mut Merit<'_, P>,
    cfg: &SolverConfig,
    z: &[f64],
    g: &[f64],
    phi: f64,
    trial: &mut [f64],
) -> Option<(f64, f64)> {
    let (lo, hi) = (merit.nlp.lower_bounds(), merit.nlp.upper_bounds());
    let d = newton_direction(merit, cfg, z, g)?;
    let mut t = 1.0;
    for _ in 0..=cfg.max_backtracks {
        for i in 0..z.len() {
            trial[i] = z[i] + t * d[i];
        }
        project_into(trial, lo, hi);
        let gs: f64 = (0..z.len()).map(|i| g[i] * (trial[i] - z[i])).sum();
        if !(gs < 0.0) {
            return None;
        }
        if let Ok((phi_t, f_t)) = merit.value(trial) {
            if phi_t.is_finite() && phi_t <= phi + cfg.armijo_c1 * gs {
                return Some((phi_t, f_t));
            }
        }
        t *= cfg.backtrack_factor;
    }
    None
}

fn inner_solve<P: Nlp + ?Sized>(
    merit: &mut Merit<'_, P>,
    cfg: &SolverConfig,
    z: &mut Vec<f64>,
    tol: f64,
) -> InnerOutcome {
    let nlp = merit.nlp;
    let (lo, hi) = (nlp.lower_bounds(), nlp.upper_bounds());
    let dim = nlp.dim();
    let mut merits = Vec::new();
    let diverged = |objective: f64, iters| InnerOutcome {
        exit: InnerExit::Diverged,
        iters,
        objective,
        stationarity: f64::INFINITY,
        merits: Vec::new(),
    };

    let Ok((mut phi, mut f)) = merit.value(z) else {
        return diverged(f64::NAN, 0);
    };
    let mut g = vec![0.0; dim];
    if merit.gradient(z, &mut g).is_err() || !phi.is_finite() {
        return diverged(f, 0);
    }
    if cfg.record_merit {
        merits.push(phi);
    }
    let mut pg = projected_gradient_norm(z, &g, lo, hi);
    let mut step = 1.0 / pg.max(1e-12);
    step = step.clamp(1e-12, 1e12);
    let mut trial = vec![0.0; dim];
    let mut d = vec![0.0; dim];
    let mut g_new = vec![0.0; dim];

    for it in 0..cfg.inner_iters_max {
        if pg <= tol {
            return InnerOutcome {
                exit: InnerExit::Stationary,
                iters: it,
                objective: f,
                stationarity: pg,
                merits,
            };
        }
        for i in 0..dim {
            d[i] = (z[i] - step * g[i]).max(lo[i]).min(hi[i]) - z[i];
        }
        let gd = dot(&g, &d);
        if !(gd < 0.0) {
            // Direction lost descent; restart from a unit-scaled step.
            step = 1.0 / pg.max(1e-12);
            continue;
        }
        let mut accepted = None;
        let mut t = 1.0;
        for _ in 0..=cfg.max_backtracks {
            for i in 0..dim {
                trial[i] = z[i] + t * d[i];
            }
            project_into(&mut trial, lo, hi);
            match merit.value(&trial) {
                Ok((phi_t, f_t)) if phi_t.is_finite() => {
                    if phi_t <= phi + cfg.armijo_c1 * t * gd {
                        accepted = Some((phi_t, f_t));
                        break;
                    }
                }
                Ok(_) | Err(_) => {}
            }
            t *= cfg.backtrack_factor;
        }
        let Some((phi_t, f_t)) = accepted else {
            // leave merit.c consistent with z
            let _ = merit.value(z);
            return InnerOutcome {
                exit: InnerExit::LineSearch,
                iters: it,
                objective: f,
                stationarity: pg,
                merits,
            };
        };
        if f_t < -1e20 {
            return diverged(f_t, it);
        }
        if merit.gradient(&trial, &mut g_new).is_err() {
            return diverged(f_t, it);
        }
        let mut ss = 0.0;
        let mut sy = 0.0;
        for i in 0..dim {
            let s = trial[i] - z[i];
            let y = g_new[i] - g[i];
            ss += s * s;
            sy += s * y;
        }
        step = if sy > 0.0 {
            (ss / sy).clamp(1e-12, 1e12)
        } else {
            1e12f64.min(step * 10.0)
        };
        std::mem::swap(z, &mut trial);
        std::mem::swap(&mut g, &mut g_new);
        phi = phi_t;
        f = f_t;
        if cfg.record_merit {
            merits.push(phi);
        }
        pg = projected_gradient_norm(z, &g, lo, hi);

        // Newton refinement on the face reached by the gradient step.
        if cfg.newton_cg_iters == 0 || pg <= tol {
            continue;
        }
        match newton_step(merit, cfg, z, &g, phi, &mut trial) {
            Some((phi_t, f_t)) => {
                if f_t < -1e20 || merit.gradient(&trial, &mut g_new).is_err() {
                    return diverged(f_t, it);
                }
                std::mem::swap(z, &mut trial);
                std::mem::swap(&mut g, &mut g_new);
                phi = phi_t;
                f = f_t;
                if cfg.record_merit {
                    merits.push(phi);
                }
                pg = projected_gradient_norm(z, &g, lo, hi);
            }
            None => {
                let _ = merit.value(z);
            }
        }
    }
    InnerOutcome {
        exit: if pg <= tol {
            InnerExit::Stationary
        } else {
            InnerExit::IterLimit
        },
        iters: cfg.inner_iters_max,
        objective: f,
        stationarity: pg,
        merits,
    }
}

/// Full solve with optional warm start and a per-outer-iteration trace sink.
pub fn solve_with<P: Nlp + ?Sized>(
    nlp: &P,
    cfg: &SolverConfig,
    z_init: &[f64],
    warm: Option<&WarmStart>,
    mut sink: Option<&mut dyn FnMut(&OuterRecord)>,
) -> SolveResult {
    let (lo, hi) = (nlp.lower_bounds(), nlp.upper_bounds());
    let m = nlp.constraint_count();
    let eq = nlp.equality_count();
    let mut z = project_box(z_init, lo, hi).unwrap_or_else(|_| z_init.to_vec());
    let mut lambda = warm.map(|w| w.multipliers.clone()).unwrap_or_else(|| vec![0.0; m]);
    let mut rho = warm.map(|w| w.penalty).unwrap_or(cfg.initial_penalty);
    let mut trace = Vec::new();
    let mut merit_history = Vec::new();
    let mut prev_cnorm = f64::INFINITY;
    let mut total_inner = 0;
    let mut status = SolveStatus::MaxIters;
    let mut objective = f64::NAN;
    let mut cnorm = f64::INFINITY;
    let mut stationarity = f64::INFINITY;

    if project_box(z_init, lo, hi).is_err() {
        status = SolveStatus::Diverged;
    } else {
        for outer in 0..cfg.outer_iters_max {
            let tol = cfg.stationarity_tol.max(0.1f64.powi(outer as i32 + 1));
            let lam_snapshot = lambda.clone();
            let mut merit = Merit {
                nlp,
                lambda: &lam_snapshot,
                rho,
                eq,
                c: vec![0.0; m],
                y: vec![0.0; m],
            };
            let out = inner_solve(&mut merit, cfg, &mut z, tol);
            total_inner += out.iters;
            if cfg.record_merit {
                merit_history.push(out.merits);
            }
            objective = out.objective;
            stationarity = out.stationarity;
            if matches!(out.exit, InnerExit::Diverged) {
                status = SolveStatus::Diverged;
                break;
            }
            let c = merit.c;
            for i in 0..m {
                lambda[i] += rho * c[i];
                if i >= eq {
                    lambda[i] = lambda[i].max(0.0);
                }
            }
            cnorm = violation(&c, &lambda, rho, eq);
            let record = OuterRecord {
                outer,
                objective,
                defect_norm: cnorm,
                stationarity,
                penalty: rho,
                inner_iters: out.iters,
            };
            if let Some(s) = sink.as_mut() {
                s(&record);
            }
            trace.push(record);
            if cnorm <= cfg.defect_tol && stationarity <= cfg.stationarity_tol {
                status = SolveStatus::Converged;
                break;
            }
            if matches!(out.exit, InnerExit::LineSearch) && cnorm <= cfg.defect_tol {
                status = SolveStatus::LineSearchFailure;
                break;
            }
            if cnorm > cfg.defect_tol && cnorm > cfg.reduction_factor * prev_cnorm {
                rho = (rho * cfg.penalty_growth).min(cfg.max_penalty);
            }
            prev_cnorm = cnorm;
        }
    }
    SolveResult {
        z,
        objective,
        defect_norm: cnorm,
        stationarity,
        status,
        trace,
        multipliers: lambda,
        penalty: rho,
        inner_iters: total_inner,
        merit_history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `‖z - target‖²` with optional linear equalities `A z = b`.
    struct Quadratic {
        target: Vec<f64>,
        lo: Vec<f64>,
        hi: Vec<f64>,
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    }

    impl Nlp for Quadratic {
        fn dim(&self) -> usize {
            self.target.len()
        }
        fn constraint_count(&self) -> usize {
            self.b.len()
        }
        fn lower_bounds(&self) -> &[f64] {
            &self.lo
        }
        fn upper_bounds(&self) -> &[f64] {
            &self.hi
        }
        fn values(&self, z: &[f64], c: &mut [f64]) -> Result<f64> {
            for (k, row) in self.a.iter().enumerate() {
                c[k] = dot(row, z) - self.b[k];
            }
            Ok(z.iter().zip(&self.target).map(|(a, b)| (a - b) * (a - b)).sum())
        }
        fn lagrangian_gradient(&self, z: &[f64], y: &[f64], g: &mut [f64]) -> Result<()> {
            for i in 0..z.len() {
                g[i] = 2.0 * (z[i] - self.target[i]);
            }
            for (k, row) in self.a.iter().enumerate() {
                for i in 0..z.len() {
                    g[i] += row[i] * y[k];
                }
            }
            Ok(())
        }
    }

    fn quad(target: Vec<f64>, lo: f64, hi: f64) -> Quadratic {
        let n = target.len();
        Quadratic {
            target,
            lo: vec![lo; n],
            hi: vec![hi; n],
            a: Vec::new(),
            b: Vec::new(),
        }
    }

    #[test]
    fn unconstrained_quadratic_reaches_target() {
        let p = quad(vec![0.3, -0.7, 1.2], -5.0, 5.0);
        let cfg = SolverConfig {
            stationarity_tol: 1e-10,
            ..Default::default()
        };
        let r = solve(&p, &cfg, &[0.0, 0.0, 0.0]);
        assert_eq!(r.status, SolveStatus::Converged);
        for (a, b) in r.z.iter().zip(&p.target) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn box_excluding_target_gives_projection() {
        let p = quad(vec![2.0, -3.0, 0.5], -1.0, 1.0);
        let r = solve(&p, &SolverConfig::default(), &[0.0; 3]);
        assert_eq!(r.status, SolveStatus::Converged);
        for (a, b) in r.z.iter().zip([1.0, -1.0, 0.5]) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn inequality_constrained_quadratic() {
        // min (z0 − 2)² + (z1 − 2)² s.t. z0 + z1 ≤ 2: z = (1, 1), λ = 2.
        struct Half;
        impl Nlp for Half {
            fn dim(&self) -> usize {
                2
            }
            fn constraint_count(&self) -> usize {
                1
            }
            fn equality_count(&self) -> usize {
                0
            }
            fn lower_bounds(&self) -> &[f64] {
                &[-5.0, -5.0]
            }
            fn upper_bounds(&self) -> &[f64] {
                &[5.0, 5.0]
            }
            fn values(&self, z: &[f64], c: &mut [f64]) -> Result<f64> {
                c[0] = z[0] + z[1] - 2.0;
                Ok((z[0] - 2.0).powi(2) + (z[1] - 2.0).powi(2))
            }
            fn lagrangian_gradient(&self, z: &[f64], y: &[f64], g: &mut [f64]) -> Result<()> {
                g[0] = 2.0 * (z[0] - 2.0) + y[0];
                g[1] = 2.0 * (z[1] - 2.0) + y[0];
                Ok(())
            }
        }
        for cg in [0, 20] {
            let cfg = SolverConfig {
                newton_cg_iters: cg,
                stationarity_tol: 1e-9,
                defect_tol: 1e-9,
                ..Default::default()
            };
            let r = solve(&Half, &cfg, &[0.0, -1.0]);
            assert_eq!(r.status, SolveStatus::Converged);
            assert!((r.z[0] - 1.0).abs() < 1e-6 && (r.z[1] - 1.0).abs() < 1e-6, "{:?}", r.z);
            assert!((r.multipliers[0] - 2.0).abs() < 1e-5);
        }
    }

    #[test]
    fn equality_constrained_quadratic() {
        // min ‖z‖² s.t. z0 + z1 + z2 = 3 → z = (1, 1, 1)
        let mut p = quad(vec![0.0; 3], -10.0, 10.0);
        p.a = vec![vec![1.0, 1.0, 1.0]];
        p.b = vec![3.0];
        let r = solve(&p, &SolverConfig::default(), &[0.0; 3]);
        assert_eq!(r.status, SolveStatus::Converged);
        assert!(r.defect_norm <= 1e-6);
        for v in &r.z {
            assert!((v - 1.0).abs() < 1e-5);
        }
        assert!((r.multipliers[0] + 2.0).abs() < 1e-4);
    }

    #[test]
    fn inner_merit_never_increases() {
        let mut p = quad(vec![0.5, 2.0, -1.0, 0.0], -1.0, 1.5);
        p.a = vec![vec![1.0, -1.0, 0.5, 2.0], vec![0.0, 1.0, 1.0, 1.0]];
        p.b = vec![0.25, 0.5];
        let cfg = SolverConfig {
            record_merit: true,
            ..Default::default()
        };
        let r = solve(&p, &cfg, &[0.0; 4]);
        assert_eq!(r.status, SolveStatus::Converged);
        for merits in &r.merit_history {
            for w in merits.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_iterates() {
        let mut p = quad(vec![0.5, 2.0, -1.0], -1.0, 1.5);
        p.a = vec![vec![1.0, -1.0, 0.5]];
        p.b = vec![0.25];
        let a = solve(&p, &SolverConfig::default(), &[0.1, 0.2, 0.3]);
        let b = solve(&p, &SolverConfig::default(), &[0.1, 0.2, 0.3]);
        assert_eq!(a.z, b.z);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn projection_rules() {
        let lo = [0.0, -1.0];
        let hi = [1.0, 1.0];
        assert_eq!(project_box(&[0.5, 0.0], &lo, &hi).unwrap(), vec![0.5, 0.0]);
        let p = project_box(&[3.0, -4.0], &lo, &hi).unwrap();
        assert_eq!(p, vec![1.0, -1.0]);
        assert_eq!(project_box(&p, &lo, &hi).unwrap(), p);
        assert!(matches!(project_box(&[0.0], &[1.0], &[0.0]), Err(Error::Config(_))));
    }

    struct Unbounded;

    impl Nlp for Unbounded {
        fn dim(&self) -> usize {
            1
        }
        fn constraint_count(&self) -> usize {
            0
        }
        fn lower_bounds(&self) -> &[f64] {
            &[f64::NEG_INFINITY]
        }
        fn upper_bounds(&self) -> &[f64] {
            &[f64::INFINITY]
        }
        fn values(&self, z: &[f64], _: &mut [f64]) -> Result<f64> {
            Ok(-z[0].powi(3))
        }
        fn lagrangian_gradient(&self, z: &[f64], _: &[f64], g: &mut [f64]) -> Result<()> {
            g[0] = -3.0 * z[0] * z[0];
            Ok(())
        }
    }

    #[test]
    fn unbounded_objective_reports_divergence() {
        let cfg = SolverConfig {
            inner_iters_max: 10_000,
            ..Default::default()
        };
        let r = solve(&Unbounded, &cfg, &[1.0]);
        assert_eq!(r.status, SolveStatus::Diverged);
    }

    #[test]
    fn rejects_bad_config() {
        let bad = SolverConfig {
            penalty_growth: 1.0,
            ..Default::default()
        };
        assert!(bad.check().is_err());
        assert!(SolverConfig::default().check().is_ok());
    }
}
