//! End-to-end solve of the penalized embedded problem: transcription,
//! penalty continuation, NLP solve, and schedule extraction.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::condensed::CondensedNlp;
use crate::embed::EmbeddedSystem;
use crate::encoding::EmbeddingConfig;
use crate::error::{Error, Result};
use crate::extract::{bang_bang_fraction, extract_schedule, EmbeddedTrajectory};
use crate::linalg;
use crate::problem::{simulate_schedule, StepRule, SwitchSchedule, SwitchedProblem};
use crate::solver::{solve_with, Nlp, OuterRecord, SolveStatus, SolverConfig, WarmStart};
use crate::transcribe::{build_nlp, Mesh, NlpProblem, Scheme};

/// Which decision space the NLP solver works in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formulation {
    /// Controls only; states from the defect equations.
    #[default]
    Condensed,
    /// States and controls, defects as equality constraints.
    Full,
}

impl std::str::FromStr for Formulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "condensed" => Ok(Formulation::Condensed),
            "full" => Ok(Formulation::Full),
            other => Err(Error::Config(format!("unknown formulation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeocpConfig {
    /// Mesh intervals `N`.
    pub intervals: usize,
    pub scheme: Scheme,
    pub formulation: Formulation,
    pub solver: SolverConfig,
    /// Multipliers on `α`, applied in order; the last should be 1.
    pub continuation: Vec<f64>,
    /// Shift applied to a bit stuck at one half before the last stage.
    pub tie_break: f64,
    /// Orders equally ranked bits in the tie-break.
    pub seed: u64,
    /// Optional state target for a linear initial state guess.
    pub initial_target: Option<Vec<f64>>,
    /// RK4 steps per mesh interval when re-simulating the schedule.
    pub resim_substeps: usize,
}

impl Default for MeocpConfig {
    fn default() -> Self {
        MeocpConfig {
            intervals: 200,
            scheme: Scheme::Trapezoidal,
            formulation: Formulation::Condensed,
            solver: SolverConfig::default(),
            continuation: vec![0.1, 0.5, 1.0],
            tie_break: 1e-3,
            seed: 0,
            initial_target: None,
            resim_substeps: 8,
        }
    }
}

/// Outcome of one continuation stage.
#[derive(Debug, Clone, serde::Serialize)]
pub struct StageReport {
    pub alpha: f64,
    pub status: SolveStatus,
    pub objective: f64,
    pub defect_norm: f64,
    pub stationarity: f64,
    pub inner_iters: usize,
    pub trace: Vec<OuterRecord>,
}

#[derive(Debug, Clone)]
pub struct MeocpSolution {
    pub nlp: NlpProblem,
    pub z: Vec<f64>,
    pub trajectory: EmbeddedTrajectory,
    pub schedule: SwitchSchedule,
    /// NLP objective, penalty included.
    pub objective: f64,
    /// Quadrature of the penalty alone.
    pub penalty_integral: f64,
    pub defect_norm: f64,
    pub status: SolveStatus,
    pub stages: Vec<StageReport>,
    pub resimulated_cost: f64,
    pub tie_breaks: usize,
}

impl MeocpSolution {
    pub fn objective_without_penalty(&self) -> f64 {
        self.objective - self.penalty_integral
    }

    pub fn bang_bang_fraction(&self, eps: f64) -> f64 {
        bang_bang_fraction(&self.trajectory, eps)
    }
}

/// Shifts by `shift` one bit per node among those within `1e-6` of one
/// half, choosing the bit with the largest objective sensitivity.
/// `offsets[j]` locates node `j`'s switching variables in `z`.
fn break_ties(z: &mut [f64], grad: &[f64], offsets: &[usize], bits: usize, shift: f64, rng: &mut ChaCha8Rng) -> usize {
    let mut count = 0;
    for &off in offsets {
        let mut stuck: Vec<usize> = (0..bits).filter(|&i| (z[off + i] - 0.5).abs() <= 1e-6).collect();
        if stuck.is_empty() {
            continue;
        }
        stuck.shuffle(rng);
        let best = stuck.iter().copied().fold(stuck[0], |acc, i| {
            if grad[off + i].abs() > grad[off + acc].abs() {
                i
            } else {
                acc
            }
        });
        z[off + best] = (z[off + best] + shift).min(1.0);
        count += 1;
    }
    count
}

/// Either formulation behind one interface.
enum Stage {
    Full(NlpProblem),
    Condensed(CondensedNlp),
}

impl Stage {
    fn nlp(&self) -> &dyn Nlp {
        match self {
            Stage::Full(p) => p,
            Stage::Condensed(p) => p,
        }
    }

    fn full(&self) -> &NlpProblem {
        match self {
            Stage::Full(p) => p,
            Stage::Condensed(p) => p.full(),
        }
    }

    fn switch_offsets(&self) -> Vec<usize> {
        let layout = self.full().layout();
        (0..layout.nodes)
            .map(|j| match self {
                Stage::Full(_) => layout.switch_offset_of(j),
                Stage::Condensed(_) => j * layout.control_len + layout.switch_offset,
            })
            .collect()
    }

    fn objective_gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        let nlp = self.nlp();
        let mut g = vec![0.0; nlp.dim()];
        nlp.lagrangian_gradient(z, &vec![0.0; nlp.constraint_count()], &mut g)?;
        Ok(g)
    }

    fn to_full(&self, z: &[f64]) -> Result<Vec<f64>> {
        match self {
            Stage::Full(_) => Ok(z.to_vec()),
            Stage::Condensed(p) => p.expand(z),
        }
    }
}

/// Re-simulates `schedule` with RK4 at `substeps` steps per mesh interval.
pub fn resimulate(
    problem: &SwitchedProblem,
    schedule: &SwitchSchedule,
    intervals: usize,
    substeps: usize,
) -> Result<f64> {
    let h = (problem.tf() - problem.t0()) / (intervals * substeps.max(1)) as f64;
    Ok(simulate_schedule(problem, schedule, StepRule::MaxStep(h))?.cost())
}

pub fn solve_meocp(problem: &SwitchedProblem, embedding: EmbeddingConfig, cfg: &MeocpConfig) -> Result<MeocpSolution> {
    cfg.solver.check()?;
    if cfg.continuation.is_empty() || cfg.continuation.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Config("continuation factors must be positive".into()));
    }
    let sys = EmbeddedSystem::new(problem.clone(), embedding)?;
    let mesh = Mesh::uniform(problem.t0(), problem.tf(), cfg.intervals)?;
    let base = build_nlp(sys.clone(), mesh, cfg.scheme)?;
    let guess = base.initial_guess(cfg.initial_target.as_deref());
    let mut z = match cfg.formulation {
        Formulation::Full => guess,
        Formulation::Condensed => CondensedNlp::new(base.clone()).controls_of(&guess),
    };
    let mut warm: Option<WarmStart> = None;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stages = Vec::new();
    let mut tie_breaks = 0;
    let mut stage = None;
    let mut last = None;

    for (s, &factor) in cfg.continuation.iter().enumerate() {
        let stage_cfg = embedding.with_alpha(embedding.alpha() * factor);
        let full = base.with_system(sys.with_config(stage_cfg)?);
        let current = match cfg.formulation {
            Formulation::Full => Stage::Full(full),
            Formulation::Condensed => Stage::Condensed(CondensedNlp::new(full)),
        };
        if s + 1 == cfg.continuation.len() && s > 0 {
            let grad = current.objective_gradient(&z)?;
            let offsets = current.switch_offsets();
            tie_breaks = break_ties(&mut z, &grad, &offsets, sys.bit_count(), cfg.tie_break, &mut rng);
        }
        let result = solve_with(current.nlp(), &cfg.solver, &z, warm.as_ref(), None);
        stages.push(StageReport {
            alpha: stage_cfg.alpha(),
            status: result.status,
            objective: result.objective,
            defect_norm: result.defect_norm,
            stationarity: result.stationarity,
            inner_iters: result.inner_iters,
            trace: result.trace.clone(),
        });
        if result.status == SolveStatus::Diverged {
            return Err(Error::Divergence {
                time: problem.t0(),
                detail: format!("solver diverged at continuation stage {s}"),
            });
        }
        z = result.z.clone();
        warm = Some(WarmStart {
            multipliers: result.multipliers.clone(),
            penalty: result.penalty,
        });
        last = Some(result);
        stage = Some(current);
    }
    let result = last.expect("at least one stage");
    let stage = stage.expect("at least one stage");
    let nlp = stage.full().clone();
    let z = stage.to_full(&z)?;
    let defect_norm = linalg::norm_inf(&nlp.defects(&z)?).max(result.defect_norm);
    let trajectory = EmbeddedTrajectory::from_nlp(&nlp, &z);
    let schedule = extract_schedule(&trajectory, &embedding)?;
    schedule.check_against(problem)?;
    let resimulated_cost = resimulate(problem, &schedule, cfg.intervals, cfg.resim_substeps)?;
    Ok(MeocpSolution {
        objective: nlp.objective(&z)?,
        penalty_integral: nlp.penalty_integral(&z),
        defect_norm,
        status: result.status,
        nlp,
        z,
        trajectory,
        schedule,
        stages,
        resimulated_cost,
        tie_breaks,
    })
}
