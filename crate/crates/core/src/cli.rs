//! Command-line front end: `run` and `verify`.
//!
//! A run writes into `--out`:
//!
//! | method | files |
//! |--------|-------|
//! | `meocp` | `trajectory.csv`, `schedule.csv`, `summary.json` |
//! | `mig` | `mig_trajectory.csv`, `mig_schedule.csv`, `mig_summary.json` |
//! | `both` | all of the above plus `comparison.json` |
//!
//! Rendezvous runs also write `trajectory_inertial.csv`. If anything fails,
//! the files written so far are removed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bench::{
    lvlh_to_inertial, rendezvous_problem, three_tank_problem, LinearProblemSpec, RendezvousParams, ThreeTankParams,
    RENDEZVOUS_TF, THREE_TANK_TF, THREE_TANK_X0,
};
use crate::embed::EmbeddedSystem;
use crate::encoding::{encode, EmbeddingConfig};
use crate::error::{Error, Result};
use crate::meocp::{solve_meocp, Formulation, MeocpConfig, MeocpSolution};
use crate::mig::{mig_solve, MigConfig, MigResult};
use crate::problem::{simulate_schedule, StepRule, SwitchSchedule, SwitchedProblem};
use crate::transcribe::Scheme;
use crate::verify::{run_suite, Suite};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Meocp,
    Mig,
    Both,
}

/// Everything a run needs. Read from JSON; keys not listed here are errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// `three-tank`, `rendezvous`, or a path to a linear problem JSON file.
    pub problem: String,
    pub method: Method,
    pub nodes: usize,
    pub scheme: Scheme,
    pub formulation: Formulation,
    /// Problem default when absent.
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub tf: Option<f64>,
    pub x0: Option<Vec<f64>>,
    pub seed: u64,
    pub defect_tol: f64,
    pub stationarity_tol: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub continuation: Vec<f64>,
    pub dt: f64,
    pub grid: usize,
    pub max_insertions: usize,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = MeocpConfig::default();
        let g = MigConfig::default();
        RunConfig {
            problem: "three-tank".into(),
            method: Method::Meocp,
            nodes: m.intervals,
            scheme: m.scheme,
            formulation: m.formulation,
            alpha: None,
            beta: None,
            tf: None,
            x0: None,
            seed: m.seed,
            defect_tol: m.solver.defect_tol,
            stationarity_tol: m.solver.stationarity_tol,
            outer_iters: m.solver.outer_iters_max,
            inner_iters: m.solver.inner_iters_max,
            continuation: m.continuation,
            dt: g.dt,
            grid: g.grid_count,
            max_insertions: g.max_insertions,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn meocp(&self) -> MeocpConfig {
        let mut cfg = MeocpConfig {
            intervals: self.nodes,
            scheme: self.scheme,
            formulation: self.formulation,
            continuation: self.continuation.clone(),
            seed: self.seed,
            ..Default::default()
        };
        cfg.solver.defect_tol = self.defect_tol;
        cfg.solver.stationarity_tol = self.stationarity_tol;
        cfg.solver.outer_iters_max = self.outer_iters;
        cfg.solver.inner_iters_max = self.inner_iters;
        cfg
    }

    pub fn mig(&self) -> MigConfig {
        MigConfig {
            dt: self.dt,
            grid_count: self.grid,
            max_insertions: self.max_insertions,
            ..Default::default()
        }
    }

    /// Builds the problem and its embedding.
    pub fn problem(&self) -> Result<(SwitchedProblem, EmbeddingConfig)> {
        let fixed_x0 = |n: usize| -> Result<Option<Vec<f64>>> {
            match &self.x0 {
                Some(x) if x.len() != n => Err(Error::Config(format!("x0 has {} entries, expected {n}", x.len()))),
                other => Ok(other.clone()),
            }
        };
        match self.problem.as_str() {
            "three-tank" => {
                let mut params = ThreeTankParams::default();
                if let Some(a) = self.alpha {
                    params.alpha = a;
                }
                let x0 = fixed_x0(3)?.map_or(THREE_TANK_X0, |x| [x[0], x[1], x[2]]);
                let p = three_tank_problem(&params, x0, self.tf.unwrap_or(THREE_TANK_TF));
                let emb = EmbeddingConfig::with_weights(4, params.alpha, self.beta.unwrap_or(params.alpha))?;
                Ok((p, emb))
            }
            "rendezvous" => {
                let mut params = RendezvousParams::default();
                if let Some(a) = self.alpha {
                    params.alpha = a;
                }
                if let Some(b) = self.beta {
                    params.beta = b;
                }
                if let Some(x) = fixed_x0(4)? {
                    params.xi0 = [x[0], x[1], x[2], x[3]];
                }
                let p = rendezvous_problem(&params, self.tf.unwrap_or(RENDEZVOUS_TF));
                Ok((p, params.embedding()?))
            }
            path => {
                let text = fs::read_to_string(path).map_err(|e| {
                    Error::Config(format!(
                        "problem `{path}` is not a built-in name or a readable file: {e}"
                    ))
                })?;
                let mut spec = LinearProblemSpec::from_json(&text)?;
                if let Some(x) = fixed_x0(spec.x0.len())? {
                    spec.x0 = x;
                }
                if let Some(tf) = self.tf {
                    spec.tf = tf;
                }
                let p = spec.to_problem()?;
                let alpha = self.alpha.unwrap_or(0.1);
                let emb = EmbeddingConfig::with_weights(p.mode_count(), alpha, self.beta.unwrap_or(alpha))?;
                Ok((p, emb))
            }
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.nodes == 0 {
            return Err(Error::Config("nodes must be ≥ 1".into()));
        }
        if self.continuation.is_empty() {
            return Err(Error::Config("continuation must not be empty".into()));
        }
        self.mig().check()
    }
}

/// Remembers the files a run has written so a failure can remove them.
struct Outputs {
    dir: PathBuf,
    created_dir: bool,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn open(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir)?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            created_dir,
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, body)?;
        self.written.push(path.clone());
        Ok(path)
    }

    fn discard(self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

fn csv_header(n: usize, b: usize) -> String {
    let mut h = String::from("t");
    for i in 0..n {
        let _ = write!(h, ",x{i}");
    }
    for i in 0..b {
        let _ = write!(h, ",v{i}");
    }
    h.push_str(",q,running_cost\n");
    h
}

fn csv_row(out: &mut String, t: f64, x: &[f64], v: &[f64], q: usize, l: f64) {
    let _ = write!(out, "{t:.16e}");
    for a in x.iter().chain(v) {
        let _ = write!(out, ",{a:.16e}");
    }
    let _ = writeln!(out, ",{q},{l:.16e}");
}

/// One row per mesh node.
pub fn trajectory_csv(sys: &EmbeddedSystem, sol: &MeocpSolution) -> Result<String> {
    let traj = &sol.trajectory;
    let modes = traj.node_modes(sys.config());
    let mut out = csv_header(sys.state_dim(), sys.bit_count());
    for j in 0..traj.node_count() {
        let mut u = traj.controls[j].clone();
        u.extend_from_slice(&traj.switches[j]);
        let l = sys.embedded_running_cost(traj.times[j], &traj.states[j], &u)?;
        csv_row(
            &mut out,
            traj.times[j],
            &traj.states[j],
            &traj.switches[j],
            modes[j].value(),
            l,
        );
    }
    Ok(out)
}

pub fn schedule_csv(s: &SwitchSchedule) -> String {
    let mut out = String::from("tau_start,tau_end,q\n");
    let s = s.merged();
    for (k, q) in s.modes().iter().enumerate() {
        let _ = writeln!(out, "{:.16e},{:.16e},{}", s.times()[k], s.times()[k + 1], q.value());
    }
    out
}

/// The schedule integrated with steps of at most `dt`, bits set to the
/// active mode's code.
pub fn simulated_csv(problem: &SwitchedProblem, s: &SwitchSchedule, bits: usize, dt: f64) -> Result<String> {
    let sim = simulate_schedule(problem, s, StepRule::MaxStep(dt * (1.0 + 1e-9)))?;
    let mut out = csv_header(problem.state_dim(), bits);
    for (t, x) in sim.times.iter().zip(&sim.states) {
        let q = s.mode_at(*t).value();
        let u = vec![0.0; problem.control_dim()];
        let l = problem.mode(q).cost(*t, x, &u);
        csv_row(&mut out, *t, x, &encode(q, bits), q, l);
    }
    Ok(out)
}

fn q_values(s: &SwitchSchedule) -> Vec<usize> {
    let mut q: Vec<usize> = s.modes().iter().map(|m| m.value()).collect();
    q.sort_unstable();
    q.dedup();
    q
}

pub fn meocp_summary(cfg: &RunConfig, sol: &MeocpSolution, wall_time: f64) -> Value {
    let emb = sol.nlp.system().config();
    json!({
        "problem": sol.nlp.system().problem().name(),
        "objective": sol.objective,
        "objective_without_penalty": sol.objective_without_penalty(),
        "penalty_residual": sol.penalty_integral,
        "bang_bang_fraction": sol.bang_bang_fraction(0.01),
        "max_invalid_weight": sol.trajectory.max_invalid_weight(emb),
        "resimulated_cost": sol.resimulated_cost,
        "defect_norm": sol.defect_norm,
        "status": sol.status,
        "switch_count": sol.schedule.merged().switch_count(),
        "q_values": q_values(&sol.schedule),
        "final_state": sol.trajectory.states.last(),
        "stages": sol.stages.iter().map(|s| json!({
            "alpha": s.alpha,
            "status": s.status,
            "objective": s.objective,
            "defect_norm": s.defect_norm,
            "stationarity": s.stationarity,
            "inner_iters": s.inner_iters,
        })).collect::<Vec<_>>(),
        "tie_breaks": sol.tie_breaks,
        "wall_time": wall_time,
        "config": cfg,
    })
}

pub fn mig_summary(cfg: &RunConfig, res: &MigResult, wall_time: f64) -> Value {
    json!({
        "cost": res.cost,
        "insertions": res.insertions(),
        "dt": res.dt,
        "switch_count": res.schedule.merged().switch_count(),
        "q_values": q_values(&res.schedule),
        "trace": res.trace,
        "wall_time": wall_time,
        "config": cfg,
    })
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

/// What a successful run produced.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub meocp_cost: Option<f64>,
    pub mig_cost: Option<f64>,
}

fn run_into(cfg: &RunConfig, out: &mut Outputs) -> Result<RunReport> {
    cfg.check()?;
    let (problem, emb) = cfg.problem()?;
    let mut report = RunReport {
        files: Vec::new(),
        meocp_cost: None,
        mig_cost: None,
    };
    let mut timings = (None, None);

    if cfg.method != Method::Mig {
        let start = Instant::now();
        let sol = solve_meocp(&problem, emb, &cfg.meocp())?;
        let wall = start.elapsed().as_secs_f64();
        let sys = sol.nlp.system();
        out.write("trajectory.csv", &trajectory_csv(sys, &sol)?)?;
        out.write("schedule.csv", &schedule_csv(&sol.schedule))?;
        if problem.name() == "rendezvous" {
            let params = RendezvousParams::default();
            let mut s = String::from("t,x_km,y_km\n");
            for (t, xi) in sol.trajectory.times.iter().zip(&sol.trajectory.states) {
                let [x, y] = lvlh_to_inertial(&params, *t, xi);
                let _ = writeln!(s, "{t:.16e},{x:.16e},{y:.16e}");
            }
            out.write("trajectory_inertial.csv", &s)?;
        }
        out.write("summary.json", &pretty(&meocp_summary(cfg, &sol, wall)))?;
        report.meocp_cost = Some(sol.resimulated_cost);
        timings.0 = Some(wall);
    }

    if cfg.method != Method::Meocp {
        let start = Instant::now();
        let res = mig_solve(&problem, &cfg.mig())?;
        let wall = start.elapsed().as_secs_f64();
        out.write(
            "mig_trajectory.csv",
            &simulated_csv(&problem, &res.schedule, emb.bit_count(), res.dt)?,
        )?;
        out.write("mig_schedule.csv", &schedule_csv(&res.schedule))?;
        out.write("mig_summary.json", &pretty(&mig_summary(cfg, &res, wall)))?;
        report.mig_cost = Some(res.cost);
        timings.1 = Some(wall);
    }

    if let (Some(a), Some(b), (Some(ta), Some(tb))) = (report.meocp_cost, report.mig_cost, timings) {
        let cmp = json!({
            "problem": problem.name(),
            "meocp": { "cost": a, "wall_time": ta, "nodes": cfg.nodes },
            "mig": { "cost": b, "wall_time": tb, "dt": cfg.dt, "grid": cfg.grid },
            "relative_difference": (a - b) / b.abs().max(f64::MIN_POSITIVE),
        });
        out.write("comparison.json", &pretty(&cmp))?;
    }
    report.files = out.written.clone();
    Ok(report)
}

/// Runs `cfg`, writing into `cfg.out`. On error nothing is left behind.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    let mut out = Outputs::open(&cfg.out)?;
    match run_into(cfg, &mut out) {
        Ok(r) => Ok(r),
        Err(e) => {
            out.discard();
            Err(e)
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "switchembed",
    version,
    about = "Optimal control of switched systems by binary embedding"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a problem and write trajectories, schedules and summaries.
    Run(RunArgs),
    /// Run the property checks.
    Verify {
        #[arg(value_enum, default_value = "fast")]
        suite: SuiteArg,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SuiteArg {
    Fast,
    Full,
}

#[derive(Debug, Default, clap::Args)]
pub struct RunArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `three-tank`, `rendezvous`, or a linear problem JSON file.
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Mesh intervals.
    #[arg(long)]
    pub nodes: Option<usize>,
    /// `trapezoidal` or `hermite-simpson`.
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Insertion-gradient time step.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Insertion candidate grid size.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub tf: Option<f64>,
    /// Comma-separated initial state.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = &self.problem {
            cfg.problem = v.clone();
        }
        if let Some(v) = self.method {
            cfg.method = v;
        }
        if let Some(v) = self.nodes {
            cfg.nodes = v;
        }
        if let Some(v) = &self.scheme {
            cfg.scheme = v.parse()?;
        }
        if self.alpha.is_some() {
            cfg.alpha = self.alpha;
        }
        if self.beta.is_some() {
            cfg.beta = self.beta;
        }
        if let Some(v) = self.dt {
            cfg.dt = v;
        }
        if let Some(v) = self.grid {
            cfg.grid = v;
        }
        if self.tf.is_some() {
            cfg.tf = self.tf;
        }
        if self.x0.is_some() {
            cfg.x0 = self.x0.clone();
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        Ok(cfg)
    }
}

/// Prints the reports; `true` when every check passed.
pub fn verify(suite: Suite) -> bool {
    let reports = run_suite(suite);
    for r in &reports {
        println!("{r}");
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    println!("{} checks, {failed} failed", reports.len());
    failed == 0
}

pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match cli.command {
        Command::Verify { suite } => {
            let suite = match suite {
                SuiteArg::Fast => Suite::Fast,
                SuiteArg::Full => Suite::Full,
            };
            if verify(suite) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Command::Run(args) => match args.resolve().and_then(|cfg| run(&cfg)) {
            Ok(r) => {
                for f in &r.files {
                    println!("{}", f.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
    }
}
