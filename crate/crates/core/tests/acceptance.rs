//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Tolerances are pinned here.

use std::process::ExitCode;
use std::time::Instant;

use serde_json::Value;
use switchembed::bench::{
    rendezvous_problem, three_tank_problem, RendezvousParams, ThreeTankParams, RENDEZVOUS_TF, THREE_TANK_TF,
    THREE_TANK_X0,
};
use switchembed::cli::{run, Method, RunConfig};
use switchembed::meocp::{solve_meocp, MeocpConfig, MeocpSolution};
use switchembed::mig::{mig_solve, MigConfig};
use switchembed::problem::{simulate_schedule, Mode, StepRule, SwitchSchedule, SwitchedProblem};
use switchembed::transcribe::{build_nlp, Mesh, Scheme};
use switchembed::verify::{
    benchmark_systems, check_brute_force_oracle, check_embedded_derivatives, check_encoding_derivatives,
    check_hamiltonian_concavity, check_nlp_derivatives, check_partition_of_unity, check_vertex_consistency,
    CheckReport,
};
use switchembed::{EmbeddedSystem, EmbeddingConfig, ModeIndex};

struct Criterion {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
    seconds: f64,
}

fn from_reports(reports: &[CheckReport]) -> (bool, String) {
    let failed: Vec<String> = reports.iter().filter(|r| !r.passed).map(|r| r.to_string()).collect();
    let worst = reports.iter().map(|r| r.worst).fold(0.0, f64::max);
    let samples: usize = reports.iter().map(|r| r.samples).min().unwrap_or(0);
    if failed.is_empty() {
        (
            true,
            format!("{} checks, worst {worst:.2e}, ≥ {samples} samples each", reports.len()),
        )
    } else {
        (false, failed.join("; "))
    }
}

fn timed(id: usize, name: &'static str, budget: f64, f: impl FnOnce() -> (bool, String)) -> Criterion {
    let start = Instant::now();
    let (ok, detail) = f();
    let seconds = start.elapsed().as_secs_f64();
    let in_budget = seconds < budget;
    Criterion {
        id,
        name,
        passed: ok && in_budget,
        detail: if in_budget {
            detail
        } else {
            format!("{detail}; took {seconds:.1}s, budget {budget}s")
        },
        seconds,
    }
}

/// Bit patterns rounded at one half, decoded without snapping to `Q`.
fn raw_codes(sol: &MeocpSolution) -> Vec<usize> {
    sol.trajectory
        .switches
        .iter()
        .map(|v| v.iter().enumerate().map(|(i, &b)| usize::from(b >= 0.5) << i).sum())
        .collect()
}

fn bang_bang_report(name: &str, sol: &MeocpSolution, m: usize) -> (bool, String) {
    let bb = sol.bang_bang_fraction(0.02);
    let decoded = raw_codes(sol).iter().filter(|&&k| k < m).count() as f64 / sol.trajectory.node_count() as f64;
    let mismatch = (sol.objective - sol.resimulated_cost).abs() / sol.resimulated_cost.abs();
    let ok = bb >= 0.98 && decoded == 1.0 && mismatch <= 0.02;
    (
        ok,
        format!(
            "{name}: bb {bb:.4}, decoded {:.1}%, mismatch {:.3}%",
            100.0 * decoded,
            100.0 * mismatch
        ),
    )
}

fn strip_timing(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.retain(|k, _| k != "wall_time");
            map.values_mut().for_each(strip_timing);
        }
        Value::Array(a) => a.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

/// `ẋ = x cos t`, `x(0) = 1`, exact `x(t) = e^{sin t}`.
fn smooth_problem() -> SwitchedProblem {
    let f = || {
        Mode::new(|t, x, _, dx| dx[0] = x[0] * t.cos(), |_, x, _| x[0] * x[0])
            .with_dynamics_jacobian(|t, _, _, a, _| a[0] = t.cos())
    };
    SwitchedProblem::builder(1, 0)
        .name("smooth")
        .mode(f())
        .mode(f())
        .horizon(0.0, 2.0)
        .initial_state(vec![1.0])
        .build()
}

fn smooth_exact(t: f64) -> f64 {
    t.sin().exp()
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(" ")
}

/// Least-squares slope of `log err` against `log h`.
fn order(steps: &[usize], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = steps.iter().map(|&n| (1.0 / n as f64).ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let (mx, my) = (
        xs.iter().sum::<f64>() / xs.len() as f64,
        ys.iter().sum::<f64>() / ys.len() as f64,
    );
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

fn main() -> ExitCode {
    let mut results = Vec::new();
    let systems = benchmark_systems();

    results.push(timed(1, "partition of unity", 1.0, || {
        from_reports(&[check_partition_of_unity(1000, 11)])
    }));

    results.push(timed(2, "vertex consistency", 1.0, || {
        from_reports(
            &systems
                .iter()
                .map(|(n, s)| check_vertex_consistency(n, s, 200, 12))
                .collect::<Vec<_>>(),
        )
    }));

    results.push(timed(3, "derivative correctness", 30.0, || {
        let mut r = Vec::new();
        for m in [2, 3, 4, 5, 8] {
            r.push(check_encoding_derivatives(
                &EmbeddingConfig::with_weights(m, 0.3, 2.0).unwrap(),
                100,
                13,
            ));
        }
        for (name, sys) in &systems {
            r.push(check_embedded_derivatives(name, sys, 100, 14));
            for scheme in [Scheme::Trapezoidal, Scheme::HermiteSimpson] {
                let p = sys.problem();
                let nlp = build_nlp(sys.clone(), Mesh::uniform(p.t0(), p.tf(), 4).unwrap(), scheme).unwrap();
                r.push(check_nlp_derivatives(name, &nlp, 100, 15));
            }
        }
        from_reports(&r)
    }));

    results.push(timed(4, "hamiltonian concavity", 10.0, || {
        from_reports(
            &systems
                .iter()
                .map(|(n, s)| check_hamiltonian_concavity(n, s, 1000, 16))
                .collect::<Vec<_>>(),
        )
    }));

    results.push(timed(5, "brute-force oracle", 60.0, || {
        let r = check_brute_force_oracle();
        (r.passed, r.to_string())
    }));

    let tank = ThreeTankParams::default();
    let tank_problem = three_tank_problem(&tank, THREE_TANK_X0, THREE_TANK_TF);
    let rdv = RendezvousParams::default();
    let rdv_problem = rendezvous_problem(&rdv, RENDEZVOUS_TF);
    let rdv_emb = rdv.embedding().unwrap();
    let cfg = MeocpConfig::default();

    let start = Instant::now();
    let tank_sol = solve_meocp(&tank_problem, tank.embedding(), &cfg);
    let tank_secs = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let rdv_sol = solve_meocp(&rdv_problem, rdv_emb, &cfg);
    let rdv_secs = start.elapsed().as_secs_f64();

    results.push(timed(6, "bang-bang realization", 600.0, || {
        match (&tank_sol, &rdv_sol) {
            (Ok(a), Ok(b)) => {
                let (oa, da) = bang_bang_report("three-tank", a, 4);
                let (ob, db) = bang_bang_report("rendezvous", b, 5);
                (oa && ob, format!("{da}; {db}"))
            }
            (a, b) => (
                false,
                format!("solve failed: {:?} {:?}", a.as_ref().err(), b.as_ref().err()),
            ),
        }
    }));

    results.push(timed(7, "three-tank vs mode insertion", 600.0 - tank_secs, || {
        let Ok(sol) = &tank_sol else {
            return (false, "embedded solve failed".into());
        };
        let mig = |dt: f64| {
            mig_solve(
                &tank_problem,
                &MigConfig {
                    dt,
                    grid_count: 100,
                    ..Default::default()
                },
            )
        };
        match (mig(0.01), mig(0.001)) {
            (Ok(coarse), Ok(fine)) => {
                let a = sol.resimulated_cost <= 1.01 * coarse.cost;
                let b = fine.cost <= coarse.cost + 1e-10;
                (
                    a && b,
                    format!(
                        "embedded {:.6} vs MIG(0.01) {:.6} [{}]; MIG(0.001) {:.6} ≤ MIG(0.01) [{}]",
                        sol.resimulated_cost,
                        coarse.cost,
                        if a { "ok" } else { "fail" },
                        fine.cost,
                        if b { "ok" } else { "fail" }
                    ),
                )
            }
            (a, b) => (false, format!("MIG failed: {:?} {:?}", a.err(), b.err())),
        }
    }));

    results.push(timed(8, "rendezvous", 600.0 - rdv_secs, || {
        let Ok(sol) = &rdv_sol else {
            return (false, "embedded solve failed".into());
        };
        let xf = sol.trajectory.states.last().unwrap();
        let pos = xf[0].hypot(xf[1]);
        let bounds = rdv_problem.state_bounds().unwrap();
        let nodes_inside = sol.trajectory.states.iter().all(|x| bounds.contains(x, 1e-6));
        let sim = simulate_schedule(&rdv_problem, &sol.schedule, StepRule::MaxStep(1e-3)).unwrap();
        let sim_inside = sim.states.iter().all(|x| bounds.contains(x, 1e-6));
        let modes_ok = sol.schedule.modes().iter().all(|q| q.value() < 5);
        let invalid = sol.trajectory.max_invalid_weight(&rdv_emb);
        let ok = pos <= 0.01 && nodes_inside && sim_inside && modes_ok && invalid <= 1e-3;
        (
            ok,
            format!(
                "terminal position {pos:.2e}, inside Ω: nodes {nodes_inside} re-simulated {sim_inside}, \
                 modes ⊆ 0..5 {modes_ok}, invalid weight {invalid:.1e}"
            ),
        )
    }));

    results.push(timed(9, "quadrature and integrator orders", 10.0, || {
        let p = smooth_problem();
        let exact = smooth_exact(p.tf());
        let steps = [10, 20, 40, 80];
        let trap: Vec<f64> = steps
            .iter()
            .map(|&n| {
                let sys = EmbeddedSystem::new(p.clone(), EmbeddingConfig::new(2, 0.0).unwrap()).unwrap();
                let nlp = build_nlp(sys, Mesh::uniform(0.0, p.tf(), n).unwrap(), Scheme::Trapezoidal).unwrap();
                let z = nlp.forward_fill(&nlp.initial_guess(None)).unwrap();
                (nlp.layout().state(&z, n)[0] - exact).abs()
            })
            .collect();
        let rk4: Vec<f64> = steps
            .iter()
            .map(|&n| {
                let s = SwitchSchedule::constant(ModeIndex::new(0, 2).unwrap(), 0.0, p.tf()).unwrap();
                let sim = simulate_schedule(&p, &s, StepRule::PerInterval(n)).unwrap();
                (sim.final_state()[0] - exact).abs()
            })
            .collect();
        let (ot, or) = (order(&steps, &trap), order(&steps, &rk4));
        (
            (ot - 2.0).abs() <= 0.2 && (or - 4.0).abs() <= 0.3,
            format!(
                "trapezoidal {ot:.3}, RK4 {or:.3} (errors {} | {})",
                sci(&trap),
                sci(&rk4)
            ),
        )
    }));

    results.push(timed(10, "determinism", 120.0, || {
        let dir = tempfile::tempdir().unwrap();
        // Same output directory both times, so the echoed config matches too.
        let summary = |_run: &str| -> Result<Value, String> {
            let cfg = RunConfig {
                problem: "rendezvous".into(),
                method: Method::Meocp,
                seed: 7,
                out: dir.path().to_path_buf(),
                ..Default::default()
            };
            run(&cfg).map_err(|e| e.to_string())?;
            let text = std::fs::read_to_string(dir.path().join("summary.json")).map_err(|e| e.to_string())?;
            let mut v: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
            strip_timing(&mut v);
            Ok(v)
        };
        match (summary("a"), summary("b")) {
            (Ok(a), Ok(b)) => {
                let (sa, sb) = (a.to_string(), b.to_string());
                (sa == sb, format!("{} bytes, identical: {}", sa.len(), sa == sb))
            }
            (a, b) => (false, format!("run failed: {:?} {:?}", a.err(), b.err())),
        }
    }));

    let mut failed = 0;
    for c in &results {
        println!(
            "{} criterion {:>2} {:<34} {:>7.2}s  {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            c.seconds,
            c.detail
        );
        failed += usize::from(!c.passed);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
