//! Solving a user-defined switched linear-quadratic problem loaded from
//! JSON. Three modes need two bits; code 3 is invalid and penalized.
//!
//! `cargo run --release --example custom_problem [path.json]`

use switchembed::bench::LinearProblemSpec;
use switchembed::meocp::{solve_meocp, MeocpConfig};
use switchembed::transcribe::Scheme;
use switchembed::EmbeddingConfig;

fn main() -> switchembed::Result<()> {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path)?,
        None => include_str!("data/three_mode_oscillator.json").to_string(),
    };
    let problem = LinearProblemSpec::from_json(&text)?.to_problem()?;
    println!(
        "{}: {} modes, {} states",
        problem.name(),
        problem.mode_count(),
        problem.state_dim()
    );

    let emb = EmbeddingConfig::with_weights(problem.mode_count(), 0.1, 1.0)?;
    let cfg = MeocpConfig {
        intervals: 80,
        scheme: Scheme::HermiteSimpson,
        ..Default::default()
    };
    let sol = solve_meocp(&problem, emb, &cfg)?;
    println!(
        "status {}, objective {:.6}, re-simulated {:.6}",
        sol.status, sol.objective, sol.resimulated_cost
    );
    println!("max invalid weight {:.1e}", sol.trajectory.max_invalid_weight(&emb));
    let s = sol.schedule.merged();
    for (k, q) in s.modes().iter().enumerate() {
        println!("  [{:.3}, {:.3})  mode {q}", s.times()[k], s.times()[k + 1]);
    }
    Ok(())
}
