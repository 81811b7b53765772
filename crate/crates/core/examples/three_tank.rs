//! Three-tank benchmark solved through the binary embedding.
//!
//! `cargo run --release --example three_tank [N]`

use switchembed::bench::{three_tank_problem, ThreeTankParams, THREE_TANK_TF, THREE_TANK_X0};
use switchembed::meocp::{solve_meocp, MeocpConfig};

fn main() -> switchembed::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let params = ThreeTankParams::default();
    let problem = three_tank_problem(&params, THREE_TANK_X0, THREE_TANK_TF);
    let cfg = MeocpConfig {
        intervals: n,
        ..Default::default()
    };
    let sol = solve_meocp(&problem, params.embedding(), &cfg)?;

    for s in &sol.stages {
        println!(
            "alpha {:<6} {:<10} objective {:.6}",
            s.alpha,
            s.status.to_string(),
            s.objective
        );
    }
    println!("objective (with penalty)  {:.6}", sol.objective);
    println!("penalty integral          {:.3e}", sol.penalty_integral);
    println!("re-simulated cost         {:.6}", sol.resimulated_cost);
    println!("bang-bang fraction (0.02) {:.3}", sol.bang_bang_fraction(0.02));

    let s = sol.schedule.merged();
    println!("\n{} switches", s.switch_count());
    for (k, q) in s.modes().iter().enumerate() {
        let (p1, p2) = params.pumps(q.value());
        println!(
            "  [{:6.3}, {:6.3})  mode {q}  pumps ({p1}, {p2})",
            s.times()[k],
            s.times()[k + 1]
        );
    }
    Ok(())
}
