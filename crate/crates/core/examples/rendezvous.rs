//! Planar rendezvous with five thrust modes (three bits, three invalid
//! codes removed by the penalty).
//!
//! `cargo run --release --example rendezvous`

use switchembed::bench::{rendezvous_problem, RendezvousParams, RENDEZVOUS_TF};
use switchembed::meocp::{solve_meocp, MeocpConfig};

fn main() -> switchembed::Result<()> {
    let params = RendezvousParams::default();
    let problem = rendezvous_problem(&params, RENDEZVOUS_TF);
    let emb = params.embedding()?;
    let sol = solve_meocp(&problem, emb, &MeocpConfig::default())?;

    let xf = sol.trajectory.states.last().unwrap();
    println!("status                 {}", sol.status);
    println!("objective              {:.6}", sol.objective);
    println!("re-simulated cost      {:.6}", sol.resimulated_cost);
    println!("terminal position      ({:+.2e}, {:+.2e})", xf[0], xf[1]);
    println!("max invalid weight     {:.1e}", sol.trajectory.max_invalid_weight(&emb));
    println!(
        "time unit              {:.1} s (orbital time constant {:.1} s)",
        params.time_unit_s,
        params.orbital_time_constant()
    );

    let names = ["coast", "+x", "-x", "+y", "-y"];
    let s = sol.schedule.merged();
    for (k, q) in s.modes().iter().enumerate() {
        println!("  [{:.3}, {:.3})  {}", s.times()[k], s.times()[k + 1], names[q.value()]);
    }
    Ok(())
}
