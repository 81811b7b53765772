//! Mode insertion gradient baseline on the three-tank problem, swept over
//! the time step, next to the embedded solve.
//!
//! `cargo run --release --example mig_baseline`

use std::time::Instant;

use switchembed::bench::{three_tank_problem, ThreeTankParams, THREE_TANK_TF, THREE_TANK_X0};
use switchembed::meocp::{solve_meocp, MeocpConfig};
use switchembed::mig::{mig_solve, MigConfig};

fn main() -> switchembed::Result<()> {
    let params = ThreeTankParams::default();
    let problem = three_tank_problem(&params, THREE_TANK_X0, THREE_TANK_TF);

    println!("{:>8} {:>12} {:>11} {:>9}", "dt", "cost", "insertions", "time [s]");
    for dt in [0.01, 0.005, 0.002, 0.001] {
        let start = Instant::now();
        let r = mig_solve(
            &problem,
            &MigConfig {
                dt,
                ..Default::default()
            },
        )?;
        println!(
            "{dt:>8} {:>12.6} {:>11} {:>9.2}",
            r.cost,
            r.insertions(),
            start.elapsed().as_secs_f64()
        );
    }

    let start = Instant::now();
    let sol = solve_meocp(&problem, params.embedding(), &MeocpConfig::default())?;
    println!(
        "\nembedded, N = 200: cost {:.6} in {:.2} s",
        sol.resimulated_cost,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
