//! Compares the embedded solve of a scalar two-mode problem with the best
//! of all 64 mode sequences on six equal intervals.
//!
//! `cargo run --release --example brute_force_check`

use switchembed::verify::{brute_force_minimum, oracle_comparison, oracle_problem};

fn main() -> switchembed::Result<()> {
    let (best, schedule) = brute_force_minimum(&oracle_problem(), 6, 400)?;
    let modes: Vec<usize> = schedule.modes().iter().map(|q| q.value()).collect();
    println!("enumerated minimum       {best:.8}  sequence {modes:?}");

    let c = oracle_comparison()?;
    println!("embedded, no penalty     {:.8}", c.embedded_without_penalty);
    println!("extracted, re-simulated  {:.8}", c.resimulated);
    println!("gap                      {:.2e}", (c.resimulated - best) / best);
    Ok(())
}
