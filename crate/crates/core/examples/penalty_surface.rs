//! Prints the two-bit penalty `L_4` and `L_3` on a grid over `[0, 1]²` as
//! CSV, for plotting. The `L_3` surface shows the extra β term that lifts
//! the unused corner `v = (1, 1)`.
//!
//! `cargo run --example penalty_surface > surface.csv`

use switchembed::encoding::{vertex_weight, EmbeddingConfig};

fn main() -> switchembed::Result<()> {
    let four = EmbeddingConfig::new(4, 1.0)?;
    let three = EmbeddingConfig::with_weights(3, 1.0, 2.0)?;
    let steps = 20;
    println!("v0,v1,L4,L3,V3");
    for i in 0..=steps {
        for j in 0..=steps {
            let v = [i as f64 / steps as f64, j as f64 / steps as f64];
            println!(
                "{},{},{:.12},{:.12},{:.12}",
                v[0],
                v[1],
                four.penalty(&v)?,
                three.penalty(&v)?,
                vertex_weight(3, &v)?
            );
        }
    }
    Ok(())
}
