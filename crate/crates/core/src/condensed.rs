//! The transcribed problem with the states eliminated.
//!
//! Decision variables are the node controls `(u, v)` only. States follow by
//! solving the defect equations interval by interval, so every iterate is
//! dynamically feasible, and gradients come from the discrete adjoint of
//! those equations. Finite state bounds become inequality constraints.

use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::linalg;
use crate::solver::Nlp;
use crate::transcribe::NlpProblem;

#[derive(Debug, Clone, Copy, PartialEq)]
struct StateBound {
    node: usize,
    comp: usize,
    /// `+1` for `x ≤ bound`, `−1` for `x ≥ bound`.
    sign: f64,
    bound: f64,
}

#[derive(Debug)]
pub struct CondensedNlp {
    full: NlpProblem,
    lower: Vec<f64>,
    upper: Vec<f64>,
    bounds: Vec<StateBound>,
    cache: Mutex<Option<(Vec<f64>, Vec<f64>)>>,
}

impl Clone for CondensedNlp {
    fn clone(&self) -> Self {
        CondensedNlp {
            full: self.full.clone(),
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            bounds: self.bounds.clone(),
            cache: Mutex::new(None),
        }
    }
}

impl CondensedNlp {
    pub fn new(full: NlpProblem) -> Self {
        let layout = *full.layout();
        let (n, nu, s) = (layout.state_dim, layout.control_len, layout.stride());
        let mut lower = Vec::with_capacity(layout.nodes * nu);
        let mut upper = Vec::with_capacity(layout.nodes * nu);
        let mut bounds = Vec::new();
        for j in 0..layout.nodes {
            lower.extend_from_slice(&full.lower()[j * s + n..(j + 1) * s]);
            upper.extend_from_slice(&full.upper()[j * s + n..(j + 1) * s]);
            if j == 0 {
                continue;
            }
            for i in 0..n {
                let (lo, hi) = (full.lower()[j * s + i], full.upper()[j * s + i]);
                if hi.is_finite() {
                    bounds.push(StateBound {
                        node: j,
                        comp: i,
                        sign: 1.0,
                        bound: hi,
                    });
                }
                if lo.is_finite() {
                    bounds.push(StateBound {
                        node: j,
                        comp: i,
                        sign: -1.0,
                        bound: lo,
                    });
                }
            }
        }
        CondensedNlp {
            full,
            lower,
            upper,
            bounds,
            cache: Mutex::new(None),
        }
    }

    pub fn full(&self) -> &NlpProblem {
        &self.full
    }

    /// Controls of a full decision vector.
    pub fn controls_of(&self, z: &[f64]) -> Vec<f64> {
        let layout = self.full.layout();
        (0..layout.nodes).flat_map(|j| layout.control(z, j).to_vec()).collect()
    }

    /// Full decision vector with states filled from the defect equations.
    pub fn expand(&self, w: &[f64]) -> Result<Vec<f64>> {
        if let Some((cw, cz)) = self.cache.lock().unwrap().as_ref() {
            if cw.as_slice() == w {
                return Ok(cz.clone());
            }
        }
        let layout = self.full.layout();
        let (n, nu, s) = (layout.state_dim, layout.control_len, layout.stride());
        let mut z = vec![0.0; layout.dim()];
        for j in 0..layout.nodes {
            z[j * s + n..(j + 1) * s].copy_from_slice(&w[j * nu..(j + 1) * nu]);
        }
        let z = self.full.forward_fill(&z)?;
        *self.cache.lock().unwrap() = Some((w.to_vec(), z.clone()));
        Ok(z)
    }

    /// Gradient in `w` of `J + Σ loads·x` through the adjoint of the
    /// defect equations; `state_loads` is indexed like the full vector's
    /// state slices (`nodes × n`).
    fn reduced_gradient(&self, z: &[f64], state_loads: &[f64], grad: &mut [f64]) -> Result<()> {
        let nlp = &self.full;
        let layout = nlp.layout();
        let (n, nu, s) = (layout.state_dim, layout.control_len, layout.stride());
        let nodes = nlp.node_evals(z, true)?;
        let mids = nlp.mid_evals(z, &nodes, true)?;
        let intervals = nlp.mesh().interval_count();
        let mut g_full = vec![0.0; layout.dim()];
        let mut blocks = Vec::with_capacity(intervals);
        for j in 0..intervals {
            let (left, right, gl, gr) = nlp.interval_derivatives(j, &nodes, &mids);
            for c in 0..s {
                g_full[j * s + c] += gl[c];
                g_full[(j + 1) * s + c] += gr[c];
            }
            blocks.push((left, right));
        }
        nlp.terminal_gradient_into(z, &mut g_full);
        for j in 0..layout.nodes {
            for i in 0..n {
                g_full[j * s + i] += state_loads[j * n + i];
            }
        }
        // μ_{k−1} from node k's state stationarity, sweeping backwards.
        let mut mu = vec![vec![0.0; n]; intervals];
        for k in (1..=intervals).rev() {
            let mut rhs: Vec<f64> = (0..n).map(|i| -g_full[k * s + i]).collect();
            if k < intervals {
                let (left, _) = &blocks[k];
                for c in 0..n {
                    for r in 0..n {
                        rhs[c] -= left[r * s + c] * mu[k][r];
                    }
                }
            }
            let (_, right) = &blocks[k - 1];
            let mut at: Vec<f64> = (0..n * n).map(|e| right[(e % n) * s + e / n]).collect();
            if !linalg::solve_in_place(&mut at, &mut rhs, n) {
                return Err(Error::Singular(format!("adjoint block at node {k}")));
            }
            mu[k - 1] = rhs;
        }
        for j in 0..layout.nodes {
            for c in 0..nu {
                let col = n + c;
                let mut v = g_full[j * s + col];
                if j < intervals {
                    let (left, _) = &blocks[j];
                    v += (0..n).map(|r| left[r * s + col] * mu[j][r]).sum::<f64>();
                }
                if j > 0 {
                    let (_, right) = &blocks[j - 1];
                    v += (0..n).map(|r| right[r * s + col] * mu[j - 1][r]).sum::<f64>();
                }
                grad[j * nu + c] = v;
            }
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NlpNonFinite {
                node: 0,
                detail: "reduced gradient is not finite".into(),
            });
        }
        Ok(())
    }
}

impl Nlp for CondensedNlp {
    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn constraint_count(&self) -> usize {
        self.bounds.len()
    }

    fn equality_count(&self) -> usize {
        0
    }

    fn lower_bounds(&self) -> &[f64] {
        &self.lower
    }

    fn upper_bounds(&self) -> &[f64] {
        &self.upper
    }

    fn values(&self, w: &[f64], c: &mut [f64]) -> Result<f64> {
        let z = self.expand(w)?;
        let layout = self.full.layout();
        for (k, b) in self.bounds.iter().enumerate() {
            c[k] = b.sign * (layout.state(&z, b.node)[b.comp] - b.bound);
        }
        self.full.objective(&z)
    }

    fn lagrangian_gradient(&self, w: &[f64], y: &[f64], grad: &mut [f64]) -> Result<()> {
        let z = self.expand(w)?;
        let n = self.full.layout().state_dim;
        let mut loads = vec![0.0; self.full.layout().nodes * n];
        for (b, &yk) in self.bounds.iter().zip(y) {
            loads[b.node * n + b.comp] += b.sign * yk;
        }
        self.reduced_gradient(&z, &loads, grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::EmbeddedSystem;
    use crate::encoding::EmbeddingConfig;
    use crate::problem::{Bounds, Mode, SwitchedProblem, TerminalCost};
    use crate::transcribe::{build_nlp, Mesh, Scheme};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn system() -> EmbeddedSystem {
        let p = SwitchedProblem::builder(2, 1)
            .mode(Mode::new(
                |_, x, u, dx| {
                    dx[0] = x[1];
                    dx[1] = -x[0].sin() + u[0];
                },
                |_, x, u| x[0] * x[0] + 0.1 * u[0] * u[0],
            ))
            .mode(Mode::new(
                |t, x, u, dx| {
                    dx[0] = -0.5 * x[0] + t;
                    dx[1] = x[0] * x[1] - u[0];
                },
                |_, x, _| (x[1] - 1.0).powi(2),
            ))
            .mode(Mode::new(
                |_, x, u, dx| {
                    dx[0] = u[0] * x[1];
                    dx[1] = 0.3;
                },
                |_, x, u| x[0] * x[1] + u[0],
            ))
            .terminal_cost(TerminalCost::new(|_, _, _, xf| xf[0] * xf[0] + 3.0 * xf[1]))
            .horizon(0.0, 1.0)
            .initial_state(vec![0.4, -0.2])
            .control_bounds(Bounds::symmetric(1.0, 1))
            .state_bounds(Bounds::new(vec![-5.0, f64::NEG_INFINITY], vec![5.0, 2.0]))
            .build();
        EmbeddedSystem::new(p, EmbeddingConfig::new(3, 0.3).unwrap()).unwrap()
    }

    fn random_w(nlp: &CondensedNlp, rng: &mut ChaCha8Rng) -> Vec<f64> {
        nlp.lower_bounds()
            .iter()
            .zip(nlp.upper_bounds())
            .map(|(&l, &h)| l + (h - l) * rng.gen_range(0.1..0.9))
            .collect()
    }

    #[test]
    fn expansion_is_feasible() {
        for scheme in [Scheme::Trapezoidal, Scheme::HermiteSimpson] {
            let full = build_nlp(system(), Mesh::uniform(0.0, 1.0, 12).unwrap(), scheme).unwrap();
            let nlp = CondensedNlp::new(full);
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let w = random_w(&nlp, &mut rng);
            let z = nlp.expand(&w).unwrap();
            assert!(linalg::norm_inf(&nlp.full().defects(&z).unwrap()) < 1e-12);
            assert_eq!(nlp.controls_of(&z), w);
            // three finite bounds per node after the first
            assert_eq!(nlp.constraint_count(), 12 * 3);
        }
    }

    #[test]
    fn reduced_gradient_matches_fd() {
        for scheme in [Scheme::Trapezoidal, Scheme::HermiteSimpson] {
            let full = build_nlp(system(), Mesh::uniform(0.0, 1.0, 10).unwrap(), scheme).unwrap();
            let nlp = CondensedNlp::new(full);
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let m = nlp.constraint_count();
            for _ in 0..5 {
                let w = random_w(&nlp, &mut rng);
                let y: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
                let lag = |w: &[f64]| {
                    let mut c = vec![0.0; m];
                    let f = nlp.values(w, &mut c).unwrap();
                    f + linalg::dot(&y, &c)
                };
                let mut g = vec![0.0; w.len()];
                nlp.lagrangian_gradient(&w, &y, &mut g).unwrap();
                for i in 0..w.len() {
                    let h = 1e-6;
                    let mut wp = w.clone();
                    let mut wm = w.clone();
                    wp[i] += h;
                    wm[i] -= h;
                    let fd = (lag(&wp) - lag(&wm)) / (2.0 * h);
                    let err = (fd - g[i]).abs() / (1.0 + fd.abs());
                    assert!(err < 1e-6, "{scheme} i={i}: fd {fd} analytic {}", g[i]);
                }
            }
        }
    }
}
