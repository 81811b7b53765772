//! Recovery of a switched schedule from a solved embedded trajectory.
//!
//! Each node is rounded to its nearest valid vertex. Node `j` owns the cell
//! between the midpoints of its neighbouring mesh intervals, so a mode change
//! between nodes `j` and `j + 1` becomes a switch at the midpoint of that
//! interval. This matches how the trapezoidal rule splits each interval
//! between its two end nodes.

use crate::encoding::{weight_unchecked, EmbeddingConfig, ModeIndex};
use crate::error::{Error, Result};
use crate::problem::SwitchSchedule;
use crate::transcribe::NlpProblem;

/// Node data of a solved embedded problem.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Per node, the `M·m` stacked mode controls.
    pub controls: Vec<Vec<f64>>,
    pub switches: Vec<Vec<f64>>,
}

impl EmbeddedTrajectory {
    pub fn new(
        times: Vec<f64>,
        states: Vec<Vec<f64>>,
        controls: Vec<Vec<f64>>,
        switches: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = times.len();
        if n < 2 {
            return Err(Error::Mesh("trajectory needs at least two nodes".into()));
        }
        if states.len() != n || controls.len() != n || switches.len() != n {
            return Err(Error::Domain("trajectory arrays differ in length".into()));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Mesh("trajectory times must increase strictly".into()));
        }
        if let Some(j) = switches.iter().position(|v| v.iter().any(|x| !(0.0..=1.0).contains(x))) {
            return Err(Error::Domain(format!("switching variable outside [0, 1] at node {j}")));
        }
        Ok(EmbeddedTrajectory {
            times,
            states,
            controls,
            switches,
        })
    }

    /// Reads the node slices out of a decision vector. Switching variables
    /// are clamped to `[0, 1]`.
    pub fn from_nlp(nlp: &NlpProblem, z: &[f64]) -> Self {
        let layout = nlp.layout();
        let off = layout.switch_offset;
        let mut states = Vec::with_capacity(layout.nodes);
        let mut controls = Vec::with_capacity(layout.nodes);
        let mut switches = Vec::with_capacity(layout.nodes);
        for j in 0..layout.nodes {
            states.push(layout.state(z, j).to_vec());
            let u = layout.control(z, j);
            controls.push(u[..off].to_vec());
            switches.push(u[off..].iter().map(|v| v.clamp(0.0, 1.0)).collect());
        }
        EmbeddedTrajectory {
            times: nlp.mesh().times().to_vec(),
            states,
            controls,
            switches,
        }
    }

    pub fn node_count(&self) -> usize {
        self.times.len()
    }

    /// Rounded mode at every node.
    pub fn node_modes(&self, cfg: &EmbeddingConfig) -> Vec<ModeIndex> {
        self.switches.iter().map(|v| round_node(v, cfg)).collect()
    }

    /// Largest total weight on invalid vertices over all nodes.
    pub fn max_invalid_weight(&self, cfg: &EmbeddingConfig) -> f64 {
        self.switches.iter().map(|v| cfg.invalid_weight(v)).fold(0.0, f64::max)
    }
}

/// Nearest valid vertex in Euclidean distance; ties go to the smaller index.
pub fn round_node(v: &[f64], cfg: &EmbeddingConfig) -> ModeIndex {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for k in 0..cfg.mode_count() {
        let d: f64 = v
            .iter()
            .enumerate()
            .map(|(i, &vi)| {
                let bit = ((k >> i) & 1) as f64;
                (vi - bit) * (vi - bit)
            })
            .sum();
        if d < best_d {
            best = k;
            best_d = d;
        }
    }
    ModeIndex::new_unchecked(best)
}

/// Rounds every node and merges runs of equal modes. Intervals carry the
/// rounded mode's control at the owning node.
pub fn extract_schedule(traj: &EmbeddedTrajectory, cfg: &EmbeddingConfig) -> Result<SwitchSchedule> {
    let n = traj.node_count();
    let modes = traj.node_modes(cfg);
    let m = traj.controls[0].len() / cfg.mode_count();
    let mut times = Vec::with_capacity(n + 1);
    times.push(traj.times[0]);
    for j in 0..n - 1 {
        times.push(0.5 * (traj.times[j] + traj.times[j + 1]));
    }
    times.push(traj.times[n - 1]);
    let controls = modes
        .iter()
        .zip(&traj.controls)
        .map(|(q, u)| u[q.value() * m..(q.value() + 1) * m].to_vec())
        .collect();
    Ok(SwitchSchedule::new(modes, times, controls)?.merged())
}

/// Share of `(node, bit)` pairs within `eps` of a binary value.
pub fn bang_bang_fraction(traj: &EmbeddedTrajectory, eps: f64) -> f64 {
    let mut total = 0usize;
    let mut hits = 0usize;
    for v in &traj.switches {
        for &vi in v {
            total += 1;
            if vi.min(1.0 - vi) <= eps {
                hits += 1;
            }
        }
    }
    if total == 0 {
        1.0
    } else {
        hits as f64 / total as f64
    }
}

/// Weight of vertex `k` at every node.
pub fn vertex_weight_profile(traj: &EmbeddedTrajectory, k: usize) -> Vec<f64> {
    traj.switches.iter().map(|v| weight_unchecked(k, v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::EmbeddedSystem;
    use crate::encoding::encode;
    use crate::problem::{evaluate_schedule_cost, Mode, SwitchedProblem};
    use crate::transcribe::{build_nlp, Mesh, Scheme};

    fn traj(switches: Vec<Vec<f64>>) -> EmbeddedTrajectory {
        let n = switches.len();
        EmbeddedTrajectory::new(
            (0..n).map(|j| j as f64 / (n - 1) as f64).collect(),
            vec![vec![0.0]; n],
            vec![Vec::new(); n],
            switches,
        )
        .unwrap()
    }

    #[test]
    fn rounding_examples() {
        let cfg5 = EmbeddingConfig::new(5, 0.1).unwrap();
        assert_eq!(round_node(&[1.0, 1.0, 0.0], &cfg5).value(), 3);
        assert_eq!(round_node(&[0.9, 0.9, 0.9], &cfg5).value(), 3);
        let cfg2 = EmbeddingConfig::new(2, 0.1).unwrap();
        assert_eq!(round_node(&[0.5], &cfg2).value(), 0);
        for k in 0..5 {
            assert_eq!(round_node(&encode(k, 3), &cfg5).value(), k);
        }
    }

    #[test]
    fn rounding_matches_exhaustive_distance() {
        let cfg = EmbeddingConfig::new(5, 0.1).unwrap();
        let grid = [0.0, 0.2, 0.5, 0.8, 1.0];
        for &a in &grid {
            for &b in &grid {
                for &c in &grid {
                    let v = [a, b, c];
                    let d = |k: usize| -> f64 { encode(k, 3).iter().zip(&v).map(|(x, y)| (x - y) * (x - y)).sum() };
                    let q = round_node(&v, &cfg).value();
                    assert!(q < 5);
                    for k in 0..5 {
                        assert!(d(q) <= d(k));
                        if d(k) == d(q) {
                            assert!(q <= k);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn constant_vertex_gives_single_interval() {
        let cfg = EmbeddingConfig::new(4, 0.1).unwrap();
        let t = traj(vec![encode(2, 2); 7]);
        let s = extract_schedule(&t, &cfg).unwrap();
        assert_eq!(s.interval_count(), 1);
        assert_eq!(s.modes()[0].value(), 2);
        assert_eq!(s.switch_count(), 0);
        assert_eq!(s.times(), &[0.0, 1.0]);
    }

    #[test]
    fn alternating_nodes_switch_every_interval() {
        let cfg = EmbeddingConfig::new(2, 0.1).unwrap();
        let n = 6;
        let t = traj((0..=n).map(|j| vec![(j % 2) as f64]).collect());
        let s = extract_schedule(&t, &cfg).unwrap();
        assert_eq!(s.switch_count(), n);
        for j in 0..n {
            let mid = 0.5 * (t.times[j] + t.times[j + 1]);
            assert!((s.times()[j + 1] - mid).abs() < 1e-15);
        }
    }

    #[test]
    fn bang_bang_fractions() {
        assert_eq!(bang_bang_fraction(&traj(vec![vec![0.0, 1.0]; 4]), 0.01), 1.0);
        assert_eq!(bang_bang_fraction(&traj(vec![vec![0.5, 0.5]; 4]), 0.01), 0.0);
        let half = traj(vec![vec![1.0], vec![0.5], vec![0.0], vec![0.4]]);
        assert_eq!(bang_bang_fraction(&half, 0.01), 0.5);
    }

    #[test]
    fn rejects_out_of_box() {
        let r = EmbeddedTrajectory::new(
            vec![0.0, 1.0],
            vec![vec![0.0]; 2],
            vec![Vec::new(); 2],
            vec![vec![0.5], vec![1.5]],
        );
        assert!(r.is_err());
    }

    #[test]
    fn bang_bang_collocation_matches_resimulation() {
        // Mode sequence 0 on the first half, 1 afterwards, states filled by
        // the defect equations; both costs converge to the same value.
        let p = SwitchedProblem::builder(1, 0)
            .mode(Mode::new(|_, x, _, dx| dx[0] = -x[0], |_, x, _| x[0] * x[0]))
            .mode(Mode::new(|_, x, _, dx| dx[0] = 1.0 - 2.0 * x[0], |_, x, _| x[0] * x[0]))
            .horizon(0.0, 1.0)
            .initial_state(vec![1.0])
            .build();
        let cfg = EmbeddingConfig::new(2, 0.1).unwrap();
        let sys = EmbeddedSystem::new(p.clone(), cfg).unwrap();
        let mut errs = Vec::new();
        for n in [40, 80, 160] {
            let nlp = build_nlp(sys.clone(), Mesh::uniform(0.0, 1.0, n).unwrap(), Scheme::Trapezoidal).unwrap();
            let mut z = nlp.initial_guess(None);
            for j in 0..=n {
                let off = nlp.layout().switch_offset_of(j);
                z[off] = if 2 * j <= n { 0.0 } else { 1.0 };
            }
            let z = nlp.forward_fill(&z).unwrap();
            let obj = nlp.objective(&z).unwrap();
            let s = extract_schedule(&EmbeddedTrajectory::from_nlp(&nlp, &z), &cfg).unwrap();
            assert_eq!(s.switch_count(), 1);
            let j = evaluate_schedule_cost(&p, &s, 400).unwrap();
            errs.push((obj - j).abs());
        }
        assert!(errs[2] < 1e-4);
        let slope = (errs[0] / errs[2]).log2() / 2.0;
        assert!((slope - 2.0).abs() < 0.3, "slope {slope}, errors {errs:?}");
    }
}
