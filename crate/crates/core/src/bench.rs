//! Benchmark problems: the three-tank system, planar rendezvous in the
//! rotating local frame, and a JSON-described linear-quadratic family.

use serde::{Deserialize, Serialize};

use crate::encoding::EmbeddingConfig;
use crate::error::{Error, Result};
use crate::problem::{Bounds, Mode, SwitchedProblem, TerminalCost};

/// Gravitational parameter of Earth, km³/s².
pub const EARTH_MU: f64 = 3.986e5;

/// Three-tank coefficients. Mode `k` runs pump 1 at `levels[k & 1]` and
/// pump 2 at `levels[(k >> 1) & 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreeTankParams {
    pub c: [f64; 3],
    pub levels: [f64; 2],
    pub target: [f64; 3],
    pub d1: f64,
    pub d2: f64,
    pub alpha: f64,
}

impl Default for ThreeTankParams {
    fn default() -> Self {
        ThreeTankParams {
            c: [1.0, 1.0, 2.0],
            levels: [1.0, 2.0],
            target: [1.0, 1.0, 3.0],
            d1: 3.0,
            d2: 1.0,
            alpha: 0.1,
        }
    }
}

pub const THREE_TANK_X0: [f64; 3] = [2.0, 2.0, 2.0];
pub const THREE_TANK_TF: f64 = 10.0;

impl ThreeTankParams {
    pub fn embedding(&self) -> EmbeddingConfig {
        EmbeddingConfig::new(4, self.alpha).expect("four modes")
    }

    /// Pump rates `(V_p1, V_p2)` of mode `k`.
    pub fn pumps(&self, k: usize) -> (f64, f64) {
        (self.levels[k & 1], self.levels[(k >> 1) & 1])
    }
}

/// `√max(x, 0)` and its derivative, taken as zero for `x ≤ 0`.
fn guarded_sqrt(x: f64) -> (f64, f64) {
    if x > 0.0 {
        let s = x.sqrt();
        (s, 0.5 / s)
    } else {
        (0.0, 0.0)
    }
}

pub fn three_tank_problem(params: &ThreeTankParams, x0: [f64; 3], tf: f64) -> SwitchedProblem {
    let modes = (0..4).map(|k| {
        let (p1, p2) = params.pumps(k);
        let c = params.c;
        let (d1, d2, x3d) = (params.d1, params.d2, params.target[2]);
        Mode::new(
            move |_, x, _, dx| {
                let s: Vec<f64> = x.iter().map(|&xi| guarded_sqrt(xi).0).collect();
                dx[0] = p1 - c[0] * s[0];
                dx[1] = p2 - c[1] * s[1];
                dx[2] = c[0] * s[0] + c[1] * s[1] - c[2] * s[2];
            },
            move |_, x, _| d1 * (x[2] - x3d).powi(2) + d2 * (x[1] - x[0]).powi(2),
        )
        .with_dynamics_jacobian(move |_, x, _, a, _| {
            let ds: Vec<f64> = x.iter().map(|&xi| guarded_sqrt(xi).1).collect();
            a.fill(0.0);
            a[0] = -c[0] * ds[0];
            a[4] = -c[1] * ds[1];
            a[6] = c[0] * ds[0];
            a[7] = c[1] * ds[1];
            a[8] = -c[2] * ds[2];
        })
        .with_cost_gradient(move |_, x, _, lx, _| {
            let e = x[1] - x[0];
            lx[0] = -2.0 * d2 * e;
            lx[1] = 2.0 * d2 * e;
            lx[2] = 2.0 * d1 * (x[2] - x3d);
        })
    });
    SwitchedProblem::builder(3, 0)
        .name("three-tank")
        .modes(modes)
        .horizon(0.0, tf)
        .initial_state(x0.to_vec())
        .build()
}

/// Planar rendezvous data, nondimensional unless noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RendezvousParams {
    /// Chief orbit radius, km.
    pub radius_km: f64,
    /// Time unit, s.
    pub time_unit_s: f64,
    pub thrust: f64,
    pub q_diag: [f64; 4],
    /// `S = terminal_scale · Q`.
    pub terminal_scale: f64,
    pub xi0: [f64; 4],
    pub box_half_width: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for RendezvousParams {
    fn default() -> Self {
        RendezvousParams {
            radius_km: 21000.0,
            time_unit_s: 4820.0,
            thrust: 3.0,
            q_diag: [100.0, 100.0, 1.0, 1.0],
            terminal_scale: 10.0,
            xi0: [-0.119, 0.0, 0.0, 0.065],
            box_half_width: 0.35,
            // One mesh cell of thrust moves the terminal state enough that a
            // small α leaves fractional nodes at the optimum.
            alpha: 100.0,
            // Must exceed the largest running cost over the state box, or
            // parking on an invalid vertex (no motion, no cost) pays off.
            beta: 25.0,
        }
    }
}

/// Scaled horizon; the maneuver settles well before it ends.
pub const RENDEZVOUS_TF: f64 = 1.0;

impl RendezvousParams {
    pub fn embedding(&self) -> Result<EmbeddingConfig> {
        EmbeddingConfig::with_weights(5, self.alpha, self.beta)
    }

    /// Thrust vector of mode `k`: coast, +x, −x, +y, −y.
    pub fn thrust_vector(&self, k: usize) -> [f64; 2] {
        let u = self.thrust;
        [[0.0, 0.0], [u, 0.0], [-u, 0.0], [0.0, u], [0.0, -u]][k]
    }

    /// `√(R³/μ)` in seconds.
    pub fn orbital_time_constant(&self) -> f64 {
        (self.radius_km.powi(3) / EARTH_MU).sqrt()
    }

    /// Largest `ξᵀQξ` over the state box.
    pub fn max_box_running_cost(&self) -> f64 {
        self.q_diag.iter().sum::<f64>() * self.box_half_width.powi(2)
    }
}

/// Relative distance ratio to the attracting center.
fn rendezvous_radius(xi: &[f64]) -> f64 {
    ((1.0 + xi[0]).powi(2) + xi[1] * xi[1]).sqrt()
}

/// Drift part of the scaled relative dynamics.
pub fn rendezvous_drift(xi: &[f64], out: &mut [f64]) {
    let r = rendezvous_radius(xi);
    let g = 1.0 / r.powi(3) - 1.0;
    out[0] = xi[2];
    out[1] = xi[3];
    out[2] = 2.0 * xi[3] - (1.0 + xi[0]) * g;
    out[3] = -2.0 * xi[2] - xi[1] * g;
}

fn rendezvous_drift_jacobian(xi: &[f64], a: &mut [f64]) {
    let r = rendezvous_radius(xi);
    let g = 1.0 / r.powi(3) - 1.0;
    let r5 = r.powi(5);
    let (p, y) = (1.0 + xi[0], xi[1]);
    a.fill(0.0);
    a[2] = 1.0;
    a[7] = 1.0;
    a[8] = -g + 3.0 * p * p / r5;
    a[9] = 3.0 * p * y / r5;
    a[11] = 2.0;
    a[12] = 3.0 * y * p / r5;
    a[13] = -g + 3.0 * y * y / r5;
    a[14] = -2.0;
}

pub fn rendezvous_problem(params: &RendezvousParams, tf: f64) -> SwitchedProblem {
    let q = params.q_diag;
    let modes = (0..5).map(|k| {
        let u = params.thrust_vector(k);
        Mode::new(
            move |_, x, _, dx| {
                rendezvous_drift(x, dx);
                dx[2] += u[0];
                dx[3] += u[1];
            },
            move |_, x, _| (0..4).map(|i| q[i] * x[i] * x[i]).sum(),
        )
        .with_dynamics_jacobian(|_, x, _, a, _| rendezvous_drift_jacobian(x, a))
        .with_cost_gradient(move |_, x, _, lx, _| {
            for i in 0..4 {
                lx[i] = 2.0 * q[i] * x[i];
            }
        })
    });
    let s: [f64; 4] = q.map(|w| w * params.terminal_scale);
    let terminal = TerminalCost::new(move |_, _, _, xf| (0..4).map(|i| s[i] * xf[i] * xf[i]).sum()).with_gradient(
        move |_, _, _, xf, g| {
            for i in 0..4 {
                g[i] = 2.0 * s[i] * xf[i];
            }
        },
    );
    SwitchedProblem::builder(4, 0)
        .name("rendezvous")
        .modes(modes)
        .terminal_cost(terminal)
        .horizon(0.0, tf)
        .initial_state(params.xi0.to_vec())
        .state_bounds(Bounds::symmetric(params.box_half_width, 4))
        .build()
}

/// Checks the relative radius stays away from the attracting center.
pub fn check_rendezvous_state(xi: &[f64]) -> Result<()> {
    let r = rendezvous_radius(xi);
    if r < 1e-6 {
        return Err(Error::Singular(format!(
            "relative radius {r:e} at the attracting center"
        )));
    }
    Ok(())
}

/// Inertial-frame planar position (km) of the deputy at scaled time `t`,
/// with the chief on a circular orbit through `(R, 0)` at `t = 0`.
pub fn lvlh_to_inertial(params: &RendezvousParams, t: f64, xi: &[f64]) -> [f64; 2] {
    let (s, c) = t.sin_cos();
    let (x, y) = (1.0 + xi[0], xi[1]);
    [params.radius_km * (x * c - y * s), params.radius_km * (x * s + y * c)]
}

/// A switched linear-quadratic problem described in JSON:
/// mode `k` has `ẋ = A_k x + B_k u + c_k` and running cost
/// `(x − r)ᵀQ(x − r) + uᵀR u`; the terminal cost is `(x − r)ᵀS(x − r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearProblemSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub t0: f64,
    pub tf: f64,
    pub modes: Vec<LinearModeSpec>,
    /// Weight matrix; identity when absent.
    #[serde(default)]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub r: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub s: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub reference: Option<Vec<f64>>,
    #[serde(default)]
    pub control_lower: Option<Vec<f64>>,
    #[serde(default)]
    pub control_upper: Option<Vec<f64>>,
    #[serde(default)]
    pub state_lower: Option<Vec<f64>>,
    #[serde(default)]
    pub state_upper: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearModeSpec {
    pub a: Vec<Vec<f64>>,
    #[serde(default)]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub c: Option<Vec<f64>>,
}

fn flat_matrix(name: &str, m: &Option<Vec<Vec<f64>>>, rows: usize, cols: usize, identity: bool) -> Result<Vec<f64>> {
    match m {
        None => Ok((0..rows * cols)
            .map(|e| if identity && e / cols == e % cols { 1.0 } else { 0.0 })
            .collect()),
        Some(rows_v) => {
            if rows_v.len() != rows || rows_v.iter().any(|r| r.len() != cols) {
                return Err(Error::InvalidProblem(format!("{name} must be {rows}×{cols}")));
            }
            Ok(rows_v.iter().flatten().copied().collect())
        }
    }
}

fn vector(name: &str, v: &Option<Vec<f64>>, len: usize, fill: f64) -> Result<Vec<f64>> {
    match v {
        None => Ok(vec![fill; len]),
        Some(v) if v.len() == len => Ok(v.clone()),
        Some(v) => Err(Error::InvalidProblem(format!(
            "{name} has length {}, expected {len}",
            v.len()
        ))),
    }
}

/// `(x − r)ᵀ W (x − r)` and its gradient.
fn quad_form(w: &[f64], x: &[f64], r: &[f64], grad: Option<&mut [f64]>) -> f64 {
    let n = x.len();
    let e: Vec<f64> = x.iter().zip(r).map(|(a, b)| a - b).collect();
    let mut val = 0.0;
    let mut g = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            val += e[i] * w[i * n + j] * e[j];
            g[i] += (w[i * n + j] + w[j * n + i]) * e[j];
        }
    }
    if let Some(out) = grad {
        out.copy_from_slice(&g);
    }
    val
}

impl LinearProblemSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn control_dim(&self) -> usize {
        self.modes
            .iter()
            .filter_map(|m| m.b.as_ref())
            .map(|b| b.first().map_or(0, Vec::len))
            .max()
            .unwrap_or(0)
    }

    pub fn to_problem(&self) -> Result<SwitchedProblem> {
        let n = self.x0.len();
        let m = self.control_dim();
        let q = flat_matrix("q", &self.q, n, n, true)?;
        let rw = flat_matrix("r", &self.r, m, m, true)?;
        let s = flat_matrix("s", &self.s, n, n, false)?;
        let reference = vector("reference", &self.reference, n, 0.0)?;
        let mut modes = Vec::new();
        for (k, spec) in self.modes.iter().enumerate() {
            let a = flat_matrix(&format!("modes[{k}].a"), &Some(spec.a.clone()), n, n, false)?;
            let b = flat_matrix(&format!("modes[{k}].b"), &spec.b, n, m, false)?;
            let c = vector(&format!("modes[{k}].c"), &spec.c, n, 0.0)?;
            let (a2, b2) = (a.clone(), b.clone());
            let (q1, r1, ref1) = (q.clone(), rw.clone(), reference.clone());
            let (q2, r2, ref2) = (q.clone(), rw.clone(), reference.clone());
            modes.push(
                Mode::new(
                    move |_, x, u, dx| {
                        for i in 0..n {
                            dx[i] = c[i]
                                + (0..n).map(|j| a[i * n + j] * x[j]).sum::<f64>()
                                + (0..m).map(|j| b[i * m + j] * u[j]).sum::<f64>();
                        }
                    },
                    move |_, x, u| quad_form(&q1, x, &ref1, None) + quad_form(&r1, u, &vec![0.0; m], None),
                )
                .with_dynamics_jacobian(move |_, _, _, dfdx, dfdu| {
                    dfdx.copy_from_slice(&a2);
                    dfdu.copy_from_slice(&b2);
                })
                .with_cost_gradient(move |_, x, u, lx, lu| {
                    quad_form(&q2, x, &ref2, Some(lx));
                    quad_form(&r2, u, &vec![0.0; m], Some(lu));
                }),
            );
        }
        let (s1, ref_t1) = (s.clone(), reference.clone());
        let terminal = if s.iter().all(|&v| v == 0.0) {
            TerminalCost::zero()
        } else {
            TerminalCost::new(move |_, _, _, xf| quad_form(&s, xf, &reference, None)).with_gradient(
                move |_, _, _, xf, g| {
                    quad_form(&s1, xf, &ref_t1, Some(g));
                },
            )
        };
        let control_bounds = Bounds::new(
            vector("control_lower", &self.control_lower, m, -1.0)?,
            vector("control_upper", &self.control_upper, m, 1.0)?,
        );
        let mut builder = SwitchedProblem::builder(n, m)
            .name(self.name.clone().unwrap_or_else(|| "custom".into()))
            .modes(modes)
            .terminal_cost(terminal)
            .horizon(self.t0, self.tf)
            .initial_state(self.x0.clone())
            .control_bounds(control_bounds);
        if self.state_lower.is_some() || self.state_upper.is_some() {
            builder = builder.state_bounds(Bounds::new(
                vector("state_lower", &self.state_lower, n, f64::NEG_INFINITY)?,
                vector("state_upper", &self.state_upper, n, f64::INFINITY)?,
            ));
        }
        let p = builder.build();
        p.ensure_valid()?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rate(p: &SwitchedProblem, k: usize, x: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; p.state_dim()];
        p.mode(k).dynamics(0.0, x, &[], &mut dx);
        dx
    }

    #[test]
    fn three_tank_equilibria_and_cost() {
        let params = ThreeTankParams::default();
        let p = three_tank_problem(&params, THREE_TANK_X0, THREE_TANK_TF);
        assert!(p.validate().is_empty());
        assert_eq!(params.pumps(0), (1.0, 1.0));
        assert_eq!(params.pumps(3), (2.0, 2.0));
        assert_eq!(rate(&p, 0, &[1.0, 1.0, 1.0]), vec![0.0; 3]);
        assert_eq!(rate(&p, 3, &[4.0, 4.0, 4.0]), vec![0.0; 3]);
        assert_eq!(p.mode(2).cost(0.0, &[1.0, 1.0, 3.0], &[]), 0.0);
        assert!(!params.embedding().has_invalid_vertices());
    }

    #[test]
    fn three_tank_jacobian_matches_fd() {
        let p = three_tank_problem(&ThreeTankParams::default(), THREE_TANK_X0, THREE_TANK_TF);
        let x = [1.3, 2.7, 0.4];
        for k in 0..4 {
            let mut a = vec![0.0; 9];
            p.mode(k).dynamics_jacobian(0.0, &x, &[], &mut a, &mut []);
            for j in 0..3 {
                let h = 1e-6;
                let mut xp = x;
                let mut xm = x;
                xp[j] += h;
                xm[j] -= h;
                let (fp, fm) = (rate(&p, k, &xp), rate(&p, k, &xm));
                for i in 0..3 {
                    let fd = (fp[i] - fm[i]) / (2.0 * h);
                    assert!((fd - a[i * 3 + j]).abs() < 1e-7 * (1.0 + fd.abs()));
                }
            }
        }
    }

    #[test]
    fn guarded_sqrt_clamps() {
        assert_eq!(guarded_sqrt(-1.0), (0.0, 0.0));
        assert_eq!(guarded_sqrt(4.0), (2.0, 0.25));
    }

    #[test]
    fn rendezvous_basics() {
        let params = RendezvousParams::default();
        let p = rendezvous_problem(&params, RENDEZVOUS_TF);
        assert!(p.validate().is_empty());
        assert_eq!(rate(&p, 0, &[0.0; 4]), vec![0.0; 4]);
        assert_eq!(rate(&p, 1, &[0.0; 4]), vec![0.0, 0.0, 3.0, 0.0]);
        assert_eq!(rate(&p, 4, &[0.0; 4]), vec![0.0, 0.0, 0.0, -3.0]);
        let tau = params.orbital_time_constant();
        assert!((tau - 4820.4).abs() < 0.5, "tau = {tau}");
        assert!(params.beta > params.max_box_running_cost());
    }

    #[test]
    fn rendezvous_jacobian_matches_fd() {
        let p = rendezvous_problem(&RendezvousParams::default(), RENDEZVOUS_TF);
        for x in [[0.1, -0.2, 0.3, 0.05], [-0.119, 0.0, 0.0, 0.065], [0.3, 0.3, -0.3, 0.2]] {
            let mut a = vec![0.0; 16];
            p.mode(2).dynamics_jacobian(0.0, &x, &[], &mut a, &mut []);
            for j in 0..4 {
                let h = 1e-6;
                let mut xp = x;
                let mut xm = x;
                xp[j] += h;
                xm[j] -= h;
                let (fp, fm) = (rate(&p, 2, &xp), rate(&p, 2, &xm));
                for i in 0..4 {
                    let fd = (fp[i] - fm[i]) / (2.0 * h);
                    assert!((fd - a[i * 4 + j]).abs() < 1e-7 * (1.0 + fd.abs()), "({i},{j})");
                }
            }
        }
    }

    #[test]
    fn rendezvous_center_is_singular() {
        assert!(check_rendezvous_state(&[-1.0, 0.0, 0.0, 0.0]).is_err());
        assert!(check_rendezvous_state(&[0.0; 4]).is_ok());
    }

    #[test]
    fn inertial_transform_of_chief() {
        let params = RendezvousParams::default();
        let p = lvlh_to_inertial(&params, std::f64::consts::FRAC_PI_2, &[0.0; 4]);
        assert!(p[0].abs() < 1e-9 && (p[1] - 21000.0).abs() < 1e-9);
    }

    #[test]
    fn linear_spec_roundtrip() {
        let text = r#"{
            "x0": [1.0],
            "tf": 1.0,
            "modes": [{"a": [[-1.0]]}, {"a": [[-2.0]], "c": [1.0]}]
        }"#;
        let spec = LinearProblemSpec::from_json(text).unwrap();
        let p = spec.to_problem().unwrap();
        assert_eq!(p.mode_count(), 2);
        assert_eq!(rate(&p, 1, &[1.0]), vec![-1.0]);
        assert_eq!(p.mode(0).cost(0.0, &[2.0], &[]), 4.0);
        let bad = LinearProblemSpec::from_json(r#"{"x0": [1.0], "tf": 1.0, "modes": [], "alhpa": 1}"#);
        assert!(matches!(bad, Err(Error::Config(msg)) if msg.contains("alhpa")));
        let short = LinearProblemSpec::from_json(r#"{"x0": [1.0], "tf": 1.0, "modes": [{"a": [[1.0]]}]}"#)
            .unwrap()
            .to_problem();
        assert!(short.is_err());
    }
}
