//! Direct collocation of the penalized embedded problem.
//!
//! The decision vector stores, for every mesh node `j`, the block
//! `[x_j, u_{0,j}, …, u_{M-1,j}, v_j]`. Dynamics are enforced by one defect
//! per interval,
//!
//! ```text
//! trapezoidal:     x_{j+1} - x_j - h/2 (f_j + f_{j+1})
//! Hermite–Simpson: x_{j+1} - x_j - h/6 (f_j + 4 f_m + f_{j+1}),
//!                  x_m = (x_j + x_{j+1})/2 + h/8 (f_j - f_{j+1})
//! ```
//!
//! and the cost is the matching quadrature of `L_e + L_M` plus the terminal
//! cost at the last node. `x_0` is pinned through its bounds.

use rayon::prelude::*;

use crate::embed::EmbeddedSystem;
use crate::error::{Error, Result};
use crate::linalg;
use crate::solver::Nlp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    Trapezoidal,
    HermiteSimpson,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trapezoidal" | "trapezoid" => Ok(Scheme::Trapezoidal),
            "hermite-simpson" | "hs" => Ok(Scheme::HermiteSimpson),
            other => Err(Error::Config(format!("unknown scheme `{other}`"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Trapezoidal => "trapezoidal",
            Scheme::HermiteSimpson => "hermite-simpson",
        })
    }
}

/// Collocation mesh `t0 = s_0 < … < s_N = tf`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    times: Vec<f64>,
}

impl Mesh {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 3 {
            return Err(Error::Mesh(format!(
                "need at least 2 intervals, got {}",
                times.len().saturating_sub(1)
            )));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Mesh("mesh times must be strictly increasing".into()));
        }
        Ok(Mesh { times })
    }

    /// `intervals` equal steps on `[t0, tf]`.
    pub fn uniform(t0: f64, tf: f64, intervals: usize) -> Result<Self> {
        if intervals < 2 {
            return Err(Error::Mesh(format!("need at least 2 intervals, got {intervals}")));
        }
        let h = (tf - t0) / intervals as f64;
        let mut times: Vec<f64> = (0..=intervals).map(|j| t0 + j as f64 * h).collect();
        times[intervals] = tf;
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn node_count(&self) -> usize {
        self.times.len()
    }

    pub fn interval_count(&self) -> usize {
        self.times.len() - 1
    }

    pub fn step(&self, j: usize) -> f64 {
        self.times[j + 1] - self.times[j]
    }

    /// Trapezoidal quadrature weight of node `j`.
    pub fn trapezoid_weight(&self, j: usize) -> f64 {
        let n = self.interval_count();
        let left = if j > 0 { self.step(j - 1) } else { 0.0 };
        let right = if j < n { self.step(j) } else { 0.0 };
        0.5 * (left + right)
    }
}

/// Position of each node's `(x, u, v)` block inside the decision vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub state_dim: usize,
    pub control_len: usize,
    pub switch_offset: usize,
    pub nodes: usize,
}

impl Layout {
    pub fn stride(&self) -> usize {
        self.state_dim + self.control_len
    }

    pub fn dim(&self) -> usize {
        self.nodes * self.stride()
    }

    pub fn node<'a>(&self, z: &'a [f64], j: usize) -> &'a [f64] {
        &z[j * self.stride()..(j + 1) * self.stride()]
    }

    pub fn state<'a>(&self, z: &'a [f64], j: usize) -> &'a [f64] {
        let o = j * self.stride();
        &z[o..o + self.state_dim]
    }

    /// Augmented control `U_j = [u_j, v_j]`.
    pub fn control<'a>(&self, z: &'a [f64], j: usize) -> &'a [f64] {
        let o = j * self.stride() + self.state_dim;
        &z[o..o + self.control_len]
    }

    pub fn switch<'a>(&self, z: &'a [f64], j: usize) -> &'a [f64] {
        let o = j * self.stride() + self.state_dim + self.switch_offset;
        &z[o..o + self.control_len - self.switch_offset]
    }

    pub fn state_offset(&self, j: usize) -> usize {
        j * self.stride()
    }

    pub fn switch_offset_of(&self, j: usize) -> usize {
        j * self.stride() + self.state_dim + self.switch_offset
    }

    pub fn pack(&self, states: &[Vec<f64>], controls: &[Vec<f64>]) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.dim());
        for (x, u) in states.iter().zip(controls) {
            z.extend_from_slice(x);
            z.extend_from_slice(u);
        }
        z
    }

    pub fn unpack(&self, z: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        (0..self.nodes)
            .map(|j| (self.state(z, j).to_vec(), self.control(z, j).to_vec()))
            .unzip()
    }
}

/// Everything evaluated at one collocation point.
#[derive(Debug, Clone)]
pub(crate) struct PointEval {
    f: Vec<f64>,
    /// `L_e + L_M`
    l: f64,
    a: Vec<f64>,
    b: Vec<f64>,
    lx: Vec<f64>,
    lu: Vec<f64>,
}

/// Defect Jacobian stored as two dense `n × stride` blocks per interval,
/// acting on nodes `j` and `j+1`.
#[derive(Debug, Clone)]
pub struct DefectJacobian {
    pub state_dim: usize,
    pub stride: usize,
    pub blocks: Vec<(Vec<f64>, Vec<f64>)>,
}

impl DefectJacobian {
    pub fn rows(&self) -> usize {
        self.blocks.len() * self.state_dim
    }

    pub fn cols(&self) -> usize {
        (self.blocks.len() + 1) * self.stride
    }

    /// `Jᵀ y`, accumulated into `out`.
    pub fn transpose_mul_add(&self, y: &[f64], out: &mut [f64]) {
        let (n, s) = (self.state_dim, self.stride);
        for (j, (left, right)) in self.blocks.iter().enumerate() {
            let yj = &y[j * n..(j + 1) * n];
            for r in 0..n {
                for c in 0..s {
                    out[j * s + c] += left[r * s + c] * yj[r];
                    out[(j + 1) * s + c] += right[r * s + c] * yj[r];
                }
            }
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let (n, s) = (self.state_dim, self.stride);
        let mut d = vec![vec![0.0; self.cols()]; self.rows()];
        for (j, (left, right)) in self.blocks.iter().enumerate() {
            for r in 0..n {
                for c in 0..s {
                    d[j * n + r][j * s + c] = left[r * s + c];
                    d[j * n + r][(j + 1) * s + c] = right[r * s + c];
                }
            }
        }
        d
    }
}

/// The transcribed problem: bounds plus objective and defect callbacks.
#[derive(Debug, Clone)]
pub struct NlpProblem {
    sys: EmbeddedSystem,
    mesh: Mesh,
    scheme: Scheme,
    layout: Layout,
    lower: Vec<f64>,
    upper: Vec<f64>,
    parallel: bool,
}

/// Transcribes `sys` on `mesh`.
pub fn build_nlp(sys: EmbeddedSystem, mesh: Mesh, scheme: Scheme) -> Result<NlpProblem> {
    sys.problem().ensure_valid()?;
    let p = sys.problem();
    if (mesh.times()[0] - p.t0()).abs() > 1e-12 * (1.0 + p.t0().abs())
        || (mesh.times()[mesh.interval_count()] - p.tf()).abs() > 1e-12 * (1.0 + p.tf().abs())
    {
        return Err(Error::Mesh("mesh does not span the problem horizon".into()));
    }
    let layout = Layout {
        state_dim: sys.state_dim(),
        control_len: sys.control_len(),
        switch_offset: sys.switch_offset(),
        nodes: mesh.node_count(),
    };
    let n = layout.state_dim;
    let m = p.control_dim();
    let mut lower = Vec::with_capacity(layout.dim());
    let mut upper = Vec::with_capacity(layout.dim());
    for j in 0..layout.nodes {
        if j == 0 {
            lower.extend_from_slice(p.x0());
            upper.extend_from_slice(p.x0());
        } else if let Some(sb) = p.state_bounds() {
            lower.extend_from_slice(&sb.lower);
            upper.extend_from_slice(&sb.upper);
        } else {
            lower.extend(std::iter::repeat_n(f64::NEG_INFINITY, n));
            upper.extend(std::iter::repeat_n(f64::INFINITY, n));
        }
        for _ in 0..p.mode_count() {
            lower.extend_from_slice(&p.control_bounds().lower[..m]);
            upper.extend_from_slice(&p.control_bounds().upper[..m]);
        }
        lower.extend(std::iter::repeat_n(0.0, sys.bit_count()));
        upper.extend(std::iter::repeat_n(1.0, sys.bit_count()));
    }
    let parallel = worker_count() > 1;
    Ok(NlpProblem {
        sys,
        mesh,
        scheme,
        layout,
        lower,
        upper,
        parallel,
    })
}

/// Worker count from `SWITCHEMBED_WORKERS`; `1` when unset or unparsable.
pub fn worker_count() -> usize {
    std::env::var("SWITCHEMBED_WORKERS")
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&w: &usize| w >= 1)
        .unwrap_or(1)
}

impl NlpProblem {
    pub fn system(&self) -> &EmbeddedSystem {
        &self.sys
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn set_parallel(&mut self, parallel: bool) {
        self.parallel = parallel;
    }

    /// Same mesh and scheme with a different embedding (used for penalty
    /// continuation).
    pub fn with_system(&self, sys: EmbeddedSystem) -> NlpProblem {
        NlpProblem { sys, ..self.clone() }
    }

    /// Held state, control midpoints, `v = 0.5` on every bit. With a target,
    /// states are interpolated linearly from `x0` to it.
    pub fn initial_guess(&self, target: Option<&[f64]>) -> Vec<f64> {
        let p = self.sys.problem();
        let u_mid = p.control_bounds().midpoint();
        let span = p.tf() - p.t0();
        let mut z = Vec::with_capacity(self.layout.dim());
        for (j, &t) in self.mesh.times().iter().enumerate() {
            let s = (t - p.t0()) / span;
            for i in 0..p.state_dim() {
                let x0 = p.x0()[i];
                z.push(match target {
                    Some(xt) if j > 0 => x0 + s * (xt[i] - x0),
                    _ => x0,
                });
            }
            for _ in 0..p.mode_count() {
                z.extend_from_slice(&u_mid);
            }
            z.extend(std::iter::repeat_n(0.5, self.sys.bit_count()));
        }
        z
    }

    fn clamped_control(&self, z: &[f64], j: usize) -> Vec<f64> {
        self.clamped_control_of(self.layout.control(z, j))
    }

    fn clamped_control_of(&self, u: &[f64]) -> Vec<f64> {
        let mut u = u.to_vec();
        for v in &mut u[self.layout.switch_offset..] {
            *v = v.clamp(0.0, 1.0);
        }
        u
    }

    fn point(&self, t: f64, x: &[f64], u: &[f64], derivs: bool, node: usize) -> Result<PointEval> {
        let mut ws = self.sys.workspace();
        self.sys
            .evaluate(t, x, u, derivs, &mut ws)
            .map_err(|e| Error::NlpNonFinite {
                node,
                detail: e.to_string(),
            })?;
        let cfg = self.sys.config();
        let v = &u[self.layout.switch_offset..];
        let l = ws.l + cfg.penalty_unchecked(v);
        if derivs {
            let off = self.layout.switch_offset;
            let mut pg = vec![0.0; v.len()];
            cfg.penalty_gradient_into(v, &mut pg);
            for (i, g) in pg.into_iter().enumerate() {
                ws.dldu[off + i] += g;
            }
        }
        Ok(PointEval {
            f: ws.f,
            l,
            a: ws.dfdx,
            b: ws.dfdu,
            lx: ws.dldx,
            lu: ws.dldu,
        })
    }

    pub(crate) fn node_evals(&self, z: &[f64], derivs: bool) -> Result<Vec<PointEval>> {
        let times = self.mesh.times();
        let eval = |j: usize| {
            let u = self.clamped_control(z, j);
            self.point(times[j], self.layout.state(z, j), &u, derivs, j)
        };
        if self.parallel {
            (0..self.layout.nodes).into_par_iter().map(eval).collect()
        } else {
            (0..self.layout.nodes).map(eval).collect()
        }
    }

    /// Hermite–Simpson midpoint state and control of interval `j`.
    fn midpoint_input(&self, z: &[f64], nodes: &[PointEval], j: usize) -> (Vec<f64>, Vec<f64>) {
        let h = self.mesh.step(j);
        let (xa, xb) = (self.layout.state(z, j), self.layout.state(z, j + 1));
        let xm = (0..xa.len())
            .map(|i| 0.5 * (xa[i] + xb[i]) + h / 8.0 * (nodes[j].f[i] - nodes[j + 1].f[i]))
            .collect();
        let ua = self.clamped_control(z, j);
        let ub = self.clamped_control(z, j + 1);
        let um = ua.iter().zip(&ub).map(|(a, b)| 0.5 * (a + b)).collect();
        (xm, um)
    }

    pub(crate) fn mid_evals(&self, z: &[f64], nodes: &[PointEval], derivs: bool) -> Result<Vec<PointEval>> {
        if self.scheme != Scheme::HermiteSimpson {
            return Ok(Vec::new());
        }
        let eval = |j: usize| {
            let (xm, um) = self.midpoint_input(z, nodes, j);
            let t = 0.5 * (self.mesh.times()[j] + self.mesh.times()[j + 1]);
            self.point(t, &xm, &um, derivs, j)
        };
        if self.parallel {
            (0..self.mesh.interval_count()).into_par_iter().map(eval).collect()
        } else {
            (0..self.mesh.interval_count()).map(eval).collect()
        }
    }

    fn terminal_cost(&self, z: &[f64]) -> f64 {
        let p = self.sys.problem();
        p.terminal_value(self.layout.state(z, self.layout.nodes - 1))
    }

    pub(crate) fn objective_from(&self, z: &[f64], nodes: &[PointEval], mids: &[PointEval]) -> f64 {
        let mut j_val = 0.0;
        for j in 0..self.mesh.interval_count() {
            let h = self.mesh.step(j);
            j_val += match self.scheme {
                Scheme::Trapezoidal => 0.5 * h * (nodes[j].l + nodes[j + 1].l),
                Scheme::HermiteSimpson => h / 6.0 * (nodes[j].l + 4.0 * mids[j].l + nodes[j + 1].l),
            };
        }
        j_val + self.terminal_cost(z)
    }

    pub(crate) fn defects_from(&self, z: &[f64], nodes: &[PointEval], mids: &[PointEval], c: &mut [f64]) {
        let n = self.layout.state_dim;
        for j in 0..self.mesh.interval_count() {
            let h = self.mesh.step(j);
            let (xa, xb) = (self.layout.state(z, j), self.layout.state(z, j + 1));
            for i in 0..n {
                let quad = match self.scheme {
                    Scheme::Trapezoidal => 0.5 * h * (nodes[j].f[i] + nodes[j + 1].f[i]),
                    Scheme::HermiteSimpson => h / 6.0 * (nodes[j].f[i] + 4.0 * mids[j].f[i] + nodes[j + 1].f[i]),
                };
                c[j * n + i] = xb[i] - xa[i] - quad;
            }
        }
    }

    /// Defect blocks and objective partials `(∂c_j/∂z_j, ∂c_j/∂z_{j+1},
    /// ∂J_j/∂z_j, ∂J_j/∂z_{j+1})` of interval `j`.
    pub(crate) fn interval_derivatives(
        &self,
        j: usize,
        nodes: &[PointEval],
        mids: &[PointEval],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.layout.state_dim;
        let nu = self.layout.control_len;
        let s = self.layout.stride();
        let h = self.mesh.step(j);
        let (na, nb) = (&nodes[j], &nodes[j + 1]);
        let mut left = vec![0.0; n * s];
        let mut right = vec![0.0; n * s];
        let mut gl = vec![0.0; s];
        let mut gr = vec![0.0; s];
        let w = match self.scheme {
            Scheme::Trapezoidal => 0.5 * h,
            Scheme::HermiteSimpson => h / 6.0,
        };
        // endpoint terms shared by both schemes
        for r in 0..n {
            left[r * s + r] -= 1.0;
            right[r * s + r] += 1.0;
            for c in 0..n {
                left[r * s + c] -= w * na.a[r * n + c];
                right[r * s + c] -= w * nb.a[r * n + c];
            }
            for c in 0..nu {
                left[r * s + n + c] -= w * na.b[r * nu + c];
                right[r * s + n + c] -= w * nb.b[r * nu + c];
            }
        }
        for c in 0..n {
            gl[c] += w * na.lx[c];
            gr[c] += w * nb.lx[c];
        }
        for c in 0..nu {
            gl[n + c] += w * na.lu[c];
            gr[n + c] += w * nb.lu[c];
        }
        if self.scheme == Scheme::HermiteSimpson {
            let mid = &mids[j];
            // ∂x_m/∂z_a = [I/2 + h/8 A_a, h/8 B_a], ∂x_m/∂z_b = [I/2 - h/8 A_b, -h/8 B_b]
            let mut dxa = vec![0.0; n * s];
            let mut dxb = vec![0.0; n * s];
            for r in 0..n {
                dxa[r * s + r] += 0.5;
                dxb[r * s + r] += 0.5;
                for c in 0..n {
                    dxa[r * s + c] += h / 8.0 * na.a[r * n + c];
                    dxb[r * s + c] -= h / 8.0 * nb.a[r * n + c];
                }
                for c in 0..nu {
                    dxa[r * s + n + c] += h / 8.0 * na.b[r * nu + c];
                    dxb[r * s + n + c] -= h / 8.0 * nb.b[r * nu + c];
                }
            }
            let wm = 4.0 * h / 6.0;
            for (dx, blk, g) in [(&dxa, &mut left, &mut gl), (&dxb, &mut right, &mut gr)] {
                for r in 0..n {
                    for c in 0..s {
                        let mut df = 0.0;
                        for k in 0..n {
                            df += mid.a[r * n + k] * dx[k * s + c];
                        }
                        if c >= n {
                            df += 0.5 * mid.b[r * nu + c - n];
                        }
                        blk[r * s + c] -= wm * df;
                    }
                }
                for c in 0..s {
                    let mut dl = 0.0;
                    for k in 0..n {
                        dl += mid.lx[k] * dx[k * s + c];
                    }
                    if c >= n {
                        dl += 0.5 * mid.lu[c - n];
                    }
                    g[c] += wm * dl;
                }
            }
        }
        (left, right, gl, gr)
    }

    pub(crate) fn terminal_gradient_into(&self, z: &[f64], g: &mut [f64]) {
        let p = self.sys.problem();
        let last = self.layout.nodes - 1;
        let mut gk = vec![0.0; self.layout.state_dim];
        p.terminal_cost()
            .gradient(p.t0(), p.x0(), p.tf(), self.layout.state(z, last), &mut gk);
        let o = self.layout.state_offset(last);
        for (i, v) in gk.into_iter().enumerate() {
            g[o + i] += v;
        }
    }

    pub(crate) fn check_finite(&self, value: f64) -> Result<f64> {
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NlpNonFinite {
                node: self.layout.nodes - 1,
                detail: "objective is not finite".into(),
            })
        }
    }

    pub fn objective(&self, z: &[f64]) -> Result<f64> {
        let nodes = self.node_evals(z, false)?;
        let mids = self.mid_evals(z, &nodes, false)?;
        self.check_finite(self.objective_from(z, &nodes, &mids))
    }

    pub fn objective_gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.layout.dim()];
        let y = vec![0.0; self.constraint_count()];
        self.lagrangian_gradient(z, &y, &mut g)?;
        Ok(g)
    }

    pub fn defects(&self, z: &[f64]) -> Result<Vec<f64>> {
        let nodes = self.node_evals(z, false)?;
        let mids = self.mid_evals(z, &nodes, false)?;
        let mut c = vec![0.0; self.constraint_count()];
        self.defects_from(z, &nodes, &mids, &mut c);
        Ok(c)
    }

    pub fn defect_jacobian(&self, z: &[f64]) -> Result<DefectJacobian> {
        let nodes = self.node_evals(z, true)?;
        let mids = self.mid_evals(z, &nodes, true)?;
        let blocks = (0..self.mesh.interval_count())
            .map(|j| {
                let (l, r, _, _) = self.interval_derivatives(j, &nodes, &mids);
                (l, r)
            })
            .collect();
        Ok(DefectJacobian {
            state_dim: self.layout.state_dim,
            stride: self.layout.stride(),
            blocks,
        })
    }

    /// Quadrature of `L_M` alone along `z`.
    pub fn penalty_integral(&self, z: &[f64]) -> f64 {
        let cfg = self.sys.config();
        let pen: Vec<f64> = (0..self.layout.nodes)
            .map(|j| {
                let v: Vec<f64> = self.layout.switch(z, j).iter().map(|v| v.clamp(0.0, 1.0)).collect();
                cfg.penalty_unchecked(&v)
            })
            .collect();
        let mut total = 0.0;
        for j in 0..self.mesh.interval_count() {
            let h = self.mesh.step(j);
            total += match self.scheme {
                Scheme::Trapezoidal => 0.5 * h * (pen[j] + pen[j + 1]),
                Scheme::HermiteSimpson => {
                    let vm: Vec<f64> = self
                        .layout
                        .switch(z, j)
                        .iter()
                        .zip(self.layout.switch(z, j + 1))
                        .map(|(a, b)| (0.5 * (a + b)).clamp(0.0, 1.0))
                        .collect();
                    h / 6.0 * (pen[j] + 4.0 * cfg.penalty_unchecked(&vm) + pen[j + 1])
                }
            };
        }
        total
    }

    /// Solves the defect equations interval by interval for the states,
    /// keeping the controls of `z`. Newton iteration on each `x_{j+1}` from
    /// an explicit Euler predictor.
    pub fn forward_fill(&self, z: &[f64]) -> Result<Vec<f64>> {
        let n = self.layout.state_dim;
        let s = self.layout.stride();
        let times = self.mesh.times();
        let mut z = z.to_vec();
        z[..n].copy_from_slice(self.sys.problem().x0());
        let mut ws = self.sys.workspace();
        let mut wm = self.sys.workspace();
        let fail = |node: usize, e: Error| Error::NlpNonFinite {
            node,
            detail: e.to_string(),
        };
        let mut ua = self.clamped_control(&z, 0);
        self.sys
            .evaluate(times[0], &z[..n], &ua, false, &mut ws)
            .map_err(|e| fail(0, e))?;
        let mut fa = ws.f.clone();
        let mut xm = vec![0.0; n];
        let mut um = vec![0.0; ua.len()];
        let mut c = vec![0.0; n];
        let mut jac = vec![0.0; n * n];
        for j in 0..self.mesh.interval_count() {
            let h = self.mesh.step(j);
            let (xa, rest) = z[j * s..].split_at_mut(s);
            let xa = &xa[..n];
            let ub = self.clamped_control_of(&rest[n..s]);
            let xb = &mut rest[..n];
            for i in 0..n {
                xb[i] = xa[i] + h * fa[i];
            }
            let scale = 1.0 + linalg::norm_inf(xa);
            let tm = 0.5 * (times[j] + times[j + 1]);
            let mut residual = f64::INFINITY;
            for _ in 0..30 {
                self.sys
                    .evaluate(times[j + 1], xb, &ub, true, &mut ws)
                    .map_err(|e| fail(j + 1, e))?;
                match self.scheme {
                    Scheme::Trapezoidal => {
                        for r in 0..n {
                            c[r] = xb[r] - xa[r] - 0.5 * h * (fa[r] + ws.f[r]);
                            for q in 0..n {
                                jac[r * n + q] = -0.5 * h * ws.dfdx[r * n + q];
                            }
                            jac[r * n + r] += 1.0;
                        }
                    }
                    Scheme::HermiteSimpson => {
                        for i in 0..n {
                            xm[i] = 0.5 * (xa[i] + xb[i]) + h / 8.0 * (fa[i] - ws.f[i]);
                        }
                        for (k, o) in um.iter_mut().enumerate() {
                            *o = 0.5 * (ua[k] + ub[k]);
                        }
                        self.sys.evaluate(tm, &xm, &um, true, &mut wm).map_err(|e| fail(j, e))?;
                        for r in 0..n {
                            c[r] = xb[r] - xa[r] - h / 6.0 * (fa[r] + 4.0 * wm.f[r] + ws.f[r]);
                            for q in 0..n {
                                // ∂x_m/∂x_b = I/2 − h/8 A_b
                                let mut am = 0.0;
                                for k in 0..n {
                                    let dxm = if k == q { 0.5 } else { 0.0 } - h / 8.0 * ws.dfdx[k * n + q];
                                    am += wm.dfdx[r * n + k] * dxm;
                                }
                                jac[r * n + q] = -h / 6.0 * (ws.dfdx[r * n + q] + 4.0 * am);
                            }
                            jac[r * n + r] += 1.0;
                        }
                    }
                }
                residual = linalg::norm_inf(&c);
                if residual <= 1e-13 * scale {
                    break;
                }
                if !linalg::solve_in_place(&mut jac, &mut c, n) {
                    return Err(Error::NlpNonFinite {
                        node: j + 1,
                        detail: "singular defect Jacobian in forward fill".into(),
                    });
                }
                for i in 0..n {
                    xb[i] -= c[i];
                }
                if linalg::norm_inf(&c) <= 1e-15 * scale {
                    residual = 0.0;
                    break;
                }
            }
            if !(residual <= 1e-9 * scale) || xb.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    time: times[j + 1],
                    detail: format!("collocation step did not converge (residual {residual:e})"),
                });
            }
            self.sys
                .evaluate(times[j + 1], xb, &ub, false, &mut ws)
                .map_err(|e| fail(j + 1, e))?;
            fa.copy_from_slice(&ws.f);
            ua = ub;
        }
        Ok(z)
    }
}

impl Nlp for NlpProblem {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn constraint_count(&self) -> usize {
        self.mesh.interval_count() * self.layout.state_dim
    }

    fn lower_bounds(&self) -> &[f64] {
        &self.lower
    }

    fn upper_bounds(&self) -> &[f64] {
        &self.upper
    }

    fn values(&self, z: &[f64], c: &mut [f64]) -> Result<f64> {
        let nodes = self.node_evals(z, false)?;
        let mids = self.mid_evals(z, &nodes, false)?;
        self.defects_from(z, &nodes, &mids, c);
        self.check_finite(self.objective_from(z, &nodes, &mids))
    }

    fn lagrangian_gradient(&self, z: &[f64], y: &[f64], grad: &mut [f64]) -> Result<()> {
        let nodes = self.node_evals(z, true)?;
        let mids = self.mid_evals(z, &nodes, true)?;
        let n = self.layout.state_dim;
        let s = self.layout.stride();
        grad.iter_mut().for_each(|g| *g = 0.0);
        for j in 0..self.mesh.interval_count() {
            let (left, right, gl, gr) = self.interval_derivatives(j, &nodes, &mids);
            let yj = &y[j * n..(j + 1) * n];
            for c in 0..s {
                let mut a = gl[c];
                let mut b = gr[c];
                for r in 0..n {
                    a += left[r * s + c] * yj[r];
                    b += right[r * s + c] * yj[r];
                }
                grad[j * s + c] += a;
                grad[(j + 1) * s + c] += b;
            }
        }
        self.terminal_gradient_into(z, grad);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NlpNonFinite {
                node: 0,
                detail: "gradient is not finite".into(),
            });
        }
        Ok(())
    }
}
