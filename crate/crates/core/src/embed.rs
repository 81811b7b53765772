//! The embedded system: relaxed switching bits blend the mode vector fields
//! and running costs through the vertex weights.
//!
//! With augmented control `U = [u_0, …, u_{M-1}, v]`,
//!
//! ```text
//! f_e(t, x, U) = Σ_{k<M} V_k(v) f_k(t, x, u_k)
//! L_e(t, x, U) = Σ_{k<M} V_k(v) ℓ_k(t, x, u_k)
//! ```
//!
//! The sums run over valid modes only. When `M < 2^b` the weights no longer
//! add up to one away from valid vertices, and at an invalid vertex both the
//! dynamics and the running cost vanish; only the invalid-vertex part of the
//! penalty keeps solutions away from that region.

use crate::encoding::{self, EmbeddingConfig};
use crate::error::{Error, Result};
use crate::problem::SwitchedProblem;

/// A switched problem paired with its binary embedding.
#[derive(Debug, Clone)]
pub struct EmbeddedSystem {
    problem: SwitchedProblem,
    cfg: EmbeddingConfig,
}

/// A costate value `p(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostatePoint(pub Vec<f64>);

/// Dense derivatives of the embedded quantities at one point. Matrices are
/// row-major.
#[derive(Debug, Clone)]
pub struct PointJacobians {
    /// `∂f_e/∂x`, `n×n`.
    pub dfdx: Vec<f64>,
    /// `∂f_e/∂U`, `n×(M·m+b)`.
    pub dfdu: Vec<f64>,
    /// `∂L_e/∂x`.
    pub dldx: Vec<f64>,
    /// `∂L_e/∂U`.
    pub dldu: Vec<f64>,
}

/// Reusable buffers for evaluating the embedded system at one point.
#[derive(Debug, Clone)]
pub struct EmbedWorkspace {
    w: Vec<f64>,
    dw: Vec<f64>,
    fk: Vec<f64>,
    ak: Vec<f64>,
    bk: Vec<f64>,
    lkx: Vec<f64>,
    lku: Vec<f64>,
    /// `f_e`
    pub f: Vec<f64>,
    /// `L_e`
    pub l: f64,
    pub dfdx: Vec<f64>,
    pub dfdu: Vec<f64>,
    pub dldx: Vec<f64>,
    pub dldu: Vec<f64>,
}

impl EmbeddedSystem {
    pub fn new(problem: SwitchedProblem, cfg: EmbeddingConfig) -> Result<Self> {
        if cfg.mode_count() != problem.mode_count() {
            return Err(Error::Config(format!(
                "embedding is for {} modes, problem has {}",
                cfg.mode_count(),
                problem.mode_count()
            )));
        }
        Ok(EmbeddedSystem { problem, cfg })
    }

    pub fn problem(&self) -> &SwitchedProblem {
        &self.problem
    }

    pub fn config(&self) -> &EmbeddingConfig {
        &self.cfg
    }

    /// Same problem with a different embedding (e.g. a rescaled penalty).
    pub fn with_config(&self, cfg: EmbeddingConfig) -> Result<Self> {
        Self::new(self.problem.clone(), cfg)
    }

    pub fn state_dim(&self) -> usize {
        self.problem.state_dim()
    }

    pub fn bit_count(&self) -> usize {
        self.cfg.bit_count()
    }

    /// Length of the augmented control `M·m + b`.
    pub fn control_len(&self) -> usize {
        self.problem.mode_count() * self.problem.control_dim() + self.cfg.bit_count()
    }

    /// Offset of the `v` block inside `U`.
    pub fn switch_offset(&self) -> usize {
        self.problem.mode_count() * self.problem.control_dim()
    }

    pub fn switch_part<'a>(&self, u_aug: &'a [f64]) -> &'a [f64] {
        &u_aug[self.switch_offset()..]
    }

    pub fn mode_control<'a>(&self, u_aug: &'a [f64], k: usize) -> &'a [f64] {
        let m = self.problem.control_dim();
        &u_aug[k * m..(k + 1) * m]
    }

    /// Augmented control with `v = bits(k)` and the given per-mode controls.
    pub fn vertex_control(&self, k: usize, mode_controls: &[f64]) -> Vec<f64> {
        let mut u = mode_controls.to_vec();
        u.resize(self.switch_offset(), 0.0);
        u.extend(encoding::encode(k, self.bit_count()));
        u
    }

    pub fn workspace(&self) -> EmbedWorkspace {
        let n = self.state_dim();
        let m = self.problem.control_dim();
        let nu = self.control_len();
        let mc = self.problem.mode_count();
        EmbedWorkspace {
            w: vec![0.0; mc],
            dw: vec![0.0; mc * self.bit_count()],
            fk: vec![0.0; n],
            ak: vec![0.0; n * n],
            bk: vec![0.0; n * m],
            lkx: vec![0.0; n],
            lku: vec![0.0; m],
            f: vec![0.0; n],
            l: 0.0,
            dfdx: vec![0.0; n * n],
            dfdu: vec![0.0; n * nu],
            dldx: vec![0.0; n],
            dldu: vec![0.0; nu],
        }
    }

    fn check_input(&self, x: &[f64], u_aug: &[f64]) -> Result<()> {
        if x.len() != self.state_dim() || u_aug.len() != self.control_len() {
            return Err(Error::Domain(format!(
                "expected state of length {} and augmented control of length {}",
                self.state_dim(),
                self.control_len()
            )));
        }
        let v = self.switch_part(u_aug);
        if let Some((i, x)) = v.iter().enumerate().find(|(_, x)| !(0.0..=1.0).contains(*x)) {
            return Err(Error::Domain(format!("v[{i}] = {x} outside [0, 1]")));
        }
        Ok(())
    }

    /// `f_e(t, x, U)`.
    pub fn embedded_dynamics(&self, t: f64, x: &[f64], u_aug: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x, u_aug)?;
        let mut ws = self.workspace();
        self.evaluate(t, x, u_aug, false, &mut ws)?;
        Ok(ws.f)
    }

    /// `L_e(t, x, U)`.
    pub fn embedded_running_cost(&self, t: f64, x: &[f64], u_aug: &[f64]) -> Result<f64> {
        self.check_input(x, u_aug)?;
        let mut ws = self.workspace();
        self.evaluate(t, x, u_aug, false, &mut ws)?;
        Ok(ws.l)
    }

    /// `L_e + L_M`.
    pub fn meocp_integrand(&self, t: f64, x: &[f64], u_aug: &[f64]) -> Result<f64> {
        let le = self.embedded_running_cost(t, x, u_aug)?;
        Ok(le + self.cfg.penalty_unchecked(self.switch_part(u_aug)))
    }

    /// Derivatives of `f_e` and `L_e` with respect to `x` and `U`.
    pub fn jacobians(&self, t: f64, x: &[f64], u_aug: &[f64]) -> Result<PointJacobians> {
        self.check_input(x, u_aug)?;
        let mut ws = self.workspace();
        self.evaluate(t, x, u_aug, true, &mut ws)?;
        Ok(PointJacobians {
            dfdx: ws.dfdx,
            dfdu: ws.dfdu,
            dldx: ws.dldx,
            dldu: ws.dldu,
        })
    }

    /// `H = ⟨p, f_e⟩ + L_e + L_M`.
    pub fn hamiltonian(&self, t: f64, x: &[f64], p: &CostatePoint, u_aug: &[f64]) -> Result<f64> {
        if p.0.len() != self.state_dim() {
            return Err(Error::Domain("costate has wrong length".into()));
        }
        self.check_input(x, u_aug)?;
        let mut ws = self.workspace();
        self.evaluate(t, x, u_aug, false, &mut ws)?;
        let dot: f64 = p.0.iter().zip(&ws.f).map(|(a, b)| a * b).sum();
        Ok(dot + ws.l + self.cfg.penalty_unchecked(self.switch_part(u_aug)))
    }

    /// Fills `ws.f`, `ws.l` and, with `derivatives`, the Jacobian buffers.
    /// No box check on `v`; callers clamp first.
    pub fn evaluate(&self, t: f64, x: &[f64], u_aug: &[f64], derivatives: bool, ws: &mut EmbedWorkspace) -> Result<()> {
        let n = self.state_dim();
        let m = self.problem.control_dim();
        let b = self.bit_count();
        let mc = self.problem.mode_count();
        let nu = self.control_len();
        let voff = self.switch_offset();
        let v = &u_aug[voff..];

        encoding::weights_into(v, mc, &mut ws.w, derivatives.then_some(&mut ws.dw[..]));
        ws.f.iter_mut().for_each(|o| *o = 0.0);
        ws.l = 0.0;
        if derivatives {
            ws.dfdx.iter_mut().for_each(|o| *o = 0.0);
            ws.dfdu.iter_mut().for_each(|o| *o = 0.0);
            ws.dldx.iter_mut().for_each(|o| *o = 0.0);
            ws.dldu.iter_mut().for_each(|o| *o = 0.0);
        }

        for k in 0..mc {
            let mode = self.problem.mode(k);
            let uk = &u_aug[k * m..(k + 1) * m];
            mode.dynamics(t, x, uk, &mut ws.fk);
            if ws.fk.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    mode: k,
                    time: t,
                    what: "dynamics",
                });
            }
            let lk = mode.cost(t, x, uk);
            if !lk.is_finite() {
                return Err(Error::NonFinite {
                    mode: k,
                    time: t,
                    what: "running cost",
                });
            }
            let wk = ws.w[k];
            for i in 0..n {
                ws.f[i] += wk * ws.fk[i];
            }
            ws.l += wk * lk;
            if !derivatives {
                continue;
            }
            mode.dynamics_jacobian(t, x, uk, &mut ws.ak, &mut ws.bk);
            mode.cost_gradient(t, x, uk, &mut ws.lkx, &mut ws.lku);
            let dwk = &ws.dw[k * b..(k + 1) * b];
            for i in 0..n {
                for j in 0..n {
                    ws.dfdx[i * n + j] += wk * ws.ak[i * n + j];
                }
                for j in 0..m {
                    ws.dfdu[i * nu + k * m + j] = wk * ws.bk[i * m + j];
                }
                for (bi, &g) in dwk.iter().enumerate() {
                    ws.dfdu[i * nu + voff + bi] += g * ws.fk[i];
                }
                ws.dldx[i] += wk * ws.lkx[i];
            }
            for j in 0..m {
                ws.dldu[k * m + j] = wk * ws.lku[j];
            }
            for (bi, &g) in dwk.iter().enumerate() {
                ws.dldu[voff + bi] += g * lk;
            }
        }
        Ok(())
    }
}
