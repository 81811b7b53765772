//! Fixed-step integration helpers.

/// Scratch space for [`rk4_step`].
#[derive(Debug, Clone)]
pub struct Rk4Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Workspace {
    pub fn new(n: usize) -> Self {
        Rk4Workspace {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    /// Derivative evaluated at the start of the last step.
    pub fn start_derivative(&self) -> &[f64] {
        &self.k1
    }
}

/// One classical Runge–Kutta step of `ẋ = f(t, x)`, writing `x(t + h)` into `out`.
pub fn rk4_step<F>(mut f: F, t: f64, x: &[f64], h: f64, out: &mut [f64], ws: &mut Rk4Workspace)
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = x.len();
    f(t, x, &mut ws.k1);
    for i in 0..n {
        ws.tmp[i] = x[i] + 0.5 * h * ws.k1[i];
    }
    f(t + 0.5 * h, &ws.tmp, &mut ws.k2);
    for i in 0..n {
        ws.tmp[i] = x[i] + 0.5 * h * ws.k2[i];
    }
    f(t + 0.5 * h, &ws.tmp, &mut ws.k3);
    for i in 0..n {
        ws.tmp[i] = x[i] + h * ws.k3[i];
    }
    f(t + h, &ws.tmp, &mut ws.k4);
    for i in 0..n {
        out[i] = x[i] + h / 6.0 * (ws.k1[i] + 2.0 * ws.k2[i] + 2.0 * ws.k3[i] + ws.k4[i]);
    }
}

/// Cubic Hermite interpolation on `[0, h]` at fraction `s ∈ [0, 1]`.
pub fn hermite(x0: &[f64], f0: &[f64], x1: &[f64], f1: &[f64], h: f64, s: f64, out: &mut [f64]) {
    let h00 = 2.0 * s * s * s - 3.0 * s * s + 1.0;
    let h10 = s * s * s - 2.0 * s * s + s;
    let h01 = -2.0 * s * s * s + 3.0 * s * s;
    let h11 = s * s * s - s * s;
    for i in 0..out.len() {
        out[i] = h00 * x0[i] + h10 * h * f0[i] + h01 * x1[i] + h11 * h * f1[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay_error(steps: usize) -> f64 {
        let h = 1.0 / steps as f64;
        let mut x = vec![1.0];
        let mut next = vec![0.0];
        let mut ws = Rk4Workspace::new(1);
        for j in 0..steps {
            rk4_step(|_, x, dx| dx[0] = -x[0], j as f64 * h, &x, h, &mut next, &mut ws);
            x.copy_from_slice(&next);
        }
        (x[0] - (-1.0f64).exp()).abs()
    }

    #[test]
    fn rk4_is_fourth_order() {
        let e1 = decay_error(10);
        let e2 = decay_error(20);
        let order = (e1 / e2).log2();
        assert!((order - 4.0).abs() < 0.3, "order {order}");
    }

    #[test]
    fn hermite_reproduces_cubic() {
        // x(t) = t^3 on [0, 2]
        let (x0, f0, x1, f1) = ([0.0], [0.0], [8.0], [12.0]);
        let mut out = [0.0];
        hermite(&x0, &f0, &x1, &f1, 2.0, 0.25, &mut out);
        assert!((out[0] - 0.125).abs() < 1e-14);
    }
}
