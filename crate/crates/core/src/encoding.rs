//! Binary mode encoding and the multilinear embedding on the unit hypercube.
//!
//! A mode index `q ∈ {0, …, M-1}` is written with `b` bits, `v[0]` being the
//! least-significant one. Relaxing each bit to `[0, 1]` turns the vertex set
//! `{0,1}^b` into the hypercube, and every vertex `k` gets the multilinear
//! weight
//!
//! ```text
//! V_k(v) = Π_i [ k_i v_i + (1 - k_i)(1 - v_i) ]
//! ```
//!
//! The weights form a partition of unity over all `2^b` vertices. Vertices
//! with `k ≥ M` do not correspond to a mode; [`EmbeddingConfig::penalty`]
//! charges for both fractional bits and for those invalid vertices.

use crate::error::{Error, Result};

/// A valid mode index `q ∈ {0, …, M-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeIndex(usize);

impl ModeIndex {
    pub fn new(value: usize, mode_count: usize) -> Result<Self> {
        if value >= mode_count {
            return Err(Error::Domain(format!("mode {value} outside valid set 0..{mode_count}")));
        }
        Ok(ModeIndex(value))
    }

    pub fn value(self) -> usize {
        self.0
    }

    /// Construct without a range check. Callers guarantee `value < M`.
    pub(crate) fn new_unchecked(value: usize) -> Self {
        ModeIndex(value)
    }
}

impl std::fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A point of the relaxed switching hypercube `[0,1]^b`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedSwitch(Vec<f64>);

impl RelaxedSwitch {
    pub fn new(v: Vec<f64>) -> Result<Self> {
        check_box(&v)?;
        Ok(RelaxedSwitch(v))
    }

    /// The vertex `bits(k)`.
    pub fn vertex(k: usize, bit_count: usize) -> Self {
        RelaxedSwitch(encode(k, bit_count))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for RelaxedSwitch {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Minimal bit count `b` with `2^(b-1) < M ≤ 2^b`.
pub fn num_bits(mode_count: usize) -> Result<usize> {
    if mode_count < 2 {
        return Err(Error::InvalidProblem(format!(
            "need at least two modes, got {mode_count}"
        )));
    }
    Ok((usize::BITS - (mode_count - 1).leading_zeros()) as usize)
}

/// Bit expansion of `k` as a relaxed vector, least-significant bit first.
pub fn encode(k: usize, bit_count: usize) -> Vec<f64> {
    (0..bit_count).map(|i| ((k >> i) & 1) as f64).collect()
}

/// `Σ 2^i v_i` for a strictly binary vector. The result is not checked
/// against the mode count.
pub fn decode(bits: &[f64]) -> Result<usize> {
    let mut q = 0usize;
    for (i, &b) in bits.iter().enumerate() {
        if b == 1.0 {
            q |= 1 << i;
        } else if b != 0.0 {
            return Err(Error::Domain(format!("bit {i} has non-binary value {b}")));
        }
    }
    Ok(q)
}

fn check_box(v: &[f64]) -> Result<()> {
    for (i, &x) in v.iter().enumerate() {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("v[{i}] = {x} outside [0, 1]")));
        }
    }
    Ok(())
}

fn check_vertex(k: usize, bit_count: usize) -> Result<()> {
    if bit_count >= usize::BITS as usize || k >= (1usize << bit_count) {
        return Err(Error::Domain(format!("vertex {k} out of range for {bit_count} bits")));
    }
    Ok(())
}

#[inline]
fn factor(k: usize, i: usize, vi: f64) -> f64 {
    if (k >> i) & 1 == 1 {
        vi
    } else {
        1.0 - vi
    }
}

/// `V_k(v)`.
pub fn vertex_weight(k: usize, v: &[f64]) -> Result<f64> {
    check_vertex(k, v.len())?;
    check_box(v)?;
    Ok(weight_unchecked(k, v))
}

pub(crate) fn weight_unchecked(k: usize, v: &[f64]) -> f64 {
    v.iter().enumerate().map(|(i, &vi)| factor(k, i, vi)).product()
}

/// `∂V_k/∂v_i = (2k_i - 1) Π_{j≠i} [k_j v_j + (1-k_j)(1-v_j)]`.
pub fn vertex_weight_gradient(k: usize, v: &[f64]) -> Result<Vec<f64>> {
    check_vertex(k, v.len())?;
    check_box(v)?;
    let mut g = vec![0.0; v.len()];
    weight_gradient_into(k, v, &mut g);
    Ok(g)
}

pub(crate) fn weight_gradient_into(k: usize, v: &[f64], out: &mut [f64]) {
    let b = v.len();
    for i in 0..b {
        let sign = if (k >> i) & 1 == 1 { 1.0 } else { -1.0 };
        let mut p = sign;
        for (j, &vj) in v.iter().enumerate() {
            if j != i {
                p *= factor(k, j, vj);
            }
        }
        out[i] = p;
    }
}

/// Weights `V_0..V_{count-1}` and, optionally, their gradients stored
/// row-major (`count × b`).
pub(crate) fn weights_into(v: &[f64], count: usize, w: &mut [f64], grad: Option<&mut [f64]>) {
    let b = v.len();
    for (k, wk) in w.iter_mut().enumerate().take(count) {
        *wk = weight_unchecked(k, v);
    }
    if let Some(g) = grad {
        for k in 0..count {
            weight_gradient_into(k, v, &mut g[k * b..(k + 1) * b]);
        }
    }
}

/// Encoding parameters: mode count, bit count, and penalty weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingConfig {
    mode_count: usize,
    bit_count: usize,
    alpha: f64,
    beta: f64,
}

impl EmbeddingConfig {
    /// Uses `beta = alpha`.
    pub fn new(mode_count: usize, alpha: f64) -> Result<Self> {
        Self::with_weights(mode_count, alpha, alpha)
    }

    pub fn with_weights(mode_count: usize, alpha: f64, beta: f64) -> Result<Self> {
        let bit_count = num_bits(mode_count)?;
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be finite and >= 0, got {alpha}")));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!("beta must be finite and >= 0, got {beta}")));
        }
        let full = mode_count == 1 << bit_count;
        if beta == 0.0 && !full {
            return Err(Error::Config(format!(
                "beta must be > 0 when {mode_count} modes leave invalid bit patterns"
            )));
        }
        Ok(EmbeddingConfig {
            mode_count,
            bit_count,
            alpha,
            beta,
        })
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn bit_count(&self) -> usize {
        self.bit_count
    }

    pub fn vertex_count(&self) -> usize {
        1 << self.bit_count
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Effective invalid-vertex weight; zero when every bit pattern is a mode.
    pub fn beta(&self) -> f64 {
        if self.has_invalid_vertices() {
            self.beta
        } else {
            0.0
        }
    }

    pub fn has_invalid_vertices(&self) -> bool {
        self.mode_count < self.vertex_count()
    }

    /// Same encoding with a different fractionality weight.
    pub fn with_alpha(&self, alpha: f64) -> Self {
        EmbeddingConfig { alpha, ..*self }
    }

    pub fn is_valid_mode(&self, k: usize) -> bool {
        k < self.mode_count
    }

    /// `L_M(v) = α Σ v_i(1-v_i) + β Σ_{k≥M} Π_{i: k_i=1} v_i`.
    pub fn penalty(&self, v: &[f64]) -> Result<f64> {
        self.check_len(v)?;
        check_box(v)?;
        Ok(self.penalty_unchecked(v))
    }

    pub fn penalty_gradient(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v)?;
        check_box(v)?;
        let mut g = vec![0.0; v.len()];
        self.penalty_gradient_into(v, &mut g);
        Ok(g)
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.bit_count {
            return Err(Error::Domain(format!(
                "switch vector has {} bits, expected {}",
                v.len(),
                self.bit_count
            )));
        }
        Ok(())
    }

    pub(crate) fn penalty_unchecked(&self, v: &[f64]) -> f64 {
        let frac: f64 = v.iter().map(|&x| x * (1.0 - x)).sum();
        let mut invalid = 0.0;
        let beta = self.beta();
        if beta > 0.0 {
            for k in self.mode_count..self.vertex_count() {
                invalid += set_bit_product(k, v, None);
            }
        }
        self.alpha * frac + beta * invalid
    }

    pub(crate) fn penalty_gradient_into(&self, v: &[f64], out: &mut [f64]) {
        for (o, &x) in out.iter_mut().zip(v) {
            *o = self.alpha * (1.0 - 2.0 * x);
        }
        let beta = self.beta();
        if beta > 0.0 {
            for k in self.mode_count..self.vertex_count() {
                for (i, o) in out.iter_mut().enumerate() {
                    if (k >> i) & 1 == 1 {
                        *o += beta * set_bit_product(k, v, Some(i));
                    }
                }
            }
        }
    }

    /// Total weight `Σ_{k≥M} V_k(v)` sitting on invalid vertices.
    pub fn invalid_weight(&self, v: &[f64]) -> f64 {
        (self.mode_count..self.vertex_count())
            .map(|k| weight_unchecked(k, v))
            .sum()
    }
}

/// `Π_{i: k_i = 1, i ≠ skip} v_i`.
fn set_bit_product(k: usize, v: &[f64], skip: Option<usize>) -> f64 {
    v.iter()
        .enumerate()
        .filter(|&(i, _)| (k >> i) & 1 == 1 && Some(i) != skip)
        .map(|(_, &x)| x)
        .product()
}
