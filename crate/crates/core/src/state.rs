//! Parameter-manifold state of a Gaussian wave packet.
//!
//! A packet is described by its phase-space center `(q, p)` and a complex
//! symmetric width matrix `A + iB` with `B` positive definite:
//!
//! ```text
//! chi(x) = exp( (i/hbar) [ ½ (x-q)ᵀ (A + iB) (x-q) + p·(x-q) + phi + i delta ] )
//! ```
//!
//! The phase `phi` and norm parameter `delta` live only on [`WavePacketFull`];
//! dynamics act on [`PacketState`] and `delta` is recovered from `B` whenever
//! a normalized packet is needed.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest componentwise asymmetry that is silently averaged away.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Validated point `(q, p, A, B)` on `T*Rᵈ × Σ_d`.
#[derive(Debug, Clone)]
pub struct PacketState {
    q: DVector<f64>,
    p: DVector<f64>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    b_inv: DMatrix<f64>,
    b_chol: DMatrix<f64>,
}

impl PacketState {
    /// Validates and symmetrizes the inputs. `A` and `B` may carry an
    /// asymmetry up to [`SYMMETRY_TOL`]; `B` must pass a Cholesky test.
    pub fn new(q: DVector<f64>, p: DVector<f64>, a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let d = q.len();
        check_len("p", p.len(), d)?;
        check_square("A", &a, d)?;
        check_square("B", &b, d)?;
        check_symmetric("A", &a)?;
        check_symmetric("B", &b)?;
        Self::from_symmetrizable(q, p, a, b)
    }

    /// Convenience constructor from row-major slices.
    pub fn from_slices(q: &[f64], p: &[f64], a: &[f64], b: &[f64]) -> Result<Self> {
        let d = q.len();
        check_len("A", a.len(), d * d)?;
        check_len("B", b.len(), d * d)?;
        Self::new(DVector::from_column_slice(q), DVector::from_column_slice(p), DMatrix::from_row_slice(d, d, a), DMatrix::from_row_slice(d, d, b))
    }

    /// Builds a state from integrator output: matrices are symmetrized
    /// unconditionally, positive definiteness is still enforced.
    pub(crate) fn from_symmetrizable(q: DVector<f64>, p: DVector<f64>, a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if q.iter().chain(p.iter()).chain(a.iter()).chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("packet state"));
        }
        let a = symmetrize(&a);
        let b = symmetrize(&b);
        let chol = cholesky(&b)?;
        let b_chol = chol.l();
        let b_inv = symmetrize(&chol.inverse());
        Ok(Self { q, p, a, b, b_inv, b_chol })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn p(&self) -> &DVector<f64> {
        &self.p
    }

    /// Real part `A` of the width matrix.
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Imaginary part `B` of the width matrix.
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// `B⁻¹`, cached at construction.
    pub fn b_inv(&self) -> &DMatrix<f64> {
        &self.b_inv
    }

    /// Lower Cholesky factor `L` with `B = L Lᵀ`.
    pub fn b_cholesky(&self) -> &DMatrix<f64> {
        &self.b_chol
    }

    /// Smallest eigenvalue of `B`.
    pub fn min_eigenvalue_b(&self) -> f64 {
        SymmetricEigen::new(self.b.clone()).eigenvalues.min()
    }

    /// Flat layout `[q, p, A (row-major), B (row-major)]` used by the integrator.
    pub fn to_flat(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(2 * d + 2 * d * d);
        out.extend(self.q.iter());
        out.extend(self.p.iter());
        push_row_major(&mut out, &self.a);
        push_row_major(&mut out, &self.b);
        out
    }

    pub fn from_flat(d: usize, flat: &[f64]) -> Result<Self> {
        check_len("flat packet state", flat.len(), flat_len(d))?;
        let (q, rest) = flat.split_at(d);
        let (p, rest) = rest.split_at(d);
        let (a, b) = rest.split_at(d * d);
        Self::from_symmetrizable(
            DVector::from_column_slice(q),
            DVector::from_column_slice(p),
            DMatrix::from_row_slice(d, d, a),
            DMatrix::from_row_slice(d, d, b),
        )
    }

    /// Rotation action `(q, p, A, B) -> (Rq, Rp, R A Rᵀ, R B Rᵀ)`.
    pub fn rotated(&self, r: &DMatrix<f64>) -> Result<Self> {
        Self::from_symmetrizable(r * &self.q, r * &self.p, r * &self.a * r.transpose(), r * &self.b * r.transpose())
    }
}

/// Length of the flat layout for dimension `d`.
pub fn flat_len(d: usize) -> usize {
    2 * d + 2 * d * d
}

/// Packet with the phase and norm parameters that the reduced dynamics drop.
#[derive(Debug, Clone)]
pub struct WavePacketFull {
    pub state: PacketState,
    pub phi: f64,
    pub delta: f64,
}

impl WavePacketFull {
    /// Zero phase and `delta` chosen so the packet has unit norm.
    pub fn normalized(state: PacketState, hbar: f64) -> Self {
        let delta = normalization_delta(state.b(), hbar);
        Self { state, phi: 0.0, delta }
    }
}

/// Numerical configuration shared by the commands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub hbar: f64,
    pub dt: f64,
    pub t_final: f64,
    pub d: usize,
}

impl SimConfig {
    pub fn new(hbar: f64, dt: f64, t_final: f64, d: usize) -> Result<Self> {
        let cfg = Self { hbar, dt, t_final, d };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hbar > 0.0) || !self.hbar.is_finite() {
            return Err(Error::InvalidParameter(format!("hbar must be > 0, got {}", self.hbar)));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(Error::InvalidParameter(format!("t_final must be >= 0, got {}", self.t_final)));
        }
        if self.d == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        Ok(())
    }
}

/// Squared L² norm of the unnormalized packet:
/// `sqrt((pi hbar)^d / det B) * exp(-2 delta / hbar)`.
pub fn packet_norm_squared(b: &DMatrix<f64>, delta: f64, hbar: f64) -> f64 {
    let d = b.nrows() as f64;
    let log_det = log_det_spd(b);
    (0.5 * (d * (PI * hbar).ln() - log_det) - 2.0 * delta / hbar).exp()
}

/// The `delta` putting the packet on the unit-norm level set.
pub fn normalization_delta(b: &DMatrix<f64>, hbar: f64) -> f64 {
    let d = b.nrows() as f64;
    0.25 * hbar * (d * (PI * hbar).ln() - log_det_spd(b))
}

/// Complex amplitude of the packet at `x`.
pub fn evaluate_packet(wp: &WavePacketFull, hbar: f64, x: &[f64]) -> Complex64 {
    let s = &wp.state;
    let d = s.dim();
    let mut quad = Complex64::new(0.0, 0.0);
    let mut lin = 0.0;
    for i in 0..d {
        let yi = x[i] - s.q[i];
        lin += s.p[i] * yi;
        for j in 0..d {
            let yj = x[j] - s.q[j];
            quad += Complex64::new(s.a[(i, j)], s.b[(i, j)]) * (yi * yj);
        }
    }
    let exponent = 0.5 * quad + lin + wp.phi + Complex64::new(0.0, wp.delta);
    (Complex64::i() * exponent / hbar).exp()
}

/// Position covariance `(hbar/2) B⁻¹` of the normalized packet.
pub fn position_covariance(state: &PacketState, hbar: f64) -> DMatrix<f64> {
    state.b_inv() * (0.5 * hbar)
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn log_det_spd(b: &DMatrix<f64>) -> f64 {
    match Cholesky::new(b.clone()) {
        Some(c) => 2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>(),
        None => b.determinant().ln(),
    }
}

/// Cholesky with a diagnostic on failure: the first non-positive pivot, plus
/// the smallest eigenvalue of the (symmetric) input.
pub(crate) fn cholesky(b: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(b.clone()) {
        return Ok(c);
    }
    let n = b.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut pivot = b[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > 0.0) {
            let min_eig = SymmetricEigen::new(b.clone()).eigenvalues.min();
            return Err(Error::NotPositiveDefinite { index: j, pivot, min_eigenvalue: min_eig });
        }
        l[(j, j)] = pivot.sqrt();
        for i in (j + 1)..n {
            let mut s = b[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / l[(j, j)];
        }
    }
    // nalgebra rejected a matrix our pivots accept; only reachable for
    // pivots within rounding of zero.
    let min_eig = SymmetricEigen::new(b.clone()).eigenvalues.min();
    Err(Error::NotPositiveDefinite { index: n - 1, pivot: 0.0, min_eigenvalue: min_eig })
}

fn check_len(what: &'static str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::Dimension { what, got, expected });
    }
    Ok(())
}

fn check_square(what: &'static str, m: &DMatrix<f64>, d: usize) -> Result<()> {
    check_len(what, m.nrows(), d)?;
    check_len(what, m.ncols(), d)
}

fn check_symmetric(name: &'static str, m: &DMatrix<f64>) -> Result<()> {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let deviation = (m[(i, j)] - m[(j, i)]).abs();
            if !(deviation <= SYMMETRY_TOL) {
                return Err(Error::NotSymmetric { name, i, j, deviation });
            }
        }
    }
    Ok(())
}

fn push_row_major(out: &mut Vec<f64>, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
}
