//! Expectation values with respect to the normalized Gaussian `|chi|²`.
//!
//! `<U> = (1/N) ∫ U(x) exp(-(x-q)ᵀB(x-q)/hbar) dx` is evaluated with a
//! tensor-product Gauss–Hermite rule after the substitution
//! `x = q + sqrt(hbar) L⁻ᵀ u` (`B = L Lᵀ`), which maps the weight to
//! `exp(-|u|²)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::packet_kinetic_energy;
use crate::error::{Error, Result};
use crate::potentials::FieldModel;
use crate::state::{cholesky, PacketState};

pub const DEFAULT_GH_NODES: usize = 20;

/// Tensor-product Gauss–Hermite rule for the weight `exp(-|u|²)` on `Rᵈ`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    d: usize,
}

impl QuadratureRule {
    pub fn new(nodes_per_dim: usize, d: usize) -> Result<Self> {
        if nodes_per_dim == 0 {
            return Err(Error::InvalidParameter("gh_nodes must be >= 1".into()));
        }
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        let (nodes, weights) = gauss_hermite(nodes_per_dim);
        Ok(Self { nodes, weights, d })
    }

    pub fn nodes_per_dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Σ_i w_i f(u_i)` over the tensor grid, normalized by `π^{d/2}` so the
    /// result is an expectation under `N(0, I/2)`.
    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        let n = self.nodes.len();
        let mut idx = vec![0usize; self.d];
        let mut u = vec![0.0; self.d];
        let mut total = 0.0;
        loop {
            let mut w = 1.0;
            for (k, &i) in idx.iter().enumerate() {
                u[k] = self.nodes[i];
                w *= self.weights[i];
            }
            total += w * f(&u);
            // odometer
            let mut k = 0;
            loop {
                if k == self.d {
                    return total / PI.powf(0.5 * self.d as f64);
                }
                idx[k] += 1;
                if idx[k] < n {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }
}

/// Gauss–Hermite nodes and weights (physicists' weight `exp(-u²)`) by Newton
/// iteration on the orthonormal Hermite recurrence.
fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let m = n.div_ceil(2);
    let mut z: f64 = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-0.166_67),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    // ascending order
    x.reverse();
    w.reverse();
    (x, w)
}

/// Maps standard quadrature points to `x = q + sqrt(hbar) L⁻ᵀ u`.
struct GaussianMap {
    q: DVector<f64>,
    transform: DMatrix<f64>,
}

impl GaussianMap {
    fn new(q: &DVector<f64>, b: &DMatrix<f64>, hbar: f64) -> Result<Self> {
        let l = cholesky(b)?.l();
        let l_inv_t = l.transpose().try_inverse().ok_or_else(|| Error::InvalidParameter("singular Cholesky factor".into()))?;
        Ok(Self { q: q.clone(), transform: l_inv_t * hbar.sqrt() })
    }

    fn apply(&self, u: &[f64], x: &mut [f64]) {
        let d = self.q.len();
        for i in 0..d {
            x[i] = self.q[i] + (0..d).map(|j| self.transform[(i, j)] * u[j]).sum::<f64>();
        }
    }
}

/// `<U>` under the normalized Gaussian centered at `q` with width `B`.
pub fn gaussian_expectation<F: FnMut(&[f64]) -> f64>(mut u: F, q: &DVector<f64>, b: &DMatrix<f64>, hbar: f64, rule: &QuadratureRule) -> Result<f64> {
    if rule.dim() != q.len() {
        return Err(Error::Dimension { what: "quadrature rule", got: rule.dim(), expected: q.len() });
    }
    let map = GaussianMap::new(q, b, hbar)?;
    let mut x = vec![0.0; q.len()];
    Ok(rule.integrate(|uu| {
        map.apply(uu, &mut x);
        u(&x)
    }))
}

/// Two-term Laplace expansion `U(q) + (hbar/4) Tr(B⁻¹ D²U(q))`.
pub fn asymptotic_expectation(u_at_q: f64, hess_u_at_q: &DMatrix<f64>, b: &DMatrix<f64>, hbar: f64) -> Result<f64> {
    let b_inv = cholesky(b)?.inverse();
    Ok(u_at_q + 0.25 * hbar * (b_inv * hess_u_at_q).trace())
}

/// Exact central moment `<Π (x-q)^α>` for `|α| <= 4` via Isserlis' theorem
/// with covariance `(hbar/2) B⁻¹`. `alpha[i]` is the exponent of `x_i - q_i`.
pub fn polynomial_moment(alpha: &[u32], b: &DMatrix<f64>, hbar: f64) -> Result<f64> {
    if alpha.len() != b.nrows() {
        return Err(Error::Dimension { what: "multi-index", got: alpha.len(), expected: b.nrows() });
    }
    let order: u32 = alpha.iter().sum();
    if order > 4 {
        return Err(Error::InvalidParameter(format!("moment order {order} exceeds 4")));
    }
    if order % 2 == 1 {
        return Ok(0.0);
    }
    let sigma = cholesky(b)?.inverse() * (0.5 * hbar);
    let idx: Vec<usize> = alpha.iter().enumerate().flat_map(|(i, &k)| std::iter::repeat_n(i, k as usize)).collect();
    let s = |a: usize, b: usize| sigma[(idx[a], idx[b])];
    Ok(match order {
        0 => 1.0,
        2 => s(0, 1),
        _ => s(0, 1) * s(2, 3) + s(0, 2) * s(1, 3) + s(0, 3) * s(1, 2),
    })
}

/// Expectation of the Hamiltonian operator in the normalized packet, with
/// the potential terms integrated by quadrature:
///
/// ```text
/// p²/2m + (hbar/4m) Tr(B⁻¹(A² + B²)) - (1/m)<A·p> - (hbar/2m)<Tr(DAᵀ A B⁻¹)>
///       + (1/2m)<|A|²> + <V>
/// ```
pub fn full_hamiltonian(state: &PacketState, model: &dyn FieldModel, hbar: f64, rule: &QuadratureRule) -> Result<f64> {
    let d = state.dim();
    if model.dim() != d {
        return Err(Error::Dimension { what: "field model", got: model.dim(), expected: d });
    }
    let m = model.mass();
    let p = state.p();
    // A B⁻¹ contracted against DAᵀ: Tr(DAᵀ A C) = Σ_kj DA_kj (A C)_kj
    let ac = state.a() * state.b_inv();
    let mut a = vec![0.0; d];
    let mut jac = vec![0.0; d * d];
    let potential = gaussian_expectation(
        |x| {
            model.a(x, &mut a);
            model.jac_a(x, &mut jac);
            let a_dot_p: f64 = a.iter().zip(p.iter()).map(|(u, v)| u * v).sum();
            let asq: f64 = a.iter().map(|u| u * u).sum();
            let tr: f64 = (0..d).flat_map(|k| (0..d).map(move |j| (k, j))).map(|(k, j)| jac[k * d + j] * ac[(k, j)]).sum();
            -a_dot_p / m - 0.5 * hbar / m * tr + 0.5 * asq / m + model.v(x)
        },
        state.q(),
        state.b(),
        hbar,
        rule,
    )?;
    Ok(packet_kinetic_energy(state, m, hbar) + potential)
}
