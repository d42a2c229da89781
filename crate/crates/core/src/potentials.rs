//! Electromagnetic field models.
//!
//! Every model supplies the scalar potential `V`, the vector potential `A` and
//! their spatial derivatives up to third order. Third derivatives are only
//! needed contracted against a matrix, as the gradient of `Tr(M D²f)`, so that
//! is the only form exposed.
//!
//! All matrix-valued callbacks write row-major `d*d` slices into
//! caller-provided buffers; the Monte-Carlo ensemble calls them hundreds of
//! millions of times.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 4] = ["cosine1d", "quartic2d", "quadratic", "free"];

/// Scalar + vector potential with analytic derivatives, plus the particle mass.
pub trait FieldModel: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn mass(&self) -> f64;

    fn v(&self, x: &[f64]) -> f64;
    fn grad_v(&self, x: &[f64], out: &mut [f64]);
    /// Row-major Hessian of `V`.
    fn hess_v(&self, x: &[f64], out: &mut [f64]);
    /// `out[i] = ∂_i Σ_jk M_jk ∂_j ∂_k V`.
    fn grad_hess_trace_v(&self, x: &[f64], m: &[f64], out: &mut [f64]);

    fn a(&self, x: &[f64], out: &mut [f64]);
    /// Row-major Jacobian, `out[i*d + j] = ∂_j A_i`.
    fn jac_a(&self, x: &[f64], out: &mut [f64]);
    /// Row-major Hessian of the component `A_k`.
    fn hess_a(&self, x: &[f64], k: usize, out: &mut [f64]);
    /// `out[i] = ∂_i Σ_jl M_jl ∂_j ∂_l A_k`.
    fn grad_hess_trace_a(&self, x: &[f64], m: &[f64], k: usize, out: &mut [f64]);
}

pub type SharedField = Arc<dyn FieldModel>;

// ---------------------------------------------------------------------------
// |A|² by the product rule

/// `|A(x)|²`.
pub fn asq(model: &dyn FieldModel, x: &[f64]) -> f64 {
    let mut a = vec![0.0; model.dim()];
    model.a(x, &mut a);
    a.iter().map(|v| v * v).sum()
}

/// `∇|A|² = 2 DAᵀ A`.
pub fn grad_asq(model: &dyn FieldModel, x: &[f64], out: &mut [f64]) {
    let d = model.dim();
    let mut a = vec![0.0; d];
    let mut jac = vec![0.0; d * d];
    model.a(x, &mut a);
    model.jac_a(x, &mut jac);
    for i in 0..d {
        out[i] = 2.0 * (0..d).map(|k| jac[k * d + i] * a[k]).sum::<f64>();
    }
}

/// `D²|A|²_ij = 2 Σ_k (∂_i A_k ∂_j A_k + A_k ∂_ij A_k)`.
pub fn hess_asq(model: &dyn FieldModel, x: &[f64], out: &mut [f64]) {
    let d = model.dim();
    let mut a = vec![0.0; d];
    let mut jac = vec![0.0; d * d];
    let mut h = vec![0.0; d * d];
    model.a(x, &mut a);
    model.jac_a(x, &mut jac);
    out[..d * d].fill(0.0);
    for k in 0..d {
        model.hess_a(x, k, &mut h);
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] += 2.0 * (jac[k * d + i] * jac[k * d + j] + a[k] * h[i * d + j]);
            }
        }
    }
}

/// `∂_i Σ_jk M_jk ∂_j ∂_k |A|²`.
pub fn grad_hess_trace_asq(model: &dyn FieldModel, x: &[f64], m: &[f64], out: &mut [f64]) {
    let d = model.dim();
    let mut a = vec![0.0; d];
    let mut jac = vec![0.0; d * d];
    let mut h = vec![0.0; d * d];
    let mut g = vec![0.0; d];
    model.a(x, &mut a);
    model.jac_a(x, &mut jac);
    out[..d].fill(0.0);
    for l in 0..d {
        model.hess_a(x, l, &mut h);
        model.grad_hess_trace_a(x, m, l, &mut g);
        let row = &jac[l * d..(l + 1) * d];
        // Tr(M H_l), M g_l and Mᵀ g_l with g_l = ∇A_l
        let tr: f64 = (0..d).flat_map(|j| (0..d).map(move |k| (j, k))).map(|(j, k)| m[j * d + k] * h[j * d + k]).sum();
        for i in 0..d {
            let mut s = 0.0;
            for j in 0..d {
                let mg: f64 = (0..d).map(|k| m[j * d + k] * row[k]).sum();
                let mtg: f64 = (0..d).map(|k| m[k * d + j] * row[k]).sum();
                s += h[i * d + j] * (mg + mtg);
            }
            out[i] += 2.0 * (s + row[i] * tr + a[l] * g[i]);
        }
    }
}

// ---------------------------------------------------------------------------
// Built-in models

/// `V(x) = 1 - ½cos²x`, `A(x) = cos x`, `m = 1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Cosine1d;

impl FieldModel for Cosine1d {
    fn name(&self) -> &str {
        "cosine1d"
    }
    fn dim(&self) -> usize {
        1
    }
    fn mass(&self) -> f64 {
        1.0
    }
    fn v(&self, x: &[f64]) -> f64 {
        let c = x[0].cos();
        1.0 - 0.5 * c * c
    }
    fn grad_v(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[0].cos() * x[0].sin();
    }
    fn hess_v(&self, x: &[f64], out: &mut [f64]) {
        out[0] = (2.0 * x[0]).cos();
    }
    fn grad_hess_trace_v(&self, x: &[f64], m: &[f64], out: &mut [f64]) {
        out[0] = -2.0 * (2.0 * x[0]).sin() * m[0];
    }
    fn a(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[0].cos();
    }
    fn jac_a(&self, x: &[f64], out: &mut [f64]) {
        out[0] = -x[0].sin();
    }
    fn hess_a(&self, x: &[f64], _k: usize, out: &mut [f64]) {
        out[0] = -x[0].cos();
    }
    fn grad_hess_trace_a(&self, x: &[f64], m: &[f64], _k: usize, out: &mut [f64]) {
        out[0] = x[0].sin() * m[0];
    }
}

/// `V(x) = ½|x|² + ¼|x|⁴`, `A(x) = (-x₂, x₁)`, `m = 1`. Rotationally symmetric.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuarticRotational2d;

impl FieldModel for QuarticRotational2d {
    fn name(&self) -> &str {
        "quartic2d"
    }
    fn dim(&self) -> usize {
        2
    }
    fn mass(&self) -> f64 {
        1.0
    }
    fn v(&self, x: &[f64]) -> f64 {
        let r2 = x[0] * x[0] + x[1] * x[1];
        0.5 * r2 + 0.25 * r2 * r2
    }
    fn grad_v(&self, x: &[f64], out: &mut [f64]) {
        let s = 1.0 + x[0] * x[0] + x[1] * x[1];
        out[0] = s * x[0];
        out[1] = s * x[1];
    }
    fn hess_v(&self, x: &[f64], out: &mut [f64]) {
        let s = 1.0 + x[0] * x[0] + x[1] * x[1];
        out[0] = s + 2.0 * x[0] * x[0];
        out[1] = 2.0 * x[0] * x[1];
        out[2] = out[1];
        out[3] = s + 2.0 * x[1] * x[1];
    }
    fn grad_hess_trace_v(&self, x: &[f64], m: &[f64], out: &mut [f64]) {
        // ∂_i H_jk = 2(x_i δ_jk + δ_ij x_k + δ_ik x_j)
        let tr = m[0] + m[3];
        for i in 0..2 {
            let mx = m[i * 2] * x[0] + m[i * 2 + 1] * x[1];
            let mtx = m[i] * x[0] + m[2 + i] * x[1];
            out[i] = 2.0 * (x[i] * tr + mx + mtx);
        }
    }
    fn a(&self, x: &[f64], out: &mut [f64]) {
        out[0] = -x[1];
        out[1] = x[0];
    }
    fn jac_a(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&[0.0, -1.0, 1.0, 0.0]);
    }
    fn hess_a(&self, _x: &[f64], _k: usize, out: &mut [f64]) {
        out[..4].fill(0.0);
    }
    fn grad_hess_trace_a(&self, _x: &[f64], _m: &[f64], _k: usize, out: &mut [f64]) {
        out[..2].fill(0.0);
    }
}

/// `V = ½xᵀKx + bᵀx + c`, `A = M₀x + a₀`. Gaussian packets evolve exactly
/// under this class of fields.
#[derive(Debug, Clone)]
pub struct QuadraticLinear {
    name: String,
    d: usize,
    k: Vec<f64>,
    b: Vec<f64>,
    c: f64,
    m0: Vec<f64>,
    a0: Vec<f64>,
    mass: f64,
}

impl QuadraticLinear {
    /// `k` and `m0` are row-major `d*d`; `k` must be symmetric.
    pub fn new(k: &[f64], b: &[f64], c: f64, m0: &[f64], a0: &[f64], mass: f64) -> Result<Self> {
        let d = b.len();
        for (what, got, expected) in [("K", k.len(), d * d), ("M0", m0.len(), d * d), ("a0", a0.len(), d)] {
            if got != expected {
                return Err(Error::Dimension { what, got, expected });
            }
        }
        for i in 0..d {
            for j in (i + 1)..d {
                let deviation = (k[i * d + j] - k[j * d + i]).abs();
                if deviation > crate::state::SYMMETRY_TOL {
                    return Err(Error::NotSymmetric { name: "K", i, j, deviation });
                }
            }
        }
        if !(mass > 0.0) {
            return Err(Error::InvalidParameter(format!("mass must be > 0, got {mass}")));
        }
        Ok(Self { name: "quadratic".into(), d, k: k.to_vec(), b: b.to_vec(), c, m0: m0.to_vec(), a0: a0.to_vec(), mass })
    }

    /// `V = A = 0` in dimension `d`.
    pub fn free(d: usize, mass: f64) -> Result<Self> {
        let mut f = Self::new(&vec![0.0; d * d], &vec![0.0; d], 0.0, &vec![0.0; d * d], &vec![0.0; d], mass)?;
        f.name = "free".into();
        Ok(f)
    }

    /// `V = ½|x|²`, `A = 0`, unit mass.
    pub fn harmonic(d: usize) -> Self {
        let k = DMatrix::<f64>::identity(d, d);
        let mut f = Self::new(k.as_slice(), &vec![0.0; d], 0.0, &vec![0.0; d * d], &vec![0.0; d], 1.0).expect("identity is symmetric");
        f.name = "harmonic".into();
        f
    }
}

impl FieldModel for QuadraticLinear {
    fn name(&self) -> &str {
        &self.name
    }
    fn dim(&self) -> usize {
        self.d
    }
    fn mass(&self) -> f64 {
        self.mass
    }
    fn v(&self, x: &[f64]) -> f64 {
        let d = self.d;
        let mut s = self.c;
        for i in 0..d {
            s += self.b[i] * x[i];
            for j in 0..d {
                s += 0.5 * x[i] * self.k[i * d + j] * x[j];
            }
        }
        s
    }
    fn grad_v(&self, x: &[f64], out: &mut [f64]) {
        let d = self.d;
        for i in 0..d {
            out[i] = self.b[i] + (0..d).map(|j| self.k[i * d + j] * x[j]).sum::<f64>();
        }
    }
    fn hess_v(&self, _x: &[f64], out: &mut [f64]) {
        out[..self.d * self.d].copy_from_slice(&self.k);
    }
    fn grad_hess_trace_v(&self, _x: &[f64], _m: &[f64], out: &mut [f64]) {
        out[..self.d].fill(0.0);
    }
    fn a(&self, x: &[f64], out: &mut [f64]) {
        let d = self.d;
        for i in 0..d {
            out[i] = self.a0[i] + (0..d).map(|j| self.m0[i * d + j] * x[j]).sum::<f64>();
        }
    }
    fn jac_a(&self, _x: &[f64], out: &mut [f64]) {
        out[..self.d * self.d].copy_from_slice(&self.m0);
    }
    fn hess_a(&self, _x: &[f64], _k: usize, out: &mut [f64]) {
        out[..self.d * self.d].fill(0.0);
    }
    fn grad_hess_trace_a(&self, _x: &[f64], _m: &[f64], _k: usize, out: &mut [f64]) {
        out[..self.d].fill(0.0);
    }
}

/// Adds a linear term `tilt·x` to the scalar potential of another model.
/// Breaks rotational symmetry; used as a control in conservation checks.
#[derive(Clone)]
pub struct LinearTilt {
    inner: SharedField,
    tilt: Vec<f64>,
    name: String,
}

impl LinearTilt {
    pub fn new(inner: SharedField, tilt: Vec<f64>) -> Self {
        assert_eq!(inner.dim(), tilt.len(), "tilt dimension");
        let name = format!("{}+tilt", inner.name());
        Self { inner, tilt, name }
    }
}

impl FieldModel for LinearTilt {
    fn name(&self) -> &str {
        &self.name
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn mass(&self) -> f64 {
        self.inner.mass()
    }
    fn v(&self, x: &[f64]) -> f64 {
        self.inner.v(x) + self.tilt.iter().zip(x).map(|(t, xi)| t * xi).sum::<f64>()
    }
    fn grad_v(&self, x: &[f64], out: &mut [f64]) {
        self.inner.grad_v(x, out);
        for (o, t) in out.iter_mut().zip(&self.tilt) {
            *o += t;
        }
    }
    fn hess_v(&self, x: &[f64], out: &mut [f64]) {
        self.inner.hess_v(x, out)
    }
    fn grad_hess_trace_v(&self, x: &[f64], m: &[f64], out: &mut [f64]) {
        self.inner.grad_hess_trace_v(x, m, out)
    }
    fn a(&self, x: &[f64], out: &mut [f64]) {
        self.inner.a(x, out)
    }
    fn jac_a(&self, x: &[f64], out: &mut [f64]) {
        self.inner.jac_a(x, out)
    }
    fn hess_a(&self, x: &[f64], k: usize, out: &mut [f64]) {
        self.inner.hess_a(x, k, out)
    }
    fn grad_hess_trace_a(&self, x: &[f64], m: &[f64], k: usize, out: &mut [f64]) {
        self.inner.grad_hess_trace_a(x, m, k, out)
    }
}

pub fn cosine_1d() -> SharedField {
    Arc::new(Cosine1d)
}

pub fn quartic_rotational_2d() -> SharedField {
    Arc::new(QuarticRotational2d)
}

pub fn quadratic_linear(k: &[f64], b: &[f64], c: f64, m0: &[f64], a0: &[f64], mass: f64) -> Result<SharedField> {
    Ok(Arc::new(QuadraticLinear::new(k, b, c, m0, a0, mass)?))
}

/// Looks up a parameter-free built-in model. `quadratic` needs explicit
/// parameters and is built with [`quadratic_linear`] instead.
pub fn builtin(name: &str, d: usize, mass: f64) -> Result<SharedField> {
    match name {
        "cosine1d" => Ok(cosine_1d()),
        "quartic2d" => Ok(quartic_rotational_2d()),
        "free" => Ok(Arc::new(QuadraticLinear::free(d, mass)?)),
        "quadratic" => Err(Error::Config("potential 'quadratic' requires K, b, c, M0, a0 parameters".into())),
        other => Err(Error::Unknown { kind: "potential", name: other.to_string(), available: BUILTIN_NAMES.join(", ") }),
    }
}

// ---------------------------------------------------------------------------
// Finite-difference verification

/// Outcome of [`fd_cross_check`]: one entry per callback.
#[derive(Debug, Clone)]
pub struct FdReport {
    pub deviations: Vec<(String, f64)>,
    pub tol: f64,
}

impl FdReport {
    pub fn passed(&self) -> bool {
        self.failures().next().is_none()
    }

    pub fn failures(&self) -> impl Iterator<Item = &str> {
        self.deviations.iter().filter(move |(_, dev)| !(*dev <= self.tol)).map(|(name, _)| name.as_str())
    }

    pub fn max_deviation(&self) -> f64 {
        self.deviations.iter().map(|(_, d)| *d).fold(0.0, f64::max)
    }
}

fn rel_dev(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(1.0)
}

/// Central-difference derivative of a vector-valued function along `e_j`.
fn central<F: FnMut(&[f64], &mut [f64])>(x: &[f64], j: usize, h: f64, n: usize, mut f: F) -> Vec<f64> {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[j] += h;
    xm[j] -= h;
    let h = xp[j] - xm[j];
    let mut fp = vec![0.0; n];
    let mut fm = vec![0.0; n];
    f(&xp, &mut fp);
    f(&xm, &mut fm);
    fp.iter().zip(&fm).map(|(a, b)| (a - b) / h).collect()
}

/// Fixed, non-symmetric contraction matrix used to probe the third-derivative callbacks.
fn probe_matrix(d: usize) -> Vec<f64> {
    (0..d * d).map(|n| 0.7 - 0.3 * (n as f64) + 0.11 * ((n * n) as f64)).collect()
}

/// Compares every analytic derivative of `model` at `x` against central
/// differences of the next-lower-order callback.
pub fn fd_cross_check(model: &dyn FieldModel, x: &[f64], tol: f64) -> FdReport {
    let d = model.dim();
    let eps = f64::EPSILON;
    let scale = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    let h1 = eps.cbrt() * scale;
    let h2 = eps.powf(0.25) * scale;
    let m = probe_matrix(d);
    let mut deviations = Vec::new();
    let record = |deviations: &mut Vec<(String, f64)>, name: String, analytic: &[f64], fd: &[f64]| {
        let dev = analytic.iter().zip(fd).map(|(a, f)| rel_dev(*a, *f)).fold(0.0, f64::max);
        deviations.push((name, dev));
    };

    let mut grad = vec![0.0; d];
    model.grad_v(x, &mut grad);
    let fd: Vec<f64> = (0..d).map(|j| central(x, j, h1, 1, |y, o| o[0] = model.v(y))[0]).collect();
    record(&mut deviations, "grad_v".into(), &grad, &fd);

    let mut hess = vec![0.0; d * d];
    model.hess_v(x, &mut hess);
    let mut fd_hess = vec![0.0; d * d];
    for j in 0..d {
        let col = central(x, j, h2, d, |y, o| model.grad_v(y, o));
        for i in 0..d {
            fd_hess[i * d + j] = col[i];
        }
    }
    record(&mut deviations, "hess_v".into(), &hess, &fd_hess);
    let asym = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| (hess[i * d + j] - hess[j * d + i]).abs()).fold(0.0, f64::max);
    deviations.push(("hess_v symmetry".into(), asym));

    let mut ght = vec![0.0; d];
    model.grad_hess_trace_v(x, &m, &mut ght);
    let fd: Vec<f64> = (0..d)
        .map(|j| {
            central(x, j, h2, 1, |y, o| {
                let mut h = vec![0.0; d * d];
                model.hess_v(y, &mut h);
                o[0] = h.iter().zip(&m).map(|(a, b)| a * b).sum();
            })[0]
        })
        .collect();
    record(&mut deviations, "grad_hess_trace_v".into(), &ght, &fd);

    let mut jac = vec![0.0; d * d];
    model.jac_a(x, &mut jac);
    let mut fd_jac = vec![0.0; d * d];
    for j in 0..d {
        let col = central(x, j, h1, d, |y, o| model.a(y, o));
        for i in 0..d {
            fd_jac[i * d + j] = col[i];
        }
    }
    record(&mut deviations, "jac_a".into(), &jac, &fd_jac);

    for k in 0..d {
        let mut h = vec![0.0; d * d];
        model.hess_a(x, k, &mut h);
        let mut fd_h = vec![0.0; d * d];
        for j in 0..d {
            let col = central(x, j, h2, d, |y, o| {
                let mut jy = vec![0.0; d * d];
                model.jac_a(y, &mut jy);
                o.copy_from_slice(&jy[k * d..(k + 1) * d]);
            });
            for i in 0..d {
                fd_h[i * d + j] = col[i];
            }
        }
        record(&mut deviations, format!("hess_a[{k}]"), &h, &fd_h);

        let mut g = vec![0.0; d];
        model.grad_hess_trace_a(x, &m, k, &mut g);
        let fd: Vec<f64> = (0..d)
            .map(|j| {
                central(x, j, h2, 1, |y, o| {
                    let mut hy = vec![0.0; d * d];
                    model.hess_a(y, k, &mut hy);
                    o[0] = hy.iter().zip(&m).map(|(a, b)| a * b).sum();
                })[0]
            })
            .collect();
        record(&mut deviations, format!("grad_hess_trace_a[{k}]"), &g, &fd);
    }

    FdReport { deviations, tol }
}

/// Checks `V(Rx) = V(x)`, `A(Rx) = R A(x)` and `DA(Rx) = R DA(x) Rᵀ`.
pub fn rotational_symmetry_check(model: &dyn FieldModel, r: &DMatrix<f64>, x: &[f64], tol: f64) -> bool {
    let d = model.dim();
    let xv = nalgebra::DVector::from_column_slice(x);
    let rx = r * &xv;
    if (model.v(rx.as_slice()) - model.v(x)).abs() > tol {
        return false;
    }
    let mut a_x = vec![0.0; d];
    let mut a_rx = vec![0.0; d];
    model.a(x, &mut a_x);
    model.a(rx.as_slice(), &mut a_rx);
    let ra = r * nalgebra::DVector::from_column_slice(&a_x);
    if ra.iter().zip(&a_rx).any(|(u, v)| (u - v).abs() > tol) {
        return false;
    }
    let mut j_x = vec![0.0; d * d];
    let mut j_rx = vec![0.0; d * d];
    model.jac_a(x, &mut j_x);
    model.jac_a(rx.as_slice(), &mut j_rx);
    let rjr = r * DMatrix::from_row_slice(d, d, &j_x) * r.transpose();
    let j_rx = DMatrix::from_row_slice(d, d, &j_rx);
    (rjr - j_rx).amax() <= tol
}

/// Planar rotation by `theta` (counter-clockwise).
pub fn rotation_2d(theta: f64) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}
