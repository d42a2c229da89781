//! Equations of motion for the three models and their Hamiltonians.
//!
//! * classical: `(q, p)` under `H0 = (p - A(q))²/2m + V(q)`;
//! * Zhou: classical `(q, p)` plus the width Riccati equations driven by the
//!   Hessian of `H0` (exact for linear `A` and quadratic `V`);
//! * semiclassical: the Hamiltonian vector field of `H_hbar` with respect to
//!   `dq∧dp + (hbar/4) dB⁻¹∧dA`.
//!
//! [`bracket_rhs`] builds the Hamiltonian vector field of an arbitrary
//! function numerically and serves as the independent check on
//! [`semiclassical_rhs`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::potentials::{self, FieldModel};
use crate::state::{symmetrize, PacketState};

/// Point `(q, p)` of the classical phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalPhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl ClassicalPhasePoint {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if q.len() != p.len() {
            return Err(Error::Dimension { what: "p", got: p.len(), expected: q.len() });
        }
        if q.iter().chain(&p).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("classical phase point"));
        }
        Ok(Self { q, p })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }
}

impl From<&PacketState> for ClassicalPhasePoint {
    fn from(s: &PacketState) -> Self {
        Self { q: s.q().as_slice().to_vec(), p: s.p().as_slice().to_vec() }
    }
}

/// Time derivative of a [`PacketState`].
#[derive(Debug, Clone, PartialEq)]
pub struct PacketTangent {
    pub dq: DVector<f64>,
    pub dp: DVector<f64>,
    pub da: DMatrix<f64>,
    pub db: DMatrix<f64>,
}

impl PacketTangent {
    /// Same layout as [`PacketState::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.dq.iter().chain(self.dp.iter()).copied().collect();
        for m in [&self.da, &self.db] {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    out.push(m[(i, j)]);
                }
            }
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.to_flat().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest componentwise difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.to_flat().iter().zip(other.to_flat()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Potentials and derivatives at a single point, in matrix form.
struct LocalField {
    d: usize,
    v: f64,
    grad_v: DVector<f64>,
    hess_v: DMatrix<f64>,
    a: DVector<f64>,
    jac_a: DMatrix<f64>,
    hess_a: Vec<DMatrix<f64>>,
    asq: f64,
    grad_asq: DVector<f64>,
    hess_asq: DMatrix<f64>,
}

impl LocalField {
    fn at(model: &dyn FieldModel, x: &[f64]) -> Self {
        let d = model.dim();
        let mut buf = vec![0.0; d * d];
        let mut vec_buf = vec![0.0; d];

        model.grad_v(x, &mut vec_buf);
        let grad_v = DVector::from_column_slice(&vec_buf);
        model.hess_v(x, &mut buf);
        let hess_v = DMatrix::from_row_slice(d, d, &buf);
        model.a(x, &mut vec_buf);
        let a = DVector::from_column_slice(&vec_buf);
        model.jac_a(x, &mut buf);
        let jac_a = DMatrix::from_row_slice(d, d, &buf);
        let hess_a = (0..d)
            .map(|k| {
                model.hess_a(x, k, &mut buf);
                DMatrix::from_row_slice(d, d, &buf)
            })
            .collect();
        potentials::grad_asq(model, x, &mut vec_buf);
        let grad_asq = DVector::from_column_slice(&vec_buf);
        potentials::hess_asq(model, x, &mut buf);
        let hess_asq = DMatrix::from_row_slice(d, d, &buf);
        Self { d, v: model.v(x), grad_v, hess_v, asq: a.norm_squared(), a, jac_a, hess_a, grad_asq, hess_asq }
    }

    /// `D²(A·p) = Σ_k p_k D²A_k`.
    fn hess_a_dot(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.d, self.d);
        for (k, h) in self.hess_a.iter().enumerate() {
            out += h * p[k];
        }
        out
    }
}

fn check_dim(model: &dyn FieldModel, d: usize) {
    assert_eq!(model.dim(), d, "field model '{}' has dimension {}, state has {}", model.name(), model.dim(), d);
}

/// `H0 = (p - A(q))²/2m + V(q)`.
pub fn classical_hamiltonian(z: &ClassicalPhasePoint, model: &dyn FieldModel) -> f64 {
    check_dim(model, z.dim());
    let d = z.dim();
    let mut a = vec![0.0; d];
    model.a(&z.q, &mut a);
    let kin: f64 = z.p.iter().zip(&a).map(|(p, a)| (p - a) * (p - a)).sum();
    0.5 * kin / model.mass() + model.v(&z.q)
}

/// The potential-free part `p²/2m + (hbar/4m) Tr(B⁻¹(A² + B²))` shared by
/// the full and the expanded Hamiltonians.
pub fn packet_kinetic_energy(state: &PacketState, mass: f64, hbar: f64) -> f64 {
    let a2b2 = state.a() * state.a() + state.b() * state.b();
    0.5 * state.p().norm_squared() / mass + 0.25 * hbar / mass * (state.b_inv() * a2b2).trace()
}

/// Semiclassical Hamiltonian `H_hbar`: `H0` plus its `O(hbar)` correction.
pub fn semiclassical_hamiltonian(state: &PacketState, model: &dyn FieldModel, hbar: f64) -> f64 {
    check_dim(model, state.dim());
    let m = model.mass();
    let f = LocalField::at(model, state.q().as_slice());
    let (a, b, c, p) = (state.a(), state.b(), state.b_inv(), state.p());
    let h0 = 0.5 * (p - &f.a).norm_squared() / m + f.v;
    let inner = a * a + b * b - f.jac_a.transpose() * a - a * &f.jac_a - f.hess_a_dot(p) + &f.hess_asq * 0.5;
    h0 + 0.25 * hbar / m * (c * inner).trace() + 0.25 * hbar * (c * &f.hess_v).trace()
}

/// Potentials with their `O(hbar)` corrections at the packet center.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedPotentials {
    pub v: f64,
    pub a: DVector<f64>,
    pub asq: f64,
}

pub fn corrected_potentials(state: &PacketState, model: &dyn FieldModel, hbar: f64) -> CorrectedPotentials {
    check_dim(model, state.dim());
    let f = LocalField::at(model, state.q().as_slice());
    let c = state.b_inv();
    let corr = |h: &DMatrix<f64>| 0.25 * hbar * (c * h).trace();
    CorrectedPotentials {
        v: f.v + corr(&f.hess_v),
        a: DVector::from_iterator(f.d, f.a.iter().zip(&f.hess_a).map(|(a, h)| a + corr(h))),
        asq: f.asq + corr(&f.hess_asq),
    }
}

/// Hamilton's equations for `H0`.
pub fn classical_rhs(z: &ClassicalPhasePoint, model: &dyn FieldModel) -> ClassicalPhasePoint {
    check_dim(model, z.dim());
    let d = z.dim();
    let mut ws = ClassicalWorkspace::new(d);
    let mut out = vec![0.0; 2 * d];
    let mut flat = z.q.clone();
    flat.extend_from_slice(&z.p);
    ws.rhs(model, &flat, &mut out);
    let p = out.split_off(d);
    ClassicalPhasePoint { q: out, p }
}

/// Scratch buffers for allocation-free classical right-hand sides and RK4 steps.
#[derive(Debug, Clone)]
pub struct ClassicalWorkspace {
    d: usize,
    a: Vec<f64>,
    jac: Vec<f64>,
    grad_v: Vec<f64>,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl ClassicalWorkspace {
    pub fn new(d: usize) -> Self {
        let z = || vec![0.0; 2 * d];
        Self { d, a: vec![0.0; d], jac: vec![0.0; d * d], grad_v: vec![0.0; d], k: [z(), z(), z(), z()], tmp: z() }
    }

    /// `z = [q, p]`, `out = [q̇, ṗ]`.
    pub fn rhs(&mut self, model: &dyn FieldModel, z: &[f64], out: &mut [f64]) {
        let d = self.d;
        let (q, p) = z.split_at(d);
        let m = model.mass();
        model.a(q, &mut self.a);
        model.jac_a(q, &mut self.jac);
        model.grad_v(q, &mut self.grad_v);
        for i in 0..d {
            out[i] = (p[i] - self.a[i]) / m;
        }
        // ṗ_i = (1/m) Σ_k ∂_i A_k (p_k - A_k) - ∂_i V
        for i in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s += self.jac[k * d + i] * (p[k] - self.a[k]);
            }
            out[d + i] = s / m - self.grad_v[i];
        }
    }

    /// One classical RK4 step in place.
    pub fn rk4_step(&mut self, model: &dyn FieldModel, z: &mut [f64], dt: f64) {
        let n = z.len();
        let mut k = std::mem::take(&mut self.k);
        let mut tmp = std::mem::take(&mut self.tmp);
        self.rhs(model, z, &mut k[0]);
        for i in 0..n {
            tmp[i] = z[i] + 0.5 * dt * k[0][i];
        }
        self.rhs(model, &tmp, &mut k[1]);
        for i in 0..n {
            tmp[i] = z[i] + 0.5 * dt * k[1][i];
        }
        self.rhs(model, &tmp, &mut k[2]);
        for i in 0..n {
            tmp[i] = z[i] + dt * k[2][i];
        }
        self.rhs(model, &tmp, &mut k[3]);
        for i in 0..n {
            z[i] += dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }
        self.k = k;
        self.tmp = tmp;
    }
}

/// Width equations shared by the Zhou and semiclassical systems:
///
/// ```text
/// Ȧ = -(A² - B²)/m + (DAᵀA + A DA)/m + D²(A·p)/m - D²|A|²/2m - D²V
/// Ḃ = -(AB + BA)/m + (DAᵀB + B DA)/m
/// ```
fn width_rates(state: &PacketState, f: &LocalField, m: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (a, b) = (state.a(), state.b());
    let jt = f.jac_a.transpose();
    let da = (-(a * a - b * b) + &jt * a + a * &f.jac_a + f.hess_a_dot(state.p()) - &f.hess_asq * 0.5) / m - &f.hess_v;
    let db = (-(a * b + b * a) + &jt * b + b * &f.jac_a) / m;
    (symmetrize(&da), symmetrize(&db))
}

/// Zhou-model parameter equations: classical center, Riccati widths.
pub fn zhou_rhs(state: &PacketState, model: &dyn FieldModel) -> PacketTangent {
    check_dim(model, state.dim());
    let f = LocalField::at(model, state.q().as_slice());
    let m = model.mass();
    let p = state.p();
    let dq = (p - &f.a) / m;
    let dp = (f.jac_a.transpose() * (p - &f.a)) / m - &f.grad_v;
    let (da, db) = width_rates(state, &f, m);
    PacketTangent { dq, dp, da, db }
}

/// Hamiltonian vector field of [`semiclassical_hamiltonian`].
///
/// ```text
/// q̇ = (p - A_hbar)/m
/// ṗ = -(1/2m) ∇(|A|²_hbar - 2 A_hbar·p) - ∇V_hbar + (hbar/2m) Σ_kl ∂_i∂_l A_k (B⁻¹A)_lk
/// ```
///
/// The last term is the `q`-derivative of `-(hbar/2m) Tr(B⁻¹ A DA)` in
/// `H_hbar`; it vanishes when `A` is linear.
pub fn semiclassical_rhs(state: &PacketState, model: &dyn FieldModel, hbar: f64) -> PacketTangent {
    check_dim(model, state.dim());
    let d = state.dim();
    let m = model.mass();
    let x = state.q().as_slice();
    let f = LocalField::at(model, x);
    let p = state.p();
    let c = state.b_inv();
    let c_flat: Vec<f64> = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| c[(i, j)]).collect();

    let mut dq = DVector::zeros(d);
    for i in 0..d {
        let a_hbar = f.a[i] + 0.25 * hbar * (c * &f.hess_a[i]).trace();
        dq[i] = (p[i] - a_hbar) / m;
    }

    let mut ght_asq = vec![0.0; d];
    potentials::grad_hess_trace_asq(model, x, &c_flat, &mut ght_asq);
    let mut ght_v = vec![0.0; d];
    model.grad_hess_trace_v(x, &c_flat, &mut ght_v);
    let mut ght_a_dot_p = vec![0.0; d];
    let mut g = vec![0.0; d];
    for (l, p_l) in p.iter().enumerate() {
        model.grad_hess_trace_a(x, &c_flat, l, &mut g);
        for i in 0..d {
            ght_a_dot_p[i] += p_l * g[i];
        }
    }
    let ca = c * state.a();
    let jt_p = f.jac_a.transpose() * p;
    let mut dp = DVector::zeros(d);
    for i in 0..d {
        let grad_inner = f.grad_asq[i] + 0.25 * hbar * ght_asq[i] - 2.0 * jt_p[i] - 0.5 * hbar * ght_a_dot_p[i];
        let width_coupling: f64 = (0..d).flat_map(|k| (0..d).map(move |l| (k, l))).map(|(k, l)| f.hess_a[k][(i, l)] * ca[(l, k)]).sum();
        dp[i] = -0.5 / m * grad_inner - f.grad_v[i] - 0.25 * hbar * ght_v[i] + 0.5 * hbar / m * width_coupling;
    }

    let (da, db) = width_rates(state, &f, m);
    PacketTangent { dq, dp, da, db }
}

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Numerical Hamiltonian vector field of `h` for the symplectic form
/// `dq∧dp + (hbar/4) dB⁻¹_ij ∧ dA_ij`:
///
/// ```text
/// q̇ = ∂H/∂p,   ṗ = -∂H/∂q,   Ȧ = -(4/hbar) ∂H/∂B⁻¹,   d(B⁻¹)/dt = (4/hbar) ∂H/∂A
/// ```
///
/// Matrix gradients are taken entrywise over all `d²` entries and then
/// symmetrized; symmetric perturbations `E_ij + E_ji` give exactly that
/// symmetrized gradient while keeping every probed state symmetric.
pub fn bracket_rhs<H: Fn(&PacketState) -> f64>(h: H, state: &PacketState, hbar: f64, fd_step: f64) -> Result<PacketTangent> {
    if !(hbar > 0.0) {
        return Err(Error::InvalidParameter("bracket_rhs requires hbar > 0".into()));
    }
    if !(fd_step > 0.0) {
        return Err(Error::InvalidParameter("fd_step must be > 0".into()));
    }
    let d = state.dim();
    let eps = fd_step;
    let eval = |q: &DVector<f64>, p: &DVector<f64>, a: &DMatrix<f64>, c: &DMatrix<f64>| -> Result<f64> {
        let b = c.clone().try_inverse().ok_or(Error::NonFinite("perturbed B⁻¹"))?;
        Ok(h(&PacketState::from_symmetrizable(q.clone(), p.clone(), a.clone(), b)?))
    };
    let (q, p, a, c) = (state.q(), state.p(), state.a(), state.b_inv());

    let mut dq = DVector::zeros(d);
    let mut dp = DVector::zeros(d);
    for i in 0..d {
        let mut pp = p.clone();
        let mut pm = p.clone();
        pp[i] += eps;
        pm[i] -= eps;
        dq[i] = (eval(q, &pp, a, c)? - eval(q, &pm, a, c)?) / (2.0 * eps);
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[i] += eps;
        qm[i] -= eps;
        dp[i] = -(eval(&qp, p, a, c)? - eval(&qm, p, a, c)?) / (2.0 * eps);
    }

    let mut grad_c = DMatrix::zeros(d, d);
    let mut grad_a = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let mut e = DMatrix::zeros(d, d);
            e[(i, j)] = eps;
            e[(j, i)] = eps;
            // a symmetric off-diagonal perturbation moves two entries
            let weight = if i == j { 1.0 } else { 0.5 };
            let dc = (eval(q, p, a, &(c + &e))? - eval(q, p, a, &(c - &e))?) / (2.0 * eps) * weight;
            let da = (eval(q, p, &(a + &e), c)? - eval(q, p, &(a - &e), c)?) / (2.0 * eps) * weight;
            grad_c[(i, j)] = dc;
            grad_c[(j, i)] = dc;
            grad_a[(i, j)] = da;
            grad_a[(j, i)] = da;
        }
    }
    let da = grad_c * (-4.0 / hbar);
    let dc = grad_a * (4.0 / hbar);
    let db = -(state.b() * dc * state.b());
    Ok(PacketTangent { dq, dp, da, db: symmetrize(&db) })
}

// ---------------------------------------------------------------------------
// Fixed-step RK4

/// State types the integrator can advance: a flat coordinate view plus a
/// validating inverse.
pub trait OdeState: Clone {
    fn to_flat(&self) -> Vec<f64>;
    fn from_flat_like(&self, flat: &[f64]) -> Result<Self>;
}

impl OdeState for PacketState {
    fn to_flat(&self) -> Vec<f64> {
        PacketState::to_flat(self)
    }
    fn from_flat_like(&self, flat: &[f64]) -> Result<Self> {
        PacketState::from_flat(self.dim(), flat)
    }
}

impl OdeState for ClassicalPhasePoint {
    fn to_flat(&self) -> Vec<f64> {
        let mut v = self.q.clone();
        v.extend_from_slice(&self.p);
        v
    }
    fn from_flat_like(&self, flat: &[f64]) -> Result<Self> {
        let d = self.dim();
        ClassicalPhasePoint::new(flat[..d].to_vec(), flat[d..2 * d].to_vec())
    }
}

/// Named scalar observable recorded at every output time.
pub struct Monitor<'a, S> {
    pub name: String,
    pub f: Box<dyn Fn(&S) -> f64 + 'a>,
}

impl<'a, S> Monitor<'a, S> {
    pub fn new(name: impl Into<String>, f: impl Fn(&S) -> f64 + 'a) -> Self {
        Self { name: name.into(), f: Box::new(f) }
    }
}

/// Uniform-step time series with monitor values.
#[derive(Debug, Clone)]
pub struct Trajectory<S> {
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<S>,
    /// `(name, series)` in the order the monitors were supplied.
    pub monitors: Vec<(String, Vec<f64>)>,
}

impl<S> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn monitor(&self, name: &str) -> Option<&[f64]> {
        self.monitors.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    /// Index of the grid point at time `t`, if `t` lies on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = (t / self.dt).round();
        if k < 0.0 || (k * self.dt - t).abs() > 1e-9 * t.abs().max(1.0) {
            return None;
        }
        let k = k as usize;
        (k < self.times.len()).then_some(k)
    }

    /// Largest `|m(t) - m(0)|` of a monitor.
    pub fn monitor_drift(&self, name: &str) -> Option<f64> {
        let v = self.monitor(name)?;
        let v0 = *v.first()?;
        Some(v.iter().map(|x| (x - v0).abs()).fold(0.0, f64::max))
    }
}

/// Integration stopped early; `partial` holds every completed step.
#[derive(Debug, Clone)]
pub struct IntegrationAbort<S> {
    pub step: usize,
    pub cause: Error,
    pub partial: Trajectory<S>,
}

impl<S: std::fmt::Debug> std::fmt::Display for IntegrationAbort<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "integration aborted at step {}: {}", self.step, self.cause)
    }
}

impl<S: std::fmt::Debug> std::error::Error for IntegrationAbort<S> {}

/// Number of steps covering `[0, t_final]`; `t_final` is rounded to the grid.
pub fn step_count(dt: f64, t_final: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
    }
    if !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(Error::InvalidParameter(format!("t_final must be >= 0, got {t_final}")));
    }
    Ok((t_final / dt).round() as usize)
}

/// Classic fourth-order Runge–Kutta with a fixed step. Stage states are
/// revalidated, so a packet whose `B` loses positive definiteness stops the
/// run at that step.
pub fn rk4_integrate<S, F>(
    mut rhs: F,
    initial: S,
    dt: f64,
    t_final: f64,
    monitors: &[Monitor<'_, S>],
) -> std::result::Result<Trajectory<S>, Box<IntegrationAbort<S>>>
where
    S: OdeState,
    F: FnMut(&S) -> Result<Vec<f64>>,
{
    let n_steps = match step_count(dt, t_final) {
        Ok(n) => n,
        Err(cause) => {
            let partial = Trajectory { dt, times: vec![], states: vec![], monitors: vec![] };
            return Err(Box::new(IntegrationAbort { step: 0, cause, partial }));
        }
    };
    let mut traj = Trajectory {
        dt,
        times: Vec::with_capacity(n_steps + 1),
        states: Vec::with_capacity(n_steps + 1),
        monitors: monitors.iter().map(|m| (m.name.clone(), Vec::with_capacity(n_steps + 1))).collect(),
    };
    let record = |traj: &mut Trajectory<S>, t: f64, s: S| {
        for (slot, m) in traj.monitors.iter_mut().zip(monitors) {
            slot.1.push((m.f)(&s));
        }
        traj.times.push(t);
        traj.states.push(s);
    };
    record(&mut traj, 0.0, initial.clone());

    let mut current = initial;
    for step in 1..=n_steps {
        match rk4_step(&mut rhs, &current, dt) {
            Ok(next) => {
                record(&mut traj, step as f64 * dt, next.clone());
                current = next;
            }
            Err(cause) => return Err(Box::new(IntegrationAbort { step, cause, partial: traj })),
        }
    }
    Ok(traj)
}

fn rk4_step<S: OdeState, F: FnMut(&S) -> Result<Vec<f64>>>(rhs: &mut F, s: &S, dt: f64) -> Result<S> {
    let y = s.to_flat();
    let offset = |k: &[f64], h: f64| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + h * b).collect() };
    let k1 = rhs(s)?;
    let k2 = rhs(&s.from_flat_like(&offset(&k1, 0.5 * dt))?)?;
    let k3 = rhs(&s.from_flat_like(&offset(&k2, 0.5 * dt))?)?;
    let k4 = rhs(&s.from_flat_like(&offset(&k3, dt))?)?;
    let next: Vec<f64> = (0..y.len()).map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect();
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("integrated state"));
    }
    s.from_flat_like(&next)
}

/// Which parameter equations to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Classical,
    Zhou,
    Semiclassical,
}

impl ModelKind {
    pub const NAMES: [&'static str; 3] = ["classical", "zhou", "semiclassical"];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Classical => "classical",
            Self::Zhou => "zhou",
            Self::Semiclassical => "semiclassical",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classical" => Ok(Self::Classical),
            "zhou" => Ok(Self::Zhou),
            "semiclassical" => Ok(Self::Semiclassical),
            other => Err(Error::Unknown { kind: "model", name: other.into(), available: Self::NAMES.join(", ") }),
        }
    }
}

/// Packet trajectory under the chosen equations. Under `Classical` the
/// widths are frozen and only `(q, p)` move.
pub fn integrate_packet(
    kind: ModelKind,
    model: &dyn FieldModel,
    initial: PacketState,
    hbar: f64,
    dt: f64,
    t_final: f64,
    monitors: &[Monitor<'_, PacketState>],
) -> std::result::Result<Trajectory<PacketState>, Box<IntegrationAbort<PacketState>>> {
    let rhs = |s: &PacketState| -> Result<Vec<f64>> {
        Ok(match kind {
            ModelKind::Semiclassical => semiclassical_rhs(s, model, hbar).to_flat(),
            ModelKind::Zhou => zhou_rhs(s, model).to_flat(),
            ModelKind::Classical => {
                let z = classical_rhs(&ClassicalPhasePoint::from(s), model);
                let d = s.dim();
                let mut v = z.q;
                v.extend(z.p);
                v.resize(2 * d + 2 * d * d, 0.0);
                v
            }
        })
    };
    rk4_integrate(rhs, initial, dt, t_final, monitors)
}
