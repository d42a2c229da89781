//! Egorov/IVR reference: Wigner sampling of the initial packet, classical
//! transport of each sample, and ensemble averages with standard errors.
//!
//! Sample `i` is drawn from its own ChaCha stream keyed by `(seed, i)`, and
//! ensemble statistics are accumulated in fixed-size blocks merged in block
//! order. Results are therefore bitwise identical for any worker count.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dynamics::{step_count, ClassicalWorkspace, Trajectory};
use crate::error::{Error, Result};
use crate::potentials::FieldModel;
use crate::state::PacketState;

/// Default ensemble size.
pub const DEFAULT_SAMPLES: usize = 1_000_000;

/// Samples (or antithetic pairs) per accumulation block.
pub const BLOCK_SIZE: usize = 4096;

/// Blocks processed between two ordered merges; bounds peak memory.
const BLOCKS_PER_WAVE: usize = 64;

/// Phase-space function averaged over the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    Position(usize),
    Momentum(usize),
    /// Classical symbol `H₀ = |p - A(q)|²/2m + V(q)`.
    Energy,
    /// `q_i p_j - q_j p_i`; `AngularMomentum(0, 1)` is `L_z` in the plane.
    AngularMomentum(usize, usize),
}

impl Observable {
    pub fn name(&self) -> String {
        match *self {
            Observable::Position(i) => format!("q{}", i + 1),
            Observable::Momentum(i) => format!("p{}", i + 1),
            Observable::Energy => "H0".into(),
            Observable::AngularMomentum(0, 1) => "Lz".into(),
            Observable::AngularMomentum(i, j) => format!("L{}{}", i + 1, j + 1),
        }
    }

    /// Positions then momenta.
    pub fn phase_space(d: usize) -> Vec<Observable> {
        (0..d).map(Observable::Position).chain((0..d).map(Observable::Momentum)).collect()
    }

    /// Phase space, energy, and `L_z` when `d = 2`.
    pub fn standard_set(d: usize) -> Vec<Observable> {
        let mut v = Self::phase_space(d);
        v.push(Observable::Energy);
        if d == 2 {
            v.push(Observable::AngularMomentum(0, 1));
        }
        v
    }

    fn check(&self, d: usize) -> Result<()> {
        let ok = match *self {
            Observable::Position(i) | Observable::Momentum(i) => i < d,
            Observable::Energy => true,
            Observable::AngularMomentum(i, j) => i < d && j < d && i != j,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("observable {self:?} is not defined in d = {d}")))
        }
    }

    fn eval(&self, model: &dyn FieldModel, z: &[f64], a_buf: &mut [f64]) -> f64 {
        let d = a_buf.len();
        let (q, p) = z.split_at(d);
        match *self {
            Observable::Position(i) => q[i],
            Observable::Momentum(i) => p[i],
            Observable::Energy => {
                model.a(q, a_buf);
                let kin: f64 = p.iter().zip(a_buf.iter()).map(|(pi, ai)| (pi - ai).powi(2)).sum();
                kin / (2.0 * model.mass()) + model.v(q)
            }
            Observable::AngularMomentum(i, j) => q[i] * p[j] - q[j] * p[i],
        }
    }
}

/// Lazily generated Wigner samples of a Gaussian packet.
///
/// Position `x ~ N(q, (ℏ/2)ℬ⁻¹)` and momentum `ξ = p + 𝒜(x - q) + η` with
/// `η ~ N(0, (ℏ/2)ℬ)`. In antithetic mode sample `2k + 1` mirrors sample `2k`
/// through `(q, p)`, and the pair mean is the statistical unit.
#[derive(Debug, Clone)]
pub struct PhaseEnsemble {
    d: usize,
    q: Vec<f64>,
    p: Vec<f64>,
    a: Vec<f64>,
    /// `√(ℏ/2) L⁻ᵀ`, row-major.
    x_map: Vec<f64>,
    /// `√(ℏ/2) L`, row-major.
    eta_map: Vec<f64>,
    hbar: f64,
    seed: u64,
    n: usize,
    antithetic: bool,
}

/// Draws `n` Wigner samples of `state`.
pub fn wigner_sample(state: &PacketState, hbar: f64, seed: u64, n: usize) -> Result<PhaseEnsemble> {
    PhaseEnsemble::new(state, hbar, seed, n, false)
}

impl PhaseEnsemble {
    pub fn new(state: &PacketState, hbar: f64, seed: u64, n: usize, antithetic: bool) -> Result<Self> {
        if !(hbar >= 0.0 && hbar.is_finite()) {
            return Err(Error::InvalidParameter(format!("hbar must be finite and non-negative, got {hbar}")));
        }
        if n == 0 {
            return Err(Error::InvalidParameter("ensemble needs at least one sample".into()));
        }
        if antithetic && n % 2 != 0 {
            return Err(Error::InvalidParameter(format!("antithetic ensembles need an even sample count, got {n}")));
        }
        let d = state.dim();
        let s = (0.5 * hbar).sqrt();
        let l = state.b_cholesky();
        let l_inv = l.clone().try_inverse().ok_or(Error::NonFinite("Cholesky factor inverse"))?;
        let row_major = |m: &nalgebra::DMatrix<f64>| (0..d * d).map(|k| s * m[(k / d, k % d)]).collect::<Vec<_>>();
        Ok(Self {
            d,
            q: state.q().as_slice().to_vec(),
            p: state.p().as_slice().to_vec(),
            a: (0..d * d).map(|k| state.a()[(k / d, k % d)]).collect(),
            x_map: row_major(&l_inv.transpose()),
            eta_map: row_major(l),
            hbar,
            seed,
            n,
            antithetic,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_antithetic(&self) -> bool {
        self.antithetic
    }

    /// Number of independent statistical units.
    pub fn units(&self) -> usize {
        if self.antithetic {
            self.n / 2
        } else {
            self.n
        }
    }

    fn stream(&self, k: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(k as u64);
        rng
    }

    /// Writes sample `i` as `z = [x, ξ]`.
    pub fn sample_into(&self, i: usize, z: &mut [f64]) {
        assert!(i < self.n, "sample index {i} out of range for ensemble of {}", self.n);
        let (k, sign) = if self.antithetic { (i / 2, if i % 2 == 0 { 1.0 } else { -1.0 }) } else { (i, 1.0) };
        let mut rng = self.stream(k);
        let d = self.d;
        let (x, xi) = z.split_at_mut(d);
        // draw z1 into xi and z2 into x as scratch, then map
        for v in xi.iter_mut().chain(x.iter_mut()) {
            *v = sign * rng.sample::<f64, _>(StandardNormal);
        }
        let mut dx = [0.0; 8];
        let mut eta = [0.0; 8];
        assert!(d <= 8, "ensemble dimension above 8 unsupported");
        for r in 0..d {
            for c in 0..d {
                dx[r] += self.x_map[r * d + c] * xi[c];
                eta[r] += self.eta_map[r * d + c] * x[c];
            }
        }
        for r in 0..d {
            x[r] = self.q[r] + dx[r];
        }
        for r in 0..d {
            let mut s = self.p[r] + eta[r];
            for c in 0..d {
                s += self.a[r * d + c] * dx[c];
            }
            xi[r] = s;
        }
    }

    /// All samples as `[x, ξ]` rows.
    pub fn materialize(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| {
                let mut z = vec![0.0; 2 * self.d];
                self.sample_into(i, &mut z);
                z
            })
            .collect()
    }
}

/// Output grid and observables for [`propagate_ensemble`].
#[derive(Debug, Clone)]
pub struct EgorovPlan {
    pub dt: f64,
    pub t_final: f64,
    pub observables: Vec<Observable>,
    /// Record every `output_stride`-th step; the final step is always recorded.
    pub output_stride: usize,
}

impl EgorovPlan {
    pub fn new(dt: f64, t_final: f64, observables: Vec<Observable>) -> Self {
        Self { dt, t_final, observables, output_stride: 1 }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.output_stride = stride;
        self
    }

    /// Step indices at which observables are recorded; always includes the last step.
    pub fn record_steps(&self) -> Result<Vec<usize>> {
        if self.output_stride == 0 {
            return Err(Error::InvalidParameter("output stride must be at least 1".into()));
        }
        let n = step_count(self.dt, self.t_final)?;
        let mut steps: Vec<usize> = (0..=n).step_by(self.output_stride).collect();
        if steps.last() != Some(&n) {
            steps.push(n);
        }
        Ok(steps)
    }
}

/// Mean and standard-error series per observable.
#[derive(Debug, Clone, PartialEq)]
pub struct EgorovEstimate {
    pub times: Vec<f64>,
    pub observables: Vec<Observable>,
    /// `mean[k][t]` for observable `k` at output time `t`.
    pub mean: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
    /// Samples that stayed finite.
    pub used: usize,
    /// Samples dropped because their trajectory overflowed.
    pub excluded: usize,
}

impl EgorovEstimate {
    pub fn series(&self, obs: Observable) -> Option<(&[f64], &[f64])> {
        let k = self.observables.iter().position(|o| *o == obs)?;
        Some((&self.mean[k], &self.se[k]))
    }

    pub fn index_of(&self, t: f64) -> Option<usize> {
        let dt = if self.times.len() > 1 { self.times[1] - self.times[0] } else { 1.0 };
        self.times.iter().position(|s| (s - t).abs() <= 1e-9 * dt.abs().max(1.0))
    }

    /// Mean phase point `(q, p)` and the norm of its standard-error vector.
    pub fn phase_point(&self, idx: usize, d: usize) -> Result<(Vec<f64>, f64)> {
        let mut z = Vec::with_capacity(2 * d);
        let mut se2 = 0.0;
        for obs in Observable::phase_space(d) {
            let (m, s) = self.series(obs).ok_or_else(|| Error::InvalidParameter(format!("estimate lacks observable {}", obs.name())))?;
            z.push(m[idx]);
            se2 += s[idx] * s[idx];
        }
        Ok((z, se2.sqrt()))
    }
}

/// Running mean and centered sum of squares.
#[derive(Debug, Clone)]
struct Moments {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Self { n: 0, mean: vec![0.0; len], m2: vec![0.0; len] }
    }

    fn push(&mut self, values: &[f64]) {
        self.n += 1;
        let inv = 1.0 / self.n as f64;
        for ((m, s), v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(values) {
            let delta = v - *m;
            *m += delta * inv;
            *s += delta * (v - *m);
        }
    }

    fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            self.clone_from(other);
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        for k in 0..self.mean.len() {
            let delta = other.mean[k] - self.mean[k];
            self.mean[k] += delta * nb / n;
            self.m2[k] += other.m2[k] + delta * delta * na * nb / n;
        }
        self.n += other.n;
    }
}

struct BlockResult {
    moments: Moments,
    excluded: usize,
}

/// Transports one sample and writes its recorded observables; `false` on overflow.
#[allow(clippy::too_many_arguments)]
fn run_sample(
    ens: &PhaseEnsemble,
    i: usize,
    model: &dyn FieldModel,
    plan: &EgorovPlan,
    steps: &[usize],
    ws: &mut ClassicalWorkspace,
    z: &mut [f64],
    a_buf: &mut [f64],
    out: &mut [f64],
) -> bool {
    ens.sample_into(i, z);
    let nobs = plan.observables.len();
    let mut step = 0;
    for (t_idx, &target) in steps.iter().enumerate() {
        while step < target {
            ws.rk4_step(model, z, plan.dt);
            step += 1;
            if !z.iter().all(|v| v.is_finite()) {
                return false;
            }
        }
        for (k, obs) in plan.observables.iter().enumerate() {
            let v = obs.eval(model, z, a_buf);
            if !v.is_finite() {
                return false;
            }
            out[t_idx * nobs + k] = v;
        }
    }
    true
}

fn run_block(ens: &PhaseEnsemble, block: usize, model: &dyn FieldModel, plan: &EgorovPlan, steps: &[usize]) -> BlockResult {
    let d = ens.d;
    let len = steps.len() * plan.observables.len();
    let mut ws = ClassicalWorkspace::new(d);
    let mut z = vec![0.0; 2 * d];
    let mut a_buf = vec![0.0; d];
    let mut vals = vec![0.0; len];
    let mut mirror = vec![0.0; len];
    let mut moments = Moments::new(len);
    let mut excluded = 0;
    let start = block * BLOCK_SIZE;
    let end = ((block + 1) * BLOCK_SIZE).min(ens.units());
    for unit in start..end {
        if ens.antithetic {
            let ok_a = run_sample(ens, 2 * unit, model, plan, steps, &mut ws, &mut z, &mut a_buf, &mut vals);
            let ok_b = run_sample(ens, 2 * unit + 1, model, plan, steps, &mut ws, &mut z, &mut a_buf, &mut mirror);
            if ok_a && ok_b {
                for (v, w) in vals.iter_mut().zip(&mirror) {
                    *v = 0.5 * (*v + w);
                }
                moments.push(&vals);
            } else {
                excluded += 2;
            }
        } else if run_sample(ens, unit, model, plan, steps, &mut ws, &mut z, &mut a_buf, &mut vals) {
            moments.push(&vals);
        } else {
            excluded += 1;
        }
    }
    BlockResult { moments, excluded }
}

#[cfg(feature = "parallel")]
fn run_wave(ens: &PhaseEnsemble, blocks: std::ops::Range<usize>, model: &dyn FieldModel, plan: &EgorovPlan, steps: &[usize]) -> Vec<BlockResult> {
    use rayon::prelude::*;
    blocks.into_par_iter().map(|b| run_block(ens, b, model, plan, steps)).collect()
}

#[cfg(not(feature = "parallel"))]
fn run_wave(ens: &PhaseEnsemble, blocks: std::ops::Range<usize>, model: &dyn FieldModel, plan: &EgorovPlan, steps: &[usize]) -> Vec<BlockResult> {
    blocks.map(|b| run_block(ens, b, model, plan, steps)).collect()
}

/// Transports every sample under the classical flow and averages the observables.
pub fn propagate_ensemble(ens: &PhaseEnsemble, model: &dyn FieldModel, plan: &EgorovPlan) -> Result<EgorovEstimate> {
    if model.dim() != ens.d {
        return Err(Error::Dimension { what: "ensemble vs model", got: ens.d, expected: model.dim() });
    }
    if plan.observables.is_empty() {
        return Err(Error::InvalidParameter("no observables requested".into()));
    }
    for obs in &plan.observables {
        obs.check(ens.d)?;
    }
    let steps = plan.record_steps()?;
    let nobs = plan.observables.len();
    let n_blocks = ens.units().div_ceil(BLOCK_SIZE);
    let mut total = Moments::new(steps.len() * nobs);
    let mut excluded = 0;
    let mut first = 0;
    while first < n_blocks {
        let last = (first + BLOCKS_PER_WAVE).min(n_blocks);
        for r in run_wave(ens, first..last, model, plan, &steps) {
            total.merge(&r.moments);
            excluded += r.excluded;
        }
        first = last;
    }
    if total.n == 0 {
        return Err(Error::NonFinite("every ensemble sample overflowed"));
    }
    let n = total.n as f64;
    let se_of = |m2: f64| if total.n > 1 { (m2 / (n - 1.0)).sqrt() / n.sqrt() } else { f64::NAN };
    let mut mean = vec![Vec::with_capacity(steps.len()); nobs];
    let mut se = vec![Vec::with_capacity(steps.len()); nobs];
    for t in 0..steps.len() {
        for k in 0..nobs {
            mean[k].push(total.mean[t * nobs + k]);
            se[k].push(se_of(total.m2[t * nobs + k]));
        }
    }
    let unit = if ens.antithetic { 2 } else { 1 };
    Ok(EgorovEstimate {
        times: steps.iter().map(|&s| s as f64 * plan.dt).collect(),
        observables: plan.observables.clone(),
        mean,
        se,
        used: total.n * unit,
        excluded,
    })
}

/// Euclidean phase-space distance between a trajectory and the Egorov mean at `t_star`.
pub fn phase_error(traj: &Trajectory<PacketState>, est: &EgorovEstimate, t_star: f64) -> Result<f64> {
    let miss = || Error::InvalidParameter(format!("t_star = {t_star} is not on the common time grid"));
    let i = traj.index_of(t_star).ok_or_else(miss)?;
    let j = est.index_of(t_star).ok_or_else(miss)?;
    let s = &traj.states[i];
    let (mean, _) = est.phase_point(j, s.dim())?;
    let model: Vec<f64> = s.q().iter().chain(s.p().iter()).copied().collect();
    Ok(mean.iter().zip(&model).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
}
