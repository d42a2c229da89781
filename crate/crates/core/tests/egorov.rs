mod common;

use nalgebra::DMatrix;

use gwp_core::egorov::*;
use gwp_core::expectations::{full_hamiltonian, QuadratureRule};
use gwp_core::potentials::{cosine_1d, quartic_rotational_2d, FieldModel, QuadraticLinear};
use gwp_core::PacketState;

fn state_2d() -> PacketState {
    PacketState::from_slices(&[0.3, -0.2], &[1.0, 0.5], &[0.7, -0.4, -0.4, 1.2], &[1.5, 0.3, 0.3, 0.8]).unwrap()
}

#[test]
fn zero_hbar_collapses() {
    let ens = wigner_sample(&state_2d(), 0.0, 1, 10).unwrap();
    for z in ens.materialize() {
        assert_eq!(z, vec![0.3, -0.2, 1.0, 0.5]);
    }
}

#[test]
fn samples_are_keyed_by_index() {
    let s = state_2d();
    let small = wigner_sample(&s, 0.3, 7, 5).unwrap().materialize();
    let large = wigner_sample(&s, 0.3, 7, 50).unwrap().materialize();
    assert_eq!(small[..], large[..5]);
    assert_ne!(small, wigner_sample(&s, 0.3, 8, 5).unwrap().materialize());
}

#[test]
fn antithetic_pairs_mirror() {
    let ens = PhaseEnsemble::new(&state_2d(), 0.3, 3, 4, true).unwrap();
    let z = ens.materialize();
    let centre = [0.3, -0.2, 1.0, 0.5];
    for k in 0..4 {
        assert!((z[0][k] + z[1][k] - 2.0 * centre[k]).abs() < 1e-14);
    }
    assert!(PhaseEnsemble::new(&state_2d(), 0.3, 3, 5, true).is_err());
}

#[test]
fn block_reduction_matches_two_pass() {
    // spans several blocks and a partial one
    let n = 3 * BLOCK_SIZE + 17;
    let ens = wigner_sample(&state_2d(), 0.3, 11, n).unwrap();
    let plan = EgorovPlan::new(0.1, 0.0, vec![Observable::Position(0), Observable::Momentum(1)]);
    let est = propagate_ensemble(&ens, &QuadraticLinear::free(2, 1.0).unwrap(), &plan).unwrap();
    let samples = ens.materialize();
    for (k, col) in [0usize, 3].into_iter().enumerate() {
        let xs: Vec<f64> = samples.iter().map(|z| z[col]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((est.mean[k][0] - mean).abs() < 1e-13);
        assert!((est.se[k][0] - (var / n as f64).sqrt()).abs() < 1e-13);
    }
}

#[test]
fn record_grid() {
    let plan = EgorovPlan::new(0.1, 1.0, vec![Observable::Position(0)]).with_stride(3);
    assert_eq!(plan.record_steps().unwrap(), vec![0, 3, 6, 9, 10]);
    let zero = EgorovPlan::new(0.1, 0.0, vec![Observable::Position(0)]);
    assert_eq!(zero.record_steps().unwrap(), vec![0]);
}

#[test]
fn free_particle_mean_is_linear() {
    let model = QuadraticLinear::free(1, 1.0).unwrap();
    let s = PacketState::from_slices(&[0.5], &[2.0], &[0.3], &[1.0]).unwrap();
    let ens = wigner_sample(&s, 0.2, 11, 20_000).unwrap();
    let est = propagate_ensemble(&ens, &model, &EgorovPlan::new(0.01, 1.0, Observable::phase_space(1))).unwrap();
    let (m, se) = est.series(Observable::Position(0)).unwrap();
    for (t, (mi, si)) in est.times.iter().zip(m.iter().zip(se)) {
        assert!((mi - (0.5 + 2.0 * t)).abs() < 4.0 * si, "t={t} mean={mi} se={si}");
    }
    assert_eq!(est.excluded, 0);
    assert_eq!(est.used, 20_000);
}

#[test]
fn rejects_bad_inputs() {
    let s = state_2d();
    let model = QuadraticLinear::harmonic(1);
    let ens = wigner_sample(&s, 0.1, 0, 10).unwrap();
    assert!(propagate_ensemble(&ens, &model, &EgorovPlan::new(0.01, 0.1, vec![Observable::Energy])).is_err());
    let model2 = QuadraticLinear::harmonic(2);
    assert!(propagate_ensemble(&ens, &model2, &EgorovPlan::new(0.01, 0.1, vec![Observable::Position(2)])).is_err());
    assert!(propagate_ensemble(&ens, &model2, &EgorovPlan::new(0.01, 0.1, vec![])).is_err());
    assert!(wigner_sample(&s, -0.1, 0, 10).is_err());
    assert!(wigner_sample(&s, 0.1, 0, 0).is_err());
}

/// Sample moments of `[x, ξ]` with per-entry standard errors.
struct SampleMoments {
    mean: Vec<f64>,
    mean_se: Vec<f64>,
    cov: DMatrix<f64>,
    cov_se: DMatrix<f64>,
}

fn sample_moments(rows: &[Vec<f64>]) -> SampleMoments {
    let n = rows.len() as f64;
    let k = rows[0].len();
    let mean: Vec<f64> = (0..k).map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / n).collect();
    let var = |f: &dyn Fn(&Vec<f64>) -> f64, m: f64| rows.iter().map(|r| (f(r) - m).powi(2)).sum::<f64>() / (n - 1.0);
    let mean_se = (0..k).map(|c| (var(&|r| r[c], mean[c]) / n).sqrt()).collect();
    let mut cov = DMatrix::zeros(k, k);
    let mut cov_se = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let prod = |r: &Vec<f64>| (r[i] - mean[i]) * (r[j] - mean[j]);
            let c = rows.iter().map(prod).sum::<f64>() / n;
            cov[(i, j)] = c;
            cov_se[(i, j)] = (var(&prod, c) / n).sqrt();
        }
    }
    SampleMoments { mean, mean_se, cov, cov_se }
}

fn analytic_covariance(state: &PacketState, hbar: f64) -> DMatrix<f64> {
    let d = state.dim();
    let c = state.b_inv();
    let a = state.a();
    let mut m = DMatrix::zeros(2 * d, 2 * d);
    m.view_mut((0, 0), (d, d)).copy_from(&(c * (0.5 * hbar)));
    m.view_mut((d, d), (d, d)).copy_from(&((state.b() + a * c * a) * (0.5 * hbar)));
    let cross = c * a * (0.5 * hbar);
    m.view_mut((0, d), (d, d)).copy_from(&cross);
    m.view_mut((d, 0), (d, d)).copy_from(&cross.transpose());
    m
}

fn assert_moments(state: &PacketState, hbar: f64, n: usize, seed: u64) {
    let d = state.dim();
    let rows = wigner_sample(state, hbar, seed, n).unwrap().materialize();
    let sm = sample_moments(&rows);
    let centre: Vec<f64> = state.q().iter().chain(state.p().iter()).copied().collect();
    for k in 0..2 * d {
        assert!((sm.mean[k] - centre[k]).abs() < 4.0 * sm.mean_se[k], "mean {k}: {} vs {}", sm.mean[k], centre[k]);
    }
    let exact = analytic_covariance(state, hbar);
    for i in 0..2 * d {
        for j in 0..2 * d {
            let dev = (sm.cov[(i, j)] - exact[(i, j)]).abs();
            assert!(dev < 4.0 * sm.cov_se[(i, j)], "cov ({i},{j}): {} vs {}", sm.cov[(i, j)], exact[(i, j)]);
        }
    }
}

#[test]
fn wigner_moments_match_analytic_gaussian() {
    let mut rng = common::rng(17);
    for d in [1, 2] {
        let state = common::random_state(&mut rng, d);
        assert_moments(&state, 0.4, 100_000, 3);
    }
    assert_moments(&common::preset_2d(), 0.1, 100_000, 4);
}

#[test]
fn zero_chirp_decouples_position_and_momentum() {
    let state = PacketState::from_slices(&[0.2, 0.1], &[-0.5, 1.0], &[0.0; 4], &[2.0, 0.4, 0.4, 1.0]).unwrap();
    let hbar = 0.5;
    let exact = analytic_covariance(&state, hbar);
    assert!(exact.view((0, 2), (2, 2)).amax() == 0.0);
    assert!((exact.view((2, 2), (2, 2)) - state.b() * (0.5 * hbar)).amax() < 1e-15);
    assert_moments(&state, hbar, 100_000, 5);
}

#[test]
fn harmonic_mean_follows_cosine() {
    let model = QuadraticLinear::harmonic(1);
    let state = PacketState::from_slices(&[1.0], &[0.0], &[0.4], &[1.3]).unwrap();
    let ens = wigner_sample(&state, 0.3, 2024, 100_000).unwrap();
    let est = propagate_ensemble(&ens, &model, &EgorovPlan::new(0.01, std::f64::consts::TAU, Observable::phase_space(1))).unwrap();
    let (m, se) = est.series(Observable::Position(0)).unwrap();
    for (k, t) in est.times.iter().enumerate() {
        assert!((m[k] - t.cos()).abs() < 4.0 * se[k], "t={t}: {} vs {} (se {})", m[k], t.cos(), se[k]);
    }
}

#[test]
fn initial_energy_matches_operator_expectation() {
    let rule1 = QuadratureRule::new(20, 1).unwrap();
    let rule2 = QuadratureRule::new(20, 2).unwrap();
    let cases: Vec<(PacketState, std::sync::Arc<dyn FieldModel>, &QuadratureRule)> =
        vec![(common::preset_1d(), cosine_1d(), &rule1), (common::preset_2d(), quartic_rotational_2d(), &rule2)];
    for (state, model, rule) in cases {
        for hbar in [0.5, 0.1] {
            let ens = wigner_sample(&state, hbar, 9, 200_000).unwrap();
            let est = propagate_ensemble(&ens, model.as_ref(), &EgorovPlan::new(0.01, 0.0, vec![Observable::Energy])).unwrap();
            let (m, se) = est.series(Observable::Energy).unwrap();
            let exact = full_hamiltonian(&state, model.as_ref(), hbar, rule).unwrap();
            assert!((m[0] - exact).abs() < 5.0 * se[0], "{} hbar={hbar}: {} vs {exact} (se {})", model.name(), m[0], se[0]);
        }
    }
}

fn harmonic_se(n: usize, seed: u64) -> f64 {
    let model = QuadraticLinear::harmonic(1);
    let state = PacketState::from_slices(&[1.0], &[0.0], &[0.0], &[1.0]).unwrap();
    let ens = wigner_sample(&state, 0.2, seed, n).unwrap();
    let est = propagate_ensemble(&ens, &model, &EgorovPlan::new(0.01, 1.0, vec![Observable::Position(0)])).unwrap();
    *est.series(Observable::Position(0)).unwrap().1.last().unwrap()
}

#[test]
fn standard_error_scales_as_inverse_root_n() {
    let mean_se = |n: usize| (0..20).map(|s| harmonic_se(n, 100 + s)).sum::<f64>() / 20.0;
    let (s1, s2, s4) = (mean_se(2000), mean_se(4000), mean_se(8000));
    let r2 = s2 / s1;
    let r4 = s4 / s1;
    assert!((r2 / std::f64::consts::FRAC_1_SQRT_2 - 1.0).abs() < 0.15, "doubling ratio {r2}");
    assert!((r4 / 0.5 - 1.0).abs() < 0.15, "quadrupling ratio {r4}");
}

#[test]
fn standard_error_covers_truth() {
    let model = QuadraticLinear::harmonic(1);
    let state = PacketState::from_slices(&[1.0], &[0.0], &[0.0], &[1.0]).unwrap();
    let plan = EgorovPlan::new(0.01, 1.0, vec![Observable::Position(0)]);
    let truth = 1.0f64.cos();
    let covered = (0..50)
        .filter(|&seed| {
            let est = propagate_ensemble(&wigner_sample(&state, 0.2, 1000 + seed, 2000).unwrap(), &model, &plan).unwrap();
            let (m, se) = est.series(Observable::Position(0)).unwrap();
            (m.last().unwrap() - truth).abs() <= 2.0 * se.last().unwrap()
        })
        .count();
    assert!(covered >= 45, "only {covered}/50 runs covered the true mean");
}

#[test]
fn antithetic_estimates_are_unbiased_and_tighter() {
    let model = cosine_1d();
    let state = common::preset_1d();
    let plan = EgorovPlan::new(0.01, 1.0, Observable::phase_space(1));
    let plain = propagate_ensemble(&PhaseEnsemble::new(&state, 0.05, 8, 40_000, false).unwrap(), model.as_ref(), &plan).unwrap();
    let anti = propagate_ensemble(&PhaseEnsemble::new(&state, 0.05, 8, 40_000, true).unwrap(), model.as_ref(), &plan).unwrap();
    let last = plain.times.len() - 1;
    for obs in Observable::phase_space(1) {
        let (mp, sp) = plain.series(obs).unwrap();
        let (ma, sa) = anti.series(obs).unwrap();
        assert!(sa[last] < 0.5 * sp[last], "{}: antithetic se {} vs plain {}", obs.name(), sa[last], sp[last]);
        assert!((mp[last] - ma[last]).abs() < 4.0 * (sp[last].powi(2) + sa[last].powi(2)).sqrt());
    }
    assert_eq!(anti.used, 40_000);
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let model = quartic_rotational_2d();
    let state = common::preset_2d();
    // more than one block so the merge order matters
    let ens = wigner_sample(&state, 0.1, 77, 3 * BLOCK_SIZE + 5).unwrap();
    let plan = EgorovPlan::new(0.01, 0.5, Observable::standard_set(2));
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| propagate_ensemble(&ens, model.as_ref(), &plan).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, propagate_ensemble(&ens, model.as_ref(), &plan).unwrap());
}

/// Harmonic oscillator whose potential becomes non-finite beyond `x = 1.3`.
struct Cliff(QuadraticLinear);

impl FieldModel for Cliff {
    fn name(&self) -> &str {
        "cliff"
    }
    fn dim(&self) -> usize {
        1
    }
    fn mass(&self) -> f64 {
        1.0
    }
    fn v(&self, x: &[f64]) -> f64 {
        if x[0] > 1.3 {
            f64::INFINITY
        } else {
            self.0.v(x)
        }
    }
    fn grad_v(&self, x: &[f64], out: &mut [f64]) {
        self.0.grad_v(x, out);
        if x[0] > 1.3 {
            out[0] = f64::NAN;
        }
    }
    fn hess_v(&self, x: &[f64], out: &mut [f64]) {
        self.0.hess_v(x, out)
    }
    fn grad_hess_trace_v(&self, x: &[f64], m: &[f64], out: &mut [f64]) {
        self.0.grad_hess_trace_v(x, m, out)
    }
    fn a(&self, x: &[f64], out: &mut [f64]) {
        self.0.a(x, out)
    }
    fn jac_a(&self, x: &[f64], out: &mut [f64]) {
        self.0.jac_a(x, out)
    }
    fn hess_a(&self, x: &[f64], k: usize, out: &mut [f64]) {
        self.0.hess_a(x, k, out)
    }
    fn grad_hess_trace_a(&self, x: &[f64], m: &[f64], k: usize, out: &mut [f64]) {
        self.0.grad_hess_trace_a(x, m, k, out)
    }
}

#[test]
fn overflowing_samples_are_excluded_and_counted() {
    let model = Cliff(QuadraticLinear::harmonic(1));
    let state = PacketState::from_slices(&[1.0], &[0.0], &[0.0], &[1.0]).unwrap();
    let ens = wigner_sample(&state, 0.1, 5, 5000).unwrap();
    let est = propagate_ensemble(&ens, &model, &EgorovPlan::new(0.01, 1.0, Observable::standard_set(1))).unwrap();
    assert!(est.excluded > 0);
    assert_eq!(est.used + est.excluded, 5000);
    // kept samples all start left of the cliff, so the mean is biased below q = 1
    let (m, _) = est.series(Observable::Position(0)).unwrap();
    assert!(m.iter().all(|v| v.is_finite()) && m[0] < 1.0);
}
