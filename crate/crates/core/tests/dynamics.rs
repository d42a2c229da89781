use approx::assert_relative_eq;

use gwp_core::dynamics::*;
use gwp_core::potentials::{Cosine1d, QuadraticLinear, QuarticRotational2d};
use gwp_core::{Error, PacketState};

fn preset_1d() -> PacketState {
    PacketState::from_slices(&[0.5], &[-1.0], &[0.0], &[1.0]).unwrap()
}

#[test]
fn classical_hamiltonian_examples() {
    let free = QuadraticLinear::free(1, 1.0).unwrap();
    let z = ClassicalPhasePoint::new(vec![0.3], vec![1.0]).unwrap();
    assert_relative_eq!(classical_hamiltonian(&z, &free), 0.5);
    let z = ClassicalPhasePoint::new(vec![0.5], vec![-1.0]).unwrap();
    let c = 0.5f64.cos();
    assert_relative_eq!(classical_hamiltonian(&z, &Cosine1d), 0.5 * (-1.0 - c).powi(2) + 1.0 - 0.5 * c * c, epsilon = 1e-15);
    assert_relative_eq!(classical_hamiltonian(&z, &Cosine1d), 2.377_583, epsilon = 1e-6);
    let z = ClassicalPhasePoint::new(vec![1.0, 0.0], vec![0.0, 1.0]).unwrap();
    assert_relative_eq!(classical_hamiltonian(&z, &QuarticRotational2d), 0.75);
}

#[test]
fn classical_rhs_examples() {
    let free = QuadraticLinear::free(1, 1.0).unwrap();
    let r = classical_rhs(&ClassicalPhasePoint::new(vec![0.0], vec![2.0]).unwrap(), &free);
    assert_eq!((r.q[0], r.p[0]), (2.0, 0.0));

    let (q, p) = (0.5f64, -1.0f64);
    let r = classical_rhs(&ClassicalPhasePoint::new(vec![q], vec![p]).unwrap(), &Cosine1d);
    assert_relative_eq!(r.q[0], p - q.cos(), epsilon = 1e-15);
    let expected_pdot = -0.5 * (-(2.0 * q).sin() + 2.0 * p * q.sin()) - q.sin() * q.cos();
    assert_relative_eq!(r.p[0], expected_pdot, epsilon = 1e-15);
    assert_relative_eq!(r.q[0], -1.877_58, epsilon = 1e-5);
    assert_relative_eq!(r.p[0], 0.479_43, epsilon = 1e-5);
}

#[test]
fn zhou_examples() {
    let free = QuadraticLinear::free(1, 1.0).unwrap();
    let s = PacketState::from_slices(&[0.0], &[0.0], &[0.0], &[1.0]).unwrap();
    let t = zhou_rhs(&s, &free);
    assert_eq!((t.da[(0, 0)], t.db[(0, 0)]), (1.0, 0.0));

    let t = zhou_rhs(&preset_1d(), &Cosine1d);
    let expected = 1.0 + 0.5f64.cos() + 1f64.cos() - 1f64.cos();
    assert_relative_eq!(t.da[(0, 0)], expected, epsilon = 1e-14);
    assert_relative_eq!(t.da[(0, 0)], 1.877_58, epsilon = 1e-5);
    assert_relative_eq!(t.db[(0, 0)], -2.0 * 0.5f64.sin(), epsilon = 1e-15);
}

#[test]
fn semiclassical_examples() {
    let s = preset_1d();
    let t = semiclassical_rhs(&s, &Cosine1d, 0.5);
    assert_relative_eq!(t.dq[0], -1.0 - 0.5f64.cos() + 0.125 * 0.5f64.cos(), epsilon = 1e-15);
    assert_relative_eq!(t.dq[0], -1.767_89, epsilon = 1e-5);

    let t0 = semiclassical_rhs(&s, &Cosine1d, 0.0);
    assert!(t0.max_abs_diff(&zhou_rhs(&s, &Cosine1d)) < 1e-15);
}

#[test]
fn corrected_potential_examples() {
    let s = PacketState::from_slices(&[0.0], &[0.0], &[0.0], &[1.0]).unwrap();
    let c = corrected_potentials(&s, &Cosine1d, 0.2);
    assert_relative_eq!(c.a[0], 1.0 - 0.05, epsilon = 1e-15);
    let c0 = corrected_potentials(&s, &Cosine1d, 0.0);
    assert_eq!((c0.v, c0.a[0], c0.asq), (0.5, 1.0, 1.0));
    let lin = QuadraticLinear::new(&[1.0], &[0.0], 0.0, &[2.0], &[0.5], 1.0).unwrap();
    assert_eq!(corrected_potentials(&s, &lin, 0.7).a[0], 0.5);
}

#[test]
fn hamiltonian_examples() {
    let s = preset_1d();
    let h0 = classical_hamiltonian(&ClassicalPhasePoint::from(&s), &Cosine1d);
    assert_eq!(semiclassical_hamiltonian(&s, &Cosine1d, 0.0), h0);
    let ground = PacketState::from_slices(&[0.0], &[0.0], &[0.0], &[1.0]).unwrap();
    assert_relative_eq!(semiclassical_hamiltonian(&ground, &QuadraticLinear::harmonic(1), 0.2), 0.1, epsilon = 1e-15);
}

#[test]
fn bracket_examples() {
    let s = PacketState::from_slices(&[0.4], &[1.3], &[0.2], &[0.9]).unwrap();
    let free_kinetic = |st: &PacketState| 0.5 * st.p().norm_squared() / 2.0;
    let t = bracket_rhs(free_kinetic, &s, 0.1, 1e-5).unwrap();
    assert_relative_eq!(t.dq[0], 1.3 / 2.0, epsilon = 1e-9);
    assert!(t.dp[0].abs() < 1e-12 && t.da.amax() < 1e-12 && t.db.amax() < 1e-12);

    let hbar = 0.3;
    let m = 1.5;
    let width = |st: &PacketState| 0.25 * hbar / m * (st.b_inv() * (st.a() * st.a() + st.b() * st.b())).trace();
    let s = PacketState::from_slices(&[0.0], &[0.0], &[0.0], &[1.0]).unwrap();
    let t = bracket_rhs(width, &s, hbar, 1e-5).unwrap();
    assert_relative_eq!(t.da[(0, 0)], 1.0 / m, epsilon = 1e-8);
    assert!(t.db[(0, 0)].abs() < 1e-9);

    assert!(bracket_rhs(width, &s, 0.0, 1e-5).is_err());
}

#[test]
fn bracket_matches_semiclassical_1d() {
    let s = preset_1d();
    let hbar = 0.1;
    let num = bracket_rhs(|st| semiclassical_hamiltonian(st, &Cosine1d, hbar), &s, hbar, 1e-5).unwrap();
    let ana = semiclassical_rhs(&s, &Cosine1d, hbar);
    assert!(num.max_abs_diff(&ana) < 1e-6, "{num:?} vs {ana:?}");
}

#[test]
fn free_particle_rk4_is_exact() {
    let free = QuadraticLinear::free(1, 1.0).unwrap();
    let z0 = ClassicalPhasePoint::new(vec![0.0], vec![1.0]).unwrap();
    let traj = rk4_integrate(|z: &ClassicalPhasePoint| Ok(classical_rhs(z, &free).to_flat()), z0, 0.01, 1.0, &[]).unwrap();
    assert_eq!(traj.len(), 101);
    assert_relative_eq!(traj.states[100].q[0], 1.0, epsilon = 1e-13);
}

#[test]
fn harmonic_period() {
    let h = QuadraticLinear::harmonic(1);
    let z0 = ClassicalPhasePoint::new(vec![1.0], vec![0.0]).unwrap();
    let t = 2.0 * std::f64::consts::PI;
    // a full period is not a multiple of 0.01: step so that it is
    let n = (t / 0.01).round();
    let dt = t / n;
    let traj = rk4_integrate(|z: &ClassicalPhasePoint| Ok(classical_rhs(z, &h).to_flat()), z0, dt, t, &[]).unwrap();
    let last = traj.states.last().unwrap();
    assert!((last.q[0] - 1.0).abs() < 1e-8);
}

#[test]
fn workspace_matches_generic_rhs() {
    let mut ws = ClassicalWorkspace::new(2);
    let z = [0.3, -0.2, 0.5, 1.1];
    let mut out = [0.0; 4];
    ws.rhs(&QuarticRotational2d, &z, &mut out);
    let r = classical_rhs(&ClassicalPhasePoint::new(vec![0.3, -0.2], vec![0.5, 1.1]).unwrap(), &QuarticRotational2d);
    assert_eq!(out.to_vec(), r.to_flat());
}

#[test]
fn losing_positive_definiteness_aborts_with_partial_trajectory() {
    // dB/dt = -1 everywhere: B crosses zero near t = 0.5
    let s0 = PacketState::from_slices(&[0.0], &[0.0], &[0.0], &[0.5]).unwrap();
    let rhs = |_: &PacketState| Ok(vec![0.0, 0.0, 0.0, -1.0]);
    let err = rk4_integrate(rhs, s0, 0.1, 1.0, &[]).unwrap_err();
    assert!(matches!(err.cause, Error::NotPositiveDefinite { .. }));
    assert_eq!(err.partial.len(), err.step);
    assert!(err.step >= 4 && err.step <= 6);
}

#[test]
fn overflow_aborts_with_step_index() {
    let z0 = ClassicalPhasePoint::new(vec![1.0], vec![0.0]).unwrap();
    let rhs = |z: &ClassicalPhasePoint| Ok(vec![z.q[0] * z.q[0] * 1e150, 0.0]);
    let err = rk4_integrate(rhs, z0, 0.1, 10.0, &[]).unwrap_err();
    assert!(matches!(err.cause, Error::NonFinite(_)));
    assert!(err.step > 0 && err.step < 100);
}

#[test]
fn zero_horizon_gives_single_row() {
    let z0 = ClassicalPhasePoint::new(vec![1.0], vec![0.0]).unwrap();
    let traj = rk4_integrate(|z: &ClassicalPhasePoint| Ok(classical_rhs(z, &Cosine1d).to_flat()), z0.clone(), 0.01, 0.0, &[]).unwrap();
    assert_eq!(traj.len(), 1);
    assert_eq!(traj.states[0], z0);
}
