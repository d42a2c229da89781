mod common;

use std::sync::Arc;

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};

use gwp_core::dynamics::{classical_hamiltonian, integrate_packet, semiclassical_hamiltonian, ClassicalPhasePoint, ModelKind, Monitor};
use gwp_core::observables::*;
use gwp_core::observables::{classical_angular_momentum, semiclassical_angular_momentum};
use gwp_core::potentials::{quartic_rotational_2d, rotation_2d, rotational_symmetry_check, FieldModel, LinearTilt};
use gwp_core::PacketState;

#[test]
fn diamond_examples() {
    let q = DVector::from_vec(vec![1.0, 2.0]);
    assert_eq!(diamond(&q, &(&q * 3.0)).amax(), 0.0);
    let m = diamond(&DVector::from_vec(vec![1.0, 0.0]), &DVector::from_vec(vec![0.0, 1.0]));
    assert_eq!(m[(0, 1)], -1.0);
    assert_eq!(m[(1, 0)], 1.0);
}

#[test]
fn preset_2d_initial_angular_momentum() {
    let s = PacketState::from_slices(&[1.0, 0.0], &[0.0, 1.0], &[-3.0, -6.0, -6.0, -6.0], &[1.0, 0.5, 0.5, 1.0]).unwrap();
    // [B⁻¹, A] worked by hand: B⁻¹ = (4/3)[[1, -½], [-½, 1]], B⁻¹A = [[0, -4], [-6, -4]]
    let c = s.b_inv();
    let comm = c * s.a() - s.a() * c;
    assert_relative_eq!(comm, DMatrix::from_row_slice(2, 2, &[0.0, 2.0, -2.0, 0.0]), epsilon = 1e-13);
    for hbar in [0.0, 0.1, 0.5] {
        let j = semiclassical_angular_momentum(&s, hbar);
        assert_relative_eq!(j.0[(0, 1)], -1.0 - hbar, epsilon = 1e-13);
        assert!(j.max_asymmetry() < 1e-13);
    }
}

#[test]
fn commuting_widths_reduce_to_classical() {
    let s = PacketState::from_slices(&[0.3, -0.4], &[1.0, 0.7], &[2.0, 0.5, 0.5, 1.0], &[2.0, 0.5, 0.5, 1.0]).unwrap();
    let j = semiclassical_angular_momentum(&s, 0.8);
    assert_relative_eq!(j.0, diamond(s.q(), s.p()), epsilon = 1e-13);
}

#[test]
fn classical_angular_momentum_examples() {
    assert_eq!(classical_angular_momentum(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), vec![1.0]);
    assert_eq!(classical_angular_momentum(&[1.0, 2.0], &[2.0, 4.0]).unwrap(), vec![0.0]);
    assert!(classical_angular_momentum(&[1.0], &[1.0]).is_err());
    // L_z is minus the (1,2) diamond entry
    let (q, p) = ([0.3, -1.2], [0.9, 0.4]);
    let dm = diamond(&DVector::from_column_slice(&q), &DVector::from_column_slice(&p));
    assert_relative_eq!(classical_angular_momentum(&q, &p).unwrap()[0], -dm[(0, 1)], epsilon = 1e-15);
    let l = classical_angular_momentum(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
    assert_eq!(l, vec![0.0, 0.0, 1.0]);
}

#[test]
fn exact_power_law_fit() {
    let fit = loglog_fit(&[(0.5, 0.25), (0.1, 0.01), (0.01, 1e-4)]).unwrap();
    assert_relative_eq!(fit.exponent, 2.0, epsilon = 1e-12);
    assert!(fit.intercept.abs() < 1e-12);
    assert!(loglog_fit(&[(0.5, 0.0), (0.1, 0.1)]).is_err());
    assert!(loglog_fit(&[(0.5, 0.1)]).is_err());
}

fn chirped_2d() -> PacketState {
    PacketState::from_slices(&[1.0, 0.0], &[0.0, 1.0], &[0.2, 0.1, 0.1, -0.1], &[1.0, 0.3, 0.3, 0.8]).unwrap()
}

fn j12_drift(model: &dyn FieldModel, state: PacketState, hbar: f64, t: f64) -> (f64, f64) {
    let mons = [
        Monitor::new("J", move |s: &PacketState| semiclassical_angular_momentum(s, hbar).0[(0, 1)]),
        Monitor::new("H", move |s: &PacketState| semiclassical_hamiltonian(s, model, hbar)),
    ];
    let tr = integrate_packet(ModelKind::Semiclassical, model, state, hbar, 0.01, t, &mons).unwrap();
    (tr.monitor_drift("J").unwrap(), tr.monitor_drift("H").unwrap() / tr.monitor("H").unwrap()[0].abs())
}

#[test]
fn semiclassical_angular_momentum_is_conserved() {
    let model = quartic_rotational_2d();
    for th in [0.3, 1.7, -2.2] {
        assert!(rotational_symmetry_check(model.as_ref(), &rotation_2d(th), &[0.6, -1.1], 1e-12));
    }
    let s = chirped_2d();
    assert!(semiclassical_angular_momentum(&s, 0.5).0[(0, 1)] != -1.0, "commutator term should be active");
    let (dj, dh) = j12_drift(model.as_ref(), s, 0.5, 10.0);
    assert!(dj < 1e-7, "J12 drift {dj:e}");
    assert!(dh < 1e-6, "H drift {dh:e}");
}

#[test]
fn classical_angular_momentum_is_conserved() {
    let model = quartic_rotational_2d();
    let m = model.as_ref();
    let mons = [
        Monitor::new("L", |s: &PacketState| classical_angular_momentum(s.q().as_slice(), s.p().as_slice()).unwrap()[0]),
        Monitor::new("H", |s: &PacketState| classical_hamiltonian(&ClassicalPhasePoint::from(s), m)),
    ];
    let tr = integrate_packet(ModelKind::Classical, m, common::preset_2d(), 0.1, 0.01, 10.0, &mons).unwrap();
    assert!(tr.monitor_drift("L").unwrap() < 1e-8);
    assert!(tr.monitor_drift("H").unwrap() / tr.monitor("H").unwrap()[0] < 1e-7);
}

#[test]
fn symmetry_breaking_tilt_destroys_conservation() {
    let tilted = LinearTilt::new(quartic_rotational_2d(), vec![1.0, 0.0]);
    assert!(!rotational_symmetry_check(&tilted, &rotation_2d(1.0), &[1.0, 0.0], 1e-9));
    let (dj, _) = j12_drift(&tilted, chirped_2d(), 0.5, 10.0);
    assert!(dj > 1e-3, "J12 drift {dj:e} under a tilted well");
}

#[test]
fn angular_momentum_is_equivariant() {
    let mut rng = common::rng(31);
    for _ in 0..20 {
        let s = common::random_state(&mut rng, 2);
        let hbar = common::uniform(&mut rng, 0.05, 1.0);
        let r = rotation_2d(common::uniform(&mut rng, -3.1, 3.1));
        let lhs = semiclassical_angular_momentum(&s.rotated(&r).unwrap(), hbar).0;
        let rhs = &r * semiclassical_angular_momentum(&s, hbar).0 * r.transpose();
        assert!((lhs - rhs).amax() < 1e-12);
    }
}

#[test]
fn angular_momentum_matrix_is_antisymmetric_in_3d() {
    let mut rng = common::rng(32);
    for _ in 0..20 {
        let s = common::random_state(&mut rng, 3);
        let j = semiclassical_angular_momentum(&s, 0.3);
        assert!(j.max_asymmetry() < 1e-13);
        assert_eq!(j.upper_entries().len(), 3);
    }
}

#[test]
fn tilted_model_is_shareable() {
    let m: Arc<dyn FieldModel> = Arc::new(LinearTilt::new(quartic_rotational_2d(), vec![0.0, 0.5]));
    assert_eq!(m.dim(), 2);
}
