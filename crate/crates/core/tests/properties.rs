//! Randomized invariants over packet states and models.

mod common;

use gwp_core::dynamics::{classical_rhs, semiclassical_rhs, zhou_rhs, ClassicalPhasePoint};
use gwp_core::expectations::{gaussian_expectation, polynomial_moment, QuadratureRule};
use gwp_core::potentials::{cosine_1d, quartic_rotational_2d, rotation_2d, FieldModel};
use gwp_core::state::{packet_norm_squared, position_covariance, WavePacketFull};
use proptest::prelude::*;

fn state_seed() -> impl Strategy<Value = (u64, usize)> {
    (any::<u64>(), 1usize..=3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalized_packets_have_unit_norm((seed, d) in state_seed(), hbar in 0.01f64..2.0) {
        let s = common::random_state(&mut common::rng(seed), d);
        let wp = WavePacketFull::normalized(s, hbar);
        let n = packet_norm_squared(wp.state.b(), wp.delta, hbar);
        prop_assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_keeps_states_valid(seed in any::<u64>(), theta in -3.2f64..3.2) {
        let s = common::random_state(&mut common::rng(seed), 2);
        let r = s.rotated(&rotation_2d(theta)).unwrap();
        prop_assert!(r.min_eigenvalue_b() > 0.0);
        prop_assert!((r.min_eigenvalue_b() - s.min_eigenvalue_b()).abs() < 1e-12);
        prop_assert!((r.q().norm() - s.q().norm()).abs() < 1e-12);
        prop_assert!((r.a() - r.a().transpose()).amax() == 0.0);
    }

    #[test]
    fn quadrature_reproduces_isserlis(seed in any::<u64>(), a in 0u32..=2, b in 0u32..=2, hbar in 0.05f64..1.5) {
        let s = common::random_state(&mut common::rng(seed), 2);
        let rule = QuadratureRule::new(6, 2).unwrap();
        let (q0, q1) = (s.q()[0], s.q()[1]);
        let quad = gaussian_expectation(|x| (x[0] - q0).powi(a as i32) * (x[1] - q1).powi(b as i32), s.q(), s.b(), hbar, &rule).unwrap();
        let exact = polynomial_moment(&[a, b], s.b(), hbar).unwrap();
        prop_assert!((quad - exact).abs() < 1e-12 * (1.0 + exact.abs()), "{} vs {}", quad, exact);
    }

    #[test]
    fn covariance_matches_quadrature((seed, d) in state_seed(), hbar in 0.05f64..1.5) {
        let s = common::random_state(&mut common::rng(seed), d);
        let rule = QuadratureRule::new(4, d).unwrap();
        let cov = position_covariance(&s, hbar);
        for i in 0..d {
            for j in 0..d {
                let (qi, qj) = (s.q()[i], s.q()[j]);
                let e = gaussian_expectation(|x| (x[i] - qi) * (x[j] - qj), s.q(), s.b(), hbar, &rule).unwrap();
                prop_assert!((e - cov[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn width_rates_stay_symmetric(seed in any::<u64>(), hbar in 0.01f64..1.0) {
        let mut rng = common::rng(seed);
        let models: [std::sync::Arc<dyn FieldModel>; 2] = [cosine_1d(), quartic_rotational_2d()];
        for m in &models {
            let s = common::random_state(&mut rng, m.dim());
            for t in [semiclassical_rhs(&s, m.as_ref(), hbar), zhou_rhs(&s, m.as_ref())] {
                prop_assert!((&t.da - t.da.transpose()).amax() <= 1e-13);
                prop_assert!((&t.db - t.db.transpose()).amax() <= 1e-13);
            }
        }
    }

    #[test]
    fn zhou_centre_is_classical(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let d = 2;
        let model = common::random_quadratic_linear(&mut rng, d);
        let s = common::random_state(&mut rng, d);
        let z = zhou_rhs(&s, &model);
        let c = classical_rhs(&ClassicalPhasePoint::from(&s), &model);
        for i in 0..d {
            prop_assert!((z.dq[i] - c.q[i]).abs() <= 1e-13);
            prop_assert!((z.dp[i] - c.p[i]).abs() <= 1e-13);
        }
    }
}
