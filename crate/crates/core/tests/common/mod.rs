#![allow(dead_code)]

use gwp_core::potentials::QuadraticLinear;
use gwp_core::PacketState;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

pub fn vector(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| uniform(rng, -scale, scale)).collect()
}

pub fn symmetric(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    let m = DMatrix::from_fn(d, d, |_, _| uniform(rng, -scale, scale));
    let s = (&m + m.transpose()) * 0.5;
    s.transpose().as_slice().to_vec()
}

/// SPD with eigenvalues roughly in `[lo, lo + scale²·d]`.
pub fn spd(rng: &mut ChaCha8Rng, d: usize, lo: f64, scale: f64) -> Vec<f64> {
    let m = DMatrix::from_fn(d, d, |_, _| uniform(rng, -scale, scale));
    let s = &m * m.transpose() + DMatrix::identity(d, d) * lo;
    s.transpose().as_slice().to_vec()
}

pub fn random_state(rng: &mut ChaCha8Rng, d: usize) -> PacketState {
    let q = vector(rng, d, 1.5);
    let p = vector(rng, d, 1.5);
    let a = symmetric(rng, d, 1.0);
    let b = spd(rng, d, 0.4, 1.0);
    PacketState::from_slices(&q, &p, &a, &b).unwrap()
}

pub fn random_quadratic_linear(rng: &mut ChaCha8Rng, d: usize) -> QuadraticLinear {
    let k = symmetric(rng, d, 2.0);
    let b = vector(rng, d, 1.0);
    let c = uniform(rng, -1.0, 1.0);
    let m0: Vec<f64> = (0..d * d).map(|_| uniform(rng, -1.0, 1.0)).collect();
    let a0 = vector(rng, d, 1.0);
    let mass = uniform(rng, 0.5, 2.0);
    QuadraticLinear::new(&k, &b, c, &m0, &a0, mass).unwrap()
}

pub fn preset_1d() -> PacketState {
    PacketState::from_slices(&[0.5], &[-1.0], &[0.0], &[1.0]).unwrap()
}

pub fn preset_2d() -> PacketState {
    PacketState::from_slices(&[1.0, 0.0], &[0.0, 1.0], &[-3.0, -6.0, -6.0, -6.0], &[1.0, 0.5, 0.5, 1.0]).unwrap()
}
