//! Semiclassical Gaussian wave packets of a charged particle in scalar and
//! vector potentials.
//!
//! The crate propagates packet parameters `(q, p, A, B)` under three sets of
//! equations (classical, Zhou, and the Hamiltonian semiclassical system with
//! `O(hbar)` corrections), and provides an Egorov / Wigner-sampling
//! Monte-Carlo reference to measure them against.

pub mod dynamics;
pub mod egorov;
pub mod error;
pub mod expectations;
pub mod harness;
pub mod observables;
pub mod potentials;
pub mod state;

pub use error::{Error, Result};
pub use state::{PacketState, SimConfig, WavePacketFull};
