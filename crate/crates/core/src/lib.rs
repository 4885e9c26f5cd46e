//! Hopfield-type network dynamics on time scales.
//!
//! A social network playing a Prisoner's Dilemma under the imitation-of-success
//! rule is compiled into the dynamic system `u^Δ = -B u + A g(u) + J` on an
//! arbitrary time scale. The crate evaluates the stability certificates for
//! that system (M-matrix uniqueness, degree condition, size-dependent and
//! size-independent asymptotic stability, exponential rate) and checks them
//! against simulated trajectories.

pub mod certificates;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod linalg;
pub mod network;
pub mod timescale;

pub use error::{Error, Result};
