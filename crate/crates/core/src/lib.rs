//! Capacity-distortion analysis for open-loop joint communication and
//! sensing with a Markov state.
//!
//! * [`statespace`]: the Gauss-Markov model and its Lyapunov solver.
//! * [`filtering`]: trajectory simulation and the noise-scaled Kalman filter.
//! * [`bayes`]: finite-alphabet filtering and the brute-force open-loop
//!   tradeoff.
//! * [`riccati`]: switching / multi-beam Riccati maps and thresholds.
//! * [`tradeoff`]: rate formulas and rate-distortion curves.
//! * [`montecarlo`]: empirical checks of the covariance bounds.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayes;
pub mod error;
pub mod filtering;
pub mod montecarlo;
pub mod riccati;
pub mod rng;
pub mod statespace;
pub mod tradeoff;

pub use error::{Error, Result};
pub use filtering::{FilterState, NoiseGain, Phase, Trajectory};
pub use riccati::BeamPolicy;
pub use statespace::{FixedPoint, GaussMarkovModel, Matrix, Vector};
