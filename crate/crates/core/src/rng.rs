//! Reproducible random streams.
//!
//! Every stochastic routine draws from [`ChaCha8Rng`], whose output is fixed
//! by its key and stream id on every platform.
//! Gaussian variates come from `rand_distr::StandardNormal` (ziggurat), which
//! is likewise platform independent.
//!
//! Per-trial seeds are `splitmix64(seed ^ splitmix64(trial))`, so a trial's
//! randomness depends only on `(seed, trial)` and never on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::statespace::{Matrix, Vector};

/// Stream ids used inside one trial.
pub mod stream {
    /// Process and measurement noise of the simulated trajectory.
    pub const NOISE: u64 = 0;
    /// Sensing / communicating decisions of a switching policy.
    pub const POLICY: u64 = 1;
    /// Draw of the initial state.
    pub const INITIAL: u64 = 2;
}

/// The splitmix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for trial `trial` of a run seeded with `seed`.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    splitmix64(seed ^ splitmix64(trial))
}

/// Generator for one named stream of a seed.
pub fn stream_rng(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// `mean + L ξ` with `ξ ~ N(0, I)` and `L` a square-root factor of the
/// covariance.
pub fn gaussian<R: Rng>(rng: &mut R, mean: &Vector, sqrt_cov: &Matrix) -> Vector {
    let xi = Vector::from_fn(sqrt_cov.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    mean + sqrt_cov * xi
}
