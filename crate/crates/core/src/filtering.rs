//! Trajectory simulation and the noise-scaled Kalman filter.
//!
//! The filter stores the one-step prediction `ŝ_{i|i-1}` and its covariance
//! `P_i = P_{i|i-1}`. A step consumes the measurement `z_i` taken with noise
//! `gamma_i R` and produces `ŝ_{i+1|i}`, `P_{i+1}`:
//!
//! ```text
//! P_{i+1} = A P_i Aᵀ + Q - A P_i Cᵀ (C P_i Cᵀ + gamma_i R)⁻¹ C P_i Aᵀ
//! ```
//!
//! An erased measurement (`gamma_i = ∞`) reduces this to `A P_i Aᵀ + Q`.

use std::fmt;
use std::io::{self, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::riccati::BeamPolicy;
use crate::rng::{self, stream};
use crate::statespace::{
    is_psd, open_loop_step, psd_sqrt, symmetric_eigenvalues, symmetrize, GaussMarkovModel, Matrix, Vector,
};

/// Multiplier applied to the measurement noise covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseGain {
    /// `gamma` in `[1, ∞)`.
    Finite(f64),
    /// `gamma = ∞`: no measurement is taken.
    Erased,
}

impl NoiseGain {
    /// `f64::INFINITY` maps to [`NoiseGain::Erased`]; anything below 1 (or NaN)
    /// is rejected.
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma == f64::INFINITY {
            Ok(NoiseGain::Erased)
        } else if gamma >= 1.0 && gamma.is_finite() {
            Ok(NoiseGain::Finite(gamma))
        } else {
            Err(Error::Parameter(format!("gamma must lie in [1, inf], got {gamma}")))
        }
    }

    pub fn value(self) -> f64 {
        match self {
            NoiseGain::Finite(g) => g,
            NoiseGain::Erased => f64::INFINITY,
        }
    }

    pub fn is_erased(self) -> bool {
        matches!(self, NoiseGain::Erased)
    }

    fn check(self) -> Result<()> {
        match self {
            NoiseGain::Finite(g) if !(g >= 1.0 && g.is_finite()) => {
                Err(Error::Parameter(format!("gamma must lie in [1, inf], got {g}")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for NoiseGain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseGain::Finite(g) => write!(f, "{g}"),
            NoiseGain::Erased => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Holds `ŝ_{i|i-1}` and `P_{i|i-1}`.
    Predicted,
    /// Holds `ŝ_{i|i}` and `P_{i|i}`.
    Updated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub estimate: Vector,
    pub covariance: Matrix,
    pub time_index: usize,
    pub phase: Phase,
}

impl FilterState {
    pub fn initial(estimate: Vector, covariance: Matrix) -> Self {
        Self { estimate, covariance, time_index: 0, phase: Phase::Predicted }
    }
}

fn condition_estimate(s: &Matrix) -> f64 {
    let ev = symmetric_eigenvalues(s);
    match (ev.first(), ev.last()) {
        (Some(&lo), Some(&hi)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// `(C P Cᵀ + gamma R)⁻¹` through a Cholesky factorization.
fn innovation_inverse(model: &GaussMarkovModel, p: &Matrix, gamma: f64) -> Result<Matrix> {
    let c = model.c();
    let s = symmetrize(&(c * p * c.transpose() + model.r() * gamma));
    match s.clone().cholesky() {
        Some(ch) => Ok(ch.inverse()),
        None => Err(Error::Numerical {
            what: "innovation covariance C P Cᵀ + gamma R is not positive definite".into(),
            condition: condition_estimate(&s),
        }),
    }
}

fn check_covariance(model: &GaussMarkovModel, p: &Matrix) -> Result<()> {
    let m = model.state_dim();
    if p.nrows() != m || p.ncols() != m {
        return Err(Error::Dimension(format!("covariance must be {m}x{m}, got {}x{}", p.nrows(), p.ncols())));
    }
    Ok(())
}

/// Kalman gain `P Cᵀ (C P Cᵀ + gamma R)⁻¹` (an `m x k` matrix); zero when the
/// measurement is erased.
pub fn kalman_gain(model: &GaussMarkovModel, p: &Matrix, gamma: NoiseGain) -> Result<Matrix> {
    check_covariance(model, p)?;
    gamma.check()?;
    match gamma {
        NoiseGain::Erased => Ok(Matrix::zeros(model.state_dim(), model.meas_dim())),
        NoiseGain::Finite(g) => {
            let s_inv = innovation_inverse(model, p, g)?;
            Ok(p * model.c().transpose() * s_inv)
        }
    }
}

/// `A P Aᵀ + Q - weight · A P Cᵀ (C P Cᵀ + gamma R)⁻¹ C P Aᵀ`, symmetrized.
///
/// Every covariance recursion in the crate goes through this function, so
/// the switching map at weight 1 and the filter step at gamma 1 agree bit
/// for bit.
pub(crate) fn corrected_step(model: &GaussMarkovModel, p: &Matrix, weight: f64, gamma: NoiseGain) -> Result<Matrix> {
    check_covariance(model, p)?;
    gamma.check()?;
    let open = open_loop_step(model, p, 1.0);
    let g = match gamma {
        NoiseGain::Erased => return Ok(open),
        NoiseGain::Finite(g) => g,
    };
    if weight == 0.0 {
        return Ok(open);
    }
    let a = model.a();
    let apc = a * p * model.c().transpose();
    let s_inv = innovation_inverse(model, p, g)?;
    let correction = &apc * s_inv * apc.transpose();
    Ok(symmetrize(&(open - correction * weight)))
}

/// Incorporates `z_i` into a predicted state, giving `ŝ_{i|i}`, `P_{i|i}`.
pub fn measurement_update(
    model: &GaussMarkovModel,
    state: &FilterState,
    z: Option<&Vector>,
    gamma: NoiseGain,
) -> Result<FilterState> {
    if state.phase != Phase::Predicted {
        return Err(Error::Parameter("measurement update needs a predicted state".into()));
    }
    check_measurement(model, z, gamma)?;
    if state.estimate.len() != model.state_dim() {
        return Err(Error::Dimension(format!(
            "estimate has length {}, model state dimension is {}",
            state.estimate.len(),
            model.state_dim()
        )));
    }
    let (estimate, covariance) = match z {
        None => (state.estimate.clone(), state.covariance.clone()),
        Some(z) => {
            let k = kalman_gain(model, &state.covariance, gamma)?;
            let innovation = z - model.c() * &state.estimate;
            let est = &state.estimate + &k * innovation;
            let cov = symmetrize(&(&state.covariance - &k * model.c() * &state.covariance));
            (est, cov)
        }
    };
    Ok(FilterState { estimate, covariance, time_index: state.time_index, phase: Phase::Updated })
}

fn check_measurement(model: &GaussMarkovModel, z: Option<&Vector>, gamma: NoiseGain) -> Result<()> {
    gamma.check()?;
    match (z, gamma) {
        (None, NoiseGain::Erased) => Ok(()),
        (Some(z), NoiseGain::Finite(_)) if z.len() == model.meas_dim() => Ok(()),
        (Some(z), NoiseGain::Finite(_)) => Err(Error::Dimension(format!(
            "measurement has length {}, model measurement dimension is {}",
            z.len(),
            model.meas_dim()
        ))),
        (Some(_), NoiseGain::Erased) => Err(Error::Parameter("measurement present but gamma is infinite".into())),
        (None, NoiseGain::Finite(_)) => Err(Error::Parameter("measurement missing for finite gamma".into())),
    }
}

/// One filter cycle: update with `z` (if any), then predict one step ahead.
pub fn kalman_step(
    model: &GaussMarkovModel,
    state: &FilterState,
    z: Option<&Vector>,
    gamma: NoiseGain,
) -> Result<FilterState> {
    check_covariance(model, &state.covariance)?;
    let updated = measurement_update(model, state, z, gamma)?;
    let estimate = model.a() * updated.estimate;
    let covariance = corrected_step(model, &state.covariance, 1.0, gamma)?;
    Ok(FilterState { estimate, covariance, time_index: state.time_index + 1, phase: Phase::Predicted })
}

/// True states and measurements before any filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrajectory {
    pub states: Vec<Vector>,
    pub measurements: Vec<Option<Vector>>,
    pub gammas: Vec<NoiseGain>,
}

/// Simulates `s_0 .. s_n` and `z_0 .. z_n` where `n + 1 = gammas.len()`.
///
/// Noise comes from the [`stream::NOISE`] stream of `seed`; at each index the
/// process noise is drawn before the measurement noise, and erased
/// measurements consume no randomness.
pub fn simulate_trajectory(
    model: &GaussMarkovModel,
    s0: &Vector,
    gammas: &[NoiseGain],
    seed: u64,
) -> Result<RawTrajectory> {
    if s0.len() != model.state_dim() {
        return Err(Error::Dimension(format!("s0 has length {}, expected {}", s0.len(), model.state_dim())));
    }
    for g in gammas {
        g.check()?;
    }
    let mut rng = rng::stream_rng(seed, stream::NOISE);
    let zero_m = Vector::zeros(model.state_dim());
    let zero_k = Vector::zeros(model.meas_dim());
    let mut states = Vec::with_capacity(gammas.len());
    let mut measurements = Vec::with_capacity(gammas.len());
    for (i, gamma) in gammas.iter().enumerate() {
        let s = if i == 0 {
            s0.clone()
        } else {
            model.a() * &states[i - 1] + rng::gaussian(&mut rng, &zero_m, model.q_sqrt())
        };
        let z = match gamma {
            NoiseGain::Erased => None,
            NoiseGain::Finite(g) => {
                let v = rng::gaussian(&mut rng, &zero_k, model.r_sqrt()) * g.sqrt();
                Some(model.c() * &s + v)
            }
        };
        states.push(s);
        measurements.push(z);
    }
    Ok(RawTrajectory { states, measurements, gammas: gammas.to_vec() })
}

/// Simulated truth together with the causal filter run on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vector>,
    pub measurements: Vec<Option<Vector>>,
    pub gammas: Vec<NoiseGain>,
    /// `ŝ_{i|i-1}`, with `ŝ_0` the supplied initial estimate.
    pub estimates: Vec<Vector>,
    /// `tr(P_i)`.
    pub covariance_traces: Vec<f64>,
    /// `‖s_i - ŝ_i‖²`.
    pub per_letter_distortions: Vec<f64>,
}

impl Trajectory {
    /// Number of steps `n`; sequences hold `n + 1` entries.
    pub fn horizon(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    /// Per-block distortion: the mean of the `n + 1` per-letter terms.
    pub fn block_distortion(&self) -> f64 {
        self.per_letter_distortions.iter().sum::<f64>() / self.per_letter_distortions.len() as f64
    }

    /// Writes `i, s0.., z_present, z0.., gamma, shat0.., d_i`. Erased
    /// measurements leave the `z` cells empty and print `gamma` as `inf`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let m = self.states.first().map_or(0, |s| s.len());
        let k = self.measurements.iter().flatten().next().map_or(0, |z| z.len());
        let mut header = vec!["i".to_string()];
        header.extend((0..m).map(|j| format!("s{j}")));
        header.push("z_present".into());
        header.extend((0..k).map(|j| format!("z{j}")));
        header.push("gamma".into());
        header.extend((0..m).map(|j| format!("shat{j}")));
        header.push("d_i".into());
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.states.len() {
            let mut row = vec![i.to_string()];
            row.extend(self.states[i].iter().map(|v| v.to_string()));
            match &self.measurements[i] {
                Some(z) => {
                    row.push("1".into());
                    row.extend(z.iter().map(|v| v.to_string()));
                }
                None => {
                    row.push("0".into());
                    row.extend(std::iter::repeat_n(String::new(), k));
                }
            }
            row.push(self.gammas[i].to_string());
            row.extend(self.estimates[i].iter().map(|v| v.to_string()));
            row.push(self.per_letter_distortions[i].to_string());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Draws the gamma sequence `gamma_0 .. gamma_n` for a policy.
pub fn draw_gammas(policy: &BeamPolicy, horizon: usize, seed: u64) -> Result<Vec<NoiseGain>> {
    policy.validate()?;
    Ok(match *policy {
        BeamPolicy::Switching { lambda } => {
            let mut rng = rng::stream_rng(seed, stream::POLICY);
            (0..=horizon)
                .map(|_| if rng.random_bool(lambda) { NoiseGain::Finite(1.0) } else { NoiseGain::Erased })
                .collect()
        }
        BeamPolicy::Multibeam { gamma } => vec![gamma; horizon + 1],
    })
}

/// Simulates the state and runs the filter alongside it.
///
/// The true `s_0` is drawn from `N(s0_estimate, p0)`, so the filter's prior
/// is consistent with the simulation; `d_0` compares that draw against the
/// supplied estimate.
pub fn run_filter(
    model: &GaussMarkovModel,
    policy: &BeamPolicy,
    horizon: usize,
    s0_estimate: &Vector,
    p0: &Matrix,
    seed: u64,
) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::Parameter("horizon must be at least 1".into()));
    }
    check_covariance(model, p0)?;
    if s0_estimate.len() != model.state_dim() {
        return Err(Error::Dimension(format!(
            "initial estimate has length {}, expected {}",
            s0_estimate.len(),
            model.state_dim()
        )));
    }
    if !is_psd(p0, crate::statespace::PSD_TOL) {
        return Err(Error::Parameter("initial covariance is not positive semidefinite".into()));
    }
    let gammas = draw_gammas(policy, horizon, seed)?;
    let s0 = rng::gaussian(&mut rng::stream_rng(seed, stream::INITIAL), s0_estimate, &psd_sqrt(p0));
    let raw = simulate_trajectory(model, &s0, &gammas, seed)?;

    let mut state = FilterState::initial(s0_estimate.clone(), p0.clone());
    let mut estimates = Vec::with_capacity(horizon + 1);
    let mut traces = Vec::with_capacity(horizon + 1);
    let mut distortions = Vec::with_capacity(horizon + 1);
    for i in 0..=horizon {
        distortions.push((&raw.states[i] - &state.estimate).norm_squared());
        estimates.push(state.estimate.clone());
        traces.push(state.covariance.trace());
        if i < horizon {
            state = kalman_step(model, &state, raw.measurements[i].as_ref(), raw.gammas[i])?;
        }
    }
    Ok(Trajectory {
        states: raw.states,
        measurements: raw.measurements,
        gammas: raw.gammas,
        estimates,
        covariance_traces: traces,
        per_letter_distortions: distortions,
    })
}
