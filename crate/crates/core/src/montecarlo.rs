//! Monte Carlo checks of the covariance bounds and of the filter's block
//! distortion.
//!
//! Trial `t` of a run seeded with `seed` uses [`rng::trial_seed`]`(seed, t)`.
//! Trials run in parallel but are reduced in trial order with Welford's
//! update, so a report is bit-identical for any thread count. When every
//! trial yields the same value the mean reproduces it exactly.

use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filtering::{corrected_step, draw_gammas, run_filter};
use crate::riccati::{critical_lambda, gamma_bs, BeamPolicy};
use crate::rng;
use crate::statespace::{is_psd, lyapunov_iterates, GaussMarkovModel, Matrix, Vector, PSD_TOL};

/// Width of the verdict band in standard errors.
pub const VERDICT_SIGMAS: f64 = 3.0;
/// Sensing probabilities this close to the critical value get flagged.
pub const NEAR_CRITICAL_WINDOW: f64 = 0.05;
const CRITICAL_TOL: f64 = 1e-9;

/// Running mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean; infinite with a single sample.
    pub fn std_error(&self) -> f64 {
        if self.count < 2 {
            f64::INFINITY
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Within,
    Violated,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Within => "within",
            Verdict::Violated => "violated",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepTrace {
    pub i: usize,
    pub mean_trace: f64,
    pub s_bound: f64,
    pub v_bound: f64,
}

/// Empirical `E[P_n]` against the finite-horizon bounds `S_n` and `V_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub lambda: f64,
    pub trials: usize,
    pub horizon: usize,
    pub empirical_mean_trace: f64,
    pub std_error: f64,
    /// `tr S_n`, the scaled Lyapunov iterate.
    pub s_bound: f64,
    /// `tr V_n`, the `Γ_bs` iterate.
    pub v_bound: f64,
    pub verdict: Verdict,
    /// `λ` lies within [`NEAR_CRITICAL_WINDOW`] of the critical value of
    /// an unstable model, where the trace is heavy tailed.
    pub near_critical: bool,
    pub per_step_traces: Vec<StepTrace>,
}

impl McReport {
    /// `[tr S_n - 3 SE, tr V_n + 3 SE]`.
    pub fn band(&self) -> (f64, f64) {
        let w = VERDICT_SIGMAS * self.std_error;
        (self.s_bound - w, self.v_bound + w)
    }

    pub const CSV_HEADER: &'static str =
        "lambda,trials,horizon,empirical_mean_trace,std_error,s_bound,v_bound,band_lo,band_hi,verdict,near_critical";

    pub fn csv_row(&self) -> String {
        let (lo, hi) = self.band();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.lambda,
            self.trials,
            self.horizon,
            self.empirical_mean_trace,
            self.std_error,
            self.s_bound,
            self.v_bound,
            lo,
            hi,
            self.verdict,
            self.near_critical
        )
    }

    /// Long-format per-step traces: `i,mean_trace,s_bound,v_bound`.
    pub fn write_traces_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "i,mean_trace,s_bound,v_bound")?;
        for s in &self.per_step_traces {
            writeln!(out, "{},{},{},{}", s.i, s.mean_trace, s.s_bound, s.v_bound)?;
        }
        Ok(())
    }
}

impl fmt::Display for McReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (lo, hi) = self.band();
        writeln!(f, "lambda            {}", self.lambda)?;
        writeln!(f, "trials            {}", self.trials)?;
        writeln!(f, "horizon           {}", self.horizon)?;
        writeln!(f, "tr E[P_n]         {:.6} (SE {:.3e})", self.empirical_mean_trace, self.std_error)?;
        writeln!(f, "tr S_n            {:.6}", self.s_bound)?;
        writeln!(f, "tr V_n            {:.6}", self.v_bound)?;
        writeln!(f, "3-SE band         [{lo:.6}, {hi:.6}]")?;
        write!(f, "verdict           {}", self.verdict)?;
        if self.near_critical {
            write!(f, " (near-critical, interpret with care)")?;
        }
        Ok(())
    }
}

fn check_p0(model: &GaussMarkovModel, p0: &Matrix) -> Result<()> {
    let m = model.state_dim();
    if p0.nrows() != m || p0.ncols() != m {
        return Err(Error::Dimension(format!("P0 must be {m}x{m}, got {}x{}", p0.nrows(), p0.ncols())));
    }
    if !is_psd(p0, PSD_TOL) {
        return Err(Error::Parameter("P0 is not positive semidefinite".into()));
    }
    Ok(())
}

/// Runs `trials` stochastic Riccati recursions where each measurement
/// arrives with probability `λ`, and compares the mean trace of `P_horizon`
/// against `tr S_n` and `tr V_n` started from the same `P0` (default `Q`).
pub fn expected_covariance_mc(
    model: &GaussMarkovModel,
    lambda: f64,
    horizon: usize,
    trials: usize,
    seed: u64,
    p0: Option<&Matrix>,
) -> Result<McReport> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Parameter(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    if trials == 0 {
        return Err(Error::Parameter("at least one trial is required".into()));
    }
    let p0 = p0.unwrap_or(model.q()).clone();
    check_p0(model, &p0)?;
    let policy = BeamPolicy::Switching { lambda };

    let runs: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let gammas = draw_gammas(&policy, horizon, rng::trial_seed(seed, t as u64))?;
            let mut p = p0.clone();
            let mut traces = Vec::with_capacity(horizon + 1);
            traces.push(p.trace());
            for g in gammas.iter().take(horizon) {
                p = corrected_step(model, &p, 1.0, *g)?;
                traces.push(p.trace());
            }
            Ok(traces)
        })
        .collect::<Result<_>>()?;

    let mut stats = vec![Welford::default(); horizon + 1];
    for run in &runs {
        for (w, &tr) in stats.iter_mut().zip(run) {
            w.push(tr);
        }
    }

    let s_iter = lyapunov_iterates(model, 1.0 - lambda, &p0, horizon)?;
    let mut v = p0.clone();
    let mut per_step = Vec::with_capacity(horizon + 1);
    for (i, w) in stats.iter().enumerate() {
        if i > 0 {
            v = gamma_bs(model, &v, lambda)?;
        }
        per_step.push(StepTrace { i, mean_trace: w.mean(), s_bound: s_iter[i].trace(), v_bound: v.trace() });
    }

    let last = stats[horizon];
    let (mean, se) = (last.mean(), last.std_error());
    let step = per_step[horizon];
    let w = VERDICT_SIGMAS * se;
    let verdict =
        if mean >= step.s_bound - w && mean <= step.v_bound + w { Verdict::Within } else { Verdict::Violated };
    let near_critical =
        !model.is_stable() && (lambda - critical_lambda(model, CRITICAL_TOL)?).abs() <= NEAR_CRITICAL_WINDOW;

    Ok(McReport {
        lambda,
        trials,
        horizon,
        empirical_mean_trace: mean,
        std_error: se,
        s_bound: step.s_bound,
        v_bound: step.v_bound,
        verdict,
        near_critical,
        per_step_traces: per_step,
    })
}

/// Empirical block distortion of the causal filter.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDistortionReport {
    pub trials: usize,
    pub horizon: usize,
    /// Mean of `d_{0,n}` over trials.
    pub mean: f64,
    pub std_error: f64,
    /// Mean per-letter distortion `E[d_i]` for `i = 0..=n`.
    pub per_index_mean: Vec<f64>,
    /// Running block average `Δ^(i) = (1 / (i + 1)) Σ_{j <= i} E[d_j]`.
    pub running_block: Vec<f64>,
}

impl BlockDistortionReport {
    /// `mean ± z · SE`.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        (self.mean - z * self.std_error, self.mean + z * self.std_error)
    }
}

/// Simulates `trials` trajectories under `policy` with `s_0 ~ N(s0_mean, p0)`
/// and a filter primed with the same statistics, and averages the block
/// distortion.
pub fn empirical_block_distortion(
    model: &GaussMarkovModel,
    policy: &BeamPolicy,
    horizon: usize,
    trials: usize,
    seed: u64,
    s0_mean: &Vector,
    p0: &Matrix,
) -> Result<BlockDistortionReport> {
    if trials == 0 {
        return Err(Error::Parameter("at least one trial is required".into()));
    }
    let runs: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let traj = run_filter(model, policy, horizon, s0_mean, p0, rng::trial_seed(seed, t as u64))?;
            Ok(traj.per_letter_distortions)
        })
        .collect::<Result<_>>()?;

    let mut block = Welford::default();
    let mut per_index = vec![Welford::default(); horizon + 1];
    for run in &runs {
        block.push(run.iter().sum::<f64>() / run.len() as f64);
        for (w, &d) in per_index.iter_mut().zip(run) {
            w.push(d);
        }
    }
    let per_index_mean: Vec<f64> = per_index.iter().map(Welford::mean).collect();
    let mut running_block = Vec::with_capacity(per_index_mean.len());
    let mut acc = 0.0;
    for (i, d) in per_index_mean.iter().enumerate() {
        acc += d;
        running_block.push(acc / (i + 1) as f64);
    }
    Ok(BlockDistortionReport {
        trials,
        horizon,
        mean: block.mean(),
        std_error: block.std_error(),
        per_index_mean,
        running_block,
    })
}

/// First index whose running block distortion exceeds `threshold`.
pub fn tracking_loss_monitor(per_index_distortion: &[f64], threshold: f64) -> Result<Option<usize>> {
    if !(threshold > 0.0) {
        return Err(Error::Parameter(format!("threshold must be positive, got {threshold}")));
    }
    Ok(per_index_distortion.iter().position(|&d| d > threshold))
}
