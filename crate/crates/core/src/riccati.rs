//! Modified Riccati maps for the two beam strategies, their fixed points and
//! the feasibility thresholds derived from them.
//!
//! * switching: `Γ_bs(P, λ) = A P Aᵀ + Q - λ A P Cᵀ (C P Cᵀ + R)⁻¹ C P Aᵀ`
//! * multi-beam: `Γ_mb(P, γ) = A P Aᵀ + Q - A P Cᵀ (C P Cᵀ + γ R)⁻¹ C P Aᵀ`
//!
//! All threshold searches are bisections over a monotone predicate. Every
//! map here is monotone in the PSD order and satisfies `Γ(0) = Q`, so the
//! iterates started from `Q` are nondecreasing; a trace that exceeds a budget
//! at any iterate therefore exceeds it at the limit as well.
//!
//! Whether a single convergence threshold in `λ` exists for a general
//! `(A, C, Q, R)` is not known; [`critical_lambda`] assumes one.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::filtering::{corrected_step, NoiseGain};
use crate::statespace::{
    max_abs, max_abs_diff, open_loop_step, solve_scaled_lyapunov, spectral_radius, FixedPoint, GaussMarkovModel,
    Matrix, CRITICAL_MARGIN,
};

/// How the transmitter splits the beam between sensing and communicating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BeamPolicy {
    /// Sense (gamma = 1) with probability `lambda`, otherwise communicate
    /// (measurement erased).
    Switching { lambda: f64 },
    /// Constant noise gain `gamma` on every measurement.
    Multibeam { gamma: NoiseGain },
}

impl BeamPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BeamPolicy::Switching { lambda } => check_lambda(lambda),
            BeamPolicy::Multibeam { gamma } => NoiseGain::new(gamma.value()).map(|_| ()),
        }
    }

    /// `λ` or `γ₀` as a plain number (`inf` for an erased multi-beam gain).
    pub fn param(&self) -> f64 {
        match *self {
            BeamPolicy::Switching { lambda } => lambda,
            BeamPolicy::Multibeam { gamma } => gamma.value(),
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Parameter(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    Ok(())
}

/// Beam-switching map `Γ_bs(P, λ)`.
pub fn gamma_bs(model: &GaussMarkovModel, p: &Matrix, lambda: f64) -> Result<Matrix> {
    check_lambda(lambda)?;
    corrected_step(model, p, lambda, NoiseGain::Finite(1.0))
}

/// Multi-beam map `Γ_mb(P, γ)`.
pub fn gamma_mb(model: &GaussMarkovModel, p: &Matrix, gamma: NoiseGain) -> Result<Matrix> {
    corrected_step(model, p, 1.0, gamma)
}

/// A covariance map whose fixed point is sought.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RiccatiMap {
    Switching(f64),
    Multibeam(NoiseGain),
    /// `S ↦ α A S Aᵀ + Q`.
    ScaledLyapunov(f64),
}

impl RiccatiMap {
    pub fn apply(&self, model: &GaussMarkovModel, p: &Matrix) -> Result<Matrix> {
        match *self {
            RiccatiMap::Switching(lambda) => gamma_bs(model, p, lambda),
            RiccatiMap::Multibeam(gamma) => gamma_mb(model, p, gamma),
            RiccatiMap::ScaledLyapunov(alpha) => {
                if !(0.0..=1.0).contains(&alpha) {
                    return Err(Error::Parameter(format!("alpha must lie in [0, 1], got {alpha}")));
                }
                Ok(open_loop_step(model, p, alpha))
            }
        }
    }

    /// Coefficient `α` such that the map dominates `P ↦ α A P Aᵀ + Q`
    /// (the correction term never exceeds `A P Aᵀ`).
    fn open_loop_weight(&self) -> f64 {
        match *self {
            RiccatiMap::Switching(lambda) => 1.0 - lambda,
            RiccatiMap::Multibeam(NoiseGain::Erased) => 1.0,
            RiccatiMap::Multibeam(NoiseGain::Finite(_)) => 0.0,
            RiccatiMap::ScaledLyapunov(alpha) => alpha,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    /// Stop when the largest elementwise change is below `tol * max(1, max|P|)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Trace above which the iteration is declared divergent.
    pub blowup_trace: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 1_000_000, blowup_trace: 1e12 }
    }
}

/// Iterates `map` from `p0` (default `Q`) to its fixed point.
///
/// A map that dominates `α A P Aᵀ + Q` with `α ρ(A)² >= 1` is reported
/// divergent up front. Otherwise divergence is declared when the trace
/// exceeds `blowup_trace`, or when `max_iter` is reached while the trace is
/// still increasing.
pub fn fixed_point(
    map: &RiccatiMap,
    model: &GaussMarkovModel,
    p0: Option<&Matrix>,
    opts: FixedPointOptions,
) -> Result<FixedPoint> {
    let rho = model.spectral_radius();
    if map.open_loop_weight() * rho * rho >= 1.0 - CRITICAL_MARGIN {
        return Ok(FixedPoint::Diverged { iterations: 0, last_trace: f64::INFINITY });
    }
    let mut p = p0.unwrap_or(model.q()).clone();
    let mut tail: VecDeque<f64> = VecDeque::with_capacity(8);
    for it in 1..=opts.max_iter {
        let next = map.apply(model, &p)?;
        let tr = next.trace();
        if !tr.is_finite() || tr > opts.blowup_trace {
            return Ok(FixedPoint::Diverged { iterations: it, last_trace: tr });
        }
        let change = max_abs_diff(&next, &p);
        p = next;
        if change < opts.tol * max_abs(&p).max(1.0) {
            return Ok(FixedPoint::Converged { value: p, iterations: it });
        }
        if tail.len() == 8 {
            tail.pop_front();
        }
        tail.push_back(tr);
    }
    let growing = tail.iter().zip(tail.iter().skip(1)).all(|(a, b)| b > a);
    if growing {
        return Ok(FixedPoint::Diverged { iterations: opts.max_iter, last_trace: p.trace() });
    }
    Err(Error::Convergence { iterations: opts.max_iter, detail: format!("trace history tail {:?}", tail) })
}

/// Lower steady-state bound: `S̄ = (1 - λ) A S̄ Aᵀ + Q`.
pub fn sbar(lambda: f64, model: &GaussMarkovModel) -> Result<FixedPoint> {
    check_lambda(lambda)?;
    solve_scaled_lyapunov(model, 1.0 - lambda)
}

/// Upper steady-state bound: `V̄ = Γ_bs(V̄, λ)`.
pub fn vbar(lambda: f64, model: &GaussMarkovModel) -> Result<FixedPoint> {
    check_lambda(lambda)?;
    fixed_point(&RiccatiMap::Switching(lambda), model, None, FixedPointOptions::default())
}

/// Multi-beam steady-state covariance, the fixed point of `Γ_mb(·, γ)`.
pub fn mb_steady_state(gamma: NoiseGain, model: &GaussMarkovModel) -> Result<FixedPoint> {
    fixed_point(&RiccatiMap::Multibeam(gamma), model, None, FixedPointOptions::default())
}

/// Decides whether `V̄(λ)` exists.
///
/// Divergence is certain when `(1 - λ) ρ(A)² >= 1`. Convergence is certified
/// as soon as some iterate `P` yields a gain `K = -A P Cᵀ (C P Cᵀ + R)⁻¹`
/// whose closed-loop operator `(1 - λ) A⊗A + λ (A + K C)⊗(A + K C)` has
/// spectral radius below one: `Γ_bs` is dominated by the affine map with
/// that fixed gain, whose iterates stay bounded. Falling back, the
/// iteration either converges, blows up past `1e12`, or exhausts its budget
/// (counted as divergent).
pub fn switching_converges(model: &GaussMarkovModel, lambda: f64) -> Result<bool> {
    check_lambda(lambda)?;
    let opts = FixedPointOptions::default();
    let rho = model.spectral_radius();
    if (1.0 - lambda) * rho * rho >= 1.0 - CRITICAL_MARGIN {
        return Ok(false);
    }
    let a = model.a();
    let c = model.c();
    let open = a.kronecker(a) * (1.0 - lambda);
    let mut p = model.q().clone();
    for it in 1..=opts.max_iter {
        if it <= 64 || it % 32 == 0 {
            let s = c * &p * c.transpose() + model.r();
            let s_inv = s.clone().cholesky().map(|ch| ch.inverse()).ok_or_else(|| Error::Numerical {
                what: "C P Cᵀ + R is not positive definite".into(),
                condition: f64::INFINITY,
            })?;
            let k = -(a * &p * c.transpose() * s_inv);
            let f: DMatrix<f64> = a + k * c;
            let op = &open + f.kronecker(&f) * lambda;
            if spectral_radius(&op)? < 1.0 {
                return Ok(true);
            }
        }
        let next = gamma_bs(model, &p, lambda)?;
        let tr = next.trace();
        if !tr.is_finite() || tr > opts.blowup_trace {
            return Ok(false);
        }
        let change = max_abs_diff(&next, &p);
        p = next;
        if change < opts.tol * max_abs(&p).max(1.0) {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Smallest sensing probability for which `V̄` exists, by bisection to
/// `bisect_tol`. Stable models return 0.
pub fn critical_lambda(model: &GaussMarkovModel, bisect_tol: f64) -> Result<f64> {
    if !(bisect_tol > 0.0) {
        return Err(Error::Parameter(format!("bisection tolerance must be positive, got {bisect_tol}")));
    }
    if model.is_stable() {
        return Ok(0.0);
    }
    if !switching_converges(model, 1.0)? {
        return Err(Error::Parameter("V̄ does not exist even at lambda = 1; (A, C) is not detectable".into()));
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > bisect_tol {
        let mid = 0.5 * (lo + hi);
        if switching_converges(model, mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Outcome of a budget-driven threshold search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Value(f64),
    Infeasible,
}

impl Threshold {
    pub fn value(self) -> Option<f64> {
        match self {
            Threshold::Value(v) => Some(v),
            Threshold::Infeasible => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaLimit {
    Value(f64),
    /// Even `γ = ∞` (no sensing) meets the budget.
    Unbounded,
    /// Even `γ = 1` misses the budget.
    Infeasible,
}

/// Bisection tolerance used by the budget searches (on `λ` and on `ln γ`).
pub const BUDGET_BISECT_TOL: f64 = 1e-10;
/// Range of `ln γ` searched by [`gamma_max`].
pub const LOG_GAMMA_RANGE: f64 = 40.0;

/// Whether the fixed point of `map` exists and has trace at most `budget`.
/// Exits early once a (nondecreasing) iterate from `Q` passes the budget.
pub fn steady_trace_within(map: &RiccatiMap, model: &GaussMarkovModel, budget: f64) -> Result<bool> {
    let opts = FixedPointOptions::default();
    let rho = model.spectral_radius();
    if map.open_loop_weight() * rho * rho >= 1.0 - CRITICAL_MARGIN {
        return Ok(false);
    }
    let mut p = model.q().clone();
    if p.trace() > budget {
        return Ok(false);
    }
    for _ in 0..opts.max_iter {
        let next = map.apply(model, &p)?;
        let tr = next.trace();
        if !(tr <= budget) {
            return Ok(false);
        }
        let change = max_abs_diff(&next, &p);
        p = next;
        if change < opts.tol * max_abs(&p).max(1.0) {
            return Ok(true);
        }
    }
    Err(Error::Convergence {
        iterations: opts.max_iter,
        detail: format!("budget check for {map:?} still moving at trace {}", p.trace()),
    })
}

fn check_budget(budget: f64) -> Result<()> {
    if !(budget > 0.0) {
        return Err(Error::Parameter(format!("distortion budget must be positive, got {budget}")));
    }
    Ok(())
}

fn least_lambda<F>(budget: f64, within: F) -> Result<Threshold>
where
    F: Fn(f64) -> Result<bool>,
{
    check_budget(budget)?;
    if !within(1.0)? {
        return Ok(Threshold::Infeasible);
    }
    if within(0.0)? {
        return Ok(Threshold::Value(0.0));
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > BUDGET_BISECT_TOL {
        let mid = 0.5 * (lo + hi);
        if within(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Threshold::Value(hi))
}

/// Least `λ` with `tr(S̄(λ)) <= budget`.
pub fn lambda_s(budget: f64, model: &GaussMarkovModel) -> Result<Threshold> {
    least_lambda(budget, |l| steady_trace_within(&RiccatiMap::ScaledLyapunov(1.0 - l), model, budget))
}

/// Least `λ` with `tr(V̄(λ)) <= budget`.
pub fn lambda_v(budget: f64, model: &GaussMarkovModel) -> Result<Threshold> {
    least_lambda(budget, |l| steady_trace_within(&RiccatiMap::Switching(l), model, budget))
}

/// Largest `γ₀` whose multi-beam steady-state trace is at most `budget`,
/// by bisection on `ln γ₀ ∈ [0, 40]`.
pub fn gamma_max(budget: f64, model: &GaussMarkovModel) -> Result<GammaLimit> {
    check_budget(budget)?;
    let within =
        |log_g: f64| steady_trace_within(&RiccatiMap::Multibeam(NoiseGain::Finite(log_g.exp())), model, budget);
    if !within(0.0)? {
        return Ok(GammaLimit::Infeasible);
    }
    if steady_trace_within(&RiccatiMap::Multibeam(NoiseGain::Erased), model, budget)? {
        return Ok(GammaLimit::Unbounded);
    }
    if within(LOG_GAMMA_RANGE)? {
        return Ok(GammaLimit::Value(LOG_GAMMA_RANGE.exp()));
    }
    let (mut lo, mut hi) = (0.0_f64, LOG_GAMMA_RANGE);
    while hi - lo > BUDGET_BISECT_TOL {
        let mid = 0.5 * (lo + hi);
        if within(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(GammaLimit::Value(lo.exp()))
}
