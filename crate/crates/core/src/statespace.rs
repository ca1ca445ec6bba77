//! Dense linear-algebra helpers and the linear Gauss-Markov model.
//!
//! Everything here works on small dynamically sized `nalgebra` matrices; the
//! intended envelope is state and measurement dimensions up to about eight.

use std::fmt;

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative eigenvalue tolerance for PSD / PD classification.
pub const PSD_TOL: f64 = 1e-10;
/// Elementwise stopping tolerance for the Lyapunov iteration.
pub const LYAPUNOV_TOL: f64 = 1e-12;
pub const LYAPUNOV_MAX_ITER: usize = 1_000_000;
/// `alpha * rho(A)^2` at or above `1 - CRITICAL_MARGIN` is reported divergent.
pub const CRITICAL_MARGIN: f64 = 1e-9;

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.iter().zip(b.iter()).fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn symmetric_eigenvalues(m: &Matrix) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// True when the smallest eigenvalue is at least `-tol * max|eig|`.
pub fn is_psd(m: &Matrix, tol: f64) -> bool {
    let ev = symmetric_eigenvalues(m);
    let scale = ev.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    ev.first().is_none_or(|&lo| lo >= -tol * scale)
}

/// True when the smallest eigenvalue exceeds `tol * max|eig|` (so the zero
/// matrix is never positive definite).
pub fn is_pd(m: &Matrix, tol: f64) -> bool {
    let ev = symmetric_eigenvalues(m);
    let scale = ev.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    !ev.is_empty() && ev[0] > tol * scale
}

/// Symmetric square root with negative eigenvalues clamped to zero.
pub fn psd_sqrt(m: &Matrix) -> Matrix {
    let n = m.nrows();
    if n == 0 {
        return Matrix::zeros(0, 0);
    }
    let eig = symmetrize(m).symmetric_eigen();
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * Matrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// All eigenvalues of a square matrix.
pub fn eigenvalues(a: &Matrix) -> Result<Vec<Complex<f64>>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension(format!("expected a square matrix, got {}x{}", n, a.ncols())));
    }
    Ok(match n {
        0 => Vec::new(),
        1 => vec![Complex::new(a[(0, 0)], 0.0)],
        2 => {
            let half_tr = 0.5 * (a[(0, 0)] + a[(1, 1)]);
            let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
            let disc = half_tr * half_tr - det;
            if disc >= 0.0 {
                let r = disc.sqrt();
                vec![Complex::new(half_tr + r, 0.0), Complex::new(half_tr - r, 0.0)]
            } else {
                let r = (-disc).sqrt();
                vec![Complex::new(half_tr, r), Complex::new(half_tr, -r)]
            }
        }
        _ => a.complex_eigenvalues().iter().copied().collect(),
    })
}

/// Largest eigenvalue modulus.
///
/// One- and two-dimensional matrices use the characteristic polynomial
/// directly; larger ones go through a real Schur decomposition.
pub fn spectral_radius(a: &Matrix) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().fold(0.0_f64, |acc, z| acc.max(z.norm())))
}

/// Linear Gauss-Markov model
///
/// ```text
/// s_i = A s_{i-1} + w_{i-1},   w ~ N(0, Q)
/// z_i = C s_i + v_i,           v ~ N(0, gamma_i R)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GaussMarkovModel {
    a: Matrix,
    c: Matrix,
    q: Matrix,
    r: Matrix,
    q_sqrt: Matrix,
    r_sqrt: Matrix,
}

impl GaussMarkovModel {
    /// Builds a model after checking that the shapes agree. Noise statistics
    /// are not checked here; see [`validate_model`].
    pub fn new(a: Matrix, c: Matrix, q: Matrix, r: Matrix) -> Result<Self> {
        let m = a.nrows();
        let k = c.nrows();
        if m == 0 || a.ncols() != m {
            return Err(Error::Dimension(format!("A must be square and nonempty, got {}x{}", m, a.ncols())));
        }
        if k == 0 || c.ncols() != m {
            return Err(Error::Dimension(format!("C must be k x {m} with k > 0, got {}x{}", k, c.ncols())));
        }
        if q.nrows() != m || q.ncols() != m {
            return Err(Error::Dimension(format!("Q must be {m}x{m}, got {}x{}", q.nrows(), q.ncols())));
        }
        if r.nrows() != k || r.ncols() != k {
            return Err(Error::Dimension(format!("R must be {k}x{k}, got {}x{}", r.nrows(), r.ncols())));
        }
        let q_sqrt = psd_sqrt(&q);
        let r_sqrt = psd_sqrt(&r);
        Ok(Self { a, c, q, r, q_sqrt, r_sqrt })
    }

    /// Scalar model with `m = k = 1`.
    pub fn scalar(a: f64, c: f64, q: f64, r: f64) -> Self {
        let one = |v| Matrix::from_element(1, 1, v);
        Self::new(one(a), one(c), one(q), one(r)).expect("1x1 shapes always agree")
    }

    /// Same noise and measurement map with a different transition matrix.
    pub fn with_transition(&self, a: Matrix) -> Result<Self> {
        Self::new(a, self.c.clone(), self.q.clone(), self.r.clone())
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }
    pub fn c(&self) -> &Matrix {
        &self.c
    }
    pub fn q(&self) -> &Matrix {
        &self.q
    }
    pub fn r(&self) -> &Matrix {
        &self.r
    }
    pub(crate) fn q_sqrt(&self) -> &Matrix {
        &self.q_sqrt
    }
    pub(crate) fn r_sqrt(&self) -> &Matrix {
        &self.r_sqrt
    }

    /// State dimension `m`.
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Measurement dimension `k`.
    pub fn meas_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.a).expect("A is square by construction")
    }

    pub fn is_stable(&self) -> bool {
        self.spectral_radius() < 1.0
    }
}

/// Result of a fixed-point search.
#[derive(Debug, Clone, PartialEq)]
pub enum FixedPoint {
    Converged { value: Matrix, iterations: usize },
    Diverged { iterations: usize, last_trace: f64 },
}

impl FixedPoint {
    pub fn matrix(&self) -> Option<&Matrix> {
        match self {
            FixedPoint::Converged { value, .. } => Some(value),
            FixedPoint::Diverged { .. } => None,
        }
    }

    /// Trace of the fixed point, `+inf` when divergent.
    pub fn trace(&self) -> f64 {
        self.matrix().map_or(f64::INFINITY, |m| m.trace())
    }

    pub fn is_converged(&self) -> bool {
        matches!(self, FixedPoint::Converged { .. })
    }
}

/// `alpha * A P Aᵀ + Q`, symmetrized. With `alpha = 1` this is the
/// open-loop covariance prediction.
pub fn open_loop_step(model: &GaussMarkovModel, p: &Matrix, alpha: f64) -> Matrix {
    let a = model.a();
    let apa = a * p * a.transpose();
    symmetrize(&(apa * alpha + model.q()))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Parameter(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

/// Finite-horizon iterates `S_0 = p0, S_{j+1} = alpha A S_j Aᵀ + Q`, returned
/// for `j = 0..=n`.
pub fn lyapunov_iterates(model: &GaussMarkovModel, alpha: f64, p0: &Matrix, n: usize) -> Result<Vec<Matrix>> {
    check_alpha(alpha)?;
    let mut out = Vec::with_capacity(n + 1);
    out.push(p0.clone());
    for j in 0..n {
        let next = open_loop_step(model, &out[j], alpha);
        out.push(next);
    }
    Ok(out)
}

/// Solves `S = alpha A S Aᵀ + Q` by fixed-point iteration from `S_0 = Q`.
///
/// Returns [`FixedPoint::Diverged`] without iterating when
/// `alpha * rho(A)^2 >= 1 - 1e-9`. Iteration stops once the largest
/// elementwise change drops below `1e-12 * max(1, max|S|)`.
pub fn solve_scaled_lyapunov(model: &GaussMarkovModel, alpha: f64) -> Result<FixedPoint> {
    check_alpha(alpha)?;
    let rho = model.spectral_radius();
    if alpha * rho * rho >= 1.0 - CRITICAL_MARGIN {
        return Ok(FixedPoint::Diverged { iterations: 0, last_trace: f64::INFINITY });
    }
    let mut s = model.q().clone();
    if alpha == 0.0 {
        return Ok(FixedPoint::Converged { value: s, iterations: 0 });
    }
    let mut change = f64::INFINITY;
    for it in 1..=LYAPUNOV_MAX_ITER {
        let next = open_loop_step(model, &s, alpha);
        change = max_abs_diff(&next, &s);
        let done = change < LYAPUNOV_TOL * max_abs(&next).max(1.0);
        s = next;
        if done {
            return Ok(FixedPoint::Converged { value: s, iterations: it });
        }
    }
    Err(Error::Convergence {
        iterations: LYAPUNOV_MAX_ITER,
        detail: format!("scaled Lyapunov iteration still moving, last change {change:e}"),
    })
}

/// One failed model-validity check.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    QNotSymmetric { residual: f64 },
    QNotPsd { min_eigenvalue: f64 },
    RNotSymmetric { residual: f64 },
    RNotPositiveDefinite { min_eigenvalue: f64 },
    NotDetectable { eigenvalue: Complex<f64>, rank: usize },
    NotControllable { eigenvalue: Complex<f64>, rank: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::QNotSymmetric { residual } => write!(f, "Q not symmetric (residual {residual:e})"),
            Violation::QNotPsd { min_eigenvalue } => {
                write!(f, "Q not positive semidefinite (min eigenvalue {min_eigenvalue:e})")
            }
            Violation::RNotSymmetric { residual } => write!(f, "R not symmetric (residual {residual:e})"),
            Violation::RNotPositiveDefinite { min_eigenvalue } => {
                write!(f, "R not positive definite (min eigenvalue {min_eigenvalue:e})")
            }
            Violation::NotDetectable { eigenvalue, rank } => {
                write!(f, "(A, C) not detectable: PBH rank {rank} at eigenvalue {eigenvalue}")
            }
            Violation::NotControllable { eigenvalue, rank } => {
                write!(f, "(A, Q^1/2) not controllable: PBH rank {rank} at eigenvalue {eigenvalue}")
            }
        }
    }
}

/// PBH rank at one eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct PbhRank {
    pub eigenvalue: Complex<f64>,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub q_symmetry_residual: f64,
    pub r_symmetry_residual: f64,
    /// Ranks of `[A - μI; C]` at every eigenvalue with `|μ| >= 1`.
    pub detectability_ranks: Vec<PbhRank>,
    /// Ranks of `[A - μI, Q^1/2]` at every eigenvalue.
    pub controllability_ranks: Vec<PbhRank>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

const SYMMETRY_TOL: f64 = 1e-10;
const RANK_TOL: f64 = 1e-9;

fn complex_rank(m: &DMatrix<Complex<f64>>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().fold(0.0_f64, |a, &v| a.max(v));
    let cut = RANK_TOL * top.max(1.0);
    sv.iter().filter(|&&v| v > cut).count()
}

fn to_complex(m: &Matrix) -> DMatrix<Complex<f64>> {
    m.map(|v| Complex::new(v, 0.0))
}

/// Checks every model invariant and reports the failures instead of
/// returning an error.
pub fn validate_model(model: &GaussMarkovModel) -> ValidationReport {
    let mut violations = Vec::new();
    let m = model.state_dim();
    let q = model.q();
    let r = model.r();

    let q_res = max_abs_diff(q, &q.transpose());
    let r_res = max_abs_diff(r, &r.transpose());
    let q_scale = max_abs(q).max(1.0);
    let r_scale = max_abs(r).max(1.0);
    if q_res > SYMMETRY_TOL * q_scale {
        violations.push(Violation::QNotSymmetric { residual: q_res });
    }
    if !is_psd(q, PSD_TOL) {
        violations.push(Violation::QNotPsd { min_eigenvalue: symmetric_eigenvalues(q)[0] });
    }
    if r_res > SYMMETRY_TOL * r_scale {
        violations.push(Violation::RNotSymmetric { residual: r_res });
    }
    if !is_pd(r, PSD_TOL) {
        violations.push(Violation::RNotPositiveDefinite { min_eigenvalue: symmetric_eigenvalues(r)[0] });
    }

    let eig = eigenvalues(model.a()).expect("A is square by construction");
    let a_c = to_complex(model.a());
    let c_c = to_complex(model.c());
    let qs_c = to_complex(model.q_sqrt());
    let k = model.meas_dim();

    let mut detectability_ranks = Vec::new();
    let mut controllability_ranks = Vec::new();
    for &mu in &eig {
        let shifted = &a_c - DMatrix::<Complex<f64>>::identity(m, m) * mu;

        if mu.norm() >= 1.0 {
            let mut stacked = DMatrix::<Complex<f64>>::zeros(m + k, m);
            stacked.view_mut((0, 0), (m, m)).copy_from(&shifted);
            stacked.view_mut((m, 0), (k, m)).copy_from(&c_c);
            let rank = complex_rank(&stacked);
            if rank < m {
                violations.push(Violation::NotDetectable { eigenvalue: mu, rank });
            }
            detectability_ranks.push(PbhRank { eigenvalue: mu, rank });
        }

        let mut side = DMatrix::<Complex<f64>>::zeros(m, 2 * m);
        side.view_mut((0, 0), (m, m)).copy_from(&shifted);
        side.view_mut((0, m), (m, m)).copy_from(&qs_c);
        let rank = complex_rank(&side);
        if rank < m {
            violations.push(Violation::NotControllable { eigenvalue: mu, rank });
        }
        controllability_ranks.push(PbhRank { eigenvalue: mu, rank });
    }

    ValidationReport {
        violations,
        q_symmetry_residual: q_res,
        r_symmetry_residual: r_res,
        detectability_ranks,
        controllability_ranks,
    }
}
