//! Rate formulas and rate-distortion curves for the two beam strategies.
//!
//! Rates are in nats per channel use. Distortion is the trace of a steady
//! state error covariance. Divergent parameters stay on a curve with
//! `distortion = +inf` so the divergent region shows up in the output.

use std::cmp::Ordering;
use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filtering::NoiseGain;
use crate::riccati::{critical_lambda, mb_steady_state, sbar, vbar};
use crate::statespace::GaussMarkovModel;

/// Default capacity of the noiseless channel: one bit, in nats.
pub const DEFAULT_C0: f64 = std::f64::consts::LN_2;
/// Bisection tolerance for the critical sensing probability on a curve.
pub const CURVE_LAMBDA_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelSpec {
    /// Discrete noiseless channel carrying `c0` nats per use.
    Noiseless { c0: f64 },
    /// AWGN channel at the given SNR when every beam communicates.
    Gaussian { snr_db: f64 },
}

impl Default for ChannelSpec {
    fn default() -> Self {
        ChannelSpec::Noiseless { c0: DEFAULT_C0 }
    }
}

impl ChannelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ChannelSpec::Noiseless { c0 } if !(c0 > 0.0 && c0.is_finite()) => {
                Err(Error::Parameter(format!("c0 must be positive and finite, got {c0}")))
            }
            ChannelSpec::Gaussian { snr_db } if !snr_db.is_finite() => {
                Err(Error::Parameter(format!("snr_db must be finite, got {snr_db}")))
            }
            _ => Ok(()),
        }
    }

    /// Rate when the whole channel is used for communication.
    pub fn full_capacity(&self) -> f64 {
        match *self {
            ChannelSpec::Noiseless { c0 } => c0,
            ChannelSpec::Gaussian { snr_db } => 0.5 * snr_linear(snr_db).ln_1p(),
        }
    }
}

impl fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelSpec::Noiseless { c0 } => write!(f, "noiseless(c0={c0})"),
            ChannelSpec::Gaussian { snr_db } => write!(f, "gaussian(snr_db={snr_db})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    Inner,
    Outer,
    Exact,
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundKind::Inner => "inner",
            BoundKind::Outer => "outer",
            BoundKind::Exact => "exact",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateDistortionPoint {
    pub rate: f64,
    /// `+inf` when the covariance recursion diverges.
    pub distortion: f64,
    pub bound_kind: BoundKind,
    /// The `λ` or `γ₀` that produced the point; `+inf` for an erased beam.
    pub param: f64,
}

impl RateDistortionPoint {
    pub fn is_finite(&self) -> bool {
        self.distortion.is_finite()
    }
}

pub fn snr_linear(snr_db: f64) -> f64 {
    10f64.powf(snr_db / 10.0)
}

pub fn snr_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// `(1 - λ) C`, where `C` is the full channel capacity.
pub fn bs_rate(channel: &ChannelSpec, lambda: f64) -> Result<f64> {
    channel.validate()?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Parameter(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    Ok((1.0 - lambda) * channel.full_capacity())
}

/// `½ ln(1 + (γ₀ - 1)/γ₀ · SNR)`. Only defined for the Gaussian channel.
pub fn mb_rate(channel: &ChannelSpec, gamma: NoiseGain) -> Result<f64> {
    channel.validate()?;
    match *channel {
        ChannelSpec::Noiseless { .. } => Err(Error::Unsupported("the multi-beam rate needs a Gaussian channel".into())),
        ChannelSpec::Gaussian { snr_db } => {
            let share = match gamma {
                NoiseGain::Erased => 1.0,
                NoiseGain::Finite(g) => (g - 1.0) / g,
            };
            Ok(0.5 * (share * snr_linear(snr_db)).ln_1p())
        }
    }
}

fn by_distortion(a: &RateDistortionPoint, b: &RateDistortionPoint) -> Ordering {
    a.distortion.total_cmp(&b.distortion).then(a.param.total_cmp(&b.param))
}

/// The two switching curves and the rate asymptote.
#[derive(Debug, Clone, PartialEq)]
pub struct BsCurve {
    /// Achievable points `(bs_rate(λ), tr V̄(λ))`.
    pub inner: Vec<RateDistortionPoint>,
    /// Converse points `(bs_rate(λ), tr S̄(λ))`.
    pub outer: Vec<RateDistortionPoint>,
    pub critical_lambda: f64,
    /// `(1 - λ_c) C`: no finite distortion is reachable above this rate.
    pub asymptote_rate: f64,
}

/// Inner and outer switching curves over `lambda_grid`, each sorted by
/// distortion (divergent points last).
pub fn bs_curve(model: &GaussMarkovModel, channel: &ChannelSpec, lambda_grid: &[f64]) -> Result<BsCurve> {
    channel.validate()?;
    let rows: Vec<(RateDistortionPoint, RateDistortionPoint)> = lambda_grid
        .par_iter()
        .map(|&lambda| {
            let rate = bs_rate(channel, lambda)?;
            let inner = vbar(lambda, model)?.trace();
            let outer = sbar(lambda, model)?.trace();
            Ok((
                RateDistortionPoint { rate, distortion: inner, bound_kind: BoundKind::Inner, param: lambda },
                RateDistortionPoint { rate, distortion: outer, bound_kind: BoundKind::Outer, param: lambda },
            ))
        })
        .collect::<Result<_>>()?;
    let (mut inner, mut outer): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    inner.sort_by(by_distortion);
    outer.sort_by(by_distortion);
    let lc = critical_lambda(model, CURVE_LAMBDA_TOL)?;
    Ok(BsCurve { inner, outer, critical_lambda: lc, asymptote_rate: (1.0 - lc) * channel.full_capacity() })
}

/// Exact multi-beam curve `(mb_rate(γ₀), tr P̄(γ₀))`, sorted by distortion.
pub fn mb_curve(
    model: &GaussMarkovModel,
    channel: &ChannelSpec,
    gamma_grid: &[NoiseGain],
) -> Result<Vec<RateDistortionPoint>> {
    let mut pts: Vec<RateDistortionPoint> = gamma_grid
        .par_iter()
        .map(|&gamma| {
            Ok(RateDistortionPoint {
                rate: mb_rate(channel, gamma)?,
                distortion: mb_steady_state(gamma, model)?.trace(),
                bound_kind: BoundKind::Exact,
                param: gamma.value(),
            })
        })
        .collect::<Result<_>>()?;
    pts.sort_by(by_distortion);
    Ok(pts)
}

/// `count` points spaced evenly on a log scale from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count).map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp()).collect()
        }
    }
}

/// `count` evenly spaced points from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count).map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64).collect(),
    }
}

/// Finite points of a curve as `(distortion, rate)` pairs, sorted, with
/// repeated distortions collapsed to their best rate.
fn finite_knots(curve: &[RateDistortionPoint]) -> Vec<(f64, f64)> {
    let mut knots: Vec<(f64, f64)> = curve.iter().filter(|p| p.is_finite()).map(|p| (p.distortion, p.rate)).collect();
    knots.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    knots.dedup_by(|later, earlier| later.0 == earlier.0);
    knots
}

/// Piecewise-linear rate at distortion `d`; `None` outside the curve's span.
pub fn interpolate_rate(curve: &[RateDistortionPoint], d: f64) -> Option<f64> {
    interpolate(&finite_knots(curve), d)
}

fn interpolate(knots: &[(f64, f64)], d: f64) -> Option<f64> {
    let (first, last) = (knots.first()?, knots.last()?);
    if d < first.0 || d > last.0 {
        return None;
    }
    let hi = knots.partition_point(|k| k.0 < d);
    if knots[hi].0 == d {
        return Some(knots[hi].1);
    }
    let (d0, r0) = knots[hi - 1];
    let (d1, r1) = knots[hi];
    Some(r0 + (r1 - r0) * (d - d0) / (d1 - d0))
}

/// Distortion span covered by the finite parts of both curves.
pub fn overlap(a: &[RateDistortionPoint], b: &[RateDistortionPoint]) -> Option<(f64, f64)> {
    let (ka, kb) = (finite_knots(a), finite_knots(b));
    let lo = ka.first()?.0.max(kb.first()?.0);
    let hi = ka.last()?.0.min(kb.last()?.0);
    (lo <= hi).then_some((lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominanceRow {
    pub distortion: f64,
    pub rate_a: f64,
    pub rate_b: f64,
    /// `rate_a - rate_b`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DominanceReport {
    pub rows: Vec<DominanceRow>,
    /// Rows with `gap > tie_tol`.
    pub a_ahead: usize,
    /// Rows with `gap < -tie_tol`.
    pub b_ahead: usize,
    pub ties: usize,
}

impl DominanceReport {
    pub fn min_gap(&self) -> Option<f64> {
        self.rows.iter().map(|r| r.gap).min_by(f64::total_cmp)
    }

    pub fn max_gap(&self) -> Option<f64> {
        self.rows.iter().map(|r| r.gap).max_by(f64::total_cmp)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Compares two curves at every grid distortion covered by both. Grid
/// points outside the overlap are skipped, so disjoint curves give an
/// empty report.
pub fn dominance_report(
    a: &[RateDistortionPoint],
    b: &[RateDistortionPoint],
    distortion_grid: &[f64],
    tie_tol: f64,
) -> DominanceReport {
    let (ka, kb) = (finite_knots(a), finite_knots(b));
    let mut report = DominanceReport::default();
    for &d in distortion_grid {
        let (Some(rate_a), Some(rate_b)) = (interpolate(&ka, d), interpolate(&kb, d)) else {
            continue;
        };
        let gap = rate_a - rate_b;
        if gap > tie_tol {
            report.a_ahead += 1;
        } else if gap < -tie_tol {
            report.b_ahead += 1;
        } else {
            report.ties += 1;
        }
        report.rows.push(DominanceRow { distortion: d, rate_a, rate_b, gap });
    }
    report
}

fn fmt_num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v}")
    }
}

/// Writes a curve as CSV. `comments` become leading `# ` lines; with `bits`
/// a `rate_bits` column is appended.
pub fn write_curve_csv<W: Write>(
    out: &mut W,
    comments: &[String],
    points: &[RateDistortionPoint],
    bits: bool,
) -> io::Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    write!(out, "param,rate_nats,distortion,bound_kind,finite")?;
    if bits {
        write!(out, ",rate_bits")?;
    }
    writeln!(out)?;
    for p in points {
        write!(
            out,
            "{},{},{},{},{}",
            fmt_num(p.param),
            fmt_num(p.rate),
            fmt_num(p.distortion),
            p.bound_kind,
            p.is_finite()
        )?;
        if bits {
            write!(out, ",{}", fmt_num(p.rate / std::f64::consts::LN_2))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unstable() -> GaussMarkovModel {
        GaussMarkovModel::scalar(-1.15, 1.0, 0.2, 1.5)
    }

    fn stable() -> GaussMarkovModel {
        GaussMarkovModel::scalar(-0.95, 1.0, 0.2, 1.5)
    }

    const DB: f64 = 1.75;

    #[test]
    fn snr_examples() {
        assert_eq!(snr_linear(0.0), 1.0);
        assert!((snr_linear(1.75) - 1.496236).abs() < 1e-6);
        assert!((snr_linear(20.0) - 100.0).abs() < 1e-12);
        for db in [-3.0, 0.5, 1.75, 20.0] {
            assert!((snr_db(snr_linear(db)) - db).abs() < 1e-12);
        }
    }

    #[test]
    fn rate_examples() {
        let g = ChannelSpec::Gaussian { snr_db: DB };
        let one = ChannelSpec::Noiseless { c0: 1.0 };
        assert_eq!(bs_rate(&g, 1.0).unwrap(), 0.0);
        assert!((bs_rate(&g, 0.0).unwrap() - 0.457392).abs() < 1e-6);
        assert_eq!(bs_rate(&one, 0.5).unwrap(), 0.5);
        assert!(bs_rate(&one, 1.5).is_err());

        assert_eq!(mb_rate(&g, NoiseGain::Finite(1.0)).unwrap(), 0.0);
        assert!((mb_rate(&g, NoiseGain::Erased).unwrap() - 0.457392).abs() < 1e-6);
        assert!((mb_rate(&g, NoiseGain::Finite(2.0)).unwrap() - 0.279270).abs() < 1e-6);
        assert!(matches!(mb_rate(&one, NoiseGain::Finite(2.0)), Err(Error::Unsupported(_))));
        assert_eq!(ChannelSpec::default().full_capacity(), std::f64::consts::LN_2);
    }

    #[test]
    fn bs_curve_examples() {
        let one = ChannelSpec::Noiseless { c0: 1.0 };
        let grid = linear_grid(0.0, 1.0, 41);
        let c = bs_curve(&unstable(), &one, &grid).unwrap();
        let dare = vbar(1.0, &unstable()).unwrap().trace();
        let end_in = c.inner.iter().find(|p| p.param == 1.0).unwrap();
        let end_out = c.outer.iter().find(|p| p.param == 1.0).unwrap();
        assert_eq!((end_in.rate, end_in.distortion), (0.0, dare));
        assert_eq!((end_out.rate, end_out.distortion), (0.0, 0.2));
        for p in c.inner.iter().chain(&c.outer) {
            assert_eq!(p.is_finite(), p.param > 0.243856, "lambda {}", p.param);
        }
        assert!((c.critical_lambda - 0.243856).abs() < 1e-6);
        assert!((c.asymptote_rate - 0.756144).abs() < 1e-6);
        // divergent points sort last
        assert!(!c.inner.last().unwrap().is_finite());

        let s = bs_curve(&stable(), &one, &[0.0]).unwrap();
        assert_eq!(s.outer[0].rate, 1.0);
        assert!((s.outer[0].distortion - 2.051282).abs() < 1e-6);
        assert_eq!(s.critical_lambda, 0.0);
    }

    #[test]
    fn mb_curve_examples() {
        let g = ChannelSpec::Gaussian { snr_db: DB };
        let pts = mb_curve(&unstable(), &g, &[NoiseGain::Finite(1.0), NoiseGain::Erased]).unwrap();
        assert_eq!(pts[0].rate, 0.0);
        assert!((pts[0].distortion - 0.987536).abs() < 1e-6);
        assert!(!pts[1].is_finite());
        assert_eq!(pts[1].param, f64::INFINITY);

        let pts = mb_curve(&stable(), &g, &[NoiseGain::Erased]).unwrap();
        assert!((pts[0].rate - 0.457392).abs() < 1e-6);
        assert!((pts[0].distortion - 2.051282).abs() < 1e-6);
    }

    fn pt(rate: f64, distortion: f64) -> RateDistortionPoint {
        RateDistortionPoint { rate, distortion, bound_kind: BoundKind::Exact, param: 0.0 }
    }

    #[test]
    fn interpolation_and_overlap() {
        let c = vec![pt(0.0, 1.0), pt(1.0, 3.0), pt(5.0, f64::INFINITY)];
        assert_eq!(interpolate_rate(&c, 2.0), Some(0.5));
        assert_eq!(interpolate_rate(&c, 3.0), Some(1.0));
        assert_eq!(interpolate_rate(&c, 3.5), None);
        let d = vec![pt(0.0, 2.0), pt(1.0, 6.0)];
        assert_eq!(overlap(&c, &d), Some((2.0, 3.0)));
        assert_eq!(overlap(&c, &[pt(0.0, 7.0), pt(1.0, 8.0)]), None);
    }

    #[test]
    fn dominance_examples() {
        let c = vec![pt(0.0, 1.0), pt(1.0, 3.0)];
        let grid = linear_grid(0.5, 3.5, 13);
        let r = dominance_report(&c, &c, &grid, 0.0);
        assert_eq!(r.rows.len(), 9);
        assert!(r.rows.iter().all(|row| row.gap == 0.0));
        assert_eq!(r.ties, 9);

        let far = vec![pt(0.0, 10.0), pt(1.0, 11.0)];
        assert!(dominance_report(&c, &far, &grid, 0.0).is_empty());

        let higher = vec![pt(0.5, 1.0), pt(1.5, 3.0)];
        let r = dominance_report(&higher, &c, &grid, 1e-12);
        assert_eq!(r.a_ahead, 9);
        assert!((r.min_gap().unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let pts = [
            RateDistortionPoint { rate: 0.5, distortion: 1.25, bound_kind: BoundKind::Inner, param: 0.5 },
            RateDistortionPoint {
                rate: 1.0,
                distortion: f64::INFINITY,
                bound_kind: BoundKind::Exact,
                param: f64::INFINITY,
            },
        ];
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, &["model=x".into()], &pts, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# model=x");
        assert_eq!(lines[1], "param,rate_nats,distortion,bound_kind,finite,rate_bits");
        assert!(lines[2].starts_with("0.5,0.5,1.25,inner,true,0.72134"));
        assert_eq!(lines[3], format!("inf,1,inf,exact,false,{}", 1.0 / std::f64::consts::LN_2));
    }
}
