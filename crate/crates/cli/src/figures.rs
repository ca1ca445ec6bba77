//! One-command presets for the two comparison figures.
//!
//! Both figures use the scalar systems `A = -1.15` (unstable) and
//! `A = -0.95` (stable) with `Q = 0.2`, `C = 1`, `R = 1.5`. The first figure
//! plots the switching bounds over a noiseless channel carrying one unit per
//! use; the second compares switching against multi-beam over a Gaussian
//! channel at 1.75 dB and 20 dB.

use std::fmt::Write as _;

use jcas_core::riccati::critical_lambda;
use jcas_core::tradeoff::{
    bs_curve, dominance_report, linear_grid, log_grid, mb_curve, overlap, write_curve_csv, BsCurve, ChannelSpec,
    DominanceReport, DominanceRow, RateDistortionPoint,
};
use jcas_core::{GaussMarkovModel, NoiseGain, Result};

use crate::config::{stable_model, unstable_model};
use crate::output::{num, OutputDir};
use crate::{CliError, RunSummary};

/// Full rate of the noiseless channel in the first figure.
pub const FIG3_C0: f64 = 1.0;
pub const FIG4_SNRS_DB: [f64; 2] = [1.75, 20.0];
/// Evenly spaced sensing probabilities on every switching curve.
pub const LAMBDA_POINTS: usize = 201;
/// Extra sensing probabilities at `λ_c + δ`, `δ` log spaced over this span.
pub const CRITICAL_OFFSETS: (f64, f64, usize) = (5e-5, 0.5, 40);
/// Multi-beam gains: log spaced over `[1, 1e6]`, then `γ₀ = ∞`.
pub const GAMMA_POINTS: usize = 300;
pub const GAMMA_MAX: f64 = 1e6;
/// Points of the shared, log-spaced distortion grid.
pub const DOMINANCE_POINTS: usize = 200;
/// Gaps within this slack count as ties in dominance reports.
pub const TIE_SLACK: f64 = 1e-12;
/// Rows whose switching converse rate is at least this fraction of the full
/// capacity form the high-rate region.
pub const HIGH_RATE_FRACTION: f64 = 0.7;
const LAMBDA_TOL: f64 = 1e-10;

pub fn systems() -> [(&'static str, GaussMarkovModel); 2] {
    [("unstable", unstable_model()), ("stable", stable_model())]
}

/// Sensing probabilities for a switching curve: an even grid plus points
/// crowding the critical value from above, where the curves bend sharply.
pub fn switching_grid(model: &GaussMarkovModel) -> Result<Vec<f64>> {
    let mut grid = linear_grid(0.0, 1.0, LAMBDA_POINTS);
    let lc = critical_lambda(model, LAMBDA_TOL)?;
    if lc > 0.0 {
        let (lo, hi, n) = CRITICAL_OFFSETS;
        grid.extend(log_grid(lo, hi, n).into_iter().map(|d| lc + d).filter(|l| *l < 1.0));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    Ok(grid)
}

pub fn multibeam_grid() -> Vec<NoiseGain> {
    let mut g: Vec<NoiseGain> = log_grid(1.0, GAMMA_MAX, GAMMA_POINTS).into_iter().map(NoiseGain::Finite).collect();
    g.push(NoiseGain::Erased);
    g
}

/// Log-spaced distortions over the span both curves reach.
pub fn shared_grid(a: &[RateDistortionPoint], b: &[RateDistortionPoint], points: usize) -> Vec<f64> {
    match overlap(a, b) {
        Some((lo, hi)) => {
            let mut g = log_grid(lo, hi, points);
            // pin the ends against rounding in exp(ln(.))
            if let Some(first) = g.first_mut() {
                *first = lo;
            }
            if let Some(last) = g.last_mut() {
                *last = hi;
            }
            g
        }
        None => Vec::new(),
    }
}

pub struct Fig3Panel {
    pub system: &'static str,
    pub model: GaussMarkovModel,
    pub curve: BsCurve,
}

impl Fig3Panel {
    /// Largest rate on the grid that still has finite distortion.
    pub fn max_finite_rate(&self) -> f64 {
        self.curve.inner.iter().chain(&self.curve.outer).filter(|p| p.is_finite()).map(|p| p.rate).fold(0.0, f64::max)
    }
}

pub fn fig3() -> Result<Vec<Fig3Panel>> {
    let channel = ChannelSpec::Noiseless { c0: FIG3_C0 };
    systems()
        .into_iter()
        .map(|(system, model)| {
            let curve = bs_curve(&model, &channel, &switching_grid(&model)?)?;
            Ok(Fig3Panel { system, model, curve })
        })
        .collect()
}

pub struct Fig4Panel {
    pub system: &'static str,
    pub model: GaussMarkovModel,
    pub snr_db: f64,
    pub channel: ChannelSpec,
    pub bs: BsCurve,
    pub mb: Vec<RateDistortionPoint>,
    /// Multi-beam minus switching achievable rate.
    pub versus_inner: DominanceReport,
    /// Multi-beam minus switching converse rate.
    pub versus_outer: DominanceReport,
}

impl Fig4Panel {
    /// Rows of the converse comparison in the high-rate region.
    pub fn high_rate_rows(&self) -> Vec<DominanceRow> {
        let floor = HIGH_RATE_FRACTION * self.channel.full_capacity();
        self.versus_outer.rows.iter().copied().filter(|r| r.rate_b >= floor).collect()
    }
}

pub fn fig4() -> Result<Vec<Fig4Panel>> {
    let mut panels = Vec::new();
    for snr_db in FIG4_SNRS_DB {
        let channel = ChannelSpec::Gaussian { snr_db };
        for (system, model) in systems() {
            let bs = bs_curve(&model, &channel, &switching_grid(&model)?)?;
            let mb = mb_curve(&model, &channel, &multibeam_grid())?;
            let inner_grid = shared_grid(&mb, &bs.inner, DOMINANCE_POINTS);
            let outer_grid = shared_grid(&mb, &bs.outer, DOMINANCE_POINTS);
            let versus_inner = dominance_report(&mb, &bs.inner, &inner_grid, TIE_SLACK);
            let versus_outer = dominance_report(&mb, &bs.outer, &outer_grid, TIE_SLACK);
            panels.push(Fig4Panel {
                system,
                model: model.clone(),
                snr_db,
                channel,
                bs,
                mb,
                versus_inner,
                versus_outer,
            });
        }
    }
    Ok(panels)
}

fn curve_body(comments: &[String], points: &[RateDistortionPoint], bits: bool) -> String {
    let mut buf = Vec::new();
    write_curve_csv(&mut buf, comments, points, bits).expect("writing to memory");
    String::from_utf8(buf).expect("ascii csv")
}

pub fn write_fig3(out: &OutputDir, panels: &[Fig3Panel], bits: bool) -> std::result::Result<RunSummary, CliError> {
    let mut summary = RunSummary::default();
    for p in panels {
        let comments = vec![
            format!("figure=fig3 system={} A={} Q=0.2 C=1 R=1.5", p.system, p.model.a()[(0, 0)]),
            format!("channel=noiseless(c0={FIG3_C0})"),
            format!(
                "critical_lambda={} asymptote_rate={}{}",
                p.curve.critical_lambda,
                p.curve.asymptote_rate,
                if p.curve.critical_lambda > 0.0 { " (no finite distortion above this rate)" } else { "" }
            ),
        ];
        let points: Vec<RateDistortionPoint> = p.curve.inner.iter().chain(&p.curve.outer).copied().collect();
        summary.files.push(out.write(&format!("fig3_{}.csv", p.system), &curve_body(&comments, &points, bits))?);
    }
    Ok(summary)
}

fn snr_tag(snr_db: f64) -> String {
    format!("{snr_db}").replace('.', "p")
}

pub fn write_fig4(out: &OutputDir, panels: &[Fig4Panel], bits: bool) -> std::result::Result<RunSummary, CliError> {
    let mut summary = RunSummary::default();
    let mut dom = String::from("system,snr_db,comparison,distortion,rate_mb,rate_bs,gap\n");
    for p in panels {
        let comments = vec![
            format!("figure=fig4 system={} A={} Q=0.2 C=1 R=1.5", p.system, p.model.a()[(0, 0)]),
            format!("channel={}", p.channel),
            format!("critical_lambda={} asymptote_rate={}", p.bs.critical_lambda, p.bs.asymptote_rate),
        ];
        let points: Vec<RateDistortionPoint> = p.bs.inner.iter().chain(&p.bs.outer).chain(&p.mb).copied().collect();
        let name = format!("fig4_{}_{}db.csv", p.system, snr_tag(p.snr_db));
        summary.files.push(out.write(&name, &curve_body(&comments, &points, bits))?);
        for (label, report) in [("mb_vs_bs_inner", &p.versus_inner), ("mb_vs_bs_outer", &p.versus_outer)] {
            for r in &report.rows {
                let _ = writeln!(
                    dom,
                    "{},{},{label},{},{},{},{}",
                    p.system,
                    p.snr_db,
                    num(r.distortion),
                    num(r.rate_a),
                    num(r.rate_b),
                    num(r.gap)
                );
            }
        }
    }
    summary.files.push(out.write("fig4_dominance.csv", &dom)?);
    Ok(summary)
}
