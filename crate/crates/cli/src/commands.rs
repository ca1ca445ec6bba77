//! Subcommand bodies. Each returns the files it wrote and a short text
//! report for the terminal.

use std::fmt::Write as _;

use jcas_core::bayes::{
    all_sensing_costs, bruteforce_posterior, filter_posteriors, sample_trace, tradeoff_from_costs, DiscreteJcasModel,
    TradeoffResult,
};
use jcas_core::filtering::run_filter;
use jcas_core::montecarlo::{empirical_block_distortion, expected_covariance_mc, tracking_loss_monitor, Verdict};
use jcas_core::riccati::{
    critical_lambda, gamma_max, lambda_s, lambda_v, mb_steady_state, sbar, vbar, GammaLimit, Threshold,
};
use jcas_core::tradeoff::{bs_curve, dominance_report, mb_curve, write_curve_csv, ChannelSpec, RateDistortionPoint};
use jcas_core::{FixedPoint, Vector};

use crate::config::{check_grid, config_err, gamma_values, ExperimentConfig, GridSpec};
use crate::figures::{self, shared_grid, TIE_SLACK};
use crate::output::{num, OutputDir};
use crate::{CliError, RunSummary};

/// State magnitude beyond which `s - ŝ` keeps only a few significant digits.
const PRECISION_WARNING: f64 = 1e12;

/// What a subcommand produced.
#[derive(Debug, Default)]
pub struct Outcome {
    pub summary: RunSummary,
    pub report: String,
}

fn fp_row(out: &mut String, quantity: &str, param: f64, fp: &FixedPoint) {
    let status = if fp.is_converged() { "finite" } else { "diverged" };
    let _ = writeln!(out, "{quantity},{},{},{status}", num(param), num(fp.trace()));
}

pub fn riccati(cfg: &ExperimentConfig, out: &OutputDir) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let rc = &cfg.riccati;
    let lambdas = rc.lambdas.values();
    check_grid("riccati.lambdas", &lambdas, 0.0, 1.0)?;
    let gammas = gamma_values("riccati.gammas", &rc.gammas.values())?;
    if rc.budgets.is_empty() {
        return Err(CliError::Config("riccati.budgets: grid is empty".into()));
    }
    if let Some(b) = rc.budgets.iter().find(|b| !(**b > 0.0)) {
        return Err(CliError::Config(format!("riccati.budgets: value {b} is not positive")));
    }

    let mut body = String::from("quantity,param,value,status\n");
    let mut report = String::new();
    let lc = critical_lambda(&model, rc.bisect_tol)?;
    let _ = writeln!(body, "critical_lambda,,{lc},value");
    let _ = writeln!(report, "critical lambda   {lc:.6}");
    for &l in &lambdas {
        fp_row(&mut body, "sbar_trace", l, &sbar(l, &model)?);
    }
    for &l in &lambdas {
        fp_row(&mut body, "vbar_trace", l, &vbar(l, &model)?);
    }
    for &g in &gammas {
        fp_row(&mut body, "mb_trace", g.value(), &mb_steady_state(g, &model)?);
    }
    let mut infeasible = 0;
    for &d in &rc.budgets {
        for (name, t) in [("lambda_s", lambda_s(d, &model)?), ("lambda_v", lambda_v(d, &model)?)] {
            match t {
                Threshold::Value(v) => {
                    let _ = writeln!(body, "{name},{d},{v},value");
                }
                Threshold::Infeasible => {
                    infeasible += 1;
                    let _ = writeln!(body, "{name},{d},,infeasible");
                }
            }
        }
        match gamma_max(d, &model)? {
            GammaLimit::Value(v) => {
                let _ = writeln!(body, "gamma_max,{d},{v},value");
            }
            GammaLimit::Unbounded => {
                let _ = writeln!(body, "gamma_max,{d},inf,unbounded");
            }
            GammaLimit::Infeasible => {
                infeasible += 1;
                let _ = writeln!(body, "gamma_max,{d},,infeasible");
            }
        }
    }
    let _ = writeln!(report, "budgets           {} ({infeasible} infeasible result(s))", rc.budgets.len());
    let file = out.write("riccati.csv", &body)?;
    Ok(Outcome { summary: RunSummary { files: vec![file], infeasible }, report })
}

fn curve_text(comments: &[String], points: &[RateDistortionPoint], bits: bool) -> String {
    let mut buf = Vec::new();
    write_curve_csv(&mut buf, comments, points, bits).expect("writing to memory");
    String::from_utf8(buf).expect("ascii csv")
}

pub fn rd_curve(cfg: &ExperimentConfig, out: &OutputDir, bits: bool) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let channel = cfg.channel()?;
    let cc = &cfg.curve;
    let lambdas = cc.lambda.values();
    check_grid("curve.lambda", &lambdas, 0.0, 1.0)?;
    let bits = bits || cc.bits;

    let bs = bs_curve(&model, &channel, &lambdas)?;
    let model_line = format!("model a={:?} channel={channel}", model.a().as_slice());
    let mut files = Vec::new();
    let mut report = String::new();
    let _ = writeln!(report, "critical lambda   {:.6}", bs.critical_lambda);
    let _ = writeln!(report, "asymptote rate    {:.6} nats", bs.asymptote_rate);
    for (name, pts) in [("bs_inner.csv", &bs.inner), ("bs_outer.csv", &bs.outer)] {
        let comments = vec![
            model_line.clone(),
            format!(
                "grid=lambda[{}] critical_lambda={} asymptote_rate={}",
                lambdas.len(),
                bs.critical_lambda,
                bs.asymptote_rate
            ),
        ];
        files.push(out.write(name, &curve_text(&comments, pts, bits))?);
    }

    if let ChannelSpec::Gaussian { .. } = channel {
        let mut gammas = gamma_values("curve.gamma", &cc.gamma.values())?;
        if cc.include_erased {
            gammas.push(jcas_core::NoiseGain::Erased);
        }
        let mb = mb_curve(&model, &channel, &gammas)?;
        let comments = vec![model_line.clone(), format!("grid=gamma[{}]", gammas.len())];
        files.push(out.write("mb.csv", &curve_text(&comments, &mb, bits))?);

        let mut dom = String::from("comparison,distortion,rate_mb,rate_bs,gap\n");
        for (label, bound) in [("mb_vs_bs_inner", &bs.inner), ("mb_vs_bs_outer", &bs.outer)] {
            let grid = shared_grid(&mb, bound, cc.dominance_points);
            let r = dominance_report(&mb, bound, &grid, TIE_SLACK);
            for row in &r.rows {
                let _ = writeln!(
                    dom,
                    "{label},{},{},{},{}",
                    num(row.distortion),
                    num(row.rate_a),
                    num(row.rate_b),
                    num(row.gap)
                );
            }
            let _ = writeln!(
                report,
                "{label:<16}  mb ahead {} / behind {} / tied {} (min gap {})",
                r.a_ahead,
                r.b_ahead,
                r.ties,
                r.min_gap().map_or("n/a".into(), num)
            );
        }
        files.push(out.write("dominance.csv", &dom)?);
    }
    Ok(Outcome { summary: RunSummary { files, infeasible: 0 }, report })
}

pub fn mc_verify(cfg: &ExperimentConfig, out: &OutputDir, seed: u64) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let mc = &cfg.mc;
    check_grid("mc.lambdas", &mc.lambdas, 0.0, 1.0)?;
    if mc.trials == 0 {
        return Err(CliError::Config("mc.trials must be at least 1".into()));
    }
    let p0 = cfg.matrix_or("mc.p0", &mc.p0, model.q())?;
    let mut body = format!("{}\n", jcas_core::montecarlo::McReport::CSV_HEADER);
    let mut report = String::new();
    let mut files = Vec::new();
    for (k, &lambda) in mc.lambdas.iter().enumerate() {
        let r = expected_covariance_mc(&model, lambda, mc.horizon, mc.trials, seed, Some(&p0))?;
        let _ = writeln!(body, "{}", r.csv_row());
        let _ = writeln!(report, "{r}");
        if r.std_error.is_infinite() {
            let _ = writeln!(report, "note: single trial, band has infinite width");
        }
        let _ = writeln!(report);
        let mut traces = Vec::new();
        r.write_traces_csv(&mut traces).expect("writing to memory");
        files.push(out.write(&format!("mc_traces_{k}.csv"), &String::from_utf8(traces).expect("ascii"))?);
        if r.verdict == Verdict::Violated {
            let _ = writeln!(report, "VIOLATED at lambda = {lambda}");
        }
    }
    files.insert(0, out.write("mc_report.csv", &body)?);
    Ok(Outcome { summary: RunSummary { files, infeasible: 0 }, report })
}

pub fn filter_sim(cfg: &ExperimentConfig, out: &OutputDir, seed: u64) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let fc = &cfg.filter;
    let policy = fc.policy.policy()?;
    if fc.horizon == 0 || fc.trials == 0 {
        return Err(CliError::Config("filter.horizon and filter.trials must be at least 1".into()));
    }
    let s0 = match &fc.s0 {
        Some(v) => Vector::from_vec(v.clone()),
        None => Vector::zeros(model.state_dim()),
    };
    let p0 = cfg.matrix_or("filter.p0", &fc.p0, model.q())?;

    let traj = run_filter(&model, &policy, fc.horizon, &s0, &p0, seed)?;
    let mut buf = Vec::new();
    traj.write_csv(&mut buf).expect("writing to memory");
    let mut files = vec![out.write("trajectory.csv", &String::from_utf8(buf).expect("ascii"))?];
    let mut report = String::new();
    let _ = writeln!(report, "block distortion  {:.6} (single trajectory)", traj.block_distortion());
    let peak = traj.states.iter().map(|s| s.amax()).fold(0.0, f64::max);
    if peak > PRECISION_WARNING {
        let _ = writeln!(
            report,
            "warning: |s| reached {peak:.1e}; per-letter distortions at that scale have lost most of their precision"
        );
    }

    let mut running = Vec::with_capacity(traj.per_letter_distortions.len());
    let mut acc = 0.0;
    for (i, d) in traj.per_letter_distortions.iter().enumerate() {
        acc += d;
        running.push(acc / (i + 1) as f64);
    }
    if fc.trials > 1 {
        let r = empirical_block_distortion(&model, &policy, fc.horizon, fc.trials, seed, &s0, &p0)?;
        let mut body = String::from("i,mean_d,running_block\n");
        for (i, (d, b)) in r.per_index_mean.iter().zip(&r.running_block).enumerate() {
            let _ = writeln!(body, "{i},{},{}", num(*d), num(*b));
        }
        files.push(out.write("block_distortion.csv", &body)?);
        let (lo, hi) = r.interval(3.0);
        let _ = writeln!(
            report,
            "mean block distortion {:.6} over {} trials (SE {:.3e}, 3-SE interval [{lo:.6}, {hi:.6}])",
            r.mean, r.trials, r.std_error
        );
        running = r.running_block;
    }
    if let Some(l) = fc.loss_threshold {
        match tracking_loss_monitor(&running, l).map_err(config_err)? {
            Some(i) => {
                let _ = writeln!(report, "tracking lost at index {i} (threshold {l})");
            }
            None => {
                let _ = writeln!(report, "tracking kept below threshold {l}");
            }
        }
    }
    Ok(Outcome { summary: RunSummary { files, infeasible: 0 }, report })
}

fn seq_label(seq: &[usize]) -> String {
    seq.iter().map(usize::to_string).collect::<Vec<_>>().join("-")
}

pub fn bayes(cfg: &ExperimentConfig, out: &OutputDir, seed: u64) -> Result<Outcome, CliError> {
    let bc = cfg
        .bayes
        .as_ref()
        .ok_or_else(|| CliError::Config("the bayes command needs a [bayes] section with a model path".into()))?;
    let text = std::fs::read_to_string(&bc.model)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", bc.model.display())))?;
    let model: DiscreteJcasModel =
        text.parse().map_err(|e| CliError::Config(format!("{}: {e}", bc.model.display())))?;
    let a = model.sizes();
    let mut files = Vec::new();
    let mut report = String::new();

    // posterior trace: recursive filter against full enumeration
    let trace = sample_trace(&model, bc.steps, seed);
    let recursive = filter_posteriors(&trace.inputs, &trace.measurements, &model)?;
    let mut body = String::from("i,x,z,s");
    for s in 0..a.s {
        let _ = write!(body, ",recursive_{s}");
    }
    for s in 0..a.s {
        let _ = write!(body, ",bruteforce_{s}");
    }
    body.push_str(",max_abs_gap\n");
    let mut worst = 0.0_f64;
    for (i, b) in recursive.iter().enumerate() {
        let brute = bruteforce_posterior(&trace.inputs[..i], &trace.measurements[..i], &model)?;
        let gap = b.probabilities.iter().zip(&brute.probabilities).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        worst = worst.max(gap);
        let (x, z) = if i == 0 {
            (String::new(), String::new())
        } else {
            (trace.inputs[i - 1].to_string(), trace.measurements[i - 1].to_string())
        };
        let _ = write!(body, "{i},{x},{z},{}", trace.states[i]);
        for p in b.probabilities.iter().chain(&brute.probabilities) {
            let _ = write!(body, ",{p}");
        }
        let _ = writeln!(body, ",{gap:e}");
    }
    files.push(out.write("posterior.csv", &body)?);
    let _ = writeln!(report, "recursive vs brute-force posterior: max abs gap {worst:.3e}");

    // sensing costs of every input sequence
    if !(1..=3).contains(&bc.horizon) {
        return Err(CliError::Config(format!("bayes.horizon must be 1, 2 or 3, got {}", bc.horizon)));
    }
    let costs = all_sensing_costs(bc.horizon, &model)?;
    let mut body = String::from("x_seq,cost\n");
    for (idx, c) in costs.iter().enumerate() {
        let seq: Vec<usize> = (0..bc.horizon).rev().map(|j| (idx / a.x.pow(j as u32)) % a.x).collect();
        let _ = writeln!(body, "{},{c}", seq_label(&seq));
    }
    files.push(out.write("sensing_costs.csv", &body)?);

    // tradeoff sweep
    let budgets = bc
        .budgets
        .clone()
        .unwrap_or(GridSpec::Range { from: 0.0, to: model.max_distortion(), count: 11, log: false })
        .values();
    check_grid("bayes.budgets", &budgets, 0.0, f64::INFINITY)?;
    let mut body = String::from("budget,feasible,rate_nats,expected_cost,distributions\n");
    let mut infeasible = 0;
    let mut prev = f64::NEG_INFINITY;
    let mut monotone = true;
    let mut sorted = budgets.clone();
    sorted.sort_by(f64::total_cmp);
    for d in sorted {
        match tradeoff_from_costs(&model, d, bc.horizon, bc.grid_resolution, &costs)? {
            TradeoffResult::Feasible { rate, distributions, expected_cost } => {
                let dists: Vec<String> = distributions
                    .iter()
                    .map(|p| p.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "))
                    .collect();
                let _ = writeln!(body, "{d},true,{rate},{expected_cost},{}", dists.join(" | "));
                monotone &= rate >= prev;
                prev = rate;
            }
            TradeoffResult::Infeasible { min_cost } => {
                infeasible += 1;
                let _ = writeln!(body, "{d},false,,{min_cost},");
            }
        }
    }
    files.push(out.write("tradeoff.csv", &body)?);
    let _ = writeln!(
        report,
        "tradeoff sweep: {} budget(s), {infeasible} infeasible, rate nondecreasing: {monotone}",
        budgets.len()
    );
    Ok(Outcome { summary: RunSummary { files, infeasible }, report })
}

pub fn reproduce_fig3(out: &OutputDir, bits: bool) -> Result<Outcome, CliError> {
    let panels = figures::fig3()?;
    let summary = figures::write_fig3(out, &panels, bits)?;
    let mut report = String::new();
    for p in &panels {
        let _ = writeln!(
            report,
            "{:<9} critical lambda {:.6}  asymptote rate {:.6}  max finite rate on grid {:.6}",
            p.system,
            p.curve.critical_lambda,
            p.curve.asymptote_rate,
            p.max_finite_rate()
        );
    }
    Ok(Outcome { summary, report })
}

pub fn reproduce_fig4(out: &OutputDir, bits: bool) -> Result<Outcome, CliError> {
    let panels = figures::fig4()?;
    let summary = figures::write_fig4(out, &panels, bits)?;
    let mut report = String::new();
    for p in &panels {
        let high = p.high_rate_rows();
        let _ = writeln!(
            report,
            "{:<9} {:>5} dB  mb - bs_inner min gap {}  ({} points);  mb > bs_outer on {}/{} high-rate points",
            p.system,
            p.snr_db,
            p.versus_inner.min_gap().map_or("n/a".into(), num),
            p.versus_inner.rows.len(),
            high.iter().filter(|r| r.gap > TIE_SLACK).count(),
            high.len()
        );
    }
    Ok(Outcome { summary, report })
}
