//! Finite-alphabet engine for the general model.
//!
//! Time runs `i = 0..=n`. The prior over `s_0` is the model's initial
//! distribution and no measurement is taken at index 0. For `i >= 1` the
//! state steps through the Markov kernel and the channel emits
//! `(y_i, z_i) ~ P(y, z | x_i, s_i)`. Estimates are
//! causal: `ŝ_i` uses `x^i, z^i`.
//!
//! Everything is computed exactly by enumeration, so instance sizes are
//! capped (see [`ENUMERATION_LIMIT`]). Information is measured in nats.

mod format;

use rand::Rng;
use rand_distr::{weighted::WeightedIndex, Distribution};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{self, stream};

/// Largest number of joint configurations any brute-force routine will visit
/// (`5^9`, i.e. paths of length 9 over five states).
pub const ENUMERATION_LIMIT: u128 = 1_953_125;
/// Largest number of grid cells the tradeoff search will visit.
pub const GRID_LIMIT: u128 = 20_000_000;
const SUM_TOL: f64 = 1e-12;

/// Alphabet sizes. Estimates range over the first `estimates` states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alphabets {
    pub x: usize,
    pub s: usize,
    pub z: usize,
    pub y: usize,
    pub estimates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJcasModel {
    sizes: Alphabets,
    /// `P(y, z | x, s)` at `((x * |S| + s) * |Y| + y) * |Z| + z`.
    channel: Vec<f64>,
    /// `P(s' | s)` at `s * |S| + s'`.
    markov: Vec<f64>,
    initial: Vec<f64>,
    /// `d(s, ŝ)` at `s * |Ŝ| + ŝ`.
    distortion: Vec<f64>,
    z_lik: Vec<f64>,
    y_lik: Vec<f64>,
}

fn check_distribution(what: &str, p: &[f64]) -> std::result::Result<(), String> {
    if let Some(v) = p.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(format!("{what} has invalid entry {v}"));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(format!("{what} sums to {sum}, expected 1"));
    }
    Ok(())
}

impl DiscreteJcasModel {
    /// Builds and validates a model.
    ///
    /// `channel[x * |S| + s]` lists `p(y, z | x, s)` with `y` major;
    /// `markov[s]` lists `p(s' | s)`; `distortion[s]` lists `d(s, ŝ)`.
    pub fn new(
        sizes: Alphabets,
        channel: Vec<Vec<f64>>,
        markov: Vec<Vec<f64>>,
        initial: Vec<f64>,
        distortion: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let Alphabets { x: nx, s: ns, z: nz, y: ny, estimates: ne } = sizes;
        if nx == 0 || ns == 0 || nz == 0 || ny == 0 || ne == 0 {
            return Err(Error::Parameter("alphabet sizes must be positive".into()));
        }
        if ne > ns {
            return Err(Error::Parameter(format!("{ne} estimates exceed {ns} states")));
        }
        let bad = |msg: String| Error::Parameter(msg);
        if channel.len() != nx * ns {
            return Err(bad(format!("expected {} channel rows, got {}", nx * ns, channel.len())));
        }
        for (idx, row) in channel.iter().enumerate() {
            let name = format!("channel row (x={},s={})", idx / ns, idx % ns);
            if row.len() != ny * nz {
                return Err(bad(format!("{name} has {} entries, expected {}", row.len(), ny * nz)));
            }
            check_distribution(&name, row).map_err(bad)?;
        }
        if markov.len() != ns {
            return Err(bad(format!("expected {ns} markov rows, got {}", markov.len())));
        }
        for (s, row) in markov.iter().enumerate() {
            let name = format!("markov row {s}");
            if row.len() != ns {
                return Err(bad(format!("{name} has {} entries, expected {ns}", row.len())));
            }
            check_distribution(&name, row).map_err(bad)?;
        }
        if initial.len() != ns {
            return Err(bad(format!("initial distribution has {} entries, expected {ns}", initial.len())));
        }
        check_distribution("initial distribution", &initial).map_err(bad)?;
        if distortion.len() != ns {
            return Err(bad(format!("expected {ns} distortion rows, got {}", distortion.len())));
        }
        for (s, row) in distortion.iter().enumerate() {
            if row.len() != ne {
                return Err(bad(format!("distortion row {s} has {} entries, expected {ne}", row.len())));
            }
            if let Some(v) = row.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
                return Err(bad(format!("distortion row {s} has invalid entry {v}")));
            }
        }

        let channel: Vec<f64> = channel.into_iter().flatten().collect();
        let mut z_lik = vec![0.0; nx * ns * nz];
        let mut y_lik = vec![0.0; nx * ns * ny];
        for xs in 0..nx * ns {
            for y in 0..ny {
                for z in 0..nz {
                    let p = channel[(xs * ny + y) * nz + z];
                    z_lik[xs * nz + z] += p;
                    y_lik[xs * ny + y] += p;
                }
            }
        }
        Ok(Self {
            sizes,
            channel,
            markov: markov.into_iter().flatten().collect(),
            initial,
            distortion: distortion.into_iter().flatten().collect(),
            z_lik,
            y_lik,
        })
    }

    pub fn sizes(&self) -> Alphabets {
        self.sizes
    }

    pub fn channel(&self, x: usize, s: usize, y: usize, z: usize) -> f64 {
        let a = &self.sizes;
        self.channel[((x * a.s + s) * a.y + y) * a.z + z]
    }

    /// Measurement marginal `P(z | x, s)`.
    pub fn p_z(&self, x: usize, s: usize, z: usize) -> f64 {
        self.z_lik[(x * self.sizes.s + s) * self.sizes.z + z]
    }

    /// Communication marginal `P(y | x, s)`.
    pub fn p_y(&self, x: usize, s: usize, y: usize) -> f64 {
        self.y_lik[(x * self.sizes.s + s) * self.sizes.y + y]
    }

    pub fn transition(&self, s: usize, next: usize) -> f64 {
        self.markov[s * self.sizes.s + next]
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn distortion(&self, s: usize, estimate: usize) -> f64 {
        self.distortion[s * self.sizes.estimates + estimate]
    }

    /// Largest entry of the distortion table.
    pub fn max_distortion(&self) -> f64 {
        self.distortion.iter().fold(0.0_f64, |a, &b| a.max(b))
    }

    /// State marginal after `steps` transitions of the prior.
    pub fn state_marginal(&self, steps: usize) -> Vec<f64> {
        let mut b = Belief::prior(self);
        for _ in 0..steps {
            b = belief_predict(&b, self);
        }
        b.probabilities
    }

    /// Serializes into the text format read by [`str::parse`].
    pub fn to_text(&self) -> String {
        format::write(self)
    }
}

impl std::str::FromStr for DiscreteJcasModel {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        format::parse(text)
    }
}

/// Posterior over states at `time_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    pub probabilities: Vec<f64>,
    pub time_index: usize,
}

impl Belief {
    pub fn prior(model: &DiscreteJcasModel) -> Self {
        Self { probabilities: model.initial.clone(), time_index: 0 }
    }
}

/// `b'(s') = Σ_s P(s'|s) b(s)`.
pub fn belief_predict(belief: &Belief, model: &DiscreteJcasModel) -> Belief {
    let ns = model.sizes.s;
    let mut next = vec![0.0; ns];
    for (s, &b) in belief.probabilities.iter().enumerate() {
        if b == 0.0 {
            continue;
        }
        for (sp, slot) in next.iter_mut().enumerate() {
            *slot += model.transition(s, sp) * b;
        }
    }
    Belief { probabilities: next, time_index: belief.time_index + 1 }
}

/// Bayes rule with the measurement marginal `P(z | x, s)`.
pub fn belief_update(belief: &Belief, x: usize, z: usize, model: &DiscreteJcasModel) -> Result<Belief> {
    let a = model.sizes;
    if x >= a.x || z >= a.z {
        return Err(Error::Parameter(format!("symbol out of range: x={x}, z={z}")));
    }
    let mut post: Vec<f64> = belief.probabilities.iter().enumerate().map(|(s, &b)| model.p_z(x, s, z) * b).collect();
    let evidence: f64 = post.iter().sum();
    if !(evidence > 0.0) {
        return Err(Error::Evidence { step: belief.time_index });
    }
    post.iter_mut().for_each(|p| *p /= evidence);
    Ok(Belief { probabilities: post, time_index: belief.time_index })
}

/// Minimizer of the posterior expected distortion and its value. Ties go to
/// the smallest estimate index.
pub fn optimal_estimate(belief: &Belief, model: &DiscreteJcasModel) -> (usize, f64) {
    best_estimate(&belief.probabilities, model)
}

/// Same as [`optimal_estimate`] for any nonnegative weight vector.
fn best_estimate(weights: &[f64], model: &DiscreteJcasModel) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for e in 0..model.sizes.estimates {
        let risk: f64 = weights.iter().enumerate().map(|(s, &w)| w * model.distortion(s, e)).sum();
        if risk < best.1 {
            best = (e, risk);
        }
    }
    best
}

fn check_sequences(x_seq: &[usize], z_seq: &[usize], model: &DiscreteJcasModel) -> Result<()> {
    if x_seq.len() != z_seq.len() {
        return Err(Error::Dimension(format!("{} inputs but {} measurements", x_seq.len(), z_seq.len())));
    }
    let a = model.sizes;
    if x_seq.iter().any(|&x| x >= a.x) || z_seq.iter().any(|&z| z >= a.z) {
        return Err(Error::Parameter("symbol out of range".into()));
    }
    Ok(())
}

/// Recursive posteriors `b_0 .. b_i` along `(x_1, z_1) .. (x_i, z_i)`.
pub fn filter_posteriors(x_seq: &[usize], z_seq: &[usize], model: &DiscreteJcasModel) -> Result<Vec<Belief>> {
    check_sequences(x_seq, z_seq, model)?;
    let mut out = vec![Belief::prior(model)];
    for (&x, &z) in x_seq.iter().zip(z_seq) {
        let predicted = belief_predict(out.last().expect("nonempty"), model);
        out.push(belief_update(&predicted, x, z, model)?);
    }
    Ok(out)
}

fn enumeration_size(base: usize, exponent: usize) -> u128 {
    (0..exponent).fold(1u128, |acc, _| acc.saturating_mul(base as u128))
}

/// Posterior of `s_i` by summing the joint law over every state path
/// `s_0 .. s_i`. Independent of the recursive filter; intended as its oracle.
pub fn bruteforce_posterior(x_seq: &[usize], z_seq: &[usize], model: &DiscreteJcasModel) -> Result<Belief> {
    check_sequences(x_seq, z_seq, model)?;
    let ns = model.sizes.s;
    let len = x_seq.len() + 1;
    let needed = enumeration_size(ns, len);
    if needed > ENUMERATION_LIMIT {
        return Err(Error::Capacity { needed, limit: ENUMERATION_LIMIT });
    }
    let mut post = vec![0.0; ns];
    let mut path = vec![0usize; len];
    for _ in 0..needed {
        let mut w = model.initial[path[0]];
        for j in 1..len {
            if w == 0.0 {
                break;
            }
            w *= model.transition(path[j - 1], path[j]) * model.p_z(x_seq[j - 1], path[j], z_seq[j - 1]);
        }
        post[path[len - 1]] += w;
        // odometer increment, last position fastest
        for slot in path.iter_mut().rev() {
            *slot += 1;
            if *slot < ns {
                break;
            }
            *slot = 0;
        }
    }
    let total: f64 = post.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Evidence { step: x_seq.len() });
    }
    post.iter_mut().for_each(|p| *p /= total);
    Ok(Belief { probabilities: post, time_index: x_seq.len() })
}

/// A sampled run of the finite model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscreteTrace {
    /// `s_0 .. s_n`.
    pub states: Vec<usize>,
    /// `x_1 .. x_n`.
    pub inputs: Vec<usize>,
    /// `y_1 .. y_n`.
    pub outputs: Vec<usize>,
    /// `z_1 .. z_n`.
    pub measurements: Vec<usize>,
}

fn draw<R: Rng>(rng: &mut R, weights: impl Iterator<Item = f64>) -> usize {
    let w: Vec<f64> = weights.collect();
    WeightedIndex::new(&w).expect("rows are validated distributions").sample(rng)
}

/// Samples `steps` transitions with inputs drawn uniformly. Each source of
/// randomness has its own stream.
pub fn sample_trace(model: &DiscreteJcasModel, steps: usize, seed: u64) -> DiscreteTrace {
    let a = model.sizes;
    let mut init = rng::stream_rng(seed, stream::INITIAL);
    let mut inputs_rng = rng::stream_rng(seed, stream::POLICY);
    let mut noise = rng::stream_rng(seed, stream::NOISE);
    let mut states = vec![draw(&mut init, model.initial.iter().copied())];
    let (mut inputs, mut outputs, mut measurements) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..steps {
        let prev = *states.last().expect("nonempty");
        let s = draw(&mut noise, (0..a.s).map(|t| model.transition(prev, t)));
        let x = inputs_rng.random_range(0..a.x);
        let yz = draw(&mut noise, (0..a.y * a.z).map(|k| model.channel(x, s, k / a.z, k % a.z)));
        states.push(s);
        inputs.push(x);
        outputs.push(yz / a.z);
        measurements.push(yz % a.z);
    }
    DiscreteTrace { states, inputs, outputs, measurements }
}

/// Sensing cost `c(x^n)`: the expected block distortion (average over the
/// `n + 1` indices, including the prior guess at index 0) of the optimal
/// causal estimator, given the input sequence.
///
/// The expectation is taken over every measurement prefix `z^i`: the
/// unnormalized filter weights `P(s_i, z^i | x^i)` are carried down the
/// prefix tree and each node contributes `min_ŝ Σ_s P(s_i, z^i) d(s_i, ŝ)`.
/// Prefixes of probability zero are skipped.
pub fn sensing_cost(x_seq: &[usize], model: &DiscreteJcasModel) -> Result<f64> {
    let a = model.sizes;
    if x_seq.iter().any(|&x| x >= a.x) {
        return Err(Error::Parameter("input symbol out of range".into()));
    }
    let needed = enumeration_size(a.z, x_seq.len()).saturating_mul(a.s as u128);
    if needed > ENUMERATION_LIMIT {
        return Err(Error::Capacity { needed, limit: ENUMERATION_LIMIT });
    }
    let n = x_seq.len();
    let root = model.initial.clone();
    let total = best_estimate(&root, model).1 + prefix_tree_cost(&root, x_seq, model);
    Ok(total / (n + 1) as f64)
}

fn prefix_tree_cost(weights: &[f64], rest: &[usize], model: &DiscreteJcasModel) -> f64 {
    let Some((&x, tail)) = rest.split_first() else {
        return 0.0;
    };
    let ns = model.sizes.s;
    let mut predicted = vec![0.0; ns];
    for (s, &w) in weights.iter().enumerate() {
        for (sp, slot) in predicted.iter_mut().enumerate() {
            *slot += w * model.transition(s, sp);
        }
    }
    let mut acc = 0.0;
    for z in 0..model.sizes.z {
        let joint: Vec<f64> = predicted.iter().enumerate().map(|(s, &w)| w * model.p_z(x, s, z)).collect();
        if joint.iter().sum::<f64>() <= 0.0 {
            continue;
        }
        acc += best_estimate(&joint, model).1 + prefix_tree_cost(&joint, tail, model);
    }
    acc
}

fn xlogy_ratio(p: f64, num: f64, den: f64) -> f64 {
    if p == 0.0 || num == 0.0 {
        0.0
    } else {
        p * (num / den).ln()
    }
}

/// `I(X; Y | S)` in nats for an input law independent of the state.
pub fn conditional_mutual_information(input: &[f64], state: &[f64], model: &DiscreteJcasModel) -> f64 {
    let a = model.sizes;
    let mut total = 0.0;
    for (s, &ps) in state.iter().enumerate() {
        if ps == 0.0 {
            continue;
        }
        let mut mi = 0.0;
        for y in 0..a.y {
            let py: f64 = (0..a.x).map(|x| input[x] * model.p_y(x, s, y)).sum();
            for (x, &px) in input.iter().enumerate() {
                let pyx = model.p_y(x, s, y);
                mi += xlogy_ratio(px * pyx, pyx, py);
            }
        }
        total += ps * mi;
    }
    total
}

/// `(1/n) Σ_{i=1}^n I(X_i; Y_i | S_i)` for a product input law whose `i`-th
/// factor is `input_dists[i - 1]`.
pub fn capacity_objective(input_dists: &[Vec<f64>], model: &DiscreteJcasModel) -> Result<f64> {
    if input_dists.is_empty() {
        return Err(Error::Parameter("at least one input distribution is required".into()));
    }
    let mut state = Belief::prior(model);
    let mut sum = 0.0;
    for (i, p) in input_dists.iter().enumerate() {
        if p.len() != model.sizes.x {
            return Err(Error::Dimension(format!("input distribution {i} has {} entries", p.len())));
        }
        check_distribution(&format!("input distribution {i}"), p).map_err(Error::Parameter)?;
        state = belief_predict(&state, model);
        sum += conditional_mutual_information(p, &state.probabilities, model);
    }
    Ok(sum / input_dists.len() as f64)
}

/// Best product input law found by the grid search.
#[derive(Debug, Clone, PartialEq)]
pub enum TradeoffResult {
    Feasible {
        /// Nats per channel use.
        rate: f64,
        distributions: Vec<Vec<f64>>,
        expected_cost: f64,
    },
    /// No grid point meets the budget; `min_cost` is the smallest expected
    /// cost on the grid.
    Infeasible { min_cost: f64 },
}

impl TradeoffResult {
    pub fn rate(&self) -> Option<f64> {
        match self {
            TradeoffResult::Feasible { rate, .. } => Some(*rate),
            TradeoffResult::Infeasible { .. } => None,
        }
    }
}

/// Every point of the simplex over `k` symbols whose coordinates are
/// multiples of `1 / steps`.
pub fn simplex_grid(k: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(k: usize, left: usize, steps: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if k == 1 {
            cur.push(left);
            out.push(cur.iter().map(|&c| c as f64 / steps as f64).collect());
            cur.pop();
            return;
        }
        for c in 0..=left {
            cur.push(c);
            rec(k - 1, left - c, steps, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, steps, steps, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Precomputed sensing costs for all `|X|^n` input sequences, indexed with
/// the first symbol most significant.
pub fn all_sensing_costs(n: usize, model: &DiscreteJcasModel) -> Result<Vec<f64>> {
    let nx = model.sizes.x;
    let count = nx.pow(n as u32);
    let mut seq = vec![0usize; n];
    let mut costs = Vec::with_capacity(count);
    for idx in 0..count {
        let mut rem = idx;
        for slot in seq.iter_mut().rev() {
            *slot = rem % nx;
            rem /= nx;
        }
        costs.push(sensing_cost(&seq, model)?);
    }
    Ok(costs)
}

/// Grid search over product input laws `P_{X_1} × .. × P_{X_n}` for the
/// largest `(1/n) Σ I(X_i; Y_i | S_i)` subject to `Σ P(x^n) c(x^n) <= budget`.
///
/// The coordinates of each factor are multiples of `grid_resolution`. Ties
/// in rate go to the earliest grid cell, so the answer does not depend on
/// how the work was split across threads.
pub fn bruteforce_open_loop_tradeoff(
    model: &DiscreteJcasModel,
    budget: f64,
    n: usize,
    grid_resolution: f64,
) -> Result<TradeoffResult> {
    let costs = all_sensing_costs_checked(model, n, grid_resolution)?;
    tradeoff_from_costs(model, budget, n, grid_resolution, &costs)
}

fn all_sensing_costs_checked(model: &DiscreteJcasModel, n: usize, grid_resolution: f64) -> Result<Vec<f64>> {
    if !(1..=3).contains(&n) {
        return Err(Error::Parameter(format!("horizon must be 1, 2 or 3, got {n}")));
    }
    grid_steps(grid_resolution)?;
    all_sensing_costs(n, model)
}

fn grid_steps(grid_resolution: f64) -> Result<usize> {
    if !(grid_resolution > 0.0 && grid_resolution <= 1.0) {
        return Err(Error::Parameter(format!("grid resolution must lie in (0, 1], got {grid_resolution}")));
    }
    let steps = (1.0 / grid_resolution).round() as usize;
    Ok(steps.max(1))
}

/// [`bruteforce_open_loop_tradeoff`] with precomputed costs from
/// [`all_sensing_costs`], for sweeping many budgets.
pub fn tradeoff_from_costs(
    model: &DiscreteJcasModel,
    budget: f64,
    n: usize,
    grid_resolution: f64,
    costs: &[f64],
) -> Result<TradeoffResult> {
    let steps = grid_steps(grid_resolution)?;
    let nx = model.sizes.x;
    if costs.len() != nx.pow(n as u32) {
        return Err(Error::Dimension(format!("expected {} sensing costs, got {}", nx.pow(n as u32), costs.len())));
    }
    let grid = simplex_grid(nx, steps);
    let g = grid.len();
    let cells = enumeration_size(g, n);
    if cells > GRID_LIMIT {
        return Err(Error::Capacity { needed: cells, limit: GRID_LIMIT });
    }
    // mutual information of every grid point at every step
    let mi: Vec<Vec<f64>> = (1..=n)
        .map(|i| {
            let state = model.state_marginal(i);
            grid.iter().map(|p| conditional_mutual_information(p, &state, model)).collect()
        })
        .collect();

    let expected_cost = |cell: usize| -> f64 {
        let mut idx = vec![0usize; n];
        let mut rem = cell;
        for slot in idx.iter_mut().rev() {
            *slot = rem % g;
            rem /= g;
        }
        let mut total = 0.0;
        let mut seq = vec![0usize; n];
        for (sidx, &c) in costs.iter().enumerate() {
            let mut rem = sidx;
            for slot in seq.iter_mut().rev() {
                *slot = rem % nx;
                rem /= nx;
            }
            let w: f64 = (0..n).map(|i| grid[idx[i]][seq[i]]).product();
            total += w * c;
        }
        total
    };
    let rate_of = |cell: usize| -> f64 {
        let mut rem = cell;
        let mut sum = 0.0;
        for i in (0..n).rev() {
            sum += mi[i][rem % g];
            rem /= g;
        }
        sum / n as f64
    };

    // (rate, cell, cost) of the best feasible cell; (min cost, cell) overall
    type Best = (Option<(f64, usize, f64)>, (f64, usize));
    let better = |a: Best, b: Best| -> Best {
        let feasible = match (a.0, b.0) {
            (Some(x), Some(y)) => Some(if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) { y } else { x }),
            (x, None) => x,
            (None, y) => y,
        };
        let min = if b.1 .0 < a.1 .0 || (b.1 .0 == a.1 .0 && b.1 .1 < a.1 .1) { b.1 } else { a.1 };
        (feasible, min)
    };
    let best = (0..cells as usize)
        .into_par_iter()
        .map(|cell| {
            let cost = expected_cost(cell);
            let feasible = (cost <= budget + SUM_TOL).then(|| (rate_of(cell), cell, cost));
            (feasible, (cost, cell))
        })
        .reduce(|| (None, (f64::INFINITY, usize::MAX)), better);

    Ok(match best.0 {
        Some((rate, cell, cost)) => {
            let mut rem = cell;
            let mut dists = vec![Vec::new(); n];
            for slot in dists.iter_mut().rev() {
                *slot = grid[rem % g].clone();
                rem /= g;
            }
            TradeoffResult::Feasible { rate, distributions: dists, expected_cost: cost }
        }
        None => TradeoffResult::Infeasible { min_cost: best.1 .0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(kernel: [[f64; 2]; 2], z_given_s: [[f64; 2]; 2], initial: [f64; 2]) -> DiscreteJcasModel {
        // one input, Y constant, Z depends on S only
        let channel = (0..2).map(|s| vec![z_given_s[s][0], z_given_s[s][1]]).collect();
        DiscreteJcasModel::new(
            Alphabets { x: 1, s: 2, z: 2, y: 1, estimates: 2 },
            channel,
            kernel.iter().map(|r| r.to_vec()).collect(),
            initial.to_vec(),
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        )
        .unwrap()
    }

    fn belief(p: &[f64]) -> Belief {
        Belief { probabilities: p.to_vec(), time_index: 0 }
    }

    #[test]
    fn predict_examples() {
        let ident = two_state([[1.0, 0.0], [0.0, 1.0]], [[0.5, 0.5], [0.5, 0.5]], [0.3, 0.7]);
        assert_eq!(belief_predict(&belief(&[0.3, 0.7]), &ident).probabilities, vec![0.3, 0.7]);
        let ds = two_state([[0.3, 0.7], [0.7, 0.3]], [[0.5, 0.5], [0.5, 0.5]], [0.5, 0.5]);
        assert_eq!(belief_predict(&belief(&[0.5, 0.5]), &ds).probabilities, vec![0.5, 0.5]);
        let m = two_state([[0.9, 0.1], [0.2, 0.8]], [[0.5, 0.5], [0.5, 0.5]], [1.0, 0.0]);
        let b = belief_predict(&belief(&[1.0, 0.0]), &m);
        assert_eq!(b.probabilities, vec![0.9, 0.1]);
        assert_eq!(b.time_index, 1);
    }

    #[test]
    fn update_examples() {
        let flat = two_state([[1.0, 0.0], [0.0, 1.0]], [[0.5, 0.5], [0.5, 0.5]], [0.5, 0.5]);
        let b = belief_update(&belief(&[0.3, 0.7]), 0, 1, &flat).unwrap();
        assert!((b.probabilities[0] - 0.3).abs() < 1e-15);

        let m = two_state([[1.0, 0.0], [0.0, 1.0]], [[0.8, 0.2], [0.2, 0.8]], [0.5, 0.5]);
        let b = belief_update(&belief(&[0.5, 0.5]), 0, 0, &m).unwrap();
        assert!((b.probabilities[0] - 0.8).abs() < 1e-15);

        let m = two_state([[1.0, 0.0], [0.0, 1.0]], [[0.5, 0.5], [1.0, 0.0]], [0.5, 0.5]);
        let b = belief_update(&belief(&[0.9, 0.1]), 0, 0, &m).unwrap();
        assert!((b.probabilities[0] - 0.45 / 0.55).abs() < 1e-15);
        assert!((b.probabilities[0] - 0.81818).abs() < 1e-5);
    }

    #[test]
    fn zero_evidence_is_an_error() {
        let m = two_state([[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [1.0, 0.0]], [0.5, 0.5]);
        let err = belief_update(&Belief { probabilities: vec![0.5, 0.5], time_index: 4 }, 0, 1, &m).unwrap_err();
        assert_eq!(err, Error::Evidence { step: 4 });
    }

    #[test]
    fn estimate_examples() {
        let ham = two_state([[1.0, 0.0], [0.0, 1.0]], [[0.5, 0.5], [0.5, 0.5]], [0.5, 0.5]);
        assert_eq!(optimal_estimate(&belief(&[0.3, 0.7]), &ham).0, 1);
        assert_eq!(optimal_estimate(&belief(&[0.0, 1.0]), &ham), (1, 0.0));
        // ties go to the smaller index
        assert_eq!(optimal_estimate(&belief(&[0.5, 0.5]), &ham).0, 0);

        let asym = DiscreteJcasModel::new(
            Alphabets { x: 1, s: 2, z: 1, y: 1, estimates: 2 },
            vec![vec![1.0], vec![1.0]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.6, 0.4],
            vec![vec![0.0, 1.0], vec![4.0, 0.0]],
        )
        .unwrap();
        let (e, cost) = optimal_estimate(&belief(&[0.6, 0.4]), &asym);
        assert_eq!(e, 1);
        assert!((cost - 0.6).abs() < 1e-15);
    }

    #[test]
    fn bruteforce_prior_and_deterministic_chain() {
        let m = two_state([[0.0, 1.0], [1.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]], [0.25, 0.75]);
        assert_eq!(bruteforce_posterior(&[], &[], &m).unwrap().probabilities, vec![0.25, 0.75]);
        // flip chain starting in state 0 for sure; noiseless z = s
        let m = two_state([[0.0, 1.0], [1.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]], [1.0, 0.0]);
        let b = bruteforce_posterior(&[0, 0, 0], &[1, 0, 1], &m).unwrap();
        assert_eq!(b.probabilities, vec![0.0, 1.0]);
    }

    #[test]
    fn bruteforce_refuses_huge_instances() {
        let m = two_state([[0.5, 0.5], [0.5, 0.5]], [[0.5, 0.5], [0.5, 0.5]], [0.5, 0.5]);
        let xs = vec![0; 25];
        let err = bruteforce_posterior(&xs, &xs, &m).unwrap_err();
        assert!(matches!(err, Error::Capacity { .. }));
    }

    #[test]
    fn sensing_cost_examples() {
        let zero = DiscreteJcasModel::new(
            Alphabets { x: 1, s: 2, z: 2, y: 1, estimates: 2 },
            vec![vec![0.3, 0.7], vec![0.6, 0.4]],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![0.5, 0.5],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        )
        .unwrap();
        assert_eq!(sensing_cost(&[0, 0, 0], &zero).unwrap(), 0.0);

        let blind = two_state([[0.7, 0.3], [0.3, 0.7]], [[0.4, 0.6], [0.4, 0.6]], [0.5, 0.5]);
        assert!((sensing_cost(&[0, 0, 0], &blind).unwrap() - 0.5).abs() < 1e-15);

        let sharp = two_state([[0.7, 0.3], [0.2, 0.8]], [[1.0, 0.0], [0.0, 1.0]], [0.4, 0.6]);
        let c = sensing_cost(&[0, 0], &sharp).unwrap();
        assert!((c - 0.4 / 3.0).abs() < 1e-15, "{c}");
    }

    #[test]
    fn capacity_objective_examples() {
        // Y independent of X
        let m = two_state([[0.5, 0.5], [0.5, 0.5]], [[0.5, 0.5], [0.5, 0.5]], [0.5, 0.5]);
        assert_eq!(capacity_objective(&[vec![1.0]], &m).unwrap(), 0.0);

        let bsc = |eps: f64| {
            let row = |x: usize| if x == 0 { vec![1.0 - eps, eps] } else { vec![eps, 1.0 - eps] };
            DiscreteJcasModel::new(
                Alphabets { x: 2, s: 2, z: 1, y: 2, estimates: 2 },
                vec![row(0), row(0), row(1), row(1)],
                vec![vec![0.6, 0.4], vec![0.1, 0.9]],
                vec![0.5, 0.5],
                vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            )
            .unwrap()
        };
        let u = vec![0.5, 0.5];
        let c = capacity_objective(&[u.clone(), u.clone()], &bsc(0.0)).unwrap();
        assert!((c - std::f64::consts::LN_2).abs() < 1e-15);
        let hb = -(0.1f64 * 0.1f64.ln() + 0.9 * 0.9f64.ln());
        let c = capacity_objective(&[u], &bsc(0.1)).unwrap();
        assert!((c - (std::f64::consts::LN_2 - hb)).abs() < 1e-14);
        assert!((c - 0.368064).abs() < 1e-6);
    }

    #[test]
    fn simplex_grid_counts() {
        assert_eq!(simplex_grid(2, 4).len(), 5);
        assert_eq!(simplex_grid(3, 4).len(), 15);
        assert!(simplex_grid(3, 7).iter().all(|p| (p.iter().sum::<f64>() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn sampled_traces_are_consistent() {
        let m = two_state([[0.0, 1.0], [1.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]], [1.0, 0.0]);
        let t = sample_trace(&m, 6, 4);
        assert_eq!(t.states, vec![0, 1, 0, 1, 0, 1, 0]);
        assert_eq!(t.measurements, vec![1, 0, 1, 0, 1, 0]);
        assert_eq!(sample_trace(&m, 6, 4), t);
        // every sampled trace has positive evidence
        let r = two_state([[0.6, 0.4], [0.3, 0.7]], [[0.9, 0.1], [0.2, 0.8]], [0.5, 0.5]);
        for seed in 0..20 {
            let t = sample_trace(&r, 5, seed);
            assert!(filter_posteriors(&t.inputs, &t.measurements, &r).is_ok());
        }
    }

    #[test]
    fn invalid_rows_are_rejected() {
        let err = DiscreteJcasModel::new(
            Alphabets { x: 1, s: 2, z: 1, y: 1, estimates: 2 },
            vec![vec![1.0], vec![1.0]],
            vec![vec![0.9, 0.0], vec![0.0, 1.0]],
            vec![0.5, 0.5],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        )
        .unwrap_err();
        assert!(err.to_string().contains("markov row 0"), "{err}");
    }
}
