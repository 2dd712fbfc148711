//! Exact solver for small explicit SMDPs and a tabular learner to check
//! against it.
//!
//! The toy chip has a few cores, each with a discrete temperature level that
//! climbs while the core is busy and falls while it is idle, plus a capped
//! FCFS queue. All clocks are exponential, so the transition kernels follow
//! from the competing rates out of the post-decision state.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::schedulers::{greedy, learning_rate, select_action, smdp_target, EpsilonSchedule};
use crate::sim::SimRng;

/// Largest `|S|·|A|` the builder accepts.
pub const SIZE_CAP: usize = 10_000;

/// Rates of the toy chip.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyParams {
    pub cores: usize,
    pub temp_levels: usize,
    pub max_queue: usize,
    pub arrival_rate: f64,
    pub service_rate: f64,
    /// Per-core rate of climbing one level while busy.
    pub heat_rates: Vec<f64>,
    /// Rate of falling one level while idle.
    pub cool_rate: f64,
}

impl Default for ToyParams {
    fn default() -> Self {
        Self {
            cores: 2,
            temp_levels: 3,
            max_queue: 2,
            arrival_rate: 0.65,
            service_rate: 1.8,
            heat_rates: vec![0.7, 25.0],
            cool_rate: 0.45,
        }
    }
}

/// Decoded toy state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ToyState {
    pub temps: Vec<usize>,
    pub busy: Vec<bool>,
    pub queue: usize,
}

/// Explicit SMDP: per state, a list of actions, each with sparse transition
/// probabilities, expected sojourn time and expected one-stage reward.
#[derive(Debug, Clone)]
pub struct ToyModel {
    /// `actions[s][i]` is the core receiving a task, `None` for no assignment.
    pub actions: Vec<Vec<Option<usize>>>,
    pub transitions: Vec<Vec<Vec<(usize, f64)>>>,
    pub sojourn: Vec<Vec<f64>>,
    pub reward: Vec<Vec<f64>>,
    /// Per state and action: successor rates out of the post-decision state,
    /// and the reward rate earned there. Used to simulate the process.
    pub jumps: Vec<Vec<Vec<(usize, f64)>>>,
    pub reward_rate: Vec<Vec<f64>>,
    pub states: Vec<ToyState>,
    pub start: usize,
}

impl ToyModel {
    /// Model from explicit kernels; jumps are rebuilt from `P` and `T̄`.
    pub fn from_kernels(
        transitions: Vec<Vec<Vec<(usize, f64)>>>,
        sojourn: Vec<Vec<f64>>,
        reward: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = transitions.len();
        let actions = transitions.iter().map(|acts| (0..acts.len()).map(Some).collect()).collect();
        let jumps = transitions
            .iter()
            .zip(&sojourn)
            .map(|(acts, ts)| {
                acts.iter().zip(ts).map(|(row, t)| row.iter().map(|&(s, p)| (s, p / t)).collect()).collect()
            })
            .collect();
        let reward_rate =
            reward.iter().zip(&sojourn).map(|(rs, ts)| rs.iter().zip(ts).map(|(r, t)| r / t).collect()).collect();
        let states = (0..n).map(|i| ToyState { temps: vec![i], busy: vec![], queue: 0 }).collect();
        let model = Self { actions, transitions, sojourn, reward, jumps, reward_rate, states, start: 0 };
        model.check()?;
        Ok(model)
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// States reachable from `start` under some sequence of actions.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![self.start];
        seen[self.start] = true;
        while let Some(s) = stack.pop() {
            for &(t, p) in self.transitions[s].iter().flatten() {
                if p > 0.0 && !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
        seen
    }

    pub fn pair_count(&self) -> usize {
        self.transitions.iter().map(Vec::len).sum()
    }

    fn check(&self) -> Result<()> {
        for (s, acts) in self.transitions.iter().enumerate() {
            if acts.is_empty() {
                return Err(Error::Config(format!("state {s} has no action")));
            }
            for (a, row) in acts.iter().enumerate() {
                let total: f64 = row.iter().map(|e| e.1).sum();
                if (total - 1.0).abs() > 1e-9 || row.iter().any(|e| e.1 < 0.0 || e.0 >= self.len()) {
                    return Err(Error::Config(format!("row ({s},{a}) is not a distribution")));
                }
                if !(self.sojourn[s][a] > 0.0) || self.reward[s][a] < 0.0 {
                    return Err(Error::Config(format!("pair ({s},{a}) has bad sojourn or reward")));
                }
            }
        }
        Ok(())
    }
}

struct Codec {
    cores: usize,
    levels: usize,
    queue: usize,
}

impl Codec {
    fn count(&self) -> usize {
        self.levels.pow(self.cores as u32) * (1 << self.cores) * (self.queue + 1)
    }

    fn encode(&self, s: &ToyState) -> usize {
        let mut i = 0;
        for &t in &s.temps {
            i = i * self.levels + t;
        }
        for &b in &s.busy {
            i = i * 2 + b as usize;
        }
        i * (self.queue + 1) + s.queue
    }

    fn decode(&self, mut i: usize) -> ToyState {
        let queue = i % (self.queue + 1);
        i /= self.queue + 1;
        let mut busy = vec![false; self.cores];
        for c in (0..self.cores).rev() {
            busy[c] = i % 2 == 1;
            i /= 2;
        }
        let mut temps = vec![0; self.cores];
        for c in (0..self.cores).rev() {
            temps[c] = i % self.levels;
            i /= self.levels;
        }
        ToyState { temps, busy, queue }
    }
}

/// Builds the toy SMDP.
///
/// A decision is due whenever the queue is non-empty and a core is idle; the
/// action picks that core. Every other state has the single no-op action.
/// The reward rate in a post-decision state is `levels − hottest level`.
pub fn build_toy_smdp(params: &ToyParams) -> Result<ToyModel> {
    let p = params;
    if p.cores == 0 || p.temp_levels < 2 || p.max_queue == 0 || p.heat_rates.len() != p.cores {
        return Err(Error::Config(format!("invalid toy parameters {p:?}")));
    }
    let rates = [p.arrival_rate, p.service_rate, p.cool_rate];
    if rates.iter().chain(&p.heat_rates).any(|r| !(*r >= 0.0 && r.is_finite())) {
        return Err(Error::Config("toy rates must be finite and nonnegative".into()));
    }
    let codec = Codec { cores: p.cores, levels: p.temp_levels, queue: p.max_queue };
    let n = codec.count();
    if n.saturating_mul(p.cores + 1) > SIZE_CAP {
        return Err(Error::Config(format!("toy model has {} state-action pairs, cap is {SIZE_CAP}", n * (p.cores + 1))));
    }
    let states: Vec<ToyState> = (0..n).map(|i| codec.decode(i)).collect();
    let mut model = ToyModel {
        actions: Vec::with_capacity(n),
        transitions: Vec::with_capacity(n),
        sojourn: Vec::with_capacity(n),
        reward: Vec::with_capacity(n),
        jumps: Vec::with_capacity(n),
        reward_rate: Vec::with_capacity(n),
        states: states.clone(),
        start: codec.encode(&ToyState { temps: vec![0; p.cores], busy: vec![false; p.cores], queue: 0 }),
    };
    for s in &states {
        let idle: Vec<usize> = (0..p.cores).filter(|&c| !s.busy[c]).collect();
        let acts: Vec<Option<usize>> =
            if s.queue > 0 && !idle.is_empty() { idle.into_iter().map(Some).collect() } else { vec![None] };
        let (mut rows, mut taus, mut rews, mut jumps, mut rrates) = (vec![], vec![], vec![], vec![], vec![]);
        for &a in &acts {
            let mut post = s.clone();
            if let Some(c) = a {
                post.busy[c] = true;
                post.queue -= 1;
            }
            let rate_r = (p.temp_levels - post.temps.iter().max().copied().unwrap_or(0)) as f64;
            let out = successors(&post, p, &codec);
            let total: f64 = out.iter().map(|e| e.1).sum();
            let me = codec.encode(&post);
            let (row, tau) = if total > 0.0 {
                (merge(out.iter().map(|&(t, r)| (t, r / total)).collect()), 1.0 / total)
            } else {
                (vec![(me, 1.0)], 1.0)
            };
            rews.push(rate_r * tau);
            rows.push(row);
            taus.push(tau);
            jumps.push(out);
            rrates.push(rate_r);
        }
        model.actions.push(acts);
        model.transitions.push(rows);
        model.sojourn.push(taus);
        model.reward.push(rews);
        model.jumps.push(jumps);
        model.reward_rate.push(rrates);
    }
    model.check()?;
    Ok(model)
}

fn successors(post: &ToyState, p: &ToyParams, codec: &Codec) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    let mut push = |s: ToyState, r: f64| {
        if r > 0.0 {
            out.push((codec.encode(&s), r));
        }
    };
    if post.queue < p.max_queue {
        let mut s = post.clone();
        s.queue += 1;
        push(s, p.arrival_rate);
    }
    for c in 0..p.cores {
        if post.busy[c] {
            let mut s = post.clone();
            s.busy[c] = false;
            push(s, p.service_rate);
            if post.temps[c] + 1 < p.temp_levels {
                let mut s = post.clone();
                s.temps[c] += 1;
                push(s, p.heat_rates[c]);
            }
        } else if post.temps[c] > 0 {
            let mut s = post.clone();
            s.temps[c] -= 1;
            push(s, p.cool_rate);
        }
    }
    out
}

fn merge(mut row: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    row.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(row.len());
    for (s, p) in row {
        match out.last_mut() {
            Some(last) if last.0 == s => last.1 += p,
            _ => out.push((s, p)),
        }
    }
    out
}

/// Output of relative value iteration.
#[derive(Debug, Clone)]
pub struct RviSolution {
    pub gain: f64,
    /// Relative values `V(s) = max_a Q(s,a)`.
    pub values: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub policy: Vec<usize>,
    pub iterations: usize,
}

impl RviSolution {
    /// Largest violation of `Q = R − ρT̄ + P·max Q` over all pairs.
    pub fn residual(&self, model: &ToyModel) -> f64 {
        let mut worst: f64 = 0.0;
        for s in 0..model.len() {
            for a in 0..model.transitions[s].len() {
                let next: f64 = model.transitions[s][a].iter().map(|&(t, p)| p * self.values[t]).sum();
                let rhs = model.reward[s][a] - self.gain * model.sojourn[s][a] + next;
                worst = worst.max((rhs - self.q[s][a]).abs());
            }
        }
        worst
    }
}

/// Average-reward relative value iteration on the uniformized SMDP, stopping
/// when the span of successive differences drops below `tolerance`.
pub fn relative_value_iteration(model: &ToyModel, tolerance: f64, max_iterations: usize) -> Result<RviSolution> {
    let n = model.len();
    let tau_min = model.sojourn.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let tau = 0.5 * tau_min;
    let mut h = vec![0.0; n];
    let mut next = vec![0.0; n];
    let reference = model.start;
    let mut span = f64::INFINITY;
    for it in 1..=max_iterations {
        for s in 0..n {
            let mut best = f64::NEG_INFINITY;
            for a in 0..model.transitions[s].len() {
                let t = model.sojourn[s][a];
                let ph: f64 = model.transitions[s][a].iter().map(|&(x, p)| p * h[x]).sum();
                let v = model.reward[s][a] / t + (tau / t) * (ph - h[s]) + h[s];
                best = best.max(v);
            }
            next[s] = best;
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in 0..n {
            let d = next[s] - h[s];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        span = hi - lo;
        let gain = 0.5 * (lo + hi);
        let shift = next[reference];
        for s in 0..n {
            h[s] = next[s] - shift;
        }
        if span < tolerance {
            let values: Vec<f64> = h.iter().map(|v| v * tau).collect();
            let q: Vec<Vec<f64>> = (0..n)
                .map(|s| {
                    (0..model.transitions[s].len())
                        .map(|a| {
                            let pv: f64 = model.transitions[s][a].iter().map(|&(x, p)| p * values[x]).sum();
                            model.reward[s][a] - gain * model.sojourn[s][a] + pv
                        })
                        .collect()
                })
                .collect();
            let policy = q.iter().map(|row| greedy(row)).collect();
            let values = q.iter().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
            return Ok(RviSolution { gain, values, q, policy, iterations: it });
        }
    }
    Err(Error::NoConvergence { iterations: max_iterations, span })
}

/// Direct tabular form of the average-reward SMDP Q update.
pub fn tabular_update(q: &mut [f64], index: usize, reward: f64, elapsed: f64, q_ref: f64, next_q: &[f64], alpha: f64) {
    let target = smdp_target(reward, elapsed, q_ref, next_q);
    q[index] += alpha * (target - q[index]);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TabularConfig {
    pub a: f64,
    pub b: f64,
    pub epsilon: EpsilonSchedule,
    pub updates: u64,
}

impl Default for TabularConfig {
    fn default() -> Self {
        Self { a: 50.0, b: 1000.0, epsilon: EpsilonSchedule::default(), updates: 200_000 }
    }
}

#[derive(Debug, Clone)]
pub struct TabularResult {
    pub q: Vec<Vec<f64>>,
    /// `Q(s*, a*)` at the end of training.
    pub gain_estimate: f64,
    pub reference: (usize, usize),
    pub updates: u64,
}

/// Tabular SMDP Q-learning on simulated trajectories of `model`. The step
/// size of each pair follows `A/(B + n)` in its own visit count `n`.
pub fn tabular_q_learning(model: &ToyModel, cfg: &TabularConfig, rng: &mut SimRng) -> Result<TabularResult> {
    let offsets: Vec<usize> = model
        .transitions
        .iter()
        .scan(0, |acc, acts| {
            let o = *acc;
            *acc += acts.len();
            Some(o)
        })
        .collect();
    let mut q = vec![0.0; model.pair_count()];
    let mut visits = vec![0u64; model.pair_count()];
    let mut s = model.start;
    let mut reference: Option<usize> = None;
    let mut ref_pair = (0, 0);
    let mut k = 0u64;
    let q_of = |q: &[f64], s: usize| -> Vec<f64> { (0..model.transitions[s].len()).map(|a| q[offsets[s] + a]).collect() };
    let mut a = select_action(&q_of(&q, s), cfg.epsilon.value(0), rng);
    while k < cfg.updates {
        let idx = offsets[s] + a;
        if reference.is_none() {
            reference = Some(idx);
            ref_pair = (s, a);
        }
        let jumps = &model.jumps[s][a];
        let total: f64 = jumps.iter().map(|e| e.1).sum();
        let (next, elapsed) = if total > 0.0 {
            let t = Exp::new(total).map_err(|_| Error::InvalidRate(total))?.sample(rng);
            let mut u = rng.random::<f64>() * total;
            let mut pick = jumps[jumps.len() - 1].0;
            for &(x, r) in jumps {
                if u < r {
                    pick = x;
                    break;
                }
                u -= r;
            }
            (pick, t)
        } else {
            (s, 1.0)
        };
        let reward = model.reward_rate[s][a] * elapsed;
        let next_q = q_of(&q, next);
        let q_ref = q[reference.expect("set above")];
        let alpha = learning_rate(visits[idx], cfg.a, cfg.b);
        visits[idx] += 1;
        tabular_update(&mut q, idx, reward, elapsed, q_ref, &next_q, alpha);
        k += 1;
        s = next;
        a = select_action(&q_of(&q, s), cfg.epsilon.value(k), rng);
    }
    let table: Vec<Vec<f64>> = (0..model.len()).map(|s| q_of(&q, s)).collect();
    let gain_estimate = table[ref_pair.0][ref_pair.1];
    Ok(TabularResult { q: table, gain_estimate, reference: ref_pair, updates: k })
}

/// Learner-versus-solver comparison.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub gain: f64,
    pub gain_estimate: f64,
    pub relative_error: f64,
    /// Reachable states with more than one action.
    pub decision_states: usize,
    pub agreeing_states: usize,
    pub smallest_gap: f64,
    pub rvi_iterations: usize,
    pub updates: u64,
}

impl OracleReport {
    pub fn agreement(&self) -> f64 {
        if self.decision_states == 0 {
            1.0
        } else {
            self.agreeing_states as f64 / self.decision_states as f64
        }
    }

    pub fn passed(&self, rel_tol: f64) -> bool {
        self.agreeing_states == self.decision_states && self.relative_error <= rel_tol
    }
}

/// Solves the toy model, trains the tabular learner on it and compares.
pub fn oracle_check(params: &ToyParams, cfg: &TabularConfig, rng: &mut SimRng) -> Result<OracleReport> {
    let model = build_toy_smdp(params)?;
    let rvi = relative_value_iteration(&model, 1e-8, 1_000_000)?;
    let learned = tabular_q_learning(&model, cfg, rng)?;
    let mut decision_states = 0;
    let mut agreeing = 0;
    let mut smallest_gap = f64::INFINITY;
    let reachable = model.reachable();
    for s in 0..model.len() {
        if model.transitions[s].len() < 2 || !reachable[s] {
            continue;
        }
        decision_states += 1;
        let opt = rvi.policy[s];
        let mut sorted = rvi.q[s].clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        smallest_gap = smallest_gap.min(sorted[0] - sorted[1]);
        if greedy(&learned.q[s]) == opt {
            agreeing += 1;
        }
    }
    Ok(OracleReport {
        gain: rvi.gain,
        gain_estimate: learned.gain_estimate,
        relative_error: (learned.gain_estimate - rvi.gain).abs() / rvi.gain.abs(),
        decision_states,
        agreeing_states: agreeing,
        smallest_gap,
        rvi_iterations: rvi.iterations,
        updates: learned.updates,
    })
}
