use crate::error::{Error, Result};
use crate::features::{block_features, ir_features, normalize_temp, temperature_rbfs, FeatureVector, IrQuadruple};
use crate::sim::{Action, DecisionContext, Scheduler, SimRng};

use super::{learning_rate, select_action, smdp_update, LearnerConfig, LearnerMode, WeightVector};

/// Per-update learning trace.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningSample {
    /// Index of the update, from 0; `alpha` is the step size at this index.
    pub k: u64,
    pub alpha: f64,
    pub epsilon: f64,
    pub q_ref: f64,
    pub q_selected: f64,
    pub td_error: f64,
    pub tracked: Vec<f64>,
}

/// Linear SMDP Q-learning scheduler.
#[derive(Debug, Clone)]
pub struct SmdpAgent {
    cfg: LearnerConfig,
    name: String,
    weights: WeightVector,
    cores: usize,
    levels: usize,
    k: u64,
    last: Option<FeatureVector>,
    tracked: Vec<usize>,
    history: Vec<LearningSample>,
    record_history: bool,
}

/// Feature values of every feasible action at one epoch.
enum Epoch {
    /// Shared state activations placed into per-action blocks.
    Blocks { state: Vec<f64>, blocks: Vec<usize>, count: usize },
    /// One vector per action.
    Each(Vec<FeatureVector>),
}

impl Epoch {
    fn q_values(&self, theta: &[f64]) -> Vec<f64> {
        match self {
            Epoch::Blocks { state, blocks, .. } => blocks
                .iter()
                .map(|&b| {
                    let seg = &theta[b * state.len()..(b + 1) * state.len()];
                    seg.iter().zip(state).map(|(a, v)| a * v).sum()
                })
                .collect(),
            Epoch::Each(phis) => phis.iter().map(|p| p.dot_unchecked(theta)).collect(),
        }
    }

    fn features(&self, index: usize) -> Result<FeatureVector> {
        match self {
            Epoch::Blocks { state, blocks, count } => block_features(state, blocks[index], *count),
            Epoch::Each(phis) => Ok(phis[index].clone()),
        }
    }
}

impl SmdpAgent {
    pub fn new(cfg: LearnerConfig, cores: usize, levels: usize) -> Result<Self> {
        cfg.validate()?;
        if cfg.mode == LearnerMode::Tabular {
            return Err(Error::Config("tabular mode needs an explicit state index; use the oracle learner".into()));
        }
        if cfg.mode != LearnerMode::DvfsEnabled && cfg.fixed_level >= levels {
            return Err(Error::UnknownLevel(cfg.fixed_level));
        }
        let dim = cfg.parameter_count(cores, levels);
        let name = cfg.mode.as_str().to_string();
        Ok(Self {
            cfg,
            name,
            weights: WeightVector::zeros(dim),
            cores,
            levels,
            k: 0,
            last: None,
            tracked: Vec::new(),
            history: Vec::new(),
            record_history: true,
        })
    }

    /// Replaces θ, e.g. from a checkpoint; the dimension must match.
    pub fn with_theta(mut self, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != self.weights.dim() {
            return Err(Error::Dimension { expected: self.weights.dim(), got: theta.len() });
        }
        self.weights.theta = theta;
        Ok(self)
    }

    pub fn set_record_history(&mut self, on: bool) {
        self.record_history = on;
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.cfg
    }

    pub fn theta(&self) -> &[f64] {
        &self.weights.theta
    }

    pub fn weights(&self) -> &WeightVector {
        &self.weights
    }

    /// Updates performed so far, across runs.
    pub fn updates(&self) -> u64 {
        self.k
    }

    pub fn history(&self) -> &[LearningSample] {
        &self.history
    }

    pub fn take_history(&mut self) -> Vec<LearningSample> {
        std::mem::take(&mut self.history)
    }

    /// θ indices reported in the learning trace.
    pub fn tracked_indices(&self) -> &[usize] {
        &self.tracked
    }

    fn feasible(&self, ctx: &DecisionContext<'_>) -> Vec<Action> {
        let idle = ctx.idle_cores();
        match self.cfg.mode {
            LearnerMode::DvfsEnabled => idle
                .iter()
                .flat_map(|&c| (0..self.levels).map(move |l| Action::assign(c, l)))
                .collect(),
            _ => idle.iter().map(|&c| Action::assign(c, self.cfg.fixed_level)).collect(),
        }
    }

    fn epoch(&self, ctx: &DecisionContext<'_>, actions: &[Action]) -> Result<Epoch> {
        let temps = &ctx.state.temps;
        match self.cfg.mode {
            LearnerMode::DvfsEnabled | LearnerMode::Lct | LearnerMode::Ldt => {
                let grid = ctx.mesh.interpolate_grid(temps)?;
                let state9 = grid.map(normalize_temp);
                let state = temperature_rbfs(&state9, &self.cfg.temp_bank, self.cfg.features);
                let dvfs = self.cfg.mode == LearnerMode::DvfsEnabled;
                let count = if dvfs { self.cores * self.levels } else { self.cores };
                let blocks = actions
                    .iter()
                    .map(|a| {
                        let c = a.core.expect("feasible actions assign a core");
                        if dvfs {
                            c * self.levels + a.level
                        } else {
                            c
                        }
                    })
                    .collect();
                Ok(Epoch::Blocks { state, blocks, count })
            }
            LearnerMode::Ir => {
                let mut phis = Vec::with_capacity(actions.len());
                for a in actions {
                    let core = a.core.expect("feasible actions assign a core");
                    let quad = IrQuadruple::compute(ctx.mesh, temps, core, ctx.partner_cores)?;
                    phis.push(ir_features(&quad, &self.cfg.ir_banks, self.cfg.features));
                }
                Ok(Epoch::Each(phis))
            }
            LearnerMode::Tabular => unreachable!("rejected at construction"),
        }
    }

    fn pick_tracked(&mut self, phi: &FeatureVector) {
        let mut entries: Vec<(usize, f64)> = phi.entries().collect();
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        self.tracked = entries.iter().take(4).map(|e| e.0).collect();
    }
}

impl Scheduler for SmdpAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn begin_run(&mut self) {
        self.last = None;
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>, rng: &mut SimRng) -> Result<Action> {
        let actions = self.feasible(ctx);
        if actions.is_empty() {
            return Err(Error::Config("decision requested with no idle core".into()));
        }
        let epoch = self.epoch(ctx, &actions)?;
        let mut alpha = 0.0;
        let mut td_error = 0.0;
        let mut q = epoch.q_values(&self.weights.theta);
        if let (Some(tr), Some(last)) = (ctx.transition, self.last.take()) {
            alpha = learning_rate(self.k, self.cfg.a, self.cfg.b);
            let q_ref = self.weights.reference_value();
            let before = last.dot_unchecked(&self.weights.theta);
            let target = smdp_update(&mut self.weights.theta, &last, tr.reward, tr.elapsed, q_ref, &q, alpha)?;
            td_error = target - before;
            self.k += 1;
            q = epoch.q_values(&self.weights.theta);
        }
        let epsilon = self.cfg.epsilon.value(self.k);
        let choice = select_action(&q, epsilon, rng);
        let phi = epoch.features(choice)?;
        if self.weights.reference.is_none() {
            self.pick_tracked(&phi);
            self.weights.reference = Some(phi.clone());
        }
        if self.record_history && alpha > 0.0 {
            let tracked = self.tracked.iter().map(|&i| self.weights.theta[i]).collect();
            self.history.push(LearningSample {
                k: self.k - 1,
                alpha,
                epsilon,
                q_ref: self.weights.reference_value(),
                q_selected: q[choice],
                td_error,
                tracked,
            });
        }
        self.last = Some(phi);
        Ok(actions[choice])
    }
}
