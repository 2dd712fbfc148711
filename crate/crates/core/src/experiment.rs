//! Experiment configuration, single runs, seed-parallel sweeps and artifact
//! files.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{DistanceScaling, FeatureOptions, RbfBank};
use crate::levels::VfLevels;
use crate::metrics::{mean_ci, summarize, RunMeta, RunSummary};
use crate::schedulers::{
    write_checkpoint, Checkpoint, EpsilonSchedule, LearnerConfig, LearnerMode, LearningSample, RandScheduler,
    SmdpAgent, TboScheduler,
};
use crate::sim::{self, DecisionContext, RewardMode, Scheduler, SimConfig, SimRng, TraceRow};
use crate::thermal::{write_heatmap, PowerParams, ThermalParams};
use crate::topology::Mesh;
use crate::workload::{PairingModel, TaskTypeTable, DEFAULT_TOTAL_RATE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    Dvfs,
    Ir,
    Rand,
    Tbo,
    Lct,
    Ldt,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 6] = [
        SchedulerKind::Dvfs,
        SchedulerKind::Ir,
        SchedulerKind::Rand,
        SchedulerKind::Tbo,
        SchedulerKind::Lct,
        SchedulerKind::Ldt,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SchedulerKind::Dvfs => "dvfs",
            SchedulerKind::Ir => "ir",
            SchedulerKind::Rand => "rand",
            SchedulerKind::Tbo => "tbo",
            SchedulerKind::Lct => "lct",
            SchedulerKind::Ldt => "ldt",
        }
    }

    pub fn learner_mode(&self) -> Option<LearnerMode> {
        match self {
            SchedulerKind::Dvfs => Some(LearnerMode::DvfsEnabled),
            SchedulerKind::Ir => Some(LearnerMode::Ir),
            SchedulerKind::Lct => Some(LearnerMode::Lct),
            SchedulerKind::Ldt => Some(LearnerMode::Ldt),
            SchedulerKind::Rand | SchedulerKind::Tbo => None,
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchedulerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown scheduler {s:?} (expected dvfs|ir|rand|tbo|lct|ldt)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub rows: usize,
    pub cols: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self { rows: 4, cols: 4 }
    }
}

impl MeshConfig {
    pub fn build(&self) -> Result<Mesh> {
        Mesh::new(self.rows, self.cols)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    /// Aggregate arrival rate; per-type rates are rescaled to match.
    pub total_rate: f64,
    /// Task-type table file; the shipped table when absent.
    pub table: Option<PathBuf>,
    pub pairing_probability: f64,
    /// Communication-duration rate; the inverse mean base time when absent.
    pub comm_rate: Option<f64>,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self { total_rate: DEFAULT_TOTAL_RATE, table: None, pairing_probability: 0.5, comm_rate: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerSection {
    pub a: f64,
    pub b: f64,
    pub epsilon: EpsilonSchedule,
    /// RBF centers per dimension: 2, 3 or 5.
    pub centers: usize,
    /// Center count of the IR learner, whose parameter vector stays small.
    pub ir_centers: usize,
    /// Overrides the standard width for the chosen center count.
    pub sigma: Option<f64>,
    pub fixed_level: usize,
    pub features: FeatureOptions,
    /// Decision quota of the discrete-time baseline, s.
    pub quota: f64,
}

impl Default for LearnerSection {
    fn default() -> Self {
        Self {
            a: 50.0,
            b: 1000.0,
            epsilon: EpsilonSchedule::default(),
            centers: 2,
            ir_centers: 5,
            sigma: None,
            fixed_level: 2,
            features: FeatureOptions { normalize: true, scaling: DistanceScaling::PerDimMean },
            quota: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub schedulers: Vec<SchedulerKind>,
    pub rates: Vec<f64>,
    pub meshes: Vec<MeshConfig>,
    pub centers: Vec<usize>,
    /// Scale the arrival rate by `M / 16` for each mesh.
    pub scale_load_with_mesh: bool,
    /// Largest number of runs a sweep may contain.
    pub cap: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { schedulers: vec![], rates: vec![], meshes: vec![], centers: vec![], scale_load_with_mesh: true, cap: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheduler: SchedulerKind,
    pub seeds: Vec<u64>,
    /// Length of each run, s.
    pub horizon: f64,
    pub warmup_fraction: f64,
    /// Temperature threshold, K.
    pub threshold: f64,
    /// Learning runs before the measured one; θ carries over.
    pub training_trials: usize,
    pub reward_mode: RewardMode,
    pub out_dir: PathBuf,
    pub heatmap_interval: Option<f64>,
    pub queue_windows: usize,
    pub mesh: MeshConfig,
    pub workload: WorkloadConfig,
    pub levels: VfLevels,
    pub learner: LearnerSection,
    pub thermal: ThermalParams,
    pub power: PowerParams,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scheduler: SchedulerKind::Ir,
            seeds: vec![1],
            horizon: 200.0,
            warmup_fraction: 0.1,
            threshold: 358.0,
            training_trials: 4,
            reward_mode: RewardMode::Integral,
            out_dir: PathBuf::from("out"),
            heatmap_interval: None,
            queue_windows: 20,
            mesh: MeshConfig::default(),
            workload: WorkloadConfig::default(),
            levels: VfLevels::standard(),
            learner: LearnerSection::default(),
            thermal: ThermalParams::default(),
            power: PowerParams::default(),
            sweep: SweepConfig::default(),
        }
    }
}

/// One point of a run grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSpec {
    pub scheduler: SchedulerKind,
    pub mesh: MeshConfig,
    pub rate: f64,
    pub centers: usize,
    pub seed: u64,
}

impl RunSpec {
    pub fn stem(&self) -> String {
        format!(
            "{}_{}x{}_lam{}_x{}_seed{}",
            self.scheduler, self.mesh.rows, self.mesh.cols, self.rate, self.centers, self.seed
        )
    }
}

impl ExperimentConfig {
    /// Parses TOML; errors name the offending field path.
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text)
            .map_err(|e| Error::Parse { path: origin.to_string(), message: e.to_string() })?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner().to_string();
            let message = if path == "." || path.is_empty() {
                inner.trim().to_string()
            } else {
                format!("at `{path}`: {}", inner.trim())
            };
            Error::Parse { path: origin.to_string(), message }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        self.mesh.build()?;
        VfLevels::new(self.levels.as_slice().to_vec())?;
        if self.levels.as_slice().windows(2).any(|w| w[0].ghz > w[1].ghz) {
            return Err(Error::Config("levels must be listed slowest first".into()));
        }
        if self.learner.fixed_level >= self.levels.len() {
            return Err(Error::UnknownLevel(self.learner.fixed_level));
        }
        if !(self.workload.total_rate > 0.0) {
            return Err(Error::InvalidRate(self.workload.total_rate));
        }
        if !(self.learner.quota > 0.0) {
            return Err(Error::Config(format!("learner.quota must be positive, got {}", self.learner.quota)));
        }
        self.learner_config(LearnerMode::Ir, self.learner.ir_centers)?.validate()?;
        self.learner_config(LearnerMode::Lct, self.learner.centers)?.validate()?;
        self.sim_config(self.mesh, self.workload.total_rate, SchedulerKind::Ir)?.validate()?;
        Ok(())
    }

    fn table(&self) -> Result<TaskTypeTable> {
        match &self.workload.table {
            Some(p) => TaskTypeTable::from_path(p),
            None => Ok(TaskTypeTable::standard()),
        }
    }

    /// Simulator settings of one grid point.
    pub fn sim_config(&self, mesh: MeshConfig, rate: f64, kind: SchedulerKind) -> Result<SimConfig> {
        let mesh = mesh.build()?;
        let table = self.table()?.with_total_rate(rate)?;
        let comm_rate = self.workload.comm_rate.unwrap_or(1.0 / table.mean_base_time());
        Ok(SimConfig {
            table,
            levels: self.levels.clone(),
            power: self.power,
            thermal: self.thermal,
            pairing: PairingModel { probability: self.workload.pairing_probability, comm_rate },
            threshold: self.threshold,
            horizon: self.horizon,
            warmup_fraction: self.warmup_fraction,
            quota: (kind == SchedulerKind::Ldt).then_some(self.learner.quota),
            reward_mode: self.reward_mode,
            queue_windows: self.queue_windows,
            heatmap_interval: self.heatmap_interval,
            ..SimConfig::standard(mesh)
        })
    }

    pub fn learner_config(&self, mode: LearnerMode, centers: usize) -> Result<LearnerConfig> {
        let mut bank = RbfBank::standard(centers)?;
        if let Some(s) = self.learner.sigma {
            bank = RbfBank::new(bank.centers, s)?;
        }
        Ok(LearnerConfig {
            a: self.learner.a,
            b: self.learner.b,
            epsilon: self.learner.epsilon,
            mode,
            fixed_level: self.learner.fixed_level,
            temp_bank: bank.clone(),
            ir_banks: [bank.clone(), bank.clone(), bank.clone(), bank],
            features: self.learner.features,
        })
    }

    /// Arrival rate used on `mesh` for a base rate `rate`.
    pub fn scaled_rate(&self, rate: f64, mesh: MeshConfig) -> f64 {
        if self.sweep.scale_load_with_mesh && !self.sweep.meshes.is_empty() {
            rate * (mesh.rows * mesh.cols) as f64 / 16.0
        } else {
            rate
        }
    }

    /// Configured center count of `kind`.
    pub fn centers_for(&self, kind: SchedulerKind) -> usize {
        if kind == SchedulerKind::Ir {
            self.learner.ir_centers
        } else {
            self.learner.centers
        }
    }

    /// Grid of a plain run: the configured scheduler over every seed.
    pub fn run_specs(&self) -> Vec<RunSpec> {
        self.seeds
            .iter()
            .map(|&seed| RunSpec {
                scheduler: self.scheduler,
                mesh: self.mesh,
                rate: self.workload.total_rate,
                centers: self.centers_for(self.scheduler),
                seed,
            })
            .collect()
    }

    /// Cartesian product of the sweep lists; empty lists fall back to the
    /// single configured value.
    pub fn sweep_specs(&self) -> Vec<RunSpec> {
        let sw = &self.sweep;
        let or = |v: &Vec<SchedulerKind>| if v.is_empty() { vec![self.scheduler] } else { v.clone() };
        let schedulers = or(&sw.schedulers);
        let meshes = if sw.meshes.is_empty() { vec![self.mesh] } else { sw.meshes.clone() };
        let rates = if sw.rates.is_empty() { vec![self.workload.total_rate] } else { sw.rates.clone() };
        let mut specs = Vec::new();
        for &scheduler in &schedulers {
            let centers = if sw.centers.is_empty() { vec![self.centers_for(scheduler)] } else { sw.centers.clone() };
            for &mesh in &meshes {
                for &rate in &rates {
                    for &c in &centers {
                        for &seed in &self.seeds {
                            specs.push(RunSpec { scheduler, mesh, rate: self.scaled_rate(rate, mesh), centers: c, seed });
                        }
                    }
                }
            }
        }
        specs
    }
}

/// Either learner or fixed-rule scheduler.
pub enum AnyScheduler {
    Agent(Box<SmdpAgent>),
    Rand(RandScheduler),
    Tbo(TboScheduler),
}

impl Scheduler for AnyScheduler {
    fn name(&self) -> &str {
        match self {
            AnyScheduler::Agent(a) => a.name(),
            AnyScheduler::Rand(r) => r.name(),
            AnyScheduler::Tbo(t) => t.name(),
        }
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>, rng: &mut SimRng) -> Result<sim::Action> {
        match self {
            AnyScheduler::Agent(a) => a.decide(ctx, rng),
            AnyScheduler::Rand(r) => r.decide(ctx, rng),
            AnyScheduler::Tbo(t) => t.decide(ctx, rng),
        }
    }

    fn begin_run(&mut self) {
        if let AnyScheduler::Agent(a) = self {
            a.begin_run();
        }
    }
}

/// Everything one grid point produces.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub spec: RunSpec,
    pub summary: RunSummary,
    pub trace: Vec<TraceRow>,
    pub checkpoint: Option<Checkpoint>,
    pub learning: Vec<LearningSample>,
    pub heatmaps: Vec<(f64, Vec<f64>)>,
    /// Arrival-to-completion times of measured tasks, by task id.
    pub response_times: Vec<f64>,
    pub queue_series: Vec<f64>,
}

/// Seed of training trial `trial` for a measured run with `seed`.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03 ^ (trial as u64 + 1))
}

/// Trains (for learners) and then runs the measured simulation of `spec`.
pub fn run_spec(cfg: &ExperimentConfig, spec: &RunSpec) -> Result<RunArtifacts> {
    let sim_cfg = cfg.sim_config(spec.mesh, spec.rate, spec.scheduler)?;
    let mesh = sim_cfg.mesh.clone();
    let mut scheduler = match spec.scheduler.learner_mode() {
        Some(mode) => {
            let lc = cfg.learner_config(mode, spec.centers)?;
            AnyScheduler::Agent(Box::new(SmdpAgent::new(lc, mesh.len(), sim_cfg.levels.len())?))
        }
        None if spec.scheduler == SchedulerKind::Rand => {
            AnyScheduler::Rand(RandScheduler { level: cfg.learner.fixed_level })
        }
        None => AnyScheduler::Tbo(TboScheduler { level: cfg.learner.fixed_level }),
    };
    if let AnyScheduler::Agent(agent) = &mut scheduler {
        for trial in 0..cfg.training_trials {
            let train_cfg = SimConfig { heatmap_interval: None, ..sim_cfg.clone() };
            sim::run(&train_cfg, agent.as_mut(), trial_seed(spec.seed, trial))?;
        }
    }
    let out = sim::run(&sim_cfg, &mut scheduler, spec.seed)?;
    let meta = RunMeta { scheduler: spec.scheduler.to_string(), mesh, lambda: spec.rate, seed: spec.seed };
    let summary = summarize(&out.stats, &meta);
    let mut measured: Vec<_> = out.stats.measured_tasks().map(|t| (t.id, t.response_time())).collect();
    measured.sort_by_key(|m| m.0);
    let (checkpoint, learning) = match &mut scheduler {
        AnyScheduler::Agent(agent) => {
            let lc = agent.config();
            let banks = format!(
                "centers={:?} sigma={} scaling={:?} normalize={}",
                lc.temp_bank.centers, lc.temp_bank.sigma, lc.features.scaling, lc.features.normalize
            );
            let ckpt = Checkpoint {
                mode: lc.mode.as_str().to_string(),
                updates: agent.updates(),
                banks,
                theta: agent.theta().to_vec(),
            };
            (Some(ckpt), agent.take_history())
        }
        _ => (None, Vec::new()),
    };
    Ok(RunArtifacts {
        spec: *spec,
        summary,
        trace: out.trace,
        checkpoint,
        learning,
        heatmaps: out.heatmaps,
        response_times: measured.into_iter().map(|m| m.1).collect(),
        queue_series: out.stats.queue_series,
    })
}

/// Runs `specs` on `workers` threads; results come back in `specs` order.
pub fn run_parallel(cfg: &ExperimentConfig, specs: &[RunSpec], workers: usize) -> Result<Vec<RunArtifacts>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| specs.par_iter().map(|s| run_spec(cfg, s)).collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct SummaryRow {
    scheduler: String,
    mesh: String,
    lambda: f64,
    seed: u64,
    #[serde(rename = "avg_peak_K")]
    avg_peak_k: f64,
    avg_service_s: Option<f64>,
    #[serde(rename = "total_dyn_energy_J")]
    total_dyn_energy_j: f64,
    mean_queue_len: f64,
}

impl From<&RunSummary> for SummaryRow {
    fn from(s: &RunSummary) -> Self {
        Self {
            scheduler: s.scheduler.clone(),
            mesh: s.mesh.clone(),
            lambda: s.lambda,
            seed: s.seed,
            avg_peak_k: s.avg_peak_k,
            avg_service_s: s.avg_service_s,
            total_dyn_energy_j: s.total_dyn_energy_j,
            mean_queue_len: s.mean_queue_len,
        }
    }
}

pub const CONFIG_SIDECAR: &str = "resolved_config.toml";

fn write_sidecar(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let body = format!("# Resolved configuration of every artifact in this directory\n{}", cfg.to_toml());
    fs::write(dir.join(CONFIG_SIDECAR), body)?;
    Ok(())
}

pub fn write_trace<W: Write>(out: W, trace: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "time_s", "event_kind", "action_core", "action_level", "reward_Ks", "dt_s", "peak_K", "queue_len"])?;
    for r in trace {
        w.write_record([
            r.k.to_string(),
            r.time.to_string(),
            r.event_kind.as_str().to_string(),
            r.action_core.map_or(String::new(), |c| c.to_string()),
            r.action_level.to_string(),
            r.reward.to_string(),
            r.dt.to_string(),
            r.peak.to_string(),
            r.queue_len.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summaries<W: Write>(out: W, summaries: &[RunSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in summaries {
        w.serialize(SummaryRow::from(s))?;
    }
    w.flush()?;
    Ok(())
}

fn write_learning<W: Write>(out: W, samples: &[LearningSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let tracked = samples.first().map_or(0, |s| s.tracked.len());
    let mut header: Vec<String> =
        ["k", "alpha", "epsilon", "q_ref", "q_selected", "td_error"].iter().map(|s| s.to_string()).collect();
    header.extend((0..tracked).map(|i| format!("theta_{i}")));
    w.write_record(&header)?;
    for s in samples {
        let mut row = vec![
            s.k.to_string(),
            s.alpha.to_string(),
            s.epsilon.to_string(),
            s.q_ref.to_string(),
            s.q_selected.to_string(),
            s.td_error.to_string(),
        ];
        row.extend(s.tracked.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes trace, summary, checkpoint, learning trace and heatmaps of one run.
pub fn write_run(dir: &Path, mesh: &Mesh, art: &RunArtifacts) -> Result<()> {
    let stem = art.spec.stem();
    write_trace(fs::File::create(dir.join(format!("{stem}_trace.csv")))?, &art.trace)?;
    write_summaries(fs::File::create(dir.join(format!("{stem}_summary.csv")))?, std::slice::from_ref(&art.summary))?;
    if let Some(ckpt) = &art.checkpoint {
        let mut f = std::io::BufWriter::new(fs::File::create(dir.join(format!("{stem}_theta.txt")))?);
        write_checkpoint(&mut f, ckpt)?;
        f.flush()?;
        write_learning(fs::File::create(dir.join(format!("{stem}_learning.csv")))?, &art.learning)?;
    }
    if !art.heatmaps.is_empty() {
        let mut f = std::io::BufWriter::new(fs::File::create(dir.join(format!("{stem}_heatmap.txt")))?);
        for (_, temps) in &art.heatmaps {
            write_heatmap(&mut f, mesh, temps)?;
        }
        f.flush()?;
    }
    Ok(())
}

/// `run` subcommand: every seed of the configured scheduler.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<RunSummary>> {
    let specs = cfg.run_specs();
    let arts = run_parallel(cfg, &specs, workers)?;
    let dir = &cfg.out_dir;
    write_sidecar(cfg, dir)?;
    let mesh = cfg.mesh.build()?;
    for art in &arts {
        write_run(dir, &mesh, art)?;
    }
    Ok(arts.into_iter().map(|a| a.summary).collect())
}

/// Mean and 95% half-width of each metric over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub scheduler: String,
    pub mesh: String,
    pub lambda: f64,
    pub runs: usize,
    #[serde(rename = "avg_peak_K_mean")]
    pub peak_mean: f64,
    #[serde(rename = "avg_peak_K_ci95")]
    pub peak_ci: f64,
    pub avg_service_s_mean: f64,
    pub avg_service_s_ci95: f64,
    #[serde(rename = "total_dyn_energy_J_mean")]
    pub energy_mean: f64,
    #[serde(rename = "total_dyn_energy_J_ci95")]
    pub energy_ci: f64,
    pub mean_queue_len_mean: f64,
    pub mean_queue_len_ci95: f64,
}

/// Groups summaries by (scheduler, mesh, λ); the result does not depend on
/// input order.
pub fn aggregate(summaries: &[RunSummary]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, String, u64), Vec<&RunSummary>> = BTreeMap::new();
    for s in summaries {
        groups.entry((s.scheduler.clone(), s.mesh.clone(), s.lambda.to_bits())).or_default().push(s);
    }
    groups
        .into_iter()
        .map(|((scheduler, mesh, lam), mut runs)| {
            runs.sort_by_key(|r| r.seed);
            let col = |f: &dyn Fn(&RunSummary) -> f64| {
                let v: Vec<f64> = runs.iter().map(|r| f(r)).collect();
                mean_ci(&v, 0.95)
            };
            let (peak_mean, peak_ci) = col(&|r| r.avg_peak_k);
            let (svc_mean, svc_ci) = col(&|r| r.avg_service_s.unwrap_or(f64::NAN));
            let (energy_mean, energy_ci) = col(&|r| r.total_dyn_energy_j);
            let (q_mean, q_ci) = col(&|r| r.mean_queue_len);
            AggregateRow {
                scheduler,
                mesh,
                lambda: f64::from_bits(lam),
                runs: runs.len(),
                peak_mean,
                peak_ci,
                avg_service_s_mean: svc_mean,
                avg_service_s_ci95: svc_ci,
                energy_mean,
                energy_ci,
                mean_queue_len_mean: q_mean,
                mean_queue_len_ci95: q_ci,
            }
        })
        .collect()
}

fn cell(mean: f64, ci: f64) -> String {
    if ci.is_finite() {
        format!("{mean:.3} ± {ci:.3}")
    } else {
        format!("{mean:.3}")
    }
}

/// Plain-text tables: one row per (mesh, λ), one column per scheduler.
pub fn render_tables(rows: &[AggregateRow]) -> String {
    let mut schedulers: Vec<&str> = rows.iter().map(|r| r.scheduler.as_str()).collect();
    schedulers.sort();
    schedulers.dedup();
    let mut keys: Vec<(String, u64)> = rows.iter().map(|r| (r.mesh.clone(), r.lambda.to_bits())).collect();
    keys.sort_by(|a, b| mesh_order(&a.0).cmp(&mesh_order(&b.0)).then(f64::from_bits(a.1).total_cmp(&f64::from_bits(b.1))));
    keys.dedup();
    let metrics: [(&str, fn(&AggregateRow) -> (f64, f64)); 4] = [
        ("Average peak temperature (K)", |r| (r.peak_mean, r.peak_ci)),
        ("Average service time (s)", |r| (r.avg_service_s_mean, r.avg_service_s_ci95)),
        ("Total dynamic energy (J)", |r| (r.energy_mean, r.energy_ci)),
        ("Mean queue length", |r| (r.mean_queue_len_mean, r.mean_queue_len_ci95)),
    ];
    let mut out = String::new();
    for (title, get) in metrics {
        out.push_str(&format!("{title}\n"));
        let mut header = format!("{:<8} {:>8}", "mesh", "lambda");
        for s in &schedulers {
            header.push_str(&format!(" {s:>22}"));
        }
        out.push_str(&header);
        out.push('\n');
        for (mesh, lam) in &keys {
            let lam = f64::from_bits(*lam);
            let mut line = format!("{mesh:<8} {lam:>8.3}");
            for s in &schedulers {
                let text = rows
                    .iter()
                    .find(|r| r.scheduler == *s && &r.mesh == mesh && r.lambda == lam)
                    .map_or("-".to_string(), |r| {
                        let (m, c) = get(r);
                        cell(m, c)
                    });
                line.push_str(&format!(" {text:>22}"));
            }
            out.push_str(&line);
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

fn mesh_order(mesh: &str) -> (usize, usize) {
    let mut it = mesh.split('x').map(|v| v.parse().unwrap_or(0));
    (it.next().unwrap_or(0), it.next().unwrap_or(0))
}

/// Result of a sweep.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub runs: usize,
    pub summaries: Vec<RunSummary>,
    pub aggregate: Vec<AggregateRow>,
    pub tables: String,
}

/// `sweep` subcommand: the Cartesian grid, aggregated with 95% CIs.
pub fn sweep(cfg: &ExperimentConfig, workers: usize) -> Result<SweepOutcome> {
    let specs = cfg.sweep_specs();
    if specs.len() > cfg.sweep.cap {
        return Err(Error::Config(format!(
            "sweep of {} runs exceeds the cap of {} (raise sweep.cap to allow it)",
            specs.len(),
            cfg.sweep.cap
        )));
    }
    let arts = run_parallel(cfg, &specs, workers)?;
    let dir = &cfg.out_dir;
    write_sidecar(cfg, dir)?;
    for art in &arts {
        let mesh = art.spec.mesh.build()?;
        if !art.heatmaps.is_empty() {
            write_run(dir, &mesh, art)?;
        }
    }
    let summaries: Vec<RunSummary> = arts.into_iter().map(|a| a.summary).collect();
    write_summaries(fs::File::create(dir.join("sweep_runs.csv"))?, &summaries)?;
    let aggregate = aggregate(&summaries);
    let mut w = csv::Writer::from_path(dir.join("sweep_aggregate.csv"))?;
    for row in &aggregate {
        w.serialize(row)?;
    }
    w.flush()?;
    let tables = render_tables(&aggregate);
    fs::write(dir.join("sweep_tables.txt"), &tables)?;
    Ok(SweepOutcome { runs: specs.len(), summaries, aggregate, tables })
}

/// Reads every summary CSV under `dir` (per-run files and sweep files).
pub fn read_summaries(dir: &Path) -> Result<Vec<RunSummary>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with("_summary.csv") || n == "sweep_runs.csv")
        })
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let mut r = csv::Reader::from_path(&p)?;
        for row in r.deserialize::<SummaryRow>() {
            let row = row?;
            out.push(RunSummary {
                scheduler: row.scheduler,
                mesh: row.mesh,
                lambda: row.lambda,
                seed: row.seed,
                avg_peak_k: row.avg_peak_k,
                avg_service_s: row.avg_service_s,
                total_dyn_energy_j: row.total_dyn_energy_j,
                mean_queue_len: row.mean_queue_len,
                tile_dyn_power_w: Vec::new(),
                decisions: 0,
                completed: 0,
                max_peak_k: f64::NAN,
                avg_exec_s: None,
            });
        }
    }
    Ok(out)
}

/// `report` subcommand: aggregate tables of a finished output directory.
pub fn report(dir: &Path) -> Result<String> {
    let summaries = read_summaries(dir)?;
    if summaries.is_empty() {
        return Err(Error::Config(format!("no summary files found in {}", dir.display())));
    }
    Ok(render_tables(&aggregate(&summaries)))
}
