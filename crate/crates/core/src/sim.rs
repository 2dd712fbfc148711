//! Continuous-time discrete-event engine.
//!
//! One [`Simulation`] owns the chip state, the FCFS arrival queue, the event
//! calendar and the thermal field. Between consecutive events the field is
//! integrated in substeps under the powers implied by the current assignment,
//! and the chip-wide margin is integrated into the reward of the open
//! decision.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levels::VfLevels;
use crate::thermal::{temperature_margin, PowerParams, ThermalField, ThermalModel, ThermalParams};
use crate::topology::{Mesh, Route};
use crate::workload::{total_service_time, PairCandidate, PairingModel, TaskInstance, TaskTypeTable};

/// Random generator type used throughout a run.
pub type SimRng = ChaCha8Rng;

/// Independent random streams of one run.
#[derive(Debug, Clone)]
pub struct SimStreams {
    pub arrivals: SimRng,
    pub pairing: SimRng,
    pub thermal: SimRng,
    pub scheduler: SimRng,
}

impl SimStreams {
    pub fn from_seed(seed: u64) -> Self {
        let stream = |s: u64| {
            let mut rng = SimRng::seed_from_u64(seed);
            rng.set_stream(s);
            rng
        };
        Self { arrivals: stream(0), pairing: stream(1), thermal: stream(2), scheduler: stream(3) }
    }
}

/// Sensor view of the chip at a decision epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    /// Per-core temperatures, K.
    pub temps: Vec<f64>,
    pub busy: Vec<bool>,
    /// Tasks in the system, queued or in service.
    pub tasks: usize,
}

impl SystemState {
    pub fn busy_count(&self) -> usize {
        self.busy.iter().filter(|&&b| b).count()
    }

    pub fn queue_len(&self) -> usize {
        self.tasks - self.busy_count()
    }

    pub fn idle_cores(&self) -> Vec<usize> {
        self.busy.iter().enumerate().filter(|(_, &b)| !b).map(|(i, _)| i).collect()
    }
}

/// Core to receive the head-of-line task (or none) and its V-F level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Action {
    pub core: Option<usize>,
    pub level: usize,
}

impl Action {
    pub fn assign(core: usize, level: usize) -> Self {
        Self { core: Some(core), level }
    }

    pub fn nil(level: usize) -> Self {
        Self { core: None, level }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    TaskArrival,
    TaskDeparture,
    QuotaTick,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::TaskArrival => "TASK_ARRIVAL",
            EventKind::TaskDeparture => "TASK_DEPARTURE",
            EventKind::QuotaTick => "QUOTA_TICK",
        }
    }
}

/// A calendar entry visible to callers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub kind: EventKind,
    pub time: f64,
    pub task: Option<u64>,
}

/// One SMDP transition between consecutive decision epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRecord {
    pub from: SystemState,
    pub action: Action,
    pub to: SystemState,
    /// Margin accumulated over the transition, K·s.
    pub reward: f64,
    /// Sojourn time, s.
    pub elapsed: f64,
}

/// What a scheduler sees when asked for an action.
pub struct DecisionContext<'a> {
    pub now: f64,
    pub trigger: EventKind,
    pub mesh: &'a Mesh,
    pub levels: &'a VfLevels,
    pub state: &'a SystemState,
    /// Fraction of elapsed time each core has been busy.
    pub utilization: &'a [f64],
    /// Cores of running tasks that are not currently paired, by task id.
    pub partner_cores: &'a [usize],
    /// The transition that ends at this epoch, if any.
    pub transition: Option<&'a TransitionRecord>,
}

impl DecisionContext<'_> {
    pub fn idle_cores(&self) -> Vec<usize> {
        self.state.idle_cores()
    }
}

pub trait Scheduler {
    fn name(&self) -> &str;

    /// Picks an action at a decision epoch and learns from the closed transition.
    fn decide(&mut self, ctx: &DecisionContext<'_>, rng: &mut SimRng) -> Result<Action>;

    /// Called before each run; drops per-run state, keeps learned parameters.
    fn begin_run(&mut self) {}
}

impl<S: Scheduler + ?Sized> Scheduler for Box<S> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>, rng: &mut SimRng) -> Result<Action> {
        (**self).decide(ctx, rng)
    }

    fn begin_run(&mut self) {
        (**self).begin_run()
    }
}

/// How the reward of a transition is formed from the margin signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Trapezoidal time integral of the margin over the transition.
    #[default]
    Integral,
    /// Margin at the start of the transition held over its duration.
    PointSample,
}

/// Everything a run needs besides the scheduler and the seed.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub mesh: Mesh,
    pub table: TaskTypeTable,
    pub levels: VfLevels,
    pub power: PowerParams,
    pub thermal: ThermalParams,
    pub pairing: PairingModel,
    /// Temperature threshold, K.
    pub threshold: f64,
    pub horizon: f64,
    pub warmup_fraction: f64,
    /// Decision quota in seconds; `Some` switches to discrete-time decisions.
    pub quota: Option<f64>,
    pub reward_mode: RewardMode,
    pub decision_budget: Option<u64>,
    /// Number of equal windows for the queue-length series.
    pub queue_windows: usize,
    pub heatmap_interval: Option<f64>,
    pub record_transitions: bool,
}

impl SimConfig {
    /// Default workload, levels, power and thermal settings on `mesh`.
    pub fn standard(mesh: Mesh) -> Self {
        let table = TaskTypeTable::standard();
        let comm_rate = 1.0 / table.mean_base_time();
        Self {
            mesh,
            table,
            levels: VfLevels::standard(),
            power: PowerParams::default(),
            thermal: ThermalParams::default(),
            pairing: PairingModel { probability: 0.5, comm_rate },
            threshold: 358.0,
            horizon: 200.0,
            warmup_fraction: 0.1,
            quota: None,
            reward_mode: RewardMode::Integral,
            decision_budget: None,
            queue_windows: 20,
            heatmap_interval: None,
            record_transitions: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.thermal.validate()?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config(format!("warm-up fraction must be in [0, 1), got {}", self.warmup_fraction)));
        }
        if let Some(q) = self.quota {
            if !(q > 0.0) {
                return Err(Error::Config(format!("quota must be positive, got {q}")));
            }
        }
        if !(self.threshold > 0.0) {
            return Err(Error::Config(format!("threshold must be positive, got {}", self.threshold)));
        }
        if !(0.0..=1.0).contains(&self.pairing.probability) {
            return Err(Error::Config(format!("pairing probability must be in [0, 1], got {}", self.pairing.probability)));
        }
        if !(self.pairing.comm_rate > 0.0) {
            return Err(Error::InvalidRate(self.pairing.comm_rate));
        }
        if self.queue_windows == 0 {
            return Err(Error::Config("queue_windows must be at least 1".into()));
        }
        Ok(())
    }
}

/// One row of the decision trace, written when the transition closes.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: u64,
    pub time: f64,
    pub event_kind: EventKind,
    pub action_core: Option<usize>,
    pub action_level: usize,
    pub reward: f64,
    pub dt: f64,
    pub peak: f64,
    pub queue_len: usize,
}

/// A task that left the system.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletedTask {
    pub id: u64,
    pub kind: usize,
    pub core: usize,
    pub level: usize,
    pub arrival: f64,
    pub start: f64,
    pub departure: f64,
    pub exec_time: f64,
    /// Execution plus communication, the length of the busy interval.
    pub busy_time: f64,
    pub paired: bool,
}

impl CompletedTask {
    /// Arrival-to-completion interval.
    pub fn response_time(&self) -> f64 {
        self.departure - self.arrival
    }
}

/// Raw accumulators of a finished run.
#[derive(Debug, Clone, Default)]
pub struct RunStats {
    pub warmup_end: f64,
    pub end_time: f64,
    /// ∫ peak dt over the measured window, K·s.
    pub peak_integral: f64,
    pub max_peak: f64,
    /// ∫ q dt over the measured window.
    pub queue_integral: f64,
    pub core_dyn_energy: Vec<f64>,
    pub router_dyn_energy: Vec<f64>,
    /// Time-averaged queue length per window over the whole run.
    pub queue_series: Vec<f64>,
    pub decisions: u64,
    pub arrivals: u64,
    pub departures: u64,
    pub completed: Vec<CompletedTask>,
}

impl RunStats {
    pub fn measured_span(&self) -> f64 {
        self.end_time - self.warmup_end
    }

    /// Completed tasks that arrived after warm-up.
    pub fn measured_tasks(&self) -> impl Iterator<Item = &CompletedTask> {
        let w = self.warmup_end;
        self.completed.iter().filter(move |t| t.arrival >= w)
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub trace: Vec<TraceRow>,
    pub transitions: Vec<TransitionRecord>,
    pub stats: RunStats,
    pub heatmaps: Vec<(f64, Vec<f64>)>,
    pub final_field: ThermalField,
}

/// Trapezoidal integral of piecewise-linear samples `(t, value)`.
pub fn integrated_reward(samples: &[(f64, f64)]) -> f64 {
    samples.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum()
}

/// Time average of a piecewise-constant queue-length signal given as
/// `(time of change, new length)` steps, over `[0, end]`.
pub fn queue_length_stats(steps: &[(f64, usize)], end: f64) -> f64 {
    if end <= 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    for (i, &(t, q)) in steps.iter().enumerate() {
        let next = steps.get(i + 1).map_or(end, |s| s.0).min(end);
        if next > t {
            total += q as f64 * (next - t);
        }
    }
    total / end
}

#[derive(Debug, Clone, Copy)]
enum Payload {
    Arrival { kind: usize },
    Departure { core: usize, task: u64 },
    QuotaTick,
    LinkEnd { link: u64 },
}

#[derive(Debug, Clone, Copy)]
struct Scheduled {
    time: f64,
    seq: u64,
    payload: Payload,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // reversed: BinaryHeap pops the earliest event first
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone)]
struct Link {
    id: u64,
    a: u64,
    b: u64,
    injection: f64,
    route: Route,
}

struct Pending {
    k: u64,
    time: f64,
    trigger: EventKind,
    state: SystemState,
    action: Action,
    peak: f64,
    queue_len: usize,
    start_margin: f64,
}

/// A single deterministic run.
pub struct Simulation<'c> {
    cfg: &'c SimConfig,
    model: ThermalModel,
    field: ThermalField,
    streams: SimStreams,
    now: f64,
    seq: u64,
    calendar: BinaryHeap<Scheduled>,
    queue: VecDeque<TaskInstance>,
    running: Vec<Option<TaskInstance>>,
    links: Vec<Link>,
    injection: Vec<f64>,
    next_task: u64,
    next_link: u64,
    busy_time: Vec<f64>,
    last_peak: f64,
    last_margin: f64,
    reward_acc: f64,
    pending: Option<Pending>,
    measuring: bool,
    window_width: f64,
    stats: RunStats,
    trace: Vec<TraceRow>,
    transitions: Vec<TransitionRecord>,
    heatmaps: Vec<(f64, Vec<f64>)>,
    marks: Vec<f64>,
}

impl<'c> Simulation<'c> {
    pub fn new(cfg: &'c SimConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let model = ThermalModel::new(&cfg.mesh, cfg.thermal)?;
        let field = model.ambient_field();
        let m = cfg.mesh.len();
        let peak = field.peak();
        let warmup_end = cfg.warmup_fraction * cfg.horizon;
        let window_width = cfg.horizon / cfg.queue_windows as f64;
        let mut marks = vec![warmup_end];
        marks.extend((1..cfg.queue_windows).map(|i| i as f64 * window_width));
        if let Some(dt) = cfg.heatmap_interval {
            if dt > 0.0 {
                let mut t = dt;
                while t < cfg.horizon {
                    marks.push(t);
                    t += dt;
                }
            }
        }
        marks.retain(|&t| t > 0.0 && t < cfg.horizon);
        marks.sort_by(|a, b| b.total_cmp(a));
        marks.dedup();
        let stats = RunStats {
            warmup_end,
            core_dyn_energy: vec![0.0; m],
            router_dyn_energy: vec![0.0; m],
            queue_series: vec![0.0; cfg.queue_windows],
            max_peak: peak,
            ..RunStats::default()
        };
        Ok(Self {
            cfg,
            model,
            field,
            streams: SimStreams::from_seed(seed),
            now: 0.0,
            seq: 0,
            calendar: BinaryHeap::new(),
            queue: VecDeque::new(),
            running: vec![None; m],
            links: Vec::new(),
            injection: vec![0.0; m],
            next_task: 0,
            next_link: 0,
            busy_time: vec![0.0; m],
            last_peak: peak,
            last_margin: temperature_margin(peak, cfg.threshold),
            reward_acc: 0.0,
            pending: None,
            measuring: warmup_end <= 0.0,
            window_width,
            stats,
            trace: Vec::new(),
            transitions: Vec::new(),
            heatmaps: Vec::new(),
            marks,
        })
    }

    /// Starts from `field` instead of the ambient field.
    pub fn with_field(mut self, field: ThermalField) -> Result<Self> {
        if field.len() != self.cfg.mesh.len() {
            return Err(Error::Dimension { expected: self.cfg.mesh.len(), got: field.len() });
        }
        self.last_peak = field.peak();
        self.last_margin = temperature_margin(self.last_peak, self.cfg.threshold);
        self.stats.max_peak = self.last_peak;
        self.field = field;
        Ok(self)
    }

    fn schedule(&mut self, time: f64, payload: Payload) {
        self.seq += 1;
        self.calendar.push(Scheduled { time, seq: self.seq, payload });
    }

    fn schedule_arrival(&mut self) -> Result<()> {
        let (dt, kind) = self.cfg.table.next_arrival(&mut self.streams.arrivals)?;
        self.schedule(self.now + dt, Payload::Arrival { kind });
        Ok(())
    }

    fn snapshot(&self) -> SystemState {
        let busy: Vec<bool> = self.running.iter().map(Option::is_some).collect();
        let in_service = busy.iter().filter(|&&b| b).count();
        SystemState { temps: self.field.temps().to_vec(), busy, tasks: in_service + self.queue.len() }
    }

    fn has_idle(&self) -> bool {
        self.running.iter().any(Option::is_none)
    }

    fn linked(&self, task: u64) -> bool {
        self.links.iter().any(|l| l.a == task || l.b == task)
    }

    fn pair_candidates(&self) -> Vec<PairCandidate> {
        let mut c: Vec<PairCandidate> = self
            .running
            .iter()
            .enumerate()
            .filter_map(|(core, t)| t.as_ref().map(|t| PairCandidate { task: t.id, core }))
            .filter(|c| !self.linked(c.task))
            .collect();
        c.sort_by_key(|c| c.task);
        c
    }

    fn refresh_injection(&mut self) {
        self.injection.iter_mut().for_each(|v| *v = 0.0);
        for link in &self.links {
            for &r in link.route.routers() {
                self.injection[r] += link.injection;
            }
        }
    }

    fn utilization(&self) -> Vec<f64> {
        if self.now <= 0.0 {
            return vec![0.0; self.busy_time.len()];
        }
        self.busy_time.iter().map(|b| b / self.now).collect()
    }

    fn advance_to(&mut self, t_end: f64) -> Result<()> {
        let dt = t_end - self.now;
        if dt <= 0.0 {
            return Ok(());
        }
        let m = self.cfg.mesh.len();
        let mut powers = vec![0.0; m];
        let mut core_dyn = vec![0.0; m];
        let mut router_dyn = vec![0.0; m];
        for tile in 0..m {
            let (busy, level) = match &self.running[tile] {
                Some(t) => (true, t.level.unwrap_or(0)),
                None => (false, 0),
            };
            core_dyn[tile] = self.cfg.power.core_dynamic(busy, level, &self.cfg.levels)?;
            router_dyn[tile] = self.cfg.power.router_dynamic(self.injection[tile]);
            powers[tile] = self.cfg.power.core_static + core_dyn[tile] + self.cfg.power.router_static + router_dyn[tile];
        }
        let n = ((dt / self.cfg.thermal.step) - 1e-9).ceil().max(1.0) as usize;
        let h = dt / n as f64;
        for _ in 0..n {
            self.model.substep(&mut self.field, &powers, h, &mut self.streams.thermal);
            let peak = self.field.peak();
            let margin = temperature_margin(peak, self.cfg.threshold);
            self.reward_acc += h * (self.last_margin + margin) / 2.0;
            if self.measuring {
                self.stats.peak_integral += h * (self.last_peak + peak) / 2.0;
                self.stats.max_peak = self.stats.max_peak.max(peak);
            }
            self.last_peak = peak;
            self.last_margin = margin;
        }
        let q = self.queue.len() as f64;
        if self.measuring {
            self.stats.queue_integral += q * dt;
            for tile in 0..m {
                self.stats.core_dyn_energy[tile] += core_dyn[tile] * dt;
                self.stats.router_dyn_energy[tile] += router_dyn[tile] * dt;
            }
        }
        let w = ((self.now / self.window_width) as usize).min(self.cfg.queue_windows - 1);
        self.stats.queue_series[w] += q * dt;
        for (tile, slot) in self.running.iter().enumerate() {
            if slot.is_some() {
                self.busy_time[tile] += dt;
            }
        }
        self.now = t_end;
        Ok(())
    }

    fn pass_marks(&mut self, until: f64) -> Result<()> {
        while let Some(&t) = self.marks.last() {
            if t > until {
                break;
            }
            self.marks.pop();
            self.advance_to(t)?;
            if (t - self.stats.warmup_end).abs() < 1e-12 {
                self.measuring = true;
                self.stats.max_peak = self.last_peak;
            }
            if let Some(dt) = self.cfg.heatmap_interval {
                let r = t / dt;
                if dt > 0.0 && (r - r.round()).abs() < 1e-9 {
                    self.heatmaps.push((t, self.field.temps().to_vec()));
                }
            }
        }
        Ok(())
    }

    fn decide<S: Scheduler + ?Sized>(&mut self, scheduler: &mut S, trigger: EventKind) -> Result<()> {
        let state = self.snapshot();
        let closed = self.close_pending(Some(&state));
        let utilization = self.utilization();
        let partner_cores: Vec<usize> = self.pair_candidates().iter().map(|c| c.core).collect();
        let action = {
            let ctx = DecisionContext {
                now: self.now,
                trigger,
                mesh: &self.cfg.mesh,
                levels: &self.cfg.levels,
                state: &state,
                utilization: &utilization,
                partner_cores: &partner_cores,
                transition: closed.as_ref(),
            };
            scheduler.decide(&ctx, &mut self.streams.scheduler)?
        };
        if let (true, Some(rec)) = (self.cfg.record_transitions, closed) {
            self.transitions.push(rec);
        }
        let queue_len = state.queue_len();
        self.pending = Some(Pending {
            k: self.stats.decisions,
            time: self.now,
            trigger,
            state,
            action,
            peak: self.last_peak,
            queue_len,
            start_margin: self.last_margin,
        });
        self.reward_acc = 0.0;
        self.stats.decisions += 1;
        self.assign_task(action)
    }

    fn close_pending(&mut self, next: Option<&SystemState>) -> Option<TransitionRecord> {
        let p = self.pending.take()?;
        let elapsed = self.now - p.time;
        let reward = match self.cfg.reward_mode {
            RewardMode::Integral => self.reward_acc,
            RewardMode::PointSample => p.start_margin * elapsed,
        };
        self.trace.push(TraceRow {
            k: p.k,
            time: p.time,
            event_kind: p.trigger,
            action_core: p.action.core,
            action_level: p.action.level,
            reward,
            dt: elapsed,
            peak: p.peak,
            queue_len: p.queue_len,
        });
        next.map(|to| TransitionRecord { from: p.state, action: p.action, to: to.clone(), reward, elapsed })
    }

    fn assign_task(&mut self, action: Action) -> Result<()> {
        let Some(core) = action.core else {
            return Ok(());
        };
        self.cfg.mesh.check(core)?;
        self.cfg.levels.get(action.level)?;
        if self.running[core].is_some() {
            return Err(Error::IllegalAction(core));
        }
        let Some(mut task) = self.queue.pop_front() else {
            return Ok(());
        };
        let candidates = self.pair_candidates();
        let pairing = self.cfg.pairing.try_pair(core, &candidates, &self.cfg.mesh, &mut self.streams.pairing)?;
        task.start = Some(self.now);
        task.core = Some(core);
        task.level = Some(action.level);
        task.exec_time = self.cfg.table.exec_time(task.kind, action.level, &self.cfg.levels)?;
        task.service_time = total_service_time(task.exec_time, pairing.as_ref());
        if let Some(p) = &pairing {
            let id = self.next_link;
            self.next_link += 1;
            self.links.push(Link { id, a: task.id, b: p.partner, injection: p.injection_rate, route: p.route.clone() });
            self.refresh_injection();
            self.schedule(self.now + p.duration, Payload::LinkEnd { link: id });
        }
        task.pairing = pairing;
        self.schedule(self.now + task.service_time, Payload::Departure { core, task: task.id });
        self.running[core] = Some(task);
        Ok(())
    }

    fn drop_links(&mut self, keep: impl Fn(&Link) -> bool) {
        let before = self.links.len();
        self.links.retain(keep);
        if self.links.len() != before {
            self.refresh_injection();
        }
    }

    /// Runs to the horizon or the decision budget.
    pub fn run<S: Scheduler + ?Sized>(mut self, scheduler: &mut S) -> Result<SimOutput> {
        scheduler.begin_run();
        self.schedule_arrival()?;
        if let Some(q) = self.cfg.quota {
            self.schedule(q, Payload::QuotaTick);
        }
        let horizon = self.cfg.horizon;
        let continuous = self.cfg.quota.is_none();
        loop {
            if self.cfg.decision_budget.is_some_and(|b| self.stats.decisions >= b) {
                break;
            }
            let Some(ev) = self.calendar.pop() else { break };
            if ev.time > horizon {
                self.pass_marks(horizon)?;
                self.advance_to(horizon)?;
                break;
            }
            if ev.time < self.now {
                return Err(Error::Config(format!("event at {} precedes clock {}", ev.time, self.now)));
            }
            self.pass_marks(ev.time)?;
            self.advance_to(ev.time)?;
            match ev.payload {
                Payload::Arrival { kind } => {
                    let id = self.next_task;
                    self.next_task += 1;
                    self.queue.push_back(TaskInstance::new(id, kind, self.now));
                    self.stats.arrivals += 1;
                    self.schedule_arrival()?;
                    if continuous && self.has_idle() {
                        self.decide(scheduler, EventKind::TaskArrival)?;
                    }
                }
                Payload::Departure { core, task } => {
                    let t = self.running[core].take().filter(|t| t.id == task).ok_or_else(|| {
                        Error::Config(format!("departure of task {task} from core {core} with no such task"))
                    })?;
                    self.drop_links(|l| l.a != task && l.b != task);
                    self.stats.departures += 1;
                    self.stats.completed.push(CompletedTask {
                        id: t.id,
                        kind: t.kind,
                        core,
                        level: t.level.unwrap_or(0),
                        arrival: t.arrival,
                        start: t.start.unwrap_or(t.arrival),
                        departure: self.now,
                        exec_time: t.exec_time,
                        busy_time: t.service_time,
                        paired: t.pairing.is_some(),
                    });
                    if continuous && !self.queue.is_empty() {
                        self.decide(scheduler, EventKind::TaskDeparture)?;
                    }
                }
                Payload::QuotaTick => {
                    while !self.queue.is_empty() && self.has_idle() {
                        let waiting = self.queue.len();
                        self.decide(scheduler, EventKind::QuotaTick)?;
                        if self.queue.len() == waiting {
                            break;
                        }
                    }
                    let q = self.cfg.quota.unwrap_or(horizon);
                    self.schedule(ev.time + q, Payload::QuotaTick);
                }
                Payload::LinkEnd { link } => self.drop_links(|l| l.id != link),
            }
        }
        self.close_pending(None);
        self.stats.end_time = self.now;
        for v in &mut self.stats.queue_series {
            *v /= self.window_width;
        }
        Ok(SimOutput {
            trace: self.trace,
            transitions: self.transitions,
            stats: self.stats,
            heatmaps: self.heatmaps,
            final_field: self.field,
        })
    }
}

/// Convenience wrapper: one run of `scheduler` on `cfg` with `seed`.
pub fn run<S: Scheduler + ?Sized>(cfg: &SimConfig, scheduler: &mut S, seed: u64) -> Result<SimOutput> {
    Simulation::new(cfg, seed)?.run(scheduler)
}
