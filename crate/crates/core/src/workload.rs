//! Stochastic task stream: Poisson arrivals over a table of task types,
//! frequency-scaled execution times and random pairings.

use std::io::Read;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::levels::VfLevels;
use crate::topology::{Mesh, Route};

const DEFAULT_TABLE: &str = include_str!("../data/task_types.csv");

/// Aggregate arrival rate of the shipped table (29 types at 0.29 tasks/s).
pub const DEFAULT_TOTAL_RATE: f64 = 8.41;

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TaskType {
    pub type_id: u32,
    pub subtype_id: u32,
    /// Pure execution time at the highest frequency, seconds.
    pub base_time_s: f64,
    /// Poisson arrival rate, tasks per second.
    pub arrival_rate: f64,
}

/// Task types with their base execution times and arrival rates.
#[derive(Debug, Clone)]
pub struct TaskTypeTable {
    types: Vec<TaskType>,
    picker: WeightedIndex<f64>,
}

impl TaskTypeTable {
    pub fn new(types: Vec<TaskType>) -> Result<Self> {
        if types.is_empty() {
            return Err(Error::Config("task type table is empty".into()));
        }
        for t in &types {
            if !(t.base_time_s > 0.0 && t.base_time_s.is_finite()) {
                return Err(Error::Config(format!(
                    "task type {}.{} has non-positive base time {}",
                    t.type_id, t.subtype_id, t.base_time_s
                )));
            }
            if !(t.arrival_rate >= 0.0 && t.arrival_rate.is_finite()) {
                return Err(Error::InvalidRate(t.arrival_rate));
            }
        }
        let total: f64 = types.iter().map(|t| t.arrival_rate).sum();
        if total <= 0.0 {
            return Err(Error::InvalidRate(total));
        }
        let picker = WeightedIndex::new(types.iter().map(|t| t.arrival_rate))
            .map_err(|e| Error::Config(format!("task rates: {e}")))?;
        Ok(Self { types, picker })
    }

    /// The shipped 29-type table.
    pub fn standard() -> Self {
        Self::from_reader(DEFAULT_TABLE.as_bytes()).expect("shipped task table is valid")
    }

    /// Reads `type_id,subtype_id,base_time_s,arrival_rate` rows with a header.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
        let types = rdr.deserialize().collect::<std::result::Result<Vec<TaskType>, _>>()?;
        Self::new(types)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn types(&self) -> &[TaskType] {
        &self.types
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn total_rate(&self) -> f64 {
        self.types.iter().map(|t| t.arrival_rate).sum()
    }

    /// Rescales every per-type rate so the aggregate equals `total`.
    pub fn with_total_rate(&self, total: f64) -> Result<Self> {
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidRate(total));
        }
        let scale = total / self.total_rate();
        Self::new(
            self.types
                .iter()
                .map(|t| TaskType { arrival_rate: t.arrival_rate * scale, ..t.clone() })
                .collect(),
        )
    }

    /// Rate-weighted mean base execution time.
    pub fn mean_base_time(&self) -> f64 {
        let total = self.total_rate();
        self.types.iter().map(|t| t.base_time_s * t.arrival_rate).sum::<f64>() / total
    }

    pub fn min_base_time(&self) -> f64 {
        self.types.iter().map(|t| t.base_time_s).fold(f64::INFINITY, f64::min)
    }

    /// Samples the next interarrival time of the aggregate Poisson stream and
    /// the type of the arriving task.
    pub fn next_arrival<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(f64, usize)> {
        let dt = sample_interarrival(self.total_rate(), rng)?;
        Ok((dt, self.picker.sample(rng)))
    }

    /// Pure execution time of type `task` at V-F level `level`.
    pub fn exec_time(&self, task: usize, level: usize, levels: &VfLevels) -> Result<f64> {
        let base = self
            .types
            .get(task)
            .ok_or_else(|| Error::Config(format!("unknown task type index {task}")))?
            .base_time_s;
        let f = levels.get(level)?.ghz;
        Ok(base * levels.max().ghz / f)
    }
}

pub fn sample_interarrival<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<f64> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidRate(rate));
    }
    Ok(Exp::new(rate).map_err(|_| Error::InvalidRate(rate))?.sample(rng))
}

/// An inter-task communication link between two running tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct Pairing {
    pub partner: u64,
    /// Seconds of communication.
    pub duration: f64,
    /// Normalized traffic intensity in `[0, 1]`.
    pub injection_rate: f64,
    /// Routers carrying the traffic, from the new task's core to the partner's.
    pub route: Route,
}

/// One job moving through the system.
#[derive(Debug, Clone)]
pub struct TaskInstance {
    pub id: u64,
    /// Index into the task type table.
    pub kind: usize,
    pub arrival: f64,
    pub start: Option<f64>,
    pub core: Option<usize>,
    pub level: Option<usize>,
    pub pairing: Option<Pairing>,
    /// Pure execution time at the assigned level.
    pub exec_time: f64,
    /// Execution plus communication time.
    pub service_time: f64,
}

impl TaskInstance {
    pub fn new(id: u64, kind: usize, arrival: f64) -> Self {
        Self {
            id,
            kind,
            arrival,
            start: None,
            core: None,
            level: None,
            pairing: None,
            exec_time: 0.0,
            service_time: 0.0,
        }
    }
}

/// A running task that may accept a pairing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCandidate {
    pub task: u64,
    pub core: usize,
}

/// Pairing parameters of the workload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairingModel {
    /// Probability that a newly placed task tries to pair.
    pub probability: f64,
    /// Rate of the exponential communication duration, 1/s.
    pub comm_rate: f64,
}

impl PairingModel {
    /// Attempts to pair a task just placed on `core` with one of the unpaired
    /// running `candidates`.
    ///
    /// Exactly one uniform draw is consumed when no pairing is attempted, so the
    /// random stream stays aligned across schedulers that see the same
    /// candidate sets.
    pub fn try_pair<R: Rng + ?Sized>(
        &self,
        core: usize,
        candidates: &[PairCandidate],
        mesh: &Mesh,
        rng: &mut R,
    ) -> Result<Option<Pairing>> {
        let attempt = rng.random::<f64>() < self.probability;
        if !attempt || candidates.is_empty() {
            return Ok(None);
        }
        let partner = candidates[rng.random_range(0..candidates.len())];
        let duration = Exp::new(self.comm_rate)
            .map_err(|_| Error::InvalidRate(self.comm_rate))?
            .sample(rng);
        let injection_rate = rng.random::<f64>();
        let route = mesh.xy_route(core, partner.core)?;
        Ok(Some(Pairing { partner: partner.task, duration, injection_rate, route }))
    }
}

/// Execution time plus communication time, if paired.
pub fn total_service_time(exec_time: f64, pairing: Option<&Pairing>) -> f64 {
    exec_time + pairing.map_or(0.0, |p| p.duration)
}
