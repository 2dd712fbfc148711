//! Run summaries and the statistics used to compare schedulers.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::sim::RunStats;
use crate::topology::Mesh;

/// Post-warm-up figures of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scheduler: String,
    pub mesh: String,
    pub lambda: f64,
    pub seed: u64,
    /// Time average of the instantaneous peak temperature, K.
    pub avg_peak_k: f64,
    /// Mean arrival-to-completion time, s; absent without completed tasks.
    pub avg_service_s: Option<f64>,
    pub total_dyn_energy_j: f64,
    pub mean_queue_len: f64,
    /// Time-averaged dynamic power per tile, W.
    pub tile_dyn_power_w: Vec<f64>,
    pub decisions: u64,
    pub completed: usize,
    pub max_peak_k: f64,
    /// Mean pure execution time of the completed tasks, s.
    pub avg_exec_s: Option<f64>,
}

impl RunSummary {
    pub fn mean_dyn_power(&self, tiles: &[usize]) -> f64 {
        tiles.iter().map(|&t| self.tile_dyn_power_w[t]).sum::<f64>() / tiles.len() as f64
    }
}

/// Identifying fields attached to a summary.
#[derive(Debug, Clone)]
pub struct RunMeta {
    pub scheduler: String,
    pub mesh: Mesh,
    pub lambda: f64,
    pub seed: u64,
}

pub fn summarize(stats: &RunStats, meta: &RunMeta) -> RunSummary {
    let span = stats.measured_span();
    let tasks: Vec<_> = stats.measured_tasks().collect();
    let (service, exec) = if tasks.is_empty() {
        (None, None)
    } else {
        let n = tasks.len() as f64;
        (
            Some(tasks.iter().map(|t| t.response_time()).sum::<f64>() / n),
            Some(tasks.iter().map(|t| t.exec_time).sum::<f64>() / n),
        )
    };
    let tile_energy: Vec<f64> =
        stats.core_dyn_energy.iter().zip(&stats.router_dyn_energy).map(|(c, r)| c + r).collect();
    let per = |v: f64| if span > 0.0 { v / span } else { 0.0 };
    RunSummary {
        scheduler: meta.scheduler.clone(),
        mesh: format!("{}x{}", meta.mesh.rows(), meta.mesh.cols()),
        lambda: meta.lambda,
        seed: meta.seed,
        avg_peak_k: per(stats.peak_integral),
        avg_service_s: service,
        total_dyn_energy_j: tile_energy.iter().sum(),
        mean_queue_len: per(stats.queue_integral),
        tile_dyn_power_w: tile_energy.iter().map(|&e| per(e)).collect(),
        decisions: stats.decisions,
        completed: tasks.len(),
        max_peak_k: stats.max_peak,
        avg_exec_s: exec,
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two samples.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Mean and half-width of the two-sided t confidence interval at `level`.
pub fn mean_ci(xs: &[f64], level: f64) -> (f64, f64) {
    let n = xs.len();
    if n < 2 {
        return (if n == 1 { xs[0] } else { f64::NAN }, f64::INFINITY);
    }
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid dof").inverse_cdf(0.5 + level / 2.0);
    (mean(xs), t * (variance(xs) / n as f64).sqrt())
}

/// Confidence interval of the mean paired difference `a − b`.
pub fn paired_diff_ci(a: &[f64], b: &[f64], level: f64) -> (f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    mean_ci(&d, level)
}

/// True when `a` is below `b` with the paired interval excluding zero.
pub fn significantly_less(a: &[f64], b: &[f64], level: f64) -> bool {
    let (m, h) = paired_diff_ci(a, b, level);
    m + h < 0.0
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let en = (n * m / (n + m)).sqrt();
    (d, kolmogorov_q((en + 0.12 + 0.11 / en) * d))
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = sign * (-2.0 * (k as f64 * lambda).powi(2)).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Sample variance of each consecutive window of `window` values; a trailing
/// partial window is dropped.
pub fn convergence_stats(history: &[f64], window: usize) -> Vec<f64> {
    if window == 0 {
        return Vec::new();
    }
    history.chunks_exact(window).map(variance).collect()
}

/// Mean windowed variance of the first and last quarter of the windows.
pub fn quartile_variances(variances: &[f64]) -> Option<(f64, f64)> {
    let q = variances.len() / 4;
    if q == 0 {
        return None;
    }
    Some((mean(&variances[..q]), mean(&variances[variances.len() - q..])))
}
