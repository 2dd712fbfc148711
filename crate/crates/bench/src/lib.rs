//! Shared fixtures for the benchmarks.

use thermosched_core::sim::SimConfig;
use thermosched_core::Mesh;

/// A smooth, deterministic temperature field with a hot spot near the center.
pub fn sample_temps(mesh: &Mesh) -> Vec<f64> {
    let c = mesh.center();
    (0..mesh.len())
        .map(|t| {
            let p = mesh.position(t);
            let d = p.distance(&c);
            352.0 - 4.0 * d + ((t * 7) % 5) as f64 * 0.3
        })
        .collect()
}

/// Default simulator settings on a `rows × cols` mesh with a short horizon.
pub fn short_run(rows: usize, cols: usize, horizon: f64) -> SimConfig {
    let mut cfg = SimConfig::standard(Mesh::new(rows, cols).expect("valid mesh"));
    cfg.horizon = horizon;
    cfg
}
