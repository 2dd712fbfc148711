//! Tile power model and a lumped RC thermal lattice.
//!
//! Every tile (core plus its router) is one thermal node with heat capacity
//! `C`, a vertical path to ambient through `R_vert`, lateral coupling to each
//! mesh neighbour through `R_lat` and, optionally, a path to ambient through
//! `R_edge` for every chip edge it touches. The lattice is integrated with
//! explicit Euler; a Gaussian perturbation of variance `σ²·h` per step of
//! length `h` models unexplained thermal uncertainty.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levels::VfLevels;
use crate::topology::Mesh;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerParams {
    /// Core leakage, W.
    pub core_static: f64,
    /// Core dynamic power at the top V-F level, W.
    pub core_dynamic_max: f64,
    pub router_static: f64,
    /// Router dynamic power at full injection, W.
    pub router_dynamic_max: f64,
}

impl Default for PowerParams {
    fn default() -> Self {
        Self { core_static: 2.0, core_dynamic_max: 14.0, router_static: 0.5, router_dynamic_max: 3.0 }
    }
}

impl PowerParams {
    pub fn core_dynamic(&self, busy: bool, level: usize, levels: &VfLevels) -> Result<f64> {
        let ratio = levels.dynamic_ratio(level)?;
        Ok(if busy { self.core_dynamic_max * ratio } else { 0.0 })
    }

    pub fn router_dynamic(&self, injection_sum: f64) -> f64 {
        self.router_dynamic_max * injection_sum.clamp(0.0, 1.0)
    }

    /// Total tile power: static core and router terms, core dynamic power
    /// scaled by `V²f` when busy, router dynamic power by traffic.
    pub fn tile_power(&self, busy: bool, level: usize, injection_sum: f64, levels: &VfLevels) -> Result<f64> {
        Ok(self.core_static
            + self.core_dynamic(busy, level, levels)?
            + self.router_static
            + self.router_dynamic(injection_sum))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalParams {
    pub ambient: f64,
    /// K/W, tile to ambient through the package.
    pub r_vert: f64,
    /// K/W, between neighbouring tiles.
    pub r_lat: f64,
    /// K/W, per chip edge touched by a tile; `None` makes edges adiabatic.
    pub r_edge: Option<f64>,
    /// J/K per tile.
    pub capacitance: f64,
    /// Integration step, seconds.
    pub step: f64,
    /// Perturbation strength, K/√s.
    pub sigma: f64,
}

impl Default for ThermalParams {
    fn default() -> Self {
        Self {
            ambient: 326.0,
            r_vert: 3.0,
            r_lat: 4.0,
            r_edge: Some(2.0),
            capacitance: 2.0,
            step: 1e-3,
            sigma: 0.05,
        }
    }
}

impl ThermalParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("ambient", self.ambient),
            ("r_vert", self.r_vert),
            ("r_lat", self.r_lat),
            ("capacitance", self.capacitance),
            ("step", self.step),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || v.is_nan() {
                return Err(Error::Config(format!("thermal.{name} must be positive, got {v}")));
            }
        }
        if let Some(r) = self.r_edge {
            if !(r > 0.0) {
                return Err(Error::Config(format!("thermal.r_edge must be positive, got {r}")));
            }
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("thermal.sigma must be non-negative, got {}", self.sigma)));
        }
        if self.step >= self.capacitance * self.r_vert / 2.0 {
            return Err(Error::Config(format!(
                "thermal.step {} s is unstable: must be below C·R_vert/2 = {} s",
                self.step,
                self.capacitance * self.r_vert / 2.0
            )));
        }
        let edge = self.r_edge.map_or(0.0, |r| 1.0 / r);
        let worst = 1.0 / self.r_vert + 4.0 * (1.0 / self.r_lat).max(edge);
        if self.step * worst / self.capacitance >= 1.0 {
            return Err(Error::Config(format!(
                "thermal.step {} s is unstable for the lateral coupling (limit {} s)",
                self.step,
                self.capacitance / worst
            )));
        }
        Ok(())
    }
}

/// Per-tile temperatures in Kelvin.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalField {
    temps: Vec<f64>,
    ambient: f64,
}

impl ThermalField {
    pub fn uniform(tiles: usize, temp: f64, ambient: f64) -> Self {
        Self { temps: vec![temp; tiles], ambient }
    }

    pub fn from_temps(temps: Vec<f64>, ambient: f64) -> Self {
        Self { temps, ambient }
    }

    pub fn temps(&self) -> &[f64] {
        &self.temps
    }

    pub fn ambient(&self) -> f64 {
        self.ambient
    }

    pub fn len(&self) -> usize {
        self.temps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.temps.is_empty()
    }

    pub fn peak(&self) -> f64 {
        peak_temperature(&self.temps)
    }

    /// Hottest tile, lowest index on ties.
    pub fn hotspot(&self) -> usize {
        let mut best = 0;
        for (i, &t) in self.temps.iter().enumerate() {
            if t > self.temps[best] {
                best = i;
            }
        }
        best
    }
}

pub fn peak_temperature(temps: &[f64]) -> f64 {
    temps.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Chip-wide margin `max(T_th − peak, 0)`.
pub fn temperature_margin(peak: f64, threshold: f64) -> f64 {
    (threshold - peak).max(0.0)
}

/// Precomputed lattice for one mesh.
#[derive(Debug, Clone)]
pub struct ThermalModel {
    params: ThermalParams,
    neighbors: Vec<Vec<usize>>,
    edge_conductance: Vec<f64>,
    scratch: Vec<f64>,
}

impl ThermalModel {
    pub fn new(mesh: &Mesh, params: ThermalParams) -> Result<Self> {
        params.validate()?;
        let neighbors = (0..mesh.len()).map(|t| mesh.neighbors(t).collect()).collect();
        let edge_conductance = (0..mesh.len())
            .map(|t| params.r_edge.map_or(0.0, |r| mesh.boundary_sides(t) as f64 / r))
            .collect();
        Ok(Self { params, neighbors, edge_conductance, scratch: vec![0.0; mesh.len()] })
    }

    pub fn params(&self) -> &ThermalParams {
        &self.params
    }

    pub fn ambient_field(&self) -> ThermalField {
        ThermalField::uniform(self.neighbors.len(), self.params.ambient, self.params.ambient)
    }

    /// Advances `field` by `dt` seconds under constant `powers`, in
    /// `ceil(dt / step)` equal substeps.
    pub fn advance<R: Rng + ?Sized>(
        &mut self,
        field: &mut ThermalField,
        powers: &[f64],
        dt: f64,
        rng: &mut R,
    ) -> Result<()> {
        if powers.len() != field.len() || field.len() != self.neighbors.len() {
            return Err(Error::Dimension { expected: self.neighbors.len(), got: powers.len().min(field.len()) });
        }
        if dt <= 0.0 {
            return Ok(());
        }
        let n = ((dt / self.params.step) - 1e-9).ceil().max(1.0) as usize;
        let h = dt / n as f64;
        for _ in 0..n {
            self.substep(field, powers, h, rng);
        }
        Ok(())
    }

    /// One explicit-Euler step of length `h ≤ step`.
    pub fn substep<R: Rng + ?Sized>(&mut self, field: &mut ThermalField, powers: &[f64], h: f64, rng: &mut R) {
        let p = &self.params;
        let g_vert = 1.0 / p.r_vert;
        let g_lat = 1.0 / p.r_lat;
        let temps = &field.temps;
        for (m, slot) in self.scratch.iter_mut().enumerate() {
            let c = temps[m];
            let lateral: f64 = self.neighbors[m].iter().map(|&n| c - temps[n]).sum::<f64>() * g_lat;
            let to_ambient = (c - p.ambient) * (g_vert + self.edge_conductance[m]);
            *slot = c + (h / p.capacitance) * (powers[m] - to_ambient - lateral);
        }
        if p.sigma > 0.0 {
            let scale = p.sigma * h.sqrt();
            for slot in self.scratch.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *slot += scale * z;
            }
        }
        field.temps.copy_from_slice(&self.scratch);
    }
}

/// Pure form of [`ThermalModel::advance`].
pub fn step_thermal<R: Rng + ?Sized>(
    mesh: &Mesh,
    field: &ThermalField,
    powers: &[f64],
    params: &ThermalParams,
    dt: f64,
    rng: &mut R,
) -> Result<ThermalField> {
    let mut model = ThermalModel::new(mesh, *params)?;
    let mut next = field.clone();
    model.advance(&mut next, powers, dt, rng)?;
    Ok(next)
}

/// Writes one snapshot as `rows` lines of space-separated Kelvin values,
/// followed by a blank separator line.
pub fn write_heatmap<W: Write>(out: &mut W, mesh: &Mesh, temps: &[f64]) -> std::io::Result<()> {
    for r in 0..mesh.rows() {
        let line: Vec<String> = (0..mesh.cols()).map(|c| format!("{:.3}", temps[mesh.tile_at(c, r)])).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    writeln!(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quiet(params: ThermalParams) -> ThermalParams {
        ThermalParams { sigma: 0.0, ..params }
    }

    #[test]
    fn tile_power_cases() {
        let levels = VfLevels::standard();
        let pw = PowerParams::default();
        assert_eq!(pw.tile_power(false, 0, 0.0, &levels).unwrap(), 2.5);
        let low = pw.core_dynamic(true, 0, &levels).unwrap();
        let high = pw.core_dynamic(true, 3, &levels).unwrap();
        assert!((low / high - 0.81 * 2.7 / (1.44 * 3.6)).abs() < 1e-12);
        assert!((low / high - 0.4219).abs() < 1e-4);
        assert_eq!(pw.router_dynamic(2.5), 3.0);
        assert!(matches!(pw.tile_power(true, 7, 0.0, &levels), Err(Error::UnknownLevel(7))));
    }

    #[test]
    fn equilibrium_is_preserved() {
        let mesh = Mesh::new(4, 4).unwrap();
        let params = quiet(ThermalParams::default());
        let field = ThermalField::uniform(16, params.ambient, params.ambient);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let next = step_thermal(&mesh, &field, &[0.0; 16], &params, 2.0, &mut rng).unwrap();
        assert_eq!(next, field);
    }

    #[test]
    fn uniform_field_has_no_lateral_flow() {
        let mesh = Mesh::new(3, 4).unwrap();
        let params = quiet(ThermalParams { r_edge: None, ..ThermalParams::default() });
        let field = ThermalField::uniform(12, 340.0, params.ambient);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let next = step_thermal(&mesh, &field, &[0.0; 12], &params, 0.01, &mut rng).unwrap();
        let first = next.temps()[0];
        assert!(first < 340.0);
        assert!(next.temps().iter().all(|&t| (t - first).abs() < 1e-12));
    }

    #[test]
    fn isolated_tile_fixed_point() {
        // Lateral coupling removed: every tile obeys C·dT/dt = P − (T − T_amb)/R_vert.
        let mesh = Mesh::new(2, 2).unwrap();
        let params = quiet(ThermalParams { r_lat: f64::INFINITY, r_edge: None, ..ThermalParams::default() });
        let mut model = ThermalModel::new(&mesh, params).unwrap();
        let mut field = model.ambient_field();
        let powers = [5.0, 0.0, 0.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        model.advance(&mut field, &powers, 120.0, &mut rng).unwrap();
        let expected = params.ambient + 5.0 * params.r_vert;
        assert!((field.temps()[0] - expected).abs() < 0.1);
        assert!((field.temps()[1] - params.ambient).abs() < 1e-12);
    }

    #[test]
    fn unstable_step_rejected() {
        let mesh = Mesh::new(2, 2).unwrap();
        let params = ThermalParams { step: 3.5, ..ThermalParams::default() };
        assert!(matches!(ThermalModel::new(&mesh, params), Err(Error::Config(_))));
        let params = ThermalParams { step: 0.9, ..ThermalParams::default() };
        assert!(matches!(ThermalModel::new(&mesh, params), Err(Error::Config(_))));
        let params = ThermalParams { capacitance: 0.0, ..ThermalParams::default() };
        assert!(ThermalModel::new(&mesh, params).is_err());
    }

    #[test]
    fn peak_and_margin() {
        assert_eq!(peak_temperature(&[340.0, 350.0, 345.0]), 350.0);
        assert_eq!(peak_temperature(&[340.0; 3]), 340.0);
        assert_eq!(peak_temperature(&[345.0, 340.0, 350.0]), 350.0);
        assert_eq!(temperature_margin(350.0, 358.0), 8.0);
        assert_eq!(temperature_margin(360.0, 358.0), 0.0);
        assert_eq!(temperature_margin(358.0, 358.0), 0.0);
    }

    #[test]
    fn hotspot_ties_go_to_lowest_index() {
        let f = ThermalField::from_temps(vec![330.0, 340.0, 340.0, 335.0], 318.0);
        assert_eq!(f.hotspot(), 1);
    }

    #[test]
    fn steady_state_energy_balance() {
        let mesh = Mesh::new(4, 4).unwrap();
        let params = quiet(ThermalParams { r_edge: None, ..ThermalParams::default() });
        let mut model = ThermalModel::new(&mesh, params).unwrap();
        let mut field = model.ambient_field();
        let powers: Vec<f64> = (0..16).map(|i| 2.5 + (i % 5) as f64 * 3.0).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        model.advance(&mut field, &powers, 200.0, &mut rng).unwrap();
        let outflow: f64 = field.temps().iter().map(|t| (t - params.ambient) / params.r_vert).sum();
        let input: f64 = powers.iter().sum();
        assert!((outflow - input).abs() / input < 0.01);

        // with edge leakage the balance includes the edge paths
        let params = quiet(ThermalParams::default());
        let mut model = ThermalModel::new(&mesh, params).unwrap();
        let mut field = model.ambient_field();
        model.advance(&mut field, &powers, 200.0, &mut rng).unwrap();
        let outflow: f64 = (0..16)
            .map(|m| {
                let excess = field.temps()[m] - params.ambient;
                excess / params.r_vert + excess * mesh.boundary_sides(m) as f64 / params.r_edge.unwrap()
            })
            .sum();
        assert!((outflow - input).abs() / input < 0.01);
    }

    #[test]
    fn bounded_envelope_without_noise() {
        let mesh = Mesh::new(4, 4).unwrap();
        let params = quiet(ThermalParams::default());
        let mut model = ThermalModel::new(&mesh, params).unwrap();
        let mut field = model.ambient_field();
        let pmax = PowerParams::default().tile_power(true, 3, 1.0, &VfLevels::standard()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let hi = params.ambient + params.r_vert * pmax + 16.0 * params.r_vert * pmax;
        for k in 0..400 {
            let powers: Vec<f64> = (0..16).map(|i| if (i + k) % 3 == 0 { pmax } else { 2.5 }).collect();
            model.advance(&mut field, &powers, 0.05, &mut rng).unwrap();
            assert!(field.temps().iter().all(|&t| t >= params.ambient && t <= hi));
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let mesh = Mesh::new(4, 4).unwrap();
        let params = ThermalParams::default();
        let run = |seed| {
            let mut model = ThermalModel::new(&mesh, params).unwrap();
            let mut field = model.ambient_field();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut trace = Vec::new();
            for k in 0..50 {
                let powers: Vec<f64> = (0..16).map(|i| ((i * 7 + k) % 11) as f64).collect();
                model.advance(&mut field, &powers, 0.013, &mut rng).unwrap();
                trace.extend_from_slice(field.temps());
            }
            trace
        };
        let a = run(9);
        let b = run(9);
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(a, run(10));
    }

    #[test]
    fn loaded_chip_calibration() {
        let mesh = Mesh::new(4, 4).unwrap();
        let params = quiet(ThermalParams::default());
        let levels = VfLevels::standard();
        let pw = PowerParams::default();
        let mut model = ThermalModel::new(&mesh, params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);

        let mut full = model.ambient_field();
        let busy = pw.tile_power(true, 3, 0.0, &levels).unwrap();
        model.advance(&mut full, &[busy; 16], 150.0, &mut rng).unwrap();
        assert!((345.0..=360.0).contains(&full.peak()), "{}", full.peak());

        let mut idle = model.ambient_field();
        model.advance(&mut idle, &[2.5; 16], 150.0, &mut rng).unwrap();
        assert!(idle.peak() < 333.0, "{}", idle.peak());

        // a busy corner runs cooler than a busy interior tile
        let single = |tile: usize, model: &mut ThermalModel, rng: &mut ChaCha8Rng| {
            let mut f = model.ambient_field();
            let mut p = vec![2.5; 16];
            p[tile] = busy;
            model.advance(&mut f, &p, 150.0, rng).unwrap();
            f.temps()[tile]
        };
        assert!(single(0, &mut model, &mut rng) < single(5, &mut model, &mut rng));
    }

    #[test]
    fn heatmap_format() {
        let mesh = Mesh::new(2, 3).unwrap();
        let mut buf = Vec::new();
        write_heatmap(&mut buf, &mesh, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "1.000 2.000 3.000\n4.000 5.000 6.000\n\n");
    }
}
