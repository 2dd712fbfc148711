use rand::Rng;

use crate::error::{Error, Result};
use crate::sim::{Action, DecisionContext, Scheduler, SimRng};
use crate::topology::Mesh;

/// Minimal-cost core: `cost = utilization / (1 + distance to the chip center)`,
/// ties to the cooler core, then the lower index.
pub fn tbo_select(idle: &[usize], utilization: &[f64], temps: &[f64], mesh: &Mesh) -> Result<usize> {
    let center = mesh.center();
    let mut best: Option<(f64, f64, usize)> = None;
    for &core in idle {
        let weight = 1.0 / (1.0 + mesh.dist_from_point(core, center)?);
        let cost = weight * utilization[core];
        let key = (cost, temps[core], core);
        let better = match best {
            None => true,
            Some(b) => key.0 < b.0 || (key.0 == b.0 && (key.1 < b.1 || (key.1 == b.1 && key.2 < b.2))),
        };
        if better {
            best = Some(key);
        }
    }
    best.map(|b| b.2).ok_or_else(|| Error::Config("no idle core to choose from".into()))
}

pub fn rand_select<R: Rng + ?Sized>(idle: &[usize], rng: &mut R) -> Result<usize> {
    if idle.is_empty() {
        return Err(Error::Config("no idle core to choose from".into()));
    }
    Ok(idle[rng.random_range(0..idle.len())])
}

#[derive(Debug, Clone)]
pub struct RandScheduler {
    pub level: usize,
}

impl Scheduler for RandScheduler {
    fn name(&self) -> &str {
        "rand"
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>, rng: &mut SimRng) -> Result<Action> {
        Ok(Action::assign(rand_select(&ctx.idle_cores(), rng)?, self.level))
    }
}

#[derive(Debug, Clone)]
pub struct TboScheduler {
    pub level: usize,
}

impl Scheduler for TboScheduler {
    fn name(&self) -> &str {
        "tbo"
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>, _rng: &mut SimRng) -> Result<Action> {
        let core = tbo_select(&ctx.idle_cores(), ctx.utilization, &ctx.state.temps, ctx.mesh)?;
        Ok(Action::assign(core, self.level))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn tbo_prefers_corner_at_equal_utilization() {
        let mesh = Mesh::new(4, 4).unwrap();
        let util = vec![0.5; 16];
        let temps = vec![340.0; 16];
        assert_eq!(tbo_select(&[5, 0], &util, &temps, &mesh).unwrap(), 0);
        let corner_cost = 0.5 / (1.0 + mesh.dist_from_point(0, mesh.center()).unwrap());
        let center_cost = 0.5 / (1.0 + mesh.dist_from_point(5, mesh.center()).unwrap());
        assert!(corner_cost < center_cost);
    }

    #[test]
    fn tbo_tie_goes_to_cooler_core() {
        let mesh = Mesh::new(4, 4).unwrap();
        let util = vec![0.3; 16];
        let mut temps = vec![340.0; 16];
        temps[3] = 335.0;
        // tiles 0 and 3 are both corners with equal weight
        assert_eq!(tbo_select(&[0, 3], &util, &temps, &mesh).unwrap(), 3);
        temps[3] = 340.0;
        assert_eq!(tbo_select(&[3, 0], &util, &temps, &mesh).unwrap(), 0);
    }

    #[test]
    fn single_idle_core() {
        let mesh = Mesh::new(3, 3).unwrap();
        assert_eq!(tbo_select(&[4], &[0.9; 9], &[330.0; 9], &mesh).unwrap(), 4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(rand_select(&[7], &mut rng).unwrap(), 7);
        assert!(rand_select(&[], &mut rng).is_err());
    }

    #[test]
    fn rand_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let idle = [1, 4, 6, 9, 11];
        let n = 20_000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            let c = rand_select(&idle, &mut rng).unwrap();
            counts[idle.iter().position(|&i| i == c).unwrap()] += 1;
        }
        let expected = n as f64 / 5.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let p = 1.0 - ChiSquared::new(4.0).unwrap().cdf(chi2);
        assert!(p > 0.001, "chi2 {chi2}, p {p}");
    }

    #[test]
    fn rand_is_deterministic() {
        let idle: Vec<usize> = (0..16).collect();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| rand_select(&idle, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(4), draw(4));
    }
}
