use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use thermosched_core::experiment::aggregate;
use thermosched_core::features::{dvfs_features, normalize_temp, DistanceScaling, FeatureOptions};
use thermosched_core::metrics::{summarize, RunMeta};
use thermosched_core::schedulers::{RandScheduler, TboScheduler};
use thermosched_core::sim::{run, SimConfig};
use thermosched_core::thermal::{PowerParams, ThermalModel};
use thermosched_core::topology::Point;
use thermosched_core::{Mesh, RbfBank, ThermalParams, VfLevels};

fn mesh_and_tiles() -> impl Strategy<Value = (Mesh, usize, usize)> {
    (2usize..8, 2usize..8).prop_flat_map(|(r, c)| {
        let m = r * c;
        (Just(Mesh::new(r, c).unwrap()), 0..m, 0..m)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn neighbor_counts_between_two_and_four((mesh, t, _) in mesh_and_tiles()) {
        let n = mesh.neighbors(t).count();
        prop_assert!((2..=4).contains(&n));
        prop_assert_eq!(mesh.len(), mesh.rows() * mesh.cols());
    }

    #[test]
    fn routes_are_shortest_lateral_paths((mesh, src, dst) in mesh_and_tiles()) {
        let route = mesh.xy_route(src, dst).unwrap();
        let (sc, sr) = mesh.col_row(src);
        let (dc, dr) = mesh.col_row(dst);
        prop_assert_eq!(route.len(), sc.abs_diff(dc) + sr.abs_diff(dr) + 1);
        prop_assert_eq!(route.source(), src);
        prop_assert_eq!(route.destination(), dst);
        for w in route.routers().windows(2) {
            prop_assert!(mesh.neighbors(w[0]).any(|n| n == w[1]));
        }
    }

    #[test]
    fn interpolation_stays_within_field(
        (rows, cols) in (2usize..7, 2usize..7),
        seed in any::<u64>(),
    ) {
        let mesh = Mesh::new(rows, cols).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let temps: Vec<f64> = (0..mesh.len()).map(|_| rand::Rng::random_range(&mut rng, 320.0..370.0)).collect();
        let lo = temps.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = temps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for v in mesh.interpolate_grid(&temps).unwrap() {
            prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
        }
    }

    #[test]
    fn point_distance_triangle_inequality(
        (mesh, t, _) in mesh_and_tiles(),
        a in (0.0f64..8.0, 0.0f64..8.0),
        b in (0.0f64..8.0, 0.0f64..8.0),
    ) {
        let p = Point { x: a.0, y: a.1 };
        let q = Point { x: b.0, y: b.1 };
        let via = mesh.dist_from_point(t, q).unwrap() + q.distance(&p);
        prop_assert!(mesh.dist_from_point(t, p).unwrap() <= via + 1e-12);
    }

    #[test]
    fn normalized_temperature_in_unit_interval(t in 200.0f64..500.0) {
        let v = normalize_temp(t);
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn dvfs_features_fill_one_block(
        state in prop::array::uniform9(0.0f64..1.0),
        x in prop::sample::select(vec![2usize, 3]),
        action in 0usize..12,
        normalize in any::<bool>(),
    ) {
        let bank = RbfBank::standard(x).unwrap();
        let opts = FeatureOptions { normalize, scaling: DistanceScaling::PerDimMean };
        let phi = dvfs_features(&state, action, &bank, 12, opts).unwrap();
        let g = bank.grid_size(9);
        prop_assert_eq!(phi.dim(), 12 * g);
        prop_assert_eq!(phi.offset(), action * g);
        prop_assert_eq!(phi.values().len(), g);
        prop_assert!(phi.values().iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn activation_sum_is_continuous(v in 0.0f64..1.0, x in prop::sample::select(vec![2usize, 3, 5])) {
        let bank = RbfBank::standard(x).unwrap();
        let sum = |u: f64| bank.activations(u).iter().sum::<f64>();
        let h = 1e-7;
        prop_assert!((sum(v + h) - sum(v)).abs() < 1e-3 * sum(v).max(1.0));
    }

    #[test]
    fn noiseless_temperatures_stay_in_envelope(seed in any::<u64>(), level in 0usize..4) {
        let mesh = Mesh::new(3, 4).unwrap();
        let params = ThermalParams { sigma: 0.0, ..ThermalParams::default() };
        let mut model = ThermalModel::new(&mesh, params.clone()).unwrap();
        let levels = VfLevels::standard();
        let pw = PowerParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut field = model.ambient_field();
        let p_max = pw.tile_power(true, 3, 1.0, &levels).unwrap();
        for _ in 0..20 {
            let powers: Vec<f64> = (0..mesh.len())
                .map(|_| {
                    let busy = rand::Rng::random::<bool>(&mut rng);
                    pw.tile_power(busy, level, rand::Rng::random::<f64>(&mut rng), &levels).unwrap()
                })
                .collect();
            model.advance(&mut field, &powers, 2.0, &mut rng).unwrap();
            let cap = params.ambient + params.r_vert * p_max * (1 + mesh.len()) as f64;
            prop_assert!(field.temps().iter().all(|&t| t >= params.ambient - 1.0 && t <= cap));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn simulation_invariants(seed in any::<u64>(), rate in 1.0f64..14.0, quota in any::<bool>()) {
        let mut cfg = SimConfig::standard(Mesh::new(3, 3).unwrap());
        cfg.horizon = 15.0;
        cfg.record_transitions = true;
        cfg.table = cfg.table.with_total_rate(rate).unwrap();
        if quota {
            cfg.quota = Some(0.1);
        }
        let out = run(&cfg, &mut RandScheduler { level: 2 }, seed).unwrap();
        for w in out.trace.windows(2) {
            prop_assert!(w[1].time >= w[0].time);
        }
        for tr in &out.transitions {
            prop_assert!(tr.elapsed >= 0.0);
            prop_assert!(tr.reward >= 0.0);
            prop_assert!(tr.reward <= cfg.threshold * tr.elapsed + 1e-9);
            if let Some(core) = tr.action.core {
                prop_assert!(!tr.from.busy[core]);
            }
        }
        let s = &out.stats;
        prop_assert_eq!(s.completed.len() as u64, s.departures);
        prop_assert!(s.departures <= s.arrivals);
        for t in &s.completed {
            prop_assert!(t.arrival <= t.start && t.start <= t.departure);
            prop_assert!((t.departure - t.start - t.busy_time).abs() < 1e-9);
        }
        let summary = summarize(s, &RunMeta { scheduler: "rand".into(), mesh: cfg.mesh.clone(), lambda: rate, seed });
        prop_assert!(summary.avg_peak_k >= cfg.thermal.ambient - 1.0);
        prop_assert!(summary.avg_peak_k <= summary.max_peak_k + 1e-9);
        if let (Some(svc), Some(exec)) = (summary.avg_service_s, summary.avg_exec_s) {
            prop_assert!(svc >= exec - 1e-12);
        }
        let tiles: f64 = summary.tile_dyn_power_w.iter().sum::<f64>() * s.measured_span();
        prop_assert!((tiles - summary.total_dyn_energy_j).abs() <= 1e-6 * summary.total_dyn_energy_j.max(1.0));
    }

    #[test]
    fn aggregation_ignores_run_order(seed in any::<u64>()) {
        let mut cfg = SimConfig::standard(Mesh::new(2, 3).unwrap());
        cfg.horizon = 10.0;
        let mut summaries = Vec::new();
        for (i, name) in ["rand", "tbo"].into_iter().enumerate() {
            for s in 0..3u64 {
                let seed = seed.wrapping_add(s);
                let out = if i == 0 {
                    run(&cfg, &mut RandScheduler { level: 2 }, seed).unwrap()
                } else {
                    run(&cfg, &mut TboScheduler { level: 2 }, seed).unwrap()
                };
                let meta = RunMeta { scheduler: name.into(), mesh: cfg.mesh.clone(), lambda: 8.41, seed };
                summaries.push(summarize(&out.stats, &meta));
            }
        }
        let forward = aggregate(&summaries);
        summaries.reverse();
        summaries.swap(1, 4);
        prop_assert_eq!(forward, aggregate(&summaries));
    }
}
