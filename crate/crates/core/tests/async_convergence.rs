use ringsum::engine::run_ai_trial;
use ringsum::metrics::full_estimates;
use ringsum::{NodeId, NoiseDistribution, NoiseSchedule, NoiseSource, ProtocolConfig};

#[test]
fn window_sums_are_unbiased_over_trials() {
    let secrets = vec![12.0, -3.5, 40.0, 7.25, 19.0];
    let total: f64 = secrets.iter().sum();
    let cfg = ProtocolConfig::uniform(
        secrets,
        NoiseSchedule::harmonic(1000.0, 1.0).unwrap(),
        NoiseDistribution::Gaussian,
        0,
        99,
    );
    let src = NoiseSource::new(cfg.seed);
    let trials = 60u32;
    let mut per_node: Vec<Vec<f64>> = vec![Vec::new(); 5];
    for t in 0..trials {
        let (run, clock) = run_ai_trial(&cfg, &src, t, 1.0, 5000.0).unwrap();
        assert!(clock.now() <= 5000.0);
        let est = full_estimates(&run);
        assert_eq!(est.len(), 5);
        for e in est {
            per_node[(e.node.0 - 1) as usize].push(e.value);
        }
    }
    for (i, ys) in per_node.iter().enumerate() {
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!(
            (mean - total).abs() <= 5.0 * se.max(1e-9),
            "node {}: mean {mean} vs {total}, se {se}",
            NodeId(i as u32 + 1)
        );
    }
}

#[test]
fn async_run_conserves_the_sum_at_every_snapshot() {
    let cfg = ProtocolConfig::uniform(
        vec![1.0, 2.0, 3.0, 4.0],
        NoiseSchedule::geometric(5.0, 0.99).unwrap(),
        NoiseDistribution::Laplace,
        0,
        3,
    );
    let src = NoiseSource::new(cfg.seed);
    for horizon in [1.0, 10.0, 100.0, 1000.0] {
        let (run, _) = run_ai_trial(&cfg, &src, 0, 2.0, horizon).unwrap();
        assert!((run.state_sum() - 10.0).abs() < 1e-9, "horizon {horizon}: {}", run.state_sum());
    }
}
