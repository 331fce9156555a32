use isac_twin::agent::{Controller, EnergyPumping};
use isac_twin::allocator::AllocationMode;
use isac_twin::sim::{run_episode, run_experiment, Scenario, ScenarioConfig, SensingMode};

fn scenario(cap: usize) -> Scenario {
    Scenario::new(ScenarioConfig {
        episode_cap: cap,
        ..ScenarioConfig::default()
    })
    .unwrap()
}

#[test]
fn reported_position_variance_matches_belief_error() {
    let s = scenario(400);
    let ctrl = EnergyPumping { eta: 400.0 };
    let report = run_experiment(&s, &ctrl, 30, &[AllocationMode::Sp]).unwrap();
    let z: Vec<f64> = report
        .logs
        .iter()
        .flat_map(|l| l.records.iter())
        .filter(|r| r.measurement.is_some())
        .map(|r| (r.belief.x_hat - r.true_state.x) / r.belief.x_var.sqrt())
        .collect();
    assert!(z.len() > 1000);
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(mean.abs() < 0.1, "bias {mean}");
    assert!((0.7..=1.3).contains(&sd), "normalized spread {sd}");
}

#[test]
fn signal_mode_estimates_stay_near_truth() {
    let s = scenario(6).with_modes(AllocationMode::Sp, SensingMode::Signal);
    let log = run_episode(&s, &EnergyPumping { eta: 100.0 }, 11);
    assert_eq!(log.records.len(), 6);
    for r in &log.records {
        let m = r.measurement.expect("SP serves the sensing demand");
        assert!((m.range_est - r.range).abs() <= 6.0 * m.sigma_r, "{} vs {}", m.range_est, r.range);
    }
}

#[test]
fn every_mode_respects_capacity_under_a_scripted_controller() {
    let s = scenario(300);
    let ctrls: [&dyn Controller; 2] = [&EnergyPumping { eta: 1.0 }, &EnergyPumping { eta: 1e5 }];
    for c in ctrls {
        let report = run_experiment(&s, c, 5, &AllocationMode::ALL).unwrap();
        for log in &report.logs {
            assert_eq!(log.summary.capacity_violations, 0);
            assert!(log.records.iter().all(|r| r.allocation.n_s + r.allocation.n_c <= 512));
        }
    }
}

#[test]
fn scenario_file_round_trip_preserves_the_hash() {
    let s = scenario(250);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenario.toml");
    std::fs::write(&path, ScenarioConfig { episode_cap: 250, ..ScenarioConfig::default() }.to_toml_string()).unwrap();
    let loaded = Scenario::new(ScenarioConfig::load(&path).unwrap()).unwrap();
    assert_eq!(loaded.hash(), s.hash());

    std::fs::write(&path, "episode_cap = 10\nwheel_count = 4\n").unwrap();
    assert!(ScenarioConfig::load(&path).is_err());
}
