//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any criterion fails. Runs without the libtest harness so the
//! lines are never captured.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use isac_twin::agent::{evaluate, train, BeliefEnv, Policy, TrainConfig};
use isac_twin::allocator::AllocationMode;
use isac_twin::comms::{rate, required_comm_subcarriers};
use isac_twin::sensing::{
    sensing_snr, sigma_range, synthesize_frame, synthesize_noiseless_frame, OfdmConfig, Periodogram,
};
use isac_twin::sim::{
    io, run_episode, run_experiment, training_env, tradeoff_sweep, ExperimentReport, Scenario, ScenarioConfig,
    SensingMode,
};
use isac_twin::uncertainty::{position_moments, required_sensing_subcarriers, AccuracyTarget, PolarBelief};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Verdict {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn report(v: &Verdict) {
    println!(
        "{} [{}] {} ({:.1}s): {}",
        if v.pass { "PASS" } else { "FAIL" },
        v.id,
        v.name,
        v.elapsed.as_secs_f64(),
        v.detail
    );
}

fn timed(id: u32, name: &'static str, limit: Duration, f: impl FnOnce() -> (bool, String)) -> Verdict {
    let t0 = Instant::now();
    let (ok, detail) = f();
    let elapsed = t0.elapsed();
    let in_time = elapsed <= limit;
    let detail = if in_time {
        detail
    } else {
        format!("{detail}; over the {}s budget", limit.as_secs())
    };
    Verdict {
        id,
        name,
        pass: ok && in_time,
        detail,
        elapsed,
    }
}

fn moments_vs_monte_carlo() -> (bool, String) {
    const SAMPLES: usize = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(0x51);
    let mut worst_mean_se = 0.0f64;
    let mut worst_var_rel = 0.0f64;
    for _ in 0..20 {
        let r_mean = rng.random_range(5.0..30.0);
        let r_std = rng.random_range(0.01..1.0);
        let th_mean = rng.random_range(-1.3..1.3);
        let th_std = rng.random_range(0.001..0.2);
        let analytic = position_moments(&PolarBelief {
            r_mean,
            r_var: r_std * r_std,
            theta_mean: th_mean,
            theta_var: th_std * th_std,
        });
        let r_dist = Normal::new(r_mean, r_std).unwrap();
        let th_dist = Normal::new(th_mean, th_std).unwrap();
        // Welford accumulation keeps the variance estimate exact enough at 1e6
        let (mut mean, mut m2) = (0.0f64, 0.0f64);
        for k in 1..=SAMPLES {
            let x = r_dist.sample(&mut rng) * th_dist.sample(&mut rng).cos();
            let d = x - mean;
            mean += d / k as f64;
            m2 += d * (x - mean);
        }
        let var = m2 / (SAMPLES - 1) as f64;
        let se = (var / SAMPLES as f64).sqrt();
        worst_mean_se = worst_mean_se.max((analytic.x_mean - mean).abs() / se);
        worst_var_rel = worst_var_rel.max((analytic.x_var - var).abs() / var);
    }
    (
        worst_mean_se <= 3.0 && worst_var_rel <= 0.01,
        format!("20 tuples x 1e6 draws; worst mean error {worst_mean_se:.2} SE, worst variance error {:.3}%", 100.0 * worst_var_rel),
    )
}

fn scan_sensing(target: &AccuracyTarget, belief: &PolarBelief, gamma_s: f64, cfg: &OfdmConfig) -> Option<usize> {
    (2..=cfg.num_subcarriers).find(|&n| {
        let s = sigma_range(cfg, n, gamma_s).unwrap();
        position_moments(&PolarBelief {
            r_var: s * s,
            ..*belief
        })
        .x_var
            <= target.xibar_sq
    })
}

fn demand_equivalence() -> (bool, String) {
    let scenario = Scenario::new(ScenarioConfig::default()).unwrap();
    let cfg = scenario.config();
    let n = cfg.ofdm.num_subcarriers;
    let mut rng = ChaCha8Rng::seed_from_u64(0x52);
    let (mut s_checked, mut s_bad) = (0, 0);
    let theta_std = 1e-3;
    for _ in 0..500 {
        let belief = PolarBelief {
            r_mean: rng.random_range(5.0..30.0),
            r_var: 0.0,
            theta_mean: rng.random_range(0.0..1.3),
            theta_var: theta_std * theta_std,
        };
        let gamma_s = 10f64.powf(rng.random_range(0.5..4.0));
        let xi = rng.random_range(0.003..0.2);
        let target = AccuracyTarget::new(xi * xi, 1.0 / (xi * xi)).unwrap();
        let closed = required_sensing_subcarriers(&target, &belief, gamma_s, &cfg.ofdm).ok();
        let scanned = scan_sensing(&target, &belief, gamma_s, &cfg.ofdm);
        match scanned {
            Some(k) => {
                s_checked += 1;
                if closed.map(|c| c.max(2)) != Some(k) {
                    s_bad += 1;
                }
            }
            None if closed.is_some_and(|c| c <= n) => s_bad += 1,
            None => {}
        }
    }
    let (mut c_checked, mut c_bad) = (0, 0);
    for _ in 0..500 {
        let range = rng.random_range(5.0..30.0);
        let target = rng.random_range(1e8..3e9);
        let closed = required_comm_subcarriers(&cfg.ofdm, &cfg.pilots, target, range).ok();
        let scanned = (1..=n).find(|&k| rate(&cfg.ofdm, &cfg.pilots, k, range).unwrap() >= target);
        match scanned {
            Some(k) => {
                c_checked += 1;
                if closed != Some(k) {
                    c_bad += 1;
                }
            }
            None if closed.is_some_and(|c| c <= n) => c_bad += 1,
            None => {}
        }
    }
    (
        s_bad == 0 && c_bad == 0 && s_checked > 100 && c_checked > 100,
        format!(
            "sensing {s_checked} feasible draws, {s_bad} mismatches; communication {c_checked} feasible draws, {c_bad} mismatches"
        ),
    )
}

fn periodogram_fidelity() -> (bool, String) {
    let cfg = OfdmConfig::default();
    let per = Periodogram::new(&cfg);
    let ranges = [(5.0, 26), (10.0, 51), (20.0, 102), (30.0, 154)];
    let speeds = [(0.0, 0), (2.0, 17), (5.0, 43)];
    let mut noiseless_bad = 0;
    for &(r, nb) in &ranges {
        for &(v, mb) in &speeds {
            let f = synthesize_noiseless_frame(&cfg, 64, r, v, 0.3).unwrap();
            let est = per.estimate(&f, &cfg).unwrap();
            let ok = est.bins == (nb, mb)
                && (est.range - r).abs() <= cfg.range_bin_width()
                && (est.velocity - v).abs() <= cfg.velocity_bin_width();
            noiseless_bad += usize::from(!ok);
        }
    }

    // 125 frames per distance, each distance with its echo strength set for
    // 20 dB frame SNR
    let n_s = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(0x53);
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    let mut noisy_ok = true;
    for &(r, _) in &ranges {
        let base = sensing_snr(&cfg, r).unwrap();
        let c = OfdmConfig {
            rcs: cfg.rcs * 100.0 / base,
            ..cfg.clone()
        };
        let gamma = sensing_snr(&c, r).unwrap();
        assert!(gamma >= 10f64.powf(1.5));
        let mut sq = 0.0;
        for _ in 0..125 {
            let v = rng.random_range(-5.0..5.0);
            let f = synthesize_frame(&c, n_s, r, v, rng.random()).unwrap();
            let e = per.estimate(&f, &c).unwrap();
            sq += (e.range - r).powi(2);
        }
        let rmse = (sq / 125.0).sqrt();
        let bound = c.range_bin_width().max(3.0 * sigma_range(&c, n_s, gamma).unwrap());
        noisy_ok &= rmse <= bound;
        if rmse / bound > worst.0 / worst.1.max(f64::MIN_POSITIVE) {
            worst = (rmse, bound, r);
        }
    }
    (
        noiseless_bad == 0 && noisy_ok,
        format!(
            "12 noiseless frames, {noiseless_bad} off-bin; 500 frames at 20 dB, worst RMSE {:.3} m vs bound {:.3} m at {} m",
            worst.0, worst.1, worst.2
        ),
    )
}

fn tradeoff_reproduction() -> (bool, String) {
    let scenario = Scenario::new(ScenarioConfig::default()).unwrap();
    let rows = tradeoff_sweep(&scenario, &[20.0]).unwrap();
    let monotone = rows
        .windows(2)
        .all(|w| w[1].certainty_db >= w[0].certainty_db && w[1].rate <= w[0].rate);
    let at = |n_s: usize| rows.iter().find(|r| r.n_s == n_s).unwrap();
    let p250 = at(250);
    let p50 = at(50);
    let ok250 = (p250.certainty_db - 7.5).abs() <= 3.0 && p250.n_c == 262 && (p250.rate as f64 / 600e6 - 1.0).abs() <= 0.2;
    let ok50 = (p50.rate as f64 / 1100e6 - 1.0).abs() <= 0.2 && (p50.certainty_db + 9.0).abs() <= 3.0;
    (
        monotone && ok250 && ok50,
        format!(
            "monotone {monotone}; n_s=250: {:.2} dB, {:.1} Mbps; n_s=50: {:.2} dB, {:.1} Mbps",
            p250.certainty_db,
            p250.rate as f64 / 1e6,
            p50.certainty_db,
            p50.rate as f64 / 1e6
        ),
    )
}

fn allocation_trends(report: &ExperimentReport) -> (bool, String) {
    let s = |m| report.summary(m).unwrap();
    let (cp, sp, eq) = (s(AllocationMode::Cp), s(AllocationMode::Sp), s(AllocationMode::Equal));
    let cp_rate = cp.rate_met_fraction > sp.rate_met_fraction;
    let sp_fast = sp.median_qis_to_goal <= cp.median_qis_to_goal;
    let eq_dominated = eq.rate_met_fraction < cp.rate_met_fraction.max(sp.rate_met_fraction)
        || eq.median_qis_to_goal > cp.median_qis_to_goal.min(sp.median_qis_to_goal);
    (
        cp_rate && sp_fast && eq_dominated && report.episodes_per_mode >= 100,
        format!(
            "{} episodes/mode; rate met CP {:.3} SP {:.3} Equal {:.3}; median QIs CP {} SP {} Equal {}",
            report.episodes_per_mode,
            cp.rate_met_fraction,
            sp.rate_met_fraction,
            eq.rate_met_fraction,
            cp.median_qis_to_goal,
            sp.median_qis_to_goal,
            eq.median_qis_to_goal
        ),
    )
}

const TRAIN_STEPS: usize = 300_000;

fn rl_solvability(eta_policy: &mut Option<Policy>) -> (bool, String) {
    let perfect_cfg = TrainConfig {
        total_steps: TRAIN_STEPS,
        kappa: 0.0,
        ..TrainConfig::default()
    };
    let mut env = BeliefEnv::perfect();
    let perfect = train(&mut env, &perfect_cfg, 1).unwrap();
    let perfect_eval = evaluate(&perfect.policy, &mut env, 100, 10_000);

    let scenario = Scenario::new(ScenarioConfig::default()).unwrap();
    let mut env = training_env(&scenario).unwrap();
    let eta_cfg = TrainConfig {
        total_steps: TRAIN_STEPS,
        kappa: scenario.config().kappa,
        eta_cost_sign: scenario.config().eta_cost_sign,
        ..TrainConfig::default()
    };
    let trained = train(&mut env, &eta_cfg, 1).unwrap();
    let eta_eval = evaluate(&trained.policy, &mut env, 100, 10_000);
    let eta_half = eta_cfg.eta_range.1 / 2.0;
    let ok = perfect.env_steps <= 500_000
        && trained.env_steps <= 500_000
        && perfect_eval.success_rate >= 0.9
        && eta_eval.success_rate >= 0.8
        && eta_eval.mean_eta < eta_half;
    *eta_policy = Some(trained.policy);
    (
        ok,
        format!(
            "perfect: {:.2} success after {} steps; uncertainty-aware: {:.2} success, mean eta {:.1} (< {eta_half}) after {} steps",
            perfect_eval.success_rate, perfect.env_steps, eta_eval.success_rate, eta_eval.mean_eta, trained.env_steps
        ),
    )
}

fn capacity_and_determinism(reports: &[&ExperimentReport], policy: &Policy) -> (bool, String) {
    let cap = OfdmConfig::default().num_subcarriers;
    let mut qis = 0usize;
    let mut violations = 0usize;
    for rep in reports {
        for log in &rep.logs {
            for r in &log.records {
                qis += 1;
                violations += usize::from(r.allocation.n_s + r.allocation.n_c > cap);
            }
            violations += log.summary.capacity_violations;
        }
    }

    let base = Scenario::new(ScenarioConfig::default()).unwrap();
    let mut identical = true;
    // one signal-mode pair; a full periodogram per QI makes more too slow
    let cases = AllocationMode::ALL
        .iter()
        .map(|&m| (m, SensingMode::Crb))
        .chain([(AllocationMode::Sp, SensingMode::Signal)]);
    for (mode, sensing) in cases {
        let s = base.with_modes(mode, sensing);
        let a = run_episode(&s, policy, 4242);
        let b = run_episode(&s, policy, 4242);
        identical &= a == b && serde_json::to_string(&a).unwrap() == serde_json::to_string(&b).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let csv_of = |tag: &str| {
        let rep = run_experiment(&base, policy, 5, &AllocationMode::ALL).unwrap();
        let path = dir.path().join(format!("{tag}.csv"));
        io::write_episodes_csv(&path, &rep.logs).unwrap();
        std::fs::read(path).unwrap()
    };
    identical &= csv_of("a") == csv_of("b");
    (
        violations == 0 && qis > 0 && identical,
        format!("{qis} QIs checked, {violations} over capacity; repeated runs bit-identical: {identical}"),
    )
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        // cargo test --list probes custom harnesses
        return ExitCode::SUCCESS;
    }
    let mut verdicts = Vec::new();
    let mut run = |v: Verdict| {
        report(&v);
        verdicts.push(v);
    };

    run(timed(1, "position moments vs Monte Carlo", Duration::from_secs(30), moments_vs_monte_carlo));
    run(timed(2, "closed-form demands vs linear scan", Duration::from_secs(10), demand_equivalence));
    run(timed(3, "periodogram fidelity", Duration::from_secs(300), periodogram_fidelity));
    run(timed(4, "sensing/communication trade-off", Duration::from_secs(60), tradeoff_reproduction));

    let mut policy = None;
    run(timed(6, "controller training", Duration::from_secs(7200), || rl_solvability(&mut policy)));
    let policy = policy.expect("training ran");

    let scenario = Scenario::new(ScenarioConfig::default()).unwrap();
    let mut crb_report = None;
    run(timed(5, "allocator trends", Duration::from_secs(1800), || {
        let rep = run_experiment(&scenario, &policy, 100, &AllocationMode::ALL).unwrap();
        let out = allocation_trends(&rep);
        crb_report = Some(rep);
        out
    }));
    let crb_report = crb_report.expect("experiment ran");

    run(timed(7, "capacity and determinism", Duration::from_secs(600), || {
        let signal = scenario.with_modes(scenario.config().allocator_mode, SensingMode::Signal);
        let signal_report = run_experiment(&signal, &policy, 2, &AllocationMode::ALL).unwrap();
        capacity_and_determinism(&[&crb_report, &signal_report], &policy)
    }));

    verdicts.sort_by_key(|v| v.id);
    let failed = verdicts.iter().filter(|v| !v.pass).count();
    println!("acceptance: {} passed, {failed} failed", verdicts.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

