use serde::{Deserialize, Serialize};

use super::episode::{run_episode, EpisodeLog};
use super::scenario::{certainty_db, elevation_at_range, position_uncertainty, Scenario, SensingMode};
use crate::agent::Controller;
use crate::allocator::AllocationMode;
use crate::comms::rate;
use crate::error::{Error, Result};

/// AP distances of the trade-off sweep (m).
pub const TRADEOFF_RANGES: [f64; 4] = [5.0, 10.0, 20.0, 30.0];

/// One point of the sensing/communication trade-off at a fixed distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub range: f64,
    pub n_s: usize,
    pub n_c: usize,
    /// `10 log10(1 / sigma_x^2)`; `-inf` below two sensing subcarriers.
    pub certainty_db: f64,
    pub rate: u64,
}

/// Certainty and rate for every split `n_s = 1..N-1`, `n_c = N - n_s`.
pub fn tradeoff_sweep(scenario: &Scenario, ranges: &[f64]) -> Result<Vec<TradeoffRow>> {
    let cfg = scenario.config();
    let n = cfg.ofdm.num_subcarriers;
    let mut rows = Vec::with_capacity(ranges.len() * n.saturating_sub(1));
    for &range in ranges {
        let theta = elevation_at_range(cfg.geometry.ap_height, range);
        for n_s in 1..n {
            let certainty = if n_s < 2 {
                f64::NEG_INFINITY
            } else {
                certainty_db(position_uncertainty(&cfg.ofdm, range, theta, n_s)?.x_var)
            };
            rows.push(TradeoffRow {
                range,
                n_s,
                n_c: n - n_s,
                certainty_db: certainty,
                rate: rate(&cfg.ofdm, &cfg.pilots, n - n_s, range)?.round() as u64,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub value: f64,
    /// Fraction of samples `<= value`.
    pub cdf: f64,
}

/// Empirical CDF at each distinct sample value.
pub fn empirical_cdf(values: &[f64]) -> Vec<CdfPoint> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<CdfPoint> = Vec::new();
    for (i, v) in sorted.iter().enumerate() {
        let cdf = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.value == *v => last.cdf = cdf,
            _ => out.push(CdfPoint { value: *v, cdf }),
        }
    }
    out
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    })
}

/// Aggregates of one allocator mode over all of its episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: AllocationMode,
    pub episodes: usize,
    pub qis: usize,
    pub success_rate: f64,
    /// Over all QIs of all episodes.
    pub rate_met_fraction: f64,
    pub x_var_met_fraction: f64,
    pub mean_rate: f64,
    pub median_qis_to_goal: f64,
    pub mean_qis_to_goal: f64,
    pub mean_eta: f64,
    pub capacity_violations: usize,
}

impl ModeSummary {
    pub fn from_logs(mode: AllocationMode, logs: &[&EpisodeLog]) -> Self {
        let records = logs.iter().flat_map(|l| l.records.iter());
        let qis = logs.iter().map(|l| l.records.len()).sum::<usize>();
        let per_qi = |f: &dyn Fn(&super::QiRecord) -> f64| {
            if qis == 0 {
                0.0
            } else {
                records.clone().map(f).sum::<f64>() / qis as f64
            }
        };
        let to_goal: Vec<f64> = logs.iter().map(|l| l.qis_to_goal() as f64).collect();
        let episodes = logs.len();
        Self {
            mode,
            episodes,
            qis,
            success_rate: logs.iter().filter(|l| l.summary.success).count() as f64 / episodes.max(1) as f64,
            rate_met_fraction: per_qi(&|r| r.rate_met as u8 as f64),
            x_var_met_fraction: per_qi(&|r| r.x_var_met as u8 as f64),
            mean_rate: per_qi(&|r| r.rate as f64),
            median_qis_to_goal: median(&to_goal).unwrap_or(0.0),
            mean_qis_to_goal: to_goal.iter().sum::<f64>() / episodes.max(1) as f64,
            mean_eta: per_qi(&|r| r.action.eta),
            capacity_violations: logs.iter().map(|l| l.summary.capacity_violations).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCdf {
    pub mode: AllocationMode,
    pub points: Vec<CdfPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario_hash: String,
    pub sensing: SensingMode,
    pub episodes_per_mode: usize,
    pub summaries: Vec<ModeSummary>,
    /// Per-QI achieved rate.
    pub rate_cdf: Vec<ModeCdf>,
    /// Per-episode QIs to goal (cap for failures).
    pub qi_cdf: Vec<ModeCdf>,
    pub tradeoff: Vec<TradeoffRow>,
    /// Ordered by mode, then episode index.
    pub logs: Vec<EpisodeLog>,
}

impl ExperimentReport {
    pub fn summary(&self, mode: AllocationMode) -> Option<&ModeSummary> {
        self.summaries.iter().find(|s| s.mode == mode)
    }

    pub fn logs_for(&self, mode: AllocationMode) -> impl Iterator<Item = &EpisodeLog> {
        self.logs.iter().filter(move |l| l.allocator_mode == mode)
    }
}

/// Seed of episode `index` in a batch; the same across allocator modes.
pub fn episode_seed(base: u64, index: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = base.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `episodes` seeded episodes per mode and builds the rate and
/// QIs-to-goal distributions plus the trade-off sweep.
pub fn run_experiment<C: Controller + ?Sized>(
    scenario: &Scenario,
    controller: &C,
    episodes: usize,
    modes: &[AllocationMode],
) -> Result<ExperimentReport> {
    if episodes == 0 {
        return Err(Error::Config("an experiment needs at least one episode".into()));
    }
    let cfg = scenario.config();
    let mut logs = Vec::with_capacity(episodes * modes.len());
    for &mode in modes {
        let s = scenario.with_modes(mode, cfg.sensing);
        for i in 0..episodes {
            logs.push(run_episode(&s, controller, episode_seed(cfg.seed, i)));
        }
    }
    let mut summaries = Vec::new();
    let mut rate_cdf = Vec::new();
    let mut qi_cdf = Vec::new();
    for &mode in modes {
        let mine: Vec<&EpisodeLog> = logs.iter().filter(|l| l.allocator_mode == mode).collect();
        summaries.push(ModeSummary::from_logs(mode, &mine));
        let rates: Vec<f64> = mine.iter().flat_map(|l| l.records.iter().map(|r| r.rate as f64)).collect();
        rate_cdf.push(ModeCdf {
            mode,
            points: empirical_cdf(&rates),
        });
        let qis: Vec<f64> = mine.iter().map(|l| l.qis_to_goal() as f64).collect();
        qi_cdf.push(ModeCdf {
            mode,
            points: empirical_cdf(&qis),
        });
    }
    Ok(ExperimentReport {
        scenario_hash: scenario.hash().to_string(),
        sensing: cfg.sensing,
        episodes_per_mode: episodes,
        summaries,
        rate_cdf,
        qi_cdf,
        tradeoff: tradeoff_sweep(scenario, &TRADEOFF_RANGES)?,
        logs,
    })
}
