//! The twin loop over a physical geometry, batch experiments and their
//! output files.
//!
//! The mountain-car position is laid along a straight track below an elevated
//! AP, so every plant state has a range, an elevation and a radial speed. Each
//! query interval the agent acts on the current belief, the allocator splits
//! the band from the resulting demands, the radar frame refreshes the belief
//! and the plant moves on.

mod episode;
mod experiment;
mod geometry;
pub mod io;
mod scenario;

pub use episode::{run_episode, EpisodeLog, EpisodeSummary, QiRecord, Twin};
pub use experiment::{
    empirical_cdf, episode_seed, median, run_experiment, tradeoff_sweep, CdfPoint, ExperimentReport, ModeCdf,
    ModeSummary, TradeoffRow, TRADEOFF_RANGES,
};
pub use geometry::{physical_map, Geometry, PhysicalView, TASK_SPAN, TASK_START};
pub use scenario::{
    calibrate_rcs, certainty_db, elevation_at_range, position_uncertainty, CertaintyAnchor, RateAnchor, Scenario,
    ScenarioConfig, ScenarioFile, SensingMode,
};

use crate::agent::{BeliefEnv, ObservationModel};
use crate::sensing::{sensing_snr, sigma_velocity};

/// Training task in which the accuracy request sets the observation directly:
/// position is seen with variance `1 / eta` m^2 on the scenario's track scale,
/// speed with the radar's velocity CRB at the middle of the range span.
pub fn training_env(scenario: &Scenario) -> crate::Result<BeliefEnv> {
    let cfg = scenario.config();
    let mid = 0.5 * (cfg.range_span.0 + cfg.range_span.1);
    let sigma_v = sigma_velocity(&cfg.ofdm, sensing_snr(&cfg.ofdm, mid)?)?;
    let velocity_std = cfg.geometry.task_speed(sigma_v, cfg.qi_duration);
    let mut env = BeliefEnv::new(
        cfg.dynamics.clone(),
        ObservationModel::EtaControlled {
            metres_per_unit: cfg.geometry.metres_per_unit(),
            velocity_std,
        },
        cfg.kappa,
        cfg.eta_cost_sign,
    );
    env.episode_cap = cfg.episode_cap;
    Ok(env)
}
