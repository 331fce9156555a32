use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::geometry::{physical_map, Geometry, PhysicalView};
use super::scenario::{Scenario, SensingMode};
use crate::agent::{augmented_reward, AgentAction, BeliefState, ControlEnv, Controller, Step};
use crate::allocator::{allocate, AllocationDecision, AllocationMode};
use crate::comms::{rate, required_comm_subcarriers};
use crate::dynamics::AgvState;
use crate::error::Error;
use crate::sensing::{
    crb_bundle, sensing_snr, sigma_elevation, synthesize_frame, Periodogram, RadarMeasurement,
};
use crate::uncertainty::{position_moments, required_sensing_subcarriers, AccuracyTarget, PolarBelief};

/// Telemetry of one query interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QiRecord {
    pub t: usize,
    /// Plant state during the QI (before the force is applied).
    pub true_state: AgvState,
    /// Belief produced by this QI's sensing; it describes `true_state`.
    pub belief: BeliefState,
    /// Action chosen from the previous belief.
    pub action: AgentAction,
    pub allocation: AllocationDecision,
    /// `None` when no frame was processed (perfect sensing or fewer than two
    /// sensing subcarriers).
    pub measurement: Option<RadarMeasurement>,
    /// True AP distance and depression angle.
    pub range: f64,
    pub theta: f64,
    /// Position variance reported with the belief (m^2).
    pub x_var_m2: f64,
    /// Variance budget `min(xi^2, 1/eta)` (m^2).
    pub xibar_sq: f64,
    /// Achieved downlink rate (bit/s).
    pub rate: u64,
    pub rate_met: bool,
    pub x_var_met: bool,
    pub reward: f64,
    /// The plant reached the goal at the end of this QI.
    pub done: bool,
}

/// Per-episode aggregates, recomputable from the records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub qis: usize,
    pub success: bool,
    /// QIs until the goal; the episode cap for failures.
    pub qis_to_goal: usize,
    pub rate_met_fraction: f64,
    pub x_var_met_fraction: f64,
    pub mean_rate: f64,
    pub mean_eta: f64,
    pub mean_x_var_m2: f64,
    pub total_reward: f64,
    pub capacity_violations: usize,
}

impl EpisodeSummary {
    pub fn from_records(records: &[QiRecord], success: bool, episode_cap: usize, capacity: usize) -> Self {
        let n = records.len();
        let mean = |f: &dyn Fn(&QiRecord) -> f64| {
            if n == 0 {
                0.0
            } else {
                records.iter().map(f).sum::<f64>() / n as f64
            }
        };
        Self {
            qis: n,
            success,
            qis_to_goal: if success { n } else { episode_cap },
            rate_met_fraction: mean(&|r| r.rate_met as u8 as f64),
            x_var_met_fraction: mean(&|r| r.x_var_met as u8 as f64),
            mean_rate: mean(&|r| r.rate as f64),
            mean_eta: mean(&|r| r.action.eta),
            mean_x_var_m2: mean(&|r| r.x_var_m2),
            total_reward: records.iter().map(|r| r.reward).sum(),
            capacity_violations: records
                .iter()
                .filter(|r| r.allocation.n_s + r.allocation.n_c > capacity)
                .count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub scenario_hash: String,
    pub seed: u64,
    pub allocator_mode: AllocationMode,
    pub sensing: SensingMode,
    pub track_offset: f64,
    pub records: Vec<QiRecord>,
    pub summary: EpisodeSummary,
}

impl EpisodeLog {
    pub fn qis_to_goal(&self) -> usize {
        self.summary.qis_to_goal
    }
}

/// The per-QI loop: act, compute demands, allocate, sense, update the belief,
/// step the plant, transmit.
///
/// Every random draw of an episode derives from the seed given to
/// [`ControlEnv::reset`]; plant noise, measurement noise and the start state
/// use separate streams so allocator modes see the same vehicle trajectory
/// noise for the same seed.
#[derive(Clone)]
pub struct Twin {
    scenario: Scenario,
    periodogram: Option<Arc<Periodogram>>,
    geometry: Geometry,
    state: AgvState,
    belief: BeliefState,
    t: usize,
    plant_rng: ChaCha8Rng,
    sense_rng: ChaCha8Rng,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl Twin {
    pub fn new(scenario: &Scenario) -> Self {
        let cfg = scenario.config();
        let periodogram = (cfg.sensing == SensingMode::Signal).then(|| Arc::new(Periodogram::new(&cfg.ofdm)));
        Self {
            scenario: scenario.clone(),
            periodogram,
            geometry: cfg.geometry,
            state: AgvState::new(-0.5, 0.0),
            belief: BeliefState::exact(-0.5, 0.0),
            t: 0,
            plant_rng: stream(0, 1),
            sense_rng: stream(0, 2),
        }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Geometry of the current episode.
    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn state(&self) -> AgvState {
        self.state
    }

    pub fn belief(&self) -> BeliefState {
        self.belief
    }

    /// Angle-aware sensing demand for the believed position; infeasible
    /// targets map to `N + 1`.
    fn sensing_demand(&self, view: &PhysicalView, eta: f64) -> u64 {
        let cfg = self.scenario.config();
        let infeasible = cfg.ofdm.num_subcarriers as u64 + 1;
        let demand = || -> crate::Result<usize> {
            let target = AccuracyTarget::new(cfg.xi * cfg.xi, eta)?;
            let gamma = sensing_snr(&cfg.ofdm, view.range)?;
            let s_theta = sigma_elevation(&cfg.ofdm, gamma, view.theta, 0.0)?;
            let belief = PolarBelief {
                r_mean: view.range,
                r_var: 0.0,
                theta_mean: view.theta,
                theta_var: s_theta * s_theta,
            };
            required_sensing_subcarriers(&target, &belief, gamma, &cfg.ofdm)
        };
        match demand() {
            Ok(n) => (n as u64).min(infeasible),
            Err(_) => infeasible,
        }
    }

    fn comm_demand(&self, range: f64) -> u64 {
        let cfg = self.scenario.config();
        match required_comm_subcarriers(&cfg.ofdm, &cfg.pilots, cfg.rate_target, range) {
            Ok(n) => n as u64,
            Err(Error::DemandOverflow { uncapped, .. }) => uncapped,
            Err(_) => cfg.ofdm.num_subcarriers as u64 + 1,
        }
    }

    /// Without a usable frame the previous estimate is kept and its position
    /// variance grows by the largest distance the plant can cover in one QI.
    fn stale_belief(&self) -> BeliefState {
        let s = self.scenario.config().dynamics.max_speed;
        BeliefState {
            x_var: self.belief.x_var + s * s,
            ..self.belief
        }
    }

    /// Senses `state` with `n_s` subcarriers. Returns the new belief, the
    /// measurement if a frame was processed, and the position variance in m^2.
    fn sense(&mut self, state: AgvState, n_s: usize) -> (BeliefState, Option<RadarMeasurement>, f64) {
        let cfg = self.scenario.config();
        let mpu = self.geometry.metres_per_unit();
        let view = physical_map(&state, &self.geometry, cfg.qi_duration);
        // noise is drawn unconditionally so the stream stays aligned across QIs
        let z: [f64; 3] = [
            self.sense_rng.sample(StandardNormal),
            self.sense_rng.sample(StandardNormal),
            self.sense_rng.sample(StandardNormal),
        ];
        let frame_seed = self.sense_rng.next_u64();
        if cfg.sensing == SensingMode::Perfect {
            return (BeliefState::exact(state.x, state.v), None, 0.0);
        }
        let stale = |twin: &Self| {
            let b = twin.stale_belief();
            (b, None, b.x_var * mpu * mpu)
        };
        if n_s < 2 {
            return stale(self);
        }
        let Ok(gamma) = sensing_snr(&cfg.ofdm, view.range) else {
            return stale(self);
        };
        let Ok(crb) = crb_bundle(&cfg.ofdm, n_s, gamma, view.theta, 0.0) else {
            return stale(self);
        };
        let (range_est, velocity_est, sigma_r, sigma_v) = match cfg.sensing {
            SensingMode::Signal => {
                let periodogram = self.periodogram.as_ref().expect("signal mode plans a periodogram");
                let est = synthesize_frame(&cfg.ofdm, n_s, view.range, view.radial_velocity, frame_seed)
                    .and_then(|f| periodogram.estimate(&f, &cfg.ofdm));
                let Ok(est) = est else {
                    return stale(self);
                };
                // bin quantization adds a uniform error of one bin width
                let q_r = cfg.ofdm.range_bin_width() / 12f64.sqrt();
                let q_v = cfg.ofdm.velocity_bin_width() / 12f64.sqrt();
                (est.range, est.velocity, crb.sigma_r.hypot(q_r), crb.sigma_v.hypot(q_v))
            }
            _ => (
                view.range + crb.sigma_r * z[0],
                view.radial_velocity + crb.sigma_v * z[1],
                crb.sigma_r,
                crb.sigma_v,
            ),
        };
        let theta_est = view.theta + crb.sigma_theta * z[2];
        let pos = position_moments(&PolarBelief {
            r_mean: range_est,
            r_var: sigma_r * sigma_r,
            theta_mean: theta_est,
            theta_var: crb.sigma_theta * crb.sigma_theta,
        });
        // the line of sight carries cos(theta) of the horizontal speed
        let cos_t = theta_est.cos();
        let v_sd = self.geometry.task_speed(sigma_v / cos_t, cfg.qi_duration);
        let belief = BeliefState {
            x_hat: self.geometry.task_position(pos.x_mean),
            v_hat: self.geometry.task_speed(velocity_est / cos_t, cfg.qi_duration),
            x_var: pos.x_var / (mpu * mpu),
            v_var: v_sd * v_sd,
        };
        let measurement = RadarMeasurement {
            range_est,
            velocity_est,
            theta_est,
            sigma_r,
            sigma_v,
            sigma_theta: crb.sigma_theta,
            snr_linear: gamma,
            n_s_used: n_s,
        };
        (belief, Some(measurement), pos.x_var)
    }

    /// Runs one QI with `action` and returns its record.
    pub fn step_record(&mut self, action: &AgentAction) -> QiRecord {
        self.advance(action).0
    }

    /// One QI; also returns the reward before the accuracy term.
    fn advance(&mut self, action: &AgentAction) -> (QiRecord, f64) {
        let cfg = self.scenario.config().clone();
        let n = cfg.ofdm.num_subcarriers;
        let eta = action.eta.max(f64::MIN_POSITIVE);

        let state = self.state;
        let view = physical_map(&state, &self.geometry, cfg.qi_duration);
        // sensing demand is planned on the belief; the uplink pilots of this
        // QI measure the large-scale gain, so the comm demand sees the true link
        let believed = cfg.dynamics.clamp(AgvState::new(self.belief.x_hat, self.belief.v_hat));
        let believed_view = physical_map(&believed, &self.geometry, cfg.qi_duration);
        let demand_s = self.sensing_demand(&believed_view, eta);
        let demand_c = self.comm_demand(view.range);
        let allocation = allocate(n, demand_c, demand_s, cfg.allocator_mode);

        let (belief, measurement, x_var_m2) = self.sense(state, allocation.n_s);
        let achieved = rate(&cfg.ofdm, &cfg.pilots, allocation.n_c, view.range).unwrap_or(0.0);

        let noise = cfg.dynamics.sample_noise(&mut self.plant_rng);
        let next = cfg.dynamics.step(state, action.force, noise);
        let (base, done) = cfg.dynamics.goal_reward(state, action.force, next);
        let xibar_sq = (cfg.xi * cfg.xi).min(1.0 / eta);
        let rate_bits = achieved.round() as u64;
        let record = QiRecord {
            t: self.t,
            true_state: state,
            belief,
            action: *action,
            allocation,
            measurement,
            range: view.range,
            theta: view.theta,
            x_var_m2,
            xibar_sq,
            rate: rate_bits,
            rate_met: rate_bits as f64 >= cfg.rate_target,
            x_var_met: x_var_m2 <= xibar_sq,
            reward: augmented_reward(base, action.eta, cfg.kappa, cfg.eta_cost_sign),
            done,
        };
        self.belief = belief;
        self.state = next;
        self.t += 1;
        (record, base)
    }

    fn truncated(&self, done: bool) -> bool {
        !done && self.t >= self.scenario.config().episode_cap
    }
}

impl ControlEnv for Twin {
    /// Draws the track offset and start state, then bootstraps the belief
    /// with one frame on an even split of the band.
    fn reset(&mut self, seed: u64) -> BeliefState {
        let cfg = self.scenario.config().clone();
        let mut init = stream(seed, 0);
        self.plant_rng = stream(seed, 1);
        self.sense_rng = stream(seed, 2);
        self.geometry = cfg.geometry;
        if cfg.randomize_offset {
            let (lo, hi) = cfg.offset_interval().expect("validated scenario");
            self.geometry.track_offset = if hi > lo { init.random_range(lo..=hi) } else { lo };
        }
        self.state = cfg.dynamics.initial_state(&mut init);
        self.t = 0;
        self.belief = BeliefState::exact(self.state.x, self.state.v);
        let (belief, _, _) = self.sense(self.state, cfg.ofdm.num_subcarriers / 2);
        self.belief = belief;
        belief
    }

    fn step(&mut self, action: &AgentAction) -> Step {
        let (r, base) = self.advance(action);
        Step {
            belief: r.belief,
            reward: r.reward,
            base_reward: base,
            done: r.done,
            truncated: self.truncated(r.done),
        }
    }

    fn at_goal(&self) -> bool {
        self.scenario.config().dynamics.is_goal(self.state)
    }
}

/// Runs one episode of `scenario` driven by `controller`.
pub fn run_episode<C: Controller + ?Sized>(scenario: &Scenario, controller: &C, seed: u64) -> EpisodeLog {
    let cfg = scenario.config();
    let mut twin = Twin::new(scenario);
    let mut belief = twin.reset(seed);
    let mut act_rng = stream(seed, 3);
    let mut records = Vec::new();
    let mut success = twin.at_goal();
    while !success && records.len() < cfg.episode_cap {
        let action = controller.act(&belief, &mut act_rng);
        let rec = twin.step_record(&action);
        belief = rec.belief;
        success = rec.done;
        records.push(rec);
    }
    let summary = EpisodeSummary::from_records(&records, success, cfg.episode_cap, cfg.ofdm.num_subcarriers);
    EpisodeLog {
        scenario_hash: scenario.hash().to_string(),
        seed,
        allocator_mode: cfg.allocator_mode,
        sensing: cfg.sensing,
        track_offset: twin.geometry().track_offset,
        records,
        summary,
    }
}
