use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{augmented_reward, AgentAction, BeliefState, EtaCostSign};
use crate::dynamics::{AgvState, DynamicsConstants};

/// Result of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub belief: BeliefState,
    /// Augmented reward.
    pub reward: f64,
    /// Goal reward before the accuracy term.
    pub base_reward: f64,
    pub done: bool,
    pub truncated: bool,
}

/// Episodic control task seen through a belief.
pub trait ControlEnv {
    /// Starts a new episode; all randomness of the episode derives from `seed`.
    fn reset(&mut self, seed: u64) -> BeliefState;
    fn step(&mut self, action: &AgentAction) -> Step;
    /// Whether the current true state already satisfies the goal.
    fn at_goal(&self) -> bool;
}

/// How the belief is produced from the true state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObservationModel {
    /// Belief equals the true state.
    Perfect,
    /// Position observed with variance `1 / eta` m^2, converted to task units
    /// with `metres_per_unit`; speed observed with a fixed deviation.
    EtaControlled { metres_per_unit: f64, velocity_std: f64 },
}

/// Mountain-car plant observed through a configurable measurement channel.
///
/// As in the twin loop, the belief returned by a step describes the state the
/// action was applied to, so decisions always lag the plant by one QI.
#[derive(Debug, Clone)]
pub struct BeliefEnv {
    pub dynamics: DynamicsConstants,
    pub observation: ObservationModel,
    pub kappa: f64,
    pub eta_cost_sign: EtaCostSign,
    pub episode_cap: usize,
    pub start: Option<AgvState>,
    /// Accuracy used for the bootstrap observation at reset.
    pub initial_eta: f64,
    state: AgvState,
    t: usize,
    rng: ChaCha8Rng,
}

impl BeliefEnv {
    pub fn new(dynamics: DynamicsConstants, observation: ObservationModel, kappa: f64, eta_cost_sign: EtaCostSign) -> Self {
        Self {
            dynamics,
            observation,
            kappa,
            eta_cost_sign,
            episode_cap: 999,
            start: None,
            initial_eta: 1e5,
            state: AgvState::new(-0.5, 0.0),
            t: 0,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    /// Noise-free plant, exact observations, no accuracy cost.
    pub fn perfect() -> Self {
        Self::new(
            DynamicsConstants::noiseless(),
            ObservationModel::Perfect,
            0.0,
            EtaCostSign::Penalty,
        )
    }

    pub fn state(&self) -> AgvState {
        self.state
    }

    fn observe(&mut self, s: AgvState, eta: f64) -> BeliefState {
        match self.observation {
            ObservationModel::Perfect => BeliefState::exact(s.x, s.v),
            ObservationModel::EtaControlled {
                metres_per_unit,
                velocity_std,
            } => {
                let x_var = 1.0 / (eta * metres_per_unit * metres_per_unit);
                let zx: f64 = self.rng.sample(StandardNormal);
                let zv: f64 = self.rng.sample(StandardNormal);
                BeliefState {
                    x_hat: s.x + x_var.sqrt() * zx,
                    v_hat: s.v + velocity_std * zv,
                    x_var,
                    v_var: velocity_std * velocity_std,
                }
            }
        }
    }
}

impl ControlEnv for BeliefEnv {
    fn reset(&mut self, seed: u64) -> BeliefState {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.t = 0;
        self.state = match self.start {
            Some(s) => self.dynamics.clamp(s),
            None => self.dynamics.initial_state(&mut self.rng),
        };
        self.observe(self.state, self.initial_eta)
    }

    fn step(&mut self, action: &AgentAction) -> Step {
        let prev = self.state;
        let belief = self.observe(prev, action.eta);
        let noise = self.dynamics.sample_noise(&mut self.rng);
        self.state = self.dynamics.step(prev, action.force, noise);
        self.t += 1;
        let (base, done) = self.dynamics.goal_reward(prev, action.force, self.state);
        Step {
            belief,
            reward: augmented_reward(base, action.eta, self.kappa, self.eta_cost_sign),
            base_reward: base,
            done,
            truncated: !done && self.t >= self.episode_cap,
        }
    }

    fn at_goal(&self) -> bool {
        self.dynamics.is_goal(self.state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_seeded() {
        let mut a = BeliefEnv::perfect();
        let mut b = BeliefEnv::perfect();
        assert_eq!(a.reset(5), b.reset(5));
        assert_ne!(a.reset(5), a.reset(6));
    }

    #[test]
    fn perfect_belief_lags_by_one_step() {
        let mut env = BeliefEnv::perfect();
        env.reset(1);
        let s0 = env.state();
        let st = env.step(&AgentAction { force: 1.0, eta: 1.0 });
        assert_eq!((st.belief.x_hat, st.belief.v_hat), (s0.x, s0.v));
        assert_ne!(env.state(), s0);
    }

    #[test]
    fn eta_sets_observation_variance() {
        let mut env = BeliefEnv::new(
            DynamicsConstants::noiseless(),
            ObservationModel::EtaControlled {
                metres_per_unit: 10.0,
                velocity_std: 0.0,
            },
            5e-6,
            EtaCostSign::Penalty,
        );
        env.reset(3);
        let st = env.step(&AgentAction { force: 0.0, eta: 400.0 });
        assert!((st.belief.x_var - 1.0 / (400.0 * 100.0)).abs() < 1e-15);
        assert!((st.reward - (-5e-6 * 400.0)).abs() < 1e-15);
    }

    #[test]
    fn episodes_truncate_at_cap() {
        let mut env = BeliefEnv::perfect();
        env.episode_cap = 5;
        env.reset(0);
        let mut last = None;
        for _ in 0..5 {
            last = Some(env.step(&AgentAction { force: 0.0, eta: 1.0 }));
        }
        assert!(last.unwrap().truncated);
    }
}
