//! Uncertainty-aware controller.
//!
//! The agent observes the twin's belief (position and velocity estimates plus
//! the position variance) and outputs both a force and the accuracy `eta`
//! (inverse position variance, m^-2) it wants for the next observation.
//! Requesting accuracy costs reward, so a trained agent learns how much
//! sensing the task actually needs.

mod env;
pub mod nn;
mod policy;
mod ppo;

pub use env::{BeliefEnv, ControlEnv, ObservationModel, Step};
pub use policy::{Controller, EnergyPumping, Policy, PolicyCheckpoint, CHECKPOINT_VERSION};
pub use ppo::{
    clipped_surrogate, compute_gae, evaluate, evaluate_discounted, fit_critic, train, CurvePoint, EpisodeOutcome, EvalReport,
    TrainOutcome, Transition,
};

use serde::{Deserialize, Serialize};

/// The twin's state estimate in task units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    pub x_hat: f64,
    pub v_hat: f64,
    pub x_var: f64,
    pub v_var: f64,
}

impl BeliefState {
    pub fn exact(x: f64, v: f64) -> Self {
        Self {
            x_hat: x,
            v_hat: v,
            x_var: 0.0,
            v_var: 0.0,
        }
    }
}

/// Force in [-1, 1] and requested accuracy in `[eta_min, eta_max]` (m^-2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentAction {
    pub force: f64,
    pub eta: f64,
}

/// Sign applied to the accuracy term of the reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EtaCostSign {
    /// `r - kappa eta`: accuracy is a cost.
    Penalty,
    /// `r + kappa eta`, the formula as literally written.
    Bonus,
}

impl EtaCostSign {
    pub fn factor(self) -> f64 {
        match self {
            EtaCostSign::Penalty => -1.0,
            EtaCostSign::Bonus => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub discount: f64,
    pub gae_lambda: f64,
    pub clip_ratio: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    /// Environment steps collected per policy update.
    pub rollout_len: usize,
    /// Training budget in environment steps.
    pub total_steps: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub hidden: usize,
    pub init_log_std: f64,
    pub log_std_bounds: (f64, f64),
    /// Accuracy range for the second action dimension (m^-2).
    pub eta_range: (f64, f64),
    /// Weight of the accuracy term in the reward.
    pub kappa: f64,
    pub eta_cost_sign: EtaCostSign,
    /// Evaluation episodes per checkpoint candidate.
    pub eval_episodes: usize,
    /// Stop early once this many consecutive evaluations reach full success.
    pub early_stop_evals: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            discount: 0.99,
            gae_lambda: 0.95,
            clip_ratio: 0.2,
            epochs: 10,
            minibatch_size: 256,
            rollout_len: 4096,
            total_steps: 500_000,
            actor_lr: 3e-4,
            critic_lr: 1e-3,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
            hidden: 64,
            init_log_std: 0.0,
            log_std_bounds: (-3.0, 1.0),
            eta_range: (1.0, 1e5),
            kappa: 5e-6,
            eta_cost_sign: EtaCostSign::Penalty,
            eval_episodes: 20,
            early_stop_evals: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error;
        if !(self.discount >= 0.0 && self.discount < 1.0) {
            return Err(Error::Config(format!("discount {} outside [0, 1)", self.discount)));
        }
        if !(self.clip_ratio > 0.0) {
            return Err(Error::Config("clip ratio must be positive".into()));
        }
        if self.rollout_len == 0 || self.minibatch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("rollout, minibatch and epochs must be non-zero".into()));
        }
        if !(self.eta_range.0 > 0.0 && self.eta_range.0 < self.eta_range.1) {
            return Err(Error::Config("eta range must be positive and non-empty".into()));
        }
        if self.kappa < 0.0 {
            return Err(Error::Config("kappa must be non-negative".into()));
        }
        Ok(())
    }

    pub fn augmented_reward(&self, r: f64, eta: f64) -> f64 {
        augmented_reward(r, eta, self.kappa, self.eta_cost_sign)
    }
}

/// Goal reward adjusted by the accuracy request: `r + sign * kappa * eta`.
pub fn augmented_reward(r: f64, eta: f64, kappa: f64, sign: EtaCostSign) -> f64 {
    r + sign.factor() * kappa * eta
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_weight_off_is_identity() {
        assert_eq!(augmented_reward(1.5, 1e4, 0.0, EtaCostSign::Penalty), 1.5);
    }

    #[test]
    fn penalty_example() {
        let v = augmented_reward(1.0, 1e4, 5e-6, EtaCostSign::Penalty);
        assert!((v - 0.95).abs() < 1e-15);
    }

    #[test]
    fn bonus_sign_is_the_literal_formula() {
        let (r, k, eta) = (-0.3, 5e-6, 1234.5);
        assert_eq!(augmented_reward(r, eta, k, EtaCostSign::Bonus), r + k * eta);
    }

    #[test]
    fn monotone_in_eta_with_sign() {
        let cfg = TrainConfig::default();
        let mut last = f64::INFINITY;
        for i in 0..50 {
            let v = cfg.augmented_reward(0.0, 1.0 + 2000.0 * i as f64);
            assert!(v < last);
            last = v;
        }
        let bonus = TrainConfig {
            eta_cost_sign: EtaCostSign::Bonus,
            ..TrainConfig::default()
        };
        assert!(bonus.augmented_reward(0.0, 10.0) < bonus.augmented_reward(0.0, 20.0));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            discount: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            clip_ratio: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
