use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::nn::Mlp;
use super::{AgentAction, BeliefState, TrainConfig};
use crate::error::{Error, Result};

pub const OBS_DIM: usize = 3;
pub const ACT_DIM: usize = 2;
/// Variance floor (task units^2) before taking the log of the position variance.
const VAR_FLOOR: f64 = 1e-8;

/// Network input for a belief: position and speed scaled to roughly [-1, 1],
/// and the log position variance.
pub fn features(b: &BeliefState) -> [f64; OBS_DIM] {
    [
        (b.x_hat + 0.3) / 0.9,
        b.v_hat / 0.07,
        ((b.x_var.max(0.0) + VAR_FLOOR).ln() + 9.0) / 9.0,
    ]
}

/// Anything that maps a belief to an action.
pub trait Controller {
    fn act(&self, belief: &BeliefState, rng: &mut ChaCha8Rng) -> AgentAction;
}

/// Squashed-Gaussian actor with a state-value critic.
///
/// The actor outputs the mean of a diagonal Gaussian over two unbounded
/// variables `u`; `tanh(u)` gives the force and, after an affine map, `log eta`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub actor: Mlp,
    pub critic: Mlp,
    pub log_std: [f64; ACT_DIM],
    pub eta_range: (f64, f64),
}

impl Policy {
    pub fn new(cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Self {
        let h = cfg.hidden;
        Self {
            actor: Mlp::new(&[OBS_DIM, h, h, ACT_DIM], 0.01, rng),
            critic: Mlp::new(&[OBS_DIM, h, h, 1], 1.0, rng),
            log_std: [cfg.init_log_std; ACT_DIM],
            eta_range: cfg.eta_range,
        }
    }

    pub fn mean(&self, obs: &[f64; OBS_DIM]) -> [f64; ACT_DIM] {
        let m = self.actor.forward(obs);
        [m[0], m[1]]
    }

    pub fn value(&self, obs: &[f64; OBS_DIM]) -> f64 {
        self.critic.forward(obs)[0]
    }

    /// Maps pre-squash samples to a bounded action.
    pub fn squash(&self, u: &[f64; ACT_DIM]) -> AgentAction {
        let (lo, hi) = (self.eta_range.0.ln(), self.eta_range.1.ln());
        let t = 0.5 * (u[1].tanh() + 1.0);
        AgentAction {
            force: u[0].tanh(),
            eta: (lo + t * (hi - lo)).exp().clamp(self.eta_range.0, self.eta_range.1),
        }
    }

    /// Gaussian log-density of `u` under the actor at `obs`. The tanh
    /// Jacobian is omitted: it cancels in probability ratios.
    pub fn log_prob(&self, mean: &[f64; ACT_DIM], u: &[f64; ACT_DIM]) -> f64 {
        (0..ACT_DIM)
            .map(|i| {
                let s = self.log_std[i].exp();
                let z = (u[i] - mean[i]) / s;
                -0.5 * z * z - self.log_std[i] - 0.5 * (2.0 * PI).ln()
            })
            .sum()
    }

    /// Samples an action; returns it with the raw sample and its log-density.
    pub fn sample(&self, belief: &BeliefState, rng: &mut ChaCha8Rng) -> (AgentAction, [f64; ACT_DIM], f64) {
        let obs = features(belief);
        let mean = self.mean(&obs);
        let mut u = [0.0; ACT_DIM];
        for i in 0..ACT_DIM {
            let z: f64 = rng.sample(StandardNormal);
            u[i] = mean[i] + self.log_std[i].exp() * z;
        }
        (self.squash(&u), u, self.log_prob(&mean, &u))
    }

    pub fn act_deterministic(&self, belief: &BeliefState) -> AgentAction {
        self.squash(&self.mean(&features(belief)))
    }

    pub fn act(&self, belief: &BeliefState, rng: &mut ChaCha8Rng, deterministic: bool) -> AgentAction {
        if deterministic {
            self.act_deterministic(belief)
        } else {
            self.sample(belief, rng).0
        }
    }

    pub fn to_checkpoint(&self, train_config: &TrainConfig) -> PolicyCheckpoint {
        PolicyCheckpoint {
            format_version: CHECKPOINT_VERSION,
            train_config: train_config.clone(),
            actor_sizes: self.actor.sizes().to_vec(),
            actor_params: self.actor.params().to_vec(),
            critic_sizes: self.critic.sizes().to_vec(),
            critic_params: self.critic.params().to_vec(),
            log_std: self.log_std,
            eta_range: self.eta_range,
        }
    }
}

/// Deterministic deployment of a trained policy.
impl Controller for Policy {
    fn act(&self, belief: &BeliefState, _rng: &mut ChaCha8Rng) -> AgentAction {
        self.act_deterministic(belief)
    }
}

/// Scripted baseline: push along the estimated velocity with a fixed accuracy request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyPumping {
    pub eta: f64,
}

impl Controller for EnergyPumping {
    fn act(&self, belief: &BeliefState, _rng: &mut ChaCha8Rng) -> AgentAction {
        AgentAction {
            force: if belief.v_hat < 0.0 { -1.0 } else { 1.0 },
            eta: self.eta,
        }
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialized policy parameters plus the configuration that trained them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub format_version: u32,
    pub train_config: TrainConfig,
    pub actor_sizes: Vec<usize>,
    pub actor_params: Vec<f64>,
    pub critic_sizes: Vec<usize>,
    pub critic_params: Vec<f64>,
    pub log_std: [f64; ACT_DIM],
    pub eta_range: (f64, f64),
}

impl PolicyCheckpoint {
    pub fn into_policy(self) -> Result<Policy> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint format {} not supported (expected {CHECKPOINT_VERSION})",
                self.format_version
            )));
        }
        let actor = Mlp::from_parts(self.actor_sizes, self.actor_params)
            .filter(|m| m.input_len() == OBS_DIM && m.output_len() == ACT_DIM)
            .ok_or_else(|| Error::Config("malformed actor parameters".into()))?;
        let critic = Mlp::from_parts(self.critic_sizes, self.critic_params)
            .filter(|m| m.input_len() == OBS_DIM && m.output_len() == 1)
            .ok_or_else(|| Error::Config("malformed critic parameters".into()))?;
        Ok(Policy {
            actor,
            critic,
            log_std: self.log_std,
            eta_range: self.eta_range,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
