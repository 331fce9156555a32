//! Continuous mountain-car plant used as the vehicle model.
//!
//! State transition `s' = f(s) + B a + u` with `f(x, v) = (x + v, v - phi cos 3x)`
//! and `B = (0, vartheta)`, followed by the usual clamping of the standard task.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// True plant state in task units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgvState {
    pub x: f64,
    pub v: f64,
}

impl AgvState {
    pub fn new(x: f64, v: f64) -> Self {
        Self { x, v }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConstants {
    /// Gravity coefficient (phi).
    pub gravity: f64,
    /// Force gain (vartheta).
    pub force_gain: f64,
    /// Covariance of the additive process noise `u`.
    pub process_noise_cov: [[f64; 2]; 2],
    pub force_range: (f64, f64),
    pub x_range: (f64, f64),
    pub max_speed: f64,
    pub goal_x: f64,
    pub goal_reward: f64,
    pub action_cost: f64,
}

impl Default for DynamicsConstants {
    fn default() -> Self {
        Self {
            gravity: 0.0025,
            force_gain: 0.0015,
            process_noise_cov: [[1e-8, 0.0], [0.0, 1e-8]],
            force_range: (-1.0, 1.0),
            x_range: (-1.2, 0.6),
            max_speed: 0.07,
            goal_x: 0.45,
            goal_reward: 100.0,
            action_cost: 0.1,
        }
    }
}

impl DynamicsConstants {
    /// Noise-free variant, used for the perfect-observation control task.
    pub fn noiseless() -> Self {
        Self {
            process_noise_cov: [[0.0; 2]; 2],
            ..Self::default()
        }
    }

    pub fn clamp_force(&self, force: f64) -> f64 {
        force.clamp(self.force_range.0, self.force_range.1)
    }

    /// Applies the range invariants: position and speed clamps plus the
    /// inelastic left wall.
    pub fn clamp(&self, s: AgvState) -> AgvState {
        let x = s.x.clamp(self.x_range.0, self.x_range.1);
        let mut v = s.v.clamp(-self.max_speed, self.max_speed);
        if x <= self.x_range.0 && v < 0.0 {
            v = 0.0;
        }
        AgvState { x, v }
    }

    /// One QI of the plant. Out-of-range forces are clamped.
    pub fn step(&self, state: AgvState, force: f64, noise: [f64; 2]) -> AgvState {
        let a = self.clamp_force(force);
        let next = AgvState {
            x: state.x + state.v + noise[0],
            v: state.v - self.gravity * (3.0 * state.x).cos() + self.force_gain * a + noise[1],
        };
        self.clamp(next)
    }

    /// Base reward of the standard continuous task and the goal flag.
    pub fn goal_reward(&self, _prev: AgvState, force: f64, next: AgvState) -> (f64, bool) {
        let a = self.clamp_force(force);
        let done = self.is_goal(next);
        let bonus = if done { self.goal_reward } else { 0.0 };
        (bonus - self.action_cost * a * a, done)
    }

    pub fn is_goal(&self, s: AgvState) -> bool {
        s.x >= self.goal_x
    }

    /// Draws `u ~ N(0, C_u)` via the 2x2 Cholesky factor.
    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let [[a, b], [_, d]] = self.process_noise_cov;
        if a == 0.0 && b == 0.0 && d == 0.0 {
            return [0.0, 0.0];
        }
        let l11 = a.max(0.0).sqrt();
        let l21 = if l11 > 0.0 { b / l11 } else { 0.0 };
        let l22 = (d - l21 * l21).max(0.0).sqrt();
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        [l11 * z0, l21 * z0 + l22 * z1]
    }

    /// Standard initial condition: rest at a uniform position in [-0.6, -0.4].
    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> AgvState {
        AgvState::new(rng.random_range(-0.6..-0.4), 0.0)
    }
}
