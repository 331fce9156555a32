//! Position uncertainty of the vehicle from its range and elevation estimates,
//! and the sensing subcarrier count that keeps it under the accuracy target.
//!
//! With independent `r` (mean `r_bar`, variance `sigma_r^2`) and
//! `theta ~ N(theta_bar, sigma_theta^2)`, the ground position `x = r cos(theta)`
//! has
//!
//! ```text
//! E[x]   = r_bar cos(theta_bar) exp(-sigma_theta^2 / 2)
//! Var[x] = Gamma + sigma_r^2 Upsilon
//! Upsilon = 1/2 + 1/2 cos(2 theta_bar) exp(-2 sigma_theta^2)        (= E[cos^2])
//! Gamma   = r_bar^2 (Upsilon - (cos(theta_bar) exp(-sigma_theta^2/2))^2)
//! ```

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::sensing::OfdmConfig;
use crate::units::SPEED_OF_LIGHT;

/// Range/elevation belief from one radar frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarBelief {
    pub r_mean: f64,
    pub r_var: f64,
    pub theta_mean: f64,
    pub theta_var: f64,
}

/// Ground-position moments; `x_var = gamma_term + r_var * upsilon_term`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionBelief {
    pub x_mean: f64,
    pub x_var: f64,
    pub gamma_term: f64,
    pub upsilon_term: f64,
}

/// Effective variance budget `min(xi^2, 1/eta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTarget {
    pub xi_sq: f64,
    pub eta: f64,
    pub xibar_sq: f64,
}

impl AccuracyTarget {
    pub fn new(xi_sq: f64, eta: f64) -> Result<Self> {
        ensure_positive("xi^2", xi_sq)?;
        ensure_positive("eta", eta)?;
        Ok(Self {
            xi_sq,
            eta,
            xibar_sq: xi_sq.min(1.0 / eta),
        })
    }
}

pub fn position_moments(belief: &PolarBelief) -> PositionBelief {
    let mean_cos = belief.theta_mean.cos() * (-belief.theta_var / 2.0).exp();
    let upsilon = 0.5 + 0.5 * (2.0 * belief.theta_mean).cos() * (-2.0 * belief.theta_var).exp();
    // Var[cos] can come out a few ulps negative when theta_var is tiny
    let var_cos = (upsilon - mean_cos * mean_cos).max(0.0);
    let gamma = belief.r_mean * belief.r_mean * var_cos;
    PositionBelief {
        x_mean: belief.r_mean * mean_cos,
        x_var: gamma + belief.r_var * upsilon,
        gamma_term: gamma,
        upsilon_term: upsilon.clamp(0.0, 1.0),
    }
}

/// Smallest sensing subcarrier count meeting `target`, from the range CRB:
/// `n_s >= sqrt(6 c^2 Upsilon / ((xibar^2 - Gamma) (4 pi df)^2 gamma_s) + 1)`.
///
/// The angle terms come from `belief` and are held fixed; the elevation CRB
/// does not depend on the number of subcarriers.
pub fn required_sensing_subcarriers(
    target: &AccuracyTarget,
    belief: &PolarBelief,
    gamma_s: f64,
    cfg: &OfdmConfig,
) -> Result<usize> {
    ensure_positive("sensing SNR", gamma_s)?;
    let moments = position_moments(belief);
    let slack = target.xibar_sq - moments.gamma_term;
    if slack <= 0.0 {
        return Err(Error::SensingInfeasible {
            xibar_sq: target.xibar_sq,
            gamma_term: moments.gamma_term,
        });
    }
    let c = SPEED_OF_LIGHT;
    let k = 4.0 * PI * cfg.subcarrier_spacing;
    let bound = (6.0 * c * c * moments.upsilon_term / (slack * k * k * gamma_s) + 1.0).sqrt();
    let n = bound.ceil();
    if !n.is_finite() || n > u32::MAX as f64 {
        return Err(Error::SensingInfeasible {
            xibar_sq: target.xibar_sq,
            gamma_term: moments.gamma_term,
        });
    }
    Ok(n as usize)
}
