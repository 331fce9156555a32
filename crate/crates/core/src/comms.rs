//! mmWave downlink: large-scale fading, MMSE pilot-based channel estimation,
//! effective SNR, achievable rate and the rate-driven subcarrier demand.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::sensing::OfdmConfig;
use crate::units::SPEED_OF_LIGHT;

/// Noise power seen by the uplink pilots after projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotNoise {
    /// Same thermal floor as the data: `N0 F n_c df`.
    DataFloor,
    /// Fixed power in watts.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotConfig {
    /// Pilot length in samples.
    pub pilot_len: usize,
    /// Coherence interval in samples.
    pub coherence_len: usize,
    /// Average pilot symbol power (W).
    pub pilot_power: f64,
    pub pilot_noise: PilotNoise,
    /// Large-scale gain grows linearly with the number of communication
    /// subcarriers. Disable for sensitivity studies.
    pub gain_scales_with_subcarriers: bool,
}

impl Default for PilotConfig {
    fn default() -> Self {
        Self {
            pilot_len: 16,
            coherence_len: 256,
            pilot_power: OfdmConfig::default().tx_power,
            pilot_noise: PilotNoise::DataFloor,
            gain_scales_with_subcarriers: true,
        }
    }
}

impl PilotConfig {
    /// Fraction of the coherence interval left for data.
    pub fn data_fraction(&self) -> f64 {
        (self.coherence_len - self.pilot_len) as f64 / self.coherence_len as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.pilot_len == 0 || self.pilot_len >= self.coherence_len {
            return Err(Error::Config(format!(
                "pilot length {} must lie in 1..{}",
                self.pilot_len, self.coherence_len
            )));
        }
        ensure_positive("pilot_power", self.pilot_power)?;
        if let PilotNoise::Fixed(p) = self.pilot_noise {
            ensure_positive("pilot noise", p)?;
        }
        Ok(())
    }

    fn noise_power(&self, cfg: &OfdmConfig, n_c: usize) -> f64 {
        match self.pilot_noise {
            PilotNoise::DataFloor => cfg.subcarrier_noise_power() * n_c as f64,
            PilotNoise::Fixed(p) => p,
        }
    }
}

/// Per-QI downlink statistics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LinkStats {
    /// Large-scale fading (linear).
    pub beta: f64,
    /// Variance of the MMSE channel estimate.
    pub sigma_hhat_sq: f64,
    /// Variance of the estimation error.
    pub eps_sq: f64,
    /// Data noise power (W).
    pub sigma_w_sq: f64,
    /// Effective SNR at the vehicle (linear).
    pub gamma_c: f64,
    /// Achievable rate (bit/s).
    pub rate: f64,
}

pub fn large_scale_gain(cfg: &OfdmConfig, pilots: &PilotConfig, n_c: usize, range: f64) -> f64 {
    let scale = if pilots.gain_scales_with_subcarriers {
        n_c as f64
    } else {
        1.0
    };
    scale * cfg.tx_gain * SPEED_OF_LIGHT.powi(2) / (4.0 * PI * range * cfg.carrier_freq).powi(2)
}

pub fn link_stats(cfg: &OfdmConfig, pilots: &PilotConfig, n_c: usize, range: f64) -> Result<LinkStats> {
    ensure_positive("range", range)?;
    if n_c == 0 {
        return Ok(LinkStats::default());
    }
    let beta = large_scale_gain(cfg, pilots, n_c, range);
    let train = pilots.pilot_len as f64 * pilots.pilot_power;
    let sigma_p_sq = pilots.noise_power(cfg, n_c);
    let denom = train * beta + sigma_p_sq;
    let sigma_hhat_sq = train * beta * beta / denom;
    // beta - sigma_hhat_sq, written without cancellation
    let eps_sq = beta * sigma_p_sq / denom;
    let sigma_w_sq = cfg.subcarrier_noise_power() * n_c as f64;
    let gamma_c = cfg.tx_power * sigma_hhat_sq / (cfg.tx_power * eps_sq + sigma_w_sq);
    let rate = pilots.data_fraction() * n_c as f64 * cfg.subcarrier_spacing * (1.0 + gamma_c).log2();
    Ok(LinkStats {
        beta,
        sigma_hhat_sq,
        eps_sq,
        sigma_w_sq,
        gamma_c,
        rate,
    })
}

pub fn rate(cfg: &OfdmConfig, pilots: &PilotConfig, n_c: usize, range: f64) -> Result<f64> {
    Ok(link_stats(cfg, pilots, n_c, range)?.rate)
}

/// Subcarriers needed for `rate_target` when the effective SNR is taken as
/// given: `R / (tau_bar df log2(1 + gamma_c))`, unrounded.
pub fn closed_form_comm_bound(rate_target: f64, data_fraction: f64, subcarrier_spacing: f64, gamma_c: f64) -> f64 {
    rate_target / (data_fraction * subcarrier_spacing * (1.0 + gamma_c).log2())
}

/// Smallest subcarrier count whose achievable rate reaches `rate_target`.
///
/// The effective SNR itself depends on the count, so the closed-form bound is
/// iterated from one subcarrier until it stops moving (at most `4N` rounds).
/// Demands above `4N` are reported as [`Error::DemandOverflow`].
pub fn required_comm_subcarriers(
    cfg: &OfdmConfig,
    pilots: &PilotConfig,
    rate_target: f64,
    range: f64,
) -> Result<usize> {
    ensure_positive("range", range)?;
    if rate_target <= 0.0 {
        return Ok(0);
    }
    let cap = 4 * cfg.num_subcarriers;
    let tau_bar = pilots.data_fraction();
    let bound_at = |n: usize| -> Result<u64> {
        let g = link_stats(cfg, pilots, n, range)?.gamma_c;
        let b = closed_form_comm_bound(rate_target, tau_bar, cfg.subcarrier_spacing, g).ceil();
        Ok(if b.is_finite() { (b as u64).max(1) } else { u64::MAX })
    };
    let overflow = |uncapped: u64| Error::DemandOverflow { uncapped, cap };

    let mut n = 1usize;
    for _ in 0..cap {
        let next = bound_at(n)?;
        if next > cap as u64 {
            return Err(overflow(next));
        }
        if next as usize == n {
            break;
        }
        n = next as usize;
    }
    // settle rounding at the boundary
    let rate_at = |n: usize| rate(cfg, pilots, n, range);
    while n > 1 && rate_at(n - 1)? >= rate_target {
        n -= 1;
    }
    while rate_at(n)? < rate_target {
        n += 1;
        if n > cap {
            return Err(overflow(bound_at(cap)?));
        }
    }
    Ok(n)
}

/// Tunes the pilot power so that `n_c` subcarriers at `range` achieve
/// `target_rate`. Bisection in log-power; the rate is increasing in pilot power.
pub fn calibrate_pilot_power(
    cfg: &OfdmConfig,
    pilots: &PilotConfig,
    range: f64,
    n_c: usize,
    target_rate: f64,
) -> Result<PilotConfig> {
    let at = |log_p: f64| -> Result<f64> {
        let p = PilotConfig {
            pilot_power: 10f64.powf(log_p),
            ..pilots.clone()
        };
        rate(cfg, &p, n_c, range)
    };
    let (mut lo, mut hi) = (-40.0f64, 12.0f64);
    if at(hi)? < target_rate || at(lo)? > target_rate {
        return Err(Error::Config(format!(
            "rate {target_rate:e} bit/s at {range} m with {n_c} subcarriers is outside the pilot-power tuning range"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid)? < target_rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(PilotConfig {
        pilot_power: 10f64.powf(hi),
        ..pilots.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_subcarriers_give_zero_rate() {
        let s = link_stats(&OfdmConfig::default(), &PilotConfig::default(), 0, 20.0).unwrap();
        assert_eq!(s, LinkStats::default());
    }

    #[test]
    fn strong_pilots_approach_perfect_csi() {
        let cfg = OfdmConfig::default();
        let pilots = PilotConfig {
            pilot_power: 1e12,
            ..PilotConfig::default()
        };
        for (n_c, r) in [(1, 5.0), (262, 20.0), (512, 30.0)] {
            let s = link_stats(&cfg, &pilots, n_c, r).unwrap();
            let perfect = cfg.tx_power * s.beta / s.sigma_w_sq;
            assert!(s.eps_sq / s.beta < 1e-6);
            assert_relative_eq!(s.gamma_c, perfect, max_relative = 1e-3);
        }
    }

    #[test]
    fn mmse_variance_decomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = OfdmConfig::default();
        for _ in 0..1000 {
            let coherence_len = rng.random_range(2..2000);
            let pilots = PilotConfig {
                pilot_len: rng.random_range(1..coherence_len),
                coherence_len,
                pilot_power: 10f64.powf(rng.random_range(-12.0..3.0)),
                pilot_noise: if rng.random_bool(0.5) {
                    PilotNoise::DataFloor
                } else {
                    PilotNoise::Fixed(10f64.powf(rng.random_range(-18.0..-6.0)))
                },
                gain_scales_with_subcarriers: rng.random_bool(0.5),
            };
            let s = link_stats(&cfg, &pilots, rng.random_range(1..=512), rng.random_range(1.0..100.0)).unwrap();
            assert!(s.eps_sq >= 0.0);
            assert!(s.sigma_hhat_sq <= s.beta * (1.0 + 1e-15));
            assert_relative_eq!(s.eps_sq + s.sigma_hhat_sq, s.beta, max_relative = 1e-12);
            assert!(s.gamma_c >= 0.0 && s.rate >= 0.0);
        }
    }

    #[test]
    fn effective_snr_falls_with_range() {
        let cfg = OfdmConfig::default();
        let p = PilotConfig::default();
        let mut last = f64::INFINITY;
        for r in 1..=60 {
            let g = link_stats(&cfg, &p, 100, r as f64).unwrap().gamma_c;
            assert!(g < last);
            last = g;
        }
    }

    #[test]
    fn closed_form_overflow_example() {
        // 1e9 / (0.95 * 1.2e5 * log2(4)) = 4385.96
        let b = closed_form_comm_bound(1e9, 0.95, 120e3, 3.0).ceil();
        assert_eq!(b, 4386.0);
        assert!(b > 512.0);
    }

    #[test]
    fn zero_rate_needs_nothing() {
        let n = required_comm_subcarriers(&OfdmConfig::default(), &PilotConfig::default(), 0.0, 20.0).unwrap();
        assert_eq!(n, 0);
    }

    #[test]
    fn unreachable_rate_overflows() {
        let cfg = OfdmConfig::default();
        let pilots = PilotConfig {
            pilot_power: 1e-9,
            ..PilotConfig::default()
        };
        match required_comm_subcarriers(&cfg, &pilots, 1e12, 30.0) {
            Err(Error::DemandOverflow { uncapped, cap }) => {
                assert_eq!(cap, 2048);
                assert!(uncapped > 2048);
            }
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn demand_is_monotone_in_target() {
        let cfg = OfdmConfig::default();
        let p = PilotConfig {
            pilot_power: 1e-4,
            ..PilotConfig::default()
        };
        let mut last = 0;
        for i in 0..100 {
            let n = required_comm_subcarriers(&cfg, &p, i as f64 * 2e7, 20.0).unwrap();
            assert!(n >= last);
            last = n;
        }
    }

    #[test]
    fn rate_grows_with_subcarriers() {
        let cfg = OfdmConfig::default();
        for p in [PilotConfig::default(), PilotConfig { gain_scales_with_subcarriers: false, ..PilotConfig::default() }] {
            let mut last = 0.0;
            for n in 1..=512 {
                let r = rate(&cfg, &p, n, 20.0).unwrap();
                assert!(r > last, "n_c = {n}");
                last = r;
            }
        }
    }

    #[test]
    fn calibration_hits_target() {
        let cfg = OfdmConfig::default();
        let p = calibrate_pilot_power(&cfg, &PilotConfig::default(), 20.0, 262, 600e6).unwrap();
        assert_relative_eq!(rate(&cfg, &p, 262, 20.0).unwrap(), 600e6, max_relative = 1e-9);
        assert!(p.pilot_power < cfg.tx_power);
    }
}
