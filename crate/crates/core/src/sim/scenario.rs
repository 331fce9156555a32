use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::geometry::Geometry;
use crate::agent::EtaCostSign;
use crate::allocator::AllocationMode;
use crate::comms::{calibrate_pilot_power, PilotConfig, PilotNoise};
use crate::dynamics::DynamicsConstants;
use crate::error::{ensure_positive, Error, Result};
use crate::sensing::{crb_bundle, sensing_snr, OfdmConfig};
use crate::uncertainty::{position_moments, PolarBelief, PositionBelief};

/// How a QI's radar frame turns into a belief.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensingMode {
    /// Estimates drawn around the truth with CRB deviations.
    Crb,
    /// Synthesized frame through the periodogram for range and velocity.
    Signal,
    /// Belief equals the true state.
    Perfect,
}

impl fmt::Display for SensingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SensingMode::Crb => "crb",
            SensingMode::Signal => "signal",
            SensingMode::Perfect => "perfect",
        })
    }
}

impl FromStr for SensingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "crb" => Ok(SensingMode::Crb),
            "signal" => Ok(SensingMode::Signal),
            "perfect" => Ok(SensingMode::Perfect),
            other => Err(Error::Config(format!("unknown sensing mode `{other}`"))),
        }
    }
}

/// Pilot power is tuned so `subcarriers` at `range` carry `rate` bit/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateAnchor {
    pub range: f64,
    pub subcarriers: usize,
    pub rate: f64,
}

/// Effective radar cross section is tuned so `subcarriers` at `range` give
/// a position certainty `1 / sigma_x^2` of `certainty_db`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertaintyAnchor {
    pub range: f64,
    pub subcarriers: usize,
    pub certainty_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub ofdm: OfdmConfig,
    pub pilots: PilotConfig,
    pub dynamics: DynamicsConstants,
    /// Accuracy cap of the twin (m).
    pub xi: f64,
    /// Downlink rate target (bit/s).
    pub rate_target: f64,
    pub allocator_mode: AllocationMode,
    pub sensing: SensingMode,
    /// `track_offset` is used as given unless `randomize_offset` is set.
    pub geometry: Geometry,
    /// Draw the track offset per episode so the whole track lies within `range_span`.
    pub randomize_offset: bool,
    pub range_span: (f64, f64),
    /// Duration of one QI (s).
    pub qi_duration: f64,
    pub episode_cap: usize,
    pub seed: u64,
    pub kappa: f64,
    pub eta_cost_sign: EtaCostSign,
    pub pilot_anchor: Option<RateAnchor>,
    pub rcs_anchor: Option<CertaintyAnchor>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            ofdm: OfdmConfig::default(),
            pilots: PilotConfig::default(),
            dynamics: DynamicsConstants::default(),
            xi: 0.02,
            rate_target: 1e9,
            allocator_mode: AllocationMode::Cp,
            sensing: SensingMode::Crb,
            geometry: Geometry::default(),
            randomize_offset: true,
            range_span: (5.0, 30.0),
            qi_duration: 0.05,
            episode_cap: 999,
            seed: 0,
            kappa: 5e-6,
            eta_cost_sign: EtaCostSign::Penalty,
            pilot_anchor: Some(RateAnchor {
                range: 20.0,
                subcarriers: 262,
                rate: 600e6,
            }),
            rcs_anchor: Some(CertaintyAnchor {
                range: 20.0,
                subcarriers: 250,
                certainty_db: 7.5,
            }),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.ofdm.validate()?;
        self.pilots.validate()?;
        ensure_positive("xi", self.xi)?;
        ensure_positive("qi_duration", self.qi_duration)?;
        ensure_positive("track_length", self.geometry.track_length)?;
        if self.rate_target < 0.0 {
            return Err(Error::Config("rate target must be non-negative".into()));
        }
        if self.geometry.ap_height < 0.0 {
            return Err(Error::Config("AP height must be non-negative".into()));
        }
        if self.geometry.track_offset < 0.0 {
            return Err(Error::Config("track offset must be non-negative".into()));
        }
        if self.episode_cap == 0 {
            return Err(Error::Config("episode cap must be non-zero".into()));
        }
        if self.kappa < 0.0 {
            return Err(Error::Config("kappa must be non-negative".into()));
        }
        if self.randomize_offset {
            self.offset_interval()?;
        }
        Ok(())
    }

    /// Track offsets that keep every point of the track within `range_span`.
    pub fn offset_interval(&self) -> Result<(f64, f64)> {
        let (lo, hi) = self.range_span;
        let h = self.geometry.ap_height;
        if !(lo >= h && hi > lo) {
            return Err(Error::Config(format!(
                "range span ({lo}, {hi}) must satisfy AP height {h} <= min < max"
            )));
        }
        let first = (lo * lo - h * h).sqrt();
        let last = (hi * hi - h * h).sqrt() - self.geometry.track_length;
        if last < first {
            return Err(Error::Config(format!(
                "a {} m track does not fit between {lo} m and {hi} m",
                self.geometry.track_length
            )));
        }
        Ok((first, last))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text)?;
        let cfg = ScenarioConfig::from(file);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&ScenarioFile::from(self)).expect("flat scenario always serializes")
    }
}

/// Depression angle at which the AP sees a point of the track at `range`.
pub fn elevation_at_range(ap_height: f64, range: f64) -> f64 {
    (ap_height / range).clamp(-1.0, 1.0).asin()
}

/// Position moments after one frame with `n_s` sensing subcarriers, with the
/// CRB variances taken as the range and elevation uncertainty.
pub fn position_uncertainty(cfg: &OfdmConfig, range: f64, theta: f64, n_s: usize) -> Result<PositionBelief> {
    let gamma = sensing_snr(cfg, range)?;
    let crb = crb_bundle(cfg, n_s, gamma, theta, 0.0)?;
    Ok(position_moments(&PolarBelief {
        r_mean: range,
        r_var: crb.sigma_r * crb.sigma_r,
        theta_mean: theta,
        theta_var: crb.sigma_theta * crb.sigma_theta,
    }))
}

/// `10 log10(1 / sigma_x^2)`.
pub fn certainty_db(x_var: f64) -> f64 {
    -10.0 * x_var.log10()
}

/// Tunes the effective radar cross section until `anchor` holds. Certainty
/// grows monotonically with the cross section; bisection in log-space.
pub fn calibrate_rcs(cfg: &OfdmConfig, ap_height: f64, anchor: &CertaintyAnchor) -> Result<OfdmConfig> {
    let theta = elevation_at_range(ap_height, anchor.range);
    // a saturated elevation bound means no usable certainty at all
    let at = |log_rcs: f64| -> f64 {
        let c = OfdmConfig {
            rcs: 10f64.powf(log_rcs),
            ..cfg.clone()
        };
        position_uncertainty(&c, anchor.range, theta, anchor.subcarriers)
            .map(|p| certainty_db(p.x_var))
            .unwrap_or(f64::NEG_INFINITY)
    };
    let target = anchor.certainty_db;
    let (mut lo, mut hi) = (cfg.rcs.log10(), cfg.rcs.log10());
    let mut steps = 0;
    while at(hi) < target || at(lo) > target {
        if at(hi) < target {
            hi += 1.0;
        } else {
            lo -= 1.0;
        }
        steps += 1;
        if steps > 60 {
            return Err(Error::Config(format!(
                "certainty {target} dB at {} m with {} subcarriers is outside the tuning range",
                anchor.range, anchor.subcarriers
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(OfdmConfig {
        rcs: 10f64.powf(hi),
        ..cfg.clone()
    })
}

/// A validated, calibrated scenario together with its content hash.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    config: ScenarioConfig,
    hash: String,
}

impl Scenario {
    /// Validates `config` and applies the calibration anchors, which are
    /// cleared afterwards so the stored configuration is final.
    pub fn new(mut config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        if let Some(a) = config.pilot_anchor.take() {
            config.pilots = calibrate_pilot_power(&config.ofdm, &config.pilots, a.range, a.subcarriers, a.rate)?;
        }
        if let Some(a) = config.rcs_anchor.take() {
            config.ofdm = calibrate_rcs(&config.ofdm, config.geometry.ap_height, &a)?;
        }
        let json = serde_json::to_vec(&config)?;
        let hash = hex::encode(&Sha256::digest(&json)[..8]);
        Ok(Self { config, hash })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    /// First 16 hex digits of the SHA-256 of the calibrated configuration.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Same calibrated scenario under another allocator or sensing mode.
    pub fn with_modes(&self, allocator_mode: AllocationMode, sensing: SensingMode) -> Self {
        let config = ScenarioConfig {
            allocator_mode,
            sensing,
            ..self.config.clone()
        };
        let hash = hex::encode(&Sha256::digest(serde_json::to_vec(&config).expect("config serializes"))[..8]);
        Self { config, hash }
    }
}

/// Flat key/value form of [`ScenarioConfig`] used for scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    pub carrier_freq: f64,
    pub subcarrier_spacing: f64,
    pub num_subcarriers: usize,
    pub num_symbols: usize,
    pub symbol_duration: f64,
    pub tx_power: f64,
    pub tx_gain: f64,
    pub rx_gain: f64,
    pub noise_figure: f64,
    pub noise_density: f64,
    pub rcs: f64,
    pub range_fft_len: usize,
    pub doppler_fft_len: usize,
    pub array_rows: usize,
    pub array_cols: usize,
    pub row_spacing_wl: f64,
    pub col_spacing_wl: f64,
    pub pilot_len: usize,
    pub coherence_len: usize,
    pub pilot_power: f64,
    /// Fixed pilot noise power (W); absent means the data noise floor.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pilot_noise: Option<f64>,
    pub gain_scales_with_subcarriers: bool,
    pub process_noise_x: f64,
    pub process_noise_v: f64,
    pub xi: f64,
    pub rate_target: f64,
    pub allocator_mode: AllocationMode,
    pub sensing: SensingMode,
    pub ap_height: f64,
    pub track_offset: f64,
    pub track_length: f64,
    pub randomize_offset: bool,
    pub min_range: f64,
    pub max_range: f64,
    pub qi_duration: f64,
    pub episode_cap: usize,
    pub seed: u64,
    pub kappa: f64,
    pub eta_cost_sign: EtaCostSign,
    pub calibrate_pilot: bool,
    pub pilot_anchor_range: f64,
    pub pilot_anchor_subcarriers: usize,
    pub pilot_anchor_rate: f64,
    pub calibrate_rcs: bool,
    pub rcs_anchor_range: f64,
    pub rcs_anchor_subcarriers: usize,
    pub rcs_anchor_certainty_db: f64,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        Self::from(&ScenarioConfig::default())
    }
}

impl From<&ScenarioConfig> for ScenarioFile {
    fn from(c: &ScenarioConfig) -> Self {
        let defaults = ScenarioConfig::default();
        let pa = c.pilot_anchor.or(defaults.pilot_anchor).expect("default anchor");
        let ra = c.rcs_anchor.or(defaults.rcs_anchor).expect("default anchor");
        let o = &c.ofdm;
        Self {
            carrier_freq: o.carrier_freq,
            subcarrier_spacing: o.subcarrier_spacing,
            num_subcarriers: o.num_subcarriers,
            num_symbols: o.num_symbols,
            symbol_duration: o.symbol_duration,
            tx_power: o.tx_power,
            tx_gain: o.tx_gain,
            rx_gain: o.rx_gain,
            noise_figure: o.noise_figure,
            noise_density: o.noise_density,
            rcs: o.rcs,
            range_fft_len: o.range_fft_len,
            doppler_fft_len: o.doppler_fft_len,
            array_rows: o.array_rows,
            array_cols: o.array_cols,
            row_spacing_wl: o.row_spacing_wl,
            col_spacing_wl: o.col_spacing_wl,
            pilot_len: c.pilots.pilot_len,
            coherence_len: c.pilots.coherence_len,
            pilot_power: c.pilots.pilot_power,
            pilot_noise: match c.pilots.pilot_noise {
                PilotNoise::DataFloor => None,
                PilotNoise::Fixed(p) => Some(p),
            },
            gain_scales_with_subcarriers: c.pilots.gain_scales_with_subcarriers,
            process_noise_x: c.dynamics.process_noise_cov[0][0],
            process_noise_v: c.dynamics.process_noise_cov[1][1],
            xi: c.xi,
            rate_target: c.rate_target,
            allocator_mode: c.allocator_mode,
            sensing: c.sensing,
            ap_height: c.geometry.ap_height,
            track_offset: c.geometry.track_offset,
            track_length: c.geometry.track_length,
            randomize_offset: c.randomize_offset,
            min_range: c.range_span.0,
            max_range: c.range_span.1,
            qi_duration: c.qi_duration,
            episode_cap: c.episode_cap,
            seed: c.seed,
            kappa: c.kappa,
            eta_cost_sign: c.eta_cost_sign,
            calibrate_pilot: c.pilot_anchor.is_some(),
            pilot_anchor_range: pa.range,
            pilot_anchor_subcarriers: pa.subcarriers,
            pilot_anchor_rate: pa.rate,
            calibrate_rcs: c.rcs_anchor.is_some(),
            rcs_anchor_range: ra.range,
            rcs_anchor_subcarriers: ra.subcarriers,
            rcs_anchor_certainty_db: ra.certainty_db,
        }
    }
}

impl From<ScenarioFile> for ScenarioConfig {
    fn from(f: ScenarioFile) -> Self {
        let defaults = ScenarioConfig::default();
        Self {
            ofdm: OfdmConfig {
                carrier_freq: f.carrier_freq,
                subcarrier_spacing: f.subcarrier_spacing,
                num_subcarriers: f.num_subcarriers,
                num_symbols: f.num_symbols,
                symbol_duration: f.symbol_duration,
                tx_power: f.tx_power,
                tx_gain: f.tx_gain,
                rx_gain: f.rx_gain,
                noise_figure: f.noise_figure,
                noise_density: f.noise_density,
                rcs: f.rcs,
                range_fft_len: f.range_fft_len,
                doppler_fft_len: f.doppler_fft_len,
                array_rows: f.array_rows,
                array_cols: f.array_cols,
                row_spacing_wl: f.row_spacing_wl,
                col_spacing_wl: f.col_spacing_wl,
            },
            pilots: PilotConfig {
                pilot_len: f.pilot_len,
                coherence_len: f.coherence_len,
                pilot_power: f.pilot_power,
                pilot_noise: f.pilot_noise.map_or(PilotNoise::DataFloor, PilotNoise::Fixed),
                gain_scales_with_subcarriers: f.gain_scales_with_subcarriers,
            },
            dynamics: DynamicsConstants {
                process_noise_cov: [[f.process_noise_x, 0.0], [0.0, f.process_noise_v]],
                ..defaults.dynamics
            },
            xi: f.xi,
            rate_target: f.rate_target,
            allocator_mode: f.allocator_mode,
            sensing: f.sensing,
            geometry: Geometry {
                ap_height: f.ap_height,
                track_offset: f.track_offset,
                track_length: f.track_length,
            },
            randomize_offset: f.randomize_offset,
            range_span: (f.min_range, f.max_range),
            qi_duration: f.qi_duration,
            episode_cap: f.episode_cap,
            seed: f.seed,
            kappa: f.kappa,
            eta_cost_sign: f.eta_cost_sign,
            pilot_anchor: f.calibrate_pilot.then_some(RateAnchor {
                range: f.pilot_anchor_range,
                subcarriers: f.pilot_anchor_subcarriers,
                rate: f.pilot_anchor_rate,
            }),
            rcs_anchor: f.calibrate_rcs.then_some(CertaintyAnchor {
                range: f.rcs_anchor_range,
                subcarriers: f.rcs_anchor_subcarriers,
                certainty_db: f.rcs_anchor_certainty_db,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comms::rate;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ScenarioConfig::from_toml_str("").unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn file_round_trip() {
        let mut c = ScenarioConfig {
            allocator_mode: AllocationMode::Sp,
            sensing: SensingMode::Signal,
            seed: 17,
            rate_target: 7.5e8,
            rcs_anchor: None,
            ..ScenarioConfig::default()
        };
        c.pilots.pilot_noise = PilotNoise::Fixed(1e-13);
        let text = c.to_toml_string();
        assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ScenarioConfig::from_toml_str("xi = 0.02\nrate_targt = 1e9\n").unwrap_err();
        assert!(err.to_string().contains("rate_targt"), "{err}");
    }

    #[test]
    fn bad_values_rejected() {
        assert!(ScenarioConfig::from_toml_str("qi_duration = 0.0").is_err());
        assert!(ScenarioConfig::from_toml_str("track_offset = -1.0\nrandomize_offset = false").is_err());
        assert!(ScenarioConfig::from_toml_str("allocator_mode = \"both\"").is_err());
        assert!(ScenarioConfig::from_toml_str("track_length = 40.0").is_err());
    }

    #[test]
    fn default_offsets_keep_the_track_between_5_and_30_m() {
        let c = ScenarioConfig::default();
        let (lo, hi) = c.offset_interval().unwrap();
        let near = Geometry { track_offset: lo, ..c.geometry };
        let far = Geometry { track_offset: hi, ..c.geometry };
        assert!((near.range_span().0 - 5.0).abs() < 1e-12);
        assert!((far.range_span().1 - 30.0).abs() < 1e-12);
    }

    #[test]
    fn calibration_hits_both_anchors() {
        let s = Scenario::new(ScenarioConfig::default()).unwrap();
        let c = s.config();
        assert!(c.pilot_anchor.is_none() && c.rcs_anchor.is_none());
        let r = rate(&c.ofdm, &c.pilots, 262, 20.0).unwrap();
        assert!((r / 600e6 - 1.0).abs() < 1e-9);
        let th = elevation_at_range(c.geometry.ap_height, 20.0);
        let cert = certainty_db(position_uncertainty(&c.ofdm, 20.0, th, 250).unwrap().x_var);
        assert!((cert - 7.5).abs() < 1e-9);
    }

    #[test]
    fn hash_tracks_content() {
        let a = Scenario::new(ScenarioConfig::default()).unwrap();
        let b = Scenario::new(ScenarioConfig::default()).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
        let c = a.with_modes(AllocationMode::Equal, SensingMode::Crb);
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn mode_names_parse() {
        for m in [SensingMode::Crb, SensingMode::Signal, SensingMode::Perfect] {
            assert_eq!(m.to_string().parse::<SensingMode>().unwrap(), m);
        }
        assert!("radar".parse::<SensingMode>().is_err());
    }
}
