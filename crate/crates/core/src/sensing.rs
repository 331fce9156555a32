//! Mono-static OFDM radar.
//!
//! Link budget of a point scatterer, synthetic received frames, the 2-D
//! periodogram range/velocity estimator and the CRB triple for range,
//! radial velocity and elevation.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::units::{db_to_linear, dbm_to_watts, SPEED_OF_LIGHT};

/// Radio constants shared by sensing and communication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfdmConfig {
    /// Carrier frequency (Hz).
    pub carrier_freq: f64,
    /// Subcarrier spacing (Hz).
    pub subcarrier_spacing: f64,
    /// Total subcarriers available per frame.
    pub num_subcarriers: usize,
    /// OFDM symbols per frame.
    pub num_symbols: usize,
    /// Symbol duration including cyclic prefix (s).
    pub symbol_duration: f64,
    /// Transmit power (W).
    pub tx_power: f64,
    /// Transmit array gain (linear).
    pub tx_gain: f64,
    /// Receive array gain (linear).
    pub rx_gain: f64,
    /// Receiver noise figure (linear).
    pub noise_figure: f64,
    /// Noise spectral density (W/Hz).
    pub noise_density: f64,
    /// Radar cross section of the vehicle (m^2).
    pub rcs: f64,
    /// Zero-padded transform length along subcarriers.
    pub range_fft_len: usize,
    /// Zero-padded transform length along symbols.
    pub doppler_fft_len: usize,
    pub array_rows: usize,
    pub array_cols: usize,
    /// Row spacing in wavelengths.
    pub row_spacing_wl: f64,
    /// Column spacing in wavelengths.
    pub col_spacing_wl: f64,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        Self {
            carrier_freq: 28e9,
            subcarrier_spacing: 120e3,
            num_subcarriers: 512,
            num_symbols: 128,
            symbol_duration: 8.92e-6,
            tx_power: dbm_to_watts(25.0),
            tx_gain: db_to_linear(33.0),
            rx_gain: db_to_linear(3.0),
            noise_figure: db_to_linear(8.0),
            noise_density: dbm_to_watts(-174.0),
            rcs: 1.0,
            range_fft_len: 6400,
            doppler_fft_len: 5120,
            array_rows: 8,
            array_cols: 8,
            row_spacing_wl: 0.5,
            col_spacing_wl: 0.5,
        }
    }
}

impl OfdmConfig {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    /// Column spacing in metres.
    pub fn col_spacing(&self) -> f64 {
        self.col_spacing_wl * self.wavelength()
    }

    /// Thermal noise power in one subcarrier (W).
    pub fn subcarrier_noise_power(&self) -> f64 {
        self.noise_density * self.noise_figure * self.subcarrier_spacing
    }

    /// Range covered by one periodogram bin (m).
    pub fn range_bin_width(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.subcarrier_spacing * self.range_fft_len as f64)
    }

    /// Velocity covered by one periodogram bin (m/s).
    pub fn velocity_bin_width(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.carrier_freq * self.symbol_duration * self.doppler_fft_len as f64)
    }

    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("carrier_freq", self.carrier_freq),
            ("subcarrier_spacing", self.subcarrier_spacing),
            ("symbol_duration", self.symbol_duration),
            ("tx_power", self.tx_power),
            ("tx_gain", self.tx_gain),
            ("rx_gain", self.rx_gain),
            ("noise_figure", self.noise_figure),
            ("noise_density", self.noise_density),
            ("rcs", self.rcs),
            ("row_spacing_wl", self.row_spacing_wl),
            ("col_spacing_wl", self.col_spacing_wl),
        ] {
            ensure_positive(what, v)?;
        }
        if self.num_subcarriers == 0 || self.num_symbols == 0 {
            return Err(Error::Config("frame dimensions must be non-zero".into()));
        }
        if self.range_fft_len < self.num_subcarriers || self.doppler_fft_len < self.num_symbols {
            return Err(Error::Config(
                "zero-padded transform lengths must cover the frame".into(),
            ));
        }
        if self.array_rows == 0 || self.array_cols == 0 {
            return Err(Error::Config("antenna array must be non-empty".into()));
        }
        Ok(())
    }
}

/// Squared point-scatterer attenuation `b^2 = c^2 Psi / ((4 pi)^3 r^4 f_c^2)`.
pub fn attenuation_sq(cfg: &OfdmConfig, range: f64) -> Result<f64> {
    ensure_positive("range", range)?;
    let c = SPEED_OF_LIGHT;
    Ok(c * c * cfg.rcs / ((4.0 * PI).powi(3) * range.powi(4) * cfg.carrier_freq.powi(2)))
}

/// Echo power at the radar receiver with the beam focused on the target (W).
pub fn received_power(cfg: &OfdmConfig, range: f64) -> Result<f64> {
    Ok(cfg.tx_power * cfg.tx_gain * cfg.rx_gain * attenuation_sq(cfg, range)?)
}

/// Frame-integrated sensing SNR. Independent of the number of sensing
/// subcarriers: the noise bandwidth and the integration gain cancel.
pub fn sensing_snr(cfg: &OfdmConfig, range: f64) -> Result<f64> {
    let p = received_power(cfg, range)?;
    Ok(p * cfg.num_symbols as f64 / cfg.subcarrier_noise_power())
}

/// Ground truth carried by synthetic frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    /// Round-trip delay (s).
    pub delay: f64,
    /// Doppler shift (Hz).
    pub doppler: f64,
    /// Per-element echo amplitude.
    pub amplitude: f64,
    /// Random phase rotation drawn once per frame.
    pub phase: f64,
}

/// Received frame after element-wise division by the transmitted symbols:
/// row `n` is subcarrier `n`, column `m` is OFDM symbol `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
    pub truth: Option<FrameTruth>,
}

impl FrameMatrix {
    pub fn from_rows(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Config(format!(
                "frame data of length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            data,
            truth: None,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, n: usize, m: usize) -> Complex64 {
        self.data[n * self.cols + m]
    }

    pub fn row(&self, n: usize) -> &[Complex64] {
        &self.data[n * self.cols..(n + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }
}

fn check_sensing_count(cfg: &OfdmConfig, n_s: usize) -> Result<()> {
    if n_s == 0 || n_s > cfg.num_subcarriers {
        return Err(Error::SubcarrierRange {
            requested: n_s,
            available: cfg.num_subcarriers,
        });
    }
    Ok(())
}

/// Echo amplitude per frame element. The received power is spread over the
/// `n_s` sensing subcarriers, so that a noise variance of `N0 F df` per
/// element integrates to the frame SNR returned by [`sensing_snr`].
pub fn element_amplitude(cfg: &OfdmConfig, n_s: usize, range: f64) -> Result<f64> {
    check_sensing_count(cfg, n_s)?;
    Ok((received_power(cfg, range)? / n_s as f64).sqrt())
}

fn build_frame(
    cfg: &OfdmConfig,
    n_s: usize,
    truth: FrameTruth,
    mut noise: impl FnMut() -> Complex64,
) -> FrameMatrix {
    let m_count = cfg.num_symbols;
    let doppler_step = 2.0 * PI * cfg.symbol_duration * truth.doppler;
    let delay_step = 2.0 * PI * truth.delay * cfg.subcarrier_spacing;
    let mut data = Vec::with_capacity(n_s * m_count);
    for n in 0..n_s {
        for m in 0..m_count {
            let phase = m as f64 * doppler_step - n as f64 * delay_step + truth.phase;
            data.push(Complex64::from_polar(truth.amplitude, phase) + noise());
        }
    }
    FrameMatrix {
        rows: n_s,
        cols: m_count,
        data,
        truth: Some(truth),
    }
}

fn truth_for(cfg: &OfdmConfig, n_s: usize, range: f64, velocity: f64, phase: f64) -> Result<FrameTruth> {
    Ok(FrameTruth {
        delay: 2.0 * range / SPEED_OF_LIGHT,
        doppler: 2.0 * velocity * cfg.carrier_freq / SPEED_OF_LIGHT,
        amplitude: element_amplitude(cfg, n_s, range)?,
        phase,
    })
}

/// Synthesizes a noisy received frame for a single point target. The random
/// phase and all noise samples derive from `seed`.
pub fn synthesize_frame(
    cfg: &OfdmConfig,
    n_s: usize,
    range: f64,
    velocity: f64,
    seed: u64,
) -> Result<FrameMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase = rng.random_range(0.0..2.0 * PI);
    let truth = truth_for(cfg, n_s, range, velocity, phase)?;
    let std = (cfg.subcarrier_noise_power() / 2.0).sqrt();
    Ok(build_frame(cfg, n_s, truth, || {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(std * re, std * im)
    }))
}

/// Noise-free frame with a given phase rotation.
pub fn synthesize_noiseless_frame(
    cfg: &OfdmConfig,
    n_s: usize,
    range: f64,
    velocity: f64,
    phase: f64,
) -> Result<FrameMatrix> {
    if range < 0.0 {
        return Err(Error::NonPositive {
            what: "range",
            value: range,
        });
    }
    // zero range is allowed for the zero-delay bin; the amplitude is then
    // taken at one metre
    let truth = truth_for(cfg, n_s, range.max(1.0), velocity, phase)?;
    let truth = FrameTruth {
        delay: 2.0 * range / SPEED_OF_LIGHT,
        ..truth
    };
    Ok(build_frame(cfg, n_s, truth, || Complex64::new(0.0, 0.0)))
}

/// Result of the periodogram peak search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakEstimate {
    pub range: f64,
    pub velocity: f64,
    /// Periodogram indices `(n_hat, m_hat)` of the global maximum.
    pub bins: (usize, usize),
    /// Normalized periodogram value at the peak.
    pub power: f64,
}

/// Reusable 2-D periodogram with planned transforms.
///
/// `Per(n, m) = |sum_k (sum_l F(k,l) e^{-j2pi lm/M_per}) e^{+j2pi kn/N_per}|^2 / (rows cols)`.
///
/// The global argmax is exact but avoids evaluating every column: after the
/// symbol-axis transform, column `m` cannot exceed `(sum_k |G(k,m)|)^2`, so
/// columns are visited in decreasing order of that bound and the search stops
/// once the bound falls below the best value found.
pub struct Periodogram {
    range_len: usize,
    doppler_len: usize,
    doppler_fft: Arc<dyn Fft<f64>>,
    range_ifft: Arc<dyn Fft<f64>>,
}

impl Periodogram {
    pub fn new(cfg: &OfdmConfig) -> Self {
        Self::with_lengths(cfg.range_fft_len, cfg.doppler_fft_len)
    }

    pub fn with_lengths(range_len: usize, doppler_len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            range_len,
            doppler_len,
            doppler_fft: planner.plan_fft_forward(doppler_len),
            range_ifft: planner.plan_fft_inverse(range_len),
        }
    }

    /// Symbol-axis transform of every row, stored column-major
    /// (`g[m * rows + k]`).
    fn doppler_stage(&self, frame: &FrameMatrix) -> Vec<Complex64> {
        let rows = frame.rows();
        let mut g = vec![Complex64::new(0.0, 0.0); rows * self.doppler_len];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.doppler_len];
        for k in 0..rows {
            buf.fill(Complex64::new(0.0, 0.0));
            buf[..frame.cols()].copy_from_slice(frame.row(k));
            self.doppler_fft.process(&mut buf);
            for (m, v) in buf.iter().enumerate() {
                g[m * rows + k] = *v;
            }
        }
        g
    }

    /// Peak bins and normalized peak value.
    pub fn peak(&self, frame: &FrameMatrix) -> Result<((usize, usize), f64)> {
        let rows = frame.rows();
        if rows > self.range_len || frame.cols() > self.doppler_len {
            return Err(Error::Config(format!(
                "frame {}x{} exceeds transform size {}x{}",
                rows,
                frame.cols(),
                self.range_len,
                self.doppler_len
            )));
        }
        if frame.as_slice().iter().all(|z| z.norm_sqr() == 0.0) {
            return Err(Error::NoPeak);
        }
        let g = self.doppler_stage(frame);
        let mut bounds: Vec<(f64, usize)> = (0..self.doppler_len)
            .map(|m| {
                let s: f64 = g[m * rows..(m + 1) * rows].iter().map(|z| z.norm()).sum();
                (s * s, m)
            })
            .collect();
        bounds.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

        let mut best = (f64::NEG_INFINITY, (0usize, 0usize));
        let mut buf = vec![Complex64::new(0.0, 0.0); self.range_len];
        for &(bound, m) in &bounds {
            if bound * (1.0 + 1e-9) < best.0 {
                break;
            }
            buf.fill(Complex64::new(0.0, 0.0));
            buf[..rows].copy_from_slice(&g[m * rows..(m + 1) * rows]);
            self.range_ifft.process(&mut buf);
            for (n, z) in buf.iter().enumerate() {
                let p = z.norm_sqr();
                if p > best.0 || (p == best.0 && (m, n) < (best.1 .1, best.1 .0)) {
                    best = (p, (n, m));
                }
            }
        }
        let norm = (rows * frame.cols()) as f64;
        Ok((best.1, best.0 / norm))
    }

    /// Converts peak bins to range and radial velocity. Doppler bins in the
    /// upper half of the transform map to negative velocities.
    pub fn estimate(&self, frame: &FrameMatrix, cfg: &OfdmConfig) -> Result<PeakEstimate> {
        let ((n, m), power) = self.peak(frame)?;
        let m_signed = if m > self.doppler_len / 2 {
            m as f64 - self.doppler_len as f64
        } else {
            m as f64
        };
        let range = n as f64 * SPEED_OF_LIGHT / (2.0 * cfg.subcarrier_spacing * self.range_len as f64);
        let velocity = m_signed * SPEED_OF_LIGHT
            / (2.0 * cfg.carrier_freq * cfg.symbol_duration * self.doppler_len as f64);
        Ok(PeakEstimate {
            range,
            velocity,
            bins: (n, m),
            power,
        })
    }
}

/// One-shot periodogram estimate using the configured transform lengths.
pub fn periodogram_peak_estimate(frame: &FrameMatrix, cfg: &OfdmConfig) -> Result<PeakEstimate> {
    Periodogram::new(cfg).estimate(frame, cfg)
}

/// Range CRB standard deviation (m).
pub fn sigma_range(cfg: &OfdmConfig, n_s: usize, gamma_s: f64) -> Result<f64> {
    if n_s < 2 {
        return Err(Error::DegenerateCrb(n_s));
    }
    ensure_positive("sensing SNR", gamma_s)?;
    let n = n_s as f64;
    Ok(SPEED_OF_LIGHT / (4.0 * PI * cfg.subcarrier_spacing) * (6.0 / ((n * n - 1.0) * gamma_s)).sqrt())
}

/// Radial-velocity CRB standard deviation (m/s); depends on the symbol count only.
pub fn sigma_velocity(cfg: &OfdmConfig, gamma_s: f64) -> Result<f64> {
    if cfg.num_symbols < 2 {
        return Err(Error::DegenerateCrb(cfg.num_symbols));
    }
    ensure_positive("sensing SNR", gamma_s)?;
    let m = cfg.num_symbols as f64;
    Ok(SPEED_OF_LIGHT / (4.0 * PI * cfg.carrier_freq * cfg.symbol_duration)
        * (6.0 / ((m * m - 1.0) * gamma_s)).sqrt())
}

/// Standard deviation of the normalized angular frequency along the array rows.
pub fn sigma_naf(cfg: &OfdmConfig, gamma_s: f64) -> Result<f64> {
    if cfg.array_rows < 2 {
        return Err(Error::DegenerateCrb(cfg.array_rows));
    }
    ensure_positive("sensing SNR", gamma_s)?;
    let r = cfg.array_rows as f64;
    Ok((6.0 / ((r * r - 1.0) * 4.0 * PI * PI * gamma_s)).sqrt())
}

/// Elevation CRB deviation (rad): the NAF error mapped through the array
/// response, `asin((lambda/dc) cos(phi) (l + sigma_fx)) - theta`.
pub fn sigma_elevation(cfg: &OfdmConfig, gamma_s: f64, theta: f64, phi: f64) -> Result<f64> {
    let s_fx = sigma_naf(cfg, gamma_s)?;
    let ratio = cfg.wavelength() / cfg.col_spacing();
    let naf = cfg.col_spacing() * theta.sin() / (cfg.wavelength() * phi.cos());
    let arg = ratio * phi.cos() * (naf + s_fx);
    if !(-1.0..=1.0).contains(&arg) {
        return Err(Error::AngleSaturated(arg));
    }
    Ok(arg.asin() - theta)
}

/// Range, velocity and elevation CRB deviations for one sensing frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrbBundle {
    pub sigma_r: f64,
    pub sigma_v: f64,
    pub sigma_theta: f64,
}

pub fn crb_bundle(
    cfg: &OfdmConfig,
    n_s: usize,
    gamma_s: f64,
    theta_mean: f64,
    phi_azimuth: f64,
) -> Result<CrbBundle> {
    Ok(CrbBundle {
        sigma_r: sigma_range(cfg, n_s, gamma_s)?,
        sigma_v: sigma_velocity(cfg, gamma_s)?,
        sigma_theta: sigma_elevation(cfg, gamma_s, theta_mean, phi_azimuth)?,
    })
}

/// One radar observation of the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarMeasurement {
    pub range_est: f64,
    pub velocity_est: f64,
    pub theta_est: f64,
    pub sigma_r: f64,
    pub sigma_v: f64,
    pub sigma_theta: f64,
    pub snr_linear: f64,
    pub n_s_used: usize,
}
