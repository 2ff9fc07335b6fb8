//! Photocurrent readout: programmable-gain TIA with offset IDACs, soft
//! clipping near the rails, a 9-bit SAR ADC and block averaging.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feedback resistors selected by gain bits 0..=3 (Ω).
pub const GAIN_RESISTORS: [f64; 4] = [50e3, 100e3, 200e3, 400e3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct AfeConfig {
    /// Engaged feedback resistors, one bit per entry of [`GAIN_RESISTORS`].
    pub gain_bits: u8,
    /// Sense-arm offset current in IDAC codes.
    pub idac_sense: i32,
    /// Reference-arm offset current in IDAC codes.
    pub idac_ref: i32,
    /// Current per IDAC code (A).
    pub idac_lsb: f64,
    /// Inclusive range of sense codes scanned during calibration.
    pub idac_scan: (i32, i32),
    /// V
    pub supply: f64,
    pub adc_bits: u32,
    /// Raw ADC sample rate (Hz).
    pub sample_rate: f64,
    pub averaging: usize,
    /// Exponent of the soft-clip curve; larger is closer to a hard clamp.
    /// `None` disables soft clipping (ideal linear stage clamped at the rails).
    pub clip_sharpness: Option<f64>,
    /// RMS input-referred noise in ADC codes.
    pub noise_codes: f64,
}

impl Default for AfeConfig {
    fn default() -> Self {
        Self {
            gain_bits: 0b1111,
            idac_sense: 0,
            idac_ref: 0,
            idac_lsb: 5e-9,
            idac_scan: (0, 160),
            supply: 1.0,
            adc_bits: 9,
            sample_rate: 31.25e6,
            averaging: 512,
            clip_sharpness: Some(4.0),
            noise_codes: 0.7,
        }
    }
}

impl AfeConfig {
    pub fn validate(&self) -> Result<()> {
        tia_gain(self.gain_bits)?;
        if !(self.supply > 0.0 && self.idac_lsb > 0.0 && self.sample_rate > 0.0) {
            return Err(Error::config("supply, IDAC LSB and sample rate must be positive"));
        }
        if !(1..=16).contains(&self.adc_bits) {
            return Err(Error::config("ADC width must be 1..=16 bits"));
        }
        if self.averaging == 0 {
            return Err(Error::config("averaging must be at least 1"));
        }
        if self.idac_scan.0 + 1 >= self.idac_scan.1 {
            return Err(Error::config("IDAC scan needs at least 3 codes"));
        }
        if let Some(p) = self.clip_sharpness {
            if !(p >= 1.0) {
                return Err(Error::config("clip sharpness must be at least 1"));
            }
        }
        if !(self.noise_codes >= 0.0) {
            return Err(Error::config("noise must be non-negative"));
        }
        Ok(())
    }

    pub fn max_code(&self) -> u32 {
        (1 << self.adc_bits) - 1
    }

    /// Output code for zero net input current.
    pub fn midrail_code(&self) -> u32 {
        1 << (self.adc_bits - 1)
    }

    /// Volts per ADC code.
    pub fn lsb_volts(&self) -> f64 {
        self.supply / (1u32 << self.adc_bits) as f64
    }

    /// Averaged-stream update rate (Hz).
    pub fn update_rate(&self) -> f64 {
        self.sample_rate / self.averaging as f64
    }

    /// Net current into the TIA after the offset IDACs.
    pub fn net_current(&self, photocurrent: f64) -> f64 {
        photocurrent - self.idac_lsb * (self.idac_sense - self.idac_ref) as f64
    }
}

/// Transimpedance for the engaged resistors (series composition).
pub fn tia_gain(gain_bits: u8) -> Result<f64> {
    if gain_bits & 0x0f == 0 || gain_bits > 0x0f {
        return Err(Error::config(format!(
            "gain bits {gain_bits:#06b} must select at least one of the four resistors"
        )));
    }
    Ok(GAIN_RESISTORS
        .iter()
        .enumerate()
        .filter(|(k, _)| gain_bits & (1 << k) != 0)
        .map(|(_, r)| r)
        .sum())
}

/// Odd saturating map with unit slope at zero and asymptotes at `±half`.
fn soft_clip(x: f64, half: f64, sharpness: Option<f64>) -> f64 {
    match sharpness {
        Some(p) => x / (1.0 + (x / half).abs().powf(p)).powf(1.0 / p),
        None => x.clamp(-half, half),
    }
}

/// Analog value in code units before quantization (noise-free).
pub fn adc_analog(photocurrent: f64, cfg: &AfeConfig) -> Result<f64> {
    if !photocurrent.is_finite() {
        return Err(Error::domain("photocurrent must be finite"));
    }
    let gain = tia_gain(cfg.gain_bits)?;
    let v = soft_clip(
        gain * cfg.net_current(photocurrent),
        0.5 * cfg.supply,
        cfg.clip_sharpness,
    );
    Ok(cfg.midrail_code() as f64 + v / cfg.lsb_volts())
}

fn quantize(analog: f64, cfg: &AfeConfig) -> u32 {
    analog.floor().clamp(0.0, cfg.max_code() as f64) as u32
}

/// Noise-free single conversion.
pub fn adc_read(photocurrent: f64, cfg: &AfeConfig) -> Result<u32> {
    Ok(quantize(adc_analog(photocurrent, cfg)?, cfg))
}

/// Block means of `cfg.averaging` consecutive raw codes.
pub fn averaged_read(raw: &[u32], cfg: &AfeConfig) -> Result<Vec<f64>> {
    if raw.len() < cfg.averaging {
        return Err(Error::domain(format!(
            "need at least {} raw samples, got {}",
            cfg.averaging,
            raw.len()
        )));
    }
    Ok(raw
        .chunks_exact(cfg.averaging)
        .map(|b| b.iter().map(|&c| c as f64).sum::<f64>() / cfg.averaging as f64)
        .collect())
}

/// One point of the calibration scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationPoint {
    pub idac_sense: i32,
    /// Averaged code with the ring detuned.
    pub zero_light_code: f64,
    /// Headroom above the zero-light code.
    pub range: f64,
    /// |Δcode| per IDAC LSB.
    pub response: f64,
    pub merit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub scan: Vec<CalibrationPoint>,
    pub chosen: CalibrationPoint,
    pub gain_bits: u8,
}

/// Below this |Δcode| per IDAC LSB a scan point is considered saturated.
const MIN_RESPONSE: f64 = 0.05;

/// Frontend instance with its own noise source and calibration state.
#[derive(Debug, Clone)]
pub struct Afe {
    cfg: AfeConfig,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
    calibration: Option<Calibration>,
}

impl Afe {
    pub fn new(cfg: AfeConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let noise = if cfg.noise_codes > 0.0 {
            Some(Normal::new(0.0, cfg.noise_codes).map_err(|e| Error::config(e.to_string()))?)
        } else {
            None
        };
        Ok(Self {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            noise,
            calibration: None,
        })
    }

    pub fn config(&self) -> &AfeConfig {
        &self.cfg
    }

    pub fn calibration(&self) -> Option<&Calibration> {
        self.calibration.as_ref()
    }

    pub fn is_calibrated(&self) -> bool {
        self.calibration.is_some()
    }

    /// Changing the gain invalidates the operating point.
    pub fn set_gain(&mut self, gain_bits: u8) -> Result<()> {
        tia_gain(gain_bits)?;
        if gain_bits != self.cfg.gain_bits {
            self.cfg.gain_bits = gain_bits;
            self.calibration = None;
        }
        Ok(())
    }

    /// One raw conversion including input noise.
    pub fn sample(&mut self, photocurrent: f64) -> Result<u32> {
        let mut analog = adc_analog(photocurrent, &self.cfg)?;
        if let Some(n) = &self.noise {
            analog += n.sample(&mut self.rng);
        }
        Ok(quantize(analog, &self.cfg))
    }

    /// One averaged reading of a photocurrent held constant over the block.
    pub fn averaged(&mut self, photocurrent: f64) -> Result<f64> {
        let mut sum = 0u64;
        for _ in 0..self.cfg.averaging {
            sum += self.sample(photocurrent)? as u64;
        }
        Ok(sum as f64 / self.cfg.averaging as f64)
    }

    /// Averaged reading for the control loop; requires a calibrated
    /// operating point for the current gain.
    pub fn read(&mut self, photocurrent: f64) -> Result<f64> {
        if self.calibration.is_none() {
            return Err(Error::State("AFE read before calibration".into()));
        }
        self.averaged(photocurrent)
    }

    /// Choose the sense IDAC code maximizing range × response with the ring
    /// detuned so that only `dark_current` flows.
    pub fn calibrate(&mut self, dark_current: f64) -> Result<&Calibration> {
        let (lo, hi) = self.cfg.idac_scan;
        let level = |afe: &mut Self, code: i32| -> Result<f64> {
            afe.cfg.idac_sense = code;
            afe.averaged(dark_current)
        };
        let mut zero = Vec::with_capacity((hi - lo + 1) as usize);
        for code in lo..=hi {
            zero.push(level(self, code)?);
        }
        let max = self.cfg.max_code() as f64;
        let mut scan = Vec::with_capacity(zero.len());
        for k in 1..zero.len() - 1 {
            let response = 0.5 * (zero[k + 1] - zero[k - 1]).abs();
            let range = max - zero[k];
            scan.push(CalibrationPoint {
                idac_sense: lo + k as i32,
                zero_light_code: zero[k],
                range,
                response,
                merit: range * response,
            });
        }
        let chosen = scan
            .iter()
            .copied()
            .fold(None::<CalibrationPoint>, |best, p| match best {
                None => Some(p),
                Some(b) if p.merit > b.merit || (p.merit == b.merit && p.range > b.range) => Some(p),
                keep => keep,
            })
            .expect("scan has at least one interior point");
        if !(chosen.response > MIN_RESPONSE) {
            self.cfg.idac_sense = 0;
            return Err(Error::Fit("AFE calibration scan is saturated everywhere".into()));
        }
        self.cfg.idac_sense = chosen.idac_sense;
        self.calibration = Some(Calibration {
            scan,
            chosen,
            gain_bits: self.cfg.gain_bits,
        });
        Ok(self.calibration.as_ref().unwrap())
    }
}
