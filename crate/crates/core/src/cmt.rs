//! Coupled-mode-theory model of a microring resonance triplet.
//!
//! Decay rates are energy-amplitude rates `r = ω / 2Q`. Frequencies are kept
//! in Hz everywhere and only converted to rad/s inside the rate formulas.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{angular_frequency_of, frequency_of};

/// Wavelength and loaded/unloaded quality factors of one resonance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct ResonanceParams {
    /// Resonance wavelength (m).
    pub wavelength: f64,
    /// Intrinsic (unloaded) quality factor.
    pub q_intrinsic: f64,
    /// Extrinsic (bus coupling) quality factor.
    pub q_extrinsic: f64,
}

/// CMT decay rates of a resonance (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRates {
    pub extrinsic: f64,
    pub intrinsic: f64,
    pub total: f64,
}

impl ResonanceParams {
    pub fn new(wavelength: f64, q_intrinsic: f64, q_extrinsic: f64) -> Result<Self> {
        let p = Self {
            wavelength,
            q_intrinsic,
            q_extrinsic,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(Error::domain(format!(
                "resonance wavelength must be positive, got {}",
                self.wavelength
            )));
        }
        if !(self.q_intrinsic > 0.0 && self.q_extrinsic > 0.0) {
            return Err(Error::domain(format!(
                "quality factors must be positive, got Q_i={} Q_e={}",
                self.q_intrinsic, self.q_extrinsic
            )));
        }
        Ok(())
    }

    /// Loaded quality factor `(1/Q_i + 1/Q_e)^-1`.
    pub fn q_total(&self) -> f64 {
        1.0 / (1.0 / self.q_intrinsic + 1.0 / self.q_extrinsic)
    }

    pub fn frequency(&self) -> f64 {
        frequency_of(self.wavelength)
    }

    pub fn angular_frequency(&self) -> f64 {
        angular_frequency_of(self.wavelength)
    }
}

pub fn decay_rates(p: &ResonanceParams) -> Result<DecayRates> {
    p.validate()?;
    let omega = p.angular_frequency();
    let extrinsic = omega / (2.0 * p.q_extrinsic);
    let intrinsic = omega / (2.0 * p.q_intrinsic);
    Ok(DecayRates {
        extrinsic,
        intrinsic,
        total: extrinsic + intrinsic,
    })
}

/// Full-width half-maximum linewidth (Hz) of the loaded resonance.
pub fn linewidth_from_q(p: &ResonanceParams) -> Result<f64> {
    p.validate()?;
    Ok(p.frequency() / p.q_total())
}

/// Loaded Q of a resonance at `wavelength` with FWHM `linewidth` (Hz).
pub fn q_from_linewidth(wavelength: f64, linewidth: f64) -> Result<f64> {
    if !(wavelength > 0.0) {
        return Err(Error::domain("wavelength must be positive"));
    }
    if !(linewidth > 0.0) {
        return Err(Error::domain(format!("linewidth must be positive, got {linewidth}")));
    }
    Ok(frequency_of(wavelength) / linewidth)
}

/// `|ν_s + ν_i − 2ν_p|` (Hz) from the three resonance wavelengths.
pub fn fsr_mismatch_from_wavelengths(signal: f64, pump: f64, idler: f64) -> Result<f64> {
    if !(signal > 0.0 && signal < pump && pump < idler) {
        return Err(Error::domain(format!(
            "expected 0 < λ_s < λ_p < λ_i, got {signal}, {pump}, {idler}"
        )));
    }
    let (fs, fp, fi) = (frequency_of(signal), frequency_of(pump), frequency_of(idler));
    // (fs - fp) - (fp - fi) keeps the large terms from cancelling first.
    Ok(((fs - fp) - (fp - fi)).abs())
}

/// Signal/pump/idler resonances with FSR mismatch and nonlinear coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct ResonatorTriplet {
    pub signal: ResonanceParams,
    pub pump: ResonanceParams,
    pub idler: ResonanceParams,
    /// FSR mismatch (Hz).
    pub fsr_mismatch: f64,
    /// Four-wave-mixing coefficient, scaled so the pair rate is in pairs/s
    /// for pump power in W.
    pub beta_fwm: f64,
}

/// Which resonance of a triplet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resonance {
    Signal,
    Pump,
    Idler,
}

impl ResonatorTriplet {
    pub fn new(
        signal: ResonanceParams,
        pump: ResonanceParams,
        idler: ResonanceParams,
        fsr_mismatch: f64,
        beta_fwm: f64,
    ) -> Result<Self> {
        let t = Self {
            signal,
            pump,
            idler,
            fsr_mismatch,
            beta_fwm,
        };
        t.validate()?;
        Ok(t)
    }

    /// Triplet with the same Q-factors on all three resonances.
    pub fn uniform(
        wavelengths: [f64; 3],
        q_intrinsic: f64,
        q_extrinsic: f64,
        fsr_mismatch: f64,
        beta_fwm: f64,
    ) -> Result<Self> {
        let mk = |w| ResonanceParams::new(w, q_intrinsic, q_extrinsic);
        Self::new(
            mk(wavelengths[0])?,
            mk(wavelengths[1])?,
            mk(wavelengths[2])?,
            fsr_mismatch,
            beta_fwm,
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.signal.validate()?;
        self.pump.validate()?;
        self.idler.validate()?;
        if !(self.signal.wavelength < self.pump.wavelength && self.pump.wavelength < self.idler.wavelength) {
            return Err(Error::domain("expected λ_s < λ_p < λ_i"));
        }
        if !(self.fsr_mismatch >= 0.0) {
            return Err(Error::domain("FSR mismatch must be non-negative"));
        }
        if !(self.beta_fwm >= 0.0) {
            return Err(Error::domain("β_FWM must be non-negative"));
        }
        Ok(())
    }

    pub fn resonance(&self, which: Resonance) -> &ResonanceParams {
        match which {
            Resonance::Signal => &self.signal,
            Resonance::Pump => &self.pump,
            Resonance::Idler => &self.idler,
        }
    }

    pub fn rates(&self) -> Result<[DecayRates; 3]> {
        Ok([
            decay_rates(&self.signal)?,
            decay_rates(&self.pump)?,
            decay_rates(&self.idler)?,
        ])
    }

    pub fn with_beta(mut self, beta_fwm: f64) -> Self {
        self.beta_fwm = beta_fwm;
        self
    }
}

/// Pair generation rate from explicit decay rates.
///
/// `rates` are ordered signal, pump, idler; `fsr_mismatch` in Hz.
pub fn pgr_from_rates(
    pump_omega: f64,
    beta_fwm: f64,
    rates: &[DecayRates; 3],
    fsr_mismatch: f64,
    pump_power: f64,
) -> f64 {
    let [s, p, i] = rates;
    let pump_build = 2.0 * p.extrinsic / (p.total * p.total);
    let escape = 2.0 * i.extrinsic * s.extrinsic / (i.total * s.total);
    let joint = s.total + i.total;
    let mismatch = 2.0 * PI * fsr_mismatch;
    let spectral = joint / (mismatch * mismatch + joint * joint);
    pump_omega.powi(2) * beta_fwm.powi(2) * pump_build.powi(2) * escape * spectral * pump_power.powi(2)
}

/// Theoretical pair generation rate (pairs/s) for pump power in W.
pub fn pair_generation_rate(t: &ResonatorTriplet, pump_power: f64) -> Result<f64> {
    if !(pump_power >= 0.0) {
        return Err(Error::domain("pump power must be non-negative"));
    }
    let rates = t.rates()?;
    Ok(pgr_from_rates(
        t.pump.angular_frequency(),
        t.beta_fwm,
        &rates,
        t.fsr_mismatch,
        pump_power,
    ))
}

/// Pair generation efficiency in MHz/mW².
pub fn pgr_efficiency_mhz_per_mw2(t: &ResonatorTriplet) -> Result<f64> {
    // pairs/s at 1 mW, expressed in MHz
    Ok(pair_generation_rate(t, 1e-3)? * 1e-6)
}

/// β_FWM that makes `t` produce `target_mhz_per_mw2`.
pub fn calibrate_beta(t: &ResonatorTriplet, target_mhz_per_mw2: f64) -> Result<f64> {
    if !(target_mhz_per_mw2 > 0.0) {
        return Err(Error::domain("calibration target must be positive"));
    }
    let unit = pgr_efficiency_mhz_per_mw2(&t.with_beta(1.0))?;
    Ok((target_mhz_per_mw2 / unit).sqrt())
}

/// Coupling rate that maximizes the pair rate when all three resonances share
/// the same intrinsic rate: `r_e = 4/3 r_o`.
pub fn optimal_extrinsic_rate(intrinsic_rate: f64) -> f64 {
    4.0 / 3.0 * intrinsic_rate
}

/// Classical stimulated four-wave-mixing conversion efficiency.
pub fn stimulated_efficiency(t: &ResonatorTriplet, pump_power: f64) -> Result<f64> {
    if !(pump_power >= 0.0) {
        return Err(Error::domain("pump power must be non-negative"));
    }
    let rates = t.rates()?;
    Ok(eta_from_rates(
        t.pump.angular_frequency(),
        t.beta_fwm,
        &rates,
        t.fsr_mismatch,
        pump_power,
    ))
}

pub fn eta_from_rates(
    pump_omega: f64,
    beta_fwm: f64,
    rates: &[DecayRates; 3],
    fsr_mismatch: f64,
    pump_power: f64,
) -> f64 {
    let [s, p, i] = rates;
    let pump_build = 2.0 * p.extrinsic / (p.total * p.total);
    let signal_term = 2.0 * s.extrinsic / (s.total * s.total);
    let mismatch = 2.0 * PI * fsr_mismatch;
    let idler_term = 2.0 * i.extrinsic / (mismatch * mismatch + i.total * i.total);
    pump_omega.powi(2) * beta_fwm.powi(2) * pump_build.powi(2) * signal_term * idler_term * pump_power.powi(2)
}

/// Rates for the equal-rate case used in coupling scans.
pub fn equal_rates(extrinsic: f64, intrinsic: f64) -> [DecayRates; 3] {
    let r = DecayRates {
        extrinsic,
        intrinsic,
        total: extrinsic + intrinsic,
    };
    [r; 3]
}

/// All-pass through-port power transmission at `detuning` (rad/s).
pub fn through_transmission(t: &ResonatorTriplet, detuning: f64, which: Resonance) -> Result<f64> {
    let r = decay_rates(t.resonance(which))?;
    Ok(all_pass_transmission(&r, detuning))
}

pub fn all_pass_transmission(r: &DecayRates, detuning: f64) -> f64 {
    let d2 = detuning * detuning;
    let diff = r.intrinsic - r.extrinsic;
    (d2 + diff * diff) / (d2 + r.total * r.total)
}

/// Fraction of bus power dropped into the cavity (1 − T).
pub fn dropped_fraction(r: &DecayRates, detuning: f64) -> f64 {
    4.0 * r.extrinsic * r.intrinsic / (detuning * detuning + r.total * r.total)
}
