//! Three-stage resonance lock: hot-to-cold calibration sweep, reset to the hot
//! state, then PI regulation of the averaged photocurrent reading.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct LockConfig {
    /// Setpoint as a fraction of the way from dark to peak reading.
    pub target_fraction: f64,
    /// Half-width of the hold band around the setpoint (ADC codes).
    pub deadband: f64,
    /// DAC codes per ADC code of error.
    pub kp: f64,
    /// DAC codes per ADC code of error, per update.
    pub ki: f64,
    /// DAC decrement per update during the sweep and approach stages.
    pub sweep_step: u32,
    /// Hz
    pub update_rate: f64,
    pub dac_bits: u32,
    /// Approach ends once the reading exceeds dark + this fraction of span.
    pub approach_fraction: f64,
    /// Readings below dark + this fraction of span count toward lost lock.
    pub lost_fraction: f64,
    /// Consecutive low readings before declaring lost lock.
    pub lost_count: u32,
}

impl Default for LockConfig {
    fn default() -> Self {
        Self {
            target_fraction: 0.95,
            deadband: 2.0,
            kp: 0.3,
            ki: 0.3,
            sweep_step: 4,
            update_rate: 10.0,
            dac_bits: 10,
            approach_fraction: 0.25,
            lost_fraction: 0.10,
            lost_count: 5,
        }
    }
}

impl LockConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_fraction > 0.0 && self.target_fraction < 1.0) {
            return Err(Error::config("target fraction must lie in (0, 1)"));
        }
        if !(self.deadband >= 1.0) {
            return Err(Error::config("deadband must be at least 1 code"));
        }
        if !(self.kp >= 0.0 && self.ki >= 0.0) {
            return Err(Error::config("PI gains must be non-negative"));
        }
        if self.sweep_step == 0 {
            return Err(Error::config("sweep step must be at least 1 code"));
        }
        if !(self.update_rate > 0.0) {
            return Err(Error::config("update rate must be positive"));
        }
        if !(1..=24).contains(&self.dac_bits) {
            return Err(Error::config("DAC width must be 1..=24 bits"));
        }
        if !(0.0 < self.lost_fraction
            && self.lost_fraction < self.approach_fraction
            && self.approach_fraction < self.target_fraction)
        {
            return Err(Error::config(
                "need 0 < lost fraction < approach fraction < target fraction",
            ));
        }
        if self.lost_count == 0 {
            return Err(Error::config("lost-lock count must be at least 1"));
        }
        Ok(())
    }

    pub fn max_dac(&self) -> u32 {
        (1 << self.dac_bits) - 1
    }

    /// Seconds between updates.
    pub fn period(&self) -> f64 {
        1.0 / self.update_rate
    }
}

/// `dark + round(fraction·(max − dark))`.
pub fn setpoint_code(dark: f64, max: f64, fraction: f64) -> Result<f64> {
    if !(max > dark) {
        return Err(Error::State(format!(
            "calibration invalid: peak reading {max} not above dark reading {dark}"
        )));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::domain("target fraction must lie in [0, 1]"));
    }
    Ok(dark + (fraction * (max - dark)).round())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    CalibrateSweep,
    Reinitialize,
    Approach,
    Regulate,
    LostLock,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockState {
    pub stage: Stage,
    /// Lowest reading seen during the sweep.
    pub dark_code: f64,
    /// Highest reading seen during the sweep.
    pub max_code: f64,
    pub integrator: f64,
    pub dac_code: u32,
    low_readings: u32,
    calibrated: bool,
}

#[derive(Debug, Clone)]
pub struct Controller {
    cfg: LockConfig,
    state: LockState,
    frozen: bool,
}

impl Controller {
    /// Starts in the calibration sweep with the heater at full scale.
    pub fn new(cfg: LockConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            state: LockState {
                stage: Stage::CalibrateSweep,
                dark_code: f64::INFINITY,
                max_code: f64::NEG_INFINITY,
                integrator: cfg.max_dac() as f64,
                dac_code: cfg.max_dac(),
                low_readings: 0,
                calibrated: false,
            },
            cfg,
            frozen: false,
        })
    }

    pub fn config(&self) -> &LockConfig {
        &self.cfg
    }

    pub fn state(&self) -> &LockState {
        &self.state
    }

    pub fn stage(&self) -> Stage {
        self.state.stage
    }

    pub fn dac_code(&self) -> u32 {
        self.state.dac_code
    }

    /// Reading the regulator aims for, once calibrated.
    pub fn setpoint(&self) -> Option<f64> {
        if !self.state.calibrated {
            return None;
        }
        setpoint_code(self.state.dark_code, self.state.max_code, self.cfg.target_fraction).ok()
    }

    fn span(&self) -> f64 {
        self.state.max_code - self.state.dark_code
    }

    /// Hold the DAC output regardless of readings (feedback off).
    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Enter regulation directly from the present DAC code.
    pub fn enter_regulate(&mut self) -> Result<()> {
        if !self.state.calibrated {
            return Err(Error::State("regulation requires a completed calibration sweep".into()));
        }
        self.setpoint()
            .ok_or_else(|| Error::State("calibration produced no usable span".into()))?;
        self.state.stage = Stage::Regulate;
        self.state.integrator = self.state.dac_code as f64;
        self.state.low_readings = 0;
        Ok(())
    }

    /// Consume the averaged reading taken at the current DAC code and return
    /// the code to apply until the next update.
    pub fn step(&mut self, reading: f64) -> Result<u32> {
        if !reading.is_finite() {
            return Err(Error::domain("ADC reading must be finite"));
        }
        if self.frozen {
            return Ok(self.state.dac_code);
        }
        let max_dac = self.cfg.max_dac();
        match self.state.stage {
            Stage::CalibrateSweep => {
                self.state.dark_code = self.state.dark_code.min(reading);
                self.state.max_code = self.state.max_code.max(reading);
                if self.state.dac_code == 0 {
                    if !(self.span() > 0.0) {
                        return Err(Error::State("calibration sweep saw no photocurrent peak".into()));
                    }
                    self.state.calibrated = true;
                    self.state.stage = Stage::Reinitialize;
                    self.state.dac_code = max_dac;
                } else {
                    self.state.dac_code = self.state.dac_code.saturating_sub(self.cfg.sweep_step);
                }
            }
            Stage::Reinitialize => {
                self.state.stage = Stage::Approach;
                self.approach(reading)?;
            }
            Stage::Approach => self.approach(reading)?,
            Stage::Regulate => self.regulate(reading)?,
            Stage::LostLock => {}
        }
        Ok(self.state.dac_code)
    }

    fn approach(&mut self, reading: f64) -> Result<()> {
        let threshold = self.state.dark_code + self.cfg.approach_fraction * self.span();
        if reading > threshold {
            self.enter_regulate()?;
            self.regulate(reading)
        } else {
            if self.state.dac_code == 0 {
                self.state.stage = Stage::LostLock;
            }
            self.state.dac_code = self.state.dac_code.saturating_sub(self.cfg.sweep_step);
            Ok(())
        }
    }

    fn regulate(&mut self, reading: f64) -> Result<()> {
        let target = self
            .setpoint()
            .ok_or_else(|| Error::State("regulating without calibration".into()))?;
        let lost_below = self.state.dark_code + self.cfg.lost_fraction * self.span();
        if reading < lost_below {
            self.state.low_readings += 1;
            if self.state.low_readings >= self.cfg.lost_count {
                self.state.stage = Stage::LostLock;
                return Ok(());
            }
        } else {
            self.state.low_readings = 0;
        }
        let error = target - reading;
        if error.abs() <= self.cfg.deadband {
            return Ok(());
        }
        // More heat pushes the resonance away from the pump on the approach
        // side, lowering the reading, so the loop acts with negative sign.
        let max = self.cfg.max_dac() as f64;
        let integrator = self.state.integrator - self.cfg.ki * error;
        let output = integrator - self.cfg.kp * error;
        if (0.0..=max).contains(&output) {
            self.state.integrator = integrator;
        }
        self.state.dac_code = output.round().clamp(0.0, max) as u32;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn setpoint_examples() {
        assert_eq!(setpoint_code(40.0, 440.0, 0.95).unwrap(), 420.0);
        assert_eq!(setpoint_code(40.0, 440.0, 0.0).unwrap(), 40.0);
        assert_eq!(setpoint_code(40.0, 440.0, 1.0).unwrap(), 440.0);
        assert!(matches!(setpoint_code(40.0, 40.0, 0.5), Err(Error::State(_))));
    }

    #[test]
    fn config_validation() {
        let bad = LockConfig {
            deadband: 0.5,
            ..LockConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = LockConfig {
            target_fraction: 1.0,
            ..LockConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(LockConfig::default().validate().is_ok());
    }

    #[test]
    fn regulate_needs_calibration() {
        let mut c = Controller::new(LockConfig::default()).unwrap();
        assert!(matches!(c.enter_regulate(), Err(Error::State(_))));
    }

    /// Reading peaked at code 400 over a 10-bit DAC.
    fn peak_map(dac: u32) -> f64 {
        let x = (dac as f64 - 400.0) / 60.0;
        30.0 + 300.0 / (1.0 + x * x)
    }

    #[test]
    fn sweep_recovers_map_extrema() {
        let cfg = LockConfig {
            sweep_step: 1,
            ..LockConfig::default()
        };
        let mut c = Controller::new(cfg).unwrap();
        let mut dac = c.dac_code();
        while c.stage() == Stage::CalibrateSweep {
            dac = c.step(peak_map(dac)).unwrap();
        }
        let (lo, hi) = (0..=1023)
            .map(peak_map)
            .fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(v), b.max(v)));
        assert_eq!(c.state().dark_code, lo);
        assert_eq!(c.state().max_code, hi);
        assert_eq!(dac, 1023);
        assert_eq!(c.stage(), Stage::Reinitialize);
    }

    #[test]
    fn locks_static_map_on_high_side() {
        let mut c = Controller::new(LockConfig::default()).unwrap();
        let mut dac = c.dac_code();
        for _ in 0..600 {
            dac = c.step(peak_map(dac)).unwrap();
        }
        assert_eq!(c.stage(), Stage::Regulate);
        let sp = c.setpoint().unwrap();
        assert!((peak_map(dac) - sp).abs() <= c.config().deadband + 1.0);
        assert!(dac > 400, "locked on the wrong side: {dac}");
    }

    #[test]
    fn deadband_holds_output() {
        let mut c = Controller::new(LockConfig::default()).unwrap();
        let mut dac = c.dac_code();
        for _ in 0..600 {
            dac = c.step(peak_map(dac)).unwrap();
        }
        let sp = c.setpoint().unwrap();
        let held = c.dac_code();
        for k in 0..100 {
            let wiggle = 0.9 * c.config().deadband * ((k as f64) * 0.7).sin();
            assert_eq!(c.step(sp + wiggle).unwrap(), held);
        }
    }

    #[test]
    fn output_stays_in_range() {
        let mut c = Controller::new(LockConfig::default()).unwrap();
        let mut dac = c.dac_code();
        for _ in 0..600 {
            dac = c.step(peak_map(dac)).unwrap();
        }
        // a reading far above target drives the output up against the rail
        for _ in 0..5000 {
            let d = c.step(1e4).unwrap();
            assert!(d <= 1023);
        }
        assert_eq!(c.dac_code(), 1023);
        assert!(c.state().integrator <= 1023.0);
    }

    #[test]
    fn sustained_dark_reading_loses_lock() {
        let mut c = Controller::new(LockConfig::default()).unwrap();
        let mut dac = c.dac_code();
        for _ in 0..600 {
            dac = c.step(peak_map(dac)).unwrap();
        }
        for _ in 0..4 {
            c.step(30.0).unwrap();
        }
        assert_eq!(c.stage(), Stage::Regulate);
        c.step(30.0).unwrap();
        assert_eq!(c.stage(), Stage::LostLock);
    }

    #[test]
    fn frozen_controller_holds() {
        let mut c = Controller::new(LockConfig::default()).unwrap();
        c.set_frozen(true);
        assert_eq!(c.step(10.0).unwrap(), 1023);
        assert_eq!(c.stage(), Stage::CalibrateSweep);
    }
}
