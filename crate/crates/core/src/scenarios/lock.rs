//! Closed-loop stepping of one ring: AFE read, controller update, heater
//! command, plant advance.

use serde::Serialize;

use crate::afe::Afe;
use crate::cmt::dropped_fraction;
use crate::controller::{Controller, LockConfig, Stage};
use crate::error::{Error, Result};
use crate::plant::{Plant, ThermalRing};

/// Heater power for a DAC code: the delta-sigma mean `code / 2^N · P_fs`.
pub fn heater_power(code: u32, dac_bits: u32, full_scale: f64) -> f64 {
    full_scale * code as f64 / (1u64 << dac_bits) as f64
}

/// One controller update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LockSample {
    /// s
    pub time: f64,
    pub stage: Stage,
    /// Heater code applied after this update.
    pub dac_code: u32,
    /// Averaged ADC reading the update consumed.
    pub reading: f64,
    pub setpoint: Option<f64>,
    /// A
    pub photocurrent: f64,
    /// Through-port pump transmission.
    pub transmission: f64,
    /// Pump power dropped into the ring (W).
    pub dropped_power: f64,
}

/// A controller wired to ring `ring` of a plant through an AFE.
#[derive(Debug, Clone)]
pub struct LockLoop {
    pub plant: Plant,
    pub afe: Afe,
    pub controller: Controller,
    pub ring: usize,
    /// Heater power at full scale (W).
    pub full_scale: f64,
}

impl LockLoop {
    /// Applies the controller's initial code to the heater and settles.
    pub fn new(mut plant: Plant, afe: Afe, controller: Controller, ring: usize, full_scale: f64) -> Result<Self> {
        let bits = controller.config().dac_bits;
        plant.set_heater(ring, heater_power(controller.dac_code(), bits, full_scale))?;
        plant.settle()?;
        Ok(Self {
            plant,
            afe,
            controller,
            ring,
            full_scale,
        })
    }

    /// Calibrate the AFE offsets with the ring at its present state, which
    /// should be far from resonance.
    pub fn calibrate_afe(&mut self) -> Result<()> {
        let i = self.plant.readout(self.ring).photocurrent;
        self.afe.calibrate(i)?;
        Ok(())
    }

    pub fn set_ring_heater(&mut self, ring: usize, code: u32) -> Result<()> {
        let bits = self.controller.config().dac_bits;
        self.plant.set_heater(ring, heater_power(code, bits, self.full_scale))
    }

    /// Change the TIA gain. A new gain invalidates the AFE operating point,
    /// so the ring is cooled, the AFE recalibrated and the controller
    /// restarted from its calibration sweep.
    pub fn set_afe_gain(&mut self, gain_bits: u8) -> Result<()> {
        self.afe.set_gain(gain_bits)?;
        if self.afe.is_calibrated() {
            return Ok(());
        }
        self.set_ring_heater(self.ring, 0)?;
        self.plant.settle()?;
        self.calibrate_afe()?;
        self.controller = Controller::new(*self.controller.config())?;
        self.set_ring_heater(self.ring, self.controller.dac_code())?;
        self.plant.settle()
    }

    /// Read, update, actuate and let the plant evolve for one period.
    pub fn step(&mut self) -> Result<LockSample> {
        let readout = self.plant.readout(self.ring);
        let reading = self.afe.read(readout.photocurrent)?;
        let code = self.controller.step(reading)?;
        self.set_ring_heater(self.ring, code)?;
        let sample = LockSample {
            time: self.plant.state().time,
            stage: self.controller.stage(),
            dac_code: code,
            reading,
            setpoint: self.controller.setpoint(),
            photocurrent: readout.photocurrent,
            transmission: readout.transmission,
            dropped_power: readout.dropped_power,
        };
        self.plant.advance(self.controller.config().period())?;
        Ok(sample)
    }

    /// Step until the controller reaches regulation or loses lock, at most
    /// `max_updates` times.
    pub fn acquire(&mut self, max_updates: usize) -> Result<Vec<LockSample>> {
        let mut out = Vec::new();
        for _ in 0..max_updates {
            let s = self.step()?;
            out.push(s);
            if matches!(s.stage, Stage::Regulate | Stage::LostLock) {
                break;
            }
        }
        Ok(out)
    }
}

/// Intracavity pump power relative to an on-resonance pump, from the
/// dropped power reported by the plant.
pub fn build_up(ring: &ThermalRing, pump_power: f64, dropped_power: f64) -> Result<f64> {
    let peak = dropped_fraction(&ring.rates()?, 0.0) * pump_power;
    if !(peak > 0.0) {
        return Ok(0.0);
    }
    Ok((dropped_power / peak).clamp(0.0, 1.0))
}

/// Photocurrent extremes seen during the calibration sweep.
pub fn sweep_extremes(samples: &[LockSample]) -> Option<(f64, f64)> {
    samples
        .iter()
        .filter(|s| s.stage == Stage::CalibrateSweep)
        .map(|s| s.photocurrent)
        .fold(None, |acc, i| match acc {
            None => Some((i, i)),
            Some((lo, hi)) => Some((lo.min(i), hi.max(i))),
        })
}

/// Calibrate the AFE with ring `ring` unheated, then run the controller
/// from full heater power until it regulates.
///
/// Fails with a divergence error if regulation is not reached within
/// `max_updates`.
pub fn acquire_lock(
    plant: Plant,
    ring: usize,
    afe: Afe,
    lock: LockConfig,
    full_scale: f64,
    max_updates: usize,
) -> Result<(LockLoop, Vec<LockSample>)> {
    let mut lp = LockLoop::new(plant, afe, Controller::new(lock)?, ring, full_scale)?;
    lp.set_ring_heater(ring, 0)?;
    lp.plant.settle()?;
    lp.calibrate_afe()?;
    lp.set_ring_heater(ring, lp.controller.dac_code())?;
    lp.plant.settle()?;
    let samples = lp.acquire(max_updates)?;
    match samples.last().map(|s| s.stage) {
        Some(Stage::Regulate) => Ok((lp, samples)),
        other => Err(Error::Divergence(format!(
            "lock not acquired after {} updates (stage {other:?})",
            samples.len()
        ))),
    }
}
