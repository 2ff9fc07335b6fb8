//! Forward and reverse pump sweeps over a power ladder.

use serde::Serialize;

use crate::afe::{adc_read, Afe};
use crate::error::Result;
use crate::plant::{hysteresis_width, wavelength_sweep, Plant, SweepDirection, SweepTrace, ThermalRing};
use crate::units::dbm_to_watts;

use super::config::{HysteresisConfig, ScenarioConfig};
use super::source::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct HysteresisPoint {
    pub power_dbm: f64,
    /// m
    pub width: f64,
    pub forward: SweepTrace,
    /// In ascending wavelength order, like `forward`.
    pub reverse: SweepTrace,
    /// Noise-free ADC codes through a frontend calibrated in the dark.
    pub adc_forward: Vec<u32>,
    pub adc_reverse: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WidthRow {
    pub power_dbm: f64,
    pub width_nm: f64,
}

impl HysteresisPoint {
    pub fn summary(&self) -> WidthRow {
        WidthRow {
            power_dbm: self.power_dbm,
            width_nm: self.width * 1e9,
        }
    }
}

pub fn sweep_grid(ring: &ThermalRing, h: &HysteresisConfig) -> Vec<f64> {
    let n = h.points;
    (0..n)
        .map(|k| ring.cold_resonance + h.start + (h.stop - h.start) * k as f64 / (n - 1) as f64)
        .collect()
}

fn reversed(mut t: SweepTrace) -> SweepTrace {
    t.wavelength.reverse();
    t.transmission.reverse();
    t.photocurrent.reverse();
    t.offset.reverse();
    t
}

/// Sweep both directions at one bus power (W).
pub fn sweep_pair(ring: &ThermalRing, h: &HysteresisConfig, power: f64) -> Result<(SweepTrace, SweepTrace, f64)> {
    let grid = sweep_grid(ring, h);
    let run = |dir| -> Result<SweepTrace> {
        let mut plant = Plant::single(*ring)?;
        plant.set_pump(0, grid[0], power)?;
        wavelength_sweep(&mut plant, 0, &grid, h.rate, dir)
    };
    let forward = run(SweepDirection::Forward)?;
    let reverse = run(SweepDirection::Reverse)?;
    let width = hysteresis_width(&forward, &reverse, h.threshold)?;
    Ok((forward, reversed(reverse), width))
}

pub fn run_hysteresis(cfg: &ScenarioConfig) -> Result<Vec<HysteresisPoint>> {
    let h = &cfg.hysteresis;
    let mut afe = Afe::new(cfg.afe, derive_seed(cfg.seed, 0))?;
    afe.calibrate(cfg.ring.dark_current)?;
    let afe_cfg = *afe.config();
    let codes =
        |t: &SweepTrace| -> Result<Vec<u32>> { t.photocurrent.iter().map(|&i| adc_read(i, &afe_cfg)).collect() };
    let mut out = Vec::with_capacity(h.powers_dbm.len());
    for &p in &h.powers_dbm {
        let (forward, reverse, width) = sweep_pair(&cfg.ring, h, dbm_to_watts(p))?;
        out.push(HysteresisPoint {
            power_dbm: p,
            width,
            adc_forward: codes(&forward)?,
            adc_reverse: codes(&reverse)?,
            forward,
            reverse,
        });
    }
    Ok(out)
}
