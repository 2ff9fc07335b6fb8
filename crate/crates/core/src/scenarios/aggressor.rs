//! A locked ring next to a heater toggling between two powers, with the
//! feedback loop running and with it frozen.

use serde::Serialize;

use crate::afe::{Afe, CalibrationPoint};
use crate::controller::{LockConfig, Stage};
use crate::error::{Error, Result};
use crate::plant::{CrosstalkMatrix, Plant};
use crate::units::dbm_to_watts;

use super::config::ScenarioConfig;
use super::lock::{acquire_lock, build_up, heater_power, sweep_extremes, LockLoop, LockSample};
use super::source::{acquire_photons, derive_seed, AcquisitionPlan, ChannelAnalysis, ExpectedRates};

const LOCKED_RING: usize = 0;
const AGGRESSOR_RING: usize = 1;
/// Seed label of the photon acquisition at the locked point.
const PHOTON_STREAM: u64 = 0x5048_4f54;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggressorSample {
    /// Aggressor heater power during this update (W).
    pub aggressor_power: f64,
    pub feedback: bool,
    #[serde(flatten)]
    pub lock: LockSample,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggressorRun {
    pub samples: Vec<AggressorSample>,
    /// Times of the aggressor edges (s).
    pub edges: Vec<f64>,
}

/// Photon statistics at the locked operating point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LockedPoint {
    /// W
    pub pump_power: f64,
    /// Mean intracavity pump fraction over the regulated samples.
    pub build_up: f64,
    /// On-chip pairs/s.
    pub pair_rate: f64,
    pub expected: ExpectedRates,
    pub integration_time: f64,
    pub channels: [ChannelAnalysis; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LockExperiment {
    /// Frontend offset scan taken with the ring unheated.
    pub calibration_scan: Vec<CalibrationPoint>,
    /// Calibration sweep and approach.
    pub acquisition: Vec<LockSample>,
    pub feedback_on: AggressorRun,
    pub feedback_off: AggressorRun,
    pub setpoint: f64,
    pub deadband: f64,
    /// Photocurrent extremes of the calibration sweep (A).
    pub dark_current: f64,
    pub peak_current: f64,
    /// Time regulation started (s).
    pub regulate_from: f64,
    /// Span after each edge excluded from the regulation check (s).
    pub transient: f64,
    pub locked: Option<LockedPoint>,
}

impl LockExperiment {
    /// Photocurrent below which the ring counts as unlocked (A).
    pub fn lost_threshold(&self, fraction: f64) -> f64 {
        self.dark_current + fraction * (self.peak_current - self.dark_current)
    }

    /// Whether a sample lies outside every transient window.
    pub fn is_steady(&self, run: &AggressorRun, s: &AggressorSample) -> bool {
        let t = s.lock.time;
        t >= self.regulate_from + self.transient && !run.edges.iter().any(|&e| t >= e && t < e + self.transient)
    }

    /// Largest |reading − setpoint| over the steady samples.
    pub fn max_regulation_error(&self, run: &AggressorRun) -> f64 {
        run.samples
            .iter()
            .filter(|s| self.is_steady(run, s))
            .map(|s| (s.lock.reading - self.setpoint).abs())
            .fold(0.0, f64::max)
    }

    /// First time the photocurrent falls below the lost-lock threshold.
    pub fn lost_at(&self, run: &AggressorRun, fraction: f64) -> Option<f64> {
        let limit = self.lost_threshold(fraction);
        run.samples
            .iter()
            .find(|s| s.lock.photocurrent < limit)
            .map(|s| s.lock.time)
    }

    /// Whether the photocurrent comes back above the threshold after the
    /// first loss.
    pub fn recovers(&self, run: &AggressorRun, fraction: f64) -> bool {
        let limit = self.lost_threshold(fraction);
        match self.lost_at(run, fraction) {
            None => false,
            Some(t) => run
                .samples
                .iter()
                .any(|s| s.lock.time > t && s.lock.photocurrent >= limit),
        }
    }
}

/// Two-ring plant with the pump on the locked ring.
fn aggressor_plant(cfg: &ScenarioConfig, crosstalk: f64) -> Result<Plant> {
    let k = cfg.aggressor.crosstalk_tau;
    let mut plant = Plant::new(vec![cfg.ring; 2], CrosstalkMatrix::uniform(2, crosstalk), k)?;
    plant.set_pump(
        LOCKED_RING,
        cfg.ring.cold_resonance + cfg.pump.offset,
        dbm_to_watts(cfg.pump.power_dbm),
    )?;
    Ok(plant)
}

fn steps_for(duration: f64, lock: &LockConfig) -> usize {
    (duration * lock.update_rate).round() as usize
}

/// Hold the aggressor at `initial`, then toggle between `other` and
/// `initial` for `cycles` full periods starting with `other`. With `freeze`,
/// the controller output is held from the first edge on.
fn square_wave(
    lp: &mut LockLoop,
    initial: f64,
    other: f64,
    hold: f64,
    half_period: f64,
    cycles: usize,
    freeze: bool,
) -> Result<AggressorRun> {
    let cfg = *lp.controller.config();
    let mut run = AggressorRun {
        samples: Vec::new(),
        edges: Vec::new(),
    };
    let record = |lp: &mut LockLoop, power: f64, run: &mut AggressorRun| -> Result<()> {
        let lock = lp.step()?;
        run.samples.push(AggressorSample {
            aggressor_power: power,
            feedback: !lp.controller.is_frozen(),
            lock,
        });
        Ok(())
    };
    lp.plant.set_heater(AGGRESSOR_RING, initial)?;
    for _ in 0..steps_for(hold, &cfg) {
        record(lp, initial, &mut run)?;
    }
    if freeze {
        lp.controller.set_frozen(true);
    }
    for edge in 0..2 * cycles {
        let power = if edge % 2 == 0 { other } else { initial };
        lp.plant.set_heater(AGGRESSOR_RING, power)?;
        run.edges.push(lp.plant.state().time);
        for _ in 0..steps_for(half_period, &cfg) {
            record(lp, power, &mut run)?;
        }
    }
    Ok(run)
}

/// Lock with the aggressor high, then drive the configured square wave
/// twice from the same locked state: once regulated, once frozen.
pub fn lock_with_aggressor(cfg: &ScenarioConfig, high: f64, low: f64) -> Result<LockExperiment> {
    let a = &cfg.aggressor;
    let mut plant = aggressor_plant(cfg, a.crosstalk)?;
    plant.set_heater(AGGRESSOR_RING, high)?;
    plant.equilibrate_crosstalk();
    let afe = Afe::new(cfg.afe, derive_seed(cfg.seed, LOCKED_RING as u64))?;
    let (lp, acquisition) = acquire_lock(
        plant,
        LOCKED_RING,
        afe,
        cfg.lock,
        cfg.heater_full_scale(),
        a.max_acquire_updates,
    )?;
    let setpoint = lp
        .controller
        .setpoint()
        .ok_or_else(|| Error::State("regulating without a setpoint".into()))?;
    let (dark, peak) =
        sweep_extremes(&acquisition).ok_or_else(|| Error::State("no calibration sweep recorded".into()))?;
    let regulate_from = acquisition.last().map(|s| s.time).unwrap_or(0.0);
    let calibration_scan = lp.afe.calibration().map(|c| c.scan.clone()).unwrap_or_default();
    let mut on_loop = lp.clone();
    let mut off_loop = lp;
    let feedback_on = square_wave(&mut on_loop, high, low, a.hold, a.half_period, a.cycles, false)?;
    let feedback_off = square_wave(&mut off_loop, high, low, a.hold, a.half_period, a.cycles, true)?;
    Ok(LockExperiment {
        calibration_scan,
        acquisition,
        feedback_on,
        feedback_off,
        setpoint,
        deadband: cfg.lock.deadband,
        dark_current: dark,
        peak_current: peak,
        regulate_from,
        transient: a.transient,
        locked: None,
    })
}

/// The aggressor experiment with the configured DAC codes, plus photon
/// statistics at the regulated operating point.
pub fn run_lock_with_aggressor(cfg: &ScenarioConfig) -> Result<LockExperiment> {
    let a = &cfg.aggressor;
    let fs = cfg.heater_full_scale();
    let bits = cfg.lock.dac_bits;
    let mut exp = lock_with_aggressor(
        cfg,
        heater_power(a.high_code, bits, fs),
        heater_power(a.low_code, bits, fs),
    )?;
    let pump = dbm_to_watts(cfg.pump.power_dbm);
    let steady: Vec<f64> = exp
        .feedback_on
        .samples
        .iter()
        .filter(|s| exp.is_steady(&exp.feedback_on, s))
        .map(|s| build_up(&cfg.ring, pump, s.lock.dropped_power))
        .collect::<Result<_>>()?;
    if steady.is_empty() {
        return Err(Error::Divergence("no steady regulated samples".into()));
    }
    let mean = steady.iter().sum::<f64>() / steady.len() as f64;
    exp.locked = Some(locked_point(cfg, pump, mean, derive_seed(cfg.seed, PHOTON_STREAM))?);
    Ok(exp)
}

/// Photon statistics for a ring held at intracavity fraction `build_up`.
/// Fails with a fit error when either coincidence peak cannot be fitted.
pub fn locked_point(cfg: &ScenarioConfig, pump: f64, build_up: f64, seed: u64) -> Result<LockedPoint> {
    let model = cfg.source.model()?;
    let pair_rate = model.pair_rate(pump, build_up)?;
    let det = &cfg.detection;
    let m = acquire_photons(
        det,
        &model,
        pair_rate,
        pump,
        &AcquisitionPlan::fixed(det.integration_time),
        seed,
    )?;
    if let Some(k) = m.channels.iter().position(|c| c.car.is_none()) {
        return Err(Error::Fit(format!(
            "no coincidence peak in signal channel {} at the locked point",
            k + 1
        )));
    }
    Ok(LockedPoint {
        pump_power: pump,
        build_up,
        pair_rate,
        expected: det.expected(pair_rate, pump, model.pair_sigma),
        integration_time: m.integration_time,
        channels: m.channels,
    })
}

/// Tolerable aggressor swing for one target fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Robustness {
    pub target_fraction: f64,
    /// Largest swing that kept the lock, in units of full-scale heater
    /// power. Equals the search ceiling if nothing failed.
    pub max_amplitude: f64,
}

/// Whether the regulated loop rides out a square wave of `amplitude` full
/// scales without its photocurrent dropping to the lost level.
pub fn survives(cfg: &ScenarioConfig, amplitude: f64) -> Result<bool> {
    let a = &cfg.aggressor;
    let fs = cfg.heater_full_scale();
    let mut plant = aggressor_plant(cfg, a.crosstalk)?;
    plant.equilibrate_crosstalk();
    let afe = Afe::new(cfg.afe, derive_seed(cfg.seed, LOCKED_RING as u64))?;
    let (mut lp, acquisition) = match acquire_lock(plant, LOCKED_RING, afe, cfg.lock, fs, a.max_acquire_updates) {
        Ok(v) => v,
        Err(Error::Divergence(_)) => return Ok(false),
        Err(e) => return Err(e),
    };
    let (dark, peak) =
        sweep_extremes(&acquisition).ok_or_else(|| Error::State("no calibration sweep recorded".into()))?;
    let limit = dark + cfg.lock.lost_fraction * (peak - dark);
    // Heat first so that the second edge is the cooling one.
    let run = square_wave(
        &mut lp,
        0.0,
        amplitude * fs,
        a.hold,
        a.half_period,
        a.cycles.max(1),
        false,
    )?;
    Ok(run
        .samples
        .iter()
        .all(|s| s.lock.photocurrent >= limit && s.lock.stage == Stage::Regulate))
}

/// Bisect the largest tolerable aggressor swing for each target fraction.
pub fn lock_robustness(cfg: &ScenarioConfig) -> Result<Vec<Robustness>> {
    let r = &cfg.robustness;
    let mut out = Vec::with_capacity(r.target_fractions.len());
    for &fraction in &r.target_fractions {
        let mut c = cfg.clone();
        c.lock.target_fraction = fraction;
        c.validate()?;
        let (mut lo, mut hi) = (0.0, r.max_amplitude);
        let max_amplitude = if survives(&c, hi)? {
            hi
        } else {
            for _ in 0..r.bisections {
                let mid = 0.5 * (lo + hi);
                if survives(&c, mid)? {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        out.push(Robustness {
            target_fraction: fraction,
            max_amplitude,
        });
    }
    Ok(out)
}
