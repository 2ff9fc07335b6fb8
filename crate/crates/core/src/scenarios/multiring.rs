//! One locked ring among neighbours that run their own lock acquisition at
//! staggered times, on a compressed time axis.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use crate::afe::Afe;
use crate::error::{Error, Result};
use crate::plant::{CrosstalkMatrix, Plant};
use crate::units::dbm_to_watts;

use super::config::{ScenarioConfig, Stagger};
use super::lock::{acquire_lock, build_up, heater_power};
use super::source::derive_seed;

const AFE_STREAM: u64 = 0x4d52_4146;
const COUNT_STREAM: u64 = 0x4d52_434e;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiringSample {
    /// s
    pub time: f64,
    pub dac_code: u32,
    pub reading: f64,
    pub build_up: f64,
    /// Expected first-signal-channel coincidence rate (Hz).
    pub expected_rate: f64,
    /// Aggressors that have started their acquisition.
    pub active: usize,
    /// Heater code of every ring after this update.
    pub ring_codes: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CountWindow {
    /// Window start (s).
    pub time: f64,
    pub counts: u64,
    /// Hz
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiringRun {
    pub samples: Vec<MultiringSample>,
    pub windows: Vec<CountWindow>,
    /// Aggressor start times (s), by ring.
    pub starts: Vec<(usize, f64)>,
    /// DAC codes each aggressor replays from its start.
    pub waveform: Vec<u32>,
    /// Relative standard deviation of the windowed rates.
    pub rate_rsd: f64,
    pub mean_rate: f64,
    /// Max − min DAC code of the locked ring over the run.
    pub dac_swing: u32,
    pub compression: f64,
}

/// DAC codes of a lone ring going through lock acquisition at the
/// multiring pump power.
pub fn acquisition_waveform(cfg: &ScenarioConfig) -> Result<Vec<u32>> {
    let m = &cfg.multiring;
    let mut plant = Plant::single(cfg.ring)?;
    plant.set_pump(0, cfg.ring.cold_resonance + cfg.pump.offset, dbm_to_watts(m.pump_dbm))?;
    let afe = Afe::new(cfg.afe, derive_seed(cfg.seed, AFE_STREAM ^ 1))?;
    let (_, samples) = acquire_lock(
        plant,
        0,
        afe,
        cfg.lock,
        cfg.heater_full_scale(),
        cfg.aggressor.max_acquire_updates,
    )?;
    Ok(samples.iter().map(|s| s.dac_code).collect())
}

fn start_times(cfg: &ScenarioConfig) -> Vec<(usize, f64)> {
    let m = &cfg.multiring;
    let span = m.experiment_duration / m.compression;
    let others: Vec<usize> = (0..m.rings).filter(|&r| r != m.locked_ring).collect();
    let n = others.len();
    others
        .into_iter()
        .enumerate()
        .map(|(k, r)| {
            let t = match m.stagger {
                Stagger::Uniform if n > 1 => span * k as f64 / (n - 1) as f64,
                _ => 0.0,
            };
            (r, t)
        })
        .collect()
}

/// The configured chain of rings.
pub fn run_multiring(cfg: &ScenarioConfig) -> Result<MultiringRun> {
    let m = &cfg.multiring;
    run_multiring_with(cfg, CrosstalkMatrix::chain(m.rings, m.crosstalk, m.falloff))
}

/// The locked ring alone, on the same timeline as the chain.
pub fn run_multiring_solo(cfg: &ScenarioConfig) -> Result<MultiringRun> {
    simulate(cfg, CrosstalkMatrix::identity(1), 0, false)
}

pub fn run_multiring_with(cfg: &ScenarioConfig, crosstalk: CrosstalkMatrix) -> Result<MultiringRun> {
    let m = &cfg.multiring;
    if crosstalk.len() != m.rings {
        return Err(Error::config("crosstalk matrix size differs from the ring count"));
    }
    simulate(cfg, crosstalk, m.locked_ring, true)
}

fn simulate(cfg: &ScenarioConfig, crosstalk: CrosstalkMatrix, locked: usize, drive: bool) -> Result<MultiringRun> {
    let m = &cfg.multiring;
    let waveform = acquisition_waveform(cfg)?;
    let full_scale = cfg.heater_full_scale();
    let bits = cfg.lock.dac_bits;
    let pump = dbm_to_watts(m.pump_dbm);
    let mut plant = Plant::new(vec![cfg.ring; crosstalk.len()], crosstalk, m.crosstalk_tau)?;
    plant.set_pump(locked, cfg.ring.cold_resonance + cfg.pump.offset, pump)?;
    plant.equilibrate_crosstalk();
    let afe = Afe::new(cfg.afe, derive_seed(cfg.seed, AFE_STREAM))?;
    let (mut lp, _) = acquire_lock(
        plant,
        locked,
        afe,
        cfg.lock,
        full_scale,
        cfg.aggressor.max_acquire_updates,
    )?;
    let period = cfg.lock.period();
    for _ in 0..(m.settle / period).round() as usize {
        lp.step()?;
    }
    let starts = start_times(cfg);
    let last = starts.iter().map(|s| s.1).fold(0.0, f64::max);
    let total = last + waveform.len() as f64 * period + m.tail;
    let updates = (total / period).ceil() as usize;
    let model = cfg.source.model()?;
    let det = &cfg.detection;
    let t0 = lp.plant.state().time;
    let mut samples = Vec::with_capacity(updates);
    let mut codes = vec![0u32; lp.plant.len()];
    for u in 0..updates {
        let t = u as f64 * period;
        let mut active = 0;
        for &(ring, start) in &starts {
            if t + 1e-9 * period >= start {
                active += 1;
                let k = ((t - start) / period + 1e-9).floor() as usize;
                if drive {
                    codes[ring] = waveform[k.min(waveform.len() - 1)];
                    lp.plant.set_heater(ring, heater_power(codes[ring], bits, full_scale))?;
                }
            }
        }
        let s = lp.step()?;
        codes[locked] = s.dac_code;
        let b = build_up(&cfg.ring, pump, s.dropped_power)?;
        let rate = det
            .expected(model.pair_rate(pump, b)?, pump, model.pair_sigma)
            .coincidences[0];
        samples.push(MultiringSample {
            time: s.time - t0,
            dac_code: s.dac_code,
            reading: s.reading,
            build_up: b,
            expected_rate: rate,
            active,
            ring_codes: codes.clone(),
        });
    }
    let windows = count_windows(&samples, period, m.count_window, derive_seed(cfg.seed, COUNT_STREAM))?;
    let rates: Vec<f64> = windows.iter().map(|w| w.rate).collect();
    let n = rates.len() as f64;
    let mean_rate = rates.iter().sum::<f64>() / n;
    let var = rates.iter().map(|r| (r - mean_rate).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let codes = samples.iter().map(|s| s.dac_code);
    let dac_swing = codes.clone().max().unwrap_or(0) - codes.min().unwrap_or(0);
    Ok(MultiringRun {
        samples,
        windows,
        starts,
        waveform,
        rate_rsd: var.sqrt() / mean_rate,
        mean_rate,
        dac_swing,
        compression: m.compression,
    })
}

/// Poisson counts of the expected rate integrated over consecutive windows.
/// A trailing partial window is dropped.
fn count_windows(samples: &[MultiringSample], period: f64, window: f64, seed: u64) -> Result<Vec<CountWindow>> {
    let per = (window / period).round().max(1.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(samples.len() / per);
    for chunk in samples.chunks_exact(per) {
        let mean: f64 = chunk.iter().map(|s| s.expected_rate * period).sum();
        let counts = if mean > 0.0 {
            Poisson::new(mean)
                .map_err(|e| Error::Domain(e.to_string()))?
                .sample(&mut rng) as u64
        } else {
            0
        };
        let span = per as f64 * period;
        out.push(CountWindow {
            time: chunk[0].time,
            counts,
            rate: counts as f64 / span,
        });
    }
    if out.len() < 2 {
        return Err(Error::config("run too short for two counting windows"));
    }
    Ok(out)
}
