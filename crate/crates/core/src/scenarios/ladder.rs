//! Locked source at a series of pump powers: pair rate, CAR and heralded g².

use serde::Serialize;

use crate::afe::Afe;
use crate::error::{Error, Result};
use crate::plant::Plant;
use crate::quantum::{deembed, path_loss_db, HeraldedCounts};
use crate::units::dbm_to_watts;

use super::config::ScenarioConfig;
use super::lock::{acquire_lock, build_up};
use super::source::{acquire_photons, derive_seed, AcquisitionPlan, ExpectedRates};

const AFE_STREAM: u64 = 0x4c41_4446;
const PHOTON_STREAM: u64 = 0x4c41_5048;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderPoint {
    pub power_dbm: f64,
    pub build_up: f64,
    /// On-chip pairs/s from the source model.
    pub pair_rate: f64,
    pub expected: ExpectedRates,
    /// Simulated seconds of photon counting.
    pub integration_time: f64,
    /// Per signal channel; `None` where the peak fit failed.
    pub car: [Option<f64>; 2],
    /// Background-subtracted coincidences/s summed over fitted channels.
    pub detected_rate: Option<f64>,
    /// `detected_rate` with the per-path losses removed.
    pub deembedded_rate: Option<f64>,
    pub heralded: HeraldedCounts,
    pub g2: Option<f64>,
}

impl LadderPoint {
    pub fn fit_ok(&self) -> bool {
        self.car.iter().all(Option::is_some)
    }
}

pub fn run_power_ladder(cfg: &ScenarioConfig) -> Result<Vec<LadderPoint>> {
    let l = &cfg.power_ladder;
    let plan = AcquisitionPlan {
        min_time: l.min_integration,
        max_time: l.max_integration,
        block: l.block,
        min_threefolds: l.min_threefolds,
    };
    let model = cfg.source.model()?;
    let det = &cfg.detection;
    let eff = det.efficiencies();
    let routes = det.routes();
    let losses = [1, 2].map(|k| path_loss_db(eff[0], eff[k], routes[k]));
    let mut out = Vec::with_capacity(l.powers_dbm.len());
    for (index, &p_dbm) in l.powers_dbm.iter().enumerate() {
        let pump = dbm_to_watts(p_dbm);
        let mut plant = Plant::single(cfg.ring)?;
        plant.set_pump(0, cfg.ring.cold_resonance + cfg.pump.offset, pump)?;
        let afe = Afe::new(cfg.afe, derive_seed(cfg.seed, AFE_STREAM + index as u64))?;
        let (mut lp, _) = acquire_lock(
            plant,
            0,
            afe,
            cfg.lock,
            cfg.heater_full_scale(),
            cfg.aggressor.max_acquire_updates,
        )?;
        for _ in 0..l.settle_updates {
            lp.step()?;
        }
        let mut sum = 0.0;
        for _ in 0..l.average_updates {
            sum += build_up(&cfg.ring, pump, lp.step()?.dropped_power)?;
        }
        let b = sum / l.average_updates as f64;
        let pair_rate = model.pair_rate(pump, b)?;
        if !(pair_rate > 0.0) {
            return Err(Error::Divergence(format!("no pairs at {p_dbm} dBm")));
        }
        let m = acquire_photons(
            det,
            &model,
            pair_rate,
            pump,
            &plan,
            derive_seed(cfg.seed, PHOTON_STREAM + index as u64),
        )?;
        let detected_rate = m.total_rate();
        let fitted: Vec<f64> = m
            .channels
            .iter()
            .zip(losses)
            .filter_map(|(c, loss)| c.car.map(|_| loss))
            .collect();
        let deembedded_rate = match detected_rate {
            Some(r) => Some(deembed(r, &fitted)?),
            None => None,
        };
        out.push(LadderPoint {
            power_dbm: p_dbm,
            build_up: b,
            pair_rate,
            expected: det.expected(pair_rate, pump, model.pair_sigma),
            integration_time: m.integration_time,
            car: [m.channels[0].car.map(|c| c.car), m.channels[1].car.map(|c| c.car)],
            detected_rate,
            deembedded_rate,
            heralded: m.heralded,
            g2: m.heralded.g2(),
        });
    }
    Ok(out)
}
