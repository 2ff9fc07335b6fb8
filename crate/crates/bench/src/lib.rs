//! Fixtures shared by the kernel benchmarks.

use ringlock_core::afe::Afe;
use ringlock_core::plant::Plant;
use ringlock_core::quantum::{
    simulate_timestamps, ChannelSet, PairSource, PhotonChannelModel, TimestampSet, DEFAULT_EVENT_CAP,
};
use ringlock_core::scenarios::{acquire_lock, LockLoop, ScenarioConfig};
use ringlock_core::units::dbm_to_watts;

/// Single ring regulating at the default pump point.
pub fn locked_loop() -> LockLoop {
    let cfg = ScenarioConfig::default();
    let mut plant = Plant::single(cfg.ring).expect("default ring");
    plant
        .set_pump(
            0,
            cfg.ring.cold_resonance + cfg.pump.offset,
            dbm_to_watts(cfg.pump.power_dbm),
        )
        .expect("pump");
    let afe = Afe::new(cfg.afe, 1).expect("afe");
    acquire_lock(plant, 0, afe, cfg.lock, cfg.heater_full_scale(), 2000)
        .expect("lock")
        .0
}

/// Lab-like detectors with noise singles on every channel.
pub fn lab_channels() -> ChannelSet {
    let mut ch = ChannelSet {
        idler: PhotonChannelModel::detector(0.25, 100.0),
        signal_1: PhotonChannelModel::detector(0.3, 100.0),
        signal_2: PhotonChannelModel::detector(0.3, 100.0),
    };
    ch.signal_1.delay = 2e-9;
    ch.signal_2.delay = 2.5e-9;
    for c in [&mut ch.idler, &mut ch.signal_1, &mut ch.signal_2] {
        c.noise_singles_rate = 1e5;
    }
    ch
}

pub fn pair_source(rate: f64) -> PairSource {
    PairSource {
        pair_rate: rate,
        pair_sigma: 30e-12,
        splitter_ratio: 0.5,
    }
}

pub fn stream(rate: f64, seconds: f64, seed: u64) -> TimestampSet {
    simulate_timestamps(&pair_source(rate), &lab_channels(), seconds, seed, DEFAULT_EVENT_CAP).expect("stream")
}
