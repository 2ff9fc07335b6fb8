//! Monte Carlo photon-pair streams as seen by a three-channel detector setup.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Picoseconds per second; timestamps are integer picoseconds.
pub const PS_PER_S: f64 = 1e12;

/// Default ceiling on the total number of generated events.
pub const DEFAULT_EVENT_CAP: usize = 50_000_000;

/// Nominal detector jitter of one coincidence (both detectors), 1σ.
pub const DETECTOR_JITTER: f64 = 80e-12;
/// Time tagger jitter of one coincidence, 1σ.
pub const TAGGER_JITTER: f64 = 35e-12;

/// Detection chain of one output port: optics, detector and tagger input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PhotonChannelModel {
    /// End-to-end detection probability of a photon leaving the ring.
    pub efficiency: f64,
    /// Timing jitter, 1σ (s).
    pub jitter_sigma: f64,
    /// Detector dark count rate (Hz).
    pub dark_rate: f64,
    /// Uncorrelated source noise reaching the detector (Hz).
    pub noise_singles_rate: f64,
    /// Fixed cable and electronics delay (s).
    #[serde(default)]
    pub delay: f64,
    /// Detector dead time (s); events closer than this to the previous
    /// registered event are lost.
    #[serde(default)]
    pub dead_time: Option<f64>,
}

impl PhotonChannelModel {
    /// Lossless, jitter-free, noiseless channel.
    pub fn ideal() -> Self {
        Self {
            efficiency: 1.0,
            jitter_sigma: 0.0,
            dark_rate: 0.0,
            noise_singles_rate: 0.0,
            delay: 0.0,
            dead_time: None,
        }
    }

    /// Channel with the default per-channel share of the coincidence jitter
    /// budget.
    pub fn detector(efficiency: f64, dark_rate: f64) -> Self {
        Self {
            efficiency,
            jitter_sigma: channel_jitter(),
            dark_rate,
            ..Self::ideal()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::config(format!(
                "channel efficiency {} outside [0, 1]",
                self.efficiency
            )));
        }
        let nonneg = [self.jitter_sigma, self.dark_rate, self.noise_singles_rate];
        if nonneg.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::config(
                "channel jitter and rates must be finite and non-negative",
            ));
        }
        if !self.delay.is_finite() {
            return Err(Error::config("channel delay must be finite"));
        }
        if let Some(d) = self.dead_time {
            if !(d >= 0.0) {
                return Err(Error::config("dead time must be non-negative"));
            }
        }
        Ok(())
    }

    /// Rate of events not belonging to any pair (Hz).
    pub fn background_rate(&self) -> f64 {
        self.dark_rate + self.noise_singles_rate
    }
}

/// Per-channel jitter such that the idler-signal difference carries the
/// detector and tagger jitter added in quadrature.
pub fn channel_jitter() -> f64 {
    DETECTOR_JITTER.hypot(TAGGER_JITTER) / 2f64.sqrt()
}

/// Spread of the idler-signal emission delay for a cavity of the given
/// FWHM linewidth (Hz).
pub fn cavity_time_spread(linewidth: f64) -> f64 {
    1.0 / (2.0 * std::f64::consts::PI * linewidth)
}

/// 1σ width of the coincidence peak for two channels and a source.
pub fn coincidence_sigma(idler: &PhotonChannelModel, signal: &PhotonChannelModel, pair_sigma: f64) -> f64 {
    (idler.jitter_sigma.powi(2) + signal.jitter_sigma.powi(2) + pair_sigma.powi(2)).sqrt()
}

/// Pair source feeding the idler detector and a split signal path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PairSource {
    /// Pair emission rate (Hz).
    pub pair_rate: f64,
    /// Spread of the signal emission time relative to its idler, 1σ (s).
    pub pair_sigma: f64,
    /// Probability that a signal photon goes to the first signal detector.
    pub splitter_ratio: f64,
}

impl PairSource {
    pub fn validate(&self) -> Result<()> {
        if !(self.pair_rate >= 0.0) || !self.pair_rate.is_finite() {
            return Err(Error::config("pair rate must be finite and non-negative"));
        }
        if !(self.pair_sigma >= 0.0) {
            return Err(Error::config("pair time spread must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.splitter_ratio) {
            return Err(Error::config("splitter ratio must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// The idler detector and the two signal detectors behind the splitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ChannelSet {
    pub idler: PhotonChannelModel,
    pub signal_1: PhotonChannelModel,
    pub signal_2: PhotonChannelModel,
}

impl ChannelSet {
    pub fn ideal() -> Self {
        Self {
            idler: PhotonChannelModel::ideal(),
            signal_1: PhotonChannelModel::ideal(),
            signal_2: PhotonChannelModel::ideal(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.idler.validate()?;
        self.signal_1.validate()?;
        self.signal_2.validate()
    }

    pub fn as_array(&self) -> [&PhotonChannelModel; 3] {
        [&self.idler, &self.signal_1, &self.signal_2]
    }
}

/// Sorted picosecond timestamps of the three channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimestampSet {
    pub idler: Vec<i64>,
    pub signal_1: Vec<i64>,
    pub signal_2: Vec<i64>,
    /// Acquisition length (ps).
    pub duration_ps: i64,
}

impl TimestampSet {
    pub fn duration(&self) -> f64 {
        self.duration_ps as f64 / PS_PER_S
    }

    /// Both signal channels merged into one sorted stream.
    pub fn merged_signal(&self) -> Vec<i64> {
        merge_sorted(&self.signal_1, &self.signal_2)
    }

    pub fn total_events(&self) -> usize {
        self.idler.len() + self.signal_1.len() + self.signal_2.len()
    }
}

/// Merge two sorted streams.
pub fn merge_sorted(a: &[i64], b: &[i64]) -> Vec<i64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

fn to_ps(t: f64) -> i64 {
    (t * PS_PER_S).round() as i64
}

/// Generate detector timestamps for `duration` seconds of pair emission.
///
/// Pair emission is a Poisson process. Every signal photon takes the first
/// signal port with probability `splitter_ratio`, each photon survives its
/// channel with the channel efficiency, and each detected photon picks up
/// independent Gaussian jitter plus the channel delay. Background events
/// are uniform over the acquisition. The run fails before generating
/// anything if the expected event count reaches `max_events`.
pub fn simulate_timestamps(
    source: &PairSource,
    channels: &ChannelSet,
    duration: f64,
    seed: u64,
    max_events: usize,
) -> Result<TimestampSet> {
    source.validate()?;
    channels.validate()?;
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::domain("acquisition duration must be positive"));
    }
    let background: f64 = channels.as_array().iter().map(|c| c.background_rate()).sum();
    let expected = duration * (2.0 * source.pair_rate + background);
    if expected >= max_events as f64 {
        return Err(Error::domain(format!(
            "expected {expected:.3e} events exceeds the cap of {max_events}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut idler = Vec::new();
    let mut s1 = Vec::new();
    let mut s2 = Vec::new();

    if source.pair_rate > 0.0 {
        let gap = Exp::new(source.pair_rate).map_err(|e| Error::domain(e.to_string()))?;
        let mut t = gap.sample(&mut rng);
        while t < duration {
            // Fixed draw order keeps streams reproducible whatever survives.
            let to_first = rng.random::<f64>() < source.splitter_ratio;
            let keep_idler = rng.random::<f64>();
            let keep_signal = rng.random::<f64>();
            let z_pair: f64 = unit.sample(&mut rng);
            let z_idler: f64 = unit.sample(&mut rng);
            let z_signal: f64 = unit.sample(&mut rng);

            let ch_i = &channels.idler;
            if keep_idler < ch_i.efficiency {
                idler.push(to_ps(t + ch_i.delay + ch_i.jitter_sigma * z_idler));
            }
            let (ch_s, dest) = if to_first {
                (&channels.signal_1, &mut s1)
            } else {
                (&channels.signal_2, &mut s2)
            };
            if keep_signal < ch_s.efficiency {
                let emitted = t + source.pair_sigma * z_pair;
                dest.push(to_ps(emitted + ch_s.delay + ch_s.jitter_sigma * z_signal));
            }
            t += gap.sample(&mut rng);
        }
    }

    for (ch, dest) in [
        (&channels.idler, &mut idler),
        (&channels.signal_1, &mut s1),
        (&channels.signal_2, &mut s2),
    ] {
        let mean = ch.background_rate() * duration;
        if mean > 0.0 {
            let n = Poisson::new(mean)
                .map_err(|e| Error::domain(e.to_string()))?
                .sample(&mut rng) as usize;
            dest.extend((0..n).map(|_| to_ps(rng.random::<f64>() * duration)));
        }
        dest.sort_unstable();
        if let Some(dead) = ch.dead_time {
            apply_dead_time(dest, to_ps(dead));
        }
    }

    Ok(TimestampSet {
        idler,
        signal_1: s1,
        signal_2: s2,
        duration_ps: to_ps(duration),
    })
}

/// Drop events that arrive within `dead_ps` of the previous registered one.
fn apply_dead_time(stamps: &mut Vec<i64>, dead_ps: i64) {
    let mut last: Option<i64> = None;
    stamps.retain(|&t| match last {
        Some(prev) if t - prev < dead_ps => false,
        _ => {
            last = Some(t);
            true
        }
    });
}
