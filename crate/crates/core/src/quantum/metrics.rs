//! Coincidence-to-accidental ratio, pair rates, heralded g²(0) and loss
//! de-embedding.

use serde::{Deserialize, Serialize};

use super::fit::PeakFit;
use super::histogram::{compensate, estimate_delay, CoincidenceHistogram};
use super::stream::{TimestampSet, PS_PER_S};
use crate::error::{Error, Result};

/// Default coincidence window (s).
pub const COINCIDENCE_WINDOW: f64 = 320e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarReport {
    /// Coincidences over accidentals; `f64::INFINITY` when the fitted
    /// background is zero.
    pub car: f64,
    /// Background-subtracted coincidences in the window.
    pub coincidences: f64,
    /// Accidentals expected in the window.
    pub accidentals: f64,
    /// Raw counts in the window.
    pub raw_counts: u64,
    /// Background-subtracted coincidence rate (Hz).
    pub rate: f64,
}

/// Sum of the bins whose centers fall within `center ± window/2`.
fn counts_in_window(h: &CoincidenceHistogram, center: f64, window: f64) -> u64 {
    (0..h.len())
        .filter(|&k| (h.center(k) - center).abs() <= 0.5 * window)
        .map(|k| h.counts[k])
        .sum()
}

/// CAR and coincidence rate using the fitted flat offset as the accidental
/// level. The accidental count is `offset · window / bin_width`.
pub fn car_and_pgr(h: &CoincidenceHistogram, fit: &PeakFit, window: f64) -> Result<CarReport> {
    if !(window > 0.0) {
        return Err(Error::domain("coincidence window must be positive"));
    }
    let integration = h.integration_time();
    if !(integration > 0.0) {
        return Err(Error::domain("histogram has no integration time"));
    }
    let raw = counts_in_window(h, fit.center, window);
    let accidentals = fit.offset * window / h.bin_width();
    let coincidences = raw as f64 - accidentals;
    let car = if accidentals > 0.0 {
        coincidences / accidentals
    } else {
        f64::INFINITY
    };
    Ok(CarReport {
        car,
        coincidences,
        accidentals,
        raw_counts: raw,
        rate: coincidences / integration,
    })
}

/// Accidentals per coincidence window estimated from windows displaced by
/// `±k·separation` from the peak, `k = 1..=per_side`. Windows that fall
/// outside the histogram are skipped.
pub fn side_window_accidentals(
    h: &CoincidenceHistogram,
    center: f64,
    window: f64,
    separation: f64,
    per_side: usize,
) -> Result<f64> {
    let lo = h.origin_ps as f64 / PS_PER_S;
    let hi = lo + h.len() as f64 * h.bin_width();
    let mut total = 0u64;
    let mut used = 0usize;
    for k in 1..=per_side {
        for sign in [-1.0, 1.0] {
            let c = center + sign * k as f64 * separation;
            if c - 0.5 * window >= lo && c + 0.5 * window <= hi {
                total += counts_in_window(h, c, window);
                used += 1;
            }
        }
    }
    if used == 0 {
        return Err(Error::domain("no side window fits inside the histogram"));
    }
    Ok(total as f64 / used as f64)
}

/// Counts entering the heralded second-order correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeraldedCounts {
    pub idler: u64,
    pub idler_signal_1: u64,
    pub idler_signal_2: u64,
    pub threefold: u64,
}

impl HeraldedCounts {
    /// `N_I·N_ISS / (N_IS1·N_IS2)`, or `None` when a twofold count is zero.
    pub fn g2(&self) -> Option<f64> {
        let den = self.idler_signal_1 as f64 * self.idler_signal_2 as f64;
        (den > 0.0).then(|| self.threefold as f64 * self.idler as f64 / den)
    }
}

fn any_within(stamps: &[i64], lo: i64, hi: i64) -> bool {
    let k = stamps.partition_point(|&s| s < lo);
    k < stamps.len() && stamps[k] <= hi
}

/// Heralded counts with already delay-compensated streams: an idler event
/// counts as coincident with a signal channel when that channel has at least
/// one event within `±window/2`.
pub fn heralded_counts(idler: &[i64], s1: &[i64], s2: &[i64], window: f64) -> HeraldedCounts {
    let half = (0.5 * window * PS_PER_S).round() as i64;
    let mut c = HeraldedCounts {
        idler: idler.len() as u64,
        idler_signal_1: 0,
        idler_signal_2: 0,
        threefold: 0,
    };
    for &t in idler {
        let a = any_within(s1, t - half, t + half);
        let b = any_within(s2, t - half, t + half);
        c.idler_signal_1 += a as u64;
        c.idler_signal_2 += b as u64;
        c.threefold += (a && b) as u64;
    }
    c
}

/// Time-integrated heralded g²(0) of compensated streams.
pub fn g2_zero(idler: &[i64], s1: &[i64], s2: &[i64], window: f64) -> Option<f64> {
    heralded_counts(idler, s1, s2, window).g2()
}

/// Estimate both signal delays against the idler, compensate them, and
/// return the heralded counts.
pub fn heralded_counts_compensated(ts: &TimestampSet, window: f64, search_range: f64) -> Result<HeraldedCounts> {
    let bin = 10e-12;
    let d1 = estimate_delay(&ts.idler, &ts.signal_1, search_range, bin)?;
    let d2 = estimate_delay(&ts.idler, &ts.signal_2, search_range, bin)?;
    let s1 = compensate(&ts.signal_1, d1);
    let s2 = compensate(&ts.signal_2, d2);
    Ok(heralded_counts(&ts.idler, &s1, &s2, window))
}

/// Loss (dB) of one coincidence path given the idler efficiency, the signal
/// channel efficiency and the fraction of signal photons routed to it.
pub fn path_loss_db(idler_efficiency: f64, signal_efficiency: f64, route_fraction: f64) -> f64 {
    -10.0 * (idler_efficiency * signal_efficiency * route_fraction).log10()
}

/// On-chip pair rate from a detected coincidence rate summed over the
/// coincidence paths with the given total losses (dB).
pub fn deembed(detected_rate: f64, path_losses_db: &[f64]) -> Result<f64> {
    if path_losses_db.is_empty() {
        return Err(Error::domain("at least one coincidence path is needed"));
    }
    let transmission: f64 = path_losses_db.iter().map(|l| 10f64.powf(-l / 10.0)).sum();
    if !(transmission > 0.0) || !transmission.is_finite() {
        return Err(Error::domain("path losses give no transmission"));
    }
    Ok(detected_rate / transmission)
}
