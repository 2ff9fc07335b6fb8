//! Time-difference histograms between two timestamp streams.

use serde::{Deserialize, Serialize};

use super::stream::PS_PER_S;
use crate::error::{Error, Result};

/// Counts of time differences in uniform bins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoincidenceHistogram {
    /// Bin width (ps).
    pub bin_ps: i64,
    /// Left edge of the first bin (ps).
    pub origin_ps: i64,
    pub counts: Vec<u64>,
    /// Acquisition length the counts were collected over (ps).
    pub integration_ps: i64,
}

impl CoincidenceHistogram {
    pub fn bin_width(&self) -> f64 {
        self.bin_ps as f64 / PS_PER_S
    }

    pub fn integration_time(&self) -> f64 {
        self.integration_ps as f64 / PS_PER_S
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Centre of bin `k` (s).
    pub fn center(&self, k: usize) -> f64 {
        (self.origin_ps as f64 + (k as f64 + 0.5) * self.bin_ps as f64) / PS_PER_S
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.center(k)).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Merge groups of `factor` adjacent bins; a trailing partial group is
    /// dropped.
    pub fn rebin(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::domain("rebin factor must be at least 1"));
        }
        let counts = self.counts.chunks_exact(factor).map(|c| c.iter().sum()).collect();
        Ok(Self {
            bin_ps: self.bin_ps * factor as i64,
            origin_ps: self.origin_ps,
            counts,
            integration_ps: self.integration_ps,
        })
    }
}

fn bins_for(span: f64, bin: f64) -> Result<(i64, usize)> {
    let bin_ps = (bin * PS_PER_S).round() as i64;
    if bin_ps < 1 {
        return Err(Error::domain("histogram bins must be at least 1 ps"));
    }
    let span_ps = (span * PS_PER_S).round() as i64;
    if span_ps < bin_ps {
        return Err(Error::domain("histogram span must cover at least one bin"));
    }
    Ok((bin_ps, (span_ps / bin_ps) as usize))
}

/// Start-stop histogram: each start event is paired with the first stop
/// event at or after it. Pairs with `Δt` beyond the last whole bin of
/// `span` are not counted.
pub fn start_stop_histogram(
    start: &[i64],
    stop: &[i64],
    span: f64,
    bin: f64,
    integration_ps: i64,
) -> Result<CoincidenceHistogram> {
    let (bin_ps, n) = bins_for(span, bin)?;
    let limit = bin_ps * n as i64;
    let mut counts = vec![0u64; n];
    let mut j = 0;
    for &t in start {
        while j < stop.len() && stop[j] < t {
            j += 1;
        }
        if j == stop.len() {
            break;
        }
        let dt = stop[j] - t;
        if dt < limit {
            counts[(dt / bin_ps) as usize] += 1;
        }
    }
    Ok(CoincidenceHistogram {
        bin_ps,
        origin_ps: 0,
        counts,
        integration_ps,
    })
}

/// All-pairs cross-correlation: every stop within `[-range, range)` of a
/// start contributes.
pub fn correlation_histogram(
    start: &[i64],
    stop: &[i64],
    range: f64,
    bin: f64,
    integration_ps: i64,
) -> Result<CoincidenceHistogram> {
    let (bin_ps, half) = bins_for(range, bin)?;
    let reach = bin_ps * half as i64;
    let mut counts = vec![0u64; 2 * half];
    let mut lo = 0;
    for &t in start {
        while lo < stop.len() && stop[lo] < t - reach {
            lo += 1;
        }
        for &s in stop[lo..].iter().take_while(|&&s| s < t + reach) {
            counts[((s - t + reach) / bin_ps) as usize] += 1;
        }
    }
    Ok(CoincidenceHistogram {
        bin_ps,
        origin_ps: -reach,
        counts,
        integration_ps,
    })
}

/// Stop-channel delay relative to the start channel, from the argmax of the
/// cross-correlation (s).
pub fn estimate_delay(start: &[i64], stop: &[i64], range: f64, bin: f64) -> Result<f64> {
    let h = correlation_histogram(start, stop, range, bin, 0)?;
    let (k, &peak) = h
        .counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .expect("at least one bin");
    if peak == 0 {
        return Err(Error::Fit("no correlated events inside the search range".into()));
    }
    Ok(h.center(k))
}

/// Shift every timestamp by `-delay`.
pub fn compensate(stamps: &[i64], delay: f64) -> Vec<i64> {
    let d = (delay * PS_PER_S).round() as i64;
    stamps.iter().map(|&t| t - d).collect()
}
