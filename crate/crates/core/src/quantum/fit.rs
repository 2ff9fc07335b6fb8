//! Offset-Gaussian fit of a coincidence peak.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use super::histogram::CoincidenceHistogram;
use super::stream::PS_PER_S;

/// `amplitude · exp(-(t - center)² / 2σ²) + offset`, counts per bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    pub amplitude: f64,
    /// Peak position (s).
    pub center: f64,
    /// Peak width, 1σ (s).
    pub sigma: f64,
    /// Flat accidental level (counts/bin).
    pub offset: f64,
    /// Bin width of the fitted histogram (s).
    pub bin_width: f64,
    pub iterations: usize,
}

impl PeakFit {
    pub fn model(&self, t: f64) -> f64 {
        let u = (t - self.center) / self.sigma;
        self.amplitude * (-0.5 * u * u).exp() + self.offset
    }

    /// Expected peak counts above the offset within `±half_width` of the
    /// center.
    pub fn peak_counts_within(&self, half_width: f64) -> f64 {
        let area = self.amplitude * self.sigma * (2.0 * std::f64::consts::PI).sqrt() / self.bin_width;
        area * statrs::function::erf::erf(half_width / (self.sigma * 2f64.sqrt()))
    }
}

/// Why a histogram did not yield a usable peak.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitFailure {
    TooFewBins,
    NoPeak,
    NotConverged,
    /// Fitted width below one bin.
    Unresolved,
    /// Peak too wide for the fit window to pin down the background.
    TooBroad,
    /// Fitted center left the fit window.
    OutsideWindow,
    /// Peak not significant above the accidental background.
    Insignificant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FitResult {
    Converged(PeakFit),
    Failed(FitFailure),
}

impl FitResult {
    pub fn ok(&self) -> Option<&PeakFit> {
        match self {
            FitResult::Converged(f) => Some(f),
            FitResult::Failed(_) => None,
        }
    }

    pub fn is_converged(&self) -> bool {
        matches!(self, FitResult::Converged(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FitOptions {
    /// Half-width of the fit window around the tallest bin (s).
    pub half_window: f64,
    pub max_iterations: usize,
    /// Required ratio of peak counts within ±2σ to the Poisson spread of the
    /// background in the same span.
    pub min_significance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            half_window: 0.8e-9,
            max_iterations: 200,
            min_significance: 5.0,
        }
    }
}

pub fn fit_peak(h: &CoincidenceHistogram) -> FitResult {
    fit_peak_with(h, &FitOptions::default())
}

/// Levenberg-Marquardt fit of an offset Gaussian around the tallest bin,
/// refined with variance weights taken from the previous pass.
///
/// Times are handled in picoseconds relative to the tallest bin so that all
/// four parameters are of comparable magnitude.
pub fn fit_peak_with(h: &CoincidenceHistogram, opts: &FitOptions) -> FitResult {
    let Some((k0, &ymax)) = h
        .counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
    else {
        return FitResult::Failed(FitFailure::TooFewBins);
    };
    let t0 = h.center(k0);
    let bin = h.bin_ps as f64;
    let half = opts.half_window * PS_PER_S;
    let (t, y): (Vec<f64>, Vec<f64>) = (0..h.len())
        .filter_map(|k| {
            let dt = (h.center(k) - t0) * PS_PER_S;
            (dt.abs() <= half).then_some((dt, h.counts[k] as f64))
        })
        .unzip();
    if t.len() < 5 {
        return FitResult::Failed(FitFailure::TooFewBins);
    }

    // Starting point: background from the outer quarters of the window,
    // width from the bins above half maximum.
    let edge: Vec<f64> = t
        .iter()
        .zip(&y)
        .filter(|(t, _)| t.abs() >= 0.5 * half)
        .map(|(_, y)| *y)
        .collect();
    let c0 = if edge.is_empty() {
        0.0
    } else {
        edge.iter().sum::<f64>() / edge.len() as f64
    };
    let a0 = ymax as f64 - c0;
    if !(a0 > 0.0) {
        return FitResult::Failed(FitFailure::NoPeak);
    }
    let above = y.iter().filter(|&&v| v - c0 > 0.5 * a0).count() as f64;
    let s0 = (above * bin / 2.3548).max(bin);
    let p0 = Vector4::new(a0, 0.0, s0, c0.max(0.0));

    // Unweighted pass, then passes weighted by the model variance so that
    // sparse background bins are not swamped by the shot noise of the peak.
    let mut weights = vec![1.0; t.len()];
    let mut p = p0;
    let mut iterations = 0;
    for _ in 0..REWEIGHT_PASSES + 1 {
        let Some((next, used)) = levenberg_marquardt(&t, &y, &weights, p, opts.max_iterations) else {
            return FitResult::Failed(FitFailure::NotConverged);
        };
        p = next;
        iterations += used;
        for (w, &tk) in weights.iter_mut().zip(&t) {
            *w = 1.0 / gaussian(&p, tk).max(MIN_VARIANCE);
        }
    }

    let (amp, mu, sigma, offset) = (p[0], p[1], p[2], p[3]);
    if !(amp > 0.0) {
        return FitResult::Failed(FitFailure::NoPeak);
    }
    if sigma < bin {
        return FitResult::Failed(FitFailure::Unresolved);
    }
    if 2.0 * sigma > half {
        return FitResult::Failed(FitFailure::TooBroad);
    }
    if mu.abs() > half {
        return FitResult::Failed(FitFailure::OutsideWindow);
    }
    let fit = PeakFit {
        amplitude: amp,
        center: t0 + mu / PS_PER_S,
        sigma: sigma / PS_PER_S,
        offset,
        bin_width: h.bin_width(),
        iterations,
    };
    // Counted excess over the fitted background within ±2σ.
    let (observed, bins) = t
        .iter()
        .zip(&y)
        .filter(|(tk, _)| (*tk - mu).abs() <= 2.0 * sigma)
        .fold((0.0, 0usize), |(s, n), (_, yk)| (s + yk, n + 1));
    // Background per bin from the histogram beyond ±5σ when there is enough
    // of it, since the fitted offset trades off against a wide peak.
    let far: Vec<f64> = (0..h.len())
        .filter(|&k| ((h.center(k) - fit.center) * PS_PER_S).abs() > 5.0 * sigma)
        .map(|k| h.counts[k] as f64)
        .collect();
    let level = if far.len() >= MIN_SIDE_BINS {
        far.iter().sum::<f64>() / far.len() as f64
    } else {
        offset
    };
    let background = level * bins as f64;
    if observed - background < opts.min_significance * background.max(1.0).sqrt() {
        return FitResult::Failed(FitFailure::Insignificant);
    }
    FitResult::Converged(fit)
}

const REWEIGHT_PASSES: usize = 2;
/// Bins needed outside the peak to use them as the background reference.
const MIN_SIDE_BINS: usize = 20;
/// Floor on the per-bin variance used for weights (counts²).
const MIN_VARIANCE: f64 = 0.5;

fn gaussian(p: &Vector4<f64>, t: f64) -> f64 {
    let u = (t - p[1]) / p[2];
    p[0] * (-0.5 * u * u).exp() + p[3]
}

/// Weighted least squares with the width kept positive and the offset
/// non-negative. Returns the parameters and iteration count, or `None`
/// without convergence.
fn levenberg_marquardt(
    t: &[f64],
    y: &[f64],
    w: &[f64],
    mut p: Vector4<f64>,
    max_iterations: usize,
) -> Option<(Vector4<f64>, usize)> {
    let cost_of = |p: &Vector4<f64>| -> f64 {
        t.iter()
            .zip(y)
            .zip(w)
            .map(|((&t, &y), &w)| w * (y - gaussian(p, t)).powi(2))
            .sum()
    };
    let mut cost = cost_of(&p);
    let mut lambda = 1e-3;
    for iteration in 1..=max_iterations {
        if cost == 0.0 {
            return Some((p, iteration - 1));
        }
        let mut jtj = Matrix4::<f64>::zeros();
        let mut jtr = Vector4::<f64>::zeros();
        for ((&t, &y), &w) in t.iter().zip(y).zip(w) {
            let d = t - p[1];
            let g = (-0.5 * d * d / (p[2] * p[2])).exp();
            let j = Vector4::new(g, p[0] * g * d / (p[2] * p[2]), p[0] * g * d * d / p[2].powi(3), 1.0);
            let r = y - (p[0] * g + p[3]);
            jtj += w * j * j.transpose();
            jtr += w * r * j;
        }
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj;
            for k in 0..4 {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = p + step;
            trial[2] = trial[2].abs();
            trial[3] = trial[3].max(0.0);
            let trial_cost = cost_of(&trial);
            if trial_cost.is_finite() && trial_cost < cost {
                let gain = cost - trial_cost;
                p = trial;
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                let rel_step = step.component_div(&p.map(|v| v.abs().max(1e-9))).amax();
                if gain <= 1e-14 * cost.max(1e-300) || rel_step < 1e-12 {
                    return Some((p, iteration));
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No direction lowers the cost: already at the minimum.
            return p.iter().all(|v| v.is_finite()).then_some((p, iteration));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_hist(amp: f64, mu_ps: f64, sigma_ps: f64, c: f64, bin_ps: i64) -> CoincidenceHistogram {
        let n = (4000 / bin_ps) as usize;
        let origin = -2000;
        let counts = (0..n)
            .map(|k| {
                let t = origin as f64 + (k as f64 + 0.5) * bin_ps as f64;
                let u = (t - mu_ps) / sigma_ps;
                (amp * (-0.5 * u * u).exp() + c).round() as u64
            })
            .collect();
        CoincidenceHistogram {
            bin_ps,
            origin_ps: origin,
            counts,
            integration_ps: 1_000_000_000_000,
        }
    }

    #[test]
    fn flat_histogram_fails() {
        let h = CoincidenceHistogram {
            bin_ps: 10,
            origin_ps: 0,
            counts: vec![7; 300],
            integration_ps: 1,
        };
        assert!(!fit_peak(&h).is_converged());
    }

    #[test]
    fn empty_histogram_fails() {
        let h = CoincidenceHistogram {
            bin_ps: 10,
            origin_ps: 0,
            counts: vec![],
            integration_ps: 1,
        };
        assert_eq!(fit_peak(&h), FitResult::Failed(FitFailure::TooFewBins));
    }

    #[test]
    fn recovers_rounded_peak() {
        let h = gaussian_hist(5000.0, 37.0, 90.0, 20.0, 10);
        let f = *fit_peak(&h).ok().unwrap();
        assert!((f.sigma * 1e12 - 90.0).abs() < 0.5);
        assert!((f.center * 1e12 - 37.0).abs() < 0.5);
        assert!((f.offset - 20.0).abs() < 0.5);
    }
}
