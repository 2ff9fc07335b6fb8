//! Pair source driven by the locked ring and the three-detector counting
//! setup behind it.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::cmt::{calibrate_beta, pair_generation_rate, pgr_efficiency_mhz_per_mw2, ResonatorTriplet};
use crate::error::{Error, Result};
use crate::quantum::{
    car_and_pgr, cavity_time_spread, channel_jitter, compensate, estimate_delay, fit_peak_with, heralded_counts,
    simulate_timestamps, start_stop_histogram, CarReport, ChannelSet, CoincidenceHistogram, FitOptions, FitResult,
    HeraldedCounts, PairSource, PhotonChannelModel, COINCIDENCE_WINDOW, DEFAULT_EVENT_CAP,
};

use super::variability::table_row;

/// Reference design used to calibrate the nonlinear coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct DesignPoint {
    pub q_intrinsic: f64,
    pub q_extrinsic: f64,
    /// Hz
    pub fsr_mismatch: f64,
    /// Pair generation efficiency the design should reach (MHz/mW²).
    pub efficiency: f64,
}

impl Default for DesignPoint {
    fn default() -> Self {
        Self {
            q_intrinsic: 116.5e3,
            q_extrinsic: 87.4e3,
            fsr_mismatch: 1.98e9,
            efficiency: 5.19,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    /// Die label of the built-in table row used as the source ring.
    pub die: String,
    /// Site type of that row ("System" or "Test").
    pub site: String,
    /// Explicit triplet; replaces the table row when present. Its β is
    /// ignored in favour of the calibrated value.
    pub triplet: Option<ResonatorTriplet>,
    pub design: DesignPoint,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            die: "B9".into(),
            site: "System".into(),
            triplet: None,
            design: DesignPoint::default(),
        }
    }
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        let d = &self.design;
        if !(d.q_intrinsic > 0.0 && d.q_extrinsic > 0.0 && d.fsr_mismatch >= 0.0 && d.efficiency > 0.0) {
            return Err(Error::config("design point needs positive Qs and efficiency"));
        }
        self.model().map(|_| ()).map_err(|e| match e {
            Error::Domain(m) => Error::Config(m),
            other => other,
        })
    }

    fn base_triplet(&self) -> Result<ResonatorTriplet> {
        match &self.triplet {
            Some(t) => {
                t.validate()?;
                Ok(*t)
            }
            None => table_row(&self.die, &self.site)
                .ok_or_else(|| Error::config(format!("no table row for die {} site {}", self.die, self.site)))?
                .triplet(0.0),
        }
    }

    /// β from the design point, applied to the source triplet.
    pub fn model(&self) -> Result<PairModel> {
        let base = self.base_triplet()?;
        let d = &self.design;
        let wavelengths = [base.signal.wavelength, base.pump.wavelength, base.idler.wavelength];
        let design = ResonatorTriplet::uniform(wavelengths, d.q_intrinsic, d.q_extrinsic, d.fsr_mismatch, 0.0)?;
        let beta = calibrate_beta(&design, d.efficiency)?;
        let triplet = base.with_beta(beta);
        let spread = |p: &crate::cmt::ResonanceParams| -> Result<f64> {
            Ok(cavity_time_spread(crate::cmt::linewidth_from_q(p)?))
        };
        let pair_sigma = spread(&triplet.signal)?.hypot(spread(&triplet.idler)?);
        Ok(PairModel {
            triplet,
            efficiency: pgr_efficiency_mhz_per_mw2(&triplet)?,
            pair_sigma,
        })
    }
}

/// Calibrated source ring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairModel {
    pub triplet: ResonatorTriplet,
    /// MHz/mW²
    pub efficiency: f64,
    /// Idler-signal emission spread from the signal and idler photon
    /// lifetimes, 1σ (s).
    pub pair_sigma: f64,
}

impl PairModel {
    /// On-chip pairs/s for bus power `pump_power` (W) when the pump sits at
    /// `build_up` times the on-resonance intracavity power.
    pub fn pair_rate(&self, pump_power: f64, build_up: f64) -> Result<f64> {
        if !(0.0..=1.0 + 1e-9).contains(&build_up) {
            return Err(Error::domain("intracavity build-up fraction must lie in [0, 1]"));
        }
        pair_generation_rate(&self.triplet, pump_power * build_up)
    }
}

/// Uncorrelated photons leaving each output port of the chip, `a·P + b·P²`
/// for bus pump power `P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    /// Hz/W
    pub linear: f64,
    /// Hz/W²
    pub quadratic: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            linear: 6.3867e9,
            quadratic: 1.01222e13,
        }
    }
}

impl NoiseModel {
    /// Hz at the output port.
    pub fn rate(&self, pump_power: f64) -> f64 {
        self.linear * pump_power + self.quadratic * pump_power * pump_power
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionConfig {
    /// Detector efficiencies: idler, first signal, second signal.
    pub detector_efficiency: [f64; 3],
    /// Chip-to-detector transmission common to all three paths.
    pub collection: f64,
    /// Fraction of signal photons sent to the first signal detector.
    pub splitter_ratio: f64,
    /// Hz per detector
    pub dark_rate: f64,
    /// Per-channel timing jitter, 1σ (s).
    pub jitter_sigma: f64,
    /// Cable delays: idler, first signal, second signal (s).
    pub delays: [f64; 3],
    pub noise: NoiseModel,
    /// Histogram bin (s).
    pub bin: f64,
    /// Start-stop span (s).
    pub span: f64,
    /// Coincidence window (s).
    pub window: f64,
    pub fit: FitOptions,
    /// Photon acquisition at a locked operating point (s).
    pub integration_time: f64,
    pub event_cap: usize,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            detector_efficiency: [0.63, 0.77, 0.74],
            collection: 0.36743,
            splitter_ratio: 0.5,
            dark_rate: 100.0,
            jitter_sigma: channel_jitter(),
            delays: [0.0, 1.2e-9, 1.5e-9],
            noise: NoiseModel::default(),
            bin: 4e-12,
            span: 4e-9,
            window: COINCIDENCE_WINDOW,
            fit: FitOptions::default(),
            integration_time: 1.0,
            event_cap: DEFAULT_EVENT_CAP,
        }
    }
}

/// Closed-form expectations for one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpectedRates {
    /// Detector count rates: idler, first signal, second signal (Hz).
    pub singles: [f64; 3],
    /// True coincidences inside the window per signal channel (Hz).
    pub coincidences: [f64; 2],
    /// Accidentals inside the window per signal channel (Hz).
    pub accidentals: [f64; 2],
}

impl ExpectedRates {
    pub fn car(&self, channel: usize) -> f64 {
        self.coincidences[channel] / self.accidentals[channel]
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !self.detector_efficiency.iter().all(|&e| unit(e)) || !unit(self.collection) || !unit(self.splitter_ratio) {
            return Err(Error::config(
                "efficiencies, collection and splitter ratio must lie in [0, 1]",
            ));
        }
        if !(self.dark_rate >= 0.0 && self.jitter_sigma >= 0.0) {
            return Err(Error::config("dark rate and jitter must be non-negative"));
        }
        if !(self.noise.linear >= 0.0 && self.noise.quadratic >= 0.0) {
            return Err(Error::config("noise coefficients must be non-negative"));
        }
        if !self.delays.iter().all(|d| d.is_finite()) {
            return Err(Error::config("delays must be finite"));
        }
        if !(self.bin > 0.0 && self.span > self.bin && self.window > 0.0 && self.integration_time > 0.0) {
            return Err(Error::config(
                "histogram bin, span, window and integration time must be positive",
            ));
        }
        Ok(())
    }

    pub fn routes(&self) -> [f64; 3] {
        [1.0, self.splitter_ratio, 1.0 - self.splitter_ratio]
    }

    /// End-to-end detection probability per channel.
    pub fn efficiencies(&self) -> [f64; 3] {
        self.detector_efficiency.map(|e| e * self.collection)
    }

    pub fn channels(&self, pump_power: f64) -> ChannelSet {
        let eta = self.efficiencies();
        let routes = self.routes();
        let noise = self.noise.rate(pump_power);
        let ch = |k: usize| PhotonChannelModel {
            efficiency: eta[k],
            jitter_sigma: self.jitter_sigma,
            dark_rate: self.dark_rate,
            noise_singles_rate: eta[k] * routes[k] * noise,
            delay: self.delays[k],
            dead_time: None,
        };
        ChannelSet {
            idler: ch(0),
            signal_1: ch(1),
            signal_2: ch(2),
        }
    }

    pub fn coincidence_sigma(&self, pair_sigma: f64) -> f64 {
        (2.0 * self.jitter_sigma.powi(2) + pair_sigma.powi(2)).sqrt()
    }

    /// Fraction of a coincidence peak inside the window.
    pub fn window_fraction(&self, pair_sigma: f64) -> f64 {
        erf(0.5 * self.window / (self.coincidence_sigma(pair_sigma) * 2f64.sqrt()))
    }

    pub fn expected(&self, pair_rate: f64, pump_power: f64, pair_sigma: f64) -> ExpectedRates {
        let eta = self.efficiencies();
        let routes = self.routes();
        let port = pair_rate + self.noise.rate(pump_power);
        let singles = [0, 1, 2].map(|k| eta[k] * routes[k] * port + self.dark_rate);
        let f = self.window_fraction(pair_sigma);
        let coincidences = [1, 2].map(|k| pair_rate * eta[0] * eta[k] * routes[k] * f);
        let accidentals = [1, 2].map(|k| singles[0] * singles[k] * self.window);
        ExpectedRates {
            singles,
            coincidences,
            accidentals,
        }
    }
}

/// When to stop accumulating acquisition blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionPlan {
    pub min_time: f64,
    pub max_time: f64,
    pub block: f64,
    /// Stop once this many threefolds are seen (after `min_time`).
    pub min_threefolds: u64,
}

impl AcquisitionPlan {
    pub fn fixed(duration: f64) -> Self {
        Self {
            min_time: duration,
            max_time: duration,
            block: duration,
            min_threefolds: 0,
        }
    }
}

/// Analysis of one signal channel against the idler.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelAnalysis {
    pub fit: FitResult,
    pub car: Option<CarReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhotonMeasurement {
    pub integration_time: f64,
    /// Idler-start histograms against each signal channel.
    pub histograms: [CoincidenceHistogram; 2],
    pub channels: [ChannelAnalysis; 2],
    pub heralded: HeraldedCounts,
    /// Signal delays found from the first block (s).
    pub delays: [f64; 2],
}

impl PhotonMeasurement {
    /// Background-subtracted coincidence rate summed over the signal
    /// channels whose fits converged.
    pub fn total_rate(&self) -> Option<f64> {
        let rates: Vec<f64> = self.channels.iter().filter_map(|c| c.car.map(|r| r.rate)).collect();
        (!rates.is_empty()).then(|| rates.iter().sum())
    }
}

/// Simulate and analyse blocks of detector streams until `plan` is met.
pub fn acquire_photons(
    det: &DetectionConfig,
    model: &PairModel,
    pair_rate: f64,
    pump_power: f64,
    plan: &AcquisitionPlan,
    seed: u64,
) -> Result<PhotonMeasurement> {
    if !(plan.block > 0.0 && plan.min_time > 0.0 && plan.max_time >= plan.min_time) {
        return Err(Error::domain("acquisition plan needs positive, ordered times"));
    }
    let source = PairSource {
        pair_rate,
        pair_sigma: model.pair_sigma,
        splitter_ratio: det.splitter_ratio,
    };
    let channels = det.channels(pump_power);
    let mut elapsed = 0.0;
    let mut block_index = 0u64;
    let mut histograms: Option<[CoincidenceHistogram; 2]> = None;
    let mut heralded = HeraldedCounts {
        idler: 0,
        idler_signal_1: 0,
        idler_signal_2: 0,
        threefold: 0,
    };
    let mut delays = [0.0; 2];
    loop {
        let duration = plan.block.min(plan.max_time - elapsed);
        let ts = simulate_timestamps(
            &source,
            &channels,
            duration,
            block_seed(seed, block_index),
            det.event_cap,
        )?;
        let h = [&ts.signal_1, &ts.signal_2]
            .map(|stop| start_stop_histogram(&ts.idler, stop, det.span, det.bin, ts.duration_ps));
        let [h1, h2] = h;
        let (h1, h2) = (h1?, h2?);
        if block_index == 0 {
            for (d, stop) in delays.iter_mut().zip([&ts.signal_1, &ts.signal_2]) {
                *d = estimate_delay(&ts.idler, stop, det.span, 10e-12)?;
            }
        }
        let s1 = compensate(&ts.signal_1, delays[0]);
        let s2 = compensate(&ts.signal_2, delays[1]);
        let c = heralded_counts(&ts.idler, &s1, &s2, det.window);
        heralded.idler += c.idler;
        heralded.idler_signal_1 += c.idler_signal_1;
        heralded.idler_signal_2 += c.idler_signal_2;
        heralded.threefold += c.threefold;
        histograms = Some(match histograms {
            None => [h1, h2],
            Some([a, b]) => [add_histograms(a, &h1), add_histograms(b, &h2)],
        });
        elapsed += duration;
        block_index += 1;
        let done_min = elapsed >= plan.min_time * (1.0 - 1e-12);
        if elapsed >= plan.max_time * (1.0 - 1e-12) || (done_min && heralded.threefold >= plan.min_threefolds) {
            break;
        }
    }
    let histograms = histograms.expect("at least one block");
    let channels = [0, 1].map(|k| analyse(&histograms[k], &det.fit, det.window));
    let [a, b] = channels;
    Ok(PhotonMeasurement {
        integration_time: elapsed,
        histograms,
        channels: [a?, b?],
        heralded,
        delays,
    })
}

fn analyse(h: &CoincidenceHistogram, opts: &FitOptions, window: f64) -> Result<ChannelAnalysis> {
    let fit = fit_peak_with(h, opts);
    let car = match fit.ok() {
        Some(f) => Some(car_and_pgr(h, f, window)?),
        None => None,
    };
    Ok(ChannelAnalysis { fit, car })
}

fn add_histograms(mut a: CoincidenceHistogram, b: &CoincidenceHistogram) -> CoincidenceHistogram {
    for (x, y) in a.counts.iter_mut().zip(&b.counts) {
        *x += y;
    }
    a.integration_ps += b.integration_ps;
    a
}

/// Seed of acquisition block `k`, decorrelated from neighbouring seeds.
pub fn block_seed(seed: u64, k: u64) -> u64 {
    derive_seed(seed, k)
}

/// SplitMix64-style mix of a root seed and a stream label.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Collection and noise that make the first signal channel show
/// `target_rate` coincidences/s at `target_car` for a source emitting
/// `pair_rate` at bus power `pump_power`.
///
/// The noise keeps the ratio `quadratic·P/linear = shape` at `pump_power`.
pub fn fit_detection(
    det: &DetectionConfig,
    pair_rate: f64,
    pair_sigma: f64,
    pump_power: f64,
    target_rate: f64,
    target_car: f64,
    shape: f64,
) -> Result<DetectionConfig> {
    if !(pair_rate > 0.0 && target_rate > 0.0 && target_car > 0.0 && shape >= 0.0) {
        return Err(Error::domain("fit targets must be positive"));
    }
    let mut out = *det;
    let routes = det.routes();
    let f = det.window_fraction(pair_sigma);
    let [p_i, p_1, _] = det.detector_efficiency;
    let t2 = target_rate / (pair_rate * p_i * p_1 * routes[1] * f);
    if !(t2 > 0.0 && t2 <= 1.0) {
        return Err(Error::Fit(format!("target rate needs collection² = {t2:.3}")));
    }
    out.collection = t2.sqrt();
    // (a·x + d)(b·x + d) = C/(CAR·w) with x the port rate
    let a = p_i * out.collection;
    let b = p_1 * out.collection * routes[1];
    let d = det.dark_rate;
    let rhs = target_rate / (target_car * det.window);
    let (qa, qb, qc) = (a * b, d * (a + b), d * d - rhs);
    let x = (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);
    let noise = x - pair_rate;
    if !(noise >= 0.0) {
        return Err(Error::Fit("pairs alone already exceed the accidental target".into()));
    }
    let linear_part = noise / (1.0 + shape);
    out.noise = NoiseModel {
        linear: linear_part / pump_power,
        quadratic: shape * linear_part / (pump_power * pump_power),
    };
    Ok(out)
}
