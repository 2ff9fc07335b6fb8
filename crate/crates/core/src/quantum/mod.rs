//! Photon-pair statistics: simulated detector streams, coincidence
//! histograms, peak fitting, CAR, pair rates and heralded g²(0).

mod fit;
mod histogram;
pub mod io;
mod metrics;
mod stream;

pub use fit::{fit_peak, fit_peak_with, FitFailure, FitOptions, FitResult, PeakFit};
pub use histogram::{compensate, correlation_histogram, estimate_delay, start_stop_histogram, CoincidenceHistogram};
pub use metrics::{
    car_and_pgr, deembed, g2_zero, heralded_counts, heralded_counts_compensated, path_loss_db, side_window_accidentals,
    CarReport, HeraldedCounts, COINCIDENCE_WINDOW,
};
pub use stream::{
    cavity_time_spread, channel_jitter, coincidence_sigma, merge_sorted, simulate_timestamps, ChannelSet, PairSource,
    PhotonChannelModel, TimestampSet, DEFAULT_EVENT_CAP, DETECTOR_JITTER, PS_PER_S, TAGGER_JITTER,
};
