use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use ringlock_core::quantum::{
    car_and_pgr, correlation_histogram, deembed, fit_peak, g2_zero, heralded_counts, heralded_counts_compensated, io,
    side_window_accidentals, simulate_timestamps, start_stop_histogram, ChannelSet, CoincidenceHistogram, FitResult,
    PairSource, PeakFit, PhotonChannelModel, COINCIDENCE_WINDOW, DEFAULT_EVENT_CAP,
};
use statrs::function::erf::erf;

fn source(rate: f64, sigma: f64) -> PairSource {
    PairSource {
        pair_rate: rate,
        pair_sigma: sigma,
        splitter_ratio: 0.5,
    }
}

fn lab_channels(noise: f64) -> ChannelSet {
    let mut ch = ChannelSet {
        idler: PhotonChannelModel::detector(0.24, 100.0),
        signal_1: PhotonChannelModel::detector(0.30, 100.0),
        signal_2: PhotonChannelModel::detector(0.28, 100.0),
    };
    ch.signal_1.delay = 2e-9;
    ch.signal_2.delay = 2.5e-9;
    for c in [&mut ch.idler, &mut ch.signal_1, &mut ch.signal_2] {
        c.noise_singles_rate = noise;
    }
    ch
}

fn synthetic(amp: f64, mu_ps: f64, sigma_ps: f64, offset: f64, bin_ps: i64, seed: Option<u64>) -> CoincidenceHistogram {
    let origin = -2000;
    let n = (4000 / bin_ps) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
    let counts = (0..n)
        .map(|k| {
            let t = origin as f64 + (k as f64 + 0.5) * bin_ps as f64;
            let u = (t - mu_ps) / sigma_ps;
            let mean = amp * (-0.5 * u * u).exp() + offset;
            match seed {
                Some(_) => Poisson::new(mean).unwrap().sample(&mut rng) as u64,
                None => mean.round() as u64,
            }
        })
        .collect();
    CoincidenceHistogram {
        bin_ps,
        origin_ps: origin,
        counts,
        integration_ps: 1_000_000_000_000,
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

#[test]
fn detected_coincidence_rate_matches_detection_probability() {
    let ch = ChannelSet {
        idler: PhotonChannelModel::detector(0.63, 0.0),
        signal_1: PhotonChannelModel::detector(0.77, 0.0),
        signal_2: PhotonChannelModel::detector(0.74, 0.0),
    };
    let rate = 2e4;
    let ts = simulate_timestamps(&source(rate, 30e-12), &ch, 10.0, 11, DEFAULT_EVENT_CAP).unwrap();
    let c = heralded_counts(&ts.idler, &ts.signal_1, &ts.signal_2, 2e-9);
    let detected = (c.idler_signal_1 + c.idler_signal_2 - c.threefold) as f64;
    let expected = rate * 10.0 * 0.63 * (0.5 * 0.77 + 0.5 * 0.74);
    assert!(
        (detected - expected).abs() < 3.0 * expected.sqrt(),
        "detected {detected}, expected {expected}"
    );
}

#[test]
fn independent_streams_give_flat_accidentals() {
    let mut ch = ChannelSet::ideal();
    ch.idler.dark_rate = 1e5;
    ch.signal_1.dark_rate = 1e5;
    let ts = simulate_timestamps(&source(0.0, 0.0), &ch, 10.0, 5, DEFAULT_EVENT_CAP).unwrap();
    let h = start_stop_histogram(&ts.idler, &ts.signal_1, 10e-9, 100e-12, ts.duration_ps).unwrap();
    let per_bin = 1e5 * 1e5 * 100e-12 * 10.0;
    let mean = h.total() as f64 / h.len() as f64;
    // standard error of the mean over all bins
    let se = (per_bin / h.len() as f64).sqrt();
    assert!(
        (mean - per_bin).abs() < 3.0 * se + 0.01 * per_bin,
        "mean {mean} vs {per_bin}"
    );
    assert!(!fit_peak(&h.rebin(2).unwrap()).is_converged());
}

#[test]
fn zero_pair_rate_histogram_is_flat() {
    let ts = simulate_timestamps(&source(0.0, 0.0), &lab_channels(2e5), 5.0, 8, DEFAULT_EVENT_CAP).unwrap();
    let h = start_stop_histogram(&ts.idler, &ts.merged_signal(), 8e-9, 20e-12, ts.duration_ps).unwrap();
    let mean = h.total() as f64 / h.len() as f64;
    let chi2: f64 = h.counts.iter().map(|&c| (c as f64 - mean).powi(2) / mean).sum();
    let dof = (h.len() - 1) as f64;
    assert!((chi2 - dof).abs() < 5.0 * (2.0 * dof).sqrt(), "chi2 {chi2} dof {dof}");
}

#[test]
fn histogram_total_is_starts_with_stop_in_span() {
    let ts = simulate_timestamps(&source(5e4, 40e-12), &lab_channels(5e4), 1.0, 2, DEFAULT_EVENT_CAP).unwrap();
    let stop = ts.merged_signal();
    let span = 6e-9;
    let h = start_stop_histogram(&ts.idler, &stop, span, 1e-12, ts.duration_ps).unwrap();
    let expected = ts
        .idler
        .iter()
        .filter(|&&t| {
            let k = stop.partition_point(|&s| s < t);
            k < stop.len() && stop[k] - t < 6000
        })
        .count() as u64;
    assert_eq!(h.total(), expected);
}

#[test]
fn fit_recovers_poisson_peaks_over_seeds() {
    let mut amp = Vec::new();
    let mut mu = Vec::new();
    let mut sigma = Vec::new();
    let mut off = Vec::new();
    for seed in 0..100 {
        let h = synthetic(1000.0, 0.0, 80.0, 5.0, 10, Some(seed));
        let f = *fit_peak(&h).ok().expect("fit converges");
        amp.push((f.amplitude / 1000.0 - 1.0).abs());
        mu.push((f.center * 1e12).abs() / 80.0);
        sigma.push((f.sigma * 1e12 / 80.0 - 1.0).abs());
        off.push((f.offset / 5.0 - 1.0).abs());
    }
    for (name, v) in [("amplitude", amp), ("center", mu), ("sigma", sigma), ("offset", off)] {
        let m = median(v);
        assert!(m < 0.05, "{name} median relative error {m}");
    }
}

#[test]
fn noiseless_peak_recovered_exactly() {
    let h = synthetic(1e9, 23.0, 80.0, 1e6, 5, None);
    let f = *fit_peak(&h).ok().unwrap();
    assert!((f.amplitude / 1e9 - 1.0).abs() < 1e-6);
    assert!((f.center * 1e12 - 23.0).abs() / 80.0 < 1e-6);
    assert!((f.sigma * 1e12 / 80.0 - 1.0).abs() < 1e-6);
    assert!((f.offset / 1e6 - 1.0).abs() < 1e-6);
}

#[test]
fn poisson_flat_histogram_fails_to_fit() {
    for seed in 0..20 {
        let h = synthetic(0.0, 0.0, 80.0, 30.0, 10, Some(seed));
        assert!(matches!(fit_peak(&h), FitResult::Failed(_)), "seed {seed}");
    }
}

#[test]
fn flat_only_histogram_has_no_excess() {
    let h = synthetic(0.0, 0.0, 80.0, 40.0, 10, Some(3));
    let mean = h.total() as f64 / h.len() as f64;
    let fit = PeakFit {
        amplitude: 0.0,
        center: 0.0,
        sigma: 80e-12,
        offset: mean,
        bin_width: h.bin_width(),
        iterations: 0,
    };
    let r = car_and_pgr(&h, &fit, COINCIDENCE_WINDOW).unwrap();
    let sigma = r.accidentals.sqrt();
    assert!(r.coincidences.abs() < 3.0 * sigma);
    assert!(r.car.abs() < 3.0 * sigma / r.accidentals);
}

#[test]
fn halving_window_follows_gaussian_mass() {
    let h = synthetic(1e6, 0.0, 80.0, 1e3, 1, None);
    let fit = *fit_peak(&h).ok().unwrap();
    let full = car_and_pgr(&h, &fit, 320e-12).unwrap();
    let half = car_and_pgr(&h, &fit, 160e-12).unwrap();
    assert_eq!(half.accidentals * 2.0, full.accidentals);
    let s = fit.sigma * 2f64.sqrt();
    let expected = erf(80e-12 / s) / erf(160e-12 / s);
    let ratio = half.coincidences / full.coincidences;
    assert!((ratio / expected - 1.0).abs() < 0.01, "ratio {ratio} vs {expected}");
}

#[test]
fn zero_accidentals_gives_infinite_car() {
    let h = synthetic(500.0, 0.0, 80.0, 0.0, 10, None);
    let fit = *fit_peak(&h).ok().unwrap();
    let r = car_and_pgr(&h, &fit, COINCIDENCE_WINDOW).unwrap();
    if fit.offset == 0.0 {
        assert!(r.car.is_infinite());
        assert!(r.raw_counts > 0);
    }
}

#[test]
fn car_falls_with_source_noise() {
    let mut last = f64::INFINITY;
    for noise in [2e4, 5e4, 1e5, 2e5, 5e5] {
        let ts = simulate_timestamps(&source(2e5, 30e-12), &lab_channels(noise), 2.0, 17, DEFAULT_EVENT_CAP).unwrap();
        let h = start_stop_histogram(&ts.idler, &ts.signal_1, 5e-9, 1e-12, ts.duration_ps)
            .unwrap()
            .rebin(10)
            .unwrap();
        let fit = *fit_peak(&h).ok().expect("peak fits");
        let car = car_and_pgr(&h, &fit, COINCIDENCE_WINDOW).unwrap().car;
        assert!(car < last, "noise {noise}: CAR {car} not below {last}");
        last = car;
    }
}

#[test]
fn fitted_offset_agrees_with_side_windows_and_correlation() {
    let ts = simulate_timestamps(&source(2e5, 30e-12), &lab_channels(3e5), 5.0, 4, DEFAULT_EVENT_CAP).unwrap();
    let h = start_stop_histogram(&ts.idler, &ts.signal_1, 10e-9, 1e-12, ts.duration_ps)
        .unwrap()
        .rebin(10)
        .unwrap();
    let fit = *fit_peak(&h).ok().unwrap();
    let r = car_and_pgr(&h, &fit, COINCIDENCE_WINDOW).unwrap();
    let t = ts.duration();
    let singles = (ts.idler.len() as f64 / t) * (ts.signal_1.len() as f64 / t);
    let analytic = singles * COINCIDENCE_WINDOW * t;
    let side = side_window_accidentals(&h, fit.center, COINCIDENCE_WINDOW, 1e-9, 7).unwrap();
    for (name, v) in [("fit", r.accidentals), ("side windows", side)] {
        assert!((v / analytic - 1.0).abs() < 0.12, "{name} {v} vs analytic {analytic}");
    }

    let c = correlation_histogram(&ts.idler, &ts.signal_1, 10e-9, 10e-12, ts.duration_ps).unwrap();
    let cfit = *fit_peak(&c).ok().unwrap();
    assert!((cfit.offset / fit.offset - 1.0).abs() < 0.12, "{cfit:?} {fit:?}");
    assert!((cfit.center - fit.center).abs() < 10e-12);
}

#[test]
fn single_pair_emission_has_no_threefolds() {
    let ts = simulate_timestamps(&source(1e3, 0.0), &ChannelSet::ideal(), 10.0, 6, DEFAULT_EVENT_CAP).unwrap();
    assert_eq!(
        g2_zero(&ts.idler, &ts.signal_1, &ts.signal_2, COINCIDENCE_WINDOW),
        Some(0.0)
    );
}

fn brute_force(idler: &[i64], s1: &[i64], s2: &[i64], half: i64) -> (u64, u64, u64, u64) {
    let mut n = (idler.len() as u64, 0, 0, 0);
    for &t in idler {
        let a = s1.iter().any(|&s| (s - t).abs() <= half);
        let b = s2.iter().any(|&s| (s - t).abs() <= half);
        n.1 += a as u64;
        n.2 += b as u64;
        n.3 += (a && b) as u64;
    }
    n
}

#[test]
fn two_simultaneous_pairs_by_enumeration() {
    // Two pairs at t = 1 ns, one signal to each port, plus an isolated pair.
    let idler = vec![1000, 1000, 50_000];
    let s1 = vec![1000, 50_000];
    let s2 = vec![1000];
    let (ni, n1, n2, n3) = brute_force(&idler, &s1, &s2, 160);
    assert_eq!((ni, n1, n2, n3), (3, 3, 2, 2));
    let g2 = g2_zero(&idler, &s1, &s2, COINCIDENCE_WINDOW).unwrap();
    let by_hand = (n3 * ni) as f64 / (n1 * n2) as f64;
    assert_eq!(g2, by_hand);
    assert_eq!(g2, 1.0);
}

#[test]
fn heralded_counts_match_enumeration_on_random_streams() {
    for seed in 0..10 {
        let mut ch = lab_channels(3e6);
        ch.signal_1.delay = 0.0;
        ch.signal_2.delay = 0.0;
        let ts = simulate_timestamps(&source(2e6, 30e-12), &ch, 2e-4, seed, DEFAULT_EVENT_CAP).unwrap();
        let c = heralded_counts(&ts.idler, &ts.signal_1, &ts.signal_2, COINCIDENCE_WINDOW);
        let b = brute_force(&ts.idler, &ts.signal_1, &ts.signal_2, 160);
        assert_eq!((c.idler, c.idler_signal_1, c.idler_signal_2, c.threefold), b);
    }
}

#[test]
fn multipair_g2_scales_with_mean_pair_number() {
    let mut points = Vec::new();
    for mu in [0.001, 0.01, 0.1] {
        let rate = mu / COINCIDENCE_WINDOW;
        let duration = 1.5e6 / rate;
        let mut ch = ChannelSet::ideal();
        ch.signal_1.delay = 1e-9;
        ch.signal_2.delay = 1.7e-9;
        let ts = simulate_timestamps(&source(rate, 0.0), &ch, duration, 21, DEFAULT_EVENT_CAP).unwrap();
        let c = heralded_counts_compensated(&ts, COINCIDENCE_WINDOW, 3e-9).unwrap();
        points.push((mu, c.g2().unwrap()));
    }
    let slope = |a: (f64, f64), b: (f64, f64)| (b.1.ln() - a.1.ln()) / (b.0.ln() - a.0.ln());
    let overall = slope(points[0], points[2]);
    assert!((overall - 1.0).abs() < 0.2, "points {points:?}");
    assert!((slope(points[0], points[1]) - 1.0).abs() < 0.2);
    assert!((slope(points[1], points[2]) - 1.0).abs() < 0.2);
}

#[test]
fn same_seed_same_histogram() {
    let run = |seed| {
        let ts = simulate_timestamps(&source(1e5, 30e-12), &lab_channels(1e4), 0.5, seed, DEFAULT_EVENT_CAP).unwrap();
        start_stop_histogram(&ts.idler, &ts.merged_signal(), 5e-9, 1e-12, ts.duration_ps).unwrap()
    };
    assert_eq!(run(99), run(99));
    assert_ne!(run(99), run(100));
}

#[test]
fn deembedding_two_signal_paths() {
    let on_chip = deembed(2.2e3, &[14.5, 14.5]).unwrap();
    assert!((on_chip / 31.7e3 - 1.0).abs() < 0.05);
}

#[test]
fn timestamp_files_round_trip() {
    let ch = lab_channels(1e4);
    let ts = simulate_timestamps(&source(1e4, 30e-12), &ch, 0.2, 1, DEFAULT_EVENT_CAP).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let sidecar = io::save_timestamps(dir.path(), "run", &ts, Some(&ch)).unwrap();
    let back = io::load_timestamps(&sidecar).unwrap();
    assert_eq!(back, ts);
    let meta: io::TimestampSidecar = serde_json::from_str(&std::fs::read_to_string(&sidecar).unwrap()).unwrap();
    assert_eq!(meta.channels[1].model, Some(ch.signal_1));
    let raw = std::fs::read(dir.path().join("run_idler.bin")).unwrap();
    assert_eq!(raw.len(), 8 * ts.idler.len());
    assert_eq!(i64::from_le_bytes(raw[..8].try_into().unwrap()), ts.idler[0]);
}
