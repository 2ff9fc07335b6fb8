//! Scenario dispatch and the CSV/JSON files each scenario produces.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::quantum::{deembed, path_loss_db};

use super::aggressor::{lock_robustness, run_lock_with_aggressor, AggressorRun, LockExperiment};
use super::characterize::{dac_characterize, design_point};
use super::config::ScenarioConfig;
use super::hysteresis::run_hysteresis;
use super::ladder::run_power_ladder;
use super::lock::LockSample;
use super::multiring::run_multiring;
use super::variability::{builtin_table, variability_report, COLUMNS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    Hysteresis,
    LockWithAggressor,
    LockRobustness,
    Multiring,
    PowerLadder,
    Variability,
    DacCharacterize,
    DesignPoint,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::Hysteresis,
        Scenario::LockWithAggressor,
        Scenario::LockRobustness,
        Scenario::Multiring,
        Scenario::PowerLadder,
        Scenario::Variability,
        Scenario::DacCharacterize,
        Scenario::DesignPoint,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Hysteresis => "hysteresis",
            Scenario::LockWithAggressor => "lock-with-aggressor",
            Scenario::LockRobustness => "lock-robustness",
            Scenario::Multiring => "multiring",
            Scenario::PowerLadder => "power-ladder",
            Scenario::Variability => "variability",
            Scenario::DacCharacterize => "dac-characterize",
            Scenario::DesignPoint => "design-point",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario {s:?}")))
    }
}

/// Named files produced by one run, held in memory until written.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputSet {
    pub files: Vec<(String, Vec<u8>)>,
}

impl OutputSet {
    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    fn push(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.push(name, bytes);
        Ok(())
    }

    /// Write every file into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        self.files
            .iter()
            .map(|(name, bytes)| {
                let path = dir.join(name);
                std::fs::write(&path, bytes)?;
                Ok(path)
            })
            .collect()
    }
}

/// Shortest round-trip decimal, switching to exponent form for very large
/// or small magnitudes.
fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn csv_bytes<I>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

fn stage_name(s: impl Serialize) -> String {
    serde_json::to_value(s)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// Run `scenario` and collect its files plus `manifest.json`.
pub fn run_scenario(scenario: Scenario, cfg: &ScenarioConfig) -> Result<OutputSet> {
    cfg.validate()?;
    let mut out = OutputSet::default();
    let metadata = match scenario {
        Scenario::Hysteresis => hysteresis(cfg, &mut out)?,
        Scenario::LockWithAggressor => lock_with_aggressor(cfg, &mut out)?,
        Scenario::LockRobustness => robustness(cfg, &mut out)?,
        Scenario::Multiring => multiring(cfg, &mut out)?,
        Scenario::PowerLadder => power_ladder(cfg, &mut out)?,
        Scenario::Variability => variability(cfg, &mut out)?,
        Scenario::DacCharacterize => dac(cfg, &mut out)?,
        Scenario::DesignPoint => {
            out.json("design_point.json", &design_point(cfg)?)?;
            json!({})
        }
    };
    let files: Vec<&str> = out.files.iter().map(|(n, _)| n.as_str()).collect();
    let manifest = json!({
        "scenario": scenario.name(),
        "seed": cfg.seed,
        "schema_version": cfg.schema_version,
        "generator": concat!("ringlock ", env!("CARGO_PKG_VERSION")),
        "files": files,
        "metadata": metadata,
        "config": cfg,
    });
    out.json("manifest.json", &manifest)?;
    Ok(out)
}

fn hysteresis(cfg: &ScenarioConfig, out: &mut OutputSet) -> Result<Value> {
    let points = run_hysteresis(cfg)?;
    let mut rows = Vec::new();
    for p in &points {
        for (dir, t, adc) in [
            ("forward", &p.forward, &p.adc_forward),
            ("reverse", &p.reverse, &p.adc_reverse),
        ] {
            for (k, code) in adc.iter().enumerate() {
                rows.push(vec![
                    num(p.power_dbm),
                    dir.to_string(),
                    num(t.wavelength[k] * 1e9),
                    num(t.transmission[k]),
                    num(t.photocurrent[k]),
                    num(t.offset[k] * 1e9),
                    code.to_string(),
                ]);
            }
        }
    }
    out.push(
        "hysteresis_traces.csv",
        csv_bytes(
            &[
                "pump_dbm",
                "direction",
                "wavelength_nm",
                "transmission",
                "photocurrent_a",
                "offset_nm",
                "adc_code",
            ],
            rows,
        )?,
    );
    out.push(
        "hysteresis_width.csv",
        csv_bytes(
            &["pump_dbm", "width_nm"],
            points.iter().map(|p| vec![num(p.power_dbm), num(p.width * 1e9)]),
        )?,
    );
    Ok(json!({ "sweep_rate_m_per_s": cfg.hysteresis.rate }))
}

fn lock_rows(samples: &[LockSample]) -> impl Iterator<Item = Vec<String>> + '_ {
    samples.iter().map(|s| {
        vec![
            num(s.time),
            stage_name(s.stage),
            s.dac_code.to_string(),
            num(s.reading),
            opt(s.setpoint),
            num(s.photocurrent),
            num(s.transmission),
            num(s.dropped_power),
        ]
    })
}

const LOCK_HEADER: [&str; 8] = [
    "time_s",
    "stage",
    "dac_code",
    "adc_reading",
    "setpoint",
    "photocurrent_a",
    "transmission",
    "dropped_power_w",
];

fn aggressor_csv(run: &AggressorRun) -> Result<Vec<u8>> {
    let mut header = vec!["aggressor_w", "feedback"];
    header.extend(LOCK_HEADER);
    csv_bytes(
        &header,
        run.samples
            .iter()
            .zip(lock_rows(&run.samples.iter().map(|s| s.lock).collect::<Vec<_>>()))
            .map(|(s, rest)| {
                let mut row = vec![num(s.aggressor_power), s.feedback.to_string()];
                row.extend(rest);
                row
            }),
    )
}

/// Headline numbers of the aggressor experiment.
pub fn lock_summary(cfg: &ScenarioConfig, e: &LockExperiment) -> Result<Value> {
    let lost = cfg.lock.lost_fraction;
    let locked = match &e.locked {
        Some(l) => {
            let det = &cfg.detection;
            let eff = det.efficiencies();
            let routes = det.routes();
            let cars: Vec<Option<f64>> = l.channels.iter().map(|c| c.car.map(|r| r.car)).collect();
            let rates: Vec<Option<f64>> = l.channels.iter().map(|c| c.car.map(|r| r.rate)).collect();
            let losses: Vec<f64> = rates
                .iter()
                .enumerate()
                .filter(|(_, r)| r.is_some())
                .map(|(k, _)| path_loss_db(eff[0], eff[k + 1], routes[k + 1]))
                .collect();
            let total: f64 = rates.iter().flatten().sum();
            let on_chip = if losses.is_empty() {
                None
            } else {
                Some(deembed(total, &losses)?)
            };
            json!({
                "pump_w": l.pump_power,
                "build_up": l.build_up,
                "model_pair_rate_hz": l.pair_rate,
                "integration_s": l.integration_time,
                "car": cars,
                "coincidence_rate_hz": rates,
                "deembedded_pair_rate_hz": on_chip,
                "expected_car": [l.expected.car(0), l.expected.car(1)],
                "expected_coincidence_rate_hz": l.expected.coincidences,
            })
        }
        None => Value::Null,
    };
    Ok(json!({
        "setpoint": e.setpoint,
        "deadband": e.deadband,
        "dark_current_a": e.dark_current,
        "peak_current_a": e.peak_current,
        "regulate_from_s": e.regulate_from,
        "transient_s": e.transient,
        "edges_s": e.feedback_on.edges,
        "max_error_feedback_on": e.max_regulation_error(&e.feedback_on),
        "max_error_feedback_off": e.max_regulation_error(&e.feedback_off),
        "lost_at_feedback_on_s": e.lost_at(&e.feedback_on, lost),
        "lost_at_feedback_off_s": e.lost_at(&e.feedback_off, lost),
        "recovers_feedback_off": e.recovers(&e.feedback_off, lost),
        "locked": locked,
    }))
}

fn lock_with_aggressor(cfg: &ScenarioConfig, out: &mut OutputSet) -> Result<Value> {
    let e = run_lock_with_aggressor(cfg)?;
    out.push(
        "afe_calibration.csv",
        csv_bytes(
            &[
                "idac_code",
                "adc_code",
                "range_codes",
                "response_codes_per_lsb",
                "merit",
            ],
            e.calibration_scan.iter().map(|p| {
                vec![
                    p.idac_sense.to_string(),
                    num(p.zero_light_code),
                    num(p.range),
                    num(p.response),
                    num(p.merit),
                ]
            }),
        )?,
    );
    out.push(
        "lock_acquisition.csv",
        csv_bytes(&LOCK_HEADER, lock_rows(&e.acquisition))?,
    );
    out.push("lock_feedback_on.csv", aggressor_csv(&e.feedback_on)?);
    out.push("lock_feedback_off.csv", aggressor_csv(&e.feedback_off)?);
    let summary = lock_summary(cfg, &e)?;
    out.json("lock_summary.json", &summary)?;
    Ok(json!({ "update_rate_hz": cfg.lock.update_rate }))
}

fn robustness(cfg: &ScenarioConfig, out: &mut OutputSet) -> Result<Value> {
    let r = lock_robustness(cfg)?;
    out.push(
        "lock_robustness.csv",
        csv_bytes(
            &["target_fraction", "max_amplitude_full_scale"],
            r.iter().map(|x| vec![num(x.target_fraction), num(x.max_amplitude)]),
        )?,
    );
    Ok(json!({ "full_scale_w": cfg.heater_full_scale(), "search_ceiling": cfg.robustness.max_amplitude }))
}

fn multiring(cfg: &ScenarioConfig, out: &mut OutputSet) -> Result<Value> {
    let m = run_multiring(cfg)?;
    let n = m.samples.first().map(|s| s.ring_codes.len()).unwrap_or(0);
    let ring_cols: Vec<String> = (0..n).map(|k| format!("dac_code_ring{}", k + 1)).collect();
    let mut header = vec![
        "time_s",
        "active_aggressors",
        "adc_reading",
        "build_up",
        "expected_rate_hz",
    ];
    header.extend(ring_cols.iter().map(String::as_str));
    out.push(
        "multiring_trace.csv",
        csv_bytes(
            &header,
            m.samples.iter().map(|s| {
                let mut row = vec![
                    num(s.time),
                    s.active.to_string(),
                    num(s.reading),
                    num(s.build_up),
                    num(s.expected_rate),
                ];
                row.extend(s.ring_codes.iter().map(u32::to_string));
                row
            }),
        )?,
    );
    out.push(
        "multiring_counts.csv",
        csv_bytes(
            &["time_s", "counts", "rate_hz"],
            m.windows
                .iter()
                .map(|w| vec![num(w.time), w.counts.to_string(), num(w.rate)]),
        )?,
    );
    let summary = json!({
        "compression": m.compression,
        "simulated_duration_s": m.samples.last().map(|s| s.time).unwrap_or(0.0),
        "mean_rate_hz": m.mean_rate,
        "rate_rsd": m.rate_rsd,
        "dac_swing_codes": m.dac_swing,
        "locked_ring": cfg.multiring.locked_ring + 1,
        "aggressor_starts_s": m.starts.iter().map(|(r, t)| json!({"ring": r + 1, "start_s": t})).collect::<Vec<_>>(),
    });
    out.json("multiring_summary.json", &summary)?;
    Ok(json!({ "compression": m.compression }))
}

fn power_ladder(cfg: &ScenarioConfig, out: &mut OutputSet) -> Result<Value> {
    let points = run_power_ladder(cfg)?;
    out.push(
        "power_ladder.csv",
        csv_bytes(
            &[
                "pump_dbm",
                "build_up",
                "model_pair_rate_hz",
                "integration_s",
                "car_s1",
                "car_s2",
                "expected_car_s1",
                "expected_car_s2",
                "coincidence_rate_hz",
                "deembedded_pair_rate_hz",
                "idler_counts",
                "twofold_s1",
                "twofold_s2",
                "threefold",
                "g2",
                "fit_ok",
            ],
            points.iter().map(|p| {
                vec![
                    num(p.power_dbm),
                    num(p.build_up),
                    num(p.pair_rate),
                    num(p.integration_time),
                    opt(p.car[0]),
                    opt(p.car[1]),
                    num(p.expected.car(0)),
                    num(p.expected.car(1)),
                    opt(p.detected_rate),
                    opt(p.deembedded_rate),
                    p.heralded.idler.to_string(),
                    p.heralded.idler_signal_1.to_string(),
                    p.heralded.idler_signal_2.to_string(),
                    p.heralded.threefold.to_string(),
                    opt(p.g2),
                    p.fit_ok().to_string(),
                ]
            }),
        )?,
    );
    Ok(json!({ "window_s": cfg.detection.window }))
}

fn variability(cfg: &ScenarioConfig, out: &mut OutputSet) -> Result<Value> {
    let rows = cfg.variability.rows.clone().unwrap_or_else(builtin_table);
    let beta = cfg.source.model()?.triplet.beta_fwm;
    let r = variability_report(&rows, beta)?;
    out.push(
        "variability_rows.csv",
        csv_bytes(
            &[
                "die",
                "site",
                "measured_mhz_per_mw2",
                "predicted_mhz_per_mw2",
                "predicted_design_beta_mhz_per_mw2",
                "relative_residual",
            ],
            r.rows.iter().map(|p| {
                vec![
                    p.die.clone(),
                    p.site.clone(),
                    num(p.measured),
                    num(p.predicted),
                    num(p.predicted_design),
                    num(p.residual),
                ]
            }),
        )?,
    );
    out.push(
        "variability_spreads.csv",
        csv_bytes(
            &[
                "column",
                "unit",
                "best_intra_die",
                "worst_intra_die",
                "best_die_die",
                "worst_die_die",
            ],
            COLUMNS.iter().zip(&r.spreads).map(|((c, u), s)| {
                vec![
                    c.to_string(),
                    u.to_string(),
                    num(s.best_intra_die),
                    num(s.worst_intra_die),
                    num(s.best_die_die),
                    num(s.worst_die_die),
                ]
            }),
        )?,
    );
    out.json(
        "variability_summary.json",
        &json!({
            "beta_global": r.beta_global,
            "beta_design": r.beta_design,
            "median_abs_residual": r.median_abs_residual,
            "rows": r.rows.len(),
        }),
    )?;
    Ok(json!({}))
}

fn dac(cfg: &ScenarioConfig, out: &mut OutputSet) -> Result<Value> {
    let d = dac_characterize(cfg)?;
    out.push(
        "dac_resolution.csv",
        csv_bytes(
            &["f_clk_hz", "tau_th_s", "effective_bits", "worst_code"],
            d.resolution.iter().map(|r| {
                vec![
                    num(r.f_clk),
                    num(r.tau_th),
                    num(r.effective_bits),
                    r.worst_code.to_string(),
                ]
            }),
        )?,
    );
    out.push(
        "dac_ripple.csv",
        csv_bytes(
            &["f_clk_hz", "tau_th_s", "code", "sigma_ripple_w"],
            d.ripple.iter().flat_map(|c| {
                c.sigma
                    .iter()
                    .enumerate()
                    .map(move |(k, s)| vec![num(c.f_clk), num(c.tau_th), k.to_string(), num(*s)])
            }),
        )?,
    );
    out.push(
        "dac_linearity.csv",
        csv_bytes(
            &["f_clk_hz", "code", "power_w", "inl_lsb", "dnl_lsb"],
            d.linearity.iter().flat_map(|l| {
                (0..l.power.len()).map(move |k| {
                    vec![
                        num(l.f_clk),
                        k.to_string(),
                        num(l.power[k]),
                        num(l.inl[k]),
                        opt(l.dnl.get(k).copied()),
                    ]
                })
            }),
        )?,
    );
    let lin: Vec<Value> = d
        .linearity
        .iter()
        .map(|l| json!({"f_clk_hz": l.f_clk, "max_abs_inl_lsb": l.max_abs_inl, "min_dnl_lsb": l.min_dnl}))
        .collect();
    Ok(json!({ "acc_bits": d.acc_bits, "oversample": cfg.dac.oversample, "linearity": lin }))
}
