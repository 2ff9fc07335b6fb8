//! Scenario configuration: one versioned JSON document with a section per
//! experiment. Every field has a default, so `{}` is a complete config.

use std::path::Path;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::afe::AfeConfig;
use crate::controller::LockConfig;
use crate::dac::SwitchStage;
use crate::error::{Error, Result};
use crate::plant::ThermalRing;
use crate::quantum::FitOptions;
use crate::units::NM;

use super::source::{DetectionConfig, SourceConfig};
use super::variability::VariabilityRow;

pub const SCHEMA_VERSION: u32 = 1;

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    /// Root seed; every stochastic component derives its own stream from it.
    pub seed: u64,
    pub ring: ThermalRing,
    pub afe: AfeConfig,
    pub lock: LockConfig,
    /// Heater driver; its full-scale power sets the heater range.
    pub heater: SwitchStage,
    pub pump: PumpConfig,
    pub source: SourceConfig,
    pub detection: DetectionConfig,
    pub hysteresis: HysteresisConfig,
    pub aggressor: AggressorConfig,
    pub robustness: RobustnessConfig,
    pub multiring: MultiringConfig,
    pub power_ladder: PowerLadderConfig,
    pub variability: VariabilityConfig,
    pub dac: DacCharacterizeConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 1,
            ring: ThermalRing::default(),
            afe: AfeConfig::default(),
            lock: LockConfig::default(),
            heater: SwitchStage::default(),
            pump: PumpConfig::default(),
            source: SourceConfig::default(),
            detection: DetectionConfig::default(),
            hysteresis: HysteresisConfig::default(),
            aggressor: AggressorConfig::default(),
            robustness: RobustnessConfig::default(),
            multiring: MultiringConfig::default(),
            power_ladder: PowerLadderConfig::default(),
            variability: VariabilityConfig::default(),
            dac: DacCharacterizeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct PumpConfig {
    /// On-chip bus power (dBm).
    pub power_dbm: f64,
    /// Pump wavelength above the cold resonance (m). Should sit inside the
    /// heater tuning range.
    pub offset: f64,
}

impl Default for PumpConfig {
    fn default() -> Self {
        Self {
            power_dbm: -2.0,
            offset: 0.31 * NM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct HysteresisConfig {
    pub powers_dbm: Vec<f64>,
    /// Sweep start relative to the cold resonance (m).
    pub start: f64,
    /// Sweep stop relative to the cold resonance (m).
    pub stop: f64,
    pub points: usize,
    /// m/s; rate·τ must stay well below the linewidth for steady-state traces.
    pub rate: f64,
    /// Transmission difference counted as hysteresis.
    pub threshold: f64,
}

impl Default for HysteresisConfig {
    fn default() -> Self {
        Self {
            powers_dbm: vec![-20.0, -11.0, -8.0, -5.1, -2.0],
            start: -0.1 * NM,
            stop: 0.3 * NM,
            points: 801,
            rate: 0.005 * NM / 1e-3,
            threshold: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct AggressorConfig {
    /// Heater-to-ring crosstalk gain between the locked ring and the
    /// aggressor.
    pub crosstalk: f64,
    /// Lag of the crosstalk heat (s).
    pub crosstalk_tau: f64,
    pub high_code: u32,
    pub low_code: u32,
    /// Time between aggressor edges (s).
    pub half_period: f64,
    /// Full square-wave periods after lock acquisition.
    pub cycles: usize,
    /// Regulated time with the aggressor high before the square wave (s).
    pub hold: f64,
    /// Span after each edge excluded from the regulation check (s).
    pub transient: f64,
    pub max_acquire_updates: usize,
}

impl Default for AggressorConfig {
    fn default() -> Self {
        Self {
            crosstalk: 0.05,
            crosstalk_tau: 1.0,
            high_code: 1023,
            low_code: 0,
            half_period: 10.0,
            cycles: 3,
            hold: 10.0,
            transient: 3.0,
            max_acquire_updates: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct RobustnessConfig {
    pub target_fractions: Vec<f64>,
    /// Upper end of the searched aggressor swing, in units of full-scale
    /// heater power.
    pub max_amplitude: f64,
    pub bisections: usize,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self {
            target_fractions: vec![0.90, 0.95, 0.98],
            max_amplitude: 16.0,
            bisections: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Stagger {
    /// Aggressor start times spread evenly over the run.
    Uniform,
    /// All aggressors start together at the beginning of the run.
    Simultaneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct MultiringConfig {
    pub rings: usize,
    /// Index of the closed-loop ring (0-based).
    pub locked_ring: usize,
    pub pump_dbm: f64,
    /// Nearest-neighbour crosstalk gain.
    pub crosstalk: f64,
    /// Gain ratio per additional ring of separation.
    pub falloff: f64,
    pub crosstalk_tau: f64,
    /// Real experiment length being emulated (s).
    pub experiment_duration: f64,
    /// Simulated time runs this many times faster than the experiment.
    pub compression: f64,
    pub stagger: Stagger,
    /// Counting window of each pair-rate sample (s).
    pub count_window: f64,
    /// Regulated time after all aggressors finish (s).
    pub tail: f64,
    /// Regulated time between lock acquisition and the first aggressor
    /// start, not recorded (s).
    pub settle: f64,
}

impl Default for MultiringConfig {
    fn default() -> Self {
        Self {
            rings: 12,
            locked_ring: 2,
            pump_dbm: -4.0,
            crosstalk: 0.05,
            falloff: 0.5,
            crosstalk_tau: 1.0,
            experiment_duration: 3600.0,
            compression: 60.0,
            stagger: Stagger::Uniform,
            count_window: 1.0,
            tail: 10.0,
            settle: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct PowerLadderConfig {
    pub powers_dbm: Vec<f64>,
    /// Minimum acquisition per power point (s).
    pub min_integration: f64,
    /// Keep acquiring until this many threefold events are seen...
    pub min_threefolds: u64,
    /// ...or this much time has been simulated (s).
    pub max_integration: f64,
    /// Length of each simulated acquisition block (s).
    pub block: f64,
    /// Regulated updates discarded after lock acquisition.
    pub settle_updates: usize,
    /// Regulated updates averaged for the operating point.
    pub average_updates: usize,
}

impl Default for PowerLadderConfig {
    fn default() -> Self {
        Self {
            powers_dbm: vec![-10.4, -8.1, -5.8, -3.5, -1.2],
            min_integration: 2.0,
            min_threefolds: 200,
            max_integration: 600.0,
            block: 2.0,
            settle_updates: 50,
            average_updates: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema, Default)]
#[serde(deny_unknown_fields, default)]
pub struct VariabilityConfig {
    /// Rows to analyse; the built-in six-die table when absent.
    pub rows: Option<Vec<VariabilityRow>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct DacCharacterizeConfig {
    pub acc_bits: u32,
    /// Hz
    pub clocks: Vec<f64>,
    /// Thermal time constants (s).
    pub taus: Vec<f64>,
    /// Clocks at which the switched-stage transfer curve is simulated (Hz).
    pub linearity_clocks: Vec<f64>,
    /// Samples per clock in the switched-stage simulation.
    pub oversample: usize,
}

impl Default for DacCharacterizeConfig {
    fn default() -> Self {
        Self {
            acc_bits: 10,
            clocks: vec![125e6, 250e6, 500e6],
            taus: vec![0.5e-6, 2.7e-6, 10e-6],
            linearity_clocks: vec![125e6, 500e6],
            oversample: 16,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.ring.validate().map_err(as_config)?;
        self.afe.validate().map_err(as_config)?;
        self.lock.validate()?;
        self.heater.validate().map_err(as_config)?;
        self.source.validate()?;
        self.detection.validate()?;
        if !(self.pump.offset.is_finite() && self.pump.power_dbm.is_finite()) {
            return Err(Error::config("pump power and offset must be finite"));
        }
        let h = &self.hysteresis;
        if h.points < 2 || !(h.stop > h.start) || !(h.rate > 0.0) || !(h.threshold > 0.0) {
            return Err(Error::config(
                "hysteresis sweep needs ≥2 points, stop > start, positive rate and threshold",
            ));
        }
        let a = &self.aggressor;
        let max_dac = self.lock.max_dac();
        if a.high_code > max_dac || a.low_code > max_dac {
            return Err(Error::config("aggressor codes exceed the DAC range"));
        }
        if !(a.crosstalk >= 0.0 && a.crosstalk < 1.0) || !(a.crosstalk_tau >= 0.0) {
            return Err(Error::config(
                "aggressor crosstalk must lie in [0, 1) with a non-negative lag",
            ));
        }
        if !(a.half_period > 0.0 && a.hold >= 0.0 && a.transient >= 0.0) {
            return Err(Error::config("aggressor timing must be positive"));
        }
        let r = &self.robustness;
        if r.target_fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) || !(r.max_amplitude > 0.0) {
            return Err(Error::config(
                "robustness fractions must lie in (0, 1) with a positive search range",
            ));
        }
        let m = &self.multiring;
        if m.rings == 0 || m.locked_ring >= m.rings {
            return Err(Error::config("multiring locked ring must be one of the rings"));
        }
        if !(m.compression >= 1.0
            && m.experiment_duration > 0.0
            && m.count_window > 0.0
            && m.tail >= 0.0
            && m.settle >= 0.0)
        {
            return Err(Error::config("multiring timing must be positive with compression ≥ 1"));
        }
        if !(m.crosstalk >= 0.0 && m.crosstalk < 1.0 && m.falloff >= 0.0 && m.falloff <= 1.0) {
            return Err(Error::config(
                "multiring crosstalk must lie in [0, 1) and falloff in [0, 1]",
            ));
        }
        let p = &self.power_ladder;
        if !(p.min_integration > 0.0
            && p.block > 0.0
            && p.max_integration >= p.min_integration
            && p.average_updates > 0)
        {
            return Err(Error::config(
                "power ladder integration times must be positive and ordered",
            ));
        }
        if let Some(rows) = &self.variability.rows {
            for row in rows {
                row.validate()?;
            }
        }
        let d = &self.dac;
        if d.oversample == 0
            || d.clocks
                .iter()
                .chain(&d.taus)
                .chain(&d.linearity_clocks)
                .any(|v| !(*v > 0.0))
        {
            return Err(Error::config("DAC grid values and oversampling must be positive"));
        }
        Ok(())
    }

    /// Heater power at full scale (W).
    pub fn heater_full_scale(&self) -> f64 {
        self.heater.full_scale_power()
    }

    pub fn fit_options(&self) -> FitOptions {
        self.detection.fit
    }

    /// Parse a JSON document, apply `path=value` overrides and validate.
    pub fn from_json_str(text: &str, overrides: &[String]) -> Result<Self> {
        let user: Value =
            serde_json::from_str(text).map_err(|e| Error::config(format!("config is not valid JSON: {e}")))?;
        Self::from_value(user, overrides)
    }

    pub fn from_value(user: Value, overrides: &[String]) -> Result<Self> {
        if !user.is_object() {
            return Err(Error::config("config must be a JSON object"));
        }
        let mut merged = serde_json::to_value(Self::default())?;
        merge(&mut merged, user);
        for o in overrides {
            apply_override(&mut merged, o)?;
        }
        let cfg: Self = serde_json::from_value(merged).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file (never written back).
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text, overrides)
    }

    pub fn json_schema() -> Value {
        serde_json::to_value(schemars::schema_for!(ScenarioConfig)).expect("schema serializes")
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Domain(m) => Error::Config(m),
        other => other,
    }
}

/// Recursively overlay `user` on `base`. Objects merge key by key; anything
/// else replaces. Unknown keys are kept so that strict parsing reports them.
fn merge(base: &mut Value, user: Value) {
    match (base, user) {
        (Value::Object(b), Value::Object(u)) => {
            for (k, v) in u {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Set one leaf given `dotted.path=value`. The value is parsed as JSON when
/// possible and taken as a string otherwise. The path must already exist,
/// except for a final key inside an object that is currently null.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override `{assignment}` is not of the form path=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::config(format!("override path `{path}` is malformed")));
    }
    let mut node = doc;
    for (depth, key) in keys.iter().enumerate() {
        let last = depth + 1 == keys.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    if !map.contains_key(*key) {
                        return Err(Error::config(format!("unknown config path `{path}`")));
                    }
                    map.insert((*key).to_string(), value);
                    return Ok(());
                }
                map.get_mut(*key)
                    .ok_or_else(|| Error::config(format!("unknown config path `{path}`")))?
            }
            Value::Array(items) => {
                let idx: usize = key
                    .parse()
                    .map_err(|_| Error::config(format!("`{key}` in `{path}` is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::config(format!("index {idx} in `{path}` is out of range ({len} items)")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::config(format!("`{path}` descends into a scalar"))),
        };
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        let cfg = ScenarioConfig::from_json_str("{}", &[]).unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
    }

    #[test]
    fn unknown_key_rejected() {
        let err = ScenarioConfig::from_json_str(r#"{"pump": {"power": 1}}"#, &[]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(ScenarioConfig::from_json_str(r#"{"bogus": 1}"#, &[]).is_err());
    }

    #[test]
    fn partial_section_keeps_other_defaults() {
        let cfg = ScenarioConfig::from_json_str(r#"{"pump": {"power_dbm": -4.0}}"#, &[]).unwrap();
        assert_eq!(cfg.pump.power_dbm, -4.0);
        assert_eq!(cfg.pump.offset, PumpConfig::default().offset);
    }

    #[test]
    fn overrides_by_path() {
        let cfg = ScenarioConfig::from_json_str(
            "{}",
            &[
                "seed=7".into(),
                "lock.kp=0.5".into(),
                "power_ladder.powers_dbm.1=-9".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.lock.kp, 0.5);
        assert_eq!(cfg.power_ladder.powers_dbm[1], -9.0);
        assert!(ScenarioConfig::from_json_str("{}", &["lock.nope=1".into()]).is_err());
        assert!(ScenarioConfig::from_json_str("{}", &["seed".into()]).is_err());
    }

    #[test]
    fn wrong_version_rejected() {
        assert!(ScenarioConfig::from_json_str(r#"{"schema_version": 99}"#, &[]).is_err());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let e = ScenarioConfig::from_json_str(r#"{"multiring": {"locked_ring": 12}}"#, &[]).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
        let e = ScenarioConfig::from_json_str(r#"{"ring": {"q_intrinsic": -1}}"#, &[]).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
    }

    #[test]
    fn schema_names_sections() {
        let s = ScenarioConfig::json_schema().to_string();
        for key in ["power_ladder", "multiring", "detection", "schema_version"] {
            assert!(s.contains(key), "{key}");
        }
    }
}
