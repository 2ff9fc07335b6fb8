//! Heater DAC characterization and evaluation of the source design point.

use serde::Serialize;

use crate::cmt::{pgr_efficiency_mhz_per_mw2, ResonatorTriplet};
use crate::dac::{effective_resolution, inl_dnl, transfer_curve};
use crate::error::Result;
use crate::units::dbm_to_watts;

use super::config::ScenarioConfig;
use super::variability::table_row;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolutionPoint {
    pub f_clk: f64,
    pub tau_th: f64,
    pub effective_bits: f64,
    pub worst_code: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RippleCurve {
    pub f_clk: f64,
    pub tau_th: f64,
    /// W, by code.
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearityCurve {
    pub f_clk: f64,
    /// Mean heater power by code (W).
    pub power: Vec<f64>,
    pub inl: Vec<f64>,
    pub dnl: Vec<f64>,
    pub max_abs_inl: f64,
    pub min_dnl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DacCharacterization {
    pub acc_bits: u32,
    pub resolution: Vec<ResolutionPoint>,
    pub ripple: Vec<RippleCurve>,
    pub linearity: Vec<LinearityCurve>,
}

/// Effective resolution over the clock × time-constant grid and the
/// switched-stage transfer curve at each linearity clock.
pub fn dac_characterize(cfg: &ScenarioConfig) -> Result<DacCharacterization> {
    let d = &cfg.dac;
    let p_fs = cfg.heater_full_scale();
    let mut resolution = Vec::new();
    let mut ripple = Vec::new();
    for &f_clk in &d.clocks {
        for &tau_th in &d.taus {
            let r = effective_resolution(f_clk, tau_th, d.acc_bits, p_fs)?;
            resolution.push(ResolutionPoint {
                f_clk,
                tau_th,
                effective_bits: r.effective_bits,
                worst_code: r.worst_code,
            });
            ripple.push(RippleCurve {
                f_clk,
                tau_th,
                sigma: r.sigma_ripple,
            });
        }
    }
    let mut linearity = Vec::new();
    for &f_clk in &d.linearity_clocks {
        let power = transfer_curve(d.acc_bits, &cfg.heater.with_clock(f_clk), d.oversample)?;
        let l = inl_dnl(&power)?;
        linearity.push(LinearityCurve {
            f_clk,
            max_abs_inl: l.max_abs_inl(),
            min_dnl: l.min_dnl(),
            power,
            inl: l.inl,
            dnl: l.dnl,
        });
    }
    Ok(DacCharacterization {
        acc_bits: d.acc_bits,
        resolution,
        ripple,
        linearity,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignPointReport {
    pub beta_fwm: f64,
    /// Efficiency of the reference design with the calibrated β (MHz/mW²).
    pub design_efficiency: f64,
    /// Same design with `Q_e = 3/4 Q_o`, the critical-coupling optimum for
    /// pair generation (MHz/mW²).
    pub optimal_efficiency: f64,
    pub optimal_q_extrinsic: f64,
    pub die: String,
    pub site: String,
    /// Predicted efficiency of the source ring (MHz/mW²).
    pub source_efficiency: f64,
    /// Table value for the source ring when it comes from the table.
    pub measured_efficiency: Option<f64>,
    pub relative_error: Option<f64>,
    pub pump_dbm: f64,
    /// On-chip pairs/s at the pump power with the pump on resonance.
    pub pair_rate: f64,
    /// s
    pub pair_sigma: f64,
}

pub fn design_point(cfg: &ScenarioConfig) -> Result<DesignPointReport> {
    let s = &cfg.source;
    let d = s.design;
    let model = s.model()?;
    let t = &model.triplet;
    let w = [t.signal.wavelength, t.pump.wavelength, t.idler.wavelength];
    let beta = t.beta_fwm;
    let design = ResonatorTriplet::uniform(w, d.q_intrinsic, d.q_extrinsic, d.fsr_mismatch, beta)?;
    let q_opt = 0.75 * d.q_intrinsic;
    let optimal = ResonatorTriplet::uniform(w, d.q_intrinsic, q_opt, d.fsr_mismatch, beta)?;
    let measured = match (&s.triplet, table_row(&s.die, &s.site)) {
        (None, Some(row)) => Some(row.pgr),
        _ => None,
    };
    Ok(DesignPointReport {
        beta_fwm: beta,
        design_efficiency: pgr_efficiency_mhz_per_mw2(&design)?,
        optimal_efficiency: pgr_efficiency_mhz_per_mw2(&optimal)?,
        optimal_q_extrinsic: q_opt,
        die: s.die.clone(),
        site: s.site.clone(),
        source_efficiency: model.efficiency,
        measured_efficiency: measured,
        relative_error: measured.map(|m| (model.efficiency - m) / m),
        pump_dbm: cfg.pump.power_dbm,
        pair_rate: model.pair_rate(dbm_to_watts(cfg.pump.power_dbm), 1.0)?,
        pair_sigma: model.pair_sigma,
    })
}
