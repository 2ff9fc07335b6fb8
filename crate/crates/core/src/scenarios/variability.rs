//! Die-to-die variability of the source rings and the pair rates the model
//! predicts for them.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::cmt::{pgr_efficiency_mhz_per_mw2, ResonanceParams, ResonatorTriplet};
use crate::error::{Error, Result};
use crate::units::NM;

/// One measured ring, in the units of the published table: wavelengths in
/// nm, Q-factors in thousands, FSR mismatch in GHz, PGR in MHz/mW².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct VariabilityRow {
    pub die: String,
    pub site: String,
    pub lambda_s: f64,
    pub lambda_p: f64,
    pub lambda_i: f64,
    pub q_o_s: f64,
    pub q_e_s: f64,
    pub q_o_p: f64,
    pub q_e_p: f64,
    pub q_o_i: f64,
    pub q_e_i: f64,
    pub fsr_mismatch: f64,
    pub pgr: f64,
}

#[rustfmt::skip]
const TABLE: [(&str, &str, [f64; 11]); 12] = [
    ("B9", "System", [1545.29, 1552.50, 1559.79, 64.4, 57.7, 113.1, 68.2, 102.8, 62.7, 1.42, 3.29]),
    ("B9", "Test",   [1545.11, 1552.33, 1559.62, 98.0, 74.9, 72.4, 59.4, 124.9, 65.2, 1.52, 3.16]),
    ("C2", "System", [1544.82, 1552.02, 1559.32, 95.8, 80.4, 74.6, 62.9, 103.9, 58.3, 2.53, 3.03]),
    ("C2", "Test",   [1544.27, 1551.49, 1558.78, 84.5, 73.0, 100.3, 68.4, 81.8, 57.9, 1.57, 3.50]),
    ("C4", "System", [1547.92, 1555.14, 1562.44, 106.7, 76.7, 108.2, 75.5, 120.0, 67.8, 2.86, 5.61]),
    ("C4", "Test",   [1547.82, 1555.04, 1562.35, 97.8, 73.9, 125.9, 67.6, 132.1, 66.7, 3.72, 7.21]),
    ("C5", "System", [1543.19, 1550.40, 1557.69, 92.9, 75.6, 106.2, 72.1, 108.2, 69.9, 1.45, 4.77]),
    ("C5", "Test",   [1543.53, 1550.74, 1558.03, 92.9, 73.9, 99.6, 66.2, 97.5, 54.7, 2.46, 4.25]),
    ("C6", "System", [1548.02, 1555.24, 1562.55, 77.2, 71.1, 106.4, 77.5, 103.7, 62.1, 1.84, 3.75]),
    ("C6", "Test",   [1546.59, 1553.81, 1561.11, 78.6, 71.6, 117.4, 82.6, 97.6, 58.7, 2.47, 4.19]),
    ("C7", "System", [1547.26, 1554.48, 1561.77, 68.6, 63.0, 93.4, 66.8, 136.2, 71.6, 2.30, 3.16]),
    ("C7", "Test",   [1546.73, 1553.95, 1561.25, 98.9, 80.0, 121.4, 80.4, 85.9, 55.4, 1.70, 5.34]),
];

/// Column names and units, in [`VariabilityRow::values`] order.
pub const COLUMNS: [(&str, &str); 11] = [
    ("lambda_s", "nm"),
    ("lambda_p", "nm"),
    ("lambda_i", "nm"),
    ("q_o_s", "k"),
    ("q_e_s", "k"),
    ("q_o_p", "k"),
    ("q_e_p", "k"),
    ("q_o_i", "k"),
    ("q_e_i", "k"),
    ("fsr_mismatch", "GHz"),
    ("pgr", "MHz/mW2"),
];

impl VariabilityRow {
    fn from_values(die: &str, site: &str, v: [f64; 11]) -> Self {
        Self {
            die: die.into(),
            site: site.into(),
            lambda_s: v[0],
            lambda_p: v[1],
            lambda_i: v[2],
            q_o_s: v[3],
            q_e_s: v[4],
            q_o_p: v[5],
            q_e_p: v[6],
            q_o_i: v[7],
            q_e_i: v[8],
            fsr_mismatch: v[9],
            pgr: v[10],
        }
    }

    pub fn values(&self) -> [f64; 11] {
        [
            self.lambda_s,
            self.lambda_p,
            self.lambda_i,
            self.q_o_s,
            self.q_e_s,
            self.q_o_p,
            self.q_e_p,
            self.q_o_i,
            self.q_e_i,
            self.fsr_mismatch,
            self.pgr,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.die.is_empty() {
            return Err(Error::config("variability row needs a die label"));
        }
        if !self.values().iter().all(|v| v.is_finite()) || self.pgr < 0.0 {
            return Err(Error::config(format!(
                "row {} {}: values must be finite",
                self.die, self.site
            )));
        }
        self.triplet(0.0)
            .map(|_| ())
            .map_err(|e| Error::config(format!("row {} {}: {e}", self.die, self.site)))
    }

    /// Triplet of this row with nonlinear coefficient `beta`.
    pub fn triplet(&self, beta: f64) -> Result<ResonatorTriplet> {
        let k = 1e3;
        ResonatorTriplet::new(
            ResonanceParams::new(self.lambda_s * NM, self.q_o_s * k, self.q_e_s * k)?,
            ResonanceParams::new(self.lambda_p * NM, self.q_o_p * k, self.q_e_p * k)?,
            ResonanceParams::new(self.lambda_i * NM, self.q_o_i * k, self.q_e_i * k)?,
            self.fsr_mismatch * 1e9,
            beta,
        )
    }
}

/// The six-die, twelve-ring variability table.
pub fn builtin_table() -> Vec<VariabilityRow> {
    TABLE
        .iter()
        .map(|(die, site, v)| VariabilityRow::from_values(die, site, *v))
        .collect()
}

pub fn table_row(die: &str, site: &str) -> Option<VariabilityRow> {
    builtin_table()
        .into_iter()
        .find(|r| r.die.eq_ignore_ascii_case(die) && r.site.eq_ignore_ascii_case(site))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowPrediction {
    pub die: String,
    pub site: String,
    /// Table value (MHz/mW²).
    pub measured: f64,
    /// With the globally fitted β (MHz/mW²).
    pub predicted: f64,
    /// With the design-point β (MHz/mW²).
    pub predicted_design: f64,
    /// `(predicted − measured) / measured`
    pub residual: f64,
}

/// Smallest and largest absolute difference of a column over pairs of rows
/// on the same die and on different dies. Zero when there are no pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Spread {
    pub best_intra_die: f64,
    pub worst_intra_die: f64,
    pub best_die_die: f64,
    pub worst_die_die: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariabilityReport {
    /// β minimising the squared PGR residuals over all rows.
    pub beta_global: f64,
    pub beta_design: f64,
    pub rows: Vec<RowPrediction>,
    /// Per column of [`COLUMNS`].
    pub spreads: Vec<Spread>,
    pub median_abs_residual: f64,
}

/// Predicted PGR per row with one least-squares β, and the column spreads.
pub fn variability_report(rows: &[VariabilityRow], beta_design: f64) -> Result<VariabilityReport> {
    if rows.is_empty() {
        return Err(Error::config("variability table has no rows"));
    }
    let mut unit = Vec::with_capacity(rows.len());
    for r in rows {
        r.validate()?;
        unit.push(pgr_efficiency_mhz_per_mw2(&r.triplet(1.0)?)?);
    }
    // PGR is linear in β², so the least-squares β² is a ratio of sums.
    let num: f64 = rows.iter().zip(&unit).map(|(r, u)| r.pgr * u).sum();
    let den: f64 = unit.iter().map(|u| u * u).sum();
    let beta_sq = num / den;
    if !(beta_sq > 0.0) {
        return Err(Error::Fit("table PGRs give no positive β".into()));
    }
    let predictions: Vec<RowPrediction> = rows
        .iter()
        .zip(&unit)
        .map(|(r, u)| {
            let predicted = beta_sq * u;
            RowPrediction {
                die: r.die.clone(),
                site: r.site.clone(),
                measured: r.pgr,
                predicted,
                predicted_design: beta_design * beta_design * u,
                residual: (predicted - r.pgr) / r.pgr,
            }
        })
        .collect();
    let mut abs: Vec<f64> = predictions.iter().map(|p| p.residual.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let n = abs.len();
    let median_abs_residual = if n % 2 == 1 {
        abs[n / 2]
    } else {
        0.5 * (abs[n / 2 - 1] + abs[n / 2])
    };
    let spreads = (0..COLUMNS.len()).map(|c| spread(rows, c)).collect();
    Ok(VariabilityReport {
        beta_global: beta_sq.sqrt(),
        beta_design,
        rows: predictions,
        spreads,
        median_abs_residual,
    })
}

fn spread(rows: &[VariabilityRow], column: usize) -> Spread {
    let mut intra: Vec<f64> = Vec::new();
    let mut inter: Vec<f64> = Vec::new();
    for (i, a) in rows.iter().enumerate() {
        for b in &rows[i + 1..] {
            let d = (a.values()[column] - b.values()[column]).abs();
            if a.die == b.die {
                intra.push(d);
            } else {
                inter.push(d);
            }
        }
    }
    let lo = |v: &[f64]| v.iter().copied().reduce(f64::min).unwrap_or(0.0);
    let hi = |v: &[f64]| v.iter().copied().reduce(f64::max).unwrap_or(0.0);
    Spread {
        best_intra_die: lo(&intra),
        worst_intra_die: hi(&intra),
        best_die_die: lo(&inter),
        worst_die_die: hi(&inter),
    }
}
