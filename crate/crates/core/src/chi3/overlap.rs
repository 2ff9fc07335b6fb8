//! Azimuthally averaged χ⁽³⁾ overlap integrals for ring modes.
//!
//! Silicon is taken with Kleinman symmetry, so only χ₁₁₁₁ and χ₁₁₂₂ enter,
//! weighted by the `A` and `B` integrals. Signal, pump and idler share one
//! mode solution.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::grid::ModeFieldGrid;
use crate::error::{Error, Result};
use crate::units::VACUUM_PERMITTIVITY;

/// Third-order susceptibility of the core material.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct Chi3Params {
    /// χ₁₁₁₁ (m²/V²).
    pub chi_1111: f64,
    /// χ₁₁₂₂ (m²/V²); equal to χ₁₂₁₂ and χ₁₂₂₁ under Kleinman symmetry.
    pub chi_1122: f64,
    pub n_core: f64,
}

impl Chi3Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.chi_1111 > 0.0) {
            return Err(Error::domain("χ1111 must be positive"));
        }
        if !(self.n_core > 1.0) {
            return Err(Error::domain("core index must exceed 1"));
        }
        Ok(())
    }
}

/// Integrand of `A` at one sample, cylindrical components.
fn a_integrand(er: Complex64, ep: Complex64, ez: Complex64) -> Complex64 {
    let (ar, ap, az) = (er.norm_sqr(), ep.norm_sqr(), ez.norm_sqr());
    // E_r² E_φ*² + c.c. keeps the result invariant under a global phase.
    let cross = er * er * (ep * ep).conj();
    Complex64::new(az * az + 0.75 * ar * ar + 0.75 * ap * ap + ar * ap, 0.0) + 0.25 * (cross + cross.conj())
}

fn b_integrand(er: Complex64, ep: Complex64, ez: Complex64) -> Complex64 {
    let (ar, ap, az) = (er.norm_sqr(), ep.norm_sqr(), ez.norm_sqr());
    let transverse_sq = er * er + ep * ep;
    let z_mix = (ez * ez).conj() * transverse_sq;
    let rp = (er * er).conj() * ep * ep;
    z_mix
        + z_mix.conj()
        + Complex64::new(0.75 * ar * ar + 0.75 * ap * ap + 4.0 * az * (ar + ap) + ar * ap, 0.0)
        + 0.25 * (rp + rp.conj())
}

fn weighted_sum<F>(g: &ModeFieldGrid, f: F) -> Complex64
where
    F: Fn(Complex64, Complex64, Complex64) -> Complex64,
{
    let w = g.core_weights();
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, &wk) in w.iter().enumerate() {
        if wk != 0.0 {
            acc += wk * f(g.e_r[k], g.e_phi[k], g.e_z[k]);
        }
    }
    2.0 * PI * acc
}

/// Azimuthally averaged `A` overlap integral (V⁴·m³).
pub fn integral_a_cyl(g: &ModeFieldGrid) -> Complex64 {
    weighted_sum(g, a_integrand)
}

/// Azimuthally averaged `B` overlap integral (V⁴·m³).
pub fn integral_b_cyl(g: &ModeFieldGrid) -> Complex64 {
    weighted_sum(g, b_integrand)
}

/// Independent route to `(A, B)`: rotate the cylindrical field into crystal
/// axes at `n_phi` azimuths, evaluate the rectangular integrands and average.
pub fn phi_average_oracle(g: &ModeFieldGrid, n_phi: usize) -> Result<(Complex64, Complex64)> {
    if n_phi < 8 {
        return Err(Error::domain("phi average needs at least 8 samples"));
    }
    let w = g.core_weights();
    let trig: Vec<(f64, f64)> = (0..n_phi)
        .map(|k| {
            let phi = 2.0 * PI * k as f64 / n_phi as f64;
            (phi.cos(), phi.sin())
        })
        .collect();
    let mut a = Complex64::new(0.0, 0.0);
    let mut b = Complex64::new(0.0, 0.0);
    for (k, &wk) in w.iter().enumerate() {
        if wk == 0.0 {
            continue;
        }
        let (er, ep, ez) = (g.e_r[k], g.e_phi[k], g.e_z[k]);
        let mut sa = Complex64::new(0.0, 0.0);
        let mut sb = Complex64::new(0.0, 0.0);
        for &(c, s) in &trig {
            // inverse of the (x, y) -> (r, φ) rotation
            let ex = c * er - s * ep;
            let ey = s * er + c * ep;
            let (ax, ay, az) = (ex.norm_sqr(), ey.norm_sqr(), ez.norm_sqr());
            sa += Complex64::new(ax * ax + ay * ay + az * az, 0.0);
            let (x2, y2, z2) = (ex * ex, ey * ey, ez * ez);
            sb += x2.conj() * (y2 + z2)
                + y2.conj() * (x2 + z2)
                + z2.conj() * (x2 + y2)
                + Complex64::new(4.0 * (ax * ay + ax * az + ay * az), 0.0);
        }
        a += wk * sa / n_phi as f64;
        b += wk * sb / n_phi as f64;
    }
    Ok((2.0 * PI * a, 2.0 * PI * b))
}

/// Electric energy `∫ ½ε|E|²` over the whole grid, in the field's own
/// normalization.
pub fn mode_energy(g: &ModeFieldGrid) -> f64 {
    let w = g.weights();
    let mut acc = 0.0;
    for (k, &wk) in w.iter().enumerate() {
        if wk != 0.0 {
            let e2 = g.e_r[k].norm_sqr() + g.e_phi[k].norm_sqr() + g.e_z[k].norm_sqr();
            acc += wk * 0.5 * g.permittivity[k] * e2;
        }
    }
    2.0 * PI * acc
}

/// Core volume `2π∬ r dr dz` under the same quadrature.
pub fn core_volume(g: &ModeFieldGrid) -> f64 {
    2.0 * PI * g.core_weights().iter().sum::<f64>()
}

/// Nonlinear coefficient and effective interaction volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlinearCoefficient {
    /// β_FWM (1/J).
    pub beta: f64,
    /// Effective nonlinear volume (m³).
    pub v_eff: f64,
}

/// β_FWM and V_eff for the degenerate-mode approximation.
///
/// `β = (3/16) ε₀ (χ₁₁₁₁ A + χ₁₁₂₂ B) / U²` where `U` is the mode energy,
/// and `V_eff = 3χ₁₁₁₁ / (4 ε₀ n⁴ β)`. This is the `β_s = β_i = β_p*`
/// convention; the alternative convention carries a factor 2 on the signal
/// and idler coefficients.
pub fn beta_and_veff(g: &ModeFieldGrid, chi: &Chi3Params) -> Result<NonlinearCoefficient> {
    chi.validate()?;
    let u = mode_energy(g);
    if !(u > 0.0) {
        return Err(Error::domain("mode has zero field energy"));
    }
    let a = integral_a_cyl(g);
    let b = integral_b_cyl(g);
    let numerator = 3.0 / 16.0 * VACUUM_PERMITTIVITY * (chi.chi_1111 * a + chi.chi_1122 * b);
    // A and B are real for physical fields; drop the rounding residue.
    let beta = numerator.re / (u * u);
    if !(beta > 0.0) {
        return Err(Error::domain("non-positive nonlinear overlap"));
    }
    let v_eff = 3.0 * chi.chi_1111 / (4.0 * VACUUM_PERMITTIVITY * chi.n_core.powi(4) * beta);
    Ok(NonlinearCoefficient { beta, v_eff })
}

/// Flags "disk-like" points in a sweep of inner radius, where V_eff no longer
/// depends on the inner sidewall: `|dV_eff/dr_in| < threshold · V_eff / r_out`.
///
/// Derivatives are central differences inside the series and one-sided at
/// the ends.
pub fn disk_like_classifier(series: &[(f64, f64)], outer_radius: f64, threshold: f64) -> Result<Vec<bool>> {
    if series.len() < 3 {
        return Err(Error::domain("disk-like classification needs at least 3 points"));
    }
    if !series.windows(2).all(|w| w[1].0 > w[0].0) {
        return Err(Error::domain("inner radii must be strictly increasing"));
    }
    if !(outer_radius > 0.0) {
        return Err(Error::domain("outer radius must be positive"));
    }
    let n = series.len();
    Ok((0..n)
        .map(|k| {
            let (lo, hi) = match k {
                0 => (0, 1),
                k if k == n - 1 => (n - 2, n - 1),
                k => (k - 1, k + 1),
            };
            let slope = (series[hi].1 - series[lo].1) / (series[hi].0 - series[lo].0);
            slope.abs() < threshold * series[k].1 / outer_radius
        })
        .collect())
}
