//! Analytic mode fields for tests and benchmarks.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::grid::ModeFieldGrid;
use crate::error::{Error, Result};
use crate::units::VACUUM_PERMITTIVITY;

/// Relative amplitude of each cylindrical component. `phi_phase` (rad) is
/// applied to `E_φ` only, so a nonzero value gives a complex field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Polarization {
    pub radial: f64,
    pub azimuthal: f64,
    pub vertical: f64,
    pub phi_phase: f64,
}

impl Polarization {
    pub fn new(radial: f64, azimuthal: f64, vertical: f64, phi_phase: f64) -> Self {
        Self {
            radial,
            azimuthal,
            vertical,
            phi_phase,
        }
    }
}

/// Separable Gaussian `exp(-((r - r0)/w_r)² - ((z - z0)/w_z)²)` sampled on a
/// uniform grid, with a rectangular core cross-section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianModeSpec {
    pub center_radius: f64,
    pub center_height: f64,
    pub width_r: f64,
    pub width_z: f64,
    pub core_inner_radius: f64,
    pub core_outer_radius: f64,
    pub core_bottom: f64,
    pub core_top: f64,
    pub r_range: (f64, f64),
    pub z_range: (f64, f64),
    pub nr: usize,
    pub nz: usize,
    pub n_core: f64,
    pub n_cladding: f64,
    pub polarization: Polarization,
}

impl Default for GaussianModeSpec {
    /// A quasi-TE mode of a 1.2 µm wide, 0.2 µm thick ring with 10 µm outer
    /// radius, pushed toward the outer sidewall.
    fn default() -> Self {
        Self {
            center_radius: 9.6e-6,
            center_height: 0.0,
            width_r: 0.45e-6,
            width_z: 0.15e-6,
            core_inner_radius: 8.8e-6,
            core_outer_radius: 10.0e-6,
            core_bottom: -0.1e-6,
            core_top: 0.1e-6,
            r_range: (8.0e-6, 11.0e-6),
            z_range: (-0.5e-6, 0.5e-6),
            nr: 121,
            nz: 81,
            n_core: 3.48,
            n_cladding: 1.45,
            polarization: Polarization::new(1.0, 0.25, 0.1, std::f64::consts::FRAC_PI_2),
        }
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Build a [`ModeFieldGrid`] from a [`GaussianModeSpec`].
pub fn gaussian_mode(spec: &GaussianModeSpec) -> Result<ModeFieldGrid> {
    if !(spec.width_r > 0.0 && spec.width_z > 0.0) {
        return Err(Error::domain("Gaussian widths must be positive"));
    }
    if spec.nr < 2 || spec.nz < 2 {
        return Err(Error::domain("grid needs at least 2 samples per axis"));
    }
    let r_axis = linspace(spec.r_range.0, spec.r_range.1, spec.nr);
    let z_axis = linspace(spec.z_range.0, spec.z_range.1, spec.nz);
    let p = spec.polarization;
    let phi_amp = Complex64::from_polar(p.azimuthal, p.phi_phase);
    let eps_core = VACUUM_PERMITTIVITY * spec.n_core * spec.n_core;
    let eps_clad = VACUUM_PERMITTIVITY * spec.n_cladding * spec.n_cladding;

    let n = spec.nr * spec.nz;
    let mut e_r = Vec::with_capacity(n);
    let mut e_phi = Vec::with_capacity(n);
    let mut e_z = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    let mut eps = Vec::with_capacity(n);
    for &r in &r_axis {
        for &z in &z_axis {
            let u = (r - spec.center_radius) / spec.width_r;
            let v = (z - spec.center_height) / spec.width_z;
            let env = (-(u * u) - v * v).exp();
            e_r.push(Complex64::new(p.radial * env, 0.0));
            e_phi.push(phi_amp * env);
            e_z.push(Complex64::new(p.vertical * env, 0.0));
            let inside = r >= spec.core_inner_radius
                && r <= spec.core_outer_radius
                && z >= spec.core_bottom
                && z <= spec.core_top;
            mask.push(inside);
            eps.push(if inside { eps_core } else { eps_clad });
        }
    }
    ModeFieldGrid::new(r_axis, z_axis, e_r, e_phi, e_z, mask, eps)
}

/// A constant `E_z` field inside the core and zero elsewhere.
pub fn uniform_ez_mode(spec: &GaussianModeSpec) -> Result<ModeFieldGrid> {
    let mut g = gaussian_mode(spec)?;
    let zero = Complex64::new(0.0, 0.0);
    for k in 0..g.core_mask.len() {
        g.e_r[k] = zero;
        g.e_phi[k] = zero;
        g.e_z[k] = if g.core_mask[k] { Complex64::new(1.0, 0.0) } else { zero };
    }
    Ok(g)
}
