//! Physical constants and unit helpers.

use std::f64::consts::PI;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Vacuum permittivity (F/m).
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;

/// Optical frequency (Hz) of a vacuum wavelength (m).
pub fn frequency_of(wavelength: f64) -> f64 {
    SPEED_OF_LIGHT / wavelength
}

/// Angular frequency (rad/s) of a vacuum wavelength (m).
pub fn angular_frequency_of(wavelength: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT / wavelength
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts / 1e-3).log10()
}

/// Linear power transmission of a loss given in dB.
pub fn db_to_transmission(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

pub const NM: f64 = 1e-9;
pub const PM: f64 = 1e-12;
pub const MW: f64 = 1e-3;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dbm_round_trip() {
        for dbm in [-10.4, -5.1, -2.0, 0.0, 3.0] {
            assert!((watts_to_dbm(dbm_to_watts(dbm)) - dbm).abs() < 1e-12);
        }
        assert!((dbm_to_watts(0.0) - 1e-3).abs() < 1e-18);
    }
}
