//! Nonlinear coupling coefficient from cylindrical mode fields.

mod format;
mod grid;
mod overlap;
mod synthetic;

pub use format::{read_mode_field, write_mode_field, ComplexDtype};
pub use grid::ModeFieldGrid;
pub use overlap::{
    beta_and_veff, core_volume, disk_like_classifier, integral_a_cyl, integral_b_cyl, mode_energy, phi_average_oracle,
    Chi3Params, NonlinearCoefficient,
};
pub use synthetic::{gaussian_mode, uniform_ez_mode, GaussianModeSpec, Polarization};
