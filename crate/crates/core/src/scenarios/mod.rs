//! Experiment runners that reproduce the characterization and locking
//! experiments as data files.

pub mod aggressor;
pub mod characterize;
pub mod config;
pub mod hysteresis;
pub mod ladder;
pub mod lock;
pub mod multiring;
pub mod output;
pub mod source;
pub mod variability;

pub use aggressor::{lock_robustness, run_lock_with_aggressor, LockExperiment, Robustness};
pub use characterize::{dac_characterize, design_point, DacCharacterization, DesignPointReport};
pub use config::ScenarioConfig;
pub use hysteresis::{run_hysteresis, HysteresisPoint};
pub use ladder::{run_power_ladder, LadderPoint};
pub use lock::{acquire_lock, build_up, heater_power, LockLoop, LockSample};
pub use multiring::{run_multiring, run_multiring_solo, MultiringRun};
pub use output::{run_scenario, OutputSet, Scenario};
pub use source::{acquire_photons, derive_seed, AcquisitionPlan, DetectionConfig, PairModel, SourceConfig};
pub use variability::{builtin_table, variability_report, VariabilityReport, VariabilityRow};
