//! Simulation and sensor-reduced voltage estimation for single-phase
//! diode-clamped modular multilevel converters.
//!
//! The crate is organised bottom-up: [`model`] holds configuration and
//! per-module parameters, [`modulation`] generates level-adjusted
//! phase-shifted carrier gates, [`plant`] integrates the switched circuit,
//! [`estimator`] runs the per-arm Kalman filters, [`harness`] composes them
//! into scenarios and sweeps, and [`io`] handles configuration files, CSV
//! time series and run manifests.

pub mod error;
pub mod estimator;
pub mod harness;
pub mod io;
pub mod model;
pub mod modulation;
pub mod plant;

pub use error::{ConfigError, Error, Result};
pub use estimator::{ArmEstimator, EstimatorState, ModelKind, SampleFrame, StateSpaceModel};
pub use harness::{run_scenario, RunResult, Scenario};
pub use model::{ConverterConfig, ModuleParams, ModuleSet, ToleranceSpec};
pub use modulation::{Arm, GateVector, Modulator};
pub use plant::{ClampMode, PlantParams, PlantState, Stepper};
