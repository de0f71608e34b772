//! Soft-fault diagnosis for underwater thrusters.
//!
//! A seeded plant simulator stands in for the thruster test rig. Nominal
//! dynamics are identified with feed-forward, NARX, LSTM and GRU regressors;
//! the NARX model's free-running residuals then feed a six-class
//! health-condition classifier.
//!
//! Module map:
//! - [`plant`]: simulator, fault conditions, step-response metrics
//! - [`nn`]: dense/LSTM/GRU layers, BPTT, ADAM, gradient checking
//! - [`preprocess`]: IQR scaling, tapped delay lines, static nonlinearities, splits
//! - [`models`]: regressor and classifier presets, training, grid search
//! - [`fdd`]: residuals, metrics, the end-to-end benchmark and its report

pub mod config;
pub mod error;
pub mod fdd;
pub mod frame;
pub mod models;
pub mod nn;
pub mod plant;
pub mod preprocess;
pub mod rng;

pub use error::{FddError, Result};
pub use frame::{Channel, TimeSeriesFrame};
pub use plant::{
    fault_effects, simulate, steady_state_maps, FaultCondition, FaultEffects, FaultTable, InputSignal, PlantParams,
};
pub use config::{BenchmarkConfig, KeyValues};
pub use fdd::{run_benchmark, DiagnosisReport};
