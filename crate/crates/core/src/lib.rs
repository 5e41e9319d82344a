//! Switch-topology detection for microgrids from micro-synchrophasor (μPMU) measurements.
//!
//! A library of power-flow states is solved for every candidate switch configuration; noisy
//! μPMU readings are compared against it and the closest topology is chosen by one of three
//! row-minimum voting rules. [`scenario`] runs the whole pipeline as a seeded Monte Carlo
//! experiment over a 96-step day.

pub mod detector;
pub mod error;
pub mod measurement;
pub mod network;
pub mod powerflow;
pub mod profiles;
pub mod scenario;

pub use detector::{Criterion, DetectionOutcome, DifferenceMatrices, Signal, TopologyLibrary, Verdict};
pub use error::{Error, Result};
pub use network::{NetworkDefinition, NetworkGraph, TopologyConfig};
pub use powerflow::{InjectionSnapshot, PowerFlowSolution};
pub use scenario::{run_experiment, write_report, DetectionRateReport, Experiment, ScenarioConfig};
