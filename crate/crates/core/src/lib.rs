//! Binary quantum control under sampled Hamiltonian uncertainty.
//!
//! The pipeline is: build a [`quantum::ControlSystem`], sample noise
//! [`uncertainty::ScenarioSet`]s, minimize the relaxed risk-blended objective
//! of [`objective`] with one of the [`optimizers`], turn the relaxed schedule
//! into a binary one with [`rounding`], and score it out of sample with
//! [`evaluation`].

pub mod control;
pub mod error;
pub mod evaluation;
pub mod instances;
pub mod objective;
pub mod optimizers;
pub mod quantum;
pub mod rounding;
pub mod seed;
pub mod uncertainty;

pub use control::ControlField;
pub use error::{Error, Result};
