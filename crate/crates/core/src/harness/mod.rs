//! Seeded batch runs: controlled experiments over synthetic datasets and
//! case studies over a log with a file of PPI definitions.

mod case_study;
mod experiment;
mod fixture;
mod generators;
pub mod stats;

use thiserror::Error;

pub use case_study::{run_case_study, CaseStudyReport, CaseStudyRow};
pub use experiment::{
    outcome_preserving_mass, run_experiment, ExperimentRow, ExperimentSpec, RunReport, ThresholdPlan,
    EXPERIMENT_COLUMNS,
};
pub use fixture::{months_covered, sepsis_fixture, FixtureConfig};
pub use generators::{generate_dataset, Generator};

use crate::event_log::ScopeError;
use crate::ppi_model::{parse_ppi_definitions, DerivedRegistry, ModelError, PpiDefinition};

/// The six case-study PPIs for sepsis-shaped logs.
pub const SEPSIS_PPIS: &str = include_str!("../../data/sepsis_ppis.json");

pub fn sepsis_ppis() -> Result<Vec<PpiDefinition>, ModelError> {
    parse_ppi_definitions(SEPSIS_PPIS, &DerivedRegistry::with_builtins())
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Scope(#[from] ScopeError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
