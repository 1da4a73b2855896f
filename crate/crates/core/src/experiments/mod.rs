//! Bermudan max-call studies: cost of a misspecified volatility, quasi-control
//! variates and multilevel estimation, each with and without nesting.

mod multilevel;
mod plain;
mod qcv;
mod rules;
mod param_study;

pub use multilevel::{
    multilevel_estimate, LevelPilot, LevelRun, MultilevelConfig, MultilevelMethod, MultilevelReport, MultilevelRow,
};
pub use plain::{plain_estimate, stopped_value, PlainEstimate};
pub use qcv::{qcv_estimate, QcvConfig, QcvMethod, QcvReport, QcvRow};
pub use rules::{BenchmarkRule, RuleSpec, TrainingSetup};
pub use param_study::{param_uncertainty_study, ParamStudyConfig, ParamStudyReport, ParamStudyRow};
