//! Causal decomposition of group disparities.

pub mod config;
pub mod data;
pub mod design;
pub mod error;
pub mod estimators;
pub mod glm;
pub mod inference;
pub mod sensitivity;
pub mod sim;
pub mod stats;

pub use config::{validate_config, AnalysisConfig, Binding, Scenario, XCombination};
pub use data::{load_table, read_table, Column, ColumnData, ObservationTable, TableSchema};
pub use design::DesignSpec;
pub use error::{Error, Result};
pub use estimators::{
    decompose, decompose_interposed, decompose_regression, DecompositionEstimate, EstimatorKind,
    EstimatorOptions, GroupEstimate,
};
