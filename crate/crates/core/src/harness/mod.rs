//! End-to-end simulation study: scenario construction, batch generation
//! through both samplers, diagnostics against the limit laws, coverage of
//! the confidence regions, and file output.

mod config;
mod coverage;
mod experiment;
mod output;
mod scenario;

pub use config::{EigenBlock, ExperimentConfig, MuLaw, ScenarioKind, Sink};
pub use coverage::{run_coverage, CoverageRow, CoverageTable, PowerPoint};
pub use experiment::{
    quantity_laws, run_experiment, DiagnosticsReport, ExperimentOutput, QuantityLaw, QuantityRecord,
};
pub use output::{emit_qq, qq_rows_fit, read_qq_csv, write_outputs, QqRow};
pub use scenario::{build_scenario, eigenvalue_counts};
