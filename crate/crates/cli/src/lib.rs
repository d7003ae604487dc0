//! Experiment harness for the cell-free ISAC lab: settings files, dataset and
//! training plumbing, trade-off sweeps, audits and CSV output.

pub mod csv;
pub mod experiments;
pub mod settings;

pub use settings::Settings;
