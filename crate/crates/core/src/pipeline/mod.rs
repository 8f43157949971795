//! Orchestration shared by the command-line tool: dataset sampling,
//! configuration, reports and on-disk artifacts.

mod commands;
mod config;
mod dataset;
mod experiment;

pub use commands::*;
pub use config::{Backend, RunConfig};
pub use dataset::{sample_dataset, sample_latent, sample_seed, Dataset};
pub use experiment::{
    check_interpolation, is_monotone, run_edit, run_edits, EditOutcome, EditSetup, EditSummary,
    InterpolationCheck,
};
