//! Experiment runner for the sinc simulation study.
//!
//! Every experiment draws a fresh training and test set per trial from
//! `trial_seed(master, t)`, fits its learners over a parameter grid and
//! picks the parameter on the clean test targets (`oracle`) or by k-fold
//! cross-validation (`cv`). Cells run on the rayon pool and are reduced in a
//! fixed order, so the worker count never changes the output bytes.
//!
//! Outputs per run (all CSV with a fixed header, plus `manifest.json`):
//!
//! | experiment | tables |
//! |------------|--------|
//! | `ogl-compare` | `ogl_curves.csv`, `summary.csv`, `trials.csv` |
//! | `togl-compare` | `togl_curves.csv`, `summary.csv`, `trials.csv` |
//! | `delta-togl` | `delta_togl_curves.csv`, `summary.csv`, `trials.csv` |
//! | `cost-profile` | `cost_sparsity.csv` |
//! | `phase-diagram` | `phase_diagram.csv`, `trials.csv` |
//! | `method-table` | `method_table.csv`, `trials.csv` |
//!
//! Wall-clock measurements go to separate files (`timing.csv`,
//! `cost_profile.csv`) listed under `timing_files` in the manifest.

mod config;
mod report;
mod runs;

pub use config::{ExperimentConfig, ExperimentKind, LogGridSpec, Method, Mode, Variant};
pub use report::{
    mean_std, median, Cell, Hardware, Manifest, RunReport, Table, TrialRecord, ARTIFACT_VERSION,
};
pub use runs::{
    derive_seed, evaluate, fit_grid, fit_one, run, run_cost_profile, run_delta_togl,
    run_method_table, run_ogl_comparison, run_phase_diagram, run_togl_comparison, FitOutcome,
    GridEval, Instance, Model,
};
