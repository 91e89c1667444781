//! Experiment harness: test signals, minimal-`M` sweeps, JSON configs, CSV
//! output, PGM images and the command line.

pub mod cli;
pub mod config;
pub mod output;
pub mod pgm;
pub mod signal;
pub mod sweep;

pub use cli::run_cli;
pub use config::{Config, Setup};
pub use output::{fmt_f64, Table};
pub use signal::{gen_signal, image_to_sparse, synthetic_image, ImageSource, Signal, SignalSpec, SupportModel};
pub use sweep::{
    derive_seed, find_min_m, parse_records, records_table, scatter_gamma_vs_m, MMin, MStats, MinMResult, SupportEntry,
    SweepConfig, SweepRecord,
};
