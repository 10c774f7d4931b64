//! Config-driven runs: parse a TOML problem description, replicate it over
//! seeds and write traces, summaries and diagnostics.

mod batch;
mod config;

pub use batch::{
    check_trace, execute, run_batch, run_seed, trace_file_name, BatchOptions, BatchResult, BatchSummary, SeedRun,
    SeedSummary,
};
pub use config::{load_config, load_config_with_seeds, parse_config, parse_config_with_seeds, Problem, RunConfig};
