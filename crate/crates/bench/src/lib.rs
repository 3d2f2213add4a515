//! Workloads, evaluation and sweeps for the `optlcms` sketches.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod sweep;
pub mod workload;

pub use error::{BenchError, Result};
pub use eval::{run_eval, summarize, ErrorMetrics, EvalReport};
pub use sweep::{
    build_method, cell_config, evaluate, run_cell, run_sweep, write_csv, Built, Method,
    SweepConfig, Workload, CSV_HEADER,
};
pub use workload::{gen_zipf, parse_stream, read_stream, write_stream, Source, StreamSpec};
