//! Benchmark instances, metrics and the experiment matrix.

pub mod instances;
pub mod matrix;
pub mod metrics;

pub use instances::{
    make_instance, make_instances, random_lengths, standard_instances, standard_suite, InstanceSpec, ScheduledSegment,
};
pub use matrix::{
    mean_std, metrics_from_files, persist_run, run_matrix, run_paths, run_seeds, write_density_csv, write_results_csv,
    Aggregate, MatrixConfig, MatrixReport, RunFailure, RunMetrics,
};
pub use metrics::{
    attributed_thetas, detection_density, mce, pcon, silverman_bandwidth, subproblem_error, trapezoid, DensityCurve,
};
