//! Monte Carlo studies of the smallest cells of the typical-cell stream.

pub mod convergence;
pub mod stats;
pub mod study;
pub mod topk;

pub use convergence::{run_convergence_study, ConvergenceConfig, ConvergenceReport, ConvergenceRow, ShapeKind};
pub use stats::{
    conditional_estimate, conditional_shape_samples, count_events, dkw_bound, ks_statistic, uniform_cdf,
    CondEstimate, Histogram, ShapeEvent, SizeEvent,
};
pub use study::{run_small_cell_study, write_study_artifacts, StudyConfig, StudyReport};
pub use topk::{select_k_smallest, select_k_smallest_many, TopKEntry, TopKSelection};
