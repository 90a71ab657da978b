//! Post-processing of chain output: error metrics, convergence checks and
//! the tables behind the funnel figures.

mod convergence;
mod geometry;
mod histogram;
mod metric;
mod stepsize;
mod summary;

pub use crate::reference::Moment;
pub use convergence::{
    autocorrelation, autocovariance, effective_sample_size, integrated_autocorr_time, split_rhat,
    thinning_interval,
};
pub use geometry::{condition_number, condition_number_field, ConditionRow};
pub use histogram::{chi_square_gof, marginal_histogram, ChiSquareTest, Histogram};
pub use metric::{
    aggregate_curve, budget_grid, error_curve, mean_of_errors, per_dimension_errors,
    pooled_error_curve, standardized_error, Aggregation, AverageCurve, ErrorReport,
};
pub use stepsize::{
    probe_accepted_step_size, stepsize_map_from_chains, ProbeOptions, ProbeRow, StepBin,
};
pub use summary::{average_ranks, box_summary, pearson, quantile, quantile_sorted, spearman, BoxSummary};
