//! Exponential, power-law and two-class fits to money and income samples.

pub mod binned;
mod exponential;
mod pareto;
mod sample;
mod two_class;

pub use binned::{
    exponential_ks_test, fit_truncated_exponential, fit_truncated_gamma, gamma_vs_exponential,
    tail_exponential_test, BinnedFit, LikelihoodRatio, TailTest,
};
pub use exponential::{
    fit_exponential, fit_exponential_histogram, log_linear_temperature, synthetic_exponential,
    truncated_exponential_scale, ExponentialFit, ExponentialOptions, LogLinearFit,
    MIN_EXPONENTIAL_POINTS,
};
pub use pareto::{
    fit_pareto_tail, hill, synthetic_pareto, ParetoFit, ThresholdPolicy, MIN_TAIL_POINTS,
    POOR_FIT_P,
};
pub use sample::{ingest_income_table, WeightedSample};
pub use two_class::{
    bracket, synthetic_mixture, two_class_decompose, CrossoverPolicy, TwoClassDiagnostics,
    TwoClassFit, TwoClassOptions, MIN_TWO_CLASS_POINTS,
};
