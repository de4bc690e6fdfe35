//! Quantitative evaluation of synthetic market data.
//!
//! Three families of metrics live here:
//!
//! * **Stylized facts** ([`stylized`]): tail weight and aggregational
//!   normality of log-returns, the decay of return autocorrelation,
//!   volatility clustering and the volume-volatility relationship.
//! * **Correlation fidelity** ([`correlation`], [`wasserstein`]): plain and
//!   windowed Pearson correlations, the squared-difference distance between
//!   real and synthetic pair correlations, and exact 1-D Wasserstein
//!   distances between correlation distributions.
//! * **Discriminative score** ([`discriminative`]): a small recurrent
//!   classifier trained to separate real from synthetic windows;
//!   `|test accuracy - 0.5|` measures how distinguishable they are.
//!
//! [`report::evaluate_report`] bundles everything into one serializable
//! [`report::EvaluationReport`].

pub mod correlation;
pub mod discriminative;
pub mod error;
pub mod report;
pub mod stylized;
pub mod wasserstein;

pub use correlation::{
    autocorrelation, cross_correlation_distance, pearson, windowed_correlations,
    CorrelationWindowSpec,
};
pub use discriminative::{discriminative_score, DISCRIMINATIVE_TRAIN_STEPS};
pub use error::{EvalError, Result};
pub use report::{
    channel_label, classifier_windows, correlation_benchmark, evaluate_report,
    write_figures_data, EvaluationConfig, EvaluationReport, PairBenchmark,
    PairCorrelationReport,
};
pub use stylized::{
    complete_days, excess_kurtosis, jarque_bera, stylized_facts_report, AssetFacts,
    LagDistribution,
};
pub use wasserstein::wasserstein_1d;
