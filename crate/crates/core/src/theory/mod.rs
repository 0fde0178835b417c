//! Information loss of fixed versus adaptive context windows on a linear
//! Gaussian latent process, where posterior variances are exact.

mod kalman;
mod regret;

pub use kalman::{
    convexity_diagnostic, info_loss, kalman_posterior, optimal_window, optimal_window_by, windowed_filter_mse,
    ConvexityFit, PosteriorEstimate,
};
pub use regret::{
    discrete_stationary_variance, linear_fit, regret_experiment, simulate_observations, train_selector,
    variance_table, AdaptivePolicy, FitSummary, LearnedConfig, LinearFit, PolicyCurve, RegimeSchedule,
    RegretConfig, RegretReport, VarianceTable,
};
