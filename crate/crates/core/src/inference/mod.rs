//! Statistical procedures on prediction sets: englobement of reality by a
//! model family, predictive bounds with distributional diagnostics, and
//! paired tests of forecast improvement.

mod density;
mod diagnostics;
mod englobement;
mod fdr;
mod ks;
mod mixture;
mod ranks;

pub use density::{
    gaussian_fit, kde, min_ensemble_size, prediction_bounds, quantile_sorted, silverman_bandwidth,
    Calibration, Density, GaussianFit, KDE_GRID_PAD, KDE_GRID_POINTS,
};
pub use diagnostics::{diagnose, DiagnosticReport, DiagnosticSettings, TimeDiagnostics};
pub use englobement::{
    englobement, location_test, welch_t_test, CorrelationPopulations, Englobement, LocationTest,
    PairFailure,
};
pub use fdr::bh_fdr;
pub use ks::{
    durbin_ks_test, kolmogorov_q, ks_statistic, replication_test, two_sample_ks, KsTest,
    DURBIN_REPLICATES,
};
pub use mixture::{
    fit_mixture, mixture_lrt_test, Mixture, MixtureFit, MixtureTest, EM_MAX_ITERATIONS,
    EM_RESTARTS, EM_TOLERANCE, MIXTURE_REPLICATES, VARIANCE_FLOOR,
};
pub use ranks::{
    paired_improvement_test, rank_sum_test, rank_sum_test_with, signed_rank_test,
    signed_rank_test_with, Better, Method, PairedComparison, RankTest, SignedRankTest,
    RANK_SUM_EXACT_MAX, SIGNED_RANK_EXACT_MAX,
};
