//! Joint models for groups of reshare cascades: self-exciting point
//! processes with a shared branching factor, Borel progeny laws, dual
//! mixtures fit by EM, item-level diffusion characterization, and
//! popularity forecasting, verified against a branching-process simulator.

// Negated float comparisons like `!(x > 0.0)` are deliberate: they also
// reject NaN, which the suggested `partial_cmp` rewrite would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod borel;
pub mod cascade;
pub mod characterize;
pub mod error;
pub mod forecast;
pub mod kernel;
pub mod likelihood;
pub mod mixture;
pub mod numeric;
pub mod optim;
pub mod simulate;

pub use borel::{
    borel_log_pmf, borel_mean_var, borel_tanner_log_pmf, borel_tanner_mean_var, fit_borel_mle,
    BranchingFactor, N_STAR_MAX,
};
pub use cascade::{Cascade, CascadeGroup};
pub use characterize::{
    build_embedding, corpus_bin_edges, embedding_distance, pool_publisher_embedding, summarize,
    wasserstein1, weighted_quantile, BinEdges, DiffusionEmbedding, Summary, DEFAULT_BINS,
};
pub use error::{Error, Result};
pub use forecast::{
    absolute_relative_error, expected_holdout_ll, pool_publisher_model, posterior_size_pmf,
    predict_cascade_size, predict_cascade_variance, predict_item_popularity,
    predict_item_popularity_with_variance, residual_intensity, HoldoutReport, PublisherModel,
    SizePosterior, DEFAULT_EPS_P,
};
pub use kernel::{KernelFamily, KernelParams, C_MAX, C_MIN, THETA_MAX, THETA_MIN};
pub use likelihood::{
    check_separability, fit_kernel_mle, full_log_likelihood, log_likelihood_g, log_likelihood_n,
    HawkesParams, SeparabilityReport, COMPLETION_HORIZON_SECS,
};
pub use mixture::{
    assemble_dual, compress_sizes, fit_bmm, fit_bmm_counts, fit_kmm, select_k_bmm,
    BorelComponent, BorelMixture, DualComponent, DualMixture, EmConfig, FitReport,
    KSelection, KernelComponent, KernelMixture,
};
pub use simulate::{
    rng_for_stream, simulate_cascade, simulate_cascade_with, simulate_continuation,
    simulate_continuation_with, SimConfig, SimOutcome,
};
