//! Predictive metrics, mixing diagnostics and update-norm traces.

mod mixing;
mod predictive;
mod summary;

pub use mixing::{
    autocorrelation, ess, rank_normalize, rank_normalized_rhat, split_rhat, MIN_ESS_LEN,
};
pub use predictive::{
    accuracy, agreement, argmax, bma_predict, ece, member_predictives, nll, pairwise_kld,
    total_variation, Flagged, Predictive, KLD_CLAMP, NLL_CLAMP,
};
pub use summary::{
    coordinate_rhat, coordinate_subset, ess_per_second, median_ess, rhat_summary, trace,
    update_norm_trace, LayerRhat, NormPoint, RhatSummary, RhatVariant, DEFAULT_MAX_COORDS,
    PAPER_ESS_SCALE, RHAT_THRESHOLD,
};
