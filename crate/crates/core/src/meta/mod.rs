//! Per-coordinate features and the shared-trunk network of the learned sampler.

mod features;
mod net;

pub use features::{
    build_features, normalize_features, FeatureBank, FeatureMatrix, FeatureNorm, COL_GRAD,
    COL_MOMENTUM, COL_THETA, EMA_DECAYS, FEATURE_NAMES, NORM_GUARD, NUM_FEATURES,
};
pub use net::{
    eval_alpha_beta, eval_beta, eval_mean_and_slope, init_meta_params, MetaParams, ALPHA_B,
    ALPHA_W, BETA_B, BETA_W, HIDDEN, META_PARAM_COUNT, TRUNK_B, TRUNK_W,
};
