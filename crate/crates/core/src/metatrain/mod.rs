//! Meta-objectives, inner-loop rollouts and ES meta-training.

mod adam;
mod es;
mod inner;
mod loss;
mod mixture;
mod train;

pub use adam::{adam_step, clip_global_norm, OuterState};
pub use es::{es_gradient, perturbation, rollout_seed, EsEstimate, PairOutcome, RolloutLoss};
pub use inner::{
    inner_loop, run_inner_chain, score_samples, validation_indices, EsConfig, InnerProblem,
    InnerSampler, MetaLossKind, Rollout, TaskSource, Transcript,
};
pub use loss::{
    bma_loss_from_loglik, bma_meta_loss, ce_loss_from_loglik, ce_meta_loss, member_log_likelihoods,
};
pub use mixture::{MixtureTask, MixtureTaskSource};
pub use train::{meta_train, window_means, IterationRecord, MetaTrainOutput};
