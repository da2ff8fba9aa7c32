//! Policy training with REINFORCE, classifier training with on-the-fly
//! augmentation, and cross-validated evaluation.

mod classifier;
mod eval;
mod rl;

pub use classifier::{
    evaluate, train_classifier, Augmentation, Classifier, ClassifierConfig, ClassifierEpoch, ClassifierRun,
};
pub use eval::{population_std, run_cv, EvalReport, RunEntry};
pub use rl::{
    compute_reward, reinforce_gradient, reinforce_update, reward_from_score, train_policy, PolicyHistory, RlConfig,
    UpdateStats,
};
