//! Training-free and simulated segmentation: Otsu thresholding, ensemble
//! uncertainty, a Gaussian naive-Bayes pixel learner, and the augmented
//! training-patch sampler.

mod learner;
mod otsu;
mod patches;
mod uncertainty;

pub use learner::{
    annotated_pixels, bootstrap_features, fit_sim_learner, fit_sim_learner_bootstrap, pixel_features, posterior_map, predict_sim_learner, ClassModel, SimLearner,
    BOOTSTRAP_MEMBERS, VARIANCE_FLOOR,
};
pub use otsu::{otsu_segment, otsu_threshold, OtsuResult, Polarity};
pub use patches::{sample_training_patches, Dihedral, PatchSet, TrainingPatch};
pub use uncertainty::{binary_entropy, ensemble_uncertainty, UncertaintyMap};
