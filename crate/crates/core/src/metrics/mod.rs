//! Dataset-quality statistics and benchmark evaluators.

mod dataset;
mod instance;
mod semantic;

pub use dataset::{
    caption_stats, coverage, mask_entropy, mean_coverage, normalize_tokens, CaptionStats, EntropyReport,
    DEFAULT_STOPWORDS,
};
pub use instance::{instance_ap, ClassAp, GtInstance, InstancePrediction, InstanceScores, AP_THRESHOLDS};
pub use semantic::{fg_miou_macc, semantic_predict, ConfusionMatrix, LabelClass, LabelSet, SemanticScores};
