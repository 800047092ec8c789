//! Linguistic characterization of word importance.

mod annotation;
mod distribution;
mod tree;
mod undertranslation;

pub use annotation::{
    fertility_from_alignment, parse_alignment, parse_depth, parse_gold, parse_pos, read_alignment, read_depth,
    read_gold, read_pos, FertilityClass, Pos, TokenAnnotation,
};
pub use distribution::{
    distribution_csv, fertility_distribution, format_delta, length_normalize, pos_distribution, relative_change,
    DistributionRow,
};
pub use tree::{depth_buckets, token_features, tree_correlation, DepthBucket, FeatureMatrix, TreeConfig, TreeReport};
pub use undertranslation::{detect_undertranslation, gold_flags, least_important, F1Report};
