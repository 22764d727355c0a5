//! Method 1: fixed-length histogram encoding of a candidate's scene
//! context, classified by a per-group gradient boosted tree ensemble.
//!
//! Each group co-occurring often enough with the target group contributes
//! two histogram blocks (context aspect ratios and context area ratios).
//! Groups missing from a scene leave their blocks at zero.

mod bins;
mod boost;

pub use bins::{
    encode, encode_candidate, equal_width_edges, fit_bins, percentile, BinOptions, BinnedFeatureSpec, Block,
    Quantity,
};
pub use boost::{predict_gbdt, softmax, train_gbdt, GbdtModel, GbdtParams, Node, TrainHistory, Tree};
