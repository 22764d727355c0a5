//! Size-variant classification for retail shelf boxes.
//!
//! A detector finds product boxes on a shelf photo and a classifier tells
//! which brand (group) each box belongs to. Brands often come in several
//! package sizes that look identical, so the size variant (class) has to be
//! inferred from how large a box is relative to the other boxes in the same
//! photo. This crate implements that last step with two methods:
//!
//! - [`gbdt`]: per-group histograms of context aspect and area ratios fed
//!   to a one-vs-rest gradient boosted tree ensemble.
//! - [`setnet`]: per-context class posteriors from 2D Gaussian mixtures
//!   ([`gmm`]) fed to a permutation-invariant set network.
//!
//! [`synth`] generates seeded synthetic shelves, and [`pipeline`] trains,
//! evaluates and persists per-group models for either method.

pub mod catalog;
pub mod commands;
pub mod config;
pub mod error;
pub mod gbdt;
pub mod gmm;
pub mod io;
pub mod pipeline;
pub mod setnet;
pub mod synth;

pub use catalog::{
    aspect_ratio, extract_candidate_features, frontal_area, validate_scene, CandidateFeatures, Catalog,
    ClassId, ContextEntry, DetectedBox, GroupId, GroupSpec, Scene, VariantSpec, Violation, ViolationKind,
};
pub use error::{Error, Result};
