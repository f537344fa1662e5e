//! Signals derived from a score: the melody skyline, the pitch-class profile
//! and a fixed 12-value difficulty feature vector.

mod features;
mod profile;
mod skyline;

use thiserror::Error;

pub use features::{extract_features, FeatureVector, FEATURE_NAMES};
pub use profile::{perturb_profile, perturb_unnormalized, pitch_class_profile, PitchClassProfile};
pub use skyline::{melody_skyline, SkylineEntry, SkylineSequence};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("score has no measures")]
    EmptyScore,
    #[error("score has no pitched notes, so the skyline is empty")]
    EmptySkyline,
    #[error("score has no pitched notes, so the pitch-class profile is undefined")]
    DegenerateProfile,
    #[error("noise scale {0} outside [0, 1)")]
    InvalidNoiseScale(f64),
}
