//! Personalized chord labels from a shared harmonic interval profile.
//!
//! Audio is turned into constant-Q frames, a network predicts the profile
//! shared by several annotators, and a per-annotator vocabulary turns that
//! profile back into that annotator's labels.

pub mod annotation;
pub mod audio;
pub mod chord;
pub mod cqt;
pub mod decoder;
pub mod evaluation;
pub mod features;
pub mod hip;
pub mod manifest;
pub mod mlp;
pub mod pipeline;
pub mod synth;

pub use chord::{ChordLabel, PitchClass, Quality};
pub use hip::{Hip, Ship};
