//! Scene simulation: stochastic room impulse responses, harmonic speech
//! sources, and multichannel reverberant rendering with ground truth.

mod rir;
mod scene;
mod source;

pub use rir::{generate_rir, generate_rir_with_speed, StochasticRir};
pub use scene::{
    render_scene, write_truth_csv, SceneSource, SceneSpec, SourcePlacement, Trajectory,
};
pub use source::{
    speech_like, speech_like_with, synthesize_harmonic_speech, BurstParams, Envelope,
    HarmonicComponent, HarmonicSourceSpec,
};
