//! Closed-loop adaptation of learning objects.
//!
//! The crate is split into a scenario-agnostic loop engine ([`engine`]) that
//! drives Evaluate → Think → Collect → ConstructData → Learn → Verify →
//! UpdateObject → UpdateKnowledge → ImproveThinking over a versioned
//! [`objects::LearningObjectSet`], and four seeded simulators that plug into
//! it:
//!
//! * [`feature`]: input-feature discovery with an exact Bayes oracle.
//! * [`openset`]: unknown-category detection and centroid model expansion.
//! * [`routine`]: a washing-machine device model and routine compression.
//! * [`evidence`]: evidence-source selection with verification feedback.
//!
//! Everything here is `no_std` + `alloc`; file formats and the CLI live in the
//! `uptodate` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod engine;
pub mod error;
pub mod evidence;
pub mod feature;
pub mod objects;
pub mod openset;
pub mod rng;
pub mod routine;
pub mod scenario;

pub use engine::{
    run_episode, run_step, EpisodeRecord, KnowledgeState, LoopState, Operators, StepOutcome,
    StepRecord, ThinkingStrategy, Verdict, VerdictReason,
};
pub use error::{EpisodeError, LoopError};
pub use objects::{apply_update, CandidateUpdate, LearningObjectSet};
pub use rng::SimRng;
pub use scenario::{MetricMap, ScenarioId};
