//! A training-free geometric pipeline for spatial question answering.
//!
//! The engine lifts calibrated 2D observations into a metric world point
//! cloud, instantiates a query-conditioned allocentric reference frame, and
//! renders geometry-grounded textual contexts a language reasoner (or the
//! built-in rule-based one) can answer from. Neural experts — detection,
//! image-text matching, description simplification, orientation judging,
//! reasoning — sit behind pluggable interfaces with scripted-mock and
//! HTTP/JSON backends, and a synthetic-scene generator with an analytic
//! renderer provides exact ground truth for verification.
//!
//! Module map:
//!
//! * [`geometry`] — camera models, rigid transforms, frame construction.
//! * [`consensus`] — mask erosion, lifting, outlier cleaning, FPS, DBSCAN,
//!   ITM-ranked cluster selection, robust centroid/extent.
//! * [`grounding`] — iterative coarse-to-fine grounding and orientation
//!   voting.
//! * [`experts`] — expert traits, scripted mocks, the HTTP wire protocol,
//!   and the rule-based geometric reasoner.
//! * [`prompting`] — query routing, geometry contexts, prompt rendering.
//! * [`question`] — the relation-question schema and sign rules.
//! * [`synth`] — synthetic scenes, the analytic renderer, the ground-truth
//!   oracle, question generation, and the scene-bundle disk format.
//! * [`pipeline`] / [`eval`] — end-to-end orchestration and the evaluation
//!   harness.

pub mod consensus;
pub mod eval;
pub mod experts;
pub mod geometry;
pub mod grounding;
pub mod pipeline;
pub mod prompting;
pub mod question;
pub mod synth;

pub use pipeline::{AnswerOptions, Experts, PipelineConfig, PipelineError};
