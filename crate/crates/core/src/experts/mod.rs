//! Abstract expert interfaces with pluggable backends.
//!
//! The pipeline never talks to a neural model directly. Detection,
//! image-text matching, description simplification, orientation judging,
//! reasoning, and query routing all go through the traits below, backed by
//! deterministic scripted mocks ([`mock::MockExperts`]), an HTTP/JSON wire
//! protocol for real models ([`http::HttpExperts`]), or a rule-based
//! geometric reasoner ([`rule_based`]).
//!
//! Every backend must be deterministic for identical requests within a run.
//! For HTTP backends that property is the serving side's obligation (greedy
//! decoding); the client's retry logic is idempotent either way.

pub mod http;
pub mod mock;
pub mod rule_based;
pub mod wire;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::Mask;
use crate::grounding::Orientation8;
use crate::prompting::RouteLabel;

#[derive(Debug, Error)]
pub enum ExpertError {
    /// Connection failures, timeouts, 5xx. Retryable.
    #[error("expert transport failure: {0}")]
    Transport(String),
    /// 4xx responses, malformed payloads, out-of-range values. Never retried.
    #[error("expert protocol error: {0}")]
    Protocol(String),
    /// A mock received a request its script does not cover.
    #[error("request not scripted for {kind}: {key:?}")]
    NotScripted { kind: &'static str, key: String },
    #[error("expert usage error: {0}")]
    Usage(String),
}

/// Opaque handle to an image. The `id` keys scripted mocks; `png` carries
/// the encoded payload for backends that ship real pixels.
#[derive(Debug, Clone)]
pub struct ImageRef {
    pub id: String,
    pub png: Option<Arc<Vec<u8>>>,
}

impl ImageRef {
    pub fn key(id: impl Into<String>) -> Self {
        Self { id: id.into(), png: None }
    }

    pub fn with_png(id: impl Into<String>, png: Vec<u8>) -> Self {
        Self { id: id.into(), png: Some(Arc::new(png)) }
    }
}

/// A rectangular crop of an image, in pixel coordinates `(x0, y0, x1, y1)`.
#[derive(Debug, Clone)]
pub struct ImageCrop {
    pub image: ImageRef,
    pub bbox: (f64, f64, f64, f64),
}

impl ImageCrop {
    pub fn new(image: ImageRef, bbox: (f64, f64, f64, f64)) -> Self {
        Self { image, bbox }
    }

    /// Canonical key used by scripted mocks.
    pub fn key(&self) -> String {
        let (x0, y0, x1, y1) = self.bbox;
        format!("{}[{},{},{},{}]", self.image.id, x0, y0, x1, y1)
    }
}

/// One open-vocabulary detection candidate.
#[derive(Debug, Clone)]
pub struct Detection {
    pub mask: Mask,
    pub bbox: (f64, f64, f64, f64),
    pub confidence: f64,
}

/// Orientation-judging prompt strategy. `B` runs a three-round protocol
/// internally (front/back, left/right, then a three-way refinement).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    A,
    BThreeRound,
    C,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::A => "A",
            Strategy::BThreeRound => "B",
            Strategy::C => "C",
        }
    }

    /// Priority for the exact-ambiguity voting fallback: C > B > A.
    pub fn priority(&self) -> u8 {
        match self {
            Strategy::C => 2,
            Strategy::BThreeRound => 1,
            Strategy::A => 0,
        }
    }
}

/// Round-3 candidate set of the three-round protocol, keyed by the first two
/// answers. The spellings are fixed.
pub fn b_round3_options(front_back: FrontBack, left_right: LeftRight) -> [&'static str; 3] {
    match (front_back, left_right) {
        (FrontBack::Front, LeftRight::Right) => ["front", "front-right", "right"],
        (FrontBack::Front, LeftRight::Left) => ["front", "left-front", "left"],
        (FrontBack::Back, LeftRight::Right) => ["back", "right-back", "right"],
        (FrontBack::Back, LeftRight::Left) => ["back", "left-back", "left"],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrontBack {
    Front,
    Back,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeftRight {
    Left,
    Right,
}

pub fn parse_front_back(text: &str) -> Result<FrontBack, ExpertError> {
    match strip_boxed(text).to_ascii_lowercase().as_str() {
        "front" | "forward" => Ok(FrontBack::Front),
        "back" | "backward" => Ok(FrontBack::Back),
        other => Err(ExpertError::Protocol(format!(
            "expected front/back, got {other:?}"
        ))),
    }
}

pub fn parse_left_right(text: &str) -> Result<LeftRight, ExpertError> {
    match strip_boxed(text).to_ascii_lowercase().as_str() {
        "left" => Ok(LeftRight::Left),
        "right" => Ok(LeftRight::Right),
        other => Err(ExpertError::Protocol(format!(
            "expected left/right, got {other:?}"
        ))),
    }
}

/// Contents of the last `boxed{}` span if present, else the trimmed text.
fn strip_boxed(text: &str) -> String {
    match last_boxed_span(text) {
        Some(inner) => inner,
        None => text.trim().to_string(),
    }
}

/// A reasoner's reply with the boxed answer and optional think chain pulled
/// out. Extraction takes the LAST boxed span; the chain is the first
/// think-tagged span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasonerAnswer {
    pub raw_text: String,
    pub extracted: String,
    pub chain: Option<String>,
}

pub fn extract_reasoner_answer(raw: &str) -> Result<ReasonerAnswer, ExpertError> {
    let extracted = last_boxed_span(raw)
        .ok_or_else(|| ExpertError::Protocol("no boxed span in reasoner reply".to_string()))?;
    if extracted.is_empty() {
        return Err(ExpertError::Protocol("empty boxed span".to_string()));
    }
    Ok(ReasonerAnswer {
        raw_text: raw.to_string(),
        extracted,
        chain: first_think_span(raw),
    })
}

fn last_boxed_span(text: &str) -> Option<String> {
    let needle = "boxed{";
    let mut last = None;
    let mut from = 0;
    while let Some(pos) = text[from..].find(needle) {
        let open = from + pos + needle.len();
        let mut depth = 1usize;
        let mut end = None;
        for (i, c) in text[open..].char_indices() {
            match c {
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(open + i);
                        break;
                    }
                }
                _ => {}
            }
        }
        match end {
            Some(end) => {
                last = Some(text[open..end].trim().to_string());
                from = end + 1;
            }
            None => break,
        }
    }
    last
}

fn first_think_span(text: &str) -> Option<String> {
    for (open, close) in [("<think>", "</think>"), ("\u{27e8}think\u{27e9}", "\u{27e8}/think\u{27e9}")] {
        if let Some(start) = text.find(open) {
            let body_start = start + open.len();
            if let Some(rel_end) = text[body_start..].find(close) {
                return Some(text[body_start..body_start + rel_end].trim().to_string());
            }
        }
    }
    None
}

/// Validates an ITM score delivered by a backend.
pub fn check_itm_score(score: f64) -> Result<f64, ExpertError> {
    if !score.is_finite() || !(0.0..=1.0).contains(&score) {
        return Err(ExpertError::Protocol(format!(
            "ITM score {score} outside [0, 1]"
        )));
    }
    Ok(score)
}

/// How to reach a remote expert endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpertEndpointConfig {
    pub base_url: String,
    /// Per-request timeout in milliseconds.
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Extra attempts after the first, on transport errors only.
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key: Option<String>,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_retries() -> u32 {
    2
}

pub trait Detector: Send + Sync {
    fn detect(&self, image: &ImageRef, text: &str) -> Result<Vec<Detection>, ExpertError>;
}

pub trait ItmScorer: Send + Sync {
    fn itm_score(&self, crop: &ImageCrop, text: &str) -> Result<f64, ExpertError>;
}

pub trait Simplifier: Send + Sync {
    /// Removes one layer of modifiers. Returning the input unchanged signals
    /// the fixed point.
    fn simplify(&self, text: &str) -> Result<String, ExpertError>;
}

pub trait OrientationJudge: Send + Sync {
    fn orient(
        &self,
        crop: &ImageCrop,
        keyword: &str,
        strategy: Strategy,
    ) -> Result<Orientation8, ExpertError>;
}

pub trait Reasoner: Send + Sync {
    /// Raw text completion for `system` + `prompt`.
    fn complete(&self, system: &str, prompt: &str) -> Result<String, ExpertError>;

    /// Completion plus boxed-answer extraction.
    fn reason(&self, system: &str, prompt: &str) -> Result<ReasonerAnswer, ExpertError> {
        extract_reasoner_answer(&self.complete(system, prompt)?)
    }
}

pub trait QueryRouter: Send + Sync {
    fn route(&self, question: &str) -> Result<RouteLabel, ExpertError>;
}

/// Optional confirmation hook for grounded candidates. No prompt template is
/// prescribed; callers supply their own backend.
pub trait Verifier: Send + Sync {
    fn verify(&self, crop: &ImageCrop, description: &str) -> Result<bool, ExpertError>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extraction_takes_last_boxed_span() {
        let a = extract_reasoner_answer("<think>z is negative</think> boxed{behind}").unwrap();
        assert_eq!(a.extracted, "behind");
        assert_eq!(a.chain.as_deref(), Some("z is negative"));

        let a = extract_reasoner_answer(r"first \boxed{left} then \boxed{right}").unwrap();
        assert_eq!(a.extracted, "right");
        assert_eq!(a.chain, None);
    }

    #[test]
    fn extraction_handles_unicode_think_tags() {
        let a =
            extract_reasoner_answer("\u{27e8}think\u{27e9}hm\u{27e8}/think\u{27e9} \\boxed{yes}")
                .unwrap();
        assert_eq!(a.chain.as_deref(), Some("hm"));
        assert_eq!(a.extracted, "yes");
    }

    #[test]
    fn extraction_requires_a_boxed_span() {
        assert!(matches!(
            extract_reasoner_answer("no answer here"),
            Err(ExpertError::Protocol(_))
        ));
    }

    #[test]
    fn extraction_strips_whitespace_and_nests() {
        let a = extract_reasoner_answer(r"\boxed{ left }").unwrap();
        assert_eq!(a.extracted, "left");
        let a = extract_reasoner_answer(r"\boxed{f{x}y}").unwrap();
        assert_eq!(a.extracted, "f{x}y");
    }

    #[test]
    fn itm_scores_outside_unit_interval_rejected() {
        assert!(check_itm_score(1.2).is_err());
        assert!(check_itm_score(-0.1).is_err());
        assert!(check_itm_score(f64::NAN).is_err());
        assert_eq!(check_itm_score(0.5).unwrap(), 0.5);
    }

    #[test]
    fn b_round3_table_matches_printed_mapping() {
        assert_eq!(
            b_round3_options(FrontBack::Front, LeftRight::Right),
            ["front", "front-right", "right"]
        );
        assert_eq!(
            b_round3_options(FrontBack::Front, LeftRight::Left),
            ["front", "left-front", "left"]
        );
        assert_eq!(
            b_round3_options(FrontBack::Back, LeftRight::Right),
            ["back", "right-back", "right"]
        );
        assert_eq!(
            b_round3_options(FrontBack::Back, LeftRight::Left),
            ["back", "left-back", "left"]
        );
    }

    #[test]
    fn round_answers_accept_boxed_form() {
        assert_eq!(parse_front_back(r"\boxed{front}").unwrap(), FrontBack::Front);
        assert_eq!(parse_left_right(" RIGHT ").unwrap(), LeftRight::Right);
        assert!(parse_front_back("sideways").is_err());
    }
}
