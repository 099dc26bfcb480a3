//! Deterministic scripted expert backend.
//!
//! A [`MockScript`] maps canonicalized request keys to canned responses.
//! Keys per expert kind, with a text-only fallback unless `strict` is set:
//!
//! * detect:   `"{image_id}|{text}"`, fallback `"{text}"`
//! * itm:      `"{crop_key}|{text}"`, fallback `"{text}"`
//! * simplify: `"{text}"`
//! * orient:   `"{crop_key}|{keyword}|{code}"`, fallback `"{keyword}|{code}"`
//!   where `code` is `A`, `B1`, `B2`, `B3`, or `C`
//! * reason:   the full prompt text, fallback the line after `QUESTION:`
//! * route:    `"{question}"`
//! * verify:   `"{crop_key}|{description}"`, fallback `"{description}"`
//!
//! A request with no matching key yields a typed not-scripted error. In
//! strict mode the fallback keys are not consulted at all.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::wire::WireDetection;
use super::{
    b_round3_options, check_itm_score, parse_front_back, parse_left_right, Detection, Detector,
    ExpertError, ImageCrop, ImageRef, ItmScorer, QueryRouter, Reasoner, Simplifier, Strategy,
    Verifier,
};
use crate::grounding::Orientation8;
use crate::prompting::RouteLabel;

/// On-disk and in-memory script: ordered maps from canonical keys to canned
/// responses per expert kind.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub detect: BTreeMap<String, Vec<WireDetection>>,
    #[serde(default)]
    pub itm: BTreeMap<String, f64>,
    #[serde(default)]
    pub simplify: BTreeMap<String, String>,
    #[serde(default)]
    pub orient: BTreeMap<String, String>,
    #[serde(default)]
    pub reason: BTreeMap<String, String>,
    #[serde(default)]
    pub route: BTreeMap<String, String>,
    #[serde(default)]
    pub verify: BTreeMap<String, bool>,
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self, ExpertError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExpertError::Usage(format!("cannot read mock script {path:?}: {e}")))?;
        serde_json::from_str(&text)
            .map_err(|e| ExpertError::Usage(format!("malformed mock script {path:?}: {e}")))
    }
}

/// Scripted implementation of every expert trait.
pub struct MockExperts {
    script: MockScript,
}

impl MockExperts {
    pub fn new(script: MockScript) -> Self {
        Self { script }
    }

    fn lookup<'a, T>(
        &self,
        map: &'a BTreeMap<String, T>,
        kind: &'static str,
        exact: &str,
        fallback: Option<&str>,
    ) -> Result<&'a T, ExpertError> {
        if let Some(v) = map.get(exact) {
            return Ok(v);
        }
        if !self.script.strict {
            if let Some(key) = fallback {
                if let Some(v) = map.get(key) {
                    return Ok(v);
                }
            }
        }
        Err(ExpertError::NotScripted {
            kind,
            key: exact.to_string(),
        })
    }
}

impl Detector for MockExperts {
    fn detect(&self, image: &ImageRef, text: &str) -> Result<Vec<Detection>, ExpertError> {
        if text.trim().is_empty() {
            return Err(ExpertError::Usage("empty detection prompt".to_string()));
        }
        let exact = format!("{}|{}", image.id, text);
        let wire = self.lookup(&self.script.detect, "detect", &exact, Some(text))?;
        wire.iter().map(WireDetection::to_detection).collect()
    }
}

impl ItmScorer for MockExperts {
    fn itm_score(&self, crop: &ImageCrop, text: &str) -> Result<f64, ExpertError> {
        let exact = format!("{}|{}", crop.key(), text);
        let score = *self.lookup(&self.script.itm, "itm", &exact, Some(text))?;
        check_itm_score(score)
    }
}

impl Simplifier for MockExperts {
    fn simplify(&self, text: &str) -> Result<String, ExpertError> {
        if text.trim().is_empty() {
            return Err(ExpertError::Usage("empty simplification input".to_string()));
        }
        Ok(self
            .lookup(&self.script.simplify, "simplify", text, None)?
            .clone())
    }
}

impl super::OrientationJudge for MockExperts {
    fn orient(
        &self,
        crop: &ImageCrop,
        keyword: &str,
        strategy: Strategy,
    ) -> Result<Orientation8, ExpertError> {
        let ask = |code: &str| -> Result<String, ExpertError> {
            let exact = format!("{}|{}|{}", crop.key(), keyword, code);
            let fallback = format!("{keyword}|{code}");
            self.lookup(&self.script.orient, "orient", &exact, Some(&fallback))
                .cloned()
        };
        let final_label = match strategy {
            Strategy::A => ask("A")?,
            Strategy::C => ask("C")?,
            Strategy::BThreeRound => {
                let fb = parse_front_back(&ask("B1")?)?;
                let lr = parse_left_right(&ask("B2")?)?;
                // The candidate table narrows round 3; the scripted reply is
                // still authoritative for the final label.
                let _options = b_round3_options(fb, lr);
                ask("B3")?
            }
        };
        Orientation8::parse(&final_label).ok_or_else(|| {
            ExpertError::Protocol(format!("unparsable orientation label {final_label:?}"))
        })
    }
}

impl Reasoner for MockExperts {
    fn complete(&self, _system: &str, prompt: &str) -> Result<String, ExpertError> {
        let fallback = prompt
            .lines()
            .skip_while(|l| l.trim() != "QUESTION:")
            .nth(1)
            .map(str::to_string);
        self.lookup(&self.script.reason, "reason", prompt, fallback.as_deref())
            .cloned()
    }
}

impl QueryRouter for MockExperts {
    fn route(&self, question: &str) -> Result<RouteLabel, ExpertError> {
        let reply = self.lookup(&self.script.route, "route", question, None)?;
        RouteLabel::parse(reply)
            .ok_or_else(|| ExpertError::Protocol(format!("unparsable route label {reply:?}")))
    }
}

impl Verifier for MockExperts {
    fn verify(&self, crop: &ImageCrop, description: &str) -> Result<bool, ExpertError> {
        let exact = format!("{}|{}", crop.key(), description);
        self.lookup(&self.script.verify, "verify", &exact, Some(description))
            .copied()
    }
}
