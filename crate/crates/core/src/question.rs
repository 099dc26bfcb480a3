//! The multiple-choice question schema shared by the CLI, the rule-based
//! reasoner, and the synthetic oracle: relation kinds, sign-rule evaluation,
//! and parsing of questions and spatial dependencies from free text.
//!
//! Relation semantics in a reference frame (x right, y down, z front):
//! left/right is the sign of x, above/below the sign of -y/+y, front/behind
//! the sign of z, closer/farther a distance comparison, and facing-toward
//! asks whether the target sits within 45 degrees of the frame's forward
//! axis. Any deciding value smaller than the tie margin is ambiguous.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

#[derive(Debug, Error)]
pub enum QuestionError {
    #[error("unknown relation kind in question {0:?}")]
    UnknownRelation(String),
    #[error("ambiguous tie: deciding value {value:.4} within margin {margin}")]
    AmbiguousTie { value: f64, margin: f64 },
    #[error("object {0:?} missing from the geometry context")]
    MissingObject(String),
}

/// What a question asks about the target, relative to the frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    LeftRight,
    AboveBelow,
    FrontBehind,
    FacingToward,
    Closer,
}

/// A parsed multiple-choice spatial question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationQuestion {
    pub kind: RelationKind,
    pub target: String,
    /// Base object for relative judgments (e.g. "left of the cabinet" in
    /// camera frame); the frame origin when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_to: Option<String>,
    /// Second object of a closer/farther comparison.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_target: Option<String>,
}

/// Symbolic answer of a sign rule, stringified by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationVerdict {
    Left,
    Right,
    Above,
    Below,
    InFront,
    Behind,
    Yes,
    No,
    /// The first object of a comparison (the target).
    First,
    /// The second object of a comparison.
    Second,
}

impl RelationVerdict {
    /// Canonical answer text; comparisons substitute object names instead.
    pub fn label(&self) -> &'static str {
        match self {
            RelationVerdict::Left => "left",
            RelationVerdict::Right => "right",
            RelationVerdict::Above => "above",
            RelationVerdict::Below => "below",
            RelationVerdict::InFront => "in front",
            RelationVerdict::Behind => "behind",
            RelationVerdict::Yes => "yes",
            RelationVerdict::No => "no",
            RelationVerdict::First | RelationVerdict::Second => "",
        }
    }
}

/// Applies the sign rules to frame-local coordinates.
///
/// `target` is the target's frame-local centroid; `base` shifts the
/// judgment to another object's position (defaults to the origin); `second`
/// is the comparison object for [`RelationKind::Closer`].
pub fn evaluate_relation(
    kind: &RelationKind,
    target: Vec3,
    base: Option<Vec3>,
    second: Option<Vec3>,
    tie_margin: f64,
) -> Result<RelationVerdict, QuestionError> {
    let origin = base.unwrap_or(Vec3::ZERO);
    let rel = target.sub(origin);
    let decide = |value: f64, pos: RelationVerdict, neg: RelationVerdict| {
        if value.abs() < tie_margin {
            Err(QuestionError::AmbiguousTie { value, margin: tie_margin })
        } else if value > 0.0 {
            Ok(pos)
        } else {
            Ok(neg)
        }
    };
    match kind {
        RelationKind::LeftRight => decide(rel.x, RelationVerdict::Right, RelationVerdict::Left),
        RelationKind::AboveBelow => decide(rel.y, RelationVerdict::Below, RelationVerdict::Above),
        RelationKind::FrontBehind => decide(rel.z, RelationVerdict::InFront, RelationVerdict::Behind),
        RelationKind::FacingToward => {
            // Within 45 degrees of +z: z exceeds |rel| * cos(45 deg). The
            // deciding value is metric (meters), so one tie margin fits all.
            let value = rel.z - rel.norm() * std::f64::consts::FRAC_1_SQRT_2;
            decide(value, RelationVerdict::Yes, RelationVerdict::No)
        }
        RelationKind::Closer => {
            let second = second.ok_or_else(|| {
                QuestionError::UnknownRelation("closer comparison needs a second object".into())
            })?;
            let value = second.sub(origin).norm() - rel.norm();
            decide(value, RelationVerdict::First, RelationVerdict::Second)
        }
    }
}

/// Reference/auxiliary objects named by a question's perspective phrasing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SpatialDependency {
    pub ref_object: Option<String>,
    pub aux_object: Option<String>,
}

struct QuestionPatterns {
    dep_perspective_of: Regex,
    dep_possessive: Regex,
    dep_stand_facing_self: Regex,
    dep_stand_facing_aux: Regex,
    dep_relative_possessive: Regex,
    rel_closer: Regex,
    rel_facing_toward: Regex,
    rel_left_right: Regex,
    rel_front_behind: Regex,
    rel_above_below: Regex,
    attr_direction: Regex,
}

fn patterns() -> &'static QuestionPatterns {
    static PATTERNS: OnceLock<QuestionPatterns> = OnceLock::new();
    PATTERNS.get_or_init(|| QuestionPatterns {
        dep_perspective_of: Regex::new(r"(?i)from the perspective of the ([^,?]+?)\s*[,?]").unwrap(),
        dep_possessive: Regex::new(r"(?i)from the ([^,?]+?)['\u{2019}]s perspective").unwrap(),
        dep_stand_facing_self: Regex::new(
            r"(?i)(?:if i stand|standing) at the ([^,?]+?)['\u{2019}]s position facing where it is facing",
        )
        .unwrap(),
        dep_stand_facing_aux: Regex::new(
            r"(?i)(?:if i stand|standing) at the ([^,?]+?) facing the ([^,?]+?)\s*[,?]",
        )
        .unwrap(),
        dep_relative_possessive: Regex::new(r"(?i)relative to the ([^,?]+?)['\u{2019}]s").unwrap(),
        rel_closer: Regex::new(r"(?i)which (?:object |one )?is closer[^:]*:\s*the (.+?) or the (.+?)\s*\?")
            .unwrap(),
        rel_facing_toward: Regex::new(r"(?i)facing toward the ([^,?]+?)\s*\?").unwrap(),
        rel_left_right: Regex::new(
            r"(?i)is the (.+?) (?:on|to) (?:the |my )?left or (?:the |my )?right(?: of the ([^,?]+?))?\s*\?",
        )
        .unwrap(),
        rel_front_behind: Regex::new(r"(?i)is the (.+?) in front(?: of it)? or behind(?: it)?\s*\?").unwrap(),
        rel_above_below: Regex::new(r"(?i)is the (.+?) above or below(?: the ([^,?]+?))?\s*\?").unwrap(),
        attr_direction: Regex::new(r"(?i)what direction is the (.+?) facing").unwrap(),
    })
}

/// Pulls the reference (and auxiliary) object names out of perspective
/// phrasings like "from the perspective of the chair" or "if I stand at the
/// table facing the door".
pub fn parse_spatial_dependency(question: &str) -> SpatialDependency {
    let p = patterns();
    if let Some(c) = p.dep_stand_facing_self.captures(question) {
        return SpatialDependency {
            ref_object: Some(c[1].trim().to_string()),
            aux_object: None,
        };
    }
    if let Some(c) = p.dep_stand_facing_aux.captures(question) {
        return SpatialDependency {
            ref_object: Some(c[1].trim().to_string()),
            aux_object: Some(c[2].trim().to_string()),
        };
    }
    for pattern in [&p.dep_perspective_of, &p.dep_possessive, &p.dep_relative_possessive] {
        if let Some(c) = pattern.captures(question) {
            return SpatialDependency {
                ref_object: Some(c[1].trim().to_string()),
                aux_object: None,
            };
        }
    }
    SpatialDependency::default()
}

/// Parses the relation a question asks about. Phrasings outside the known
/// catalog are unknown-relation errors.
pub fn parse_relation_question(question: &str) -> Result<RelationQuestion, QuestionError> {
    let p = patterns();
    if let Some(c) = p.rel_closer.captures(question) {
        return Ok(RelationQuestion {
            kind: RelationKind::Closer,
            target: c[1].trim().to_string(),
            relative_to: None,
            second_target: Some(c[2].trim().to_string()),
        });
    }
    if let Some(c) = p.rel_facing_toward.captures(question) {
        return Ok(RelationQuestion {
            kind: RelationKind::FacingToward,
            target: c[1].trim().to_string(),
            relative_to: None,
            second_target: None,
        });
    }
    if let Some(c) = p.rel_left_right.captures(question) {
        return Ok(RelationQuestion {
            kind: RelationKind::LeftRight,
            target: c[1].trim().to_string(),
            relative_to: c.get(2).map(|m| m.as_str().trim().to_string()),
            second_target: None,
        });
    }
    if let Some(c) = p.rel_front_behind.captures(question) {
        return Ok(RelationQuestion {
            kind: RelationKind::FrontBehind,
            target: c[1].trim().to_string(),
            relative_to: None,
            second_target: None,
        });
    }
    if let Some(c) = p.rel_above_below.captures(question) {
        return Ok(RelationQuestion {
            kind: RelationKind::AboveBelow,
            target: c[1].trim().to_string(),
            relative_to: c.get(2).map(|m| m.as_str().trim().to_string()),
            second_target: None,
        });
    }
    Err(QuestionError::UnknownRelation(question.to_string()))
}

/// Target of a "what direction is the X facing" attribute question.
pub fn parse_attribute_target(question: &str) -> Option<String> {
    patterns()
        .attr_direction
        .captures(question)
        .map(|c| c[1].trim().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_rules_match_convention() {
        let m = 0.02;
        assert_eq!(
            evaluate_relation(&RelationKind::LeftRight, Vec3::new(0.5, 0.0, 1.2), None, None, m)
                .unwrap(),
            RelationVerdict::Right
        );
        assert_eq!(
            evaluate_relation(&RelationKind::FrontBehind, Vec3::new(0.0, 0.0, -2.0), None, None, m)
                .unwrap(),
            RelationVerdict::Behind
        );
        assert_eq!(
            evaluate_relation(&RelationKind::AboveBelow, Vec3::new(0.0, -1.0, 0.0), None, None, m)
                .unwrap(),
            RelationVerdict::Above
        );
    }

    #[test]
    fn ties_inside_margin_are_ambiguous() {
        let err = evaluate_relation(
            &RelationKind::LeftRight,
            Vec3::new(0.005, 0.0, 1.0),
            None,
            None,
            0.02,
        )
        .unwrap_err();
        assert!(matches!(err, QuestionError::AmbiguousTie { .. }));
    }

    #[test]
    fn facing_toward_cone() {
        let m = 0.02;
        // Dead ahead: well inside the 45-degree cone.
        assert_eq!(
            evaluate_relation(&RelationKind::FacingToward, Vec3::new(0.0, 0.0, 2.0), None, None, m)
                .unwrap(),
            RelationVerdict::Yes
        );
        // Square to the side: outside.
        assert_eq!(
            evaluate_relation(&RelationKind::FacingToward, Vec3::new(2.0, 0.0, 0.0), None, None, m)
                .unwrap(),
            RelationVerdict::No
        );
        // At 30 degrees: inside.
        assert_eq!(
            evaluate_relation(
                &RelationKind::FacingToward,
                Vec3::new(1.0, 0.0, 3f64.sqrt()),
                None,
                None,
                m
            )
            .unwrap(),
            RelationVerdict::Yes
        );
    }

    #[test]
    fn closer_comparison_and_relative_base() {
        let m = 0.02;
        assert_eq!(
            evaluate_relation(
                &RelationKind::Closer,
                Vec3::new(0.0, 0.0, 1.0),
                None,
                Some(Vec3::new(0.0, 0.0, 3.0)),
                m
            )
            .unwrap(),
            RelationVerdict::First
        );
        // Relative left/right: target left of the base despite positive x.
        assert_eq!(
            evaluate_relation(
                &RelationKind::LeftRight,
                Vec3::new(1.0, 0.0, 2.0),
                Some(Vec3::new(2.0, 0.0, 2.0)),
                None,
                m
            )
            .unwrap(),
            RelationVerdict::Left
        );
    }

    #[test]
    fn dependency_parsing_covers_the_catalog() {
        let d = parse_spatial_dependency("From the perspective of the chair, is the ball on the left or the right?");
        assert_eq!(d.ref_object.as_deref(), Some("chair"));
        assert_eq!(d.aux_object, None);

        let d = parse_spatial_dependency("From the boy's perspective, where is the dog?");
        assert_eq!(d.ref_object.as_deref(), Some("boy"));

        let d = parse_spatial_dependency(
            "If I stand at the table facing the door, is the lamp on my left or my right?",
        );
        assert_eq!(d.ref_object.as_deref(), Some("table"));
        assert_eq!(d.aux_object.as_deref(), Some("door"));

        let d = parse_spatial_dependency(
            "If I stand at the fridge's position facing where it is facing, is the plant to my left or right?",
        );
        assert_eq!(d.ref_object.as_deref(), Some("fridge"));
        assert_eq!(d.aux_object, None);
    }

    #[test]
    fn relation_parsing_covers_templates() {
        let q = parse_relation_question(
            "From the perspective of the chair, is the ball on the left or the right?",
        )
        .unwrap();
        assert_eq!(q.kind, RelationKind::LeftRight);
        assert_eq!(q.target, "ball");
        assert_eq!(q.relative_to, None);

        let q = parse_relation_question(
            "From the camera perspective, is the mug to the left or the right of the monitor?",
        )
        .unwrap();
        assert_eq!(q.kind, RelationKind::LeftRight);
        assert_eq!(q.target, "mug");
        assert_eq!(q.relative_to.as_deref(), Some("monitor"));

        let q = parse_relation_question(
            "From the chair's perspective, is the lamp in front of it or behind it?",
        )
        .unwrap();
        assert_eq!(q.kind, RelationKind::FrontBehind);
        assert_eq!(q.target, "lamp");

        let q = parse_relation_question(
            "From the perspective of the chair, is it facing toward the door?",
        )
        .unwrap();
        assert_eq!(q.kind, RelationKind::FacingToward);
        assert_eq!(q.target, "door");

        let q = parse_relation_question(
            "From the perspective of the chair, which is closer to it: the ball or the lamp?",
        )
        .unwrap();
        assert_eq!(q.kind, RelationKind::Closer);
        assert_eq!(q.target, "ball");
        assert_eq!(q.second_target.as_deref(), Some("lamp"));

        assert!(parse_relation_question("Is the sky blue?").is_err());
    }

    #[test]
    fn attribute_target_extraction() {
        assert_eq!(
            parse_attribute_target("What direction is the girl facing in the image?").as_deref(),
            Some("girl")
        );
        assert_eq!(parse_attribute_target("Where is the girl?"), None);
    }
}
