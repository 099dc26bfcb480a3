//! Deterministic geometric reasoner: answers parsed relation questions by
//! applying the sign rules directly to a geometry context, no model call.

use super::{ExpertError, ReasonerAnswer};
use crate::geometry::Vec3;
use crate::prompting::GeometryContext;
use crate::question::{evaluate_relation, QuestionError, RelationQuestion, RelationVerdict};

/// Default ambiguity margin in meters, below typical lifted-centroid noise.
pub const DEFAULT_TIE_MARGIN: f64 = 0.02;

/// Resolves `question` against `context`: looks up the target (and any base
/// or comparison object) among the entries, applies the sign rule at
/// `tie_margin`, and answers with the matching option text. A deciding value
/// inside the margin is an ambiguous-tie protocol error, never a guess.
pub fn rule_based_reason(
    context: &GeometryContext,
    question: &RelationQuestion,
    tie_margin: f64,
) -> Result<ReasonerAnswer, ExpertError> {
    let coords_of = |name: &str| -> Result<Vec3, ExpertError> {
        if context.frame.ref_object.as_deref() == Some(name) {
            // The reference object is the frame origin; ego contexts omit it.
            return Ok(Vec3::ZERO);
        }
        context
            .entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| e.coords)
            .ok_or_else(|| ExpertError::Usage(format!("object {name:?} not in geometry context")))
    };

    let target = coords_of(&question.target)?;
    let base = question
        .relative_to
        .as_deref()
        .map(coords_of)
        .transpose()?;
    let second = question
        .second_target
        .as_deref()
        .map(coords_of)
        .transpose()?;

    let verdict = evaluate_relation(&question.kind, target, base, second, tie_margin)
        .map_err(|e| match e {
            QuestionError::AmbiguousTie { value, margin } => ExpertError::Protocol(format!(
                "ambiguous tie: deciding value {value:.4} m within margin {margin} m"
            )),
            other => ExpertError::Usage(other.to_string()),
        })?;

    let extracted = match verdict {
        RelationVerdict::First => question.target.clone(),
        RelationVerdict::Second => question
            .second_target
            .clone()
            .expect("closer verdict implies a second object"),
        other => other.label().to_string(),
    };
    let chain = format!(
        "target {t:?} at (x={x:.4}, y={y:.4}, z={z:.4}); rule {kind:?} -> {extracted}",
        t = question.target,
        x = target.x,
        y = target.y,
        z = target.z,
        kind = question.kind,
    );
    Ok(ReasonerAnswer {
        raw_text: format!("<think>{chain}</think> \\boxed{{{extracted}}}"),
        extracted,
        chain: Some(chain),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompting::{ContextEntry, FrameKind, FrameSpec, FrontSource, GeometryContext};
    use crate::question::RelationKind;

    fn ego_context(entries: Vec<(&str, Vec3)>) -> GeometryContext {
        GeometryContext {
            frame: FrameSpec::ego("ref", FrontSource::Intrinsic { view_id: "view0".into() }),
            entries: entries
                .into_iter()
                .map(|(name, coords)| ContextEntry {
                    name: name.to_string(),
                    coords,
                    distance: coords.norm(),
                    sizes: Vec3::ZERO,
                })
                .collect(),
        }
    }

    fn q(kind: RelationKind, target: &str) -> RelationQuestion {
        RelationQuestion {
            kind,
            target: target.to_string(),
            relative_to: None,
            second_target: None,
        }
    }

    #[test]
    fn sign_rules_produce_option_text() {
        let ctx = ego_context(vec![("bag", Vec3::new(0.5, 0.0, 1.2))]);
        let a = rule_based_reason(&ctx, &q(RelationKind::LeftRight, "bag"), 0.02).unwrap();
        assert_eq!(a.extracted, "right");
        assert!(a.chain.is_some());

        let ctx = ego_context(vec![("bag", Vec3::new(0.0, 0.0, -2.0))]);
        let a = rule_based_reason(&ctx, &q(RelationKind::FrontBehind, "bag"), 0.02).unwrap();
        assert_eq!(a.extracted, "behind");
    }

    #[test]
    fn tie_margin_guards_ambiguity() {
        let ctx = ego_context(vec![("bag", Vec3::new(0.005, 0.0, 1.0))]);
        let err = rule_based_reason(&ctx, &q(RelationKind::LeftRight, "bag"), 0.02).unwrap_err();
        assert!(matches!(err, ExpertError::Protocol(_)));
    }

    #[test]
    fn closer_answers_with_object_names() {
        let ctx = ego_context(vec![
            ("ball", Vec3::new(0.0, 0.0, 1.0)),
            ("lamp", Vec3::new(0.0, 0.0, 4.0)),
        ]);
        let mut question = q(RelationKind::Closer, "ball");
        question.second_target = Some("lamp".to_string());
        let a = rule_based_reason(&ctx, &question, 0.02).unwrap();
        assert_eq!(a.extracted, "ball");
    }

    #[test]
    fn reference_object_is_the_origin() {
        let mut spec = FrameSpec::ego("cabinet", FrontSource::Intrinsic { view_id: "view0".into() });
        spec.kind = FrameKind::Camera;
        let ctx = GeometryContext {
            frame: spec,
            entries: vec![ContextEntry {
                name: "clothes".to_string(),
                coords: Vec3::new(-0.8, 0.0, 2.0),
                distance: 2.15,
                sizes: Vec3::ZERO,
            }],
        };
        let mut question = q(RelationKind::LeftRight, "clothes");
        question.relative_to = Some("cabinet".to_string());
        let a = rule_based_reason(&ctx, &question, 0.02).unwrap();
        assert_eq!(a.extracted, "left");
    }

    #[test]
    fn missing_object_is_a_usage_error() {
        let ctx = ego_context(vec![("bag", Vec3::X)]);
        let err = rule_based_reason(&ctx, &q(RelationKind::LeftRight, "ghost"), 0.02).unwrap_err();
        assert!(matches!(err, ExpertError::Usage(_)));
    }
}
